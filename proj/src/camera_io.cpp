// Copyright Contributors to the glr Project
// SPDX-License-Identifier: Apache-2.0

#include <iomanip>
#include <istream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>

#include "glr/camera.hpp"
#include "glr/error.hpp"

namespace glr {
namespace {

template <int N>
Eigen::Matrix<double, N, 1> read_reals(std::istringstream& in, int line, const std::string& key) {
  Eigen::Matrix<double, N, 1> v;
  for (int i = 0; i < N; ++i) {
    if (!(in >> v[i])) throw ParseError("expected " + std::to_string(N) + " reals after '" + key + "'", line);
  }
  std::string extra;
  if (in >> extra) throw ParseError("trailing token '" + extra + "' after '" + key + "'", line);
  return v;
}

struct PendingView {
  ViewRecord record;
  bool has_size = false, has_k = false, has_r = false, has_t = false;
  int line = 0;
};

void finish(PendingView& p, std::vector<ViewRecord>& out) {
  if (!(p.has_size && p.has_k && p.has_r && p.has_t)) {
    throw ParseError("view " + std::to_string(p.record.id) + " is missing size, K, R or t", p.line);
  }
  try {
    validate(p.record.camera);
  } catch (const InvalidCamera& e) {
    throw ParseError(std::string("view ") + std::to_string(p.record.id) + ": " + e.what(), p.line);
  }
  out.push_back(p.record);
}

}  // namespace

std::vector<ViewRecord> read_cameras(std::istream& in) {
  std::vector<ViewRecord> views;
  std::optional<PendingView> pending;
  std::string text;
  int line = 0;
  while (std::getline(in, text)) {
    ++line;
    std::istringstream ls(text);
    std::string key;
    if (!(ls >> key) || key.front() == '#') continue;
    if (key == "view") {
      if (pending) finish(*pending, views);
      pending.emplace();
      pending->line = line;
      if (!(ls >> pending->record.id)) throw ParseError("expected integer id after 'view'", line);
      continue;
    }
    if (!pending) throw ParseError("'" + key + "' before any 'view' line", line);
    Camera& cam = pending->record.camera;
    if (key == "size") {
      if (!(ls >> cam.width >> cam.height)) throw ParseError("expected '<W> <H>' after 'size'", line);
      pending->has_size = true;
    } else if (key == "K" || key == "R") {
      const auto v = read_reals<9>(ls, line, key);
      Eigen::Matrix3d m;
      m << v[0], v[1], v[2], v[3], v[4], v[5], v[6], v[7], v[8];
      if (key == "K") {
        cam.intrinsics = m;
        pending->has_k = true;
      } else {
        cam.rotation = m;
        pending->has_r = true;
      }
    } else if (key == "t") {
      cam.translation = read_reals<3>(ls, line, key);
      pending->has_t = true;
    } else {
      throw ParseError("unknown key '" + key + "'", line);
    }
  }
  if (pending) finish(*pending, views);
  return views;
}

void write_cameras(std::ostream& out, std::span<const ViewRecord> views) {
  out << std::setprecision(17);
  for (const ViewRecord& v : views) {
    const Camera& c = v.camera;
    out << "view " << v.id << '\n' << "size " << c.width << ' ' << c.height << '\n' << "K";
    for (int r = 0; r < 3; ++r)
      for (int k = 0; k < 3; ++k) out << ' ' << c.intrinsics(r, k);
    out << "\nR";
    for (int r = 0; r < 3; ++r)
      for (int k = 0; k < 3; ++k) out << ' ' << c.rotation(r, k);
    out << "\nt " << c.translation.x() << ' ' << c.translation.y() << ' ' << c.translation.z() << '\n';
  }
}

Bounds read_bounds(std::istream& in) {
  Bounds b;
  bool has_near = false, has_far = false;
  std::string text;
  int line = 0;
  while (std::getline(in, text)) {
    ++line;
    std::istringstream ls(text);
    std::string key;
    if (!(ls >> key) || key.front() == '#') continue;
    double value = 0.0;
    if (!(ls >> value)) throw ParseError("expected a real after '" + key + "'", line);
    if (key == "near") {
      b.near = value;
      has_near = true;
    } else if (key == "far") {
      b.far = value;
      has_far = true;
    } else {
      throw ParseError("unknown key '" + key + "'", line);
    }
  }
  if (!has_near || !has_far) throw ParseError("bounds file needs both 'near' and 'far'", 0);
  if (!(b.near > 0.0 && b.near < b.far)) throw ParseError("bounds must satisfy 0 < near < far", 0);
  return b;
}

void write_bounds(std::ostream& out, const Bounds& b) {
  out << std::setprecision(17) << "near " << b.near << "\nfar " << b.far << '\n';
}

}  // namespace glr
