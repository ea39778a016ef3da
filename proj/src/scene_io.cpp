// Copyright Contributors to the glr Project
// SPDX-License-Identifier: Apache-2.0

#include <fstream>
#include <sstream>

#include "glr/error.hpp"
#include "glr/scenes.hpp"
#include "glr/tensor_io.hpp"

namespace glr {

namespace fs = std::filesystem;

namespace {

fs::path image_path(const fs::path& dir, int id, const char* ext) {
  return dir / "images" / ("view_" + std::to_string(id) + ext);
}

std::ifstream open_required(const fs::path& path, const std::string& what) {
  std::ifstream in(path);
  if (!in) throw IoError("missing " + what + ": " + path.string());
  return in;
}

}  // namespace

void save_scene(const SceneData& data, const fs::path& dir, bool float_images) {
  fs::create_directories(dir / "images");
  std::vector<ViewRecord> records;
  for (const SceneView& v : data.views) records.push_back({v.id, v.camera});
  {
    std::ofstream out(dir / "cameras.txt");
    write_cameras(out, records);
    if (!out) throw IoError("cannot write " + (dir / "cameras.txt").string());
  }
  {
    std::ofstream out(dir / "bounds.txt");
    write_bounds(out, data.bounds);
    if (!out) throw IoError("cannot write " + (dir / "bounds.txt").string());
  }
  if (!data.meta.empty()) {
    std::ofstream out(dir / "meta.txt");
    for (const auto& [k, v] : data.meta) out << k << ' ' << v << '\n';
  }
  for (const SceneView& v : data.views) {
    write_ppm(image_path(dir, v.id, ".ppm"), v.image);
    if (float_images) write_glrt(image_path(dir, v.id, ".glrt"), to_tensor(v.image));
  }
}

void save_scene(const Scene& scene, const fs::path& dir, bool float_images) {
  save_scene(capture_scene(scene), dir, float_images);
}

SceneData load_scene(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw IoError("scene directory not found: " + dir.string());
  SceneData data;
  std::vector<ViewRecord> records;
  {
    std::ifstream in = open_required(dir / "cameras.txt", "camera file");
    records = read_cameras(in);
  }
  {
    std::ifstream in = open_required(dir / "bounds.txt", "depth bounds file");
    data.bounds = read_bounds(in);
  }
  if (std::ifstream meta(dir / "meta.txt"); meta) {
    std::string line;
    while (std::getline(meta, line)) {
      std::istringstream ss(line);
      std::string key, value;
      if (!(ss >> key) || key.starts_with('#')) continue;
      std::getline(ss >> std::ws, value);
      data.meta[key] = value;
    }
  }
  for (const ViewRecord& r : records) {
    const fs::path glrt = image_path(dir, r.id, ".glrt");
    const fs::path ppm = image_path(dir, r.id, ".ppm");
    ImageBuffer img;
    if (fs::exists(glrt)) {
      img = to_image(read_glrt(glrt));
    } else if (fs::exists(ppm)) {
      img = read_ppm(ppm);
    } else {
      throw IoError("missing image for view " + std::to_string(r.id) + ": " + ppm.string());
    }
    if (img.width != r.camera.width || img.height != r.camera.height || img.channels != 3) {
      throw ShapeError("view " + std::to_string(r.id) + " image is " + std::to_string(img.width) + "x" +
                       std::to_string(img.height) + " but its camera is " + std::to_string(r.camera.width) + "x" +
                       std::to_string(r.camera.height));
    }
    data.views.push_back({r.id, r.camera, std::move(img)});
  }
  return data;
}

}  // namespace glr
