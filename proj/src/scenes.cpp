// Copyright Contributors to the glr Project
// SPDX-License-Identifier: Apache-2.0

#include "glr/scenes.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>

#include <Eigen/Dense>

#include "glr/error.hpp"
#include "glr/parallel.hpp"

namespace glr {

double TextureSpec::value(int channel, double x, double y) const {
  double v = 0.5;
  for (const TextureTerm& t : channels[channel]) {
    v += t.amplitude * std::sin(t.freq_x * x + t.phase_x) * std::sin(t.freq_y * y + t.phase_y);
  }
  return std::clamp(v, 0.0, 1.0);
}

double TextureSpec::max_frequency() const {
  double m = 0.0;
  for (const auto& terms : channels)
    for (const TextureTerm& t : terms) m = std::max({m, std::abs(t.freq_x), std::abs(t.freq_y)});
  return m;
}

Camera look_at_camera(const Camera& intrinsics_from, const Eigen::Vector3d& position, const Eigen::Vector3d& target) {
  Camera cam = intrinsics_from;
  const Eigen::Vector3d z = (target - position).normalized();
  const Eigen::Vector3d x = Eigen::Vector3d::UnitY().cross(z).normalized();
  const Eigen::Vector3d y = z.cross(x);
  cam.rotation.row(0) = x.transpose();
  cam.rotation.row(1) = y.transpose();
  cam.rotation.row(2) = z.transpose();
  cam.translation = -cam.rotation * position;
  return cam;
}

namespace {

TextureSpec random_texture(std::mt19937_64& rng, double max_freq) {
  std::uniform_real_distribution<double> amp(0.08, 0.2);
  std::uniform_real_distribution<double> freq(0.25 * max_freq, max_freq);
  std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
  TextureSpec tex;
  for (auto& terms : tex.channels) {
    for (int k = 0; k < 2; ++k) terms.push_back({amp(rng), freq(rng), freq(rng), phase(rng), phase(rng)});
  }
  return tex;
}

}  // namespace

Scene generate_scene(std::uint64_t seed, int n_planes, int rig_size, const SceneOptions& opt) {
  if (n_planes < 1) throw ShapeError("a scene needs at least one plane");
  if (rig_size < 2) throw ShapeError("a scene needs at least two cameras");
  std::mt19937_64 rng(seed);
  Scene scene;
  scene.seed = seed;

  const Camera intrinsics = Camera::from_fov(opt.image_size, opt.image_size, opt.fov_deg);
  const Eigen::Vector3d look(0.0, 0.0, opt.look_depth);
  const double span = opt.arc_deg * std::numbers::pi / 180.0;
  for (int i = 0; i < rig_size; ++i) {
    const double phi = -0.5 * span + span * i / (rig_size - 1);
    const Eigen::Vector3d offset(std::sin(phi), 0.1 * std::sin(2.0 * phi), -std::cos(phi));
    scene.cameras.push_back(look_at_camera(intrinsics, look + opt.radius * offset, look));
  }

  constexpr double kBackdropHalfSize = 10.0;
  if (n_planes == 1) {
    scene.planes.push_back({opt.look_depth, -kBackdropHalfSize, kBackdropHalfSize, -kBackdropHalfSize,
                            kBackdropHalfSize, random_texture(rng, opt.max_frequency)});
  } else {
    scene.planes.push_back({opt.look_depth + 0.6, -kBackdropHalfSize, kBackdropHalfSize, -kBackdropHalfSize,
                            kBackdropHalfSize, random_texture(rng, opt.max_frequency)});
    std::uniform_real_distribution<double> depth(opt.look_depth - 0.7, opt.look_depth + 0.3);
    std::uniform_real_distribution<double> center(-0.5, 0.5);
    std::uniform_real_distribution<double> half(0.35, 0.7);
    for (int k = 1; k < n_planes; ++k) {
      const double d = depth(rng), cx = center(rng), cy = center(rng), hx = half(rng), hy = half(rng);
      scene.planes.push_back({d, cx - hx, cx + hx, cy - hy, cy + hy, random_texture(rng, opt.max_frequency)});
    }
  }
  std::sort(scene.planes.begin(), scene.planes.end(),
            [](const ScenePlane& a, const ScenePlane& b) { return a.depth < b.depth; });

  std::uniform_real_distribution<double> bg(0.2, 0.8);
  for (double& c : scene.background) c = bg(rng);
  scene.near = 0.8 * scene.planes.front().depth;
  scene.far = 1.2 * scene.planes.back().depth;
  return scene;
}

ImageBuffer render_ground_truth(const Scene& scene, const Camera& cam) {
  validate(cam);
  ImageBuffer img(3, cam.height, cam.width);
  const Eigen::Matrix3d k_inv = cam.intrinsics.inverse();
  const Eigen::Matrix3d rt = cam.rotation.transpose();
  const Eigen::Vector3d origin = camera_center(cam);
  parallel_for(static_cast<std::size_t>(cam.height), [&](std::size_t row) {
    const int y = static_cast<int>(row);
    for (int x = 0; x < cam.width; ++x) {
      const Eigen::Vector3d dir = rt * (k_inv * Eigen::Vector3d(x, y, 1.0));
      const ScenePlane* hit = nullptr;
      double best = std::numeric_limits<double>::infinity();
      double hx = 0.0, hy = 0.0;
      if (dir.z() != 0.0) {
        for (const ScenePlane& p : scene.planes) {
          const double s = (p.depth - origin.z()) / dir.z();
          if (!(s > 0.0) || s >= best) continue;
          const double px = origin.x() + s * dir.x();
          const double py = origin.y() + s * dir.y();
          if (!p.contains(px, py)) continue;
          best = s;
          hit = &p;
          hx = px;
          hy = py;
        }
      }
      for (int c = 0; c < 3; ++c) {
        img.at(c, y, x) = static_cast<float>(hit ? hit->texture.value(c, hx, hy) : scene.background[c]);
      }
    }
  });
  return img;
}

const SceneView& SceneData::view(int id) const {
  for (const SceneView& v : views)
    if (v.id == id) return v;
  throw ShapeError("scene has no view with id " + std::to_string(id));
}

std::vector<int> SceneData::ids() const {
  std::vector<int> out;
  for (const SceneView& v : views) out.push_back(v.id);
  return out;
}

SceneData capture_scene(const Scene& scene) {
  SceneData data;
  for (std::size_t i = 0; i < scene.cameras.size(); ++i) {
    data.views.push_back({static_cast<int>(i), scene.cameras[i], render_ground_truth(scene, scene.cameras[i])});
  }
  data.bounds = {scene.near, scene.far};
  data.meta["seed"] = std::to_string(scene.seed);
  data.meta["generator_version"] = std::to_string(kSceneGeneratorVersion);
  data.meta["planes"] = std::to_string(scene.planes.size());
  return data;
}

}  // namespace glr
