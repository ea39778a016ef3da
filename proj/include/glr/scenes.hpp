// Copyright Contributors to the glr Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "glr/camera.hpp"
#include "glr/image.hpp"

namespace glr {

struct TextureTerm {
  double amplitude = 0.0;
  double freq_x = 0.0;  // radians per scene unit
  double freq_y = 0.0;
  double phase_x = 0.0;
  double phase_y = 0.0;
};

/// value_c(x, y) = 0.5 + sum_k a_k sin(wx_k x + px_k) sin(wy_k y + py_k),
/// clamped to [0, 1].
struct TextureSpec {
  std::array<std::vector<TextureTerm>, 3> channels;

  double value(int channel, double x, double y) const;
  double max_frequency() const;
};

/// Opaque fronto-parallel rectangle on the world plane z = depth.
struct ScenePlane {
  double depth = 1.0;
  double x_min = -1.0, x_max = 1.0;
  double y_min = -1.0, y_max = 1.0;
  TextureSpec texture;

  bool contains(double x, double y) const { return x >= x_min && x <= x_max && y >= y_min && y <= y_max; }
};

struct Scene {
  std::vector<ScenePlane> planes;  // sorted by depth
  std::vector<Camera> cameras;
  double near = 0.0;
  double far = 0.0;
  std::array<double, 3> background{0.5, 0.5, 0.5};
  std::uint64_t seed = 0;
};

struct SceneOptions {
  int image_size = 64;
  double fov_deg = 50.0;
  double arc_deg = 30.0;      // total horizontal span of the rig
  double radius = 3.0;        // rig distance to the look-at point
  double look_depth = 3.0;    // z of the look-at point; cameras sit near z = 0
  double max_frequency = 8.0; // texture band limit, radians per scene unit
};

inline constexpr int kSceneGeneratorVersion = 1;

/// Deterministic in seed. Cameras sit on an arc facing the planes; with an
/// odd rig size the middle camera is world-aligned (R = I, t = 0). A single
/// plane is placed at exactly options.look_depth and covers every view.
Scene generate_scene(std::uint64_t seed, int n_planes, int rig_size, const SceneOptions& options = {});

/// Analytic ray cast: nearest plane hit, texture evaluated at the hit point,
/// background otherwise.
ImageBuffer render_ground_truth(const Scene& scene, const Camera& cam);

/// Camera at `position` looking at `target` (image y axis points towards +y).
Camera look_at_camera(const Camera& intrinsics_from, const Eigen::Vector3d& position, const Eigen::Vector3d& target);

// On-disk scenes ----------------------------------------------------------------

struct SceneView {
  int id = 0;
  Camera camera;
  ImageBuffer image;
};

/// Directory layout: cameras.txt, bounds.txt, images/view_<id>.ppm (or
/// .glrt float images), optional meta.txt with `key value` lines.
struct SceneData {
  std::vector<SceneView> views;
  Bounds bounds;
  std::map<std::string, std::string> meta;

  const SceneView& view(int id) const;
  std::vector<int> ids() const;
};

/// Renders every camera; view ids are camera indices.
SceneData capture_scene(const Scene& scene);

void save_scene(const SceneData& data, const std::filesystem::path& dir, bool float_images = false);
void save_scene(const Scene& scene, const std::filesystem::path& dir, bool float_images = false);

/// Prefers images/view_<id>.glrt over the PPM when both exist.
SceneData load_scene(const std::filesystem::path& dir);

}  // namespace glr
