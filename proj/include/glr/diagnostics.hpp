// Copyright Contributors to the glr Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "glr/camera.hpp"
#include "glr/image.hpp"
#include "glr/scenes.hpp"

namespace glr {

/// Mean-PSV images of the target frame, one per depth plane, with the
/// cross-view variance of each plane over fully covered pixels.
struct FocusStack {
  DepthPlanes depths;
  std::vector<ImageBuffer> images;
  std::vector<double> variance;

  /// Index of the lowest-variance plane.
  int sharpest() const;
};

FocusStack focus_stack(const SceneData& scene, int target, const std::vector<int>& inputs, const Bounds& bounds,
                       int depth_count, DepthSampling sampling = DepthSampling::uniform_depth);

struct SuiteResult {
  std::string name;
  bool passed = false;
  std::string detail;
};

/// Homography-vs-oracle, epipolar and gradient suites on seeded random data.
std::vector<SuiteResult> run_selftest(std::uint64_t seed = 0);

}  // namespace glr
