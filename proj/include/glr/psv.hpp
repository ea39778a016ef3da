// Copyright Contributors to the glr Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <span>
#include <vector>

#include <Eigen/Core>

#include "glr/camera.hpp"
#include "glr/image.hpp"
#include "glr/tensor.hpp"

namespace glr {

/// 5D plane sweep volume, dims (D, V, Cin, H, W). Cin is 3, or 4 when the
/// angular channel is present. Entry [d][v] is input view v warped onto
/// depth plane d and resampled on the target pixel grid of `patch`.
struct PlaneSweepVolume {
  Tensor<float> data;
  DepthPlanes depths;
  Rect patch;
  int full_height = 0;
  int full_width = 0;

  int depth_count() const { return data.dim(0); }
  int view_count() const { return data.dim(1); }
  int channels() const { return data.dim(2); }
  int height() const { return data.dim(3); }
  int width() const { return data.dim(4); }
  bool has_angular() const { return channels() == 4; }
};

/// PSV viewed as (D_G, C_in_g, H, W). Channel layout within a group is
/// depth-major, then view, then color (angular last per view); the two
/// positional channels, when present, follow all of them.
struct GroupedPSV {
  Tensor<float> data;
  int group = 1;
  int views = 1;
  int channels_per_view = 3;
  bool positional = false;
  Rect patch;
  int full_height = 0;
  int full_width = 0;

  int grouped_depths() const { return data.dim(0); }
};

/// Inverse-warps src through H (target pixel -> source pixel) for every pixel
/// of out_rect. Bilinear sampling; taps that fall outside src contribute 0,
/// and pixels with non-positive homogeneous depth are 0.
ImageBuffer warp_image(const ImageBuffer& src, const Eigen::Matrix3d& homography, const Rect& out_rect);

/// Cameras must already be normalized so that target is canonical.
PlaneSweepVolume build_psv(std::span<const ImageBuffer> images, std::span<const Camera> views,
                           const Camera& target, const DepthPlanes& depths, const Rect& patch,
                           bool with_angular);

/// Normalizes the rig to `target` first; cameras may be in any world frame.
PlaneSweepVolume build_psv_world(std::span<const ImageBuffer> images, std::span<const Camera> views,
                                 const Camera& target, const DepthPlanes& depths, const Rect& patch,
                                 bool with_angular);

/// (D, V, Cin) slice for patch pixel (h, w).
Tensor<float> ray_slice(const PlaneSweepVolume& psv, int h, int w);

/// Source-image coordinates sampled for target pixel `pixel` (full-image
/// coordinates), indexed [view][depth].
std::vector<std::vector<Eigen::Vector2d>> ray_sample_points(std::span<const Camera> views, const Camera& target,
                                                            const DepthPlanes& depths,
                                                            const Eigen::Vector2d& pixel);

GroupedPSV group_depths(const PlaneSweepVolume& psv, int group);

/// Inverse of group_depths (positional channels are dropped).
Tensor<float> ungroup_depths(const GroupedPSV& g);

/// Appends normalized global (row, col) coordinates as two channels per group.
GroupedPSV append_positional_channels(const GroupedPSV& g);

/// Per-depth mean over views of the color channels, clamped to [0, 1].
std::vector<ImageBuffer> mean_psv(const PlaneSweepVolume& psv);

/// 1 where every (depth, view) sample of the pixel lands inside its source
/// image, 0 elsewhere. Single-channel, patch-sized.
ImageBuffer psv_coverage(std::span<const Camera> views, const Camera& target, const DepthPlanes& depths,
                         const Rect& patch);

/// Per-depth cross-view color variance averaged over the pixels where
/// mask != 0 (all pixels when mask is empty).
std::vector<double> cross_view_variance(const PlaneSweepVolume& psv, const ImageBuffer& mask = {});

}  // namespace glr
