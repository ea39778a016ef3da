// Copyright Contributors to the glr Project
// SPDX-License-Identifier: Apache-2.0

#include "glr/psv.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include <Eigen/Dense>

#include "glr/error.hpp"
#include "glr/parallel.hpp"

namespace glr {
namespace {

// Bilinear tap with zero padding; (x, y) in pixel-center coordinates.
double sample_zero_padded(const float* plane, int w, int h, double x, double y) {
  if (!(x > -1.0 && x < w && y > -1.0 && y < h)) return 0.0;
  const double fx0 = std::floor(x);
  const double fy0 = std::floor(y);
  const int x0 = static_cast<int>(fx0);
  const int y0 = static_cast<int>(fy0);
  const double ax = x - fx0;
  const double ay = y - fy0;
  auto tap = [&](int xi, int yi) -> double {
    if (xi < 0 || yi < 0 || xi >= w || yi >= h) return 0.0;
    return plane[static_cast<std::size_t>(yi) * w + xi];
  };
  const double top = (1.0 - ax) * tap(x0, y0) + ax * tap(x0 + 1, y0);
  const double bottom = (1.0 - ax) * tap(x0, y0 + 1) + ax * tap(x0 + 1, y0 + 1);
  return (1.0 - ay) * top + ay * bottom;
}

void check_nonsingular(const Eigen::Matrix3d& hm) {
  const double det = hm.determinant();
  if (!std::isfinite(det) || std::abs(det) < 1e-300) throw LinearAlgebraError("homography is singular");
}

// Writes the warp of src into `out` (channels x rect.height x rect.width).
void warp_into(const ImageBuffer& src, const Eigen::Matrix3d& hm, const Rect& rect, float* out) {
  const std::size_t plane = static_cast<std::size_t>(rect.width) * rect.height;
  const std::size_t src_plane = src.plane_size();
  for (int y = 0; y < rect.height; ++y) {
    for (int x = 0; x < rect.width; ++x) {
      const Eigen::Vector3d p = hm * Eigen::Vector3d(rect.x0 + x, rect.y0 + y, 1.0);
      const std::size_t o = static_cast<std::size_t>(y) * rect.width + x;
      if (!(p.z() > 0.0)) {
        for (int c = 0; c < src.channels; ++c) out[c * plane + o] = 0.0f;
        continue;
      }
      const double sx = p.x() / p.z();
      const double sy = p.y() / p.z();
      for (int c = 0; c < src.channels; ++c) {
        out[c * plane + o] =
            static_cast<float>(sample_zero_padded(src.data.data() + c * src_plane, src.width, src.height, sx, sy));
      }
    }
  }
}

}  // namespace

ImageBuffer warp_image(const ImageBuffer& src, const Eigen::Matrix3d& homography, const Rect& out_rect) {
  check_nonsingular(homography);
  if (out_rect.width <= 0 || out_rect.height <= 0) throw ShapeError("output rectangle is empty");
  ImageBuffer out(src.channels, out_rect.height, out_rect.width);
  warp_into(src, homography, out_rect, out.data.data());
  return out;
}

PlaneSweepVolume build_psv(std::span<const ImageBuffer> images, std::span<const Camera> views,
                           const Camera& target, const DepthPlanes& depths, const Rect& patch,
                           bool with_angular) {
  if (images.size() != views.size()) {
    throw ShapeError("got " + std::to_string(images.size()) + " images for " + std::to_string(views.size()) +
                     " cameras");
  }
  if (views.empty()) throw ShapeError("at least one input view is required");
  if (depths.size() < 1) throw ShapeError("at least one depth plane is required");
  if (!patch.inside(target.width, target.height)) throw ShapeError("patch lies outside the target image");
  for (std::size_t v = 0; v < images.size(); ++v) {
    if (images[v].channels != 3) throw ShapeError("input images must have 3 channels");
    if (images[v].width != views[v].width || images[v].height != views[v].height) {
      throw ShapeError("image " + std::to_string(v) + " size does not match its camera");
    }
  }

  const int d_count = depths.size();
  const int v_count = static_cast<int>(views.size());
  const int cin = with_angular ? 4 : 3;
  PlaneSweepVolume psv;
  psv.data = Tensor<float>({d_count, v_count, cin, patch.height, patch.width});
  psv.depths = depths;
  psv.patch = patch;
  psv.full_height = target.height;
  psv.full_width = target.width;

  // Homographies are computed up front so that geometry errors surface here.
  std::vector<Eigen::Matrix3d> homographies(static_cast<std::size_t>(d_count) * v_count);
  std::vector<double> angular(homographies.size(), 0.0);
  for (int d = 0; d < d_count; ++d) {
    for (int v = 0; v < v_count; ++v) {
      const auto i = static_cast<std::size_t>(d) * v_count + v;
      homographies[i] = plane_homography(views[v], target, depths.distances[d]);
      check_nonsingular(homographies[i]);
      if (with_angular) angular[i] = angular_encoding(views[v], depths.distances[d]);
    }
  }

  const std::size_t plane = static_cast<std::size_t>(patch.width) * patch.height;
  parallel_for(homographies.size(), [&](std::size_t i) {
    const auto v = static_cast<int>(i % v_count);
    float* out = psv.data.data() + i * cin * plane;
    warp_into(images[v], homographies[i], patch, out);
    if (with_angular) std::fill(out + 3 * plane, out + 4 * plane, static_cast<float>(angular[i]));
  });
  return psv;
}

PlaneSweepVolume build_psv_world(std::span<const ImageBuffer> images, std::span<const Camera> views,
                                 const Camera& target, const DepthPlanes& depths, const Rect& patch,
                                 bool with_angular) {
  const NormalizedRig rig = normalize_to_target(views, target);
  return build_psv(images, rig.views, rig.target, depths, patch, with_angular);
}

Tensor<float> ray_slice(const PlaneSweepVolume& psv, int h, int w) {
  if (h < 0 || w < 0 || h >= psv.height() || w >= psv.width()) {
    throw ShapeError("ray (" + std::to_string(h) + ", " + std::to_string(w) + ") outside patch");
  }
  const int d_count = psv.depth_count(), v_count = psv.view_count(), cin = psv.channels();
  const std::size_t plane = static_cast<std::size_t>(psv.height()) * psv.width();
  const std::size_t pix = static_cast<std::size_t>(h) * psv.width() + w;
  Tensor<float> out({d_count, v_count, cin});
  for (std::size_t k = 0; k < out.size(); ++k) out[k] = psv.data[k * plane + pix];
  return out;
}

std::vector<std::vector<Eigen::Vector2d>> ray_sample_points(std::span<const Camera> views, const Camera& target,
                                                            const DepthPlanes& depths,
                                                            const Eigen::Vector2d& pixel) {
  std::vector<std::vector<Eigen::Vector2d>> out(views.size());
  for (std::size_t v = 0; v < views.size(); ++v) {
    out[v].reserve(depths.distances.size());
    for (double a : depths.distances) {
      out[v].push_back(dehomogenize(plane_homography(views[v], target, a) * pixel.homogeneous()));
    }
  }
  return out;
}

GroupedPSV group_depths(const PlaneSweepVolume& psv, int group) {
  const int d_count = psv.depth_count();
  if (group < 1 || d_count % group != 0) {
    throw ShapeError("depth count " + std::to_string(d_count) + " is not divisible by group size " +
                     std::to_string(group));
  }
  GroupedPSV g;
  g.group = group;
  g.views = psv.view_count();
  g.channels_per_view = psv.channels();
  g.patch = psv.patch;
  g.full_height = psv.full_height;
  g.full_width = psv.full_width;
  // (D, V, Cin, H, W) is already laid out as (D/G, G*V*Cin, H, W).
  g.data = psv.data.reshaped({d_count / group, group * g.views * g.channels_per_view, psv.height(), psv.width()});
  return g;
}

Tensor<float> ungroup_depths(const GroupedPSV& g) {
  const int dg = g.data.dim(0), h = g.data.dim(2), w = g.data.dim(3);
  const int block = g.group * g.views * g.channels_per_view;
  if (g.data.dim(1) != block + (g.positional ? 2 : 0)) throw ShapeError("grouped PSV channel count is inconsistent");
  Tensor<float> out({dg * g.group, g.views, g.channels_per_view, h, w});
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  const std::size_t src_stride = static_cast<std::size_t>(g.data.dim(1)) * plane;
  const std::size_t dst_stride = static_cast<std::size_t>(block) * plane;
  for (int k = 0; k < dg; ++k) {
    std::copy_n(g.data.data() + k * src_stride, dst_stride, out.data() + k * dst_stride);
  }
  return out;
}

GroupedPSV append_positional_channels(const GroupedPSV& g) {
  if (g.positional) throw ShapeError("positional channels already present");
  const int dg = g.data.dim(0), cg = g.data.dim(1), h = g.data.dim(2), w = g.data.dim(3);
  GroupedPSV out = g;
  out.positional = true;
  out.data = Tensor<float>({dg, cg + 2, h, w});
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  const double row_scale = g.full_height > 1 ? 1.0 / (g.full_height - 1) : 0.0;
  const double col_scale = g.full_width > 1 ? 1.0 / (g.full_width - 1) : 0.0;
  std::vector<float> rows(plane), cols(plane);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      rows[static_cast<std::size_t>(y) * w + x] = static_cast<float>((g.patch.y0 + y) * row_scale);
      cols[static_cast<std::size_t>(y) * w + x] = static_cast<float>((g.patch.x0 + x) * col_scale);
    }
  }
  for (int k = 0; k < dg; ++k) {
    const float* src = g.data.data() + static_cast<std::size_t>(k) * cg * plane;
    float* dst = out.data.data() + static_cast<std::size_t>(k) * (cg + 2) * plane;
    std::copy_n(src, static_cast<std::size_t>(cg) * plane, dst);
    std::copy(rows.begin(), rows.end(), dst + cg * plane);
    std::copy(cols.begin(), cols.end(), dst + (cg + 1) * plane);
  }
  return out;
}

std::vector<ImageBuffer> mean_psv(const PlaneSweepVolume& psv) {
  const int d_count = psv.depth_count(), v_count = psv.view_count(), cin = psv.channels();
  const int h = psv.height(), w = psv.width();
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  std::vector<ImageBuffer> out;
  out.reserve(d_count);
  for (int d = 0; d < d_count; ++d) {
    ImageBuffer img(3, h, w);
    for (int c = 0; c < 3; ++c) {
      for (std::size_t p = 0; p < plane; ++p) {
        double sum = 0.0;
        for (int v = 0; v < v_count; ++v) {
          sum += psv.data[((static_cast<std::size_t>(d) * v_count + v) * cin + c) * plane + p];
        }
        img.data[c * plane + p] = std::clamp(static_cast<float>(sum / v_count), 0.0f, 1.0f);
      }
    }
    out.push_back(std::move(img));
  }
  return out;
}

ImageBuffer psv_coverage(std::span<const Camera> views, const Camera& target, const DepthPlanes& depths,
                         const Rect& patch) {
  ImageBuffer mask(1, patch.height, patch.width, 1.0f);
  for (const Camera& view : views) {
    for (double a : depths.distances) {
      const Eigen::Matrix3d hm = plane_homography(view, target, a);
      for (int y = 0; y < patch.height; ++y) {
        for (int x = 0; x < patch.width; ++x) {
          const Eigen::Vector3d p = hm * Eigen::Vector3d(patch.x0 + x, patch.y0 + y, 1.0);
          bool inside = p.z() > 0.0;
          if (inside) {
            const double sx = p.x() / p.z(), sy = p.y() / p.z();
            // Round-off at the border must not flip a sample outside.
            constexpr double slack = 1e-9;
            inside = sx >= -slack && sy >= -slack && sx <= view.width - 1 + slack && sy <= view.height - 1 + slack;
          }
          if (!inside) mask.at(0, y, x) = 0.0f;
        }
      }
    }
  }
  return mask;
}

std::vector<double> cross_view_variance(const PlaneSweepVolume& psv, const ImageBuffer& mask) {
  const int d_count = psv.depth_count(), v_count = psv.view_count(), cin = psv.channels();
  const std::size_t plane = static_cast<std::size_t>(psv.height()) * psv.width();
  if (!mask.data.empty() && mask.plane_size() != plane) throw ShapeError("mask size does not match PSV patch");
  std::vector<double> out(d_count, 0.0);
  for (int d = 0; d < d_count; ++d) {
    double total = 0.0;
    std::size_t counted = 0;
    for (std::size_t p = 0; p < plane; ++p) {
      if (!mask.data.empty() && mask.data[p] == 0.0f) continue;
      double var = 0.0;
      for (int c = 0; c < 3; ++c) {
        double sum = 0.0, sq = 0.0;
        for (int v = 0; v < v_count; ++v) {
          const double x = psv.data[((static_cast<std::size_t>(d) * v_count + v) * cin + c) * plane + p];
          sum += x;
          sq += x * x;
        }
        const double mean = sum / v_count;
        var += std::max(0.0, sq / v_count - mean * mean);
      }
      total += var / 3.0;
      ++counted;
    }
    out[d] = counted ? total / static_cast<double>(counted) : 0.0;
  }
  return out;
}

}  // namespace glr
