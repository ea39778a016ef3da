// Copyright Contributors to the glr Project
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "glr/error.hpp"
#include "glr/parallel.hpp"
#include "glr/psv.hpp"
#include "glr/scenes.hpp"

namespace glr {
namespace {

ImageBuffer random_image(std::mt19937_64& rng, int h, int w, bool eight_bit = false) {
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  ImageBuffer img(3, h, w);
  for (float& v : img.data) v = eight_bit ? std::round(u(rng) * 255.0f) / 255.0f : u(rng);
  return img;
}

// Bilinear sample with zero outside, straight from the definition.
double naive_bilinear(const ImageBuffer& img, int c, double x, double y) {
  const int x0 = static_cast<int>(std::floor(x)), y0 = static_cast<int>(std::floor(y));
  double sum = 0.0;
  for (int dy = 0; dy <= 1; ++dy) {
    for (int dx = 0; dx <= 1; ++dx) {
      const int xi = x0 + dx, yi = y0 + dy;
      const double wx = dx ? x - x0 : 1.0 - (x - x0);
      const double wy = dy ? y - y0 : 1.0 - (y - y0);
      if (xi >= 0 && yi >= 0 && xi < img.width && yi < img.height) sum += wx * wy * img.at(c, yi, xi);
    }
  }
  return sum;
}

struct Rig {
  std::vector<Camera> views;
  std::vector<ImageBuffer> images;
  Camera target;
};

Rig random_rig(std::mt19937_64& rng, int views, int size) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Rig rig;
  rig.target = Camera::from_fov(size, size, 55.0);
  for (int v = 0; v < views; ++v) {
    const Eigen::Vector3d pos(0.4 * u(rng), 0.2 * u(rng), 0.2 * u(rng));
    rig.views.push_back(look_at_camera(rig.target, pos, Eigen::Vector3d(0.2 * u(rng), 0.2 * u(rng), 3.0)));
    rig.images.push_back(random_image(rng, size, size));
  }
  return rig;
}

TEST(WarpImage, MatchesNaiveBilinearForTranslation) {
  std::mt19937_64 rng(1);
  const ImageBuffer src = random_image(rng, 12, 10);
  Eigen::Matrix3d H = Eigen::Matrix3d::Identity();
  H(0, 2) = 1.37;
  H(1, 2) = -0.61;
  const Rect r{0, 0, 10, 12};
  const ImageBuffer out = warp_image(src, H, r);
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < 12; ++y)
      for (int x = 0; x < 10; ++x) EXPECT_NEAR(out.at(c, y, x), naive_bilinear(src, c, x + 1.37, y - 0.61), 1e-6);
}

TEST(WarpImage, MatchesNaiveBilinearForProjectiveMap) {
  std::mt19937_64 rng(2);
  const ImageBuffer src = random_image(rng, 16, 16);
  Eigen::Matrix3d H;
  H << 1.05, 0.02, -0.7, -0.03, 0.97, 0.4, 0.002, -0.001, 1.0;
  const Rect r{3, 2, 9, 11};
  const ImageBuffer out = warp_image(src, H, r);
  for (int c = 0; c < 3; ++c) {
    for (int y = 0; y < r.height; ++y) {
      for (int x = 0; x < r.width; ++x) {
        const Eigen::Vector3d p = H * Eigen::Vector3d(r.x0 + x, r.y0 + y, 1.0);
        EXPECT_NEAR(out.at(c, y, x), naive_bilinear(src, c, p.x() / p.z(), p.y() / p.z()), 1e-6);
      }
    }
  }
}

TEST(WarpImage, OutsideSourceIsZero) {
  std::mt19937_64 rng(3);
  const ImageBuffer src = random_image(rng, 8, 8);
  Eigen::Matrix3d H = Eigen::Matrix3d::Identity();
  H(0, 2) = 100.0;
  const ImageBuffer out = warp_image(src, H, {0, 0, 8, 8});
  for (float v : out.data) EXPECT_EQ(v, 0.0f);
  // Half a pixel past the last column only the inside tap contributes.
  H(0, 2) = 7.5;
  const ImageBuffer edge = warp_image(src, H, {0, 0, 1, 8});
  for (int y = 0; y < 8; ++y) EXPECT_NEAR(edge.at(0, y, 0), 0.5 * src.at(0, y, 7), 1e-7);
}

TEST(WarpImage, NegativeDepthIsZero) {
  std::mt19937_64 rng(4);
  const ImageBuffer src = random_image(rng, 8, 8);
  Eigen::Matrix3d H = -Eigen::Matrix3d::Identity();
  const ImageBuffer out = warp_image(src, H, {0, 0, 8, 8});
  for (float v : out.data) EXPECT_EQ(v, 0.0f);
}

TEST(WarpImage, SingularHomographyThrows) {
  const ImageBuffer src(3, 4, 4);
  EXPECT_THROW(warp_image(src, Eigen::Matrix3d::Zero(), {0, 0, 4, 4}), LinearAlgebraError);
}

TEST(BuildPsv, ShapeAndAngularChannel) {
  std::mt19937_64 rng(5);
  Rig rig = random_rig(rng, 3, 16);
  const NormalizedRig n = normalize_to_target(rig.views, rig.target);
  const DepthPlanes planes = sample_depths(2.0, 5.0, 6, DepthSampling::uniform_depth);
  const Rect patch{4, 0, 8, 12};
  const PlaneSweepVolume psv = build_psv(rig.images, n.views, n.target, planes, patch, true);
  EXPECT_EQ(psv.data.dims(), (Shape{6, 3, 4, 12, 8}));
  EXPECT_TRUE(psv.has_angular());
  for (int d = 0; d < 6; ++d) {
    for (int v = 0; v < 3; ++v) {
      const float want = static_cast<float>(angular_encoding(n.views[v], planes.distances[d]));
      for (int y = 0; y < 12; ++y)
        for (int x = 0; x < 8; ++x) EXPECT_EQ(psv.data[psv.data.offset({d, v, 3, y, x})], want);
    }
  }
  const PlaneSweepVolume plain = build_psv(rig.images, n.views, n.target, planes, patch, false);
  EXPECT_EQ(plain.data.dims(), (Shape{6, 3, 3, 12, 8}));
}

TEST(BuildPsv, EntriesMatchProjectedSamples) {
  std::mt19937_64 rng(6);
  Rig rig = random_rig(rng, 2, 20);
  const NormalizedRig n = normalize_to_target(rig.views, rig.target);
  const DepthPlanes planes = sample_depths(1.5, 6.0, 5, DepthSampling::uniform_disparity);
  const Rect patch{2, 3, 16, 12};
  const PlaneSweepVolume psv = build_psv(rig.images, n.views, n.target, planes, patch, false);
  for (int d = 0; d < 5; ++d) {
    for (int v = 0; v < 2; ++v) {
      for (int y = 0; y < patch.height; y += 3) {
        for (int x = 0; x < patch.width; x += 3) {
          const Eigen::Vector2d src =
              unproject_project_oracle(n.views[v], n.target, planes.distances[d], {patch.x0 + x, patch.y0 + y});
          for (int c = 0; c < 3; ++c) {
            EXPECT_NEAR(psv.data[psv.data.offset({d, v, c, y, x})],
                        naive_bilinear(rig.images[v], c, src.x(), src.y()), 1e-5);
          }
        }
      }
    }
  }
}

TEST(BuildPsv, WorldVariantNormalizesFirst) {
  std::mt19937_64 rng(7);
  Rig rig = random_rig(rng, 2, 16);
  const Camera target = look_at_camera(rig.target, {0.3, -0.1, 0.1}, {0.0, 0.0, 3.0});
  const NormalizedRig n = normalize_to_target(rig.views, target);
  const DepthPlanes planes = sample_depths(2.0, 4.0, 3, DepthSampling::uniform_depth);
  const Rect frame{0, 0, 16, 16};
  EXPECT_EQ(build_psv_world(rig.images, rig.views, target, planes, frame, true).data,
            build_psv(rig.images, n.views, n.target, planes, frame, true).data);
  EXPECT_THROW(build_psv(rig.images, rig.views, target, planes, frame, true), InvalidCamera);
}

TEST(BuildPsv, IdentityViewReproducesTarget) {
  std::mt19937_64 rng(8);
  const Camera target = Camera::from_fov(24, 20, 60.0);
  const ImageBuffer img = random_image(rng, 20, 24, true);
  const DepthPlanes planes = sample_depths(0.5, 10.0, 7, DepthSampling::uniform_disparity);
  const PlaneSweepVolume psv =
      build_psv(std::span(&img, 1), std::span(&target, 1), target, planes, {0, 0, 24, 20}, false);
  for (int d = 0; d < 7; ++d)
    for (int c = 0; c < 3; ++c)
      for (int y = 0; y < 20; ++y)
        for (int x = 0; x < 24; ++x) ASSERT_EQ(psv.data[psv.data.offset({d, 0, c, y, x})], img.at(c, y, x));
}

TEST(BuildPsv, RejectsBadInputs) {
  std::mt19937_64 rng(9);
  Rig rig = random_rig(rng, 2, 16);
  const NormalizedRig n = normalize_to_target(rig.views, rig.target);
  const DepthPlanes planes = sample_depths(2.0, 4.0, 3, DepthSampling::uniform_depth);
  EXPECT_THROW(build_psv(rig.images, n.views, n.target, planes, {8, 8, 16, 16}, false), ShapeError);
  EXPECT_THROW(build_psv(std::span(rig.images.data(), 1), n.views, n.target, planes, {0, 0, 16, 16}, false),
               ShapeError);
  std::vector<ImageBuffer> wrong = rig.images;
  wrong[1] = ImageBuffer(3, 8, 8);
  EXPECT_THROW(build_psv(wrong, n.views, n.target, planes, {0, 0, 16, 16}, false), ShapeError);
}

TEST(BuildPsv, SameResultForAnyThreadCount) {
  std::mt19937_64 rng(10);
  Rig rig = random_rig(rng, 3, 32);
  const NormalizedRig n = normalize_to_target(rig.views, rig.target);
  const DepthPlanes planes = sample_depths(2.0, 4.0, 8, DepthSampling::uniform_depth);
  set_thread_count(1);
  const PlaneSweepVolume a = build_psv(rig.images, n.views, n.target, planes, {0, 0, 32, 32}, true);
  set_thread_count(4);
  const PlaneSweepVolume b = build_psv(rig.images, n.views, n.target, planes, {0, 0, 32, 32}, true);
  set_thread_count(0);
  EXPECT_EQ(a.data, b.data);
}

TEST(RaySlice, PicksTheRay) {
  std::mt19937_64 rng(11);
  Rig rig = random_rig(rng, 2, 8);
  const NormalizedRig n = normalize_to_target(rig.views, rig.target);
  const DepthPlanes planes = sample_depths(2.0, 4.0, 4, DepthSampling::uniform_depth);
  const PlaneSweepVolume psv = build_psv(rig.images, n.views, n.target, planes, {0, 0, 8, 8}, true);
  const Tensor<float> ray = ray_slice(psv, 5, 2);
  EXPECT_EQ(ray.dims(), (Shape{4, 2, 4}));
  for (int d = 0; d < 4; ++d)
    for (int v = 0; v < 2; ++v)
      for (int c = 0; c < 4; ++c) EXPECT_EQ(ray[(d * 2 + v) * 4 + c], psv.data[psv.data.offset({d, v, c, 5, 2})]);
  EXPECT_THROW(ray_slice(psv, 8, 0), ShapeError);
}

TEST(RaySamples, LieOnTheEpipolarLine) {
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> u(0.0, 32.0);
  Rig rig = random_rig(rng, 3, 32);
  const NormalizedRig n = normalize_to_target(rig.views, rig.target);
  const DepthPlanes planes = sample_depths(1.0, 8.0, 32, DepthSampling::uniform_depth);
  for (int r = 0; r < 20; ++r) {
    const Eigen::Vector2d px(u(rng), u(rng));
    const auto pts = ray_sample_points(n.views, n.target, planes, px);
    ASSERT_EQ(pts.size(), 3u);
    for (int v = 0; v < 3; ++v) {
      ASSERT_EQ(pts[v].size(), 32u);
      const Eigen::Vector2d a = pts[v].front(), b = pts[v].back();
      for (const Eigen::Vector2d& p : pts[v]) {
        const Eigen::Vector2d ab = b - a, ap = p - a;
        EXPECT_LT(std::abs(ab.x() * ap.y() - ab.y() * ap.x()) / ab.norm(), 1e-9);
      }
    }
  }
}

TEST(GroupDepths, IsAPureReshape) {
  std::mt19937_64 rng(13);
  Rig rig = random_rig(rng, 2, 8);
  const NormalizedRig n = normalize_to_target(rig.views, rig.target);
  const PlaneSweepVolume psv = build_psv(rig.images, n.views, n.target,
                                         sample_depths(2.0, 4.0, 8, DepthSampling::uniform_depth), {0, 0, 8, 8}, true);
  const GroupedPSV g = group_depths(psv, 4);
  EXPECT_EQ(g.data.dims(), (Shape{2, 4 * 2 * 4, 8, 8}));
  for (int dg = 0; dg < 2; ++dg)
    for (int k = 0; k < 4; ++k)
      for (int v = 0; v < 2; ++v)
        for (int c = 0; c < 4; ++c)
          for (int y = 0; y < 8; y += 3)
            for (int x = 0; x < 8; x += 3)
              EXPECT_EQ(g.data[g.data.offset({dg, (k * 2 + v) * 4 + c, y, x})],
                        psv.data[psv.data.offset({dg * 4 + k, v, c, y, x})]);
  EXPECT_EQ(ungroup_depths(g), psv.data);
  EXPECT_THROW(group_depths(psv, 3), ShapeError);
}

TEST(Positional, UsesGlobalCoordinates) {
  std::mt19937_64 rng(14);
  Rig rig = random_rig(rng, 1, 20);
  const NormalizedRig n = normalize_to_target(rig.views, rig.target);
  const Rect patch{4, 8, 8, 12};
  const PlaneSweepVolume psv = build_psv(rig.images, n.views, n.target,
                                         sample_depths(2.0, 4.0, 4, DepthSampling::uniform_depth), patch, false);
  const GroupedPSV g = append_positional_channels(group_depths(psv, 2));
  const int base = 2 * 1 * 3;
  EXPECT_EQ(g.data.dims(), (Shape{2, base + 2, 12, 8}));
  for (int dg = 0; dg < 2; ++dg) {
    for (int y = 0; y < 12; ++y) {
      for (int x = 0; x < 8; ++x) {
        EXPECT_FLOAT_EQ(g.data[g.data.offset({dg, base, y, x})], static_cast<float>((8.0 + y) / 19.0));
        EXPECT_FLOAT_EQ(g.data[g.data.offset({dg, base + 1, y, x})], static_cast<float>((4.0 + x) / 19.0));
      }
    }
  }
  EXPECT_EQ(ungroup_depths(g), psv.data);
  EXPECT_THROW(append_positional_channels(g), ShapeError);
}

TEST(MeanPsv, AveragesViewsAndClamps) {
  std::mt19937_64 rng(15);
  Rig rig = random_rig(rng, 3, 8);
  const NormalizedRig n = normalize_to_target(rig.views, rig.target);
  const PlaneSweepVolume psv = build_psv(rig.images, n.views, n.target,
                                         sample_depths(2.0, 4.0, 2, DepthSampling::uniform_depth), {0, 0, 8, 8}, true);
  const std::vector<ImageBuffer> stack = mean_psv(psv);
  ASSERT_EQ(stack.size(), 2u);
  EXPECT_EQ(stack[0].channels, 3);
  for (int d = 0; d < 2; ++d) {
    for (int c = 0; c < 3; ++c) {
      for (int y = 0; y < 8; ++y) {
        for (int x = 0; x < 8; ++x) {
          double m = 0.0;
          for (int v = 0; v < 3; ++v) m += psv.data[psv.data.offset({d, v, c, y, x})];
          EXPECT_NEAR(stack[d].at(c, y, x), std::clamp(m / 3.0, 0.0, 1.0), 1e-6);
        }
      }
    }
  }
}

TEST(Coverage, MarksFullyCoveredPixels) {
  const Camera target = Camera::from_fov(16, 16, 90.0);  // f = 8
  Camera shifted = target;
  shifted.translation = Eigen::Vector3d(-0.5, 0.0, 0.0);  // disparity 4 px at depth 1
  const DepthPlanes planes = sample_depths(1.0, 2.0, 2, DepthSampling::uniform_depth);
  const Camera views[2] = {target, shifted};
  const ImageBuffer mask = psv_coverage(views, target, planes, {0, 0, 16, 16});
  for (int y = 0; y < 16; ++y) {
    for (int x = 0; x < 16; ++x) EXPECT_EQ(mask.at(0, y, x), x >= 4 ? 1.0f : 0.0f) << x;
  }
}

TEST(CrossViewVariance, ZeroForIdenticalViews) {
  std::mt19937_64 rng(16);
  const Camera target = Camera::from_fov(8, 8, 60.0);
  const ImageBuffer img = random_image(rng, 8, 8);
  const ImageBuffer images[2] = {img, img};
  const Camera cams[2] = {target, target};
  const PlaneSweepVolume psv =
      build_psv(images, cams, target, sample_depths(1.0, 2.0, 3, DepthSampling::uniform_depth), {0, 0, 8, 8}, false);
  for (double v : cross_view_variance(psv)) EXPECT_EQ(v, 0.0);
}

TEST(FocusSweep, SharpestPlaneIsTheTrueDepth) {
  SceneOptions opt;
  opt.image_size = 96;
  opt.arc_deg = 40.0;
  opt.max_frequency = 12.0;
  const Scene scene = generate_scene(21, 1, 5, opt);
  std::vector<ImageBuffer> images;
  for (std::size_t i = 0; i < scene.cameras.size(); ++i) {
    if (i != 2) images.push_back(render_ground_truth(scene, scene.cameras[i]));
  }
  std::vector<Camera> views = {scene.cameras[0], scene.cameras[1], scene.cameras[3], scene.cameras[4]};
  const Camera& target = scene.cameras[2];
  const DepthPlanes planes = sample_depths(2.0, 4.5, 32, DepthSampling::uniform_depth);
  const Rect frame{0, 0, 96, 96};
  const PlaneSweepVolume psv = build_psv_world(images, views, target, planes, frame, false);
  const NormalizedRig n = normalize_to_target(views, target);
  const std::vector<double> var = cross_view_variance(psv, psv_coverage(n.views, n.target, planes, frame));
  const auto best = std::min_element(var.begin(), var.end()) - var.begin();
  int nearest = 0;
  for (int d = 1; d < planes.size(); ++d) {
    if (std::abs(planes.distances[d] - 3.0) < std::abs(planes.distances[nearest] - 3.0)) nearest = d;
  }
  EXPECT_EQ(best, nearest);
}

}  // namespace
}  // namespace glr
