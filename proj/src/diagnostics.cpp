// Copyright Contributors to the glr Project
// SPDX-License-Identifier: Apache-2.0

#include "glr/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include <Eigen/Dense>

#include "glr/convglr.hpp"
#include "glr/error.hpp"
#include "glr/psv.hpp"

namespace glr {

int FocusStack::sharpest() const {
  if (variance.empty()) throw ShapeError("empty focus stack");
  return static_cast<int>(std::min_element(variance.begin(), variance.end()) - variance.begin());
}

FocusStack focus_stack(const SceneData& scene, int target, const std::vector<int>& inputs, const Bounds& bounds,
                       int depth_count, DepthSampling sampling) {
  std::vector<ImageBuffer> images;
  std::vector<Camera> cameras;
  for (int id : inputs) {
    images.push_back(scene.view(id).image);
    cameras.push_back(scene.view(id).camera);
  }
  const Camera& target_cam = scene.view(target).camera;
  const Rect frame{0, 0, target_cam.width, target_cam.height};

  FocusStack stack;
  stack.depths = sample_depths(bounds.near, bounds.far, depth_count, sampling);
  const PlaneSweepVolume psv = build_psv_world(images, cameras, target_cam, stack.depths, frame, false);
  const NormalizedRig rig = normalize_to_target(cameras, target_cam);
  const ImageBuffer mask = psv_coverage(rig.views, rig.target, stack.depths, frame);
  stack.images = mean_psv(psv);
  stack.variance = cross_view_variance(psv, mask);
  return stack;
}

namespace {

std::string fmt(double v) {
  std::ostringstream s;
  s.precision(3);
  s << std::scientific << v;
  return s.str();
}

// Random camera looking roughly down +z at a point a few units away.
Camera random_camera(std::mt19937_64& rng, int size) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::uniform_real_distribution<double> fov(40.0, 70.0);
  Camera cam = Camera::from_fov(size, size, fov(rng));
  const Eigen::Vector3d pos(u(rng), 0.5 * u(rng), 0.5 * u(rng));
  const Eigen::Vector3d look(0.5 * u(rng), 0.5 * u(rng), 4.0 + u(rng));
  return look_at_camera(cam, pos, look);
}

SuiteResult homography_suite(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  double worst = 0.0;
  int checked = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const Camera views[2] = {random_camera(rng, 64), random_camera(rng, 64)};
    const NormalizedRig rig = normalize_to_target(std::span(views, 1), views[1]);
    for (int k = 0; k < 10; ++k) {
      const double depth = 2.0 + 4.0 * unit(rng);
      const Eigen::Vector2d px(64.0 * unit(rng), 64.0 * unit(rng));
      Eigen::Vector2d oracle;
      try {
        oracle = unproject_project_oracle(rig.views[0], rig.target, depth, px);
      } catch (const BehindCamera&) {
        continue;
      }
      const Eigen::Vector2d h = dehomogenize(plane_homography(rig.views[0], rig.target, depth) * px.homogeneous());
      worst = std::max(worst, (h - oracle).norm());
      ++checked;
    }
  }
  return {"homography-oracle", checked > 0 && worst < 1e-6,
          std::to_string(checked) + " samples, max deviation " + fmt(worst) + " px"};
}

SuiteResult epipolar_suite(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const Camera cams[3] = {random_camera(rng, 64), random_camera(rng, 64), random_camera(rng, 64)};
  const NormalizedRig rig = normalize_to_target(std::span(cams, 2), cams[2]);
  const DepthPlanes planes = sample_depths(2.0, 6.0, 16, DepthSampling::uniform_depth);
  double line_dev = 0.0, epi = 0.0;
  for (int r = 0; r < 20; ++r) {
    const Eigen::Vector2d px(64.0 * unit(rng), 64.0 * unit(rng));
    const auto pts = ray_sample_points(rig.views, rig.target, planes, px);
    for (std::size_t v = 0; v < pts.size(); ++v) {
      const Eigen::Matrix3d F = fundamental_matrix(rig.views[v], rig.target);
      const Eigen::Vector3d l = F * px.homogeneous();
      const Eigen::Vector2d a = pts[v].front(), b = pts[v].back();
      const Eigen::Vector2d dir = (b - a).normalized();
      for (const Eigen::Vector2d& p : pts[v]) {
        const Eigen::Vector2d d = p - a;
        line_dev = std::max(line_dev, std::abs(dir.x() * d.y() - dir.y() * d.x()));
        epi = std::max(epi, std::abs(p.homogeneous().dot(l)) / l.head<2>().norm());
      }
    }
  }
  return {"epipolar", line_dev < 1e-6 && epi < 1e-8,
          "collinearity " + fmt(line_dev) + " px, epipolar residual " + fmt(epi) + " px"};
}

SuiteResult gradient_suite(std::uint64_t seed) {
  ModelConfig cfg;
  cfg.depths = 4;
  cfg.group = 2;
  cfg.channels = 2;
  cfg.views = 2;
  const ConvGlr<double> model(cfg);
  const ParamSet<double> w = init_weights(cfg, seed).cast<double>();
  std::mt19937_64 rng(seed + 1);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Tensor<double> x({cfg.grouped_depths(), cfg.input_channels(), 8, 8});
  for (double& v : x.values()) v = u(rng);
  Tensor<double> r({1, 3, 8, 8});
  for (double& v : r.values()) v = u(rng) - 0.5;

  auto objective = [&](const ParamSet<double>& p, Tape<double>* tape) {
    const Tensor<double> y = model.forward(x, p, tape);
    double s = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) s += y[i] * r[i];
    return s;
  };
  Tape<double> tape;
  objective(w, &tape);
  ParamSet<double> grads = w.zeros_like();
  model.backward(r, w, tape, grads);
  const FiniteDiffReport rep = finite_diff_check<double>(
      [&](const ParamSet<double>& p) {
        Tape<double> t;
        const double v = objective(p, &t);
        return FdEvaluation{v, model.activation_signature(t)};
      },
      w, grads, {.step = 0.1, .samples = 200, .seed = seed, .retries = 5});
  return {"gradient", rep.checked > 0 && rep.max_relative_error < 1e-6,
          std::to_string(rep.checked) + " coordinates, max relative error " + fmt(rep.max_relative_error)};
}

}  // namespace

std::vector<SuiteResult> run_selftest(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<SuiteResult> out;
  out.push_back(homography_suite(rng));
  out.push_back(epipolar_suite(rng));
  out.push_back(gradient_suite(seed));
  return out;
}

}  // namespace glr
