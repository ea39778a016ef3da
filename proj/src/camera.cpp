// Copyright Contributors to the glr Project
// SPDX-License-Identifier: Apache-2.0

#include "glr/camera.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include <Eigen/Dense>

#include "glr/error.hpp"

namespace glr {

Eigen::Vector2d Camera::project(const Eigen::Vector3d& world) const {
  const Eigen::Vector3d x = to_camera(world);
  if (!(x.z() > 0.0)) throw BehindCamera("point is behind the camera");
  return dehomogenize(intrinsics * x);
}

Camera Camera::from_fov(int width, int height, double fov_x_deg) {
  Camera cam;
  cam.width = width;
  cam.height = height;
  const double f = 0.5 * width / std::tan(0.5 * fov_x_deg * std::numbers::pi / 180.0);
  cam.intrinsics << f, 0.0, 0.5 * (width - 1), 0.0, f, 0.5 * (height - 1), 0.0, 0.0, 1.0;
  return cam;
}

void validate(const Camera& cam) {
  const Eigen::Matrix3d& r = cam.rotation;
  const double ortho = (r.transpose() * r - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff();
  if (!std::isfinite(ortho) || ortho >= 1e-9) {
    throw InvalidCamera("rotation is not orthonormal (|R^T R - I| = " + std::to_string(ortho) + ")");
  }
  if (r.determinant() <= 0.0) throw InvalidCamera("rotation has negative determinant");
  if (!(cam.intrinsics(0, 0) > 0.0) || !(cam.intrinsics(1, 1) > 0.0)) {
    throw InvalidCamera("focal lengths must be positive");
  }
  if (cam.width < 1 || cam.height < 1) throw InvalidCamera("image size must be positive");
  if (!cam.translation.allFinite() || !cam.intrinsics.allFinite()) {
    throw InvalidCamera("camera has non-finite parameters");
  }
}

bool is_canonical(const Camera& cam, double tol) {
  return (cam.rotation - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() <= tol &&
         cam.translation.cwiseAbs().maxCoeff() <= tol;
}

NormalizedRig normalize_to_target(std::span<const Camera> views, const Camera& target) {
  validate(target);
  NormalizedRig rig;
  rig.views.reserve(views.size());
  for (const Camera& v : views) {
    validate(v);
    Camera out = v;
    out.rotation = v.rotation * target.rotation.transpose();
    out.translation = v.translation - out.rotation * target.translation;
    rig.views.push_back(out);
  }
  rig.target = target;
  rig.target.rotation.setIdentity();
  rig.target.translation.setZero();
  return rig;
}

Eigen::Vector3d camera_center(const Camera& cam) {
  return -cam.rotation.transpose() * cam.translation;
}

DepthPlanes sample_depths(double near, double far, int count, DepthSampling mode) {
  if (!(near > 0.0)) throw BoundsError("near bound must be positive");
  if (!(near < far)) throw BoundsError("near bound must be smaller than far bound");
  if (count < 2) throw BoundsError("at least two depth planes are required");

  DepthPlanes planes;
  planes.mode = mode;
  planes.distances.resize(static_cast<std::size_t>(count));
  const double last = count - 1;
  for (int d = 0; d < count; ++d) {
    const double s = d / last;
    if (mode == DepthSampling::uniform_depth) {
      planes.distances[d] = near + s * (far - near);
    } else {
      const double disparity = 1.0 / near + s * (1.0 / far - 1.0 / near);
      planes.distances[d] = 1.0 / disparity;
    }
  }
  planes.distances.front() = near;
  planes.distances.back() = far;
  return planes;
}

namespace {

Eigen::Matrix3d inverse_intrinsics(const Eigen::Matrix3d& k) {
  const double det = k.determinant();
  if (!std::isfinite(det) || std::abs(det) < 1e-12) {
    throw LinearAlgebraError("intrinsics matrix is singular");
  }
  return k.inverse();
}

void require_canonical(const Camera& target) {
  if (!is_canonical(target)) {
    throw InvalidCamera("target camera must be canonical (R = I, t = 0); call normalize_to_target");
  }
}

}  // namespace

Eigen::Matrix3d plane_homography(const Camera& view, const Camera& target, double distance) {
  require_canonical(target);
  if (!(distance > 0.0)) throw BoundsError("plane distance must be positive");
  const Eigen::Matrix3d k_inv = inverse_intrinsics(target.intrinsics);
  const Eigen::Vector3d n = Eigen::Vector3d::UnitZ();
  const Eigen::Matrix3d plane = view.rotation + view.translation * n.transpose() / distance;
  return view.intrinsics * plane * k_inv;
}

Eigen::Vector2d unproject_project_oracle(const Camera& view, const Camera& target, double distance,
                                         const Eigen::Vector2d& pixel) {
  require_canonical(target);
  if (!(distance > 0.0)) throw BoundsError("plane distance must be positive");
  const Eigen::Vector3d ray = inverse_intrinsics(target.intrinsics) * pixel.homogeneous();
  const Eigen::Vector3d point = ray * (distance / ray.z());
  return view.project(point);
}

double angular_encoding(const Camera& view, double distance) {
  if (!(distance > 0.0)) throw BoundsError("plane distance must be positive");
  const Eigen::Vector3d center(0.0, 0.0, distance);
  const Eigen::Vector3d dir = center - camera_center(view);
  const double len = dir.norm();
  if (!(len > 0.0)) throw DegenerateGeometry("camera center lies on the plane center");
  return std::clamp(dir.z() / len, -1.0, 1.0);
}

Eigen::Matrix3d fundamental_matrix(const Camera& view, const Camera& target) {
  require_canonical(target);
  const Eigen::Vector3d& t = view.translation;
  if (t.norm() == 0.0) throw DegenerateGeometry("fundamental matrix undefined for zero baseline");
  Eigen::Matrix3d tx;
  tx << 0.0, -t.z(), t.y(), t.z(), 0.0, -t.x(), -t.y(), t.x(), 0.0;
  const Eigen::Matrix3d kv_inv = inverse_intrinsics(view.intrinsics);
  return kv_inv.transpose() * tx * view.rotation * inverse_intrinsics(target.intrinsics);
}

Eigen::Vector2d dehomogenize(const Eigen::Vector3d& p) { return p.head<2>() / p.z(); }

}  // namespace glr
