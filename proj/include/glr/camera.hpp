// Copyright Contributors to the glr Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <iosfwd>
#include <span>
#include <vector>

#include <Eigen/Core>

namespace glr {

/// Pinhole camera. A world point X maps to camera coordinates
/// x_cam = rotation * X + translation; the camera looks down +z and the pixel
/// is the perspective division of intrinsics * x_cam. Pixel (row i, col j)
/// sits at continuous coordinate (j, i).
struct Camera {
  Eigen::Matrix3d intrinsics = Eigen::Matrix3d::Identity();
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();
  int width = 1;
  int height = 1;

  Eigen::Vector3d to_camera(const Eigen::Vector3d& world) const {
    return rotation * world + translation;
  }

  /// Throws BehindCamera when the point has non-positive depth.
  Eigen::Vector2d project(const Eigen::Vector3d& world) const;

  static Camera from_fov(int width, int height, double fov_x_deg);
};

/// Throws InvalidCamera if the rotation is not a proper rotation, the focal
/// lengths are not positive, or the image size is empty.
void validate(const Camera& cam);

/// True for R = I and t = 0 up to tol.
bool is_canonical(const Camera& cam, double tol = 1e-9);

enum class DepthSampling { uniform_depth, uniform_disparity };

struct DepthPlanes {
  std::vector<double> distances;
  DepthSampling mode = DepthSampling::uniform_depth;
  Eigen::Vector3d normal = Eigen::Vector3d::UnitZ();

  int size() const { return static_cast<int>(distances.size()); }
  double near() const { return distances.front(); }
  double far() const { return distances.back(); }
};

struct NormalizedRig {
  std::vector<Camera> views;
  Camera target;
};

/// Re-expresses every camera in the target camera frame. The returned target
/// has R = I and t = 0; world-to-pixel maps are preserved up to the rigid
/// change of frame.
NormalizedRig normalize_to_target(std::span<const Camera> views, const Camera& target);

/// C = -R^T t.
Eigen::Vector3d camera_center(const Camera& cam);

/// Endpoint-inclusive plane distances. Throws BoundsError on
/// near <= 0, near >= far or count < 2.
DepthPlanes sample_depths(double near, double far, int count, DepthSampling mode);

/// Homography taking homogeneous target pixels to view pixels for points on
/// the plane z = distance of the (canonical) target frame:
///   H = K_v (R_v + t_v n^T / distance) K_target^-1.
Eigen::Matrix3d plane_homography(const Camera& view, const Camera& target, double distance);

/// Brute-force reference for plane_homography: lift the pixel onto the plane,
/// move it into the view frame and project. Throws BehindCamera.
Eigen::Vector2d unproject_project_oracle(const Camera& view, const Camera& target, double distance,
                                         const Eigen::Vector2d& pixel);

/// Cosine between the view-to-plane-center direction and the target normal;
/// the plane center is (0, 0, distance) in the canonical frame.
double angular_encoding(const Camera& view, double distance);

/// F such that x_view^T F x_target = 0 for corresponding pixels. Throws
/// DegenerateGeometry when the view has no baseline.
Eigen::Matrix3d fundamental_matrix(const Camera& view, const Camera& target);

Eigen::Vector2d dehomogenize(const Eigen::Vector3d& p);

// Text formats --------------------------------------------------------------

struct ViewRecord {
  int id = 0;
  Camera camera;
};

/// Blocks of `view <id>` / `size <W> <H>` / `K <9>` / `R <9>` / `t <3>`.
std::vector<ViewRecord> read_cameras(std::istream& in);
void write_cameras(std::ostream& out, std::span<const ViewRecord> views);

struct Bounds {
  double near = 0.0;
  double far = 0.0;
};

Bounds read_bounds(std::istream& in);
void write_bounds(std::ostream& out, const Bounds& bounds);

}  // namespace glr
