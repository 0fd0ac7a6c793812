// Copyright Contributors to the SparseView Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Dense>
#include <optional>
#include <vector>

#include "sparseview/common.hpp"
#include "sparseview/image.hpp"

namespace sparseview {

// Double-precision safety margins for camera-frame depth and splat weights.
inline constexpr double kEpsZ = 1e-6;
inline constexpr double kEpsW = 1e-8;

class BehindCamera : public Error {
 public:
  explicit BehindCamera(const std::string& msg) : Error(msg) {}
};

/// Pinhole camera. T maps camera to world; camera frame is x-right, y-down,
/// z-forward. Pixel origin at the top-left, pixel centers at integer
/// coordinates.
struct Camera {
  Eigen::Matrix3d K = Eigen::Matrix3d::Identity();
  Eigen::Matrix4d T = Eigen::Matrix4d::Identity();
  int width = 0;
  int height = 0;

  static Camera pinhole(double fx, double fy, double cx, double cy, int width,
                        int height);

  Eigen::Matrix3d rotation() const { return T.topLeftCorner<3, 3>(); }
  Eigen::Vector3d center() const { return T.topRightCorner<3, 1>(); }

  /// Camera-to-world for a camera at `eye` looking at `target`, y-down.
  static Eigen::Matrix4d look_at(const Eigen::Vector3d& eye,
                                 const Eigen::Vector3d& target,
                                 const Eigen::Vector3d& world_up = Eigen::Vector3d(0, -1, 0));

  /// Checks K upper-triangular with positive focal entries and the rotation
  /// block orthonormal with det +1 (tolerance 1e-9).
  bool valid() const;

  Eigen::Vector3d world_to_camera(const Eigen::Vector3d& p) const {
    return rotation().transpose() * (p - center());
  }
  Eigen::Vector3d camera_to_world(const Eigen::Vector3d& p) const {
    return rotation() * p + center();
  }
};

struct PixelDepth {
  Eigen::Vector2d pixel;
  double depth = 0.0;
};

/// Projects a world point; the returned depth is the camera-frame z.
/// Throws BehindCamera when camera-frame z <= kEpsZ.
PixelDepth project(const Camera& camera, const Eigen::Vector3d& point);

/// Inverse of project: world point of `pixel` at camera-frame depth `depth`.
Eigen::Vector3d backproject(const Camera& camera, const Eigen::Vector2d& pixel,
                            double depth);

/// Pose-warp: back-projects (pixel + flow_xy) at (depth + flow_z) in src,
/// changes frame rigidly, re-projects into dst. flow is (dx_px, dy_px, dz_m).
PixelDepth pose_warp(const Eigen::Vector2d& pixel, const Eigen::Vector3d& flow,
                     double depth, const Camera& src, const Camera& dst);

/// Ray through a pixel. dir is scaled so that its camera-frame z is 1, so a
/// point origin + z * dir has camera-frame depth exactly z.
struct Ray {
  Eigen::Vector3d origin = Eigen::Vector3d::Zero();
  Eigen::Vector3d dir = Eigen::Vector3d::UnitZ();
  Eigen::Vector3d unit_dir = Eigen::Vector3d::UnitZ();

  Eigen::Vector3d point_at(double depth) const { return origin + depth * dir; }
};

Ray make_ray(const Camera& camera, const Eigen::Vector2d& pixel);

/// Depth samples along a ray, strictly ascending. The trailing spacing is
/// z_far - z_N (bounded-scene convention).
struct SampleSet {
  std::vector<double> depths;
  std::vector<double> spacings;

  int size() const { return static_cast<int>(depths.size()); }
};

/// N stratified samples in [z_near, z_far]; jitter == nullptr places samples
/// at bin centers.
SampleSet sample_stratified(double z_near, double z_far, int n, Rng* jitter);

/// N samples uniform in normalized inverse depth s in [s_near, 1], where
/// s(z) = (1/z - 1/z_near) / (1/z_far - 1/z_near).
SampleSet sample_inverse_depth(double z_near, double z_far, int n, double s_near,
                               Rng* jitter);

double depth_to_s(double z, double z_near, double z_far);
double s_to_depth(double s, double z_near, double z_far);

/// Forward bilinear splatting. Each payload row (values[i], weights[i]) is
/// distributed to the 4 integer pixels around targets[i]; accumulation is
/// normalized by total splatted weight. coverage(x,y) = total weight > kEpsW.
/// Out-of-bounds targets are dropped. Accumulation order is row-major over
/// sources, so the result is deterministic.
struct SplatResult {
  ImageD image;       // normalized payload
  ImageD weight_sum;  // raw accumulated weight, 1 channel
  Image<std::uint8_t> coverage;
};

SplatResult splat_forward(const std::vector<std::vector<double>>& values,
                          const std::vector<Eigen::Vector2d>& targets,
                          const std::vector<double>& weights, int out_width,
                          int out_height);

/// Bilinear sample at `pixel`; returns nullopt when the 2x2 neighborhood is
/// not fully inside the image.
std::optional<std::vector<double>> sample_bilinear(const ImageD& image,
                                                   const Eigen::Vector2d& pixel);

}  // namespace sparseview
