// Copyright Contributors to the SparseView Project
// SPDX-License-Identifier: Apache-2.0

#include "sparseview/geometry.hpp"

#include <cmath>

namespace sparseview {

Camera Camera::pinhole(double fx, double fy, double cx, double cy, int width,
                       int height) {
  Camera cam;
  cam.K = Eigen::Matrix3d::Identity();
  cam.K(0, 0) = fx;
  cam.K(1, 1) = fy;
  cam.K(0, 2) = cx;
  cam.K(1, 2) = cy;
  cam.width = width;
  cam.height = height;
  return cam;
}

Eigen::Matrix4d Camera::look_at(const Eigen::Vector3d& eye,
                                const Eigen::Vector3d& target,
                                const Eigen::Vector3d& world_up) {
  const Eigen::Vector3d forward = (target - eye).normalized();
  Eigen::Vector3d right = forward.cross(world_up).normalized();
  if (!right.allFinite() || right.norm() < 0.5) {
    right = forward.cross(Eigen::Vector3d(0, 0, -1)).normalized();
  }
  const Eigen::Vector3d down = forward.cross(right).normalized();
  Eigen::Matrix4d pose = Eigen::Matrix4d::Identity();
  pose.block<3, 1>(0, 0) = right;
  pose.block<3, 1>(0, 1) = down;
  pose.block<3, 1>(0, 2) = forward;
  pose.block<3, 1>(0, 3) = eye;
  return pose;
}

bool Camera::valid() const {
  if (K(0, 0) <= 0 || K(1, 1) <= 0) return false;
  if (K(1, 0) != 0 || K(2, 0) != 0 || K(2, 1) != 0) return false;
  if (K(2, 2) != 1) return false;
  const Eigen::Matrix3d r = rotation();
  const Eigen::Matrix3d err = r.transpose() * r - Eigen::Matrix3d::Identity();
  if (err.cwiseAbs().maxCoeff() >= 1e-9) return false;
  if (r.determinant() < 0) return false;
  if ((T.row(3) - Eigen::RowVector4d(0, 0, 0, 1)).cwiseAbs().maxCoeff() > 1e-12)
    return false;
  return true;
}

PixelDepth project(const Camera& camera, const Eigen::Vector3d& point) {
  const Eigen::Vector3d pc = camera.world_to_camera(point);
  if (pc.z() <= kEpsZ) {
    throw BehindCamera("point at camera-frame z=" + std::to_string(pc.z()));
  }
  const Eigen::Vector3d h = camera.K * pc;
  return {Eigen::Vector2d(h.x() / h.z(), h.y() / h.z()), pc.z()};
}

Eigen::Vector3d backproject(const Camera& camera, const Eigen::Vector2d& pixel,
                            double depth) {
  const double fx = camera.K(0, 0), fy = camera.K(1, 1);
  const double cx = camera.K(0, 2), cy = camera.K(1, 2);
  const double skew = camera.K(0, 1);
  const double y = (pixel.y() - cy) / fy;
  const double x = (pixel.x() - cx - skew * y) / fx;
  return camera.camera_to_world(depth * Eigen::Vector3d(x, y, 1.0));
}

PixelDepth pose_warp(const Eigen::Vector2d& pixel, const Eigen::Vector3d& flow,
                     double depth, const Camera& src, const Camera& dst) {
  const double flowed_depth = depth + flow.z();
  if (flowed_depth <= kEpsZ) {
    throw BehindCamera("flowed depth " + std::to_string(flowed_depth));
  }
  const Eigen::Vector3d world =
      backproject(src, pixel + flow.head<2>(), flowed_depth);
  return project(dst, world);
}

Ray make_ray(const Camera& camera, const Eigen::Vector2d& pixel) {
  Ray ray;
  ray.origin = camera.center();
  const Eigen::Vector3d p1 = backproject(camera, pixel, 1.0);
  ray.dir = p1 - ray.origin;  // camera-frame z component is 1
  ray.unit_dir = ray.dir.normalized();
  return ray;
}

SampleSet sample_stratified(double z_near, double z_far, int n, Rng* jitter) {
  SampleSet set;
  set.depths.resize(n);
  const double bin = (z_far - z_near) / n;
  for (int i = 0; i < n; ++i) {
    const double u = jitter ? jitter->uniform() : 0.5;
    set.depths[i] = z_near + (i + u) * bin;
  }
  set.spacings.resize(n);
  for (int i = 0; i + 1 < n; ++i) set.spacings[i] = set.depths[i + 1] - set.depths[i];
  set.spacings[n - 1] = z_far - set.depths[n - 1];
  return set;
}

double depth_to_s(double z, double z_near, double z_far) {
  return (1.0 / z - 1.0 / z_near) / (1.0 / z_far - 1.0 / z_near);
}

double s_to_depth(double s, double z_near, double z_far) {
  return 1.0 / (1.0 / z_near + s * (1.0 / z_far - 1.0 / z_near));
}

SampleSet sample_inverse_depth(double z_near, double z_far, int n, double s_near,
                               Rng* jitter) {
  SampleSet set;
  set.depths.resize(n);
  const double bin = (1.0 - s_near) / n;
  for (int i = 0; i < n; ++i) {
    const double u = jitter ? jitter->uniform() : 0.5;
    set.depths[i] = s_to_depth(s_near + (i + u) * bin, z_near, z_far);
  }
  set.spacings.resize(n);
  for (int i = 0; i + 1 < n; ++i) set.spacings[i] = set.depths[i + 1] - set.depths[i];
  set.spacings[n - 1] = z_far - set.depths[n - 1];
  return set;
}

SplatResult splat_forward(const std::vector<std::vector<double>>& values,
                          const std::vector<Eigen::Vector2d>& targets,
                          const std::vector<double>& weights, int out_width,
                          int out_height) {
  const int channels = values.empty() ? 1 : static_cast<int>(values[0].size());
  SplatResult res;
  res.image = ImageD(out_width, out_height, channels, 0.0);
  res.weight_sum = ImageD(out_width, out_height, 1, 0.0);
  res.coverage = Image<std::uint8_t>(out_width, out_height, 1, 0);

  for (std::size_t i = 0; i < targets.size(); ++i) {
    const Eigen::Vector2d& t = targets[i];
    if (!t.allFinite()) continue;
    const int x0 = static_cast<int>(std::floor(t.x()));
    const int y0 = static_cast<int>(std::floor(t.y()));
    const double fx = t.x() - x0;
    const double fy = t.y() - y0;
    const double corner_w[4] = {(1 - fx) * (1 - fy), fx * (1 - fy),
                                (1 - fx) * fy, fx * fy};
    const int corner_x[4] = {x0, x0 + 1, x0, x0 + 1};
    const int corner_y[4] = {y0, y0, y0 + 1, y0 + 1};
    for (int k = 0; k < 4; ++k) {
      if (corner_x[k] < 0 || corner_x[k] >= out_width || corner_y[k] < 0 ||
          corner_y[k] >= out_height)
        continue;
      const double w = corner_w[k] * weights[i];
      if (w == 0.0) continue;
      res.weight_sum.at(corner_x[k], corner_y[k]) += w;
      for (int c = 0; c < channels; ++c) {
        res.image.at(corner_x[k], corner_y[k], c) += w * values[i][c];
      }
    }
  }

  for (int y = 0; y < out_height; ++y) {
    for (int x = 0; x < out_width; ++x) {
      const double w = res.weight_sum.at(x, y);
      if (w > kEpsW) {
        res.coverage.at(x, y) = 1;
        for (int c = 0; c < channels; ++c) res.image.at(x, y, c) /= w;
      }
    }
  }
  return res;
}

std::optional<std::vector<double>> sample_bilinear(const ImageD& image,
                                                   const Eigen::Vector2d& pixel) {
  if (!pixel.allFinite()) return std::nullopt;
  const double x = pixel.x(), y = pixel.y();
  if (x < 0 || y < 0 || x > image.width() - 1 || y > image.height() - 1)
    return std::nullopt;
  int x0 = static_cast<int>(std::floor(x));
  int y0 = static_cast<int>(std::floor(y));
  if (x0 == image.width() - 1) --x0;   // x == W-1 lands on the last cell edge
  if (y0 == image.height() - 1) --y0;
  if (image.width() == 1) x0 = 0;
  if (image.height() == 1) y0 = 0;
  const int x1 = std::min(x0 + 1, image.width() - 1);
  const int y1 = std::min(y0 + 1, image.height() - 1);
  const double fx = x - x0;
  const double fy = y - y0;
  std::vector<double> out(image.channels());
  for (int c = 0; c < image.channels(); ++c) {
    const double top = (1 - fx) * image.at(x0, y0, c) + fx * image.at(x1, y0, c);
    const double bot = (1 - fx) * image.at(x0, y1, c) + fx * image.at(x1, y1, c);
    out[c] = (1 - fy) * top + fy * bot;
  }
  return out;
}

}  // namespace sparseview
