// Copyright Contributors to the SparseView Project
// SPDX-License-Identifier: Apache-2.0

#include "sparseview/priors.hpp"

#include <cmath>

namespace sparseview::priors {

PlaneSweepVolume build_psv(const ImageD& primary_rgb, const Camera& primary,
                           const ImageD& secondary_rgb, const Camera& secondary,
                           int num_planes, double z_min, double z_max) {
  PlaneSweepVolume psv;
  psv.plane_depths.resize(num_planes);
  for (int k = 0; k < num_planes; ++k) {
    // uniform in inverse depth, endpoints included
    const double f = num_planes > 1 ? static_cast<double>(k) / (num_planes - 1) : 0.0;
    psv.plane_depths[k] = 1.0 / (1.0 / z_min + f * (1.0 / z_max - 1.0 / z_min));
  }

  const int W = primary.width, H = primary.height;
  psv.warped.reserve(num_planes);
  psv.error.reserve(num_planes);
  for (int k = 0; k < num_planes; ++k) {
    const double depth = psv.plane_depths[k];
    ImageD warped(W, H, 3, 0.0);
    ImageD err(W, H, 1, kInvalidError);
    for (int y = 0; y < H; ++y) {
      for (int x = 0; x < W; ++x) {
        PixelDepth pd;
        try {
          pd = pose_warp(Eigen::Vector2d(x, y), Eigen::Vector3d::Zero(), depth,
                         primary, secondary);
        } catch (const BehindCamera&) {
          continue;
        }
        const auto sample = sample_bilinear(secondary_rgb, pd.pixel);
        if (!sample) continue;
        double l1 = 0.0;
        for (int c = 0; c < 3; ++c) {
          warped.at(x, y, c) = (*sample)[c];
          l1 += std::abs(primary_rgb.at(x, y, c) - (*sample)[c]) * 255.0;
        }
        err.at(x, y) = l1;
      }
    }
    psv.warped.push_back(std::move(warped));
    psv.error.push_back(std::move(err));
  }
  return psv;
}

VisibilityPriorMap visibility_prior(const PlaneSweepVolume& psv, double gamma) {
  const int D = static_cast<int>(psv.error.size());
  const int W = psv.error[0].width(), H = psv.error[0].height();
  VisibilityPriorMap out;
  out.visible = ImageU8(W, H, 1, 0);
  out.min_error = ImageD(W, H, 1, kInvalidError);
  out.argmin_plane = ImageD(W, H, 1, -1.0);
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      double best = kInvalidError;
      int best_k = -1;
      for (int k = 0; k < D; ++k) {
        const double e = psv.error[k].at(x, y);
        if (e < best) {
          best = e;
          best_k = k;
        }
      }
      out.min_error.at(x, y) = best;
      out.argmin_plane.at(x, y) = best_k;
      if (std::exp(-best / gamma) > 0.5) out.visible.at(x, y) = 1;
    }
  }
  return out;
}

int nearest_view_index(const std::vector<Camera>& cameras, int self) {
  int best = -1;
  double best_dist = std::numeric_limits<double>::infinity();
  for (int i = 0; i < static_cast<int>(cameras.size()); ++i) {
    if (i == self) continue;
    const double d = (cameras[i].center() - cameras[self].center()).norm();
    if (d < best_dist) {
      best_dist = d;
      best = i;
    }
  }
  return best;
}

ReliabilityMask reliability_mask(const std::vector<Eigen::Vector2d>& pixels,
                                 const std::vector<double>& depth_main,
                                 const std::vector<double>& depth_aug,
                                 const ImageD& view_rgb, const Camera& view_camera,
                                 const ImageD& nearest_rgb,
                                 const Camera& nearest_camera, int patch_size,
                                 double err_threshold) {
  const int n = static_cast<int>(pixels.size());
  ReliabilityMask out;
  out.mask_aug.assign(n, 0);
  out.mask_main.assign(n, 0);
  out.err_aug.assign(n, kInvalidError);
  out.err_main.assign(n, kInvalidError);
  const int half = patch_size / 2;

  // reprojection MSE of the k x k patch around the pixel, carried at the
  // pixel's depth (locally fronto-parallel patch)
  auto patch_error = [&](const Eigen::Vector2d& pixel, double depth) {
    double mse = 0.0;
    int count = 0;
    for (int dy = -half; dy <= half; ++dy) {
      for (int dx = -half; dx <= half; ++dx) {
        const Eigen::Vector2d q = pixel + Eigen::Vector2d(dx, dy);
        if (q.x() < 0 || q.x() > view_camera.width - 1 || q.y() < 0 ||
            q.y() > view_camera.height - 1) {
          continue;
        }
        PixelDepth pd;
        try {
          pd = pose_warp(q, Eigen::Vector3d::Zero(), depth, view_camera,
                         nearest_camera);
        } catch (const BehindCamera&) {
          continue;
        }
        const auto sample = sample_bilinear(nearest_rgb, pd.pixel);
        if (!sample) continue;
        const auto source = sample_bilinear(view_rgb, q);
        for (int c = 0; c < 3; ++c) {
          const double d = (*source)[c] - (*sample)[c];
          mse += d * d;
          ++count;
        }
      }
    }
    return count > 0 ? mse / count : kInvalidError;
  };

  for (int i = 0; i < n; ++i) {
    const double e_m = patch_error(pixels[i], depth_main[i]);
    const double e_a = patch_error(pixels[i], depth_aug[i]);
    out.err_main[i] = e_m;
    out.err_aug[i] = e_a;
    if (std::isfinite(e_a) && e_a <= e_m && e_a <= err_threshold) {
      out.mask_aug[i] = 1;
    }
    if (std::isfinite(e_m) && e_m <= e_a && e_m <= err_threshold) {
      out.mask_main[i] = 1;
    }
  }
  return out;
}

}  // namespace sparseview::priors
