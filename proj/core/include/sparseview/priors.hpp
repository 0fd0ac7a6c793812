// Copyright Contributors to the SparseView Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <vector>

#include "sparseview/geometry.hpp"
#include "sparseview/image.hpp"

namespace sparseview::priors {

/// Error maps are computed on the 8-bit intensity scale (0..255) so the
/// gamma = 10 threshold behaves as intended; invalid (out-of-frustum)
/// samples carry +inf error and can never look visible.
inline constexpr double kInvalidError = std::numeric_limits<double>::infinity();

struct PlaneSweepVolume {
  std::vector<double> plane_depths;  // D entries, uniform in inverse depth
  std::vector<ImageD> warped;        // secondary warped to primary, per plane
  std::vector<ImageD> error;         // per-plane L1 error maps, 1 channel
};

/// Warps the secondary image into the primary view at D fronto-parallel
/// planes spaced uniformly in inverse depth, with per-plane L1 error maps.
PlaneSweepVolume build_psv(const ImageD& primary_rgb, const Camera& primary,
                           const ImageD& secondary_rgb, const Camera& secondary,
                           int num_planes, double z_min, double z_max);

struct VisibilityPriorMap {
  ImageU8 visible;      // tau'
  ImageD min_error;     // e = min_k E_k
  ImageD argmin_plane;  // plane index attaining the min (for diagnostics)
};

/// tau' = 1 iff exp(-e / gamma) > 0.5, i.e. e < gamma ln 2.
VisibilityPriorMap visibility_prior(const PlaneSweepVolume& psv, double gamma);

struct ReliabilityMask {
  std::vector<std::uint8_t> mask_aug;   // m_a
  std::vector<std::uint8_t> mask_main;  // m_m
  std::vector<double> err_aug;          // e_a
  std::vector<double> err_main;         // e_m
};

/// Patch-reprojection reliability (per supplied pixel): reprojects a k x k
/// patch at each pixel's rendered depth into the nearest view and compares
/// intensities (MSE on the [0,1] scale). m_a = 1 iff e_a <= e_m and
/// e_a <= e_tau; ties set both masks.
ReliabilityMask reliability_mask(const std::vector<Eigen::Vector2d>& pixels,
                                 const std::vector<double>& depth_main,
                                 const std::vector<double>& depth_aug,
                                 const ImageD& view_rgb, const Camera& view_camera,
                                 const ImageD& nearest_rgb,
                                 const Camera& nearest_camera, int patch_size,
                                 double err_threshold);

/// Index of the camera (excluding `self`) whose center is nearest; ties break
/// toward the lower index.
int nearest_view_index(const std::vector<Camera>& cameras, int self);

}  // namespace sparseview::priors
