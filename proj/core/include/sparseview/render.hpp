// Copyright Contributors to the SparseView Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Dense>
#include <span>
#include <vector>

#include "sparseview/fields.hpp"
#include "sparseview/geometry.hpp"

namespace sparseview::render {

/// T_i = exp(-sum_{j<i} delta_j sigma_j), T_1 = 1.
std::vector<double> transmittance(std::span<const double> sigma,
                                  std::span<const double> delta);

/// w_i = T_i (1 - exp(-delta_i sigma_i)).
std::vector<double> render_weights(std::span<const double> sigma,
                                   std::span<const double> delta);

/// Adjoint of (w, T) w.r.t. sigma. d_w / d_T may be empty; d_sigma is
/// accumulated.
void weights_backward(std::span<const double> sigma, std::span<const double> delta,
                      std::span<const double> trans, std::span<const double> weights,
                      std::span<const double> d_w, std::span<const double> d_T,
                      std::span<double> d_sigma);

/// Weighted sum of per-sample scalar payloads.
double composite(std::span<const double> values, std::span<const double> weights);

/// Inverse-CDF draw of n_fine depths from the piecewise-constant pdf given by
/// the coarse weights, merged with the coarse depths and sorted. Falls back
/// to stratified sampling when the weights carry no mass. Deterministic given
/// the rng state.
SampleSet hierarchical_resample(std::span<const double> coarse_weights,
                                const SampleSet& coarse, int n_fine, double z_near,
                                double z_far, Rng& rng);

struct RenderContext {
  double time = 0.0;                           // normalized to [0,1]
  const HexPlaneMotionField* motion = nullptr; // maps samples to canonical space
  bool secondary_visibility = false;           // evaluate the T-hat' head
  Eigen::Vector3d secondary_center = Eigen::Vector3d::Zero();
};

struct RenderResult {
  Eigen::Vector3d color = Eigen::Vector3d::Zero();
  double depth = 0.0;
  double weight_sum = 0.0;
  std::vector<double> sigmas;
  std::vector<double> weights;
  std::vector<double> transmittances;
  std::vector<double> that;            // T-hat head per sample
  std::vector<double> that_secondary;  // T-hat' per sample
  double secondary_vis = 0.0;          // t' = sum w_i T-hat'_i
  Eigen::Vector3d canonical_point = Eigen::Vector3d::Zero();  // sum w_i p'_i
};

/// Per-ray intermediate state kept for the backward pass. Reuse across rays.
struct RayWorkspace {
  std::vector<FieldQueryCache> field_caches;
  std::vector<ColorDecoder::Workspace> color_ws;
  std::vector<ColorDecoder::Workspace> secondary_ws;
  std::vector<HexPlaneMotionField::QueryCache> motion_caches;
  std::vector<Eigen::Vector3d> points;           // p_i
  std::vector<Eigen::Vector3d> canonical_points; // p'_i
  std::vector<double> features;                  // D per sample, flattened
  std::vector<Eigen::Vector3d> colors;
  std::vector<Eigen::Vector3d> secondary_dirs;
};

RenderResult render_ray(const RadianceModel& model, const Ray& ray,
                        const SampleSet& samples, const RenderContext& ctx,
                        RayWorkspace& ws);

/// Adjoints fed into the backward pass; any entry may be left empty/zero.
struct RayAdjoint {
  Eigen::Vector3d d_color = Eigen::Vector3d::Zero();
  double d_depth = 0.0;
  double d_secondary_vis = 0.0;
  Eigen::Vector3d d_canonical_point = Eigen::Vector3d::Zero();
  std::vector<double> d_weights;        // direct adjoints on w_i
  std::vector<double> d_transmittance;  // adjoints on computed T_i
  std::vector<double> d_that;           // adjoints on the T-hat head
};

/// Accumulates parameter adjoints for everything render_ray produced. The
/// model and motion field must be the ones used in the forward call.
void render_ray_backward(RadianceModel& model, HexPlaneMotionField* motion,
                         const Ray& ray, const SampleSet& samples,
                         const RenderContext& ctx, const RenderResult& result,
                         const RayAdjoint& adjoint, RayWorkspace& ws);

/// Exact secondary-view visibility: marches n_march samples from the
/// secondary camera center to each point and returns the transmittance at
/// arrival. Points behind the secondary camera get T' = 0. This is the
/// quadratic-cost reference for the decoder visibility head.
std::vector<double> secondary_visibility_exact(
    const DensityField& field, const std::vector<Eigen::Vector3d>& points,
    const Camera& secondary, int n_march);

/// Adjoint of secondary_visibility_exact w.r.t. field parameters.
void secondary_visibility_exact_backward(DensityField& field,
                                         const std::vector<Eigen::Vector3d>& points,
                                         const Camera& secondary, int n_march,
                                         std::span<const double> d_tprime);

}  // namespace sparseview::render
