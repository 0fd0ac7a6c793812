// Copyright Contributors to the SparseView Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Dense>
#include <optional>
#include <span>
#include <vector>

#include "sparseview/image.hpp"
#include "sparseview/ssim.hpp"

namespace sparseview::losses {

/// Weights of all training objectives. Warmups are fractions of the total
/// iteration budget, so reduced-scale runs keep the schedule shape.
struct LossWeights {
  double photo_main = 1.0;            // lambda_1 / lambda_m
  double sparse_depth = 0.1;          // lambda_2 / lambda_sd
  double vip = 0.001;                 // lambda_3
  double visibility_consistency = 0.1;  // lambda_4
  double photo_aug = 1.0;             // lambda_a
  double aug_depth = 0.1;             // lambda_aug
  double cfc = 0.1;                   // lambda_cfc
  double mass_concentration = 0.0;    // lambda_mc
  double sparse_flow = 1.0;           // lambda_sf
  double vip_warmup = 0.4;
  double aug_warmup = 0.2;
};

/// Mean over channels and rays of the squared color error. Adjoints scaled by
/// `weight` accumulate into d_rendered when non-empty.
double l_photometric(std::span<const Eigen::Vector3d> rendered,
                     std::span<const Eigen::Vector3d> gt,
                     std::span<Eigen::Vector3d> d_rendered, double weight = 1.0);

/// One-sided visibility prior: mean over pixels of max(tau' - t', 0).
double l_vip(std::span<const double> tau, std::span<const double> tprime,
             std::span<double> d_tprime, double weight = 1.0);

/// Per-ray visibility consistency, Eq. form
/// sum_i [(SG(T_i) - That_i)^2 + (T_i - SG(That_i))^2]. The stop-gradient
/// branches contribute exactly zero adjoint.
double l_visibility_consistency(std::span<const double> trans,
                                std::span<const double> that,
                                std::span<double> d_trans,
                                std::span<double> d_that, double weight = 1.0);

/// Mean squared depth error over keypoints; empty sets cost 0.
double l_sparse_depth(std::span<const double> rendered_depth,
                      std::span<const double> oracle_depth,
                      std::span<double> d_rendered, double weight = 1.0);

/// Masked, stop-gradient-symmetric depth supervision:
/// mean_{m_a=1}(z_m - SG(z_a))^2 + mean_{m_m=1}(SG(z_m) - z_a)^2.
/// Also serves coarse-fine consistency with (z_c, z_f, m_f, m_c).
double l_aug(std::span<const double> z_main, std::span<const double> z_aug,
             std::span<const std::uint8_t> mask_aug,
             std::span<const std::uint8_t> mask_main, std::span<double> d_z_main,
             std::span<double> d_z_aug, double weight = 1.0);

/// Entropy of ray mass grouped into n_groups contiguous intervals,
/// renormalized when the ray is not fully opaque. Rays with total mass below
/// 1e-6 cost 0. Requires |w| divisible by n_groups.
double l_mass_concentration(std::span<const double> weights, int n_groups,
                            std::span<double> d_weights, double weight = 1.0);

/// Sparse-flow constraint between two rays' canonical points
/// || sum_i w_i p'_i(t,v) - sum_i w_i p'_i(s,u) ||^2 given the composited
/// points; adjoints flow to both sides.
double l_sparse_flow(const Eigen::Vector3d& point_a, const Eigen::Vector3d& point_b,
                     Eigen::Vector3d* d_point_a, Eigen::Vector3d* d_point_b,
                     double weight = 1.0);

/// Per-plane MAE + (1 - SSIM)/2 blend, masked by the occlusion mask and
/// averaged over planes. Gradients flow to `pred` only.
double l_mpi_photometric(const std::vector<ImageD>& target,
                         const std::vector<ImageD>& pred,
                         const std::vector<ImageD>& occlusion, double beta,
                         std::vector<ImageD>* d_pred, double weight = 1.0);

/// Edge-aware forward-difference smoothness of a per-plane flow field,
/// weighted by (1 - |grad alpha|) exp(-a |grad rgb|), averaged over occupied
/// cell pairs.
double l_flow_smoothness(const std::vector<ImageD>& flow,
                         const std::vector<ImageD>& rgb,
                         const std::vector<ImageD>& alpha, double a,
                         std::vector<ImageD>* d_flow, double weight = 1.0);

/// Raw (unweighted) values of the active terms for one iteration.
struct LossTerms {
  double photo_main = 0.0;
  double photo_aug = 0.0;
  double sparse_depth = 0.0;
  double vip = 0.0;
  double visibility_consistency = 0.0;
  double aug_depth = 0.0;
  double cfc = 0.0;
  double mass_concentration = 0.0;
  double sparse_flow = 0.0;
};

/// Warmup gate for a term that activates after `fraction` of the budget.
bool warmup_active(double fraction, int iteration, int total_iterations);

/// Weighted sum of terms; vip gates on vip_warmup, aug/cfc on aug_warmup.
/// Linear in the weights.
double total_loss(const LossTerms& terms, const LossWeights& weights,
                  int iteration, int total_iterations);

}  // namespace sparseview::losses
