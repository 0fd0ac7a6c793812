// Copyright Contributors to the SparseView Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <optional>
#include <string>

#include "sparseview/image.hpp"

namespace sparseview::eval {

/// 10 log10(peak^2 / MSE); infinity when the images match exactly.
double psnr(const ImageD& a, const ImageD& b, double peak = 1.0,
            const ImageU8* mask = nullptr);

/// Mean single-scale SSIM over the Rec. 601 luma of rgb inputs.
double ssim(const ImageD& a, const ImageD& b, double peak = 1.0);

struct DepthMetrics {
  double mae = 0.0;
  double rmse = 0.0;
  double srocc = 0.0;
};

/// MAE/RMSE plus Spearman rank correlation (average ranks on ties) over
/// masked pixels.
DepthMetrics depth_metrics(const ImageD& depth, const ImageD& reference,
                           const ImageU8* mask = nullptr);

struct Prf {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

/// Confusion-matrix scores with positives = visible (tau = 1).
Prf visibility_prf(const ImageU8& predicted, const ImageU8& reference);

/// Mean endpoint error of the x-y flow components over masked pixels.
double aepe(const ImageD& flow_pred, const ImageD& flow_gt,
            const ImageU8* mask = nullptr);

struct MetricReport {
  std::optional<double> psnr;
  std::optional<double> ssim;
  std::optional<double> depth_mae;
  std::optional<double> depth_rmse;
  std::optional<double> depth_srocc;
  std::optional<double> aepe;
  std::optional<Prf> visibility;

  /// Human-readable table.
  std::string table() const;
  /// Machine-readable `key value` lines.
  std::string key_values() const;
};

}  // namespace sparseview::eval
