// Copyright Contributors to the SparseView Project
// SPDX-License-Identifier: Apache-2.0

#include "sparseview/eval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>
#include <vector>

#include "sparseview/common.hpp"
#include "sparseview/ssim.hpp"

namespace sparseview::eval {

namespace {

void check_sizes(const ImageD& a, const ImageD& b) {
  if (a.width() != b.width() || a.height() != b.height() ||
      a.channels() != b.channels()) {
    throw Error("eval: image size mismatch");
  }
}

}  // namespace

double psnr(const ImageD& a, const ImageD& b, double peak, const ImageU8* mask) {
  check_sizes(a, b);
  double mse = 0.0;
  std::size_t count = 0;
  for (int y = 0; y < a.height(); ++y) {
    for (int x = 0; x < a.width(); ++x) {
      if (mask && !mask->at(x, y)) continue;
      for (int c = 0; c < a.channels(); ++c) {
        const double d = a.at(x, y, c) - b.at(x, y, c);
        mse += d * d;
        ++count;
      }
    }
  }
  if (count == 0) return std::numeric_limits<double>::infinity();
  mse /= count;
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(peak * peak / mse);
}

double ssim(const ImageD& a, const ImageD& b, double peak) {
  check_sizes(a, b);
  return ssim_mean(luma(a), luma(b), peak);
}

namespace {

// average ranks with ties averaged, via sort
std::vector<double> average_ranks(const std::vector<double>& values) {
  const std::size_t n = values.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t i, std::size_t j) { return values[i] < values[j]; });
  std::vector<double> ranks(n, 0.0);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && values[order[j + 1]] == values[order[i]]) ++j;
    const double rank = 0.5 * (i + j) + 1.0;  // 1-based average rank
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = rank;
    i = j + 1;
  }
  return ranks;
}

double pearson(const std::vector<double>& a, const std::vector<double>& b) {
  const std::size_t n = a.size();
  double ma = 0, mb = 0;
  for (std::size_t i = 0; i < n; ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= n;
  mb /= n;
  double cov = 0, va = 0, vb = 0;
  for (std::size_t i = 0; i < n; ++i) {
    cov += (a[i] - ma) * (b[i] - mb);
    va += (a[i] - ma) * (a[i] - ma);
    vb += (b[i] - mb) * (b[i] - mb);
  }
  if (va == 0 || vb == 0) return 0.0;
  return cov / std::sqrt(va * vb);
}

}  // namespace

DepthMetrics depth_metrics(const ImageD& depth, const ImageD& reference,
                           const ImageU8* mask) {
  check_sizes(depth, reference);
  std::vector<double> a, b;
  for (int y = 0; y < depth.height(); ++y) {
    for (int x = 0; x < depth.width(); ++x) {
      if (mask && !mask->at(x, y)) continue;
      a.push_back(depth.at(x, y));
      b.push_back(reference.at(x, y));
    }
  }
  DepthMetrics m;
  if (a.empty()) return m;
  double abs_sum = 0, sq_sum = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    abs_sum += std::abs(a[i] - b[i]);
    sq_sum += (a[i] - b[i]) * (a[i] - b[i]);
  }
  m.mae = abs_sum / a.size();
  m.rmse = std::sqrt(sq_sum / a.size());
  m.srocc = pearson(average_ranks(a), average_ranks(b));
  return m;
}

Prf visibility_prf(const ImageU8& predicted, const ImageU8& reference) {
  if (predicted.width() != reference.width() ||
      predicted.height() != reference.height()) {
    throw Error("visibility_prf: size mismatch");
  }
  std::size_t tp = 0, fp = 0, fn = 0;
  for (int y = 0; y < predicted.height(); ++y) {
    for (int x = 0; x < predicted.width(); ++x) {
      const bool p = predicted.at(x, y) != 0;
      const bool r = reference.at(x, y) != 0;
      if (p && r) ++tp;
      else if (p && !r) ++fp;
      else if (!p && r) ++fn;
    }
  }
  Prf out;
  out.precision = tp + fp > 0 ? static_cast<double>(tp) / (tp + fp) : 0.0;
  out.recall = tp + fn > 0 ? static_cast<double>(tp) / (tp + fn) : 0.0;
  out.f1 = out.precision + out.recall > 0
               ? 2.0 * out.precision * out.recall / (out.precision + out.recall)
               : 0.0;
  return out;
}

double aepe(const ImageD& flow_pred, const ImageD& flow_gt, const ImageU8* mask) {
  if (flow_pred.width() != flow_gt.width() ||
      flow_pred.height() != flow_gt.height()) {
    throw Error("aepe: size mismatch");
  }
  double sum = 0.0;
  std::size_t count = 0;
  for (int y = 0; y < flow_pred.height(); ++y) {
    for (int x = 0; x < flow_pred.width(); ++x) {
      if (mask && !mask->at(x, y)) continue;
      const double dx = flow_pred.at(x, y, 0) - flow_gt.at(x, y, 0);
      const double dy = flow_pred.at(x, y, 1) - flow_gt.at(x, y, 1);
      sum += std::sqrt(dx * dx + dy * dy);
      ++count;
    }
  }
  return count > 0 ? sum / count : 0.0;
}

std::string MetricReport::table() const {
  std::ostringstream os;
  os.precision(4);
  os << std::fixed;
  os << "metric          value\n";
  if (psnr) os << "psnr (dB)       " << *psnr << "\n";
  if (ssim) os << "ssim            " << *ssim << "\n";
  if (depth_mae) os << "depth_mae       " << *depth_mae << "\n";
  if (depth_rmse) os << "depth_rmse      " << *depth_rmse << "\n";
  if (depth_srocc) os << "depth_srocc     " << *depth_srocc << "\n";
  if (aepe) os << "aepe (px)       " << *aepe << "\n";
  if (visibility) {
    os << "vis_precision   " << visibility->precision << "\n";
    os << "vis_recall      " << visibility->recall << "\n";
    os << "vis_f1          " << visibility->f1 << "\n";
  }
  return os.str();
}

std::string MetricReport::key_values() const {
  std::ostringstream os;
  os.precision(10);
  if (psnr) os << "psnr " << *psnr << "\n";
  if (ssim) os << "ssim " << *ssim << "\n";
  if (depth_mae) os << "depth_mae " << *depth_mae << "\n";
  if (depth_rmse) os << "depth_rmse " << *depth_rmse << "\n";
  if (depth_srocc) os << "depth_srocc " << *depth_srocc << "\n";
  if (aepe) os << "aepe " << *aepe << "\n";
  if (visibility) {
    os << "vis_precision " << visibility->precision << "\n";
    os << "vis_recall " << visibility->recall << "\n";
    os << "vis_f1 " << visibility->f1 << "\n";
  }
  return os.str();
}

}  // namespace sparseview::eval
