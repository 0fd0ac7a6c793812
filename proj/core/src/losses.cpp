// Copyright Contributors to the SparseView Project
// SPDX-License-Identifier: Apache-2.0

#include "sparseview/losses.hpp"

#include <cmath>

#include "sparseview/common.hpp"

namespace sparseview::losses {

double l_photometric(std::span<const Eigen::Vector3d> rendered,
                     std::span<const Eigen::Vector3d> gt,
                     std::span<Eigen::Vector3d> d_rendered, double weight) {
  if (rendered.empty()) return 0.0;
  const double scale = 1.0 / (3.0 * rendered.size());
  double loss = 0.0;
  for (std::size_t i = 0; i < rendered.size(); ++i) {
    const Eigen::Vector3d diff = rendered[i] - gt[i];
    loss += diff.squaredNorm() * scale;
    if (!d_rendered.empty()) d_rendered[i] += weight * 2.0 * scale * diff;
  }
  return loss;
}

double l_vip(std::span<const double> tau, std::span<const double> tprime,
             std::span<double> d_tprime, double weight) {
  if (tau.empty()) return 0.0;
  const double scale = 1.0 / tau.size();
  double loss = 0.0;
  for (std::size_t i = 0; i < tau.size(); ++i) {
    const double v = tau[i] - tprime[i];
    if (v > 0.0) {
      loss += v * scale;
      if (!d_tprime.empty()) d_tprime[i] -= weight * scale;
    }
  }
  return loss;
}

double l_visibility_consistency(std::span<const double> trans,
                                std::span<const double> that,
                                std::span<double> d_trans,
                                std::span<double> d_that, double weight) {
  double loss = 0.0;
  for (std::size_t i = 0; i < trans.size(); ++i) {
    const double diff = trans[i] - that[i];
    loss += 2.0 * diff * diff;
    // first term targets That with T stopped; second updates T with That stopped
    if (!d_that.empty()) d_that[i] += weight * -2.0 * diff;
    if (!d_trans.empty()) d_trans[i] += weight * 2.0 * diff;
  }
  return loss;
}

double l_sparse_depth(std::span<const double> rendered_depth,
                      std::span<const double> oracle_depth,
                      std::span<double> d_rendered, double weight) {
  if (rendered_depth.empty()) return 0.0;
  const double scale = 1.0 / rendered_depth.size();
  double loss = 0.0;
  for (std::size_t i = 0; i < rendered_depth.size(); ++i) {
    const double diff = rendered_depth[i] - oracle_depth[i];
    loss += diff * diff * scale;
    if (!d_rendered.empty()) d_rendered[i] += weight * 2.0 * scale * diff;
  }
  return loss;
}

double l_aug(std::span<const double> z_main, std::span<const double> z_aug,
             std::span<const std::uint8_t> mask_aug,
             std::span<const std::uint8_t> mask_main, std::span<double> d_z_main,
             std::span<double> d_z_aug, double weight) {
  std::size_t count_a = 0, count_m = 0;
  for (std::size_t i = 0; i < z_main.size(); ++i) {
    if (mask_aug[i]) ++count_a;
    if (mask_main[i]) ++count_m;
  }
  double loss = 0.0;
  for (std::size_t i = 0; i < z_main.size(); ++i) {
    const double diff = z_main[i] - z_aug[i];
    if (mask_aug[i]) {
      // augmented depth trusted: ||z_m - SG(z_a)||^2
      loss += diff * diff / count_a;
      if (!d_z_main.empty()) d_z_main[i] += weight * 2.0 * diff / count_a;
    }
    if (mask_main[i]) {
      // main depth trusted: ||SG(z_m) - z_a||^2
      loss += diff * diff / count_m;
      if (!d_z_aug.empty()) d_z_aug[i] -= weight * 2.0 * diff / count_m;
    }
  }
  return loss;
}

double l_mass_concentration(std::span<const double> weights, int n_groups,
                            std::span<double> d_weights, double weight) {
  const int n = static_cast<int>(weights.size());
  if (n % n_groups != 0) {
    throw Error("l_mass_concentration: sample count not divisible by group count");
  }
  const int per = n / n_groups;
  std::vector<double> groups(n_groups, 0.0);
  double mass = 0.0;
  for (int j = 0; j < n_groups; ++j) {
    for (int i = 0; i < per; ++i) groups[j] += weights[j * per + i];
    mass += groups[j];
  }
  if (mass < 1e-6) return 0.0;

  double entropy = 0.0;
  for (int j = 0; j < n_groups; ++j) {
    const double p = groups[j] / mass;
    if (p > 0.0) entropy -= p * std::log(p);
  }
  if (!d_weights.empty()) {
    for (int j = 0; j < n_groups; ++j) {
      const double p = groups[j] / mass;
      if (p <= 1e-300) continue;
      const double dH_dg = -(std::log(p) + entropy) / mass;
      for (int i = 0; i < per; ++i) d_weights[j * per + i] += weight * dH_dg;
    }
  }
  return entropy;
}

double l_sparse_flow(const Eigen::Vector3d& point_a, const Eigen::Vector3d& point_b,
                     Eigen::Vector3d* d_point_a, Eigen::Vector3d* d_point_b,
                     double weight) {
  const Eigen::Vector3d diff = point_a - point_b;
  if (d_point_a) *d_point_a += weight * 2.0 * diff;
  if (d_point_b) *d_point_b -= weight * 2.0 * diff;
  return diff.squaredNorm();
}

double l_mpi_photometric(const std::vector<ImageD>& target,
                         const std::vector<ImageD>& pred,
                         const std::vector<ImageD>& occlusion, double beta,
                         std::vector<ImageD>* d_pred, double weight) {
  const int planes = static_cast<int>(target.size());
  if (planes == 0) return 0.0;
  double loss = 0.0;
  for (int z = 0; z < planes; ++z) {
    const ImageD& m = target[z];
    const ImageD& mh = pred[z];
    const ImageD& o = occlusion[z];
    const int W = m.width(), H = m.height(), C = m.channels();

    std::size_t valid = 0;
    for (int y = 0; y < H; ++y) {
      for (int x = 0; x < W; ++x) {
        if (o.at(x, y) > 0.5) ++valid;
      }
    }
    double mae = 0.0;
    if (valid > 0) {
      const double scale = 1.0 / (static_cast<double>(valid) * C);
      for (int y = 0; y < H; ++y) {
        for (int x = 0; x < W; ++x) {
          if (o.at(x, y) <= 0.5) continue;
          for (int c = 0; c < C; ++c) {
            const double diff = m.at(x, y, c) - mh.at(x, y, c);
            mae += std::abs(diff) * scale;
            if (d_pred) {
              const double sign = diff > 0 ? -1.0 : (diff < 0 ? 1.0 : 0.0);
              (*d_pred)[z].at(x, y, c) += weight * beta * sign * scale / planes;
            }
          }
        }
      }
    }

    // SSIM on the masked planes, averaged over channels
    double ssim_acc = 0.0;
    for (int c = 0; c < C; ++c) {
      ImageD mc(W, H, 1), mhc(W, H, 1);
      for (int y = 0; y < H; ++y) {
        for (int x = 0; x < W; ++x) {
          const double om = o.at(x, y) > 0.5 ? 1.0 : 0.0;
          mc.at(x, y) = m.at(x, y, c) * om;
          mhc.at(x, y) = mh.at(x, y, c) * om;
        }
      }
      ssim_acc += ssim_mean(mc, mhc, 1.0);
      if (d_pred) {
        ImageD d_mhc(W, H, 1, 0.0);
        const double d_ssim = weight * (1.0 - beta) * (-0.5) / (C * planes);
        ssim_mean_backward(mc, mhc, 1.0, d_ssim, d_mhc);
        for (int y = 0; y < H; ++y) {
          for (int x = 0; x < W; ++x) {
            if (o.at(x, y) > 0.5) (*d_pred)[z].at(x, y, c) += d_mhc.at(x, y);
          }
        }
      }
    }
    const double ssim_val = ssim_acc / C;
    loss += (beta * mae + (1.0 - beta) * (1.0 - ssim_val) / 2.0) / planes;
  }
  return loss;
}

double l_flow_smoothness(const std::vector<ImageD>& flow,
                         const std::vector<ImageD>& rgb,
                         const std::vector<ImageD>& alpha, double a,
                         std::vector<ImageD>* d_flow, double weight) {
  const int planes = static_cast<int>(flow.size());
  std::size_t count = 0;
  // first pass: count valid forward-difference pairs
  for (int z = 0; z < planes; ++z) {
    const ImageD& al = alpha[z];
    for (int y = 0; y < al.height(); ++y) {
      for (int x = 0; x < al.width(); ++x) {
        if (al.at(x, y) <= 0.5) continue;
        if (x + 1 < al.width() && al.at(x + 1, y) > 0.5) ++count;
        if (y + 1 < al.height() && al.at(x, y + 1) > 0.5) ++count;
      }
    }
  }
  if (count == 0) return 0.0;
  const double scale = 1.0 / count;

  double loss = 0.0;
  for (int z = 0; z < planes; ++z) {
    const ImageD& u = flow[z];
    const ImageD& c = rgb[z];
    const ImageD& al = alpha[z];
    const int W = al.width(), H = al.height();
    const int FC = u.channels();
    const int CC = c.channels();
    auto edge_term = [&](int x, int y, int dx, int dy) {
      const double dalpha = std::abs(al.at(x + dx, y + dy) - al.at(x, y));
      double dc = 0.0;
      for (int ci = 0; ci < CC; ++ci) {
        dc += std::abs(c.at(x + dx, y + dy, ci) - c.at(x, y, ci));
      }
      dc /= CC;
      const double factor = (1.0 - dalpha) * std::exp(-a * dc);
      double du = 0.0;
      for (int f = 0; f < FC; ++f) {
        const double d = u.at(x + dx, y + dy, f) - u.at(x, y, f);
        du += std::abs(d);
        if (d_flow) {
          const double sign = d > 0 ? 1.0 : (d < 0 ? -1.0 : 0.0);
          (*d_flow)[z].at(x + dx, y + dy, f) += weight * factor * sign * scale;
          (*d_flow)[z].at(x, y, f) -= weight * factor * sign * scale;
        }
      }
      return factor * du;
    };
    for (int y = 0; y < H; ++y) {
      for (int x = 0; x < W; ++x) {
        if (al.at(x, y) <= 0.5) continue;
        if (x + 1 < W && al.at(x + 1, y) > 0.5) loss += edge_term(x, y, 1, 0) * scale;
        if (y + 1 < H && al.at(x, y + 1) > 0.5) loss += edge_term(x, y, 0, 1) * scale;
      }
    }
  }
  return loss;
}

bool warmup_active(double fraction, int iteration, int total_iterations) {
  return iteration >= static_cast<int>(fraction * total_iterations);
}

double total_loss(const LossTerms& terms, const LossWeights& weights,
                  int iteration, int total_iterations) {
  double loss = weights.photo_main * terms.photo_main +
                weights.photo_aug * terms.photo_aug +
                weights.sparse_depth * terms.sparse_depth +
                weights.visibility_consistency * terms.visibility_consistency +
                weights.mass_concentration * terms.mass_concentration +
                weights.sparse_flow * terms.sparse_flow;
  if (warmup_active(weights.vip_warmup, iteration, total_iterations)) {
    loss += weights.vip * terms.vip;
  }
  if (warmup_active(weights.aug_warmup, iteration, total_iterations)) {
    loss += weights.aug_depth * terms.aug_depth + weights.cfc * terms.cfc;
  }
  return loss;
}

}  // namespace sparseview::losses
