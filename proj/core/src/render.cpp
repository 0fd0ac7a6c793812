// Copyright Contributors to the SparseView Project
// SPDX-License-Identifier: Apache-2.0

#include "sparseview/render.hpp"

#include <algorithm>
#include <cmath>

namespace sparseview::render {

std::vector<double> transmittance(std::span<const double> sigma,
                                  std::span<const double> delta) {
  const std::size_t n = sigma.size();
  std::vector<double> trans(n);
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    trans[i] = std::exp(-acc);
    acc += delta[i] * sigma[i];
  }
  return trans;
}

std::vector<double> render_weights(std::span<const double> sigma,
                                   std::span<const double> delta) {
  const std::size_t n = sigma.size();
  std::vector<double> w(n);
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double t = std::exp(-acc);
    w[i] = t * (1.0 - std::exp(-delta[i] * sigma[i]));
    acc += delta[i] * sigma[i];
  }
  return w;
}

void weights_backward(std::span<const double> sigma, std::span<const double> delta,
                      std::span<const double> trans, std::span<const double> weights,
                      std::span<const double> d_w, std::span<const double> d_T,
                      std::span<double> d_sigma) {
  const int n = static_cast<int>(sigma.size());
  // dT_k/dsigma_i = -delta_i T_k and dw_k/dsigma_i = -delta_i w_k for k > i;
  // suffix accumulates both in one backward sweep.
  double suffix = 0.0;
  for (int i = n - 1; i >= 0; --i) {
    double g = -delta[i] * suffix;
    if (!d_w.empty() && d_w[i] != 0.0) {
      g += d_w[i] * trans[i] * delta[i] * std::exp(-delta[i] * sigma[i]);
    }
    d_sigma[i] += g;
    if (!d_w.empty()) suffix += d_w[i] * weights[i];
    if (!d_T.empty()) suffix += d_T[i] * trans[i];
  }
}

double composite(std::span<const double> values, std::span<const double> weights) {
  double acc = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) acc += values[i] * weights[i];
  return acc;
}

SampleSet hierarchical_resample(std::span<const double> coarse_weights,
                                const SampleSet& coarse, int n_fine, double z_near,
                                double z_far, Rng& rng) {
  const int n = coarse.size();
  std::vector<double> fine(n_fine);
  double mass = 0.0;
  for (const double w : coarse_weights) mass += w;

  if (mass <= 1e-12) {
    for (int i = 0; i < n_fine; ++i) {
      fine[i] = z_near + (i + rng.uniform()) * (z_far - z_near) / n_fine;
    }
  } else {
    // bin edges at midpoints between coarse depths
    std::vector<double> edges(n + 1);
    edges[0] = coarse.depths.front();
    for (int i = 1; i < n; ++i) edges[i] = 0.5 * (coarse.depths[i - 1] + coarse.depths[i]);
    edges[n] = coarse.depths.back();
    std::vector<double> cdf(n + 1, 0.0);
    for (int i = 0; i < n; ++i) cdf[i + 1] = cdf[i] + coarse_weights[i] / mass;
    cdf[n] = 1.0;
    for (int i = 0; i < n_fine; ++i) {
      const double u = (i + rng.uniform()) / n_fine;
      const auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
      int bin = static_cast<int>(it - cdf.begin()) - 1;
      bin = std::clamp(bin, 0, n - 1);
      const double lo = cdf[bin], hi = cdf[bin + 1];
      const double f = hi > lo ? (u - lo) / (hi - lo) : 0.5;
      fine[i] = edges[bin] + f * (edges[bin + 1] - edges[bin]);
    }
  }

  SampleSet merged;
  merged.depths.reserve(n + n_fine);
  merged.depths.insert(merged.depths.end(), coarse.depths.begin(), coarse.depths.end());
  merged.depths.insert(merged.depths.end(), fine.begin(), fine.end());
  std::sort(merged.depths.begin(), merged.depths.end());
  // enforce strict monotonicity in case of exact ties
  for (std::size_t i = 1; i < merged.depths.size(); ++i) {
    if (merged.depths[i] <= merged.depths[i - 1]) {
      merged.depths[i] = std::nextafter(merged.depths[i - 1],
                                        std::numeric_limits<double>::infinity());
    }
  }
  const int m = merged.size();
  merged.spacings.resize(m);
  for (int i = 0; i + 1 < m; ++i) merged.spacings[i] = merged.depths[i + 1] - merged.depths[i];
  merged.spacings[m - 1] = std::max(z_far - merged.depths[m - 1], 1e-12);
  return merged;
}

RenderResult render_ray(const RadianceModel& model, const Ray& ray,
                        const SampleSet& samples, const RenderContext& ctx,
                        RayWorkspace& ws) {
  const int n = samples.size();
  const int feat_dim = model.field->feature_dim();
  const bool wants_secondary =
      ctx.secondary_visibility && model.color.config().visibility_head;

  RenderResult res;
  res.sigmas.resize(n);
  ws.field_caches.resize(n);
  ws.color_ws.resize(n);
  if (wants_secondary) {
    ws.secondary_ws.resize(n);
    ws.secondary_dirs.resize(n);
  }
  if (ctx.motion) ws.motion_caches.resize(n);
  ws.points.resize(n);
  ws.canonical_points.resize(n);
  ws.features.assign(static_cast<std::size_t>(n) * feat_dim, 0.0);
  ws.colors.resize(n);

  const Eigen::Vector3d view_dir = ray.unit_dir;
  const bool head = model.color.config().visibility_head;
  if (head) res.that.resize(n);
  if (wants_secondary) res.that_secondary.resize(n);

  for (int i = 0; i < n; ++i) {
    const Eigen::Vector3d p = ray.point_at(samples.depths[i]);
    ws.points[i] = p;
    Eigen::Vector3d pq = p;
    if (ctx.motion) {
      pq = p + ctx.motion->query(p, ctx.time, ws.motion_caches[i]);
    }
    ws.canonical_points[i] = pq;
    double* feat = &ws.features[static_cast<std::size_t>(i) * feat_dim];
    model.field->query(pq, &res.sigmas[i], feat, ws.field_caches[i]);

    // residual position encoding sees box-normalized coordinates, matching
    // the encoded field's own input domain
    const Eigen::Vector3d pn = normalize_to_box(pq, model.field->box());
    const auto out = model.color.forward(
        std::span<const double>(feat, feat_dim), view_dir.data(), pn.data(),
        ctx.time, ws.color_ws[i]);
    ws.colors[i] = Eigen::Vector3d(out.rgb[0], out.rgb[1], out.rgb[2]);
    if (head) res.that[i] = out.visibility;
    if (wants_secondary) {
      Eigen::Vector3d sdir = p - ctx.secondary_center;
      const double norm = sdir.norm();
      sdir = norm > 0 ? Eigen::Vector3d(sdir / norm) : view_dir;
      ws.secondary_dirs[i] = sdir;
      const auto sec = model.color.forward(
          std::span<const double>(feat, feat_dim), sdir.data(), pn.data(),
          ctx.time, ws.secondary_ws[i]);
      res.that_secondary[i] = sec.visibility;
    }
  }

  res.transmittances = transmittance(res.sigmas, samples.spacings);
  res.weights = render_weights(res.sigmas, samples.spacings);
  for (int i = 0; i < n; ++i) {
    const double w = res.weights[i];
    res.color += w * ws.colors[i];
    res.depth += w * samples.depths[i];
    res.weight_sum += w;
    res.canonical_point += w * ws.canonical_points[i];
    if (wants_secondary) res.secondary_vis += w * res.that_secondary[i];
  }
  return res;
}

void render_ray_backward(RadianceModel& model, HexPlaneMotionField* motion,
                         const Ray& ray, const SampleSet& samples,
                         const RenderContext& ctx, const RenderResult& res,
                         const RayAdjoint& adj, RayWorkspace& ws) {
  const int n = samples.size();
  const int feat_dim = model.field->feature_dim();
  const bool wants_secondary =
      ctx.secondary_visibility && model.color.config().visibility_head;

  std::vector<double> d_w(n, 0.0);
  std::vector<double> d_sigma(n, 0.0);
  std::vector<double> d_feat(feat_dim);

  for (int i = 0; i < n; ++i) {
    double g = adj.d_color.dot(ws.colors[i]);
    g += adj.d_depth * samples.depths[i];
    g += adj.d_canonical_point.dot(ws.canonical_points[i]);
    if (wants_secondary && adj.d_secondary_vis != 0.0) {
      g += adj.d_secondary_vis * res.that_secondary[i];
    }
    if (!adj.d_weights.empty()) g += adj.d_weights[i];
    d_w[i] = g;
  }

  weights_backward(res.sigmas, samples.spacings, res.transmittances, res.weights,
                   d_w, adj.d_transmittance, d_sigma);

  for (int i = 0; i < n; ++i) {
    const double w = res.weights[i];
    // color decoder: rgb adjoint and visibility-head adjoints
    const Eigen::Vector3d d_rgb = w * adj.d_color;
    const double d_that = adj.d_that.empty() ? 0.0 : adj.d_that[i];
    std::fill(d_feat.begin(), d_feat.end(), 0.0);
    model.color.backward(ws.color_ws[i], d_rgb.data(), d_that, d_feat);
    if (wants_secondary && adj.d_secondary_vis != 0.0) {
      const double d_that_sec = adj.d_secondary_vis * w;
      model.color.backward(ws.secondary_ws[i], nullptr, d_that_sec, d_feat);
    }

    const bool need_dp = ctx.motion != nullptr;
    Eigen::Vector3d d_point = Eigen::Vector3d::Zero();
    model.field->query_backward(ws.field_caches[i], d_sigma[i], d_feat.data(),
                                need_dp ? &d_point : nullptr);
    if (need_dp) {
      d_point += adj.d_canonical_point * w;  // direct sum w_i p'_i term
      if (motion) motion->query_backward(ws.motion_caches[i], d_point);
    }
  }
}

std::vector<double> secondary_visibility_exact(
    const DensityField& field, const std::vector<Eigen::Vector3d>& points,
    const Camera& secondary, int n_march) {
  std::vector<double> tprime(points.size(), 0.0);
  FieldQueryCache cache;
  std::vector<double> feat(field.feature_dim());
  const Eigen::Vector3d origin = secondary.center();
  for (std::size_t k = 0; k < points.size(); ++k) {
    const Eigen::Vector3d cam = secondary.world_to_camera(points[k]);
    if (cam.z() <= kEpsZ) {
      tprime[k] = 0.0;  // behind the secondary camera
      continue;
    }
    const Eigen::Vector3d seg = points[k] - origin;
    const double dist = seg.norm();
    const double delta = dist / n_march;
    double acc = 0.0;
    for (int j = 0; j < n_march; ++j) {
      const double s = (j + 0.5) / n_march;
      double sigma = 0.0;
      field.query(origin + s * seg, &sigma, feat.data(), cache);
      acc += delta * sigma;
    }
    tprime[k] = std::exp(-acc);
  }
  return tprime;
}

void secondary_visibility_exact_backward(DensityField& field,
                                         const std::vector<Eigen::Vector3d>& points,
                                         const Camera& secondary, int n_march,
                                         std::span<const double> d_tprime) {
  FieldQueryCache cache;
  std::vector<double> feat(field.feature_dim());
  const Eigen::Vector3d origin = secondary.center();
  for (std::size_t k = 0; k < points.size(); ++k) {
    if (d_tprime[k] == 0.0) continue;
    const Eigen::Vector3d cam = secondary.world_to_camera(points[k]);
    if (cam.z() <= kEpsZ) continue;
    const Eigen::Vector3d seg = points[k] - origin;
    const double dist = seg.norm();
    const double delta = dist / n_march;
    double acc = 0.0;
    for (int j = 0; j < n_march; ++j) {
      const double s = (j + 0.5) / n_march;
      double sigma = 0.0;
      field.query(origin + s * seg, &sigma, feat.data(), cache);
      acc += delta * sigma;
    }
    const double tp = std::exp(-acc);
    const double d_acc = -tp * d_tprime[k];
    for (int j = 0; j < n_march; ++j) {
      const double s = (j + 0.5) / n_march;
      double sigma = 0.0;
      field.query(origin + s * seg, &sigma, feat.data(), cache);
      field.query_backward(cache, d_acc * delta, nullptr, nullptr);
    }
  }
}

}  // namespace sparseview::render
