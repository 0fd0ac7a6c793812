// Copyright Contributors to the SparseView Project
// SPDX-License-Identifier: Apache-2.0

#include "sparseview/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "sparseview/priors.hpp"

namespace sparseview::optim {

namespace {

double batch_psnr_from_mse(double mse) {
  if (mse <= 0.0) return 99.0;
  return -10.0 * std::log10(mse);
}

SampleSet draw_samples(const SamplingConfig& sampling, double z_near, double z_far,
                       double s_near_override, Rng* rng) {
  if (sampling.domain == 1 || s_near_override > 0.0) {
    const double s_near = std::max(sampling.s_near, s_near_override);
    return sample_inverse_depth(z_near, z_far, sampling.n_coarse, s_near, rng);
  }
  return sample_stratified(z_near, z_far, sampling.n_coarse, rng);
}

}  // namespace

std::string format_log(const std::vector<TrainLogEntry>& log) {
  std::ostringstream os;
  os.precision(10);
  for (const auto& e : log) {
    os << e.iter << " " << e.loss << " " << e.psnr << " " << e.lr << "\n";
  }
  return os.str();
}

BoundingBox scene_bounds(const Dataset& data, const std::vector<int>& views) {
  BoundingBox box;
  box.min = Eigen::Vector3d::Constant(std::numeric_limits<double>::infinity());
  box.max = -box.min;
  auto take = [&](const Eigen::Vector3d& p) {
    box.min = box.min.cwiseMin(p);
    box.max = box.max.cwiseMax(p);
  };
  for (const int v : views) {
    for (int t = 0; t < data.num_frames; ++t) {
      const Camera& cam = data.camera(v, t);
      for (const double zx : {0.0, static_cast<double>(cam.width - 1)}) {
        for (const double zy : {0.0, static_cast<double>(cam.height - 1)}) {
          for (const double z : {data.z_near, data.z_far}) {
            take(backproject(cam, Eigen::Vector2d(zx, zy), z));
          }
        }
      }
    }
  }
  const Eigen::Vector3d pad = 0.02 * (box.max - box.min);
  box.min -= pad;
  box.max += pad;
  return box;
}

RadianceModel build_model(const FieldConfig& config, const BoundingBox& box,
                          bool visibility_head, bool time_conditioned,
                          std::uint64_t seed) {
  Rng rng = Rng::keyed(seed, 0x6d6f64u);
  RadianceModel model;
  if (config.family == "voxel") {
    auto f = std::make_unique<VoxelField>(box, config.grid_res, config.grid_res,
                                          config.grid_res, config.feature_dim);
    f->init(rng);
    model.field = std::move(f);
  } else if (config.family == "tensor") {
    auto f = std::make_unique<FactorizedTensorField>(
        box, config.grid_res, config.grid_res, config.grid_res, config.rank_sigma,
        config.rank_color, config.feature_dim, config.sigma_max);
    f->init(rng);
    model.field = std::move(f);
  } else if (config.family == "hash") {
    HashGridField::Config hc;
    hc.levels = config.hash_levels;
    hc.base_resolution = config.hash_base_resolution;
    hc.growth = config.hash_growth;
    hc.table_size = config.hash_table_size;
    hc.features_per_level = config.hash_features_per_level;
    hc.feature_dim = config.feature_dim;
    hc.hidden = config.hidden;
    auto f = std::make_unique<HashGridField>(box, hc);
    f->init(rng);
    model.field = std::move(f);
  } else if (config.family == "encoded") {
    EncodedField::Config ec;
    ec.position_degrees = config.position_degrees;
    ec.feature_dim = config.feature_dim;
    ec.hidden = config.hidden;
    auto f = std::make_unique<EncodedField>(box, ec);
    f->init(rng);
    model.field = std::move(f);
  } else {
    throw Error("unknown field family: " + config.family);
  }

  ColorDecoder::Config cc;
  cc.feature_dim = config.feature_dim;
  cc.view_dependent = true;
  cc.view_degrees = config.view_degrees;
  cc.time_conditioned = time_conditioned;
  cc.visibility_head = visibility_head;
  cc.hidden = config.hidden;
  model.color = ColorDecoder(cc);
  model.color.init(rng);
  return model;
}

namespace {

// Everything rendered for one ray in one iteration, kept for backward.
struct RayEval {
  int view = 0;
  int time = 0;
  Eigen::Vector2d pixel = Eigen::Vector2d::Zero();
  Eigen::Vector3d gt_color = Eigen::Vector3d::Zero();
  int secondary = -1;
  double tau = 0.0;
  bool is_sd = false;
  double sd_depth = 0.0;
  bool is_flow = false;  // dynamic: half of a match pair
  Ray ray;

  SampleSet samples;
  render::RenderContext ctx;
  render::RenderResult main;
  render::RayWorkspace main_ws;
  render::RayAdjoint main_adj;

  SampleSet fine_samples;
  render::RenderResult fine;
  render::RayWorkspace fine_ws;
  render::RayAdjoint fine_adj;

  std::vector<SampleSet> aug_samples;
  std::vector<render::RenderResult> aug;
  std::vector<render::RayWorkspace> aug_ws;
  std::vector<render::RayAdjoint> aug_adj;
};

void reset_adjoint(render::RayAdjoint& adj, int n) {
  adj.d_color.setZero();
  adj.d_depth = 0.0;
  adj.d_secondary_vis = 0.0;
  adj.d_canonical_point.setZero();
  adj.d_weights.assign(n, 0.0);
  adj.d_transmittance.assign(n, 0.0);
  adj.d_that.assign(n, 0.0);
}

struct ModelSet {
  RadianceModel main;
  std::optional<RadianceModel> fine;
  std::vector<RadianceModel> augmented;
  std::optional<HexPlaneMotionField> motion;

  std::vector<ParamBlock*> params() {
    std::vector<ParamBlock*> out = main.params();
    if (fine) {
      for (ParamBlock* b : fine->params()) out.push_back(b);
    }
    for (auto& a : augmented) {
      for (ParamBlock* b : a.params()) out.push_back(b);
    }
    if (motion) {
      for (ParamBlock* b : motion->params()) out.push_back(b);
    }
    return out;
  }

  void zero_grad() {
    for (ParamBlock* b : params()) b->zero_grad();
  }

  void copy_values_from(ModelSet& src) {
    auto dst_blocks = params();
    auto src_blocks = src.params();
    for (std::size_t i = 0; i < dst_blocks.size(); ++i) {
      dst_blocks[i]->value = src_blocks[i]->value;
    }
  }

  void merge_grads_into(ModelSet& dst) {
    auto dst_blocks = dst.params();
    auto src_blocks = params();
    for (std::size_t i = 0; i < dst_blocks.size(); ++i) {
      for (std::size_t j = 0; j < dst_blocks[i]->grad.size(); ++j) {
        dst_blocks[i]->grad[j] += src_blocks[i]->grad[j];
      }
    }
  }
};

}  // namespace

StaticFitResult fit_static(const Dataset& data, const StaticFitConfig& config) {
  std::vector<int> views = config.train_views;
  if (views.empty()) {
    views.resize(data.num_views);
    std::iota(views.begin(), views.end(), 0);
  }
  const BoundingBox box = scene_bounds(data, views);

  ModelSet master;
  master.main = build_model(config.field, box, config.enable_vip, false, config.seed);
  if (config.sampling.n_fine > 0) {
    master.fine =
        build_model(config.field, box, config.enable_vip, false, config.seed + 1);
  }
  std::vector<AugmentationKind> aug_kinds;
  for (const auto& name : config.augmentations) {
    aug_kinds.push_back(augmentation_kind_from_string(name));
  }
  for (std::size_t i = 0; i < aug_kinds.size(); ++i) {
    AugmentationOptions opts = config.aug_options;
    opts.seed = config.seed + 2 + i;
    master.augmented.push_back(make_augmented(master.main, aug_kinds[i], opts));
  }

  auto master_params = master.params();
  AdamState adam;
  adam.attach(master_params);
  LrSchedule schedule{config.lr0, config.lr_final, config.iterations};

  // Plane-sweep visibility priors per ordered train-view pair.
  std::vector<std::vector<ImageU8>> vis_prior(views.size());
  if (config.enable_vip) {
    for (std::size_t a = 0; a < views.size(); ++a) {
      vis_prior[a].resize(views.size());
      for (std::size_t b = 0; b < views.size(); ++b) {
        if (a == b) continue;
        const auto psv = priors::build_psv(
            data.rgb[views[a]][0], data.camera(views[a], 0), data.rgb[views[b]][0],
            data.camera(views[b], 0), config.psv_planes, data.z_near, data.z_far);
        vis_prior[a][b] = priors::visibility_prior(psv, config.psv_gamma).visible;
      }
    }
  }

  std::vector<scenes::SparseDepthPoint> sd;
  if (config.enable_sparse_depth) {
    for (const auto& p : data.sparse_depth) {
      if (p.time != 0) continue;
      if (std::find(views.begin(), views.end(), p.view) != views.end()) {
        sd.push_back(p);
      }
    }
  }

  const int threads = resolve_thread_count(config.threads);
  std::vector<ModelSet> ctxs(threads);
  for (auto& c : ctxs) c = master;  // deep copies via RadianceModel copy ctor

  const bool want_aug = !master.augmented.empty();
  const bool want_cfc = config.enable_cfc && master.fine.has_value();

  const int batch = config.batch_size;
  const int sd_batch = sd.empty() ? 0 : std::min<int>(config.sparse_depth_batch,
                                                      batch);
  std::vector<RayEval> rays(batch + sd_batch);

  std::vector<TrainLogEntry> log;
  log.reserve(config.iterations);

  for (int iter = 0; iter < config.iterations; ++iter) {
    Rng rng = Rng::keyed(config.seed, 0xba7c8u, iter);
    const int total_rays = batch + sd_batch;
    for (int i = 0; i < total_rays; ++i) {
      RayEval& re = rays[i];
      re.is_sd = i >= batch;
      if (re.is_sd) {
        const auto& p = sd[rng.uniform_int(static_cast<int>(sd.size()))];
        re.view = p.view;
        re.pixel = Eigen::Vector2d(p.x, p.y);
        re.sd_depth = p.z;
        re.secondary = -1;
      } else {
        const int vi = rng.uniform_int(static_cast<int>(views.size()));
        re.view = views[vi];
        re.pixel = Eigen::Vector2d(rng.uniform_int(data.width),
                                   rng.uniform_int(data.height));
        re.secondary = -1;
        if (config.enable_vip && views.size() > 1) {
          int si = rng.uniform_int(static_cast<int>(views.size()) - 1);
          if (si >= vi) ++si;
          re.secondary = views[si];
          re.tau = vis_prior[vi][si].at(static_cast<int>(re.pixel.x()),
                                        static_cast<int>(re.pixel.y()));
        }
      }
      const int px = static_cast<int>(re.pixel.x());
      const int py = static_cast<int>(re.pixel.y());
      const ImageD& img = data.rgb[re.view][0];
      re.gt_color = Eigen::Vector3d(img.at(px, py, 0), img.at(px, py, 1),
                                    img.at(px, py, 2));
      re.ray = make_ray(data.camera(re.view, 0), re.pixel);
      re.ctx = render::RenderContext{};
      re.ctx.secondary_visibility = config.enable_vip && re.secondary >= 0;
      if (re.ctx.secondary_visibility) {
        re.ctx.secondary_center = data.camera(re.secondary, 0).center();
      }
    }

    for (auto& c : ctxs) {
      c.copy_values_from(master);
      c.zero_grad();
    }

    // pass A: forward renders
    parallel_chunks(total_rays, threads, [&](std::int64_t lo, std::int64_t hi, int t) {
      ModelSet& ms = ctxs[t];
      for (std::int64_t i = lo; i < hi; ++i) {
        RayEval& re = rays[static_cast<std::size_t>(i)];
        Rng jitter = Rng::keyed(config.seed, 0x6a69, iter, static_cast<std::uint64_t>(i));
        re.samples = draw_samples(config.sampling, data.z_near, data.z_far, 0.0,
                                  config.sampling.jitter ? &jitter : nullptr);
        re.main = render_ray(ms.main, re.ray, re.samples, re.ctx, re.main_ws);
        reset_adjoint(re.main_adj, re.samples.size());

        if (ms.fine) {
          Rng fine_rng = Rng::keyed(config.seed, 0x6669, iter,
                                    static_cast<std::uint64_t>(i));
          re.fine_samples = render::hierarchical_resample(
              re.main.weights, re.samples, config.sampling.n_fine, data.z_near,
              data.z_far, fine_rng);
          re.fine = render_ray(*ms.fine, re.ray, re.fine_samples, re.ctx, re.fine_ws);
          reset_adjoint(re.fine_adj, re.fine_samples.size());
        }

        re.aug.resize(ms.augmented.size());
        re.aug_ws.resize(ms.augmented.size());
        re.aug_adj.resize(ms.augmented.size());
        re.aug_samples.resize(ms.augmented.size());
        for (std::size_t a = 0; a < ms.augmented.size(); ++a) {
          double s_near_override = 0.0;
          if (ms.augmented[a].field->family() == FieldFamily::HashGrid) {
            s_near_override =
                static_cast<const HashGridField*>(ms.augmented[a].field.get())
                    ->config()
                    .s_near;
          }
          if (s_near_override > 0.0) {
            Rng aug_rng = Rng::keyed(config.seed, 0x6175, iter,
                                     static_cast<std::uint64_t>(i) * 16 + a);
            re.aug_samples[a] =
                draw_samples(config.sampling, data.z_near, data.z_far,
                             s_near_override, config.sampling.jitter ? &aug_rng : nullptr);
          } else {
            re.aug_samples[a] = re.samples;
          }
          render::RenderContext aug_ctx;  // augmented passes skip the vis head
          re.aug[a] =
              render_ray(ms.augmented[a], re.ray, re.aug_samples[a], aug_ctx,
                         re.aug_ws[a]);
          reset_adjoint(re.aug_adj[a], re.aug_samples[a].size());
        }
      }
    });

    // ---- loss assembly on the main thread ----
    losses::LossTerms terms;
    const bool aug_active =
        want_aug &&
        losses::warmup_active(config.weights.aug_warmup, iter, config.iterations);
    const bool cfc_active =
        want_cfc &&
        losses::warmup_active(config.weights.aug_warmup, iter, config.iterations);
    const bool vip_active =
        config.enable_vip &&
        losses::warmup_active(config.weights.vip_warmup, iter, config.iterations);

    // photometric on every rendered pass
    {
      std::vector<Eigen::Vector3d> rendered(total_rays), gt(total_rays);
      std::vector<Eigen::Vector3d> d(total_rays, Eigen::Vector3d::Zero());
      for (int i = 0; i < total_rays; ++i) {
        rendered[i] = rays[i].main.color;
        gt[i] = rays[i].gt_color;
      }
      terms.photo_main += losses::l_photometric(rendered, gt, d, 1.0);
      for (int i = 0; i < total_rays; ++i) {
        rays[i].main_adj.d_color += config.weights.photo_main * d[i];
      }
      if (master.fine) {
        std::fill(d.begin(), d.end(), Eigen::Vector3d::Zero());
        for (int i = 0; i < total_rays; ++i) rendered[i] = rays[i].fine.color;
        terms.photo_main += losses::l_photometric(rendered, gt, d, 1.0);
        for (int i = 0; i < total_rays; ++i) {
          rays[i].fine_adj.d_color += config.weights.photo_main * d[i];
        }
      }
      for (std::size_t a = 0; a < master.augmented.size(); ++a) {
        std::fill(d.begin(), d.end(), Eigen::Vector3d::Zero());
        for (int i = 0; i < total_rays; ++i) rendered[i] = rays[i].aug[a].color;
        terms.photo_aug += losses::l_photometric(rendered, gt, d, 1.0);
        for (int i = 0; i < total_rays; ++i) {
          rays[i].aug_adj[a].d_color += config.weights.photo_aug * d[i];
        }
      }
    }

    // batch psnr from the finest main pass
    double psnr_mse = 0.0;
    for (int i = 0; i < total_rays; ++i) {
      const Eigen::Vector3d c = master.fine ? rays[i].fine.color : rays[i].main.color;
      psnr_mse += (c - rays[i].gt_color).squaredNorm() / 3.0;
    }
    psnr_mse /= total_rays;

    // sparse depth on main and augmented models
    if (sd_batch > 0) {
      std::vector<double> z_hat, z_gt;
      std::vector<int> idx;
      for (int i = batch; i < total_rays; ++i) {
        idx.push_back(i);
        z_gt.push_back(rays[i].sd_depth);
      }
      auto apply_sd = [&](auto&& depth_of, auto&& adj_of) {
        z_hat.clear();
        for (const int i : idx) z_hat.push_back(depth_of(rays[i]));
        std::vector<double> dz(idx.size(), 0.0);
        const double value = losses::l_sparse_depth(z_hat, z_gt, dz, 1.0);
        for (std::size_t k = 0; k < idx.size(); ++k) {
          adj_of(rays[idx[k]]) += config.weights.sparse_depth * dz[k];
        }
        return value;
      };
      terms.sparse_depth += apply_sd([](RayEval& r) { return r.main.depth; },
                                     [](RayEval& r) -> double& { return r.main_adj.d_depth; });
      if (master.fine) {
        terms.sparse_depth += apply_sd([](RayEval& r) { return r.fine.depth; },
                                       [](RayEval& r) -> double& { return r.fine_adj.d_depth; });
      }
      for (std::size_t a = 0; a < master.augmented.size(); ++a) {
        terms.sparse_depth +=
            apply_sd([a](RayEval& r) { return r.aug[a].depth; },
                     [a](RayEval& r) -> double& { return r.aug_adj[a].d_depth; });
      }
    }

    // visibility prior and consistency
    if (config.enable_vip) {
      std::vector<int> vip_rays;
      for (int i = 0; i < batch; ++i) {
        if (rays[i].secondary >= 0) vip_rays.push_back(i);
      }
      if (vip_active && !vip_rays.empty()) {
        std::vector<double> tau(vip_rays.size()), tprime(vip_rays.size());
        std::vector<double> d_tp(vip_rays.size(), 0.0);
        for (std::size_t k = 0; k < vip_rays.size(); ++k) {
          tau[k] = rays[vip_rays[k]].tau;
          tprime[k] = rays[vip_rays[k]].main.secondary_vis;
        }
        terms.vip = losses::l_vip(tau, tprime, d_tp, 1.0);
        for (std::size_t k = 0; k < vip_rays.size(); ++k) {
          rays[vip_rays[k]].main_adj.d_secondary_vis += config.weights.vip * d_tp[k];
        }
      }
      // L_v on every ray that carries the head
      double vc = 0.0;
      for (int i = 0; i < total_rays; ++i) {
        RayEval& re = rays[i];
        if (re.main.that.empty()) continue;
        vc += losses::l_visibility_consistency(
            re.main.transmittances, re.main.that, re.main_adj.d_transmittance,
            re.main_adj.d_that,
            config.weights.visibility_consistency / total_rays);
      }
      terms.visibility_consistency = vc / total_rays;
    }

    // reliability-masked depth supervision from the augmentations
    if (aug_active) {
      for (std::size_t a = 0; a < master.augmented.size(); ++a) {
        // group rays by view to reproject against the nearest other view
        for (const int v : views) {
          std::vector<Eigen::Vector2d> pixels;
          std::vector<double> zm, za;
          std::vector<int> idx;
          for (int i = 0; i < batch; ++i) {
            if (rays[i].view != v) continue;
            idx.push_back(i);
            pixels.push_back(rays[i].pixel);
            zm.push_back(rays[i].main.depth);
            za.push_back(rays[i].aug[a].depth);
          }
          if (idx.empty()) continue;
          std::vector<Camera> train_cams;
          for (const int tv : views) train_cams.push_back(data.camera(tv, 0));
          const int vi = static_cast<int>(std::find(views.begin(), views.end(), v) -
                                          views.begin());
          const int nearest = priors::nearest_view_index(train_cams, vi);
          if (nearest < 0) continue;
          const auto masks = priors::reliability_mask(
              pixels, zm, za, data.rgb[v][0], data.camera(v, 0),
              data.rgb[views[nearest]][0], data.camera(views[nearest], 0),
              config.patch_size, config.err_threshold);
          std::vector<double> d_zm(idx.size(), 0.0), d_za(idx.size(), 0.0);
          terms.aug_depth += losses::l_aug(zm, za, masks.mask_aug, masks.mask_main,
                                           d_zm, d_za, 1.0);
          for (std::size_t k = 0; k < idx.size(); ++k) {
            rays[idx[k]].main_adj.d_depth += config.weights.aug_depth * d_zm[k];
            rays[idx[k]].aug_adj[a].d_depth += config.weights.aug_depth * d_za[k];
          }
        }
      }
    }

    // coarse-fine consistency with reliability masks
    if (cfc_active) {
      for (const int v : views) {
        std::vector<Eigen::Vector2d> pixels;
        std::vector<double> zc, zf;
        std::vector<int> idx;
        for (int i = 0; i < batch; ++i) {
          if (rays[i].view != v) continue;
          idx.push_back(i);
          pixels.push_back(rays[i].pixel);
          zc.push_back(rays[i].main.depth);
          zf.push_back(rays[i].fine.depth);
        }
        if (idx.empty()) continue;
        std::vector<Camera> train_cams;
        for (const int tv : views) train_cams.push_back(data.camera(tv, 0));
        const int vi = static_cast<int>(std::find(views.begin(), views.end(), v) -
                                        views.begin());
        const int nearest = priors::nearest_view_index(train_cams, vi);
        if (nearest < 0) continue;
        const auto masks = priors::reliability_mask(
            pixels, zc, zf, data.rgb[v][0], data.camera(v, 0),
            data.rgb[views[nearest]][0], data.camera(views[nearest], 0),
            config.patch_size, config.err_threshold);
        std::vector<double> d_zc(idx.size(), 0.0), d_zf(idx.size(), 0.0);
        // Eq. form: 1{m_f} ||z_c - SG(z_f)||^2 + 1{m_c} ||SG(z_c) - z_f||^2
        terms.cfc += losses::l_aug(zc, zf, masks.mask_aug, masks.mask_main, d_zc,
                                   d_zf, 1.0);
        for (std::size_t k = 0; k < idx.size(); ++k) {
          rays[idx[k]].main_adj.d_depth += config.weights.cfc * d_zc[k];
          rays[idx[k]].fine_adj.d_depth += config.weights.cfc * d_zf[k];
        }
      }
    }

    // mass concentration on augmented tensor passes
    if (config.weights.mass_concentration > 0.0) {
      for (std::size_t a = 0; a < master.augmented.size(); ++a) {
        if (master.augmented[a].field->family() != FieldFamily::FactorizedTensor)
          continue;
        double mc = 0.0;
        for (int i = 0; i < total_rays; ++i) {
          RayEval& re = rays[i];
          mc += losses::l_mass_concentration(
              re.aug[a].weights, 5, re.aug_adj[a].d_weights,
              config.weights.mass_concentration / total_rays);
        }
        terms.mass_concentration += mc / total_rays;
      }
    }

    // pass B: backward
    parallel_chunks(total_rays, threads, [&](std::int64_t lo, std::int64_t hi, int t) {
      ModelSet& ms = ctxs[t];
      for (std::int64_t i = lo; i < hi; ++i) {
        RayEval& re = rays[static_cast<std::size_t>(i)];
        render::render_ray_backward(ms.main, nullptr, re.ray, re.samples, re.ctx,
                                    re.main, re.main_adj, re.main_ws);
        if (ms.fine) {
          render::render_ray_backward(*ms.fine, nullptr, re.ray, re.fine_samples,
                                      re.ctx, re.fine, re.fine_adj, re.fine_ws);
        }
        render::RenderContext aug_ctx;
        for (std::size_t a = 0; a < ms.augmented.size(); ++a) {
          render::render_ray_backward(ms.augmented[a], nullptr, re.ray,
                                      re.aug_samples[a], aug_ctx, re.aug[a],
                                      re.aug_adj[a], re.aug_ws[a]);
        }
      }
    });

    master.zero_grad();
    for (auto& c : ctxs) c.merge_grads_into(master);

    const double lr = schedule.lr(iter);
    adam.step(master_params, lr);

    TrainLogEntry entry;
    entry.iter = iter;
    entry.loss = losses::total_loss(terms, config.weights, iter, config.iterations);
    entry.psnr = batch_psnr_from_mse(psnr_mse);
    entry.lr = lr;
    log.push_back(entry);
  }

  StaticFitResult result;
  result.main = std::move(master.main);
  if (master.fine) result.fine = std::move(*master.fine);
  result.augmented = std::move(master.augmented);
  result.log = std::move(log);
  result.box = box;
  return result;
}

DynamicFitResult fit_dynamic(const Dataset& data, const DynamicFitConfig& config) {
  std::vector<int> views = config.train_views;
  if (views.empty()) {
    views.resize(data.num_views);
    std::iota(views.begin(), views.end(), 0);
  }
  const BoundingBox box = scene_bounds(data, views);
  const double t_denom = std::max(1, data.num_frames - 1);

  ModelSet master;
  master.main = build_model(config.field, box, false, true, config.seed);
  master.motion = HexPlaneMotionField(box, 0.0, 1.0, config.motion);
  {
    Rng rng = Rng::keyed(config.seed, 0x6d6f74u);
    master.motion->init(rng);
  }

  auto master_params = master.params();
  AdamState adam;
  adam.attach(master_params);
  LrSchedule schedule{config.lr0, config.lr_final, config.iterations};

  std::vector<scenes::SparseFlowMatch> flow;
  if (config.enable_sparse_flow) {
    for (const auto& m : data.sparse_flow) {
      const bool v_ok = std::find(views.begin(), views.end(), m.v) != views.end();
      const bool u_ok = std::find(views.begin(), views.end(), m.u) != views.end();
      if (v_ok && u_ok) flow.push_back(m);
    }
  }

  const int threads = resolve_thread_count(config.threads);
  std::vector<ModelSet> ctxs(threads);
  for (auto& c : ctxs) c = master;

  const int batch = config.batch_size;
  const int flow_rays = flow.empty() ? 0 : config.flow_batch * 2;
  const int total_rays = batch + flow_rays;
  std::vector<RayEval> rays(total_rays);

  std::vector<TrainLogEntry> log;
  log.reserve(config.iterations);

  for (int iter = 0; iter < config.iterations; ++iter) {
    Rng rng = Rng::keyed(config.seed, 0xd9a4u, iter);
    for (int i = 0; i < batch; ++i) {
      RayEval& re = rays[i];
      re.is_flow = false;
      re.view = views[rng.uniform_int(static_cast<int>(views.size()))];
      re.time = rng.uniform_int(data.num_frames);
      re.pixel = Eigen::Vector2d(rng.uniform_int(data.width),
                                 rng.uniform_int(data.height));
      const ImageD& img = data.rgb[re.view][re.time];
      const int px = static_cast<int>(re.pixel.x());
      const int py = static_cast<int>(re.pixel.y());
      re.gt_color = Eigen::Vector3d(img.at(px, py, 0), img.at(px, py, 1),
                                    img.at(px, py, 2));
      re.ray = make_ray(data.camera(re.view, re.time), re.pixel);
    }
    for (int k = 0; k < flow_rays / 2; ++k) {
      const auto& m = flow[rng.uniform_int(static_cast<int>(flow.size()))];
      RayEval& ra = rays[batch + 2 * k];
      RayEval& rb = rays[batch + 2 * k + 1];
      ra.is_flow = rb.is_flow = true;
      ra.view = m.v;
      ra.time = m.t;
      ra.pixel = Eigen::Vector2d(m.x, m.y);
      rb.view = m.u;
      rb.time = m.s;
      rb.pixel = Eigen::Vector2d(m.x2, m.y2);
      for (RayEval* re : {&ra, &rb}) {
        const auto sample = sample_bilinear(data.rgb[re->view][re->time], re->pixel);
        re->gt_color = sample ? Eigen::Vector3d((*sample)[0], (*sample)[1], (*sample)[2])
                              : Eigen::Vector3d::Zero();
        re->ray = make_ray(data.camera(re->view, re->time), re->pixel);
      }
    }

    for (auto& c : ctxs) {
      c.copy_values_from(master);
      c.zero_grad();
    }

    parallel_chunks(total_rays, threads, [&](std::int64_t lo, std::int64_t hi, int t) {
      ModelSet& ms = ctxs[t];
      for (std::int64_t i = lo; i < hi; ++i) {
        RayEval& re = rays[static_cast<std::size_t>(i)];
        re.ctx = render::RenderContext{};
        re.ctx.time = re.time / t_denom;
        re.ctx.motion = &*ms.motion;
        Rng jitter = Rng::keyed(config.seed, 0x6a6a, iter, static_cast<std::uint64_t>(i));
        re.samples = draw_samples(config.sampling, data.z_near, data.z_far, 0.0,
                                  config.sampling.jitter ? &jitter : nullptr);
        re.main = render_ray(ms.main, re.ray, re.samples, re.ctx, re.main_ws);
        reset_adjoint(re.main_adj, re.samples.size());
      }
    });

    losses::LossTerms terms;
    {
      std::vector<Eigen::Vector3d> rendered(total_rays), gt(total_rays);
      std::vector<Eigen::Vector3d> d(total_rays, Eigen::Vector3d::Zero());
      for (int i = 0; i < total_rays; ++i) {
        rendered[i] = rays[i].main.color;
        gt[i] = rays[i].gt_color;
      }
      terms.photo_main = losses::l_photometric(rendered, gt, d, 1.0);
      for (int i = 0; i < total_rays; ++i) {
        rays[i].main_adj.d_color += config.weights.photo_main * d[i];
      }
    }
    double psnr_mse = 0.0;
    for (int i = 0; i < total_rays; ++i) {
      psnr_mse += (rays[i].main.color - rays[i].gt_color).squaredNorm() / 3.0;
    }
    psnr_mse /= total_rays;

    if (flow_rays > 0) {
      const int pairs = flow_rays / 2;
      for (int k = 0; k < pairs; ++k) {
        RayEval& ra = rays[batch + 2 * k];
        RayEval& rb = rays[batch + 2 * k + 1];
        Eigen::Vector3d da = Eigen::Vector3d::Zero(), db = Eigen::Vector3d::Zero();
        terms.sparse_flow +=
            losses::l_sparse_flow(ra.main.canonical_point, rb.main.canonical_point,
                                  &da, &db, 1.0) /
            pairs;
        ra.main_adj.d_canonical_point += config.weights.sparse_flow * da / pairs;
        rb.main_adj.d_canonical_point += config.weights.sparse_flow * db / pairs;
      }
    }

    parallel_chunks(total_rays, threads, [&](std::int64_t lo, std::int64_t hi, int t) {
      ModelSet& ms = ctxs[t];
      for (std::int64_t i = lo; i < hi; ++i) {
        RayEval& re = rays[static_cast<std::size_t>(i)];
        render::render_ray_backward(ms.main, &*ms.motion, re.ray, re.samples, re.ctx,
                                    re.main, re.main_adj, re.main_ws);
      }
    });

    master.zero_grad();
    for (auto& c : ctxs) c.merge_grads_into(master);

    const double lr = schedule.lr(iter);
    adam.step(master_params, lr);

    TrainLogEntry entry;
    entry.iter = iter;
    entry.loss = losses::total_loss(terms, config.weights, iter, config.iterations);
    entry.psnr = batch_psnr_from_mse(psnr_mse);
    entry.lr = lr;
    log.push_back(entry);
  }

  DynamicFitResult result;
  result.scene = std::move(master.main);
  result.motion = std::move(*master.motion);
  result.log = std::move(log);
  result.box = box;
  const int tc = config.canonical_time < 0 ? (data.num_frames - 1) / 2
                                           : config.canonical_time;
  result.canonical_time = tc / t_denom;
  return result;
}

RenderedImage render_image(const RadianceModel& main, const RadianceModel* fine,
                           const HexPlaneMotionField* motion, double time,
                           const Camera& camera, const SamplingConfig& sampling,
                           double z_near, double z_far, int threads,
                           std::uint64_t seed) {
  RenderedImage out;
  out.rgb = ImageD(camera.width, camera.height, 3, 0.0);
  out.depth = ImageD(camera.width, camera.height, 1, 0.0);
  const int n_threads = resolve_thread_count(threads);

  parallel_chunks(static_cast<std::int64_t>(camera.height), n_threads,
                  [&](std::int64_t lo, std::int64_t hi, int) {
    render::RayWorkspace ws;
    render::RenderContext ctx;
    ctx.time = time;
    ctx.motion = motion;
    for (std::int64_t y = lo; y < hi; ++y) {
      for (int x = 0; x < camera.width; ++x) {
        const Ray ray = make_ray(camera, Eigen::Vector2d(x, static_cast<double>(y)));
        Rng jitter = Rng::keyed(seed, 0x7278, static_cast<std::uint64_t>(y), x);
        SampleSet samples =
            draw_samples(sampling, z_near, z_far, 0.0,
                         sampling.jitter ? &jitter : nullptr);
        render::RenderResult res = render_ray(main, ray, samples, ctx, ws);
        if (fine && sampling.n_fine > 0) {
          Rng fine_rng = Rng::keyed(seed, 0x7266, static_cast<std::uint64_t>(y), x);
          const SampleSet fine_samples = render::hierarchical_resample(
              res.weights, samples, sampling.n_fine, z_near, z_far, fine_rng);
          res = render_ray(*fine, ray, fine_samples, ctx, ws);
        }
        for (int c = 0; c < 3; ++c) out.rgb.at(x, static_cast<int>(y), c) = res.color[c];
        out.depth.at(x, static_cast<int>(y)) = res.depth;
      }
    }
  });
  return out;
}

Checkpoint to_checkpoint(StaticFitResult&& result, const Dataset& data,
                         const StaticFitConfig& config) {
  Checkpoint ckpt;
  ckpt.main = std::move(result.main);
  if (result.fine) ckpt.fine = std::move(*result.fine);
  ckpt.z_near = data.z_near;
  ckpt.z_far = data.z_far;
  ckpt.n_coarse = config.sampling.n_coarse;
  ckpt.n_fine = config.sampling.n_fine;
  ckpt.sampling_domain = config.sampling.domain;
  ckpt.s_near = config.sampling.s_near;
  return ckpt;
}

Checkpoint to_checkpoint(DynamicFitResult&& result, const Dataset& data,
                         const DynamicFitConfig& config) {
  Checkpoint ckpt;
  ckpt.main = std::move(result.scene);
  ckpt.motion = std::move(result.motion);
  ckpt.z_near = data.z_near;
  ckpt.z_far = data.z_far;
  ckpt.n_coarse = config.sampling.n_coarse;
  ckpt.n_fine = 0;
  ckpt.sampling_domain = config.sampling.domain;
  ckpt.s_near = config.sampling.s_near;
  ckpt.time_min = 0.0;
  ckpt.time_max = std::max(1, data.num_frames - 1);
  return ckpt;
}

}  // namespace sparseview::optim
