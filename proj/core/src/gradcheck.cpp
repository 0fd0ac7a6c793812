// Copyright Contributors to the SparseView Project
// SPDX-License-Identifier: Apache-2.0

#include "sparseview/gradcheck.hpp"

#include <cmath>
#include <functional>
#include <sstream>

#include "sparseview/losses.hpp"
#include "sparseview/render.hpp"

namespace sparseview::gradcheck {

namespace {

enum class LossKind {
  Photometric,
  Vip,
  VisibilityConsistency,
  SparseDepth,
  AugDepth,
  CoarseFine,
  MassConcentration,
  SparseFlow,
};

const char* kind_name(LossKind k) {
  switch (k) {
    case LossKind::Photometric: return "photometric";
    case LossKind::Vip: return "vip";
    case LossKind::VisibilityConsistency: return "visibility_consistency";
    case LossKind::SparseDepth: return "sparse_depth";
    case LossKind::AugDepth: return "aug_depth";
    case LossKind::CoarseFine: return "coarse_fine";
    case LossKind::MassConcentration: return "mass_concentration";
    case LossKind::SparseFlow: return "sparse_flow";
  }
  return "?";
}

struct Bundle {
  Camera cam, cam2;
  BoundingBox box;
  RadianceModel main;
  RadianceModel aug;   // used by AugDepth
  RadianceModel fine;  // used by CoarseFine
  std::optional<HexPlaneMotionField> motion;
  std::vector<Ray> rays;
  SampleSet samples;
  std::vector<SampleSet> fine_samples;  // fixed per ray (no adjoint through positions)
  std::vector<Eigen::Vector3d> gt_colors;
  std::vector<double> gt_depths;
};

void randomize(std::vector<ParamBlock*> blocks, Rng& rng, double scale) {
  for (ParamBlock* b : blocks) {
    for (auto& v : b->value) v = rng.uniform(-scale, scale);
  }
}

RadianceModel small_model(const std::string& family, const BoundingBox& box,
                          bool vis_head, Rng& rng) {
  RadianceModel m;
  if (family == "voxel") {
    m.field = std::make_unique<VoxelField>(box, 5, 5, 5, 4);
  } else if (family == "tensor") {
    m.field = std::make_unique<FactorizedTensorField>(box, 6, 6, 6, 2, 2, 4, 25.0);
  } else if (family == "hash") {
    HashGridField::Config c;
    c.levels = 2;
    c.base_resolution = 4;
    c.growth = 2.0;
    c.table_size = 64;
    c.features_per_level = 2;
    c.feature_dim = 4;
    m.field = std::make_unique<HashGridField>(box, c);
  } else {
    EncodedField::Config c;
    c.position_degrees = 4;
    c.feature_dim = 4;
    m.field = std::make_unique<EncodedField>(box, c);
  }
  ColorDecoder::Config cc;
  cc.feature_dim = 4;
  cc.view_degrees = 2;
  cc.visibility_head = vis_head;
  m.color = ColorDecoder(cc);
  randomize(m.params(), rng, 0.25);
  return m;
}

Bundle make_bundle(const std::string& family, bool motion, std::uint64_t seed) {
  Bundle b;
  b.cam = Camera::pinhole(10, 10, 3.5, 2.5, 8, 6);
  b.cam2 = b.cam;
  b.cam2.T(0, 3) = 0.6;  // translated secondary view
  b.box.min = Eigen::Vector3d(-2.0, -1.6, 1.8);
  b.box.max = Eigen::Vector3d(2.0, 1.6, 5.2);
  Rng rng = Rng::keyed(seed, 0x676331u);
  b.main = small_model(family, b.box, true, rng);
  b.aug = small_model(family, b.box, false, rng);
  b.fine = small_model(family, b.box, true, rng);
  if (motion) {
    HexPlaneMotionField::Config mc;
    mc.spatial_resolutions = {4};
    mc.time_resolutions = {4};
    mc.features = 3;
    b.motion = HexPlaneMotionField(b.box, 0.0, 1.0, mc);
    randomize(b.motion->params(), rng, 0.2);
  }
  b.samples = sample_stratified(2.0, 5.0, 8, nullptr);
  for (const Eigen::Vector2d px : {Eigen::Vector2d(2.2, 3.1), Eigen::Vector2d(5.4, 1.7),
                                   Eigen::Vector2d(3.9, 4.2)}) {
    b.rays.push_back(make_ray(b.cam, px));
    b.gt_colors.push_back(Eigen::Vector3d(rng.uniform(), rng.uniform(), rng.uniform()));
    b.gt_depths.push_back(rng.uniform(2.5, 4.5));
  }
  // fixed fine samples: resampling positions carry no adjoint
  for (std::size_t r = 0; r < b.rays.size(); ++r) {
    Rng frng = Rng::keyed(seed, 0x66u, r);
    render::RayWorkspace ws;
    render::RenderContext ctx;
    const auto res = render_ray(b.main, b.rays[r], b.samples, ctx, ws);
    b.fine_samples.push_back(render::hierarchical_resample(res.weights, b.samples,
                                                           8, 2.0, 5.0, frng));
  }
  return b;
}

// Stop-gradient slots captured at the base point: finite differences of an
// SG-bearing loss must hold the stopped branch at its base value, matching
// the adjoint the analytic pass computes.
struct Frozen {
  std::vector<std::vector<double>> trans, that;
  std::vector<double> main_depth, aug_depth, fine_depth;
};

// Loss evaluation; adjoints accumulate into parameter grads when with_grad.
double eval_loss(LossKind kind, Bundle& b, bool with_grad,
                 const Frozen* frozen = nullptr) {
  const double t_now = 0.3, t_other = 0.7;
  render::RayWorkspace ws;
  double loss = 0.0;

  const std::size_t n_rays = b.rays.size();
  for (std::size_t r = 0; r < n_rays; ++r) {
    render::RenderContext ctx;
    ctx.time = t_now;
    if (b.motion) ctx.motion = &*b.motion;
    ctx.secondary_visibility =
        kind == LossKind::Vip && b.main.color.config().visibility_head;
    ctx.secondary_center = b.cam2.center();

    const render::RenderResult main = render_ray(b.main, b.rays[r], b.samples, ctx, ws);
    render::RayAdjoint adj;
    adj.d_weights.assign(b.samples.size(), 0.0);
    adj.d_transmittance.assign(b.samples.size(), 0.0);
    adj.d_that.assign(b.samples.size(), 0.0);

    switch (kind) {
      case LossKind::Photometric: {
        std::array<Eigen::Vector3d, 1> rendered{main.color};
        std::array<Eigen::Vector3d, 1> gt{b.gt_colors[r]};
        std::array<Eigen::Vector3d, 1> d{Eigen::Vector3d::Zero()};
        loss += losses::l_photometric(rendered, gt, d, 1.0);
        adj.d_color = d[0];
        break;
      }
      case LossKind::Vip: {
        const double tau[1] = {1.0};
        const double tp[1] = {main.secondary_vis};
        double dtp[1] = {0.0};
        loss += losses::l_vip(tau, tp, dtp, 1.0);
        adj.d_secondary_vis = dtp[0];
        break;
      }
      case LossKind::VisibilityConsistency: {
        if (frozen) {
          for (std::size_t i = 0; i < main.that.size(); ++i) {
            const double d1 = frozen->trans[r][i] - main.that[i];
            const double d2 = main.transmittances[i] - frozen->that[r][i];
            loss += d1 * d1 + d2 * d2;
          }
        } else {
          loss += losses::l_visibility_consistency(main.transmittances, main.that,
                                                   adj.d_transmittance, adj.d_that,
                                                   1.0);
        }
        break;
      }
      case LossKind::SparseDepth: {
        const double zr[1] = {main.depth};
        const double zg[1] = {b.gt_depths[r]};
        double dz[1] = {0.0};
        loss += losses::l_sparse_depth(zr, zg, dz, 1.0);
        adj.d_depth = dz[0];
        break;
      }
      case LossKind::AugDepth: {
        render::RayWorkspace aws;
        render::RenderContext actx;
        const auto aug = render_ray(b.aug, b.rays[r], b.samples, actx, aws);
        if (frozen) {
          const double d1 = main.depth - frozen->aug_depth[r];
          const double d2 = frozen->main_depth[r] - aug.depth;
          loss += d1 * d1 + d2 * d2;
          break;
        }
        const double zm[1] = {main.depth}, za[1] = {aug.depth};
        const std::uint8_t one[1] = {1};
        double dzm[1] = {0.0}, dza[1] = {0.0};
        loss += losses::l_aug(zm, za, one, one, dzm, dza, 1.0);
        adj.d_depth = dzm[0];
        if (with_grad) {
          render::RayAdjoint aadj;
          aadj.d_depth = dza[0];
          render::render_ray_backward(b.aug, nullptr, b.rays[r], b.samples, actx,
                                      aug, aadj, aws);
        }
        break;
      }
      case LossKind::CoarseFine: {
        render::RayWorkspace fws;
        render::RenderContext fctx;
        const auto fine = render_ray(b.fine, b.rays[r], b.fine_samples[r], fctx, fws);
        if (frozen) {
          const double d1 = main.depth - frozen->fine_depth[r];
          const double d2 = frozen->main_depth[r] - fine.depth;
          loss += d1 * d1 + d2 * d2;
          break;
        }
        const double zc[1] = {main.depth}, zf[1] = {fine.depth};
        const std::uint8_t one[1] = {1};
        double dzc[1] = {0.0}, dzf[1] = {0.0};
        loss += losses::l_aug(zc, zf, one, one, dzc, dzf, 1.0);
        adj.d_depth = dzc[0];
        if (with_grad) {
          render::RayAdjoint fadj;
          fadj.d_depth = dzf[0];
          render::render_ray_backward(b.fine, nullptr, b.rays[r], b.fine_samples[r],
                                      fctx, fine, fadj, fws);
        }
        break;
      }
      case LossKind::MassConcentration: {
        loss += losses::l_mass_concentration(main.weights, 4, adj.d_weights, 1.0);
        break;
      }
      case LossKind::SparseFlow: {
        render::RayWorkspace bws;
        render::RenderContext bctx = ctx;
        bctx.time = t_other;
        bctx.secondary_visibility = false;
        const Ray ray_b = make_ray(b.cam2, Eigen::Vector2d(4.1, 2.6));
        const auto other = render_ray(b.main, ray_b, b.samples, bctx, bws);
        Eigen::Vector3d da = Eigen::Vector3d::Zero(), db = Eigen::Vector3d::Zero();
        loss += losses::l_sparse_flow(main.canonical_point, other.canonical_point,
                                      &da, &db, 1.0);
        adj.d_canonical_point = da;
        if (with_grad) {
          render::RayAdjoint badj;
          badj.d_canonical_point = db;
          render::render_ray_backward(b.main, b.motion ? &*b.motion : nullptr,
                                      ray_b, b.samples, bctx, other, badj, bws);
        }
        break;
      }
    }

    if (with_grad) {
      render::render_ray_backward(b.main, b.motion ? &*b.motion : nullptr,
                                  b.rays[r], b.samples, ctx, main, adj, ws);
    }
  }
  return loss;
}

std::vector<ParamBlock*> blocks_for(LossKind kind, Bundle& b) {
  std::vector<ParamBlock*> blocks = b.main.params();
  if (kind == LossKind::AugDepth) {
    for (ParamBlock* p : b.aug.params()) blocks.push_back(p);
  }
  if (kind == LossKind::CoarseFine) {
    for (ParamBlock* p : b.fine.params()) blocks.push_back(p);
  }
  if (b.motion) {
    for (ParamBlock* p : b.motion->params()) blocks.push_back(p);
  }
  return blocks;
}

Frozen capture_frozen(Bundle& b) {
  Frozen f;
  render::RayWorkspace ws;
  for (std::size_t r = 0; r < b.rays.size(); ++r) {
    render::RenderContext ctx;
    const auto main = render_ray(b.main, b.rays[r], b.samples, ctx, ws);
    f.trans.push_back(main.transmittances);
    f.that.push_back(main.that);
    f.main_depth.push_back(main.depth);
    const auto aug = render_ray(b.aug, b.rays[r], b.samples, ctx, ws);
    f.aug_depth.push_back(aug.depth);
    const auto fine = render_ray(b.fine, b.rays[r], b.fine_samples[r], ctx, ws);
    f.fine_depth.push_back(fine.depth);
  }
  return f;
}

CheckResult check_through_render(const std::string& family, LossKind kind,
                                 const CheckOptions& opts) {
  const bool with_motion = kind == LossKind::SparseFlow;
  Bundle b = make_bundle(family, with_motion, opts.seed);
  auto blocks = blocks_for(kind, b);
  const Frozen frozen = capture_frozen(b);

  for (ParamBlock* blk : blocks) blk->zero_grad();
  eval_loss(kind, b, true);

  CheckResult res;
  res.name = std::string(kind_name(kind)) + "/" + family;
  Rng pick = Rng::keyed(opts.seed, 0x70636bu, static_cast<std::uint64_t>(kind));
  for (ParamBlock* blk : blocks) {
    const int n = static_cast<int>(blk->size());
    const int probes = std::min(n, opts.samples_per_block);
    for (int s = 0; s < probes; ++s) {
      const int i = probes == n ? s : pick.uniform_int(n);
      const double saved = blk->value[i];
      blk->value[i] = saved + opts.fd_step;
      const double up = eval_loss(kind, b, false, &frozen);
      blk->value[i] = saved - opts.fd_step;
      const double down = eval_loss(kind, b, false, &frozen);
      blk->value[i] = saved;
      const double fd = (up - down) / (2.0 * opts.fd_step);
      const double analytic = blk->grad[i];
      // floor keeps central-difference noise on near-zero entries from
      // masquerading as relative error
      const double rel = std::abs(analytic - fd) /
                         std::max({1e-3, std::abs(analytic), std::abs(fd)});
      res.max_rel_err = std::max(res.max_rel_err, rel);
    }
  }
  res.pass = res.max_rel_err < opts.rel_tol;
  return res;
}

CheckResult check_mpi_photometric(const CheckOptions& opts) {
  Rng rng = Rng::keyed(opts.seed, 0x6d7068u);
  const int W = 14, H = 12, planes = 2;
  std::vector<ImageD> target, pred, occ;
  for (int z = 0; z < planes; ++z) {
    ImageD t(W, H, 3), p(W, H, 3), o(W, H, 1);
    for (auto& v : t.data()) v = rng.uniform();
    for (auto& v : p.data()) v = rng.uniform();
    for (int y = 0; y < H; ++y) {
      for (int x = 0; x < W; ++x) o.at(x, y) = rng.uniform() < 0.8 ? 1.0 : 0.0;
    }
    target.push_back(std::move(t));
    pred.push_back(std::move(p));
    occ.push_back(std::move(o));
  }
  const double beta = 0.15;
  std::vector<ImageD> d_pred;
  for (int z = 0; z < planes; ++z) d_pred.emplace_back(W, H, 3, 0.0);
  losses::l_mpi_photometric(target, pred, occ, beta, &d_pred);

  CheckResult res;
  res.name = "mpi_photometric";
  Rng pick = Rng::keyed(opts.seed, 0x706b32u);
  for (int s = 0; s < 40; ++s) {
    const int z = pick.uniform_int(planes);
    const int i = pick.uniform_int(W * H * 3);
    const double saved = pred[z].data()[i];
    pred[z].data()[i] = saved + opts.fd_step;
    const double up = losses::l_mpi_photometric(target, pred, occ, beta, nullptr);
    pred[z].data()[i] = saved - opts.fd_step;
    const double down = losses::l_mpi_photometric(target, pred, occ, beta, nullptr);
    pred[z].data()[i] = saved;
    const double fd = (up - down) / (2.0 * opts.fd_step);
    const double analytic = d_pred[z].data()[i];
    const double rel = std::abs(analytic - fd) /
                       std::max({1e-6, std::abs(analytic), std::abs(fd)});
    res.max_rel_err = std::max(res.max_rel_err, rel);
  }
  res.pass = res.max_rel_err < opts.rel_tol;
  return res;
}

CheckResult check_flow_smoothness(const CheckOptions& opts) {
  Rng rng = Rng::keyed(opts.seed, 0x736d6fu);
  const int W = 12, H = 10, planes = 2;
  std::vector<ImageD> flow, rgb, alpha;
  for (int z = 0; z < planes; ++z) {
    ImageD f(W, H, 3), c(W, H, 3), a(W, H, 1);
    for (auto& v : f.data()) v = rng.uniform(-2.0, 2.0);
    for (auto& v : c.data()) v = rng.uniform();
    for (int y = 0; y < H; ++y) {
      for (int x = 0; x < W; ++x) a.at(x, y) = rng.uniform() < 0.85 ? 1.0 : 0.0;
    }
    flow.push_back(std::move(f));
    rgb.push_back(std::move(c));
    alpha.push_back(std::move(a));
  }
  std::vector<ImageD> d_flow;
  for (int z = 0; z < planes; ++z) d_flow.emplace_back(W, H, 3, 0.0);
  losses::l_flow_smoothness(flow, rgb, alpha, 10.0, &d_flow);

  CheckResult res;
  res.name = "flow_smoothness";
  Rng pick = Rng::keyed(opts.seed, 0x706b33u);
  for (int s = 0; s < 40; ++s) {
    const int z = pick.uniform_int(planes);
    const int i = pick.uniform_int(W * H * 3);
    const double saved = flow[z].data()[i];
    flow[z].data()[i] = saved + opts.fd_step;
    const double up = losses::l_flow_smoothness(flow, rgb, alpha, 10.0, nullptr);
    flow[z].data()[i] = saved - opts.fd_step;
    const double down = losses::l_flow_smoothness(flow, rgb, alpha, 10.0, nullptr);
    flow[z].data()[i] = saved;
    const double fd = (up - down) / (2.0 * opts.fd_step);
    const double analytic = d_flow[z].data()[i];
    const double rel = std::abs(analytic - fd) /
                       std::max({1e-6, std::abs(analytic), std::abs(fd)});
    res.max_rel_err = std::max(res.max_rel_err, rel);
  }
  res.pass = res.max_rel_err < opts.rel_tol;
  return res;
}

// Analytic adjoints on stopped branches must be exactly zero.
CheckResult check_stop_gradients(const CheckOptions& opts) {
  Rng rng = Rng::keyed(opts.seed, 0x736763u);
  CheckResult res;
  res.name = "stop_gradient_exact_zero";

  {
    // visibility consistency: freeze the live branch inputs and verify the
    // stopped sides produce no adjoint
    const int n = 6;
    std::vector<double> T(n), that(n), dT(n, 0.0), dthat(n, 0.0);
    for (int i = 0; i < n; ++i) {
      T[i] = rng.uniform();
      that[i] = rng.uniform();
    }
    losses::l_visibility_consistency(T, that, dT, dthat, 1.0);
    // expected: dthat from term 1 only = -2 (T - that); dT from term 2 only
    for (int i = 0; i < n; ++i) {
      const double expect_that = -2.0 * (T[i] - that[i]);
      const double expect_T = 2.0 * (T[i] - that[i]);
      res.sg_abs_err = std::max(res.sg_abs_err, std::abs(dthat[i] - expect_that));
      res.sg_abs_err = std::max(res.sg_abs_err, std::abs(dT[i] - expect_T));
    }
  }
  {
    // aug/cfc: gradient must not reach the stopped side of each term
    const double zm[2] = {1.4, 2.0}, za[2] = {1.1, 2.4};
    const std::uint8_t ma[2] = {1, 0}, mm[2] = {0, 1};
    double dzm[2] = {0, 0}, dza[2] = {0, 0};
    losses::l_aug(zm, za, ma, mm, dzm, dza, 1.0);
    // pixel 0: only mask_aug set -> d_za must be zero there
    res.sg_abs_err = std::max(res.sg_abs_err, std::abs(dza[0]));
    // pixel 1: only mask_main set -> d_zm must be zero there
    res.sg_abs_err = std::max(res.sg_abs_err, std::abs(dzm[1]));
  }
  res.pass = res.sg_abs_err == 0.0;
  return res;
}

}  // namespace

std::vector<CheckResult> run_all(const CheckOptions& options) {
  std::vector<CheckResult> results;
  const std::vector<std::string> families = {"voxel", "tensor", "hash", "encoded"};
  const std::vector<LossKind> kinds = {
      LossKind::Photometric,    LossKind::Vip,
      LossKind::VisibilityConsistency, LossKind::SparseDepth,
      LossKind::AugDepth,       LossKind::CoarseFine,
      LossKind::MassConcentration, LossKind::SparseFlow,
  };
  for (const auto& family : families) {
    for (const LossKind kind : kinds) {
      results.push_back(check_through_render(family, kind, options));
    }
  }
  results.push_back(check_mpi_photometric(options));
  results.push_back(check_flow_smoothness(options));
  results.push_back(check_stop_gradients(options));
  return results;
}

std::string format_table(const std::vector<CheckResult>& results) {
  std::ostringstream os;
  for (const auto& r : results) {
    os << (r.pass ? "PASS" : "FAIL") << "  " << r.name << "  max_rel_err=";
    os.precision(3);
    os << std::scientific << r.max_rel_err;
    if (r.name == "stop_gradient_exact_zero") {
      os << "  sg_abs_err=" << r.sg_abs_err;
    }
    os << "\n";
  }
  return os.str();
}

bool all_pass(const std::vector<CheckResult>& results) {
  for (const auto& r : results) {
    if (!r.pass) return false;
  }
  return true;
}

}  // namespace sparseview::gradcheck
