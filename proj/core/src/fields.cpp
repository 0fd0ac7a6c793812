// Copyright Contributors to the SparseView Project
// SPDX-License-Identifier: Apache-2.0

#include "sparseview/fields.hpp"

#include <algorithm>
#include <cmath>

namespace sparseview {

namespace {

struct AxisInterp {
  int i0 = 0, i1 = 0;
  double f = 0.0;      // fraction toward i1
  double dscale = 0.0; // d(grid coord)/d(world coord)
};

AxisInterp axis_interp(double world, double lo, double hi, int n) {
  AxisInterp a;
  const double scale = (n - 1) / (hi - lo);
  double u = (world - lo) * scale;
  u = std::clamp(u, 0.0, static_cast<double>(n - 1));
  a.i0 = std::min(static_cast<int>(u), n - 2);
  a.i1 = a.i0 + 1;
  a.f = u - a.i0;
  a.dscale = scale;
  return a;
}

}  // namespace

// ---------------------------------------------------------------------------
// VoxelField

VoxelField::VoxelField(const BoundingBox& box, int nx, int ny, int nz,
                       int feature_dim)
    : box_(box), nx_(nx), ny_(ny), nz_(nz), feature_dim_(feature_dim) {
  density_.name = "voxel.density";
  features_.name = "voxel.features";
  density_.resize(static_cast<std::size_t>(nx) * ny * nz);
  features_.resize(static_cast<std::size_t>(nx) * ny * nz * feature_dim);
}

void VoxelField::init(Rng& rng, double scale) {
  for (auto& v : density_.value) v = rng.uniform(-scale, scale);
  for (auto& v : features_.value) v = rng.uniform(-scale, scale);
}

void VoxelField::query(const Eigen::Vector3d& p, double* sigma, double* features,
                       FieldQueryCache& cache) const {
  cache.p = p;
  cache.inside = box_.contains(p);
  if (!cache.inside) {
    *sigma = 0.0;
    std::fill(features, features + feature_dim_, 0.0);
    return;
  }
  const AxisInterp ax = axis_interp(p.x(), box_.min.x(), box_.max.x(), nx_);
  const AxisInterp ay = axis_interp(p.y(), box_.min.y(), box_.max.y(), ny_);
  const AxisInterp az = axis_interp(p.z(), box_.min.z(), box_.max.z(), nz_);

  double raw = 0.0;
  std::fill(features, features + feature_dim_, 0.0);
  for (int cz = 0; cz < 2; ++cz) {
    const int iz = cz ? az.i1 : az.i0;
    const double wz = cz ? az.f : 1.0 - az.f;
    for (int cy = 0; cy < 2; ++cy) {
      const int iy = cy ? ay.i1 : ay.i0;
      const double wy = cy ? ay.f : 1.0 - ay.f;
      for (int cx = 0; cx < 2; ++cx) {
        const int ix = cx ? ax.i1 : ax.i0;
        const double w = wz * wy * (cx ? ax.f : 1.0 - ax.f);
        const std::size_t vi =
            (static_cast<std::size_t>(iz) * ny_ + iy) * nx_ + ix;
        raw += w * density_.value[vi];
        const double* fv = &features_.value[vi * feature_dim_];
        for (int d = 0; d < feature_dim_; ++d) features[d] += w * fv[d];
      }
    }
  }
  cache.raw_density = raw;
  *sigma = softplus(raw);
}

void VoxelField::query_backward(const FieldQueryCache& cache, double d_sigma,
                                const double* d_features, Eigen::Vector3d* d_p) {
  if (!cache.inside) return;
  const Eigen::Vector3d& p = cache.p;
  const AxisInterp ax = axis_interp(p.x(), box_.min.x(), box_.max.x(), nx_);
  const AxisInterp ay = axis_interp(p.y(), box_.min.y(), box_.max.y(), ny_);
  const AxisInterp az = axis_interp(p.z(), box_.min.z(), box_.max.z(), nz_);
  const double d_raw = d_sigma * softplus_deriv(cache.raw_density);

  for (int cz = 0; cz < 2; ++cz) {
    const int iz = cz ? az.i1 : az.i0;
    const double wz = cz ? az.f : 1.0 - az.f;
    const double dz_sign = cz ? 1.0 : -1.0;
    for (int cy = 0; cy < 2; ++cy) {
      const int iy = cy ? ay.i1 : ay.i0;
      const double wy = cy ? ay.f : 1.0 - ay.f;
      const double dy_sign = cy ? 1.0 : -1.0;
      for (int cx = 0; cx < 2; ++cx) {
        const int ix = cx ? ax.i1 : ax.i0;
        const double wx = cx ? ax.f : 1.0 - ax.f;
        const double dx_sign = cx ? 1.0 : -1.0;
        const double w = wz * wy * wx;
        const std::size_t vi =
            (static_cast<std::size_t>(iz) * ny_ + iy) * nx_ + ix;
        density_.grad[vi] += d_raw * w;
        double corner_dot = d_raw * density_.value[vi];
        const double* fv = &features_.value[vi * feature_dim_];
        double* fg = &features_.grad[vi * feature_dim_];
        if (d_features) {
          for (int d = 0; d < feature_dim_; ++d) {
            fg[d] += d_features[d] * w;
            corner_dot += d_features[d] * fv[d];
          }
        }
        if (d_p) {
          d_p->x() += corner_dot * dx_sign * wz * wy * ax.dscale;
          d_p->y() += corner_dot * dy_sign * wz * wx * ay.dscale;
          d_p->z() += corner_dot * dz_sign * wy * wx * az.dscale;
        }
      }
    }
  }
}

// ---------------------------------------------------------------------------
// FactorizedTensorField

FactorizedTensorField::FactorizedTensorField(const BoundingBox& box, int nx,
                                             int ny, int nz, int rank_sigma,
                                             int rank_color, int feature_dim,
                                             double sigma_max)
    : box_(box), nx_(nx), ny_(ny), nz_(nz), rank_sigma_(rank_sigma),
      rank_color_(rank_color), feature_dim_(feature_dim), sigma_max_(sigma_max) {
  auto setup = [](ParamBlock& b, const char* name, std::size_t n) {
    b.name = name;
    b.resize(n);
  };
  const std::size_t rs = rank_sigma, rc = rank_color;
  setup(sig_vx, "tensor.sig_vx", rs * nx);
  setup(sig_myz, "tensor.sig_myz", rs * ny * nz);
  setup(sig_vy, "tensor.sig_vy", rs * ny);
  setup(sig_mxz, "tensor.sig_mxz", rs * nx * nz);
  setup(sig_vz, "tensor.sig_vz", rs * nz);
  setup(sig_mxy, "tensor.sig_mxy", rs * nx * ny);
  setup(col_vx, "tensor.col_vx", rc * nx);
  setup(col_myz, "tensor.col_myz", rc * ny * nz);
  setup(col_vy, "tensor.col_vy", rc * ny);
  setup(col_mxz, "tensor.col_mxz", rc * nx * nz);
  setup(col_vz, "tensor.col_vz", rc * nz);
  setup(col_mxy, "tensor.col_mxy", rc * nx * ny);
  setup(appearance, "tensor.appearance", 3 * rc * feature_dim);
}

void FactorizedTensorField::init(Rng& rng, double scale) {
  for (ParamBlock* b : params()) {
    for (auto& v : b->value) v = rng.uniform(-scale, scale);
  }
}

std::vector<ParamBlock*> FactorizedTensorField::params() {
  return {&sig_vx, &sig_myz, &sig_vy, &sig_mxz, &sig_vz, &sig_mxy,
          &col_vx, &col_myz, &col_vy, &col_mxz, &col_vz, &col_mxy,
          &appearance};
}

namespace {

double lin1(const ParamBlock& v, int r, int n, const AxisInterp& a) {
  const double* base = &v.value[static_cast<std::size_t>(r) * n];
  return (1.0 - a.f) * base[a.i0] + a.f * base[a.i1];
}

// d/d(world coord) of lin1
double lin1_dx(const ParamBlock& v, int r, int n, const AxisInterp& a) {
  const double* base = &v.value[static_cast<std::size_t>(r) * n];
  return (base[a.i1] - base[a.i0]) * a.dscale;
}

void lin1_back(ParamBlock& v, int r, int n, const AxisInterp& a, double g) {
  double* base = &v.grad[static_cast<std::size_t>(r) * n];
  base[a.i0] += g * (1.0 - a.f);
  base[a.i1] += g * a.f;
}

// matrix over (a, b) stored row-major with b fastest
double bilin(const ParamBlock& m, int r, int na, int nb, const AxisInterp& a,
             const AxisInterp& b) {
  const double* base = &m.value[static_cast<std::size_t>(r) * na * nb];
  const double v00 = base[static_cast<std::size_t>(a.i0) * nb + b.i0];
  const double v01 = base[static_cast<std::size_t>(a.i0) * nb + b.i1];
  const double v10 = base[static_cast<std::size_t>(a.i1) * nb + b.i0];
  const double v11 = base[static_cast<std::size_t>(a.i1) * nb + b.i1];
  return (1 - a.f) * ((1 - b.f) * v00 + b.f * v01) +
         a.f * ((1 - b.f) * v10 + b.f * v11);
}

void bilin_grads(const ParamBlock& m, int r, int na, int nb, const AxisInterp& a,
                 const AxisInterp& b, double* da, double* db) {
  const double* base = &m.value[static_cast<std::size_t>(r) * na * nb];
  const double v00 = base[static_cast<std::size_t>(a.i0) * nb + b.i0];
  const double v01 = base[static_cast<std::size_t>(a.i0) * nb + b.i1];
  const double v10 = base[static_cast<std::size_t>(a.i1) * nb + b.i0];
  const double v11 = base[static_cast<std::size_t>(a.i1) * nb + b.i1];
  *da = ((1 - b.f) * (v10 - v00) + b.f * (v11 - v01)) * a.dscale;
  *db = ((1 - a.f) * (v01 - v00) + a.f * (v11 - v10)) * b.dscale;
}

void bilin_back(ParamBlock& m, int r, int na, int nb, const AxisInterp& a,
                const AxisInterp& b, double g) {
  double* base = &m.grad[static_cast<std::size_t>(r) * na * nb];
  base[static_cast<std::size_t>(a.i0) * nb + b.i0] += g * (1 - a.f) * (1 - b.f);
  base[static_cast<std::size_t>(a.i0) * nb + b.i1] += g * (1 - a.f) * b.f;
  base[static_cast<std::size_t>(a.i1) * nb + b.i0] += g * a.f * (1 - b.f);
  base[static_cast<std::size_t>(a.i1) * nb + b.i1] += g * a.f * b.f;
}

}  // namespace

double FactorizedTensorField::density_grid_value(const Eigen::Vector3d& p) const {
  const AxisInterp ax = axis_interp(p.x(), box_.min.x(), box_.max.x(), nx_);
  const AxisInterp ay = axis_interp(p.y(), box_.min.y(), box_.max.y(), ny_);
  const AxisInterp az = axis_interp(p.z(), box_.min.z(), box_.max.z(), nz_);
  double raw = 0.0;
  for (int r = 0; r < rank_sigma_; ++r) {
    raw += lin1(sig_vx, r, nx_, ax) * bilin(sig_myz, r, ny_, nz_, ay, az);
    raw += lin1(sig_vy, r, ny_, ay) * bilin(sig_mxz, r, nx_, nz_, ax, az);
    raw += lin1(sig_vz, r, nz_, az) * bilin(sig_mxy, r, nx_, ny_, ax, ay);
  }
  return raw;
}

std::vector<double> FactorizedTensorField::materialize_density_grid() const {
  std::vector<double> grid(static_cast<std::size_t>(nx_) * ny_ * nz_, 0.0);
  for (int r = 0; r < rank_sigma_; ++r) {
    for (int iz = 0; iz < nz_; ++iz) {
      for (int iy = 0; iy < ny_; ++iy) {
        for (int ix = 0; ix < nx_; ++ix) {
          const std::size_t gi =
              (static_cast<std::size_t>(iz) * ny_ + iy) * nx_ + ix;
          grid[gi] +=
              sig_vx.value[static_cast<std::size_t>(r) * nx_ + ix] *
                  sig_myz.value[(static_cast<std::size_t>(r) * ny_ + iy) * nz_ + iz] +
              sig_vy.value[static_cast<std::size_t>(r) * ny_ + iy] *
                  sig_mxz.value[(static_cast<std::size_t>(r) * nx_ + ix) * nz_ + iz] +
              sig_vz.value[static_cast<std::size_t>(r) * nz_ + iz] *
                  sig_mxy.value[(static_cast<std::size_t>(r) * nx_ + ix) * ny_ + iy];
        }
      }
    }
  }
  return grid;
}

void FactorizedTensorField::query(const Eigen::Vector3d& p, double* sigma,
                                  double* features, FieldQueryCache& cache) const {
  cache.p = p;
  cache.inside = box_.contains(p);
  if (!cache.inside) {
    *sigma = 0.0;
    std::fill(features, features + feature_dim_, 0.0);
    return;
  }
  const double raw = density_grid_value(p);
  cache.raw_density = raw;
  *sigma = sigma_max_ * sigmoid(raw);

  const AxisInterp ax = axis_interp(p.x(), box_.min.x(), box_.max.x(), nx_);
  const AxisInterp ay = axis_interp(p.y(), box_.min.y(), box_.max.y(), ny_);
  const AxisInterp az = axis_interp(p.z(), box_.min.z(), box_.max.z(), nz_);
  std::fill(features, features + feature_dim_, 0.0);
  for (int r = 0; r < rank_color_; ++r) {
    const double cx = lin1(col_vx, r, nx_, ax) * bilin(col_myz, r, ny_, nz_, ay, az);
    const double cy = lin1(col_vy, r, ny_, ay) * bilin(col_mxz, r, nx_, nz_, ax, az);
    const double cz = lin1(col_vz, r, nz_, az) * bilin(col_mxy, r, nx_, ny_, ax, ay);
    const double* a0 = &appearance.value[static_cast<std::size_t>(3 * r) * feature_dim_];
    for (int d = 0; d < feature_dim_; ++d) {
      features[d] += cx * a0[d] + cy * a0[feature_dim_ + d] +
                     cz * a0[2 * feature_dim_ + d];
    }
  }
}

void FactorizedTensorField::query_backward(const FieldQueryCache& cache,
                                           double d_sigma, const double* d_features,
                                           Eigen::Vector3d* d_p) {
  if (!cache.inside) return;
  const Eigen::Vector3d& p = cache.p;
  const AxisInterp ax = axis_interp(p.x(), box_.min.x(), box_.max.x(), nx_);
  const AxisInterp ay = axis_interp(p.y(), box_.min.y(), box_.max.y(), ny_);
  const AxisInterp az = axis_interp(p.z(), box_.min.z(), box_.max.z(), nz_);

  const double s = sigmoid(cache.raw_density);
  const double d_raw = d_sigma * sigma_max_ * s * (1.0 - s);

  if (d_raw != 0.0) {
    for (int r = 0; r < rank_sigma_; ++r) {
      const double vx = lin1(sig_vx, r, nx_, ax);
      const double myz = bilin(sig_myz, r, ny_, nz_, ay, az);
      lin1_back(sig_vx, r, nx_, ax, d_raw * myz);
      bilin_back(sig_myz, r, ny_, nz_, ay, az, d_raw * vx);

      const double vy = lin1(sig_vy, r, ny_, ay);
      const double mxz = bilin(sig_mxz, r, nx_, nz_, ax, az);
      lin1_back(sig_vy, r, ny_, ay, d_raw * mxz);
      bilin_back(sig_mxz, r, nx_, nz_, ax, az, d_raw * vy);

      const double vz = lin1(sig_vz, r, nz_, az);
      const double mxy = bilin(sig_mxy, r, nx_, ny_, ax, ay);
      lin1_back(sig_vz, r, nz_, az, d_raw * mxy);
      bilin_back(sig_mxy, r, nx_, ny_, ax, ay, d_raw * vz);

      if (d_p) {
        double dm_a, dm_b;
        d_p->x() += d_raw * lin1_dx(sig_vx, r, nx_, ax) * myz;
        bilin_grads(sig_myz, r, ny_, nz_, ay, az, &dm_a, &dm_b);
        d_p->y() += d_raw * vx * dm_a;
        d_p->z() += d_raw * vx * dm_b;

        d_p->y() += d_raw * lin1_dx(sig_vy, r, ny_, ay) * mxz;
        bilin_grads(sig_mxz, r, nx_, nz_, ax, az, &dm_a, &dm_b);
        d_p->x() += d_raw * vy * dm_a;
        d_p->z() += d_raw * vy * dm_b;

        d_p->z() += d_raw * lin1_dx(sig_vz, r, nz_, az) * mxy;
        bilin_grads(sig_mxy, r, nx_, ny_, ax, ay, &dm_a, &dm_b);
        d_p->x() += d_raw * vz * dm_a;
        d_p->y() += d_raw * vz * dm_b;
      }
    }
  }

  if (!d_features) return;
  for (int r = 0; r < rank_color_; ++r) {
    const double* a0 = &appearance.value[static_cast<std::size_t>(3 * r) * feature_dim_];
    double* ag = &appearance.grad[static_cast<std::size_t>(3 * r) * feature_dim_];
    double gx = 0, gy = 0, gz = 0;  // adjoints of the three per-axis products
    for (int d = 0; d < feature_dim_; ++d) {
      gx += d_features[d] * a0[d];
      gy += d_features[d] * a0[feature_dim_ + d];
      gz += d_features[d] * a0[2 * feature_dim_ + d];
    }
    const double vx = lin1(col_vx, r, nx_, ax);
    const double myz = bilin(col_myz, r, ny_, nz_, ay, az);
    const double vy = lin1(col_vy, r, ny_, ay);
    const double mxz = bilin(col_mxz, r, nx_, nz_, ax, az);
    const double vz = lin1(col_vz, r, nz_, az);
    const double mxy = bilin(col_mxy, r, nx_, ny_, ax, ay);

    const double px = vx * myz, py = vy * mxz, pz = vz * mxy;
    for (int d = 0; d < feature_dim_; ++d) {
      ag[d] += d_features[d] * px;
      ag[feature_dim_ + d] += d_features[d] * py;
      ag[2 * feature_dim_ + d] += d_features[d] * pz;
    }

    lin1_back(col_vx, r, nx_, ax, gx * myz);
    bilin_back(col_myz, r, ny_, nz_, ay, az, gx * vx);
    lin1_back(col_vy, r, ny_, ay, gy * mxz);
    bilin_back(col_mxz, r, nx_, nz_, ax, az, gy * vy);
    lin1_back(col_vz, r, nz_, az, gz * mxy);
    bilin_back(col_mxy, r, nx_, ny_, ax, ay, gz * vz);

    if (d_p) {
      double dm_a, dm_b;
      d_p->x() += gx * lin1_dx(col_vx, r, nx_, ax) * myz;
      bilin_grads(col_myz, r, ny_, nz_, ay, az, &dm_a, &dm_b);
      d_p->y() += gx * vx * dm_a;
      d_p->z() += gx * vx * dm_b;

      d_p->y() += gy * lin1_dx(col_vy, r, ny_, ay) * mxz;
      bilin_grads(col_mxz, r, nx_, nz_, ax, az, &dm_a, &dm_b);
      d_p->x() += gy * vy * dm_a;
      d_p->z() += gy * vy * dm_b;

      d_p->z() += gz * lin1_dx(col_vz, r, nz_, az) * mxy;
      bilin_grads(col_mxy, r, nx_, ny_, ax, ay, &dm_a, &dm_b);
      d_p->x() += gz * vz * dm_a;
      d_p->y() += gz * vz * dm_b;
    }
  }
}

// ---------------------------------------------------------------------------
// HashGridField

HashGridField::HashGridField(const BoundingBox& box, const Config& config)
    : box_(box), config_(config) {
  if ((config.table_size & (config.table_size - 1)) != 0) {
    throw Error("hash grid: table size must be a power of two");
  }
  tables.resize(config.levels);
  for (int l = 0; l < config.levels; ++l) {
    tables[l].name = "hash.table" + std::to_string(l);
    tables[l].resize(static_cast<std::size_t>(config.table_size) *
                     config.features_per_level);
  }
  density_decoder = Mlp("hash.density", config.levels * config.features_per_level,
                        config.hidden, 1 + config.feature_dim);
}

void HashGridField::init(Rng& rng, double scale) {
  for (auto& t : tables) {
    for (auto& v : t.value) v = rng.uniform(-scale, scale);
  }
  density_decoder.init(rng);
}

int HashGridField::level_resolution(int level) const {
  return static_cast<int>(
      std::round(config_.base_resolution * std::pow(config_.growth, level)));
}

std::uint32_t HashGridField::vertex_slot(int level, int ix, int iy, int iz) const {
  const std::int64_t res = level_resolution(level);
  const std::uint32_t mask = static_cast<std::uint32_t>(config_.table_size - 1);
  if (res * res * res <= config_.table_size) {
    return static_cast<std::uint32_t>((static_cast<std::int64_t>(iz) * res + iy) *
                                          res + ix) & mask;
  }
  // conventional spatial-hash primes; the first is 1 so nearby x differ
  constexpr std::uint32_t kPrimes[3] = {1u, 2654435761u, 805459861u};
  const std::uint32_t h = (static_cast<std::uint32_t>(ix) * kPrimes[0]) ^
                          (static_cast<std::uint32_t>(iy) * kPrimes[1]) ^
                          (static_cast<std::uint32_t>(iz) * kPrimes[2]);
  return h & mask;
}

void HashGridField::query(const Eigen::Vector3d& p, double* sigma, double* features,
                          FieldQueryCache& cache) const {
  cache.p = p;
  cache.inside = box_.contains(p);
  if (!cache.inside) {
    *sigma = 0.0;
    std::fill(features, features + config_.feature_dim, 0.0);
    return;
  }
  const int F = config_.features_per_level;
  const int in_dim = config_.levels * F;
  cache.scratch.assign(in_dim + config_.hidden + 1 + config_.feature_dim, 0.0);
  double* level_feat = cache.scratch.data();
  double* hidden_pre = level_feat + in_dim;
  double* raw_out = hidden_pre + config_.hidden;

  for (int l = 0; l < config_.levels; ++l) {
    const int res = level_resolution(l);
    const AxisInterp ax = axis_interp(p.x(), box_.min.x(), box_.max.x(), res);
    const AxisInterp ay = axis_interp(p.y(), box_.min.y(), box_.max.y(), res);
    const AxisInterp az = axis_interp(p.z(), box_.min.z(), box_.max.z(), res);
    for (int cz = 0; cz < 2; ++cz) {
      const int iz = cz ? az.i1 : az.i0;
      const double wz = cz ? az.f : 1.0 - az.f;
      for (int cy = 0; cy < 2; ++cy) {
        const int iy = cy ? ay.i1 : ay.i0;
        const double wy = cy ? ay.f : 1.0 - ay.f;
        for (int cx = 0; cx < 2; ++cx) {
          const int ix = cx ? ax.i1 : ax.i0;
          const double w = wz * wy * (cx ? ax.f : 1.0 - ax.f);
          const std::uint32_t slot = vertex_slot(l, ix, iy, iz);
          const double* entry = &tables[l].value[static_cast<std::size_t>(slot) * F];
          for (int f = 0; f < F; ++f) level_feat[l * F + f] += w * entry[f];
        }
      }
    }
  }

  density_decoder.forward(std::span<const double>(level_feat, in_dim),
                          std::span<double>(raw_out, 1 + config_.feature_dim),
                          std::span<double>(hidden_pre, config_.hidden));
  cache.raw_density = raw_out[0];
  *sigma = softplus(raw_out[0]);
  std::copy(raw_out + 1, raw_out + 1 + config_.feature_dim, features);
}

void HashGridField::query_backward(const FieldQueryCache& cache, double d_sigma,
                                   const double* d_features, Eigen::Vector3d* d_p) {
  if (!cache.inside) return;
  const int F = config_.features_per_level;
  const int in_dim = config_.levels * F;
  const double* level_feat = cache.scratch.data();
  const double* hidden_pre = level_feat + in_dim;

  thread_local std::vector<double> d_raw, d_level;
  d_raw.assign(1 + config_.feature_dim, 0.0);
  d_raw[0] = d_sigma * softplus_deriv(cache.raw_density);
  if (d_features) {
    for (int d = 0; d < config_.feature_dim; ++d) d_raw[1 + d] = d_features[d];
  }
  d_level.assign(in_dim, 0.0);
  density_decoder.backward(std::span<const double>(level_feat, in_dim),
                           std::span<const double>(hidden_pre, config_.hidden),
                           d_raw, d_level);

  const Eigen::Vector3d& p = cache.p;
  for (int l = 0; l < config_.levels; ++l) {
    const int res = level_resolution(l);
    const AxisInterp ax = axis_interp(p.x(), box_.min.x(), box_.max.x(), res);
    const AxisInterp ay = axis_interp(p.y(), box_.min.y(), box_.max.y(), res);
    const AxisInterp az = axis_interp(p.z(), box_.min.z(), box_.max.z(), res);
    for (int cz = 0; cz < 2; ++cz) {
      const int iz = cz ? az.i1 : az.i0;
      const double wz = cz ? az.f : 1.0 - az.f;
      const double dz_sign = cz ? 1.0 : -1.0;
      for (int cy = 0; cy < 2; ++cy) {
        const int iy = cy ? ay.i1 : ay.i0;
        const double wy = cy ? ay.f : 1.0 - ay.f;
        const double dy_sign = cy ? 1.0 : -1.0;
        for (int cx = 0; cx < 2; ++cx) {
          const int ix = cx ? ax.i1 : ax.i0;
          const double wx = cx ? ax.f : 1.0 - ax.f;
          const double dx_sign = cx ? 1.0 : -1.0;
          const double w = wz * wy * wx;
          const std::uint32_t slot = vertex_slot(l, ix, iy, iz);
          double* gentry = &tables[l].grad[static_cast<std::size_t>(slot) * F];
          const double* ventry =
              &tables[l].value[static_cast<std::size_t>(slot) * F];
          double corner_dot = 0.0;
          for (int f = 0; f < F; ++f) {
            gentry[f] += d_level[l * F + f] * w;
            corner_dot += d_level[l * F + f] * ventry[f];
          }
          if (d_p) {
            d_p->x() += corner_dot * dx_sign * wz * wy * ax.dscale;
            d_p->y() += corner_dot * dy_sign * wz * wx * ay.dscale;
            d_p->z() += corner_dot * dz_sign * wy * wx * az.dscale;
          }
        }
      }
    }
  }
}

std::vector<ParamBlock*> HashGridField::params() {
  std::vector<ParamBlock*> out;
  for (auto& t : tables) out.push_back(&t);
  for (ParamBlock* b : density_decoder.params()) out.push_back(b);
  return out;
}

// ---------------------------------------------------------------------------
// EncodedField

EncodedField::EncodedField(const BoundingBox& box, const Config& config)
    : box_(box), config_(config) {
  density_decoder = Mlp("encoded.density",
                        positional_encode_dim(3, 0, config.position_degrees),
                        config.hidden, 1 + config.feature_dim);
}

void EncodedField::init(Rng& rng) { density_decoder.init(rng); }

void EncodedField::query(const Eigen::Vector3d& p, double* sigma, double* features,
                         FieldQueryCache& cache) const {
  cache.p = p;
  cache.inside = box_.contains(p);
  if (!cache.inside) {
    *sigma = 0.0;
    std::fill(features, features + config_.feature_dim, 0.0);
    return;
  }
  const int in_dim = density_decoder.in_dim();
  thread_local std::vector<double> enc;
  // encode box-normalized coordinates in [-1, 1]
  const Eigen::Vector3d u = normalize_to_box(p, box_);
  const double pv[3] = {u.x(), u.y(), u.z()};
  positional_encode(std::span<const double>(pv, 3), 0, config_.position_degrees, enc);

  cache.scratch.assign(in_dim + config_.hidden + 1 + config_.feature_dim, 0.0);
  std::copy(enc.begin(), enc.end(), cache.scratch.begin());
  double* hidden_pre = cache.scratch.data() + in_dim;
  double* raw_out = hidden_pre + config_.hidden;
  density_decoder.forward(std::span<const double>(cache.scratch.data(), in_dim),
                          std::span<double>(raw_out, 1 + config_.feature_dim),
                          std::span<double>(hidden_pre, config_.hidden));
  cache.raw_density = raw_out[0];
  *sigma = softplus(raw_out[0]);
  std::copy(raw_out + 1, raw_out + 1 + config_.feature_dim, features);
}

void EncodedField::query_backward(const FieldQueryCache& cache, double d_sigma,
                                  const double* d_features, Eigen::Vector3d* d_p) {
  if (!cache.inside) return;
  const int in_dim = density_decoder.in_dim();
  const double* enc = cache.scratch.data();
  const double* hidden_pre = enc + in_dim;

  thread_local std::vector<double> d_raw, d_enc;
  d_raw.assign(1 + config_.feature_dim, 0.0);
  d_raw[0] = d_sigma * softplus_deriv(cache.raw_density);
  if (d_features) {
    for (int d = 0; d < config_.feature_dim; ++d) d_raw[1 + d] = d_features[d];
  }
  if (d_p) {
    d_enc.assign(in_dim, 0.0);
    density_decoder.backward(std::span<const double>(enc, in_dim),
                             std::span<const double>(hidden_pre, config_.hidden),
                             d_raw, d_enc);
    const Eigen::Vector3d u = normalize_to_box(cache.p, box_);
    const double pv[3] = {u.x(), u.y(), u.z()};
    double dp[3] = {0, 0, 0};
    positional_encode_backward(std::span<const double>(pv, 3), 0,
                               config_.position_degrees, d_enc,
                               std::span<double>(dp, 3));
    // chain through the box normalization
    d_p->x() += dp[0] * 2.0 / (box_.max.x() - box_.min.x());
    d_p->y() += dp[1] * 2.0 / (box_.max.y() - box_.min.y());
    d_p->z() += dp[2] * 2.0 / (box_.max.z() - box_.min.z());
  } else {
    density_decoder.backward(std::span<const double>(enc, in_dim),
                             std::span<const double>(hidden_pre, config_.hidden),
                             d_raw, {});
  }
}

// ---------------------------------------------------------------------------
// HexPlaneMotionField

HexPlaneMotionField::HexPlaneMotionField(const BoundingBox& box, double t_min,
                                         double t_max, const Config& config)
    : box_(box), t_min_(t_min), t_max_(t_max), config_(config) {
  const int levels = static_cast<int>(config.spatial_resolutions.size());
  planes.resize(levels);
  static const char* kPlaneNames[6] = {"xy", "yz", "xz", "xt", "yt", "zt"};
  for (int l = 0; l < levels; ++l) {
    const int rs = config.spatial_resolutions[l];
    const int rt = config.time_resolutions[l];
    const int res_a[6] = {rs, rs, rs, rs, rs, rs};
    const int res_b[6] = {rs, rs, rs, rt, rt, rt};
    for (int pl = 0; pl < 6; ++pl) {
      planes[l][pl].name = "hexplane.l" + std::to_string(l) + "." + kPlaneNames[pl];
      planes[l][pl].resize(static_cast<std::size_t>(res_a[pl]) * res_b[pl] *
                           config.features);
    }
  }
  decoder = MotionDecoder(config.features, config.hidden);
}

void HexPlaneMotionField::init(Rng& rng, double scale) {
  // Features initialized around 1 so the six-way Hadamard product starts
  // near 1 rather than collapsing to ~0.
  for (auto& level : planes) {
    for (auto& plane : level) {
      for (auto& v : plane.value) v = 1.0 + rng.uniform(-scale, scale);
    }
  }
  decoder.init(rng);
  // Zero the output layer so the initial motion is exactly zero.
  std::fill(decoder.mlp().w2.value.begin(), decoder.mlp().w2.value.end(), 0.0);
  std::fill(decoder.mlp().b2.value.begin(), decoder.mlp().b2.value.end(), 0.0);
}

namespace {

// plane axes: {0,1},{1,2},{0,2},{0,3},{1,3},{2,3} over (x, y, z, t)
constexpr int kPlaneAxisA[6] = {0, 1, 0, 0, 1, 2};
constexpr int kPlaneAxisB[6] = {1, 2, 2, 3, 3, 3};

}  // namespace

Eigen::Vector3d HexPlaneMotionField::query(const Eigen::Vector3d& p, double t,
                                           QueryCache& cache) const {
  cache.p = p;
  cache.t = t;
  cache.inside = box_.contains(p);
  const int F = config_.features;
  const int levels = this->levels();
  cache.feature.assign(F, 0.0);
  cache.plane_values.assign(static_cast<std::size_t>(levels) * 6 * F, 0.0);
  Eigen::Vector3d delta = Eigen::Vector3d::Zero();
  if (!cache.inside) return delta;

  const double coords[4] = {p.x(), p.y(), p.z(), t};
  const double lo[4] = {box_.min.x(), box_.min.y(), box_.min.z(), t_min_};
  const double hi[4] = {box_.max.x(), box_.max.y(), box_.max.z(), t_max_};

  for (int l = 0; l < levels; ++l) {
    const int rs = config_.spatial_resolutions[l];
    const int rt = config_.time_resolutions[l];
    double* pv = &cache.plane_values[static_cast<std::size_t>(l) * 6 * F];
    for (int pl = 0; pl < 6; ++pl) {
      const int axis_a = kPlaneAxisA[pl];
      const int axis_b = kPlaneAxisB[pl];
      const int na = rs;
      const int nb = axis_b == 3 ? rt : rs;
      const AxisInterp a = axis_interp(coords[axis_a], lo[axis_a], hi[axis_a], na);
      const AxisInterp b = axis_interp(coords[axis_b], lo[axis_b], hi[axis_b], nb);
      const double* base = planes[l][pl].value.data();
      for (int f = 0; f < F; ++f) {
        const auto at = [&](int ia, int ib) {
          return base[(static_cast<std::size_t>(ia) * nb + ib) * F + f];
        };
        pv[pl * F + f] = (1 - a.f) * ((1 - b.f) * at(a.i0, b.i0) + b.f * at(a.i0, b.i1)) +
                         a.f * ((1 - b.f) * at(a.i1, b.i0) + b.f * at(a.i1, b.i1));
      }
    }
    for (int f = 0; f < F; ++f) {
      double prod = 1.0;
      for (int pl = 0; pl < 6; ++pl) prod *= pv[pl * F + f];
      cache.feature[f] += prod;
    }
  }

  double d[3];
  decoder.forward(cache.feature, d, cache.decoder_ws);
  delta = Eigen::Vector3d(d[0], d[1], d[2]);
  return delta;
}

void HexPlaneMotionField::query_backward(const QueryCache& cache,
                                         const Eigen::Vector3d& d_delta) {
  if (!cache.inside) return;
  const int F = config_.features;
  thread_local std::vector<double> d_feature;
  d_feature.assign(F, 0.0);
  const double dd[3] = {d_delta.x(), d_delta.y(), d_delta.z()};
  decoder.backward(cache.feature, cache.decoder_ws, dd, d_feature);

  const double coords[4] = {cache.p.x(), cache.p.y(), cache.p.z(), cache.t};
  const double lo[4] = {box_.min.x(), box_.min.y(), box_.min.z(), t_min_};
  const double hi[4] = {box_.max.x(), box_.max.y(), box_.max.z(), t_max_};

  for (int l = 0; l < levels(); ++l) {
    const int rs = config_.spatial_resolutions[l];
    const int rt = config_.time_resolutions[l];
    const double* pv = &cache.plane_values[static_cast<std::size_t>(l) * 6 * F];
    for (int pl = 0; pl < 6; ++pl) {
      const int axis_a = kPlaneAxisA[pl];
      const int axis_b = kPlaneAxisB[pl];
      const int na = rs;
      const int nb = axis_b == 3 ? rt : rs;
      const AxisInterp a = axis_interp(coords[axis_a], lo[axis_a], hi[axis_a], na);
      const AxisInterp b = axis_interp(coords[axis_b], lo[axis_b], hi[axis_b], nb);
      double* gbase = planes[l][pl].grad.data();
      for (int f = 0; f < F; ++f) {
        // product of the other five plane values
        double others = 1.0;
        for (int q = 0; q < 6; ++q) {
          if (q != pl) others *= pv[q * F + f];
        }
        const double g = d_feature[f] * others;
        if (g == 0.0) continue;
        const auto gat = [&](int ia, int ib) -> double& {
          return gbase[(static_cast<std::size_t>(ia) * nb + ib) * F + f];
        };
        gat(a.i0, b.i0) += g * (1 - a.f) * (1 - b.f);
        gat(a.i0, b.i1) += g * (1 - a.f) * b.f;
        gat(a.i1, b.i0) += g * a.f * (1 - b.f);
        gat(a.i1, b.i1) += g * a.f * b.f;
      }
    }
  }
}

std::vector<ParamBlock*> HexPlaneMotionField::params() {
  std::vector<ParamBlock*> out;
  for (auto& level : planes) {
    for (auto& plane : level) out.push_back(&plane);
  }
  for (ParamBlock* b : decoder.params()) out.push_back(b);
  return out;
}

// ---------------------------------------------------------------------------
// RadianceModel and augmentations

std::vector<ParamBlock*> RadianceModel::params() {
  std::vector<ParamBlock*> out = field ? field->params() : std::vector<ParamBlock*>{};
  for (ParamBlock* b : color.params()) out.push_back(b);
  return out;
}

void RadianceModel::zero_grad() {
  for (ParamBlock* b : params()) b->zero_grad();
}

AugmentationKind augmentation_kind_from_string(const std::string& s) {
  if (s == "smoothing") return AugmentationKind::Smoothing;
  if (s == "lambertian") return AugmentationKind::Lambertian;
  if (s == "tensor_simple") return AugmentationKind::TensorSimple;
  if (s == "hash_simple") return AugmentationKind::HashSimple;
  throw Error("unknown augmentation kind: " + s);
}

std::string to_string(AugmentationKind kind) {
  switch (kind) {
    case AugmentationKind::Smoothing: return "smoothing";
    case AugmentationKind::Lambertian: return "lambertian";
    case AugmentationKind::TensorSimple: return "tensor_simple";
    case AugmentationKind::HashSimple: return "hash_simple";
  }
  return "?";
}

RadianceModel make_augmented(const RadianceModel& main, AugmentationKind kind,
                             const AugmentationOptions& options) {
  if (!main.field) throw Error("make_augmented: empty model");
  Rng rng = Rng::keyed(options.seed, 0x617567u, static_cast<std::uint64_t>(kind));
  const FieldFamily family = main.field->family();
  RadianceModel aug;

  switch (kind) {
    case AugmentationKind::Smoothing: {
      if (family != FieldFamily::Encoded) {
        throw IncompatibleKind("smoothing augmentation requires an encoded field");
      }
      const auto* f = static_cast<const EncodedField*>(main.field.get());
      EncodedField::Config cfg = f->config();
      const int full_degrees = cfg.position_degrees;
      cfg.position_degrees = options.smoothing_split_degree;
      auto reduced = std::make_unique<EncodedField>(f->box(), cfg);
      reduced->init(rng);
      ColorDecoder::Config ccfg = main.color.config();
      // residual frequencies gamma(p, l_p^s, l_p) route to the color decoder
      ccfg.residual_d1 = options.smoothing_split_degree;
      ccfg.residual_d2 = full_degrees;
      aug.field = std::move(reduced);
      aug.color = ColorDecoder(ccfg);
      aug.color.init(rng);
      return aug;
    }
    case AugmentationKind::Lambertian: {
      aug.field = main.field->clone();
      // fresh parameters, same shapes
      for (ParamBlock* b : aug.field->params()) {
        for (auto& v : b->value) v = rng.uniform(-1e-2, 1e-2);
      }
      if (family == FieldFamily::Encoded || family == FieldFamily::HashGrid) {
        // decoder-backed densities get a proper fan-in init instead
        if (family == FieldFamily::Encoded) {
          static_cast<EncodedField*>(aug.field.get())->init(rng);
        } else {
          auto* h = static_cast<HashGridField*>(aug.field.get());
          for (auto& t : h->tables) {
            for (auto& v : t.value) v = rng.uniform(-1e-2, 1e-2);
          }
          h->density_decoder.init(rng);
        }
      }
      ColorDecoder::Config ccfg = main.color.config();
      ccfg.view_dependent = false;
      aug.color = ColorDecoder(ccfg);
      aug.color.init(rng);
      return aug;
    }
    case AugmentationKind::TensorSimple: {
      if (family != FieldFamily::FactorizedTensor) {
        throw IncompatibleKind("tensor_simple augmentation requires a factorized tensor field");
      }
      const auto* f = static_cast<const FactorizedTensorField*>(main.field.get());
      BoundingBox box = f->box();
      box.min.z() += options.tensor_near_raise * (box.max.z() - box.min.z());
      const int rank_s = std::max(
          1, static_cast<int>(std::round(f->rank_sigma() * options.tensor_rank_scale)));
      const int nx = std::max(2, f->nx() / options.tensor_res_divisor);
      const int ny = std::max(2, f->ny() / options.tensor_res_divisor);
      const int nz = std::max(2, f->nz() / options.tensor_res_divisor);
      auto reduced = std::make_unique<FactorizedTensorField>(
          box, nx, ny, nz, rank_s, f->rank_color(), f->feature_dim(), f->sigma_max());
      reduced->init(rng);
      aug.field = std::move(reduced);
      aug.color = ColorDecoder(main.color.config());
      aug.color.init(rng);
      return aug;
    }
    case AugmentationKind::HashSimple: {
      if (family != FieldFamily::HashGrid) {
        throw IncompatibleKind("hash_simple augmentation requires a hash grid field");
      }
      const auto* f = static_cast<const HashGridField*>(main.field.get());
      HashGridField::Config cfg = f->config();
      cfg.table_size = std::max(16, cfg.table_size >> options.hash_table_shift);
      cfg.s_near = options.hash_s_near;
      auto reduced = std::make_unique<HashGridField>(f->box(), cfg);
      reduced->init(rng);
      aug.field = std::move(reduced);
      aug.color = ColorDecoder(main.color.config());
      aug.color.init(rng);
      return aug;
    }
  }
  throw Error("make_augmented: unreachable");
}

}  // namespace sparseview
