// Copyright Contributors to the SparseView Project
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>
#include <set>

#include "sparseview/fields.hpp"
#include "sparseview/trainer.hpp"

using namespace sparseview;

namespace {

const BoundingBox kBox{Eigen::Vector3d(-1, -1, 2), Eigen::Vector3d(1, 1, 4)};

// independent trilinear interpolation over a dense vertex grid
double dense_trilinear(const std::vector<double>& grid, int n,
                       const BoundingBox& box, const Eigen::Vector3d& p) {
  auto coord = [&](double v, double lo, double hi) {
    return (v - lo) / (hi - lo) * (n - 1);
  };
  const double cx = coord(p.x(), box.min.x(), box.max.x());
  const double cy = coord(p.y(), box.min.y(), box.max.y());
  const double cz = coord(p.z(), box.min.z(), box.max.z());
  const int x0 = std::min(static_cast<int>(cx), n - 2);
  const int y0 = std::min(static_cast<int>(cy), n - 2);
  const int z0 = std::min(static_cast<int>(cz), n - 2);
  const double fx = cx - x0, fy = cy - y0, fz = cz - z0;
  double acc = 0.0;
  for (int dz = 0; dz < 2; ++dz) {
    for (int dy = 0; dy < 2; ++dy) {
      for (int dx = 0; dx < 2; ++dx) {
        const double w = (dx ? fx : 1 - fx) * (dy ? fy : 1 - fy) * (dz ? fz : 1 - fz);
        acc += w * grid[((z0 + dz) * n + (y0 + dy)) * n + (x0 + dx)];
      }
    }
  }
  return acc;
}

}  // namespace

TEST_SUITE("fields") {

TEST_CASE("positional encoding values and dimensions") {
  std::vector<double> out;
  const double x0[1] = {0.0};
  positional_encode(std::span<const double>(x0, 1), 0, 3, out);
  REQUIRE(static_cast<int>(out.size()) == positional_encode_dim(1, 0, 3));
  CHECK(out[0] == 0.0);  // raw value prepended when d1 == 0
  for (int d = 0; d < 3; ++d) {
    CHECK(out[1 + 2 * d] == doctest::Approx(0.0));  // sin
    CHECK(out[2 + 2 * d] == doctest::Approx(1.0));  // cos
  }

  const double xpi[1] = {3.14159265358979323846 / 2.0};
  positional_encode(std::span<const double>(xpi, 1), 0, 1, out);
  REQUIRE(out.size() == 3);
  CHECK(out[0] == doctest::Approx(xpi[0]));
  CHECK(out[1] == doctest::Approx(1.0));
  CHECK(out[2] == doctest::Approx(0.0).epsilon(1e-12));

  CHECK(positional_encode_dim(1, 2, 5) == 2 * 3);
  CHECK(positional_encode_dim(3, 0, 4) == 3 * (2 * 4 + 1));
  CHECK_THROWS_AS(positional_encode(std::span<const double>(x0, 1), 3, 3, out),
                  InvalidRange);
  CHECK_THROWS_AS(positional_encode(std::span<const double>(x0, 1), 4, 2, out),
                  InvalidRange);
}

TEST_CASE("factorized field with zero components sits at half max density") {
  FactorizedTensorField field(kBox, 6, 6, 6, 2, 2, 4, 200.0);
  double sigma = 0.0;
  double feat[4];
  FieldQueryCache cache;
  field.query(Eigen::Vector3d(0.2, -0.3, 3.1), &sigma, feat, cache);
  CHECK(sigma == doctest::Approx(100.0));  // sigma_max / 2
}

TEST_CASE("factorized query matches the dense reconstruction oracle") {
  Rng rng(17);
  FactorizedTensorField field(kBox, 12, 12, 12, 3, 2, 4, 200.0);
  field.init(rng, 0.5);
  const std::vector<double> dense = field.materialize_density_grid();
  for (int i = 0; i < 500; ++i) {
    const Eigen::Vector3d p(rng.uniform(-0.99, 0.99), rng.uniform(-0.99, 0.99),
                            rng.uniform(2.01, 3.99));
    const double factored = field.density_grid_value(p);
    const double oracle = dense_trilinear(dense, 12, kBox, p);
    CHECK(std::abs(factored - oracle) < 1e-9);
  }
}

TEST_CASE("hash slot of the origin vertex is zero at every level") {
  HashGridField::Config cfg;
  cfg.levels = 3;
  cfg.table_size = 256;
  HashGridField field(kBox, cfg);
  for (int l = 0; l < cfg.levels; ++l) {
    CHECK(field.vertex_slot(l, 0, 0, 0) == 0);
  }
}

TEST_CASE("hash indexing is injective when the level fits the table") {
  HashGridField::Config cfg;
  cfg.levels = 1;
  cfg.base_resolution = 4;  // 64 vertices
  cfg.table_size = 64;
  HashGridField field(kBox, cfg);
  std::set<std::uint32_t> slots;
  for (int z = 0; z < 4; ++z) {
    for (int y = 0; y < 4; ++y) {
      for (int x = 0; x < 4; ++x) slots.insert(field.vertex_slot(0, x, y, z));
    }
  }
  CHECK(slots.size() == 64);
}

TEST_CASE("hash queries are deterministic") {
  HashGridField::Config cfg;
  HashGridField field(kBox, cfg);
  Rng rng(3);
  field.init(rng);
  const Eigen::Vector3d p(0.37, -0.21, 3.3);
  double s1, s2;
  std::vector<double> f1(cfg.feature_dim), f2(cfg.feature_dim);
  FieldQueryCache c1, c2;
  field.query(p, &s1, f1.data(), c1);
  field.query(p, &s2, f2.data(), c2);
  CHECK(s1 == s2);
  CHECK(f1 == f2);
}

TEST_CASE("lambertian decoder ignores the view direction") {
  ColorDecoder::Config cfg;
  cfg.feature_dim = 4;
  cfg.view_dependent = false;
  ColorDecoder dec(cfg);
  Rng rng(5);
  dec.init(rng);
  const std::vector<double> h = {0.1, -0.2, 0.3, 0.4};
  const double v1[3] = {0, 0, 1}, v2[3] = {0, 0, -1};
  ColorDecoder::Workspace ws;
  const auto a = dec.forward(h, v1, nullptr, 0.0, ws);
  const auto b = dec.forward(h, v2, nullptr, 0.0, ws);
  for (int c = 0; c < 3; ++c) CHECK(a.rgb[c] == b.rgb[c]);
}

TEST_CASE("zero decoder outputs mid gray") {
  ColorDecoder::Config cfg;
  cfg.feature_dim = 4;
  ColorDecoder dec(cfg);  // weights default to zero
  const std::vector<double> h = {0.5, 0.5, 0.5, 0.5};
  const double v[3] = {0, 0, 1};
  ColorDecoder::Workspace ws;
  const auto out = dec.forward(h, v, nullptr, 0.0, ws);
  for (int c = 0; c < 3; ++c) CHECK(out.rgb[c] == doctest::Approx(0.5));
}

TEST_CASE("decoder rgb gradient matches finite differences") {
  ColorDecoder::Config cfg;
  cfg.feature_dim = 3;
  cfg.view_degrees = 2;
  ColorDecoder dec(cfg);
  Rng rng(9);
  dec.init(rng);
  const std::vector<double> h = {0.2, -0.4, 0.6};
  double v[3] = {0.0, 0.6, 0.8};
  ColorDecoder::Workspace ws;

  auto loss = [&]() {
    const auto out = dec.forward(h, v, nullptr, 0.0, ws);
    return 0.3 * out.rgb[0] + 0.5 * out.rgb[1] - 0.2 * out.rgb[2];
  };
  loss();
  for (ParamBlock* b : dec.params()) b->zero_grad();
  const double d_rgb[3] = {0.3, 0.5, -0.2};
  dec.backward(ws, d_rgb, 0.0, {});

  Rng pick(31);
  for (ParamBlock* b : dec.params()) {
    for (int probe = 0; probe < 10; ++probe) {
      const int i = pick.uniform_int(static_cast<int>(b->size()));
      const double saved = b->value[i];
      b->value[i] = saved + 1e-5;
      const double up = loss();
      b->value[i] = saved - 1e-5;
      const double down = loss();
      b->value[i] = saved;
      const double fd = (up - down) / 2e-5;
      CHECK(std::abs(b->grad[i] - fd) <
            1e-4 * std::max({1e-3, std::abs(fd), std::abs(b->grad[i])}));
    }
  }
}

TEST_CASE("motion field with zero output layer maps to identity") {
  HexPlaneMotionField::Config cfg;
  cfg.spatial_resolutions = {4};
  cfg.time_resolutions = {4};
  cfg.features = 3;
  HexPlaneMotionField field(kBox, 0.0, 1.0, cfg);
  Rng rng(2);
  field.init(rng);  // output layer zeroed by init
  HexPlaneMotionField::QueryCache cache;
  const Eigen::Vector3d delta = field.query(Eigen::Vector3d(0.1, 0.2, 3.0), 0.5, cache);
  CHECK(delta.norm() == 0.0);
}

TEST_CASE("hadamard product annihilates when one plane is zero") {
  HexPlaneMotionField::Config cfg;
  cfg.spatial_resolutions = {4};
  cfg.time_resolutions = {4};
  cfg.features = 2;
  HexPlaneMotionField field(kBox, 0.0, 1.0, cfg);
  Rng rng(2);
  field.init(rng);
  std::fill(field.planes[0][2].value.begin(), field.planes[0][2].value.end(), 0.0);
  HexPlaneMotionField::QueryCache cache;
  field.query(Eigen::Vector3d(0.1, 0.2, 3.0), 0.5, cache);
  for (const double f : cache.feature) CHECK(f == 0.0);
}

TEST_CASE("augmentation defaults follow the published splits") {
  // l_p = 10, l_v = 4, l_p^s = 3
  optim::FieldConfig fc;
  CHECK(fc.position_degrees == 10);
  CHECK(fc.view_degrees == 4);
  AugmentationOptions opts;
  CHECK(opts.smoothing_split_degree == 3);
  CHECK(opts.hash_s_near == doctest::Approx(0.3));

  // smoothing: the reduced model encodes up to l_p^s and routes the residual
  // frequencies to the color decoder
  EncodedField::Config ec;
  ec.position_degrees = 10;
  ec.feature_dim = 4;
  RadianceModel main;
  main.field = std::make_unique<EncodedField>(kBox, ec);
  ColorDecoder::Config cc;
  cc.feature_dim = 4;
  main.color = ColorDecoder(cc);
  const RadianceModel smooth = make_augmented(main, AugmentationKind::Smoothing, opts);
  CHECK(static_cast<const EncodedField*>(smooth.field.get())->config().position_degrees == 3);
  CHECK(smooth.color.config().residual_d1 == 3);
  CHECK(smooth.color.config().residual_d2 == 10);

  const RadianceModel lamb = make_augmented(main, AugmentationKind::Lambertian, opts);
  CHECK(!lamb.color.config().view_dependent);

  // tensor: R_sigma 24 -> 12 and per-axis resolution divided by 4
  RadianceModel tensor_main;
  tensor_main.field =
      std::make_unique<FactorizedTensorField>(kBox, 16, 16, 16, 24, 4, 4, 200.0);
  tensor_main.color = ColorDecoder(cc);
  const RadianceModel ts =
      make_augmented(tensor_main, AugmentationKind::TensorSimple, opts);
  const auto* tsf = static_cast<const FactorizedTensorField*>(ts.field.get());
  CHECK(tsf->rank_sigma() == 12);
  CHECK(tsf->nx() == 4);
  CHECK(tsf->box().min.z() > tensor_main.field->box().min.z());

  // hash: T = 2^21 -> 2^11 and s_near = 0.3
  HashGridField::Config hc;
  hc.levels = 1;
  hc.features_per_level = 1;
  hc.feature_dim = 4;
  hc.table_size = 1 << 21;
  RadianceModel hash_main;
  hash_main.field = std::make_unique<HashGridField>(kBox, hc);
  hash_main.color = ColorDecoder(cc);
  const RadianceModel hs =
      make_augmented(hash_main, AugmentationKind::HashSimple, opts);
  const auto* hsf = static_cast<const HashGridField*>(hs.field.get());
  CHECK(hsf->config().table_size == (1 << 11));
  CHECK(hsf->config().s_near == doctest::Approx(0.3));
}

TEST_CASE("incompatible augmentation kinds are rejected") {
  RadianceModel voxel;
  voxel.field = std::make_unique<VoxelField>(kBox, 4, 4, 4, 4);
  ColorDecoder::Config cc;
  cc.feature_dim = 4;
  voxel.color = ColorDecoder(cc);
  AugmentationOptions opts;
  CHECK_THROWS_AS(make_augmented(voxel, AugmentationKind::TensorSimple, opts),
                  IncompatibleKind);
  CHECK_THROWS_AS(make_augmented(voxel, AugmentationKind::HashSimple, opts),
                  IncompatibleKind);
  CHECK_THROWS_AS(make_augmented(voxel, AugmentationKind::Smoothing, opts),
                  IncompatibleKind);
}

TEST_CASE("density vanishes outside the bounding box") {
  Rng rng(4);
  VoxelField field(kBox, 5, 5, 5, 2);
  field.init(rng, 0.5);
  double sigma = -1;
  double feat[2];
  FieldQueryCache cache;
  field.query(Eigen::Vector3d(5, 5, 5), &sigma, feat, cache);
  CHECK(sigma == 0.0);
  CHECK(feat[0] == 0.0);
}

TEST_CASE("field queries are continuous across voxel faces") {
  Rng rng(8);
  VoxelField field(kBox, 5, 5, 5, 2);
  field.init(rng, 1e-2);
  // a voxel face sits at x = 0 for a 5-vertex grid over [-1, 1]
  double s_lo, s_hi;
  double feat[2];
  FieldQueryCache cache;
  field.query(Eigen::Vector3d(-1e-6, 0.1, 3.0), &s_lo, feat, cache);
  field.query(Eigen::Vector3d(1e-6, 0.1, 3.0), &s_hi, feat, cache);
  CHECK(std::abs(s_hi - s_lo) < 1e-5);

  FactorizedTensorField tf(kBox, 6, 6, 6, 2, 2, 2, 200.0);
  tf.init(rng, 1e-2);
  tf.query(Eigen::Vector3d(0.1, -1e-6, 3.0), &s_lo, feat, cache);
  tf.query(Eigen::Vector3d(0.1, 1e-6, 3.0), &s_hi, feat, cache);
  CHECK(std::abs(s_hi - s_lo) < 1e-5);
}

TEST_CASE("checkpoint parameters survive the augmented clone") {
  // fresh parameters, not shared storage
  RadianceModel main;
  main.field = std::make_unique<VoxelField>(kBox, 4, 4, 4, 4);
  ColorDecoder::Config cc;
  cc.feature_dim = 4;
  main.color = ColorDecoder(cc);
  Rng rng(1);
  static_cast<VoxelField*>(main.field.get())->init(rng);
  main.color.init(rng);
  AugmentationOptions opts;
  RadianceModel aug = make_augmented(main, AugmentationKind::Lambertian, opts);
  aug.params()[0]->value[0] = 123.0;
  CHECK(main.params()[0]->value[0] != 123.0);
}

}  // TEST_SUITE
