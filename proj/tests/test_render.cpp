// Copyright Contributors to the SparseView Project
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "sparseview/render.hpp"

using namespace sparseview;

namespace {

const BoundingBox kBox{Eigen::Vector3d(-2, -2, 1), Eigen::Vector3d(2, 2, 6)};

RadianceModel test_model(double param_scale, std::uint64_t seed) {
  Rng rng(seed);
  RadianceModel m;
  auto field = std::make_unique<VoxelField>(kBox, 6, 6, 6, 4);
  field->init(rng, param_scale);
  m.field = std::move(field);
  ColorDecoder::Config cc;
  cc.feature_dim = 4;
  cc.view_degrees = 2;
  cc.visibility_head = true;
  m.color = ColorDecoder(cc);
  m.color.init(rng);
  return m;
}

}  // namespace

TEST_SUITE("render") {

TEST_CASE("transmittance of empty space is one") {
  const std::vector<double> sigma(8, 0.0), delta(8, 0.5);
  const auto T = render::transmittance(sigma, delta);
  for (const double t : T) CHECK(t == 1.0);
}

TEST_CASE("single ln2 segment halves the next transmittance") {
  const std::vector<double> sigma = {std::log(2.0), 1.0};
  const std::vector<double> delta = {1.0, 1.0};
  const auto T = render::transmittance(sigma, delta);
  CHECK(T[0] == 1.0);
  CHECK(T[1] == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("transmittance matches the cumulative product oracle") {
  Rng rng(7);
  std::vector<double> sigma(32), delta(32);
  for (int i = 0; i < 32; ++i) {
    sigma[i] = rng.uniform(0.0, 4.0);
    delta[i] = rng.uniform(0.01, 0.3);
  }
  const auto T = render::transmittance(sigma, delta);
  double prod = 1.0;
  for (int i = 0; i < 32; ++i) {
    CHECK(std::abs(T[i] - prod) < 1e-12);
    prod *= std::exp(-delta[i] * sigma[i]);
  }
}

TEST_CASE("two-sample weights split evenly for ln2 then opaque") {
  const std::vector<double> sigma = {std::log(2.0), 1e4};
  const std::vector<double> delta = {1.0, 1.0};
  const auto w = render::render_weights(sigma, delta);
  CHECK(w[0] == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(w[1] == doctest::Approx(0.5).epsilon(1e-9));
}

TEST_CASE("zero density yields zero weights") {
  const std::vector<double> sigma(8, 0.0), delta(8, 0.5);
  for (const double w : render::render_weights(sigma, delta)) CHECK(w == 0.0);
}

TEST_CASE("weights telescope to one minus final transmittance") {
  Rng rng(13);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> sigma(24), delta(24);
    double acc = 0.0;
    for (int i = 0; i < 24; ++i) {
      sigma[i] = rng.uniform(0.0, 6.0);
      delta[i] = rng.uniform(0.01, 0.4);
      acc += sigma[i] * delta[i];
    }
    const auto w = render::render_weights(sigma, delta);
    double sum = 0.0;
    for (const double wi : w) sum += wi;
    CHECK(std::abs(sum - (1.0 - std::exp(-acc))) < 1e-12);
  }
}

TEST_CASE("composite blends payloads by weight") {
  const std::vector<double> w = {0.5, 0.5};
  CHECK(render::composite(std::vector<double>{1.0, 0.0}, w) == doctest::Approx(0.5));
  CHECK(render::composite(std::vector<double>{0.0, 1.0}, w) == doctest::Approx(0.5));
  const std::vector<double> onehot = {0.0, 1.0, 0.0};
  CHECK(render::composite(std::vector<double>{3.0, 7.0, 9.0}, onehot) ==
        doctest::Approx(7.0));
}

TEST_CASE("opaque surface recovers color and depth within a sample spacing") {
  RadianceModel m = test_model(1e-3, 21);
  // plant an opaque slab at z ~ 3.5 by lifting the density grid row
  auto* field = static_cast<VoxelField*>(m.field.get());
  const int nz = field->nz();
  for (int i = 0; i < 6 * 6; ++i) {
    field->density().value[3 * 36 + i] = 1e5;  // z-slice index 3 of 6 over [1,6]
  }
  const Camera cam = Camera::pinhole(40, 40, 16, 12, 32, 24);
  const Ray ray = make_ray(cam, Eigen::Vector2d(16, 12));
  const SampleSet samples = sample_stratified(1.0, 6.0, 64, nullptr);
  render::RayWorkspace ws;
  render::RenderContext ctx;
  const auto res = render_ray(m, ray, samples, ctx, ws);
  // slab plane z = 1 + 3/5 * 5 = 4.0
  const double spacing = 5.0 / 64;
  CHECK(std::abs(res.depth - 4.0) < 2 * spacing + 1e-9);
  CHECK(res.weight_sum == doctest::Approx(1.0).epsilon(1e-6));
  (void)nz;
}

TEST_CASE("empty field secondary visibility is one and t' is the weight sum") {
  RadianceModel m = test_model(0.0, 3);  // zero params: sigma = softplus(0) small
  auto* field = static_cast<VoxelField*>(m.field.get());
  std::fill(field->density().value.begin(), field->density().value.end(), -60.0);
  const Camera cam = Camera::pinhole(40, 40, 16, 12, 32, 24);
  Camera sec = cam;
  sec.T(0, 3) = 0.5;
  const Ray ray = make_ray(cam, Eigen::Vector2d(10, 12));
  const SampleSet samples = sample_stratified(1.5, 5.5, 16, nullptr);
  std::vector<Eigen::Vector3d> points;
  for (const double z : samples.depths) points.push_back(ray.point_at(z));
  const auto tprime = render::secondary_visibility_exact(*m.field, points, sec, 32);
  for (const double t : tprime) CHECK(t == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("occluder on the secondary ray kills exact visibility") {
  RadianceModel m = test_model(1e-3, 4);
  auto* field = static_cast<VoxelField*>(m.field.get());
  std::fill(field->density().value.begin(), field->density().value.end(), -60.0);
  // opaque wall on the left half of the box, which the offset secondary
  // camera must look through
  for (int z = 0; z < 6; ++z) {
    for (int y = 0; y < 6; ++y) {
      field->density().value[(z * 6 + y) * 6 + 1] = 1e5;
    }
  }
  Camera sec = Camera::pinhole(40, 40, 16, 12, 32, 24);
  sec.T(0, 3) = -1.8;  // looks through the wall toward the probe point
  const std::vector<Eigen::Vector3d> points = {Eigen::Vector3d(0.5, 0.0, 3.5)};
  const auto tp = render::secondary_visibility_exact(*m.field, points, sec, 64);
  CHECK(tp[0] < 1e-3);
  // a point behind the secondary camera reports zero visibility
  const std::vector<Eigen::Vector3d> behind = {sec.center() -
                                               Eigen::Vector3d(0, 0, 1.0)};
  CHECK(render::secondary_visibility_exact(*m.field, behind, sec, 16)[0] == 0.0);
}

TEST_CASE("self visibility from the primary march") {
  RadianceModel m = test_model(1e-2, 5);
  const Camera cam = Camera::pinhole(40, 40, 16, 12, 32, 24);
  const Ray ray = make_ray(cam, Eigen::Vector2d(16, 12));
  const SampleSet samples = sample_stratified(1.0, 6.0, 48, nullptr);
  render::RayWorkspace ws;
  render::RenderContext ctx;
  const auto res = render_ray(m, ray, samples, ctx, ws);
  std::vector<Eigen::Vector3d> points;
  for (const double z : samples.depths) points.push_back(ray.point_at(z));
  const auto tprime =
      render::secondary_visibility_exact(*m.field, points, cam, 512);
  // primary == secondary: t' = sum w_i T_i within march discretization
  double t_march = 0.0, t_direct = 0.0;
  for (int i = 0; i < samples.size(); ++i) {
    t_march += res.weights[i] * tprime[i];
    t_direct += res.weights[i] * res.transmittances[i];
  }
  CHECK(t_march == doctest::Approx(t_direct).epsilon(0.02));
}

TEST_CASE("one-hot coarse weights confine fine samples to the bin") {
  SampleSet coarse = sample_stratified(1.0, 9.0, 8, nullptr);
  std::vector<double> w(8, 0.0);
  w[3] = 1.0;
  Rng rng(9);
  const SampleSet merged =
      render::hierarchical_resample(w, coarse, 16, 1.0, 9.0, rng);
  CHECK(merged.size() == 24);
  // fine samples live inside bin 3's edges (midpoints around depth[3])
  const double lo = 0.5 * (coarse.depths[2] + coarse.depths[3]);
  const double hi = 0.5 * (coarse.depths[3] + coarse.depths[4]);
  int inside = 0;
  for (const double d : merged.depths) {
    if (d >= lo && d <= hi) ++inside;
  }
  CHECK(inside >= 16);  // the 16 fine draws plus the coarse depth itself
}

TEST_CASE("uniform weights resample roughly stratified") {
  SampleSet coarse = sample_stratified(1.0, 9.0, 16, nullptr);
  std::vector<double> w(16, 1.0);
  Rng rng(11);
  const SampleSet merged =
      render::hierarchical_resample(w, coarse, 64, 1.0, 9.0, rng);
  // spread over the full range with no large gaps
  CHECK(merged.depths.front() < 1.6);
  CHECK(merged.depths.back() > 8.2);
  for (std::size_t i = 1; i < merged.depths.size(); ++i) {
    CHECK(merged.depths[i] - merged.depths[i - 1] < 0.6);
  }
}

TEST_CASE("inverse cdf matches a rejection sampling oracle in distribution") {
  SampleSet coarse = sample_stratified(1.0, 9.0, 8, nullptr);
  std::vector<double> w = {0.05, 0.3, 0.1, 0.0, 0.25, 0.05, 0.2, 0.05};
  Rng rng(1234);
  const int n = 10000;
  const SampleSet merged = render::hierarchical_resample(w, coarse, n, 1.0, 9.0, rng);
  // strip the coarse depths to recover the raw draws
  std::vector<double> drawn;
  std::vector<double> coarse_sorted = coarse.depths;
  for (const double d : merged.depths) {
    if (!std::binary_search(coarse_sorted.begin(), coarse_sorted.end(), d)) {
      drawn.push_back(d);
    }
  }
  REQUIRE(static_cast<int>(drawn.size()) == n);

  // rejection-sampling oracle from the same piecewise-constant pdf
  std::vector<double> edges(9);
  edges[0] = coarse.depths.front();
  for (int i = 1; i < 8; ++i) edges[i] = 0.5 * (coarse.depths[i - 1] + coarse.depths[i]);
  edges[8] = coarse.depths.back();
  std::vector<double> density(8);
  for (int i = 0; i < 8; ++i) density[i] = w[i] / (edges[i + 1] - edges[i]);
  const double dmax = *std::max_element(density.begin(), density.end());
  Rng orng(4321);
  std::vector<double> oracle;
  while (static_cast<int>(oracle.size()) < n) {
    const double x = orng.uniform(edges.front(), edges.back());
    const int bin =
        std::min<int>(7, static_cast<int>(std::upper_bound(edges.begin(), edges.end(), x) -
                                          edges.begin()) - 1);
    if (orng.uniform() * dmax < density[bin]) oracle.push_back(x);
  }
  std::sort(oracle.begin(), oracle.end());

  // two-sample KS statistic
  double ks = 0.0;
  std::size_t j = 0;
  for (std::size_t i = 0; i < drawn.size(); ++i) {
    while (j < oracle.size() && oracle[j] <= drawn[i]) ++j;
    const double f1 = static_cast<double>(i + 1) / n;
    const double f2 = static_cast<double>(j) / n;
    ks = std::max(ks, std::abs(f1 - f2));
  }
  CHECK(ks < 0.05);
}

TEST_CASE("resampling is bitwise deterministic given the seed") {
  SampleSet coarse = sample_stratified(1.0, 9.0, 8, nullptr);
  std::vector<double> w = {0.1, 0.2, 0.3, 0.1, 0.1, 0.1, 0.05, 0.05};
  Rng r1(42), r2(42);
  const SampleSet a = render::hierarchical_resample(w, coarse, 32, 1.0, 9.0, r1);
  const SampleSet b = render::hierarchical_resample(w, coarse, 32, 1.0, 9.0, r2);
  REQUIRE(a.depths.size() == b.depths.size());
  for (std::size_t i = 0; i < a.depths.size(); ++i) {
    CHECK(a.depths[i] == b.depths[i]);
  }
}

TEST_CASE("exact-march secondary visibility adjoint matches finite differences") {
  RadianceModel m = test_model(0.2, 33);
  const Camera cam = Camera::pinhole(40, 40, 16, 12, 32, 24);
  Camera sec = cam;
  sec.T(0, 3) = 0.7;
  const Ray ray = make_ray(cam, Eigen::Vector2d(14, 11));
  const SampleSet samples = sample_stratified(1.2, 5.8, 8, nullptr);
  std::vector<Eigen::Vector3d> points;
  for (const double z : samples.depths) points.push_back(ray.point_at(z));
  const int march = 12;

  render::RayWorkspace ws;
  render::RenderContext ctx;
  auto t_march = [&]() {
    const auto res = render_ray(m, ray, samples, ctx, ws);
    const auto tprime = render::secondary_visibility_exact(*m.field, points, sec, march);
    double acc = 0.0;
    for (int i = 0; i < samples.size(); ++i) acc += res.weights[i] * tprime[i];
    return acc;
  };

  // analytic: weight part through the renderer, T' part through the march
  const auto res = render_ray(m, ray, samples, ctx, ws);
  const auto tprime = render::secondary_visibility_exact(*m.field, points, sec, march);
  m.zero_grad();
  render::RayAdjoint adj;
  adj.d_weights = tprime;
  render::render_ray_backward(m, nullptr, ray, samples, ctx, res, adj, ws);
  render::secondary_visibility_exact_backward(*m.field, points, sec, march,
                                              res.weights);

  auto* field = static_cast<VoxelField*>(m.field.get());
  Rng pick(77);
  for (int probe = 0; probe < 24; ++probe) {
    const int i = pick.uniform_int(static_cast<int>(field->density().size()));
    const double saved = field->density().value[i];
    field->density().value[i] = saved + 1e-5;
    const double up = t_march();
    field->density().value[i] = saved - 1e-5;
    const double down = t_march();
    field->density().value[i] = saved;
    const double fd = (up - down) / 2e-5;
    const double analytic = field->density().grad[i];
    CHECK(std::abs(analytic - fd) <
          1e-4 * std::max({1e-3, std::abs(fd), std::abs(analytic)}));
  }
}

}  // TEST_SUITE
