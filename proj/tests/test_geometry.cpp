// Copyright Contributors to the SparseView Project
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include "sparseview/geometry.hpp"

using namespace sparseview;

TEST_SUITE("geometry") {

TEST_CASE("project principal ray") {
  const Camera cam = Camera::pinhole(100, 100, 50, 50, 101, 101);
  const auto pd = project(cam, Eigen::Vector3d(0, 0, 2));
  CHECK(pd.pixel.x() == doctest::Approx(50).epsilon(1e-12));
  CHECK(pd.pixel.y() == doctest::Approx(50).epsilon(1e-12));
  CHECK(pd.depth == doctest::Approx(2).epsilon(1e-12));
}

TEST_CASE("project matches pinhole algebra") {
  const Camera cam = Camera::pinhole(100, 100, 50, 50, 101, 101);
  // f * x / z oracle
  const auto pd = project(cam, Eigen::Vector3d(0.1, 0, 2));
  CHECK(pd.pixel.x() == doctest::Approx(50 + 100 * 0.1 / 2).epsilon(1e-12));
  CHECK(pd.pixel.y() == doctest::Approx(50).epsilon(1e-12));
}

TEST_CASE("project throws behind camera") {
  const Camera cam = Camera::pinhole(100, 100, 50, 50, 101, 101);
  CHECK_THROWS_AS(project(cam, Eigen::Vector3d(0, 0, 0)), BehindCamera);
  CHECK_THROWS_AS(project(cam, Eigen::Vector3d(0, 0, -1)), BehindCamera);
}

TEST_CASE("project backproject round trip") {
  Camera cam = Camera::pinhole(120, 115, 60, 40, 128, 96);
  cam.T = Camera::look_at(Eigen::Vector3d(0.4, -0.2, -0.5),
                          Eigen::Vector3d(0.1, 0.0, 3.0));
  REQUIRE(cam.valid());
  Rng rng(11);
  for (int i = 0; i < 200; ++i) {
    const Eigen::Vector2d px(rng.uniform(0, 127), rng.uniform(0, 95));
    const double depth = rng.uniform(0.5, 9.0);
    const Eigen::Vector3d world = backproject(cam, px, depth);
    const auto pd = project(cam, world);
    CHECK(std::abs(pd.pixel.x() - px.x()) < 1e-9);
    CHECK(std::abs(pd.pixel.y() - px.y()) < 1e-9);
    CHECK(std::abs(pd.depth - depth) < 1e-9);
  }
}

TEST_CASE("pose_warp identity") {
  Camera cam = Camera::pinhole(90, 90, 48, 32, 96, 64);
  cam.T = Camera::look_at(Eigen::Vector3d(1, 0.5, 0), Eigen::Vector3d(0, 0, 4));
  const Eigen::Vector2d px(31.25, 17.5);
  const auto pd = pose_warp(px, Eigen::Vector3d::Zero(), 2.75, cam, cam);
  CHECK(std::abs(pd.pixel.x() - px.x()) < 1e-12);
  CHECK(std::abs(pd.pixel.y() - px.y()) < 1e-12);
  CHECK(std::abs(pd.depth - 2.75) < 1e-12);
}

TEST_CASE("pose_warp pure translation shift") {
  const double f = 100, d = 2, tx = 0.3;
  const Camera src = Camera::pinhole(f, f, 50, 50, 101, 101);
  Camera dst = src;
  dst.T(0, 3) = tx;
  const auto pd = pose_warp(Eigen::Vector2d(50, 50), Eigen::Vector3d::Zero(), d,
                            src, dst);
  // pinhole oracle: shift is -f tx / d
  CHECK(pd.pixel.x() == doctest::Approx(50 - f * tx / d).epsilon(1e-12));
  CHECK(pd.depth == doctest::Approx(d).epsilon(1e-12));
}

TEST_CASE("pose_warp depth flow scales toward principal point") {
  const double f = 100, d = 2, dz = 1;
  const Camera cam = Camera::pinhole(f, f, 50, 50, 101, 101);
  const Eigen::Vector2d px(60, 40);
  const auto pd = pose_warp(px, Eigen::Vector3d(0, 0, dz), d, cam, cam);
  // homogeneous-coordinate oracle: offset from center scales by d / (d + dz)
  const double scale = d / (d + dz);
  CHECK(pd.pixel.x() == doctest::Approx(50 + (60 - 50) * scale).epsilon(1e-12));
  CHECK(pd.pixel.y() == doctest::Approx(50 + (40 - 50) * scale).epsilon(1e-12));
  CHECK(pd.depth == doctest::Approx(d + dz).epsilon(1e-12));
}

TEST_CASE("pose_warp rejects warps behind the camera") {
  const Camera cam = Camera::pinhole(100, 100, 50, 50, 101, 101);
  CHECK_THROWS_AS(
      pose_warp(Eigen::Vector2d(50, 50), Eigen::Vector3d(0, 0, -2.0), 2.0, cam, cam),
      BehindCamera);
}

TEST_CASE("splat at integer pixel lands with weight 1") {
  const auto res = splat_forward({{2.5}}, {Eigen::Vector2d(3, 4)}, {1.0}, 8, 8);
  CHECK(res.image.at(3, 4) == doctest::Approx(2.5));
  CHECK(res.weight_sum.at(3, 4) == doctest::Approx(1.0));
  CHECK(res.coverage.at(3, 4) == 1);
  CHECK(res.coverage.at(2, 4) == 0);
}

TEST_CASE("splat at half pixel splits evenly") {
  const auto res = splat_forward({{1.0}}, {Eigen::Vector2d(3.5, 4)}, {1.0}, 8, 8);
  CHECK(res.weight_sum.at(3, 4) == doctest::Approx(0.5));
  CHECK(res.weight_sum.at(4, 4) == doctest::Approx(0.5));
  CHECK(res.image.at(3, 4) == doctest::Approx(1.0));  // normalized payload
}

TEST_CASE("two sources normalize to the weighted average") {
  const auto res = splat_forward({{1.0}, {3.0}},
                                 {Eigen::Vector2d(2, 2), Eigen::Vector2d(2, 2)},
                                 {1.0, 3.0}, 4, 4);
  // hand accumulation: (1*1 + 3*3) / (1 + 3)
  CHECK(res.image.at(2, 2) == doctest::Approx(2.5));
  CHECK(res.weight_sum.at(2, 2) == doctest::Approx(4.0));
}

TEST_CASE("splat conserves payload mass") {
  Rng rng(5);
  std::vector<std::vector<double>> values;
  std::vector<Eigen::Vector2d> targets;
  std::vector<double> weights;
  for (int i = 0; i < 64; ++i) {
    values.push_back({rng.uniform(), rng.uniform()});
    targets.emplace_back(rng.uniform(1.0, 14.0), rng.uniform(1.0, 14.0));
    weights.push_back(rng.uniform(0.2, 2.0));
  }
  const auto res = splat_forward(values, targets, weights, 16, 16);
  double mass_in[2] = {0, 0}, mass_out[2] = {0, 0};
  for (int i = 0; i < 64; ++i) {
    for (int c = 0; c < 2; ++c) mass_in[c] += values[i][c] * weights[i];
  }
  for (int y = 0; y < 16; ++y) {
    for (int x = 0; x < 16; ++x) {
      for (int c = 0; c < 2; ++c) {
        mass_out[c] += res.image.at(x, y, c) * res.weight_sum.at(x, y);
      }
    }
  }
  CHECK(std::abs(mass_in[0] - mass_out[0]) < 1e-9);
  CHECK(std::abs(mass_in[1] - mass_out[1]) < 1e-9);
}

TEST_CASE("bilinear sampling") {
  ImageD img(4, 4, 1, 0.0);
  img.at(1, 1) = 2.0;
  img.at(2, 1) = 4.0;
  CHECK((*sample_bilinear(img, Eigen::Vector2d(1, 1)))[0] == doctest::Approx(2.0));
  CHECK((*sample_bilinear(img, Eigen::Vector2d(1.5, 1)))[0] == doctest::Approx(3.0));
  CHECK(!sample_bilinear(img, Eigen::Vector2d(-1, -1)).has_value());
  CHECK(sample_bilinear(img, Eigen::Vector2d(3, 3)).has_value());
  CHECK(!sample_bilinear(img, Eigen::Vector2d(3.01, 3)).has_value());
}

TEST_CASE("stratified samples ascend and close the last bin") {
  Rng rng(3);
  const SampleSet set = sample_stratified(1.0, 10.0, 32, &rng);
  for (int i = 1; i < set.size(); ++i) {
    CHECK(set.depths[i] > set.depths[i - 1]);
    CHECK(set.spacings[i - 1] == doctest::Approx(set.depths[i] - set.depths[i - 1]));
  }
  CHECK(set.spacings.back() == doctest::Approx(10.0 - set.depths.back()));
}

TEST_CASE("inverse depth sampling covers the s range") {
  const SampleSet set = sample_inverse_depth(1.0, 10.0, 16, 0.3, nullptr);
  for (int i = 0; i < set.size(); ++i) {
    const double s = depth_to_s(set.depths[i], 1.0, 10.0);
    CHECK(s >= 0.3);
    CHECK(s <= 1.0);
  }
  CHECK(depth_to_s(s_to_depth(0.42, 1.0, 10.0), 1.0, 10.0) ==
        doctest::Approx(0.42).epsilon(1e-12));
}

TEST_CASE("camera validity checks") {
  Camera cam = Camera::pinhole(100, 100, 50, 50, 101, 101);
  CHECK(cam.valid());
  cam.K(1, 0) = 0.1;
  CHECK(!cam.valid());
  cam = Camera::pinhole(100, 100, 50, 50, 101, 101);
  cam.T(0, 0) = 1.1;  // non-orthonormal rotation
  CHECK(!cam.valid());
}

}  // TEST_SUITE
