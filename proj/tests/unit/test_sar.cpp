// Copyright 2026 The narrablend Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>
#include <random>

#include "nb/error.hpp"
#include "nb/sar.hpp"
#include "nb/twb.hpp"

using namespace nb;

namespace {

EmbeddingVector unit_at(double angle) {
  EmbeddingVector v(2);
  v << std::cos(angle), std::sin(angle);
  return v;
}

}  // namespace

TEST_CASE("action embedding delegates to the provider") {
  MockEmbeddingProvider p(5);
  const auto a = action_embedding(p, "a corgi dog is kicking a red ball in Central Park");
  CHECK(is_unit(a));
  CHECK(action_embedding(p, "a corgi dog is kicking a red ball in Central Park") == a);
  CHECK_THROWS_AS(action_embedding(p, ""), ArgumentError);
}

TEST_CASE("modulate: identical, orthogonal, half-similar") {
  SarConfig cfg;
  const auto e = unit_at(0.3);
  auto r = modulate(0.25, e, e, cfg);
  CHECK(r.alpha_out == 0.0);
  CHECK(r.similarity == doctest::Approx(1.0));

  r = modulate(0.25, unit_at(0), unit_at(M_PI / 2), cfg);
  CHECK(std::abs(r.alpha_out - 0.25) < 1e-12);

  // S_A = cos(60 deg) = 0.5
  r = modulate(0.4, unit_at(0), unit_at(M_PI / 3), cfg);
  CHECK(std::abs(r.similarity - 0.5) < 1e-12);
  CHECK(std::abs(r.alpha_out - 0.2) < 1e-12);
  CHECK(r.alpha_in == 0.4);
  CHECK(r.mode == SarMode::kWithinPair);
}

TEST_CASE("modulate clamps antipodal actions") {
  SarConfig cfg;
  CHECK(modulated_alpha(0.4, -1.0, cfg.clamp_max) == 0.5);
  CHECK(modulated_alpha(0.2, -1.0, cfg.clamp_max) == doctest::Approx(0.4).epsilon(1e-12));
  cfg.clamp_max = 0.3;
  CHECK(modulated_alpha(0.2, -1.0, cfg.clamp_max) == 0.3);
}

TEST_CASE("modulate argument errors") {
  SarConfig cfg;
  CHECK_THROWS_AS(modulate(0.6, unit_at(0), unit_at(1), cfg), ArgumentError);
  CHECK_THROWS_AS(modulate(-0.1, unit_at(0), unit_at(1), cfg), ArgumentError);
  cfg.clamp_max = 0.0;
  CHECK_THROWS_AS(cfg.validate(), ArgumentError);
}

TEST_CASE("modulate properties over a similarity grid") {
  std::mt19937_64 rng(31);
  for (int trial = 0; trial < 500; ++trial) {
    const double alpha = 0.5 * double(rng() % 1001) / 1000.0;
    double previous = INFINITY;
    for (int k = 0; k <= 200; ++k) {
      const double s = -1.0 + 2.0 * k / 200.0;
      const double out = modulated_alpha(alpha, s, 0.5);
      CHECK(out <= 0.5);
      CHECK(out >= 0.0);
      CHECK(out <= previous + 1e-15);
      if (s >= 0.0) CHECK(std::abs(out - std::min(alpha * (1.0 - s), 0.5)) <= 1e-12);
      CHECK((out == 0.0) == (alpha == 0.0 || k == 200));
      previous = out;
    }
  }
}

TEST_CASE("identical action prompts turn the boundary update into identity") {
  MockEmbeddingProvider p(12);
  SarConfig cfg;
  cfg.mode = SarMode::kCrossSegment;
  const auto a = action_embedding(p, "a corgi dog is walking");
  const auto b = action_embedding(p, "a corgi dog is walking ");
  const auto rec = modulate(0.25, a, b, cfg);
  REQUIRE(rec.alpha_out == 0.0);

  Eigen::VectorXf first = Eigen::VectorXf::Random(64);
  const Eigen::VectorXf out = boundary_update(first, Eigen::VectorXf::Random(64),
                                              Eigen::VectorXf::Random(64), rec.alpha_out);
  CHECK(out == first);
}

TEST_CASE("mode names") {
  CHECK(std::string(to_string(SarMode::kCrossSegment)) == "cross_segment");
  CHECK(sar_mode_from_string("within_pair") == SarMode::kWithinPair);
  CHECK_THROWS_AS(sar_mode_from_string("both"), ArgumentError);
}
