// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <random>

#include "elf/error.hpp"
#include "elf/losses.hpp"
#include "support.hpp"

using namespace elf;
using elf::testing::check_loss;

namespace {

std::vector<double> random_logits(std::size_t c, std::mt19937_64& rng, double scale = 2.0) {
  std::normal_distribution<double> n(0.0, scale);
  std::vector<double> z(c);
  for (auto& v : z) v = n(rng);
  return z;
}

ClassWeights weights(std::vector<double> w) { return ClassWeights{std::move(w), std::nullopt}; }

}  // namespace

TEST_CASE("effective weights") {
  const std::vector<std::size_t> counts{2, 1000};
  SUBCASE("closed form, then mean-normalized") {
    const auto w = effective_weights(counts, 0.999);
    CHECK(w[0] == doctest::Approx(1.99369702433).epsilon(1e-10));
    CHECK(w[1] == doctest::Approx(0.00630297566675).epsilon(1e-10));
    CHECK(w.beta == 0.999);
    // Raw ratio is preserved by the normalization.
    CHECK(w[0] / w[1] == doctest::Approx(0.500250125063 / 0.00158151631219).epsilon(1e-10));
  }
  SUBCASE("beta 0 is uniform") {
    const auto w = effective_weights(std::vector<std::size_t>{7, 300, 2}, 0.0);
    for (double v : w.w) CHECK(v == doctest::Approx(1.0).epsilon(1e-15));
  }
  SUBCASE("single-example class has raw weight 1") {
    // Against a second class with raw weight (1-b)/(1-b^2) = 1/(1+b).
    const auto w = effective_weights(std::vector<std::size_t>{1, 2}, 0.5);
    CHECK(w[0] / w[1] == doctest::Approx(1.5).epsilon(1e-15));
  }
  SUBCASE("errors") {
    CHECK_THROWS_AS(effective_weights(counts, 1.0), ConfigError);
    CHECK_THROWS_AS(effective_weights(counts, -0.1), ConfigError);
    CHECK_THROWS_AS(effective_weights(std::vector<std::size_t>{3, 0}, 0.9), ConfigError);
  }
}

TEST_CASE("effective weights are positive, mean 1 and monotone") {
  std::mt19937_64 rng(7);
  std::uniform_int_distribution<std::size_t> cnt(1, 6000);
  for (double beta : {0.9, 0.99, 0.999, 0.9999}) {
    for (int trial = 0; trial < 50; ++trial) {
      std::vector<std::size_t> counts(8);
      for (auto& n : counts) n = cnt(rng);
      const auto w = effective_weights(counts, beta);
      double sum = 0.0;
      for (double v : w.w) {
        CHECK(v > 0.0);
        sum += v;
      }
      CHECK(std::abs(sum / 8.0 - 1.0) < 1e-9);
      for (std::size_t a = 0; a < 8; ++a) {
        for (std::size_t b = 0; b < 8; ++b) {
          if (counts[a] <= counts[b]) CHECK(w[a] >= w[b]);
        }
      }
    }
  }
}

TEST_CASE("weighted cross-entropy") {
  const auto u10 = ClassWeights::uniform(10);
  CHECK(weighted_ce(std::vector<double>(10, 0.3), 4, u10) == doctest::Approx(2.30258509299).epsilon(1e-11));
  const std::vector<double> z{std::log(2.0), 0.0};
  CHECK(weighted_ce(z, 0, ClassWeights::uniform(2)) == doctest::Approx(0.405465108108).epsilon(1e-11));

  std::vector<double> g1(2), g2(2);
  const double l1 = weighted_ce(z, 1, weights({1.0, 1.0}), g1);
  const double l2 = weighted_ce(z, 1, weights({1.0, 2.0}), g2);
  CHECK(l2 == 2 * l1);
  CHECK(g2[0] == 2 * g1[0]);
  CHECK(g2[1] == 2 * g1[1]);
  // w * (softmax - onehot)
  CHECK(g1[0] == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
  CHECK(g1[1] == doctest::Approx(-2.0 / 3.0).epsilon(1e-15));

  CHECK_THROWS_AS(weighted_ce(z, 2, ClassWeights::uniform(2)), ConfigError);
  CHECK_THROWS_AS(weighted_ce(z, 0, ClassWeights::uniform(3)), DimensionError);
}

TEST_CASE("focal loss") {
  const auto u2 = ClassWeights::uniform(2);
  CHECK(focal(std::vector<double>{0.0, 0.0}, 0, u2, 0.5) == doctest::Approx(0.490129071734).epsilon(1e-11));
  CHECK_THROWS_AS(focal(std::vector<double>{0.0, 0.0}, 0, u2, -1.0), ConfigError);

  // Confident predictions are discounted relative to cross-entropy.
  double prev_ratio = 1.0;
  for (double margin : {1.0, 2.0, 4.0, 8.0}) {
    const std::vector<double> z{margin, 0.0};
    const double ratio = focal(z, 0, u2, 0.5) / weighted_ce(z, 0, u2);
    CHECK(ratio < prev_ratio);
    prev_ratio = ratio;
  }
}

TEST_CASE("ldam margins") {
  auto m = ldam_margins(std::vector<std::size_t>{100, 10});
  CHECK(m.c_const == 5.0);
  CHECK(m.delta == std::vector<double>{0.05, 0.5});
  m = ldam_margins(std::vector<std::size_t>{50, 50});
  CHECK(m.delta == std::vector<double>{0.5, 0.5});
  m = ldam_margins(std::vector<std::size_t>{1000, 1});
  CHECK(m.c_const == 0.5);
  CHECK(m.delta[0] == doctest::Approx(0.0005).epsilon(1e-15));
  CHECK(m.delta[1] == 0.5);
  CHECK_THROWS_AS(ldam_margins(std::vector<std::size_t>{4, 0}), ConfigError);

  // Scale-free in the counts; the largest margin is the cap.
  const std::vector<std::size_t> base{5000, 1077, 139, 50};
  const auto ref = ldam_margins(base, 0.5);
  for (std::size_t k : {2u, 3u, 10u}) {
    std::vector<std::size_t> scaled;
    for (auto n : base) scaled.push_back(n * k);
    const auto s = ldam_margins(scaled, 0.5);
    for (std::size_t j = 0; j < base.size(); ++j) CHECK(s.delta[j] == doctest::Approx(ref.delta[j]).epsilon(1e-15));
  }
  CHECK(std::abs(*std::max_element(ref.delta.begin(), ref.delta.end()) - 0.5) < 1e-12);
  for (std::size_t j = 0; j < base.size(); ++j) CHECK(ref.delta[j] == ref.c_const / static_cast<double>(base[j]));
}

TEST_CASE("ldam loss") {
  const auto u2 = ClassWeights::uniform(2);
  const MarginVector m{{0.5, 0.5}, 0.5};
  CHECK(ldam(std::vector<double>{0.0, 0.0}, 0, u2, m) == doctest::Approx(0.97407698418).epsilon(1e-11));

  std::mt19937_64 rng(2);
  const auto z = random_logits(4, rng);
  const auto u4 = ClassWeights::uniform(4);
  double prev = -1.0;
  for (double d : {0.0, 0.1, 0.3, 0.7, 1.5}) {
    const MarginVector mv{{d, d, d, d}, d};
    const double l = ldam(z, 2, u4, mv);
    CHECK(l > prev);
    prev = l;
  }
}

TEST_CASE("the three losses coincide at their reductions") {
  std::mt19937_64 rng(5);
  const MarginVector zero{std::vector<double>(6, 0.0), 0.0};
  for (int trial = 0; trial < 300; ++trial) {
    const auto z = random_logits(6, rng, 4.0);
    const std::size_t y = static_cast<std::size_t>(trial % 6);
    const auto w = effective_weights(std::vector<std::size_t>{900, 300, 100, 40, 12, 3}, 0.99);
    std::vector<double> gc(6), gf(6), gl(6);
    const double ce = weighted_ce(z, y, w, gc);
    const double fo = focal(z, y, w, 0.0, gf);
    const double ld = ldam(z, y, w, zero, gl);
    CHECK(std::abs(ce - fo) <= 1e-12 * std::max(1.0, ce));
    CHECK(std::abs(ce - ld) <= 1e-12 * std::max(1.0, ce));
    for (std::size_t j = 0; j < 6; ++j) {
      CHECK(std::abs(gc[j] - gf[j]) <= 1e-12);
      CHECK(std::abs(gc[j] - gl[j]) <= 1e-12);
    }
  }
}

TEST_CASE("losses are non-negative and vanish only as p_y approaches 1") {
  std::mt19937_64 rng(6);
  const auto u = ClassWeights::uniform(5);
  const MarginVector m{{0.1, 0.2, 0.3, 0.4, 0.5}, 0.5};
  for (int trial = 0; trial < 300; ++trial) {
    const auto z = random_logits(5, rng, 3.0);
    for (std::size_t y = 0; y < 5; ++y) {
      CHECK(weighted_ce(z, y, u) > 0.0);
      CHECK(focal(z, y, u, 0.5) > 0.0);
      CHECK(ldam(z, y, u, m) > 0.0);
    }
  }
  std::vector<double> sure{60.0, 0.0, 0.0, 0.0, 0.0};
  CHECK(weighted_ce(sure, 0, u) < 1e-20);
  CHECK(focal(sure, 0, u, 0.5) < 1e-30);
  CHECK(ldam(sure, 0, u, m) < 1e-20);
}

TEST_CASE("loss gradients match central differences") {
  std::mt19937_64 rng(9);
  const auto w = effective_weights(std::vector<std::size_t>{500, 120, 30, 8}, 0.999);
  const auto margins = ldam_margins(std::vector<std::size_t>{500, 120, 30, 8}, 0.5);
  for (int trial = 0; trial < 40; ++trial) {
    const auto z = random_logits(4, rng);
    const std::size_t y = static_cast<std::size_t>(trial % 4);
    const auto ce = check_loss([&](auto l, auto g) { return weighted_ce(l, y, w, g); }, z, "ce");
    CHECK(ce.ok());
    for (double gamma : {0.0, 0.5, 2.0}) {
      const auto fo = check_loss([&](auto l, auto g) { return focal(l, y, w, gamma, g); }, z, "focal");
      INFO("gamma " << gamma << " at " << fo.where << " err " << fo.worst);
      CHECK(fo.ok());
    }
    const auto ld = check_loss([&](auto l, auto g) { return ldam(l, y, w, margins, g); }, z, "ldam");
    CHECK(ld.ok());
  }
}

TEST_CASE("delayed reweighting schedule") {
  const auto target = effective_weights(std::vector<std::size_t>{100, 10}, 0.99);
  const DrwSchedule s{160, target};
  CHECK(drw_weights(s, 0).w == ClassWeights::uniform(2).w);
  CHECK_FALSE(drw_weights(s, 0).beta.has_value());
  CHECK(drw_weights(s, 159).w == ClassWeights::uniform(2).w);
  CHECK(drw_weights(s, 160).w == target.w);
  CHECK(drw_weights(s, 500).w == target.w);
  const DrwSchedule now{0, target};
  CHECK(now.weights_at(0).w == target.w);
}

TEST_CASE("exit loss dispatch and names") {
  for (auto k : {LossKind::ce, LossKind::focal, LossKind::ldam}) CHECK(parse_loss(loss_name(k)) == k);
  CHECK_FALSE(parse_loss("hinge").has_value());
  const std::vector<double> z{0.4, -0.2, 1.1};
  const auto u = ClassWeights::uniform(3);
  const MarginVector m{{0.2, 0.3, 0.5}, 0.5};
  CHECK(ExitLoss{LossKind::ce, 0.5, m}(z, 1, u) == weighted_ce(z, 1, u));
  CHECK(ExitLoss{LossKind::focal, 0.5, m}(z, 1, u) == focal(z, 1, u, 0.5));
  CHECK(ExitLoss{LossKind::ldam, 0.5, m}(z, 1, u) == ldam(z, 1, u, m));
}
