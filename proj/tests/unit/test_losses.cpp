#include <doctest.h>

#include <cmath>

#include "kdsel/errors.hpp"
#include "kdsel/losses.hpp"
#include "kdsel/selector.hpp"
#include "support/oracles.hpp"

using namespace kdsel;

namespace {

using Mat = std::vector<std::vector<double>>;

// Central differences of f at x, in double.
template <typename F>
std::vector<double> numeric_grad(F f, std::vector<double> x, double h = 1e-6) {
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double orig = x[i];
    x[i] = orig + h;
    const double fp = f(x);
    x[i] = orig - h;
    const double fm = f(x);
    x[i] = orig;
    g[i] = (fp - fm) / (2 * h);
  }
  return g;
}

}  // namespace

TEST_CASE("soft labels follow the temperature softmax") {
  const auto p = soft_label(std::vector<double>{0.9, 0.5, 0.1}, 0.25);
  // numpy: exp(p / 0.25) / sum
  CHECK(p[0] == doctest::Approx(0.8047261748682356).epsilon(1e-14));
  CHECK(p[1] == doctest::Approx(0.16247141264505494).epsilon(1e-14));
  CHECK(p[2] == doctest::Approx(0.03280241248670942).epsilon(1e-14));

  const auto flat = soft_label(std::vector<double>{0.4, 0.4, 0.4, 0.4}, 0.1);
  for (double v : flat) CHECK(v == doctest::Approx(0.25));

  // Sharpens toward one-hot as the temperature drops.
  const auto sharp = soft_label(std::vector<double>{0.3, 0.2}, 1e-4);
  CHECK(sharp[0] > 1.0 - 1e-12);
  // Large values stay finite thanks to the max shift.
  for (double v : soft_label(std::vector<double>{1e4, 1e4 - 1}, 0.01)) CHECK(std::isfinite(v));
  CHECK_THROWS_AS(soft_label(std::vector<double>{1, 2}, 0.0), ConfigError);
}

TEST_CASE("cross-entropy value and gradient") {
  const std::vector<double> probs{0.7, 0.2, 0.1};
  const auto ce = ce_loss(probs, 1);
  CHECK(ce.loss == doctest::Approx(-std::log(0.2)));
  CHECK(ce.dlogits[0] == doctest::Approx(0.7));
  CHECK(ce.dlogits[1] == doctest::Approx(-0.8));
  // At a one-hot prediction of the target the logit gradient vanishes.
  const auto perfect = ce_loss(std::vector<double>{0.0, 1.0, 0.0}, 1);
  for (double g : perfect.dlogits) CHECK(g == 0.0);

  NumericCounters counters;
  const auto floored = ce_loss(std::vector<double>{1.0, 0.0}, 1, &counters);
  CHECK(floored.loss == doctest::Approx(-std::log(kProbFloor)));
  CHECK(counters.clamped_probs == 1);
}

TEST_CASE("PISL is cross-entropy against the soft target") {
  const std::vector<double> probs{0.5, 0.3, 0.2};
  const std::vector<double> soft{0.6, 0.4, 0.0};
  const auto r = pisl_loss(probs, soft);
  CHECK(r.loss == doctest::Approx(-(0.6 * std::log(0.5) + 0.4 * std::log(0.3))));
  for (std::size_t j = 0; j < 3; ++j) CHECK(r.dlogits[j] == doctest::Approx(probs[j] - soft[j]));
  // With a one-hot soft target PISL reduces to CE.
  CHECK(pisl_loss(probs, std::vector<double>{0, 1, 0}).loss == doctest::Approx(ce_loss(probs, 1).loss));
}

TEST_CASE("CE and PISL gradients match finite differences at the logits") {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 20; ++trial) {
    const auto logits = testing::gaussian_vector(rng, 6, 2.0);
    const int label = static_cast<int>(rng() % 6);
    const auto soft = soft_label(testing::gaussian_vector(rng, 6), 0.25);
    const auto ng_ce = numeric_grad([&](const std::vector<double>& z) { return ce_loss(softmax(z), label).loss; }, logits);
    const auto ng_pisl = numeric_grad([&](const std::vector<double>& z) { return pisl_loss(softmax(z), soft).loss; }, logits);
    const auto ce = ce_loss(softmax(logits), label);
    const auto pisl = pisl_loss(softmax(logits), soft);
    for (std::size_t j = 0; j < 6; ++j) {
      CHECK(ce.dlogits[j] == doctest::Approx(ng_ce[j]).epsilon(1e-6));
      CHECK(pisl.dlogits[j] == doctest::Approx(ng_pisl[j]).epsilon(1e-6));
    }
  }
}

TEST_CASE("InfoNCE matches the numpy reference") {
  const Mat s{{1, 0, 0.5}, {0, 1, 0.2}, {1, 1, -0.3}};
  const Mat k{{1, 0.2, 0.4}, {0.1, 1, 0.0}, {0.5, 0.4, -0.1}};
  const auto r = infonce_loss(s, k, 0.1);
  CHECK(r.loss == doctest::Approx(0.062108405855352565).epsilon(1e-12));
  CHECK(r.per_sample[0] == doctest::Approx(0.03885000693839391).epsilon(1e-12));
  CHECK(r.per_sample[2] == doctest::Approx(0.08481348284933166).epsilon(1e-12));

  const std::vector<double> w{2.0, 0.0, 1.0};
  const auto rw = infonce_loss(s, k, 0.5, w);
  CHECK(rw.loss == doctest::Approx(0.5973942283205135).epsilon(1e-12));
  CHECK(rw.per_sample[1] == doctest::Approx(0.5585503855936733).epsilon(1e-12));
}

TEST_CASE("InfoNCE gradients match finite differences") {
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 2 + rng() % 5, d = 3 + rng() % 6;
    Mat s(n), k(n);
    for (auto& v : s) v = testing::gaussian_vector(rng, d);
    for (auto& v : k) v = testing::gaussian_vector(rng, d);
    std::vector<double> w(n);
    for (auto& x : w) x = trial % 2 ? 1.0 : 0.5 + static_cast<double>(rng() % 4);
    const double tau = 0.1 + 0.1 * static_cast<double>(trial % 3);
    const auto r = infonce_loss(s, k, tau, w);
    for (std::size_t i = 0; i < n; ++i) {
      auto fs = [&](const std::vector<double>& x) {
        Mat s2 = s;
        s2[i] = x;
        return infonce_loss(s2, k, tau, w).loss;
      };
      auto fk = [&](const std::vector<double>& x) {
        Mat k2 = k;
        k2[i] = x;
        return infonce_loss(s, k2, tau, w).loss;
      };
      const auto gs = numeric_grad(fs, s[i]);
      const auto gk = numeric_grad(fk, k[i]);
      for (std::size_t j = 0; j < d; ++j) {
        CHECK(r.d_series[i][j] == doctest::Approx(gs[j]).epsilon(1e-6));
        CHECK(r.d_text[i][j] == doctest::Approx(gk[j]).epsilon(1e-6));
      }
    }
  }
}

TEST_CASE("InfoNCE edge cases") {
  const Mat one{{1, 2}};
  CHECK_THROWS_AS(infonce_loss(one, one, 0.1), BatchTooSmall);
  // Perfectly aligned, orthogonal pairs: loss shrinks as tau drops.
  const Mat e{{1, 0}, {0, 1}};
  CHECK(infonce_loss(e, e, 0.05).loss < infonce_loss(e, e, 0.5).loss);
  CHECK(infonce_loss(e, e, 0.05).loss == doctest::Approx(std::log(1.0 + std::exp(-20.0))).epsilon(1e-9));
  CHECK_THROWS_AS(infonce_loss(e, one, 0.1), DimensionError);
}

TEST_CASE("combine weights and disabled terms") {
  const auto all = combine(2.0, 1.0, 0.5, 0.4, 0.78, {true, true});
  CHECK(all.total == doctest::Approx(0.6 * 2.0 + 0.4 * 1.0 + 0.78 * 0.5));
  const auto ce_only = combine(2.0, 1.0, 0.5, 0.4, 0.78, {false, false});
  CHECK(ce_only.total == doctest::Approx(2.0));
  CHECK(ce_only.pisl == 0.0);
  CHECK(ce_only.mki == 0.0);
  const auto alpha0 = combine(2.0, 1.0, 0.0, 0.0, 0.78, {true, false});
  CHECK(alpha0.total == 2.0);
}

TEST_CASE("entropy") {
  CHECK(entropy(std::vector<double>{0.5, 0.5}) == doctest::Approx(std::log(2.0)));
  CHECK(entropy(std::vector<double>{1.0, 0.0}) == 0.0);
}
