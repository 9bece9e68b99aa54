#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "core/errors.hpp"
#include "core/losses.hpp"
#include "core/ops.hpp"
#include "core/rng.hpp"
#include "core/tensor.hpp"

using namespace mga;

namespace {

double max_abs_diff(const Tensor& a, const Tensor& b) {
  REQUIRE(a.same_shape(b));
  double m = 0.0;
  for (size_t i = 0; i < a.numel(); ++i)
    m = std::max(m, std::abs(a.raw()[i] - b.raw()[i]));
  return m;
}

Tensor random_similarity(int b, Rng& rng) {
  // cosine-like range, diagonal nudged up so instances look like mid-training
  Tensor s({b, b});
  for (int i = 0; i < b; ++i)
    for (int j = 0; j < b; ++j) s.at(i, j) = 0.6 * (rng.uniform() * 2 - 1);
  for (int i = 0; i < b; ++i) s.at(i, i) = 0.3 + 0.5 * rng.uniform();
  return s;
}

double mixed_rel_err(double g, double d) {
  return std::abs(g - d) / std::max({1.0, std::abs(g), std::abs(d)});
}

}  // namespace

TEST_CASE("single pair gives exactly zero loss") {
  Tensor s({1, 1});
  s.at(0, 0) = 0.73;
  LossConfig cfg;

  LossResult plain = clap_loss(s, cfg);
  CHECK(plain.value == 0.0);
  CHECK(plain.d_s.at(0, 0) == 0.0);
  CHECK(plain.d_log_tau == 0.0);

  LossResult hn = hn_clap_loss(s, cfg);
  CHECK(hn.value == 0.0);
}

TEST_CASE("uniform similarities at B=2 give 4 log 2 in sum mode") {
  Tensor s = Tensor::full({2, 2}, 0.4);
  LossConfig cfg;
  cfg.sum_reduction = true;

  CHECK(clap_loss(s, cfg).value == doctest::Approx(4.0 * std::log(2.0)).epsilon(1e-12));

  cfg.sum_reduction = false;
  CHECK(clap_loss(s, cfg).value == doctest::Approx(2.0 * std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("loss is invariant under simultaneous relabeling of the batch") {
  Rng rng(61);
  const int b = 5;
  Tensor s = random_similarity(b, rng);
  std::vector<int> perm = {3, 0, 4, 1, 2};

  Tensor sp({b, b});
  for (int i = 0; i < b; ++i)
    for (int j = 0; j < b; ++j)
      sp.at(i, j) = s.at(perm[static_cast<size_t>(i)], perm[static_cast<size_t>(j)]);

  LossConfig cfg;
  CHECK(clap_loss(sp, cfg).value == doctest::Approx(clap_loss(s, cfg).value).epsilon(1e-12));
  CHECK(hn_clap_loss(sp, cfg).value ==
        doctest::Approx(hn_clap_loss(s, cfg).value).epsilon(1e-12));
}

TEST_CASE("loss is strictly positive for B >= 2") {
  Rng rng(62);
  LossConfig cfg;
  cfg.sum_reduction = true;
  for (int b : {2, 4, 8}) {
    Tensor s = random_similarity(b, rng);
    CHECK(clap_loss(s, cfg).value > 0.0);
    CHECK(hn_clap_loss(s, cfg).value > 0.0);
  }
}

TEST_CASE("difficulty scores collapse to exactly 1 at gamma 0") {
  Rng rng(63);
  Tensor s = random_similarity(4, rng);
  LossConfig cfg;
  cfg.gamma = 0.0;

  auto [alpha, beta] = difficulty_scores(s, cfg);
  for (size_t i = 0; i < alpha.numel(); ++i) {
    CHECK(alpha.raw()[i] == 1.0);
    CHECK(beta.raw()[i] == 1.0);
  }
}

TEST_CASE("difficulty rows and columns sum to B") {
  Rng rng(64);
  const int b = 6;
  Tensor s = random_similarity(b, rng);
  LossConfig cfg;
  cfg.gamma = 0.4;

  auto [alpha, beta] = difficulty_scores(s, cfg);
  for (int i = 0; i < b; ++i) {
    double row_sum = 0.0, col_sum = 0.0;
    for (int j = 0; j < b; ++j) {
      CHECK(alpha.at(i, j) > 0.0);
      CHECK(beta.at(j, i) > 0.0);
      row_sum += alpha.at(i, j);
      col_sum += beta.at(j, i);
    }
    CHECK(row_sum == doctest::Approx(static_cast<double>(b)).epsilon(1e-9));
    CHECK(col_sum == doctest::Approx(static_cast<double>(b)).epsilon(1e-9));
  }
}

TEST_CASE("difficulty weights match the closed form at unit effective ratio") {
  // gamma/tau chosen so the exponent is exactly the similarity row (0.9, 0.1)
  Tensor s({2, 2});
  s.at(0, 0) = 0.9;
  s.at(0, 1) = 0.1;
  s.at(1, 0) = 0.2;
  s.at(1, 1) = 0.8;
  LossConfig cfg;
  cfg.log_tau = 0.0;  // tau = 1
  cfg.gamma = 1.0;

  auto [alpha, beta] = difficulty_scores(s, cfg);
  const double e9 = std::exp(0.9), e1 = std::exp(0.1);
  CHECK(alpha.at(0, 0) == doctest::Approx(2.0 * e9 / (e9 + e1)).epsilon(1e-12));
  CHECK(alpha.at(0, 1) == doctest::Approx(2.0 * e1 / (e9 + e1)).epsilon(1e-12));
  CHECK(alpha.at(0, 0) == doctest::Approx(1.3800).epsilon(1e-3));
  CHECK(alpha.at(0, 1) == doctest::Approx(0.6200).epsilon(1e-3));
}

TEST_CASE("hard-negative loss at gamma 0 equals the plain loss") {
  Rng rng(65);
  Tensor s = random_similarity(5, rng);
  LossConfig cfg;
  cfg.gamma = 0.0;

  for (bool stop_grad : {true, false}) {
    cfg.stop_grad_weights = stop_grad;
    LossResult plain = clap_loss(s, cfg);
    LossResult hn = hn_clap_loss(s, cfg);
    CHECK(std::abs(hn.value - plain.value) < 1e-12);
    CHECK(max_abs_diff(hn.d_s, plain.d_s) < 1e-12);
    CHECK(std::abs(hn.d_log_tau - plain.d_log_tau) < 1e-12);
  }
}

TEST_CASE("explicit all-ones weights reproduce the plain loss") {
  Rng rng(66);
  Tensor s = random_similarity(4, rng);
  LossConfig cfg;
  Tensor ones = Tensor::full({4, 4}, 1.0);

  LossResult plain = clap_loss(s, cfg);
  LossResult hn = hn_clap_loss_with_weights(s, cfg, ones, ones);
  CHECK(hn.value == plain.value);
  CHECK(max_abs_diff(hn.d_s, plain.d_s) == 0.0);
}

TEST_CASE("raising one negative similarity raises its weight and the loss") {
  Rng rng(67);
  Tensor s = random_similarity(4, rng);
  LossConfig cfg;
  cfg.gamma = 0.5;

  double prev_alpha = -1.0, prev_loss = -1e18;
  for (int step = 0; step < 6; ++step) {
    auto [alpha, beta] = difficulty_scores(s, cfg);
    const double loss = hn_clap_loss(s, cfg).value;
    if (step > 0) {
      CHECK(alpha.at(0, 1) > prev_alpha);
      CHECK(loss > prev_loss);
    }
    prev_alpha = alpha.at(0, 1);
    prev_loss = loss;
    s.at(0, 1) += 0.08;
  }
}

TEST_CASE("loss rejects empty or non-square similarity matrices") {
  LossConfig cfg;
  CHECK_THROWS_AS(clap_loss(Tensor::zeros({0, 0}), cfg), DimensionError);
  CHECK_THROWS_AS(clap_loss(Tensor::zeros({2, 3}), cfg), DimensionError);
  CHECK_THROWS_AS(clap_loss(Tensor::vec({1.0}), cfg), DimensionError);
  CHECK_THROWS_AS(hn_clap_loss(Tensor::zeros({3, 2}), cfg), DimensionError);
  CHECK_THROWS_AS(difficulty_scores(Tensor::zeros({0, 0}), cfg).first.numel(),
                  DimensionError);
}

TEST_CASE("mean reduction is the batch-scaled sum") {
  Rng rng(68);
  const int b = 5;
  Tensor s = random_similarity(b, rng);
  LossConfig mean_cfg;
  LossConfig sum_cfg;
  sum_cfg.sum_reduction = true;

  LossResult m = hn_clap_loss(s, mean_cfg);
  LossResult t = hn_clap_loss(s, sum_cfg);
  CHECK(m.value == doctest::Approx(t.value / b).epsilon(1e-14));
  for (size_t i = 0; i < m.d_s.numel(); ++i)
    CHECK(m.d_s.raw()[i] == doctest::Approx(t.d_s.raw()[i] / b).epsilon(1e-12));
}

TEST_CASE("loss is invariant to a shared orthogonal rotation of the globals") {
  Rng rng(69);
  const int b = 4, d = 6;
  Tensor p = Tensor::randn({b, d}, rng);
  Tensor q = Tensor::randn({b, d}, rng);
  for (int i = 0; i < b; ++i) {
    p.set_row(i, l2_normalize(p.row(i)));
    q.set_row(i, l2_normalize(q.row(i)));
  }

  // Gram-Schmidt on a random square matrix gives the rotation
  Tensor r = Tensor::randn({d, d}, rng);
  for (int i = 0; i < d; ++i) {
    Tensor v = r.row(i);
    for (int k = 0; k < i; ++k) {
      const double proj = v.dot(r.row(k));
      v.add_inplace(r.row(k), -proj);
    }
    r.set_row(i, l2_normalize(v));
  }

  Tensor s = matmul_nt(p, q);
  Tensor s_rot = matmul_nt(matmul(p, r), matmul(q, r));

  LossConfig cfg;
  CHECK(std::abs(clap_loss(s, cfg).value - clap_loss(s_rot, cfg).value) < 1e-9);
  CHECK(std::abs(hn_clap_loss(s, cfg).value - hn_clap_loss(s_rot, cfg).value) < 1e-9);
}

// ---------------------------------------------------------------------------
// Finite differences for d_s and d_log_tau in every mode
// ---------------------------------------------------------------------------

namespace {

template <typename LossFn>
double fd_worst(Tensor s, LossConfig cfg, const LossFn& fn, const LossResult& base) {
  const double h = 1e-6;
  double worst = 0.0;
  for (size_t i = 0; i < s.numel(); ++i) {
    double& x = s.raw()[i];
    const double saved = x;
    x = saved + h;
    const double lp = fn(s, cfg);
    x = saved - h;
    const double lm = fn(s, cfg);
    x = saved;
    worst = std::max(worst, mixed_rel_err(base.d_s.raw()[i], (lp - lm) / (2 * h)));
  }
  LossConfig up = cfg, down = cfg;
  up.log_tau += h;
  down.log_tau -= h;
  const double fd_tau = (fn(s, up) - fn(s, down)) / (2 * h);
  worst = std::max(worst, mixed_rel_err(base.d_log_tau, fd_tau));
  return worst;
}

}  // namespace

TEST_CASE("plain loss gradient matches finite differences") {
  Rng rng(70);
  Tensor s = random_similarity(5, rng);
  LossConfig cfg;

  LossResult base = clap_loss(s, cfg);
  const double worst = fd_worst(
      s, cfg, [](const Tensor& m, const LossConfig& c) { return clap_loss(m, c).value; },
      base);
  CHECK(worst < 1e-5);
}

TEST_CASE("hard-negative gradient matches finite differences without stop-grad") {
  Rng rng(71);
  Tensor s = random_similarity(5, rng);
  LossConfig cfg;
  cfg.gamma = 0.6;
  cfg.stop_grad_weights = false;

  LossResult base = hn_clap_loss(s, cfg);
  const double worst = fd_worst(
      s, cfg,
      [](const Tensor& m, const LossConfig& c) { return hn_clap_loss(m, c).value; }, base);
  CHECK(worst < 1e-5);
}

TEST_CASE("stop-grad gradient differentiates the frozen-weight objective") {
  Rng rng(72);
  Tensor s = random_similarity(5, rng);
  LossConfig cfg;
  cfg.gamma = 0.6;
  cfg.stop_grad_weights = true;

  auto [alpha, beta] = difficulty_scores(s, cfg);
  LossResult base = hn_clap_loss(s, cfg);
  // the frozen objective holds alpha/beta at their base-point values
  const double worst = fd_worst(
      s, cfg,
      [&alpha, &beta](const Tensor& m, const LossConfig& c) {
        return hn_clap_loss_with_weights(m, c, alpha, beta).value;
      },
      base);
  CHECK(worst < 1e-5);

  // and it is a different gradient from the full one
  LossConfig full = cfg;
  full.stop_grad_weights = false;
  CHECK(max_abs_diff(hn_clap_loss(s, full).d_s, base.d_s) > 1e-9);
}
