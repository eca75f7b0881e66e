#include <gtest/gtest.h>

#include <cmath>

#include "logitbench/losses.hpp"
#include "oracles.hpp"

using namespace logitbench;

namespace {

double traced(const Matrix2D& logits, std::vector<std::size_t> labels, const LossConfig& cfg) {
  GradTape t;
  return t.value(apply_loss(t, t.leaf(logits), labels, cfg))(0, 0);
}

}  // namespace

TEST(CrossEntropy, Examples) {
  const auto ce = LossConfig::cross_entropy();
  EXPECT_NEAR(traced(Matrix2D{{0, 0}}, {0}, ce), std::log(2.0), 1e-15);
  EXPECT_NEAR(traced(Matrix2D(1, 10), {3}, ce), std::log(10.0), 1e-15);
  const double e2 = std::exp(2.0);
  const double e1 = std::exp(1.0);
  EXPECT_NEAR(traced(Matrix2D{{2, 1}}, {0}, ce), -std::log(e2 / (e2 + e1)), 1e-15);
  EXPECT_NEAR(traced(Matrix2D{{2, 1}}, {0}, ce), 0.3133, 1e-4);
}

TEST(CrossEntropy, LogitGradientIsSoftmaxMinusOneHot) {
  Rng rng(1);
  const Matrix2D z = oracle::random_matrix(rng, 4, 5);
  const std::vector<std::size_t> labels = {0, 4, 2, 2};
  GradTape t;
  const Var zv = t.leaf(z);
  t.backward(cross_entropy(t, zv, labels));
  const Matrix2D p = rowwise_softmax(z);
  for (std::size_t i = 0; i < 4; ++i) {
    for (std::size_t j = 0; j < 5; ++j) {
      const double expect = (p(i, j) - (labels[i] == j ? 1.0 : 0.0)) / 4.0;
      EXPECT_NEAR(t.grad(zv)(i, j), expect, 1e-15);
    }
  }
}

TEST(CrossEntropy, LabelOutOfRange) {
  EXPECT_THROW(traced(Matrix2D{{0, 0}}, {2}, LossConfig::cross_entropy()), DataError);
  EXPECT_THROW(per_sample_loss(Matrix2D{{0, 0}}, std::vector<std::size_t>{5}, LossConfig::cross_entropy()),
               DataError);
}

TEST(LogitNorm, Examples) {
  const double e = std::exp(1.0);
  EXPECT_NEAR(traced(Matrix2D{{1, 0}}, {0}, LossConfig::logit_norm(1.0)), -std::log(e / (e + 1.0)), 1e-6);
  EXPECT_NEAR(traced(Matrix2D{{1, 0}}, {0}, LossConfig::logit_norm(1.0)), 0.3133, 1e-4);
  for (double c : {-3.0, 0.5, 7.0, 1e4}) {
    EXPECT_NEAR(traced(Matrix2D(1, 10, c), {3}, LossConfig::logit_norm(0.04)), std::log(10.0), 1e-12);
  }
}

TEST(LogitNorm, RejectsNonPositiveTau) {
  EXPECT_THROW(traced(Matrix2D{{1, 0}}, {0}, LossConfig::logit_norm(0.0)), ConfigError);
  EXPECT_THROW(traced(Matrix2D{{1, 0}}, {0}, LossConfig::logit_norm(-1.0)), ConfigError);
}

// Invariance is exact only as eps -> 0; with eps = 1e-7 and |f| near 1 the
// eps term alone moves the loss by a few 1e-9.
TEST(LogitNorm, ScaleInvariance) {
  Rng rng(2);
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t k = 2 + rng.below(9);
    Matrix2D f = oracle::random_matrix(rng, 1, k, -5, 5);
    if (row_l2_norm(f)[0] < 1.0) continue;
    const std::vector<std::size_t> y = {rng.below(k)};
    auto cfg = LossConfig::logit_norm(rng.uniform(0.05, 2.0));
    cfg.stability_eps = 1e-12;
    const double base = traced(f, y, cfg);
    for (double s : {2.0, 10.0, 100.0}) EXPECT_NEAR(traced(scaled(f, s), y, cfg), base, 1e-9);
  }
}

TEST(LogitNorm, NormalizedRowsHaveNormInverseTau) {
  Rng rng(3);
  for (int trial = 0; trial < 2000; ++trial) {
    const std::size_t k = 2 + rng.below(9);
    const Matrix2D f = oracle::random_matrix(rng, 1, k, -5, 5);
    if (row_l2_norm(f)[0] < 0.01) continue;
    const double tau = rng.uniform(0.01, 2.0);
    GradTape t;
    const double n = row_l2_norm(t.value(t.logit_normalize(t.leaf(f), tau, 1e-7)))[0];
    EXPECT_LE(n, 1.0 / tau);
    EXPECT_GE(n, (1.0 / tau) * (1.0 - 1e-5));
  }
}

TEST(LogitNorm, PerSampleLossRespectsLowerBound) {
  Rng rng(4);
  const double taus[] = {0.01, 0.04, 0.5, 1.0, 2.0};
  for (int trial = 0; trial < 10000; ++trial) {
    const std::size_t k = 2 + rng.below(19);
    const Matrix2D f = oracle::random_matrix(rng, 1, k, -20, 20);
    const double tau = taus[rng.below(5)];
    const std::vector<std::size_t> y = {rng.below(k)};
    const double loss = per_sample_loss(f, y, LossConfig::logit_norm(tau))[0];
    ASSERT_GE(loss, logitnorm_lower_bound(k, tau) - 1e-12) << "k=" << k << " tau=" << tau;
  }
}

// Two classes in closed form: the normalized logits are +-1/(tau*sqrt2).
TEST(LogitNorm, TwoClassClosedForm) {
  for (double tau : {0.5, 1.0, 2.0}) {
    const double loss = per_sample_loss(Matrix2D{{1, -1}}, std::vector<std::size_t>{0}, LossConfig::logit_norm(tau))[0];
    EXPECT_NEAR(loss, std::log1p(std::exp(-std::sqrt(2.0) / tau)), 1e-6);
    EXPECT_GE(loss, logitnorm_lower_bound(2, tau));
  }
}

TEST(LowerBound, Examples) {
  EXPECT_NEAR(logitnorm_lower_bound(10, 1.0), 0.7966, 1e-4);
  EXPECT_LT(logitnorm_lower_bound(2, 0.01), 1e-80);
  EXPECT_NEAR(logitnorm_lower_bound(10, 0.04), 9.0 * std::exp(-50.0), 1e-30);
  EXPECT_NEAR(logitnorm_lower_bound(10, 0.04), 1.7e-21, 0.05e-21);
}

TEST(LowerBound, StrictlyIncreasingInTau) {
  for (std::size_t k : {2u, 10u, 100u}) {
    double prev = -1.0;
    for (double tau = 0.05; tau <= 5.0; tau += 0.05) {
      const double b = logitnorm_lower_bound(k, tau);
      EXPECT_GT(b, prev);
      prev = b;
    }
  }
}

TEST(LowerBound, RejectsBadArguments) {
  EXPECT_THROW(logitnorm_lower_bound(1, 1.0), ConfigError);
  EXPECT_THROW(logitnorm_lower_bound(10, 0.0), ConfigError);
}

TEST(LogitPenalty, Examples) {
  Rng rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    const Matrix2D f = oracle::random_matrix(rng, 3, 4);
    const std::vector<std::size_t> y = {0, 1, 3};
    EXPECT_EQ(traced(f, y, LossConfig::logit_penalty(0.0)), traced(f, y, LossConfig::cross_entropy()));
  }
  EXPECT_NEAR(traced(Matrix2D{{0, 0}}, {0}, LossConfig::logit_penalty(0.05)), std::log(2.0), 1e-15);
  const double e3 = std::exp(3.0);
  const double e4 = std::exp(4.0);
  EXPECT_NEAR(traced(Matrix2D{{3, 4}}, {1}, LossConfig::logit_penalty(0.1)), -std::log(e4 / (e3 + e4)) + 0.5, 1e-15);
}

TEST(Losses, TracedMatchesUntracedMean) {
  Rng rng(6);
  for (const auto& cfg : {LossConfig::cross_entropy(), LossConfig::logit_norm(0.3), LossConfig::logit_penalty(0.2)}) {
    const Matrix2D f = oracle::random_matrix(rng, 6, 5);
    const std::vector<std::size_t> y = {0, 1, 2, 3, 4, 0};
    EXPECT_NEAR(traced(f, y, cfg), mean_loss(f, y, cfg), 1e-12);
  }
}

TEST(Losses, GradientsMatchFiniteDifferences) {
  Rng rng(7);
  int checked = 0;
  for (int trial = 0; trial < 40; ++trial) {
    const std::size_t n = 1 + rng.below(6);
    const std::size_t k = 2 + rng.below(7);
    const Matrix2D f = oracle::random_matrix(rng, n, k);
    std::vector<std::size_t> y(n);
    for (auto& v : y) v = rng.below(k);
    for (const auto& cfg : {LossConfig::cross_entropy(), LossConfig::logit_norm(rng.uniform(0.05, 2.0)),
                            LossConfig::logit_penalty(rng.uniform(0.0, 1.0))}) {
      GradTape t;
      const Var fv = t.leaf(f);
      t.backward(apply_loss(t, fv, y, cfg));
      const Matrix2D numeric = oracle::central_difference([&](const Matrix2D& m) { return mean_loss(m, y, cfg); }, f);
      const auto r = oracle::compare_gradients(t.grad(fv), numeric);
      EXPECT_TRUE(r.ok) << loss_name(cfg.kind) << " worst rel " << r.worst_rel;
      ++checked;
    }
  }
  EXPECT_GE(checked, 100);
}

// The norm is not detached: for LogitNorm, the logit gradient is orthogonal
// to the logit vector (the loss is constant along rays).
TEST(LogitNorm, GradientOrthogonalToLogits) {
  Rng rng(8);
  for (int trial = 0; trial < 200; ++trial) {
    const Matrix2D f = oracle::random_matrix(rng, 1, 6);
    GradTape t;
    const Var fv = t.leaf(f);
    t.backward(logitnorm_loss(t, fv, std::vector<std::size_t>{2}, 0.1, 1e-12));
    double dot = 0.0;
    double gn = 0.0;
    for (std::size_t j = 0; j < 6; ++j) {
      dot += t.grad(fv)(0, j) * f(0, j);
      gn += t.grad(fv)(0, j) * t.grad(fv)(0, j);
    }
    EXPECT_LE(std::abs(dot), 1e-9 * std::max(1.0, std::sqrt(gn) * row_l2_norm(f)[0]));
  }
}

TEST(Losses, NamesRoundTrip) {
  for (auto k : {LossKind::CrossEntropy, LossKind::LogitNorm, LossKind::LogitPenalty}) {
    EXPECT_EQ(parse_loss_kind(loss_name(k)), k);
  }
  EXPECT_THROW(parse_loss_kind("focal"), ConfigError);
}
