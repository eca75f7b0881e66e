#include <gtest/gtest.h>

#include <functional>

#include "logitbench/tape.hpp"
#include "oracles.hpp"

using namespace logitbench;

namespace {

// Applies one op to a traced leaf, then reduces through a fixed random
// projection and a sum of squares so every output entry influences the loss.
using UnaryOp = std::function<Var(GradTape&, Var)>;

double reduce(GradTape& t, Var y, const Matrix2D& proj, Var* loss_out) {
  const Var p = t.constant(proj);
  const Var loss = t.sum_squares(t.matmul(y, p));
  if (loss_out) *loss_out = loss;
  return t.value(loss)(0, 0);
}

oracle::GradCheck check_unary(const UnaryOp& op, const Matrix2D& x, const Matrix2D& proj) {
  GradTape t;
  const Var leaf = t.leaf(x);
  Var loss;
  reduce(t, op(t, leaf), proj, &loss);
  t.backward(loss);
  const Matrix2D analytic = t.grad(leaf);
  const Matrix2D numeric = oracle::central_difference(
      [&](const Matrix2D& m) {
        GradTape u;
        return reduce(u, op(u, u.leaf(m)), proj, nullptr);
      },
      x);
  return oracle::compare_gradients(analytic, numeric);
}

}  // namespace

TEST(Tape, SumGradientIsOnes) {
  GradTape t;
  const Var x = t.leaf(Matrix2D{{1.5, -2, 7}});
  const Var s = t.sum(x);
  t.backward(s);
  EXPECT_EQ(t.grad(x), (Matrix2D{{1, 1, 1}}));
}

TEST(Tape, HalfSquaredNormGradientIsInput) {
  GradTape t;
  const Var x = t.leaf(Matrix2D{{3, 4}});
  const Var loss = t.scale(t.sum_squares(x), 0.5);
  t.backward(loss);
  EXPECT_EQ(t.grad(x), (Matrix2D{{3, 4}}));
}

TEST(Tape, BackwardOnNonScalarIsContractError) {
  GradTape t;
  const Var x = t.leaf(Matrix2D{{1, 2}});
  EXPECT_THROW(t.backward(x), ContractError);
}

TEST(Tape, GradBeforeBackwardIsContractError) {
  GradTape t;
  const Var x = t.leaf(Matrix2D{{1, 2}});
  EXPECT_THROW(t.grad(x), ContractError);
  const Var c = t.constant(Matrix2D{{1, 2}});
  t.backward(t.sum(x));
  EXPECT_THROW(t.grad(c), ContractError);
}

TEST(Tape, LabelOutOfRangeIsDataError) {
  GradTape t;
  const Var z = t.leaf(Matrix2D{{1, 2}});
  const std::size_t labels[] = {2};
  EXPECT_THROW(t.softmax_cross_entropy(z, labels), DataError);
}

TEST(Tape, ParentsPrecedeChildren) {
  GradTape t;
  const Var a = t.leaf(Matrix2D{{1, 2}});
  const Var b = t.relu(a);
  const Var c = t.sum(b);
  EXPECT_LT(a.index, b.index);
  EXPECT_LT(b.index, c.index);
  EXPECT_EQ(t.size(), 3u);
  EXPECT_EQ(t.op(b), OpKind::Relu);
}

TEST(Tape, ConstantsDoNotRequireGrad) {
  GradTape t;
  const Var c = t.constant(Matrix2D{{1}});
  const Var w = t.leaf(Matrix2D{{2}});
  EXPECT_FALSE(t.requires_grad(t.relu(c)));
  EXPECT_TRUE(t.requires_grad(t.matmul(c, w)));
}

TEST(TapeGradients, EveryOpMatchesFiniteDifferences) {
  Rng rng(2024);
  int checked = 0;
  for (int trial = 0; trial < 40; ++trial) {
    const std::size_t r = 1 + rng.below(5);
    const std::size_t c = 2 + rng.below(6);
    const Matrix2D x = oracle::random_matrix(rng, r, c);
    const Matrix2D other = oracle::random_matrix(rng, r, c);
    const Matrix2D w = oracle::random_matrix(rng, c, 3);
    const Matrix2D left = oracle::random_matrix(rng, 3, r);
    const Matrix2D bias = oracle::random_matrix(rng, 1, c);
    const Matrix2D proj = oracle::random_matrix(rng, c, 2);
    const Matrix2D proj3 = oracle::random_matrix(rng, 3, 2);
    const Matrix2D proj1 = oracle::random_matrix(rng, 1, 2);
    const double s = rng.uniform(-3, 3);
    const double tau = rng.uniform(0.05, 2.0);

    struct Case {
      const char* name;
      UnaryOp op;
      const Matrix2D* proj;
    };
    const Case cases[] = {
        {"matmul", [&](GradTape& t, Var v) { return t.matmul(v, t.constant(w)); }, &proj3},
        {"matmul_rhs", [&](GradTape& t, Var v) { return t.matmul(t.constant(left), v); }, &proj},
        {"add_bias", [&](GradTape& t, Var v) { return t.add_bias(v, t.constant(bias)); }, &proj},
        {"add", [&](GradTape& t, Var v) { return t.add(v, t.constant(other)); }, &proj},
        {"relu", [&](GradTape& t, Var v) { return t.relu(v); }, &proj},
        {"scale", [&](GradTape& t, Var v) { return t.scale(v, s); }, &proj},
        {"row_norm", [&](GradTape& t, Var v) { return t.row_norm(v); }, &proj1},
        {"logit_normalize", [&](GradTape& t, Var v) { return t.logit_normalize(v, tau, 1e-7); }, &proj},
        {"mean", [&](GradTape& t, Var v) { return t.mean(v); }, &proj1},
        {"sum", [&](GradTape& t, Var v) { return t.sum(v); }, &proj1},
        {"sum_squares", [&](GradTape& t, Var v) { return t.sum_squares(v); }, &proj1},
    };
    for (const auto& cs : cases) {
      const auto result = check_unary(cs.op, x, *cs.proj);
      EXPECT_TRUE(result.ok) << cs.name << " trial " << trial << " worst rel " << result.worst_rel;
      ++checked;
    }
  }
  EXPECT_GE(checked, 100);
}

TEST(TapeGradients, BiasGradientMatchesFiniteDifferences) {
  Rng rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    const Matrix2D a = oracle::random_matrix(rng, 4, 3);
    const Matrix2D bias = oracle::random_matrix(rng, 1, 3);
    const Matrix2D proj = oracle::random_matrix(rng, 3, 2);
    const auto result = check_unary(
        [&](GradTape& t, Var b) { return t.relu(t.add_bias(t.constant(a), b)); }, bias, proj);
    EXPECT_TRUE(result.ok) << result.worst_rel;
  }
}

TEST(TapeGradients, CrossEntropyWeightGradient) {
  Rng rng(77);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t n = 1 + rng.below(6);
    const std::size_t d = 2 + rng.below(5);
    const std::size_t k = 2 + rng.below(5);
    const Matrix2D x = oracle::random_matrix(rng, n, d);
    const Matrix2D w = oracle::random_matrix(rng, d, k);
    std::vector<std::size_t> labels(n);
    for (auto& y : labels) y = rng.below(k);
    auto loss_of = [&](GradTape& t, Var wv) { return t.softmax_cross_entropy(t.matmul(t.constant(x), wv), labels); };
    GradTape t;
    const Var wv = t.leaf(w);
    t.backward(loss_of(t, wv));
    const Matrix2D numeric = oracle::central_difference(
        [&](const Matrix2D& m) {
          GradTape u;
          return u.value(loss_of(u, u.leaf(m)))(0, 0);
        },
        w);
    const auto result = oracle::compare_gradients(t.grad(wv), numeric);
    EXPECT_TRUE(result.ok) << result.worst_rel;
  }
}

TEST(TapeGradients, SoftTargetCrossEntropy) {
  Rng rng(78);
  for (int trial = 0; trial < 20; ++trial) {
    const Matrix2D z = oracle::random_matrix(rng, 3, 4);
    Matrix2D targets = rowwise_softmax(oracle::random_matrix(rng, 3, 4));
    auto loss_of = [&](GradTape& t, Var zv) { return t.softmax_cross_entropy(zv, targets); };
    GradTape t;
    const Var zv = t.leaf(z);
    t.backward(loss_of(t, zv));
    const Matrix2D numeric = oracle::central_difference(
        [&](const Matrix2D& m) {
          GradTape u;
          return u.value(loss_of(u, u.leaf(m)))(0, 0);
        },
        z);
    EXPECT_TRUE(oracle::compare_gradients(t.grad(zv), numeric).ok);
  }
}

TEST(Tape, ReplayIsBitIdentical) {
  Rng rng(9);
  const Matrix2D x = oracle::random_matrix(rng, 5, 4);
  const Matrix2D w = oracle::random_matrix(rng, 4, 3);
  const std::size_t labels[] = {0, 1, 2, 0, 1};
  auto run = [&] {
    GradTape t;
    const Var wv = t.leaf(w);
    const Var z = t.logit_normalize(t.matmul(t.constant(x), wv), 0.5, 1e-7);
    t.backward(t.softmax_cross_entropy(z, labels));
    return t.grad(wv);
  };
  EXPECT_EQ(run(), run());
}
