#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "logitbench/errors.hpp"
#include "logitbench/matrix.hpp"

namespace logitbench {

// Handle to a node on a GradTape. Only meaningful for the tape that issued it.
struct Var {
  std::size_t index = 0;
};

enum class OpKind {
  Leaf,
  MatMul,
  AddBias,
  Add,
  Relu,
  Scale,
  RowNorm,
  LogitNormalize,
  SoftmaxCrossEntropy,
  Mean,
  Sum,
  SumSquares,
};

// Reverse-mode differentiation record at matrix granularity. Nodes are
// appended in evaluation order, so parents always precede children and a
// single reverse sweep visits each node once.
//
// Gradients are only tracked for nodes that depend on a leaf created with
// requires_grad; constant inputs (training batches) cost nothing extra.
class GradTape {
 public:
  struct Node {
    OpKind op = OpKind::Leaf;
    std::size_t parents[2] = {kNone, kNone};
    Matrix2D value;
    Matrix2D grad;
    // Softmax probabilities for the fused CE node; target distribution in targets.
    Matrix2D aux;
    Matrix2D targets;
    double p0 = 0.0;
    double p1 = 0.0;
    bool requires_grad = false;
  };

  static constexpr std::size_t kNone = static_cast<std::size_t>(-1);

  Var leaf(Matrix2D value, bool requires_grad = true) {
    Node n;
    n.value = std::move(value);
    n.requires_grad = requires_grad;
    return push(std::move(n));
  }

  Var constant(Matrix2D value) { return leaf(std::move(value), false); }

  const Matrix2D& value(Var v) const { return node(v).value; }

  // Gradient of the last backward() target with respect to v. Zero-filled
  // when v does not influence the target.
  const Matrix2D& grad(Var v) const {
    const Node& n = node(v);
    if (!n.requires_grad) throw ContractError("grad requested for a node without requires_grad");
    if (n.grad.empty() && !n.value.empty()) {
      throw ContractError("grad requested before backward()");
    }
    return n.grad;
  }

  bool requires_grad(Var v) const { return node(v).requires_grad; }
  std::size_t size() const { return nodes_.size(); }
  OpKind op(Var v) const { return node(v).op; }

  Var matmul(Var a, Var b) {
    return unary_or_binary(OpKind::MatMul, a, b, logitbench::matmul(value(a), value(b)));
  }

  // Adds a 1 x cols bias row to every row of a.
  Var add_bias(Var a, Var bias) {
    return unary_or_binary(OpKind::AddBias, a, bias, add_row_bias(value(a), value(bias)));
  }

  Var add(Var a, Var b) {
    return unary_or_binary(OpKind::Add, a, b, logitbench::add(value(a), value(b)));
  }

  Var relu(Var a) {
    Matrix2D out = value(a);
    for (double& v : out.data()) v = v > 0.0 ? v : 0.0;
    return unary_or_binary(OpKind::Relu, a, Var{kNone}, std::move(out));
  }

  Var scale(Var a, double s) {
    Var v = unary_or_binary(OpKind::Scale, a, Var{kNone}, scaled(value(a), s));
    nodes_[v.index].p0 = s;
    return v;
  }

  // Per-row Euclidean norm, rows x 1.
  Var row_norm(Var a) {
    const auto norms = row_l2_norm(value(a));
    return unary_or_binary(OpKind::RowNorm, a, Var{kNone}, Matrix2D(norms.size(), 1, norms));
  }

  // Each row divided by tau * (||row|| + eps).
  Var logit_normalize(Var a, double tau, double eps) {
    const Matrix2D& z = value(a);
    Matrix2D out = z;
    for (std::size_t i = 0; i < out.rows(); ++i) {
      const double denom = tau * (l2_norm(z.row(i)) + eps);
      for (double& v : out.row(i)) v /= denom;
    }
    Var v = unary_or_binary(OpKind::LogitNormalize, a, Var{kNone}, std::move(out));
    nodes_[v.index].p0 = tau;
    nodes_[v.index].p1 = eps;
    return v;
  }

  // Mean over rows of -sum_j t_ij log softmax(z)_ij, fused so log(0) never
  // appears. targets has the shape of z; each row a distribution.
  Var softmax_cross_entropy(Var z, Matrix2D targets) {
    const Matrix2D& logits = value(z);
    if (!targets.same_shape(logits)) {
      throw ShapeError("softmax_cross_entropy: targets " + shape_string(targets) + " vs logits " +
                       shape_string(logits));
    }
    if (logits.rows() == 0) throw DataError("softmax_cross_entropy: empty batch");
    Matrix2D probs(logits.rows(), logits.cols());
    double total = 0.0;
    for (std::size_t i = 0; i < logits.rows(); ++i) {
      const auto row = logits.row(i);
      const double lse = logsumexp(row);
      for (std::size_t j = 0; j < row.size(); ++j) {
        probs(i, j) = std::exp(row[j] - lse);
        const double t = targets(i, j);
        if (t != 0.0) total -= t * (row[j] - lse);
      }
    }
    Matrix2D loss(1, 1, total / static_cast<double>(logits.rows()));
    Var v = unary_or_binary(OpKind::SoftmaxCrossEntropy, z, Var{kNone}, std::move(loss));
    nodes_[v.index].aux = std::move(probs);
    nodes_[v.index].targets = std::move(targets);
    return v;
  }

  Var softmax_cross_entropy(Var z, std::span<const std::size_t> labels) {
    const Matrix2D& logits = value(z);
    if (labels.size() != logits.rows()) {
      throw ShapeError("softmax_cross_entropy: " + std::to_string(labels.size()) +
                       " labels for " + std::to_string(logits.rows()) + " rows");
    }
    Matrix2D onehot(logits.rows(), logits.cols());
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (labels[i] >= logits.cols()) {
        throw DataError("label " + std::to_string(labels[i]) + " out of range [0," +
                        std::to_string(logits.cols()) + ") at row " + std::to_string(i));
      }
      onehot(i, labels[i]) = 1.0;
    }
    return softmax_cross_entropy(z, std::move(onehot));
  }

  Var mean(Var a) {
    const Matrix2D& m = value(a);
    double total = 0.0;
    for (double v : m.data()) total += v;
    return unary_or_binary(OpKind::Mean, a, Var{kNone},
                           Matrix2D(1, 1, total / static_cast<double>(m.size())));
  }

  Var sum(Var a) {
    double total = 0.0;
    for (double v : value(a).data()) total += v;
    return unary_or_binary(OpKind::Sum, a, Var{kNone}, Matrix2D(1, 1, total));
  }

  Var sum_squares(Var a) {
    double total = 0.0;
    for (double v : value(a).data()) total += v * v;
    return unary_or_binary(OpKind::SumSquares, a, Var{kNone}, Matrix2D(1, 1, total));
  }

  // Propagates d(loss)/d(node) to every node that requires a gradient.
  void backward(Var loss) {
    const Node& target = node(loss);
    if (target.value.rows() != 1 || target.value.cols() != 1) {
      throw ContractError("backward: loss node is " + shape_string(target.value) +
                          ", expected a scalar");
    }
    for (Node& n : nodes_) {
      n.grad = n.requires_grad ? Matrix2D(n.value.rows(), n.value.cols()) : Matrix2D();
    }
    if (!target.requires_grad) return;
    nodes_[loss.index].grad(0, 0) = 1.0;
    for (std::size_t i = loss.index + 1; i-- > 0;) {
      if (nodes_[i].requires_grad && nodes_[i].op != OpKind::Leaf) propagate(i);
    }
  }

 private:
  const Node& node(Var v) const {
    if (v.index >= nodes_.size()) throw ContractError("Var does not belong to this tape");
    return nodes_[v.index];
  }

  Var push(Node n) {
    nodes_.push_back(std::move(n));
    return Var{nodes_.size() - 1};
  }

  Var unary_or_binary(OpKind op, Var a, Var b, Matrix2D value) {
    require_finite(value, "GradTape");
    Node n;
    n.op = op;
    n.parents[0] = a.index;
    n.parents[1] = b.index;
    n.requires_grad = node(a).requires_grad || (b.index != kNone && node(b).requires_grad);
    n.value = std::move(value);
    return push(std::move(n));
  }

  void accumulate(std::size_t index, const Matrix2D& delta) {
    Node& n = nodes_[index];
    if (!n.requires_grad) return;
    auto dst = n.grad.data();
    const auto src = delta.data();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
  }

  bool wants(std::size_t parent) const {
    return parent != kNone && nodes_[parent].requires_grad;
  }

  void propagate(std::size_t i) {
    const Node& n = nodes_[i];
    const std::size_t pa = n.parents[0];
    const std::size_t pb = n.parents[1];
    const Matrix2D& g = n.grad;
    switch (n.op) {
      case OpKind::Leaf:
        break;
      case OpKind::MatMul:
        if (wants(pa)) accumulate(pa, matmul_a_bt(g, nodes_[pb].value));
        if (wants(pb)) accumulate(pb, matmul_at_b(nodes_[pa].value, g));
        break;
      case OpKind::AddBias:
        if (wants(pa)) accumulate(pa, g);
        if (wants(pb)) {
          Matrix2D db(1, g.cols());
          for (std::size_t r = 0; r < g.rows(); ++r)
            for (std::size_t c = 0; c < g.cols(); ++c) db(0, c) += g(r, c);
          accumulate(pb, db);
        }
        break;
      case OpKind::Add:
        if (wants(pa)) accumulate(pa, g);
        if (wants(pb)) accumulate(pb, g);
        break;
      case OpKind::Relu: {
        if (!wants(pa)) break;
        Matrix2D d = g;
        const auto out = n.value.data();
        auto dd = d.data();
        for (std::size_t k = 0; k < dd.size(); ++k)
          if (out[k] <= 0.0) dd[k] = 0.0;
        accumulate(pa, d);
        break;
      }
      case OpKind::Scale:
        if (wants(pa)) accumulate(pa, scaled(g, n.p0));
        break;
      case OpKind::RowNorm: {
        if (!wants(pa)) break;
        const Matrix2D& a = nodes_[pa].value;
        Matrix2D d(a.rows(), a.cols());
        for (std::size_t r = 0; r < a.rows(); ++r) {
          const double norm = n.value(r, 0);
          if (norm == 0.0) continue;  // subgradient 0 at the origin
          const double coef = g(r, 0) / norm;
          for (std::size_t c = 0; c < a.cols(); ++c) d(r, c) = coef * a(r, c);
        }
        accumulate(pa, d);
        break;
      }
      case OpKind::LogitNormalize: {
        if (!wants(pa)) break;
        // y = a / (tau (n + eps)), n = ||a||
        // dL/da = g / (tau (n + eps)) - a (g . a) / (tau (n + eps)^2 n)
        const Matrix2D& a = nodes_[pa].value;
        const double tau = n.p0;
        const double eps = n.p1;
        Matrix2D d(a.rows(), a.cols());
        for (std::size_t r = 0; r < a.rows(); ++r) {
          const auto ar = a.row(r);
          const auto gr = g.row(r);
          const double norm = l2_norm(ar);
          const double denom = tau * (norm + eps);
          double g_dot_a = 0.0;
          for (std::size_t c = 0; c < ar.size(); ++c) g_dot_a += gr[c] * ar[c];
          const double radial = norm > 0.0 ? g_dot_a / (denom * (norm + eps) * norm) : 0.0;
          for (std::size_t c = 0; c < ar.size(); ++c) d(r, c) = gr[c] / denom - radial * ar[c];
        }
        accumulate(pa, d);
        break;
      }
      case OpKind::SoftmaxCrossEntropy: {
        if (!wants(pa)) break;
        // d/dz of mean_i CE_i = (softmax - t) * (row mass of t) / batch
        const double upstream = g(0, 0) / static_cast<double>(n.aux.rows());
        Matrix2D d(n.aux.rows(), n.aux.cols());
        for (std::size_t r = 0; r < d.rows(); ++r) {
          double mass = 0.0;
          for (double t : n.targets.row(r)) mass += t;
          for (std::size_t c = 0; c < d.cols(); ++c)
            d(r, c) = upstream * (mass * n.aux(r, c) - n.targets(r, c));
        }
        accumulate(pa, d);
        break;
      }
      case OpKind::Mean: {
        if (!wants(pa)) break;
        const Matrix2D& a = nodes_[pa].value;
        accumulate(pa, Matrix2D(a.rows(), a.cols(), g(0, 0) / static_cast<double>(a.size())));
        break;
      }
      case OpKind::Sum: {
        if (!wants(pa)) break;
        const Matrix2D& a = nodes_[pa].value;
        accumulate(pa, Matrix2D(a.rows(), a.cols(), g(0, 0)));
        break;
      }
      case OpKind::SumSquares:
        if (wants(pa)) accumulate(pa, scaled(nodes_[pa].value, 2.0 * g(0, 0)));
        break;
    }
  }

  std::vector<Node> nodes_;
};

}  // namespace logitbench
