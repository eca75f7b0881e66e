#pragma once

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "logitbench/errors.hpp"
#include "logitbench/matrix.hpp"
#include "logitbench/tape.hpp"

namespace logitbench {

enum class LossKind { CrossEntropy, LogitNorm, LogitPenalty };

struct LossConfig {
  LossKind kind = LossKind::CrossEntropy;
  double tau = 0.04;
  double lambda = 0.05;
  double stability_eps = 1e-7;

  static LossConfig cross_entropy() { return {}; }
  static LossConfig logit_norm(double tau = 0.04) {
    LossConfig c;
    c.kind = LossKind::LogitNorm;
    c.tau = tau;
    return c;
  }
  static LossConfig logit_penalty(double lambda = 0.05) {
    LossConfig c;
    c.kind = LossKind::LogitPenalty;
    c.lambda = lambda;
    return c;
  }

  void validate() const {
    if (!(stability_eps > 0.0)) throw ConfigError("stability_eps must be positive");
    if (kind == LossKind::LogitNorm && !(tau > 0.0)) throw ConfigError("LogitNorm tau must be positive");
    if (kind == LossKind::LogitPenalty && !(lambda >= 0.0)) {
      throw ConfigError("LogitPenalty lambda must be nonnegative");
    }
  }
};

inline std::string loss_name(LossKind kind) {
  switch (kind) {
    case LossKind::CrossEntropy: return "ce";
    case LossKind::LogitNorm: return "logitnorm";
    case LossKind::LogitPenalty: return "logitpenalty";
  }
  return "?";
}

inline LossKind parse_loss_kind(const std::string& name) {
  if (name == "ce" || name == "cross_entropy") return LossKind::CrossEntropy;
  if (name == "logitnorm" || name == "logit_norm") return LossKind::LogitNorm;
  if (name == "logitpenalty" || name == "logit_penalty") return LossKind::LogitPenalty;
  throw ConfigError("unknown loss kind '" + name + "'");
}

// Mean softmax cross-entropy over the batch.
inline Var cross_entropy(GradTape& tape, Var logits, std::span<const std::size_t> labels) {
  return tape.softmax_cross_entropy(logits, labels);
}

// Cross-entropy on f / (tau (||f|| + eps)). The norm is differentiated, not
// treated as a constant.
inline Var logitnorm_loss(GradTape& tape, Var logits, std::span<const std::size_t> labels, double tau,
                          double stability_eps = 1e-7) {
  if (!(tau > 0.0)) throw ConfigError("logitnorm_loss: tau must be positive");
  if (!(stability_eps > 0.0)) throw ConfigError("logitnorm_loss: stability_eps must be positive");
  return tape.softmax_cross_entropy(tape.logit_normalize(logits, tau, stability_eps), labels);
}

// mean_i [CE_i + lambda ||f_i||]
inline Var logit_penalty_loss(GradTape& tape, Var logits, std::span<const std::size_t> labels, double lambda) {
  if (!(lambda >= 0.0)) throw ConfigError("logit_penalty_loss: lambda must be nonnegative");
  Var ce = tape.softmax_cross_entropy(logits, labels);
  return tape.add(ce, tape.scale(tape.mean(tape.row_norm(logits)), lambda));
}

inline Var apply_loss(GradTape& tape, Var logits, std::span<const std::size_t> labels, const LossConfig& cfg) {
  switch (cfg.kind) {
    case LossKind::CrossEntropy: return cross_entropy(tape, logits, labels);
    case LossKind::LogitNorm: return logitnorm_loss(tape, logits, labels, cfg.tau, cfg.stability_eps);
    case LossKind::LogitPenalty: return logit_penalty_loss(tape, logits, labels, cfg.lambda);
  }
  throw ConfigError("unknown loss kind");
}

// Untraced per-sample loss values, one per row.
inline std::vector<double> per_sample_loss(const Matrix2D& logits, std::span<const std::size_t> labels,
                                           const LossConfig& cfg) {
  cfg.validate();
  if (labels.size() != logits.rows()) throw ShapeError("per_sample_loss: label count mismatch");
  std::vector<double> out(logits.rows());
  std::vector<double> row;
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    if (labels[i] >= logits.cols()) throw DataError("per_sample_loss: label out of range at row " + std::to_string(i));
    const auto f = logits.row(i);
    row.assign(f.begin(), f.end());
    const double norm = l2_norm(f);
    if (cfg.kind == LossKind::LogitNorm) {
      const double denom = cfg.tau * (norm + cfg.stability_eps);
      for (double& v : row) v /= denom;
    }
    out[i] = logsumexp(row) - row[labels[i]];
    if (cfg.kind == LossKind::LogitPenalty) out[i] += cfg.lambda * norm;
  }
  return out;
}

inline double mean_loss(const Matrix2D& logits, std::span<const std::size_t> labels, const LossConfig& cfg) {
  const auto per = per_sample_loss(logits, labels, cfg);
  double total = 0.0;
  for (double v : per) total += v;
  return total / static_cast<double>(per.size());
}

// Smallest value the per-sample LogitNorm loss can take with k classes:
// log(1 + (k - 1) exp(-2 / tau)).
inline double logitnorm_lower_bound(std::size_t k, double tau) {
  if (k < 2) throw ConfigError("logitnorm_lower_bound: need at least 2 classes");
  if (!(tau > 0.0)) throw ConfigError("logitnorm_lower_bound: tau must be positive");
  return std::log1p(static_cast<double>(k - 1) * std::exp(-2.0 / tau));
}

}  // namespace logitbench
