#pragma once

// Test-only reference implementations. Nothing here calls into the code path
// it is used to check.

#include <algorithm>
#include <cmath>
#include <functional>
#include <set>
#include <vector>

#include "logitbench/matrix.hpp"
#include "logitbench/rng.hpp"
#include "logitbench/scores.hpp"

namespace oracle {

using logitbench::Matrix2D;
using logitbench::Origin;
using logitbench::ScoredExample;

// Central finite differences of a scalar function of one matrix.
inline Matrix2D central_difference(const std::function<double(const Matrix2D&)>& f, const Matrix2D& at,
                                   double h = 1e-5) {
  Matrix2D grad(at.rows(), at.cols());
  Matrix2D probe = at;
  for (std::size_t i = 0; i < at.size(); ++i) {
    const double saved = probe.data()[i];
    probe.data()[i] = saved + h;
    const double up = f(probe);
    probe.data()[i] = saved - h;
    const double down = f(probe);
    probe.data()[i] = saved;
    grad.data()[i] = (up - down) / (2.0 * h);
  }
  return grad;
}

struct GradCheck {
  bool ok = true;
  double worst_rel = 0.0;
  double worst_abs = 0.0;
};

// Entry-wise agreement: relative error <= rel_tol, or absolute error <= abs_tol
// where both values are near zero.
inline GradCheck compare_gradients(const Matrix2D& analytic, const Matrix2D& numeric, double rel_tol = 1e-4,
                                   double abs_tol = 1e-6) {
  GradCheck r;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    const double a = analytic.data()[i];
    const double n = numeric.data()[i];
    const double abs_err = std::abs(a - n);
    const double rel_err = abs_err / std::max(std::abs(a), std::abs(n));
    if (abs_err <= abs_tol) continue;
    r.worst_rel = std::max(r.worst_rel, rel_err);
    r.worst_abs = std::max(r.worst_abs, abs_err);
    if (rel_err > rel_tol) r.ok = false;
  }
  return r;
}

inline Matrix2D random_matrix(logitbench::Rng& rng, std::size_t rows, std::size_t cols, double lo = -2.0,
                              double hi = 2.0) {
  Matrix2D m(rows, cols);
  for (double& v : m.data()) v = rng.uniform(lo, hi);
  return m;
}

// O(n m) Mann-Whitney count.
inline double pairwise_auroc(const std::vector<ScoredExample>& scored) {
  double wins = 0.0;
  double pairs = 0.0;
  for (const auto& a : scored) {
    if (a.origin != Origin::ID) continue;
    for (const auto& b : scored) {
      if (b.origin != Origin::OOD) continue;
      pairs += 1.0;
      if (a.score > b.score) wins += 1.0;
      if (a.score == b.score) wins += 0.5;
    }
  }
  return wins / pairs;
}

// Tries every distinct score as the threshold and keeps the largest one whose
// ID acceptance count reaches ceil(tpr * n_id).
inline double exhaustive_fpr(const std::vector<ScoredExample>& scored, std::size_t need_tp) {
  std::set<double> candidates;
  for (const auto& s : scored) candidates.insert(s.score);
  double best_gamma = -INFINITY;
  for (double g : candidates) {
    std::size_t tp = 0;
    for (const auto& s : scored)
      if (s.origin == Origin::ID && s.score >= g) ++tp;
    if (tp >= need_tp) best_gamma = std::max(best_gamma, g);
  }
  std::size_t fp = 0;
  std::size_t n_ood = 0;
  for (const auto& s : scored) {
    if (s.origin != Origin::OOD) continue;
    ++n_ood;
    if (s.score >= best_gamma) ++fp;
  }
  return static_cast<double>(fp) / static_cast<double>(n_ood);
}

// Precision/recall recomputed from scratch at every distinct threshold,
// highest first; step-wise area sum of (delta recall) * precision.
inline double brute_aupr(const std::vector<ScoredExample>& scored) {
  std::set<double, std::greater<>> thresholds;
  std::size_t n_id = 0;
  for (const auto& s : scored) {
    thresholds.insert(s.score);
    if (s.origin == Origin::ID) ++n_id;
  }
  double prev_recall = 0.0;
  double area = 0.0;
  for (double t : thresholds) {
    std::size_t tp = 0;
    std::size_t fp = 0;
    for (const auto& s : scored) {
      if (s.score < t) continue;
      (s.origin == Origin::ID ? tp : fp) += 1;
    }
    const double recall = static_cast<double>(tp) / static_cast<double>(n_id);
    const double precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
    area += (recall - prev_recall) * precision;
    prev_recall = recall;
  }
  return area;
}

// Random score sets with deliberate ties: integer scores from a small range,
// ID shifted upward on average. Integers keep monotone transforms exact.
inline std::vector<ScoredExample> random_scores(logitbench::Rng& rng, std::size_t max_n = 50) {
  const std::size_t n = 1 + rng.below(max_n);
  const std::size_t m = 1 + rng.below(max_n);
  const std::size_t levels = 2 + rng.below(30);
  std::vector<ScoredExample> out;
  for (std::size_t i = 0; i < n; ++i) {
    out.push_back({static_cast<double>(rng.below(levels) + rng.below(4)), Origin::ID});
  }
  for (std::size_t i = 0; i < m; ++i) {
    out.push_back({static_cast<double>(rng.below(levels)), Origin::OOD});
  }
  return out;
}

}  // namespace oracle
