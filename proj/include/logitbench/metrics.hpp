#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <ostream>
#include <span>
#include <vector>

#include "logitbench/errors.hpp"
#include "logitbench/matrix.hpp"
#include "logitbench/scores.hpp"

namespace logitbench {

// ID is the positive class throughout: a threshold gamma accepts x as ID
// when score(x) >= gamma.

struct DetectionReport {
  double fpr_at_95_tpr = 0.0;
  double auroc = 0.0;
  double aupr = 0.0;
  std::size_t n_id = 0;
  std::size_t n_ood = 0;
};

namespace detail {

struct SplitScores {
  std::vector<double> id;
  std::vector<double> ood;
};

inline SplitScores split_by_origin(std::span<const ScoredExample> scored) {
  SplitScores s;
  for (const auto& e : scored) (e.origin == Origin::ID ? s.id : s.ood).push_back(e.score);
  if (s.id.empty() || s.ood.empty()) throw DataError("detection metrics need at least one ID and one OOD score");
  return s;
}

}  // namespace detail

// Number of ID points a threshold must admit to reach tpr_target:
// ceil(tpr_target * n_id), guarded against 0.95 * 20 = 19.000000000000004.
inline std::size_t required_true_positives(double tpr_target, std::size_t n_id) {
  const double exact = tpr_target * static_cast<double>(n_id);
  const double rounded = std::round(exact);
  const double need = std::abs(exact - rounded) < 1e-9 ? rounded : std::ceil(exact);
  return std::max<std::size_t>(1, static_cast<std::size_t>(need));
}

// FPR at the largest threshold whose ID acceptance rate reaches tpr_target.
inline double fpr_at_tpr(std::span<const ScoredExample> scored, double tpr_target = 0.95) {
  if (!(tpr_target > 0.0 && tpr_target <= 1.0)) throw ConfigError("fpr_at_tpr: tpr_target must lie in (0, 1]");
  auto s = detail::split_by_origin(scored);
  std::sort(s.id.begin(), s.id.end(), std::greater<>());
  const std::size_t need = required_true_positives(tpr_target, s.id.size());
  const double gamma = s.id[need - 1];
  const auto accepted = std::count_if(s.ood.begin(), s.ood.end(), [gamma](double v) { return v >= gamma; });
  return static_cast<double>(accepted) / static_cast<double>(s.ood.size());
}

// Probability that a random ID score beats a random OOD score, ties worth
// one half. Computed from mid-ranks of the pooled sample.
inline double auroc(std::span<const ScoredExample> scored) {
  const auto s = detail::split_by_origin(scored);
  std::vector<std::pair<double, bool>> pooled;
  pooled.reserve(scored.size());
  for (double v : s.id) pooled.emplace_back(v, true);
  for (double v : s.ood) pooled.emplace_back(v, false);
  std::sort(pooled.begin(), pooled.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  double id_rank_sum = 0.0;
  for (std::size_t i = 0; i < pooled.size();) {
    std::size_t j = i;
    while (j < pooled.size() && pooled[j].first == pooled[i].first) ++j;
    // ranks i+1 .. j share the mid-rank
    const double mid_rank = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t t = i; t < j; ++t)
      if (pooled[t].second) id_rank_sum += mid_rank;
    i = j;
  }
  const double n = static_cast<double>(s.id.size());
  const double m = static_cast<double>(s.ood.size());
  return (id_rank_sum - n * (n + 1.0) / 2.0) / (n * m);
}

// Area under precision-recall with ID positive: a descending sweep over
// distinct scores, sum of (recall step) * precision.
inline double aupr(std::span<const ScoredExample> scored) {
  const auto s = detail::split_by_origin(scored);
  std::vector<std::pair<double, bool>> pooled;
  pooled.reserve(scored.size());
  for (double v : s.id) pooled.emplace_back(v, true);
  for (double v : s.ood) pooled.emplace_back(v, false);
  std::sort(pooled.begin(), pooled.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
  const double n_id = static_cast<double>(s.id.size());
  std::size_t tp = 0;
  std::size_t fp = 0;
  double prev_recall = 0.0;
  double area = 0.0;
  for (std::size_t i = 0; i < pooled.size();) {
    std::size_t j = i;
    while (j < pooled.size() && pooled[j].first == pooled[i].first) {
      (pooled[j].second ? tp : fp) += 1;
      ++j;
    }
    const double recall = static_cast<double>(tp) / n_id;
    const double precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
    area += (recall - prev_recall) * precision;
    prev_recall = recall;
    i = j;
  }
  return area;
}

inline DetectionReport detection_report(std::span<const ScoredExample> scored, double tpr_target = 0.95) {
  const auto s = detail::split_by_origin(scored);
  return {fpr_at_tpr(scored, tpr_target), auroc(scored), aupr(scored), s.id.size(), s.ood.size()};
}

// ---- calibration ---------------------------------------------------------------

struct CalibrationBin {
  double confidence = 0.0;  // mean confidence, 0 for an empty bin
  double accuracy = 0.0;
  std::size_t count = 0;
};

struct CalibrationReport {
  double ece = 0.0;
  std::vector<CalibrationBin> bins;
  std::optional<double> fitted_T;
};

// Bin index for equal-width bins on [0, 1]: bin 0 is [0, 1/M], bin b > 0 is
// (b/M, (b+1)/M].
inline std::size_t calibration_bin(double confidence, std::size_t M) {
  const double scaled = confidence * static_cast<double>(M);
  auto b = static_cast<std::ptrdiff_t>(std::ceil(scaled)) - 1;
  const auto last = static_cast<std::ptrdiff_t>(M) - 1;
  b = std::clamp<std::ptrdiff_t>(b, 0, last);
  while (b > 0 && confidence <= static_cast<double>(b) / static_cast<double>(M)) --b;
  while (b < last && confidence > static_cast<double>(b + 1) / static_cast<double>(M)) ++b;
  return static_cast<std::size_t>(b);
}

inline CalibrationReport ece(std::span<const double> confidences, const std::vector<bool>& correct,
                             std::size_t M = 15) {
  if (confidences.size() != correct.size()) throw DataError("ece: confidences and correctness lengths differ");
  if (confidences.empty()) throw DataError("ece: no predictions");
  if (M < 1) throw ConfigError("ece: need at least one bin");
  CalibrationReport report;
  report.bins.resize(M);
  std::vector<double> conf_sum(M, 0.0);
  std::vector<std::size_t> hits(M, 0);
  for (std::size_t i = 0; i < confidences.size(); ++i) {
    const double c = confidences[i];
    if (!(c >= 0.0 && c <= 1.0)) throw DataError("ece: confidence outside [0, 1]");
    const std::size_t b = calibration_bin(c, M);
    conf_sum[b] += c;
    hits[b] += correct[i] ? 1 : 0;
    report.bins[b].count += 1;
  }
  const double n = static_cast<double>(confidences.size());
  for (std::size_t b = 0; b < M; ++b) {
    auto& bin = report.bins[b];
    if (bin.count == 0) continue;
    const double cnt = static_cast<double>(bin.count);
    bin.confidence = conf_sum[b] / cnt;
    bin.accuracy = static_cast<double>(hits[b]) / cnt;
    report.ece += (cnt / n) * std::abs(bin.accuracy - bin.confidence);
  }
  return report;
}

// Max-softmax confidence and correctness of every row of logits / T.
inline std::pair<std::vector<double>, std::vector<bool>> confidences_from_logits(
    const Matrix2D& logits, std::span<const std::size_t> labels, double T = 1.0) {
  if (labels.size() != logits.rows()) throw DataError("confidences_from_logits: label count mismatch");
  std::vector<double> conf(logits.rows());
  std::vector<bool> correct(logits.rows());
  std::vector<double> z;
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    const auto row = logits.row(i);
    z.assign(row.begin(), row.end());
    for (double& v : z) v /= T;
    softmax_inplace(z);
    const std::size_t pred = argmax(z);
    conf[i] = z[pred];
    correct[i] = pred == labels[i];
  }
  return {std::move(conf), std::move(correct)};
}

// Mean negative log-likelihood of labels under softmax(logits / T).
inline double temperature_nll(const Matrix2D& logits, std::span<const std::size_t> labels, double T) {
  double total = 0.0;
  std::vector<double> z;
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    const auto row = logits.row(i);
    z.assign(row.begin(), row.end());
    for (double& v : z) v /= T;
    total += logsumexp(z) - z[labels[i]];
  }
  return total / static_cast<double>(logits.rows());
}

// Golden-section search for the NLL-minimizing temperature over
// log10 T in [-4, 4]. Never returns a temperature worse than T = 1.
inline double fit_temperature(const Matrix2D& logits, std::span<const std::size_t> labels,
                              double log_tolerance = 1e-4) {
  if (logits.rows() == 0) throw DataError("fit_temperature: empty validation set");
  if (labels.size() != logits.rows()) throw DataError("fit_temperature: label count mismatch");
  for (std::size_t y : labels)
    if (y >= logits.cols()) throw DataError("fit_temperature: label out of range");
  const auto nll_at = [&](double log_t) { return temperature_nll(logits, labels, std::pow(10.0, log_t)); };
  const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double lo = -4.0;
  double hi = 4.0;
  double x1 = hi - inv_phi * (hi - lo);
  double x2 = lo + inv_phi * (hi - lo);
  double f1 = nll_at(x1);
  double f2 = nll_at(x2);
  while (hi - lo > log_tolerance) {
    if (f1 <= f2) {
      hi = x2;
      x2 = x1;
      f2 = f1;
      x1 = hi - inv_phi * (hi - lo);
      f1 = nll_at(x1);
    } else {
      lo = x1;
      x1 = x2;
      f1 = f2;
      x2 = lo + inv_phi * (hi - lo);
      f2 = nll_at(x2);
    }
  }
  double best_log_t = 0.5 * (lo + hi);
  double best = nll_at(best_log_t);
  for (double candidate : {-4.0, 4.0, 0.0}) {
    const double f = nll_at(candidate);
    if (f < best) {
      best = f;
      best_log_t = candidate;
    }
  }
  return std::pow(10.0, best_log_t);
}

// ---- CSV rows ------------------------------------------------------------------

inline void write_detection_csv(std::ostream& out, const DetectionReport& r) {
  out << "fpr_at_95_tpr,auroc,aupr,n_id,n_ood\n"
      << format_real(r.fpr_at_95_tpr) << ',' << format_real(r.auroc) << ',' << format_real(r.aupr) << ',' << r.n_id
      << ',' << r.n_ood << '\n';
}

inline void write_calibration_csv(std::ostream& out, const CalibrationReport& r) {
  out << "ece,fitted_T,bins\n" << format_real(r.ece) << ',' << (r.fitted_T ? format_real(*r.fitted_T) : "") << ','
      << r.bins.size() << '\n';
}

}  // namespace logitbench
