#pragma once

#include <cmath>
#include <ostream>
#include <string>
#include <vector>

#include "logitbench/errors.hpp"
#include "logitbench/matrix.hpp"
#include "logitbench/model.hpp"
#include "logitbench/tape.hpp"

namespace logitbench {

// Post-hoc OOD scores. Higher always means "more in-distribution".

enum class ScoreKind { MSP, ODIN, Energy, GradNorm };

struct ScoreConfig {
  ScoreKind kind = ScoreKind::MSP;
  double odin_T = 1000.0;
  double odin_eps = 0.0014;
  double energy_T = 1.0;
  double gradnorm_T = 1.0;

  static ScoreConfig msp() { return {}; }
  static ScoreConfig odin(double T = 1000.0, double eps = 0.0014) {
    ScoreConfig c;
    c.kind = ScoreKind::ODIN;
    c.odin_T = T;
    c.odin_eps = eps;
    return c;
  }
  static ScoreConfig energy(double T = 1.0) {
    ScoreConfig c;
    c.kind = ScoreKind::Energy;
    c.energy_T = T;
    return c;
  }
  // Energy temperature used for LogitNorm-trained models.
  static ScoreConfig energy_logitnorm_preset() { return energy(0.1); }
  static ScoreConfig gradnorm(double T = 1.0) {
    ScoreConfig c;
    c.kind = ScoreKind::GradNorm;
    c.gradnorm_T = T;
    return c;
  }

  void validate() const {
    if (!(odin_T > 0.0) || !(energy_T > 0.0) || !(gradnorm_T > 0.0)) {
      throw ConfigError("score temperatures must be positive");
    }
    if (!(odin_eps >= 0.0)) throw ConfigError("odin_eps must be nonnegative");
  }
};

inline std::string score_name(ScoreKind kind) {
  switch (kind) {
    case ScoreKind::MSP: return "msp";
    case ScoreKind::ODIN: return "odin";
    case ScoreKind::Energy: return "energy";
    case ScoreKind::GradNorm: return "gradnorm";
  }
  return "?";
}

inline ScoreKind parse_score_kind(const std::string& name) {
  if (name == "msp") return ScoreKind::MSP;
  if (name == "odin") return ScoreKind::ODIN;
  if (name == "energy") return ScoreKind::Energy;
  if (name == "gradnorm") return ScoreKind::GradNorm;
  throw ConfigError("unknown score kind '" + name + "'");
}

enum class Origin { ID, OOD };

struct ScoredExample {
  double score = 0.0;
  Origin origin = Origin::ID;

  friend bool operator==(const ScoredExample&, const ScoredExample&) = default;
};

namespace detail {

inline Matrix2D as_row(std::span<const double> x) { return Matrix2D::row_vector(x); }

inline double max_softmax(std::span<const double> logits, double T) {
  std::vector<double> z(logits.begin(), logits.end());
  for (double& v : z) v /= T;
  softmax_inplace(z);
  return z[argmax(z)];
}

}  // namespace detail

// max_j softmax(f(x) / T)_j
inline double temperature_msp(const MlpModel& model, std::span<const double> x, double T) {
  const Matrix2D logits = forward(model, detail::as_row(x));
  return detail::max_softmax(logits.row(0), T);
}

inline double msp_score(const MlpModel& model, std::span<const double> x) {
  return temperature_msp(model, x, 1.0);
}

// Input gradient of -log max_j softmax(f(x)/T)_j, with the max class fixed
// at its value for the clean input.
inline Matrix2D odin_input_gradient(const MlpModel& model, std::span<const double> x, double T) {
  GradTape tape;
  const TracedForward traced = forward(tape, model, detail::as_row(x), /*trace_input=*/true, /*trace_params=*/false);
  if (!tape.requires_grad(traced.input)) throw ContractError("odin: input gradient not traced");
  const std::size_t predicted[1] = {argmax(tape.value(traced.logits).row(0))};
  const Var loss = tape.softmax_cross_entropy(tape.scale(traced.logits, 1.0 / T), predicted);
  tape.backward(loss);
  return tape.grad(traced.input);
}

// Temperature-scaled MSP after a step of size eps that raises the max
// softmax: x' = x - eps * sign(-grad_x log S_max).
inline double odin_score(const MlpModel& model, std::span<const double> x, double T, double eps) {
  if (!(T > 0.0)) throw ConfigError("odin: T must be positive");
  if (!(eps >= 0.0)) throw ConfigError("odin: eps must be nonnegative");
  // gradient of -log S is the negation of grad log S, so sign(-grad log S) = sign(g)
  const Matrix2D g = odin_input_gradient(model, x, T);
  std::vector<double> perturbed(x.begin(), x.end());
  for (std::size_t j = 0; j < perturbed.size(); ++j) {
    const double gj = g(0, j);
    const double s = gj > 0.0 ? 1.0 : (gj < 0.0 ? -1.0 : 0.0);
    perturbed[j] = x[j] - eps * s;
  }
  return temperature_msp(model, perturbed, T);
}

// Negative free energy T * logsumexp(f / T).
inline double energy_from_logits(std::span<const double> logits, double T) {
  std::vector<double> z(logits.begin(), logits.end());
  for (double& v : z) v /= T;
  return T * logsumexp(z);
}

inline double energy_score(const MlpModel& model, std::span<const double> x, double T) {
  if (!(T > 0.0)) throw ConfigError("energy: T must be positive");
  const Matrix2D logits = forward(model, detail::as_row(x));
  return energy_from_logits(logits.row(0), T);
}

// Gradient w.r.t. the last weight matrix of CE(softmax(f/T), uniform).
inline Matrix2D gradnorm_last_layer_gradient(const MlpModel& model, std::span<const double> x, double T) {
  if (model.num_layers() < 1) throw ContractError("gradnorm: model has no layers");
  GradTape tape;
  const TracedForward traced = forward(tape, model, detail::as_row(x));
  const std::size_t k = model.num_classes();
  const Var loss = tape.softmax_cross_entropy(tape.scale(traced.logits, 1.0 / T),
                                              Matrix2D(1, k, 1.0 / static_cast<double>(k)));
  tape.backward(loss);
  return tape.grad(traced.weights.back());
}

// L1 norm of the last-layer gradient of the KL divergence to uniform.
inline double gradnorm_score(const MlpModel& model, std::span<const double> x, double T) {
  if (!(T > 0.0)) throw ConfigError("gradnorm: T must be positive");
  const Matrix2D g = gradnorm_last_layer_gradient(model, x, T);
  double total = 0.0;
  for (double v : g.data()) total += std::abs(v);
  return total;
}

inline double score_one(const MlpModel& model, std::span<const double> x, const ScoreConfig& cfg) {
  switch (cfg.kind) {
    case ScoreKind::MSP: return msp_score(model, x);
    case ScoreKind::ODIN: return odin_score(model, x, cfg.odin_T, cfg.odin_eps);
    case ScoreKind::Energy: return energy_score(model, x, cfg.energy_T);
    case ScoreKind::GradNorm: return gradnorm_score(model, x, cfg.gradnorm_T);
  }
  throw ConfigError("unknown score kind");
}

// Scores every row of x.
inline std::vector<double> score_batch(const MlpModel& model, const Matrix2D& x, const ScoreConfig& cfg) {
  cfg.validate();
  check_input(model, x);
  std::vector<double> out(x.rows());
  if (cfg.kind == ScoreKind::MSP || cfg.kind == ScoreKind::Energy) {
    const Matrix2D logits = forward(model, x);
    for (std::size_t i = 0; i < x.rows(); ++i) {
      out[i] = cfg.kind == ScoreKind::MSP ? detail::max_softmax(logits.row(i), 1.0)
                                          : energy_from_logits(logits.row(i), cfg.energy_T);
    }
  } else {
    for (std::size_t i = 0; i < x.rows(); ++i) out[i] = score_one(model, x.row(i), cfg);
  }
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (!std::isfinite(out[i])) throw NumericError("score is not finite at row " + std::to_string(i));
  }
  return out;
}

inline std::vector<ScoredExample> label_scores(const std::vector<double>& id, const std::vector<double>& ood) {
  std::vector<ScoredExample> out;
  out.reserve(id.size() + ood.size());
  for (double s : id) out.push_back({s, Origin::ID});
  for (double s : ood) out.push_back({s, Origin::OOD});
  return out;
}

// ---- score dump: "<ID|OOD>,<score>" per line ---------------------------------

inline void write_score_dump(std::ostream& out, const std::vector<ScoredExample>& scored) {
  for (const auto& s : scored) out << (s.origin == Origin::ID ? "ID" : "OOD") << ',' << format_real(s.score) << '\n';
}

inline std::vector<ScoredExample> read_score_dump(std::istream& in, const std::string& name = "score dump") {
  std::vector<ScoredExample> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const std::string where = name + ":" + std::to_string(line_no);
    const auto comma = line.find(',');
    if (comma == std::string::npos) throw DataError(where + ": expected '<ID|OOD>,<score>'");
    const std::string tag = line.substr(0, comma);
    ScoredExample ex;
    if (tag == "ID") {
      ex.origin = Origin::ID;
    } else if (tag == "OOD") {
      ex.origin = Origin::OOD;
    } else {
      throw DataError(where + ": unknown origin '" + tag + "'");
    }
    ex.score = parse_real(std::string_view(line).substr(comma + 1), where);
    out.push_back(ex);
  }
  return out;
}

}  // namespace logitbench
