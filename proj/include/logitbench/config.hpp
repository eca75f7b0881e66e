#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "logitbench/data.hpp"
#include "logitbench/errors.hpp"
#include "logitbench/losses.hpp"
#include "logitbench/optimizer.hpp"
#include "logitbench/scores.hpp"

namespace logitbench {

// Experiment configuration, stored as a JSON document. Every object is read
// strictly: unknown keys are rejected.

struct DataSpec {
  std::string kind = "blobs";  // "blobs" or "files"
  // blobs
  std::size_t k = 10;
  std::size_t d = 16;
  std::size_t n_train_per_class = 500;
  std::size_t n_test_per_class = 200;
  double cluster_spread = 0.5;
  double cluster_radius = 3.0;
  std::uint64_t seed = 0;
  // files: last column of train/test is the label
  std::string train_file;
  std::string test_file;
  // Fraction of the training part held out for temperature fitting. 0 = none.
  double validation_fraction = 0.0;
};

struct OodSpec {
  OodKind kind = OodKind::GaussianNoise;
  std::string tag;  // defaults to the kind name
  std::size_t m = 2000;
  OodParams params;
  // gaussian_noise only: use the ID training feature stddev instead of params.stddev.
  bool match_id_std = false;
  std::uint64_t seed = 0;
  std::string file;  // when set, load features from this delimited file instead
};

struct ScoreSpec {
  ScoreConfig config;
  // Per-loss temperature overrides (energy_T / odin_T / gradnorm_T for the kind).
  std::map<std::string, double> temperature_by_loss;

  ScoreConfig for_loss(LossKind loss) const {
    ScoreConfig c = config;
    const auto it = temperature_by_loss.find(loss_name(loss));
    if (it == temperature_by_loss.end()) return c;
    switch (c.kind) {
      case ScoreKind::ODIN: c.odin_T = it->second; break;
      case ScoreKind::Energy: c.energy_T = it->second; break;
      case ScoreKind::GradNorm: c.gradnorm_T = it->second; break;
      case ScoreKind::MSP: break;
    }
    return c;
  }
};

struct MetricsSpec {
  double tpr_target = 0.95;
  std::size_t ece_bins = 15;
  std::size_t hist_bins = 50;
};

struct ExperimentConfig {
  DataSpec data;
  std::vector<std::size_t> hidden = {64, 64};
  std::vector<LossConfig> losses = {LossConfig::cross_entropy(), LossConfig::logit_norm()};
  OptimConfig optim;
  std::vector<ScoreSpec> scores;
  std::vector<OodSpec> ood_panel;
  std::optional<OodSpec> validation_ood;
  MetricsSpec metrics;
  std::vector<std::uint64_t> seeds = {0};
  std::vector<double> tau_grid;
  std::string output_dir = "out";

  std::vector<std::size_t> layer_dims() const {
    std::vector<std::size_t> dims{data.d};
    dims.insert(dims.end(), hidden.begin(), hidden.end());
    dims.push_back(data.k);
    return dims;
  }

  void validate() const {
    if (data.kind != "blobs" && data.kind != "files") throw ConfigError("data.kind must be 'blobs' or 'files'");
    if (data.kind == "blobs") {
      if (data.k < 2) throw ConfigError("data.k must be >= 2");
      if (data.d < 2) throw ConfigError("data.d must be >= 2");
      if (data.n_train_per_class < 2 || data.n_test_per_class < 1) {
        throw ConfigError("data: need >= 2 train and >= 1 test sample per class");
      }
    } else if (data.train_file.empty() || data.test_file.empty()) {
      throw ConfigError("data: files mode needs train_file and test_file");
    }
    if (!(data.validation_fraction >= 0.0 && data.validation_fraction < 1.0)) {
      throw ConfigError("data.validation_fraction must lie in [0, 1)");
    }
    for (std::size_t h : hidden)
      if (h == 0) throw ConfigError("model.hidden widths must be positive");
    if (losses.empty()) throw ConfigError("at least one loss is required");
    for (const auto& l : losses) l.validate();
    optim.validate();
    for (const auto& s : scores) s.config.validate();
    if (seeds.empty()) throw ConfigError("at least one seed is required");
    if (!(metrics.tpr_target > 0.0 && metrics.tpr_target < 1.0)) {
      throw ConfigError("metrics.tpr_target must lie in (0, 1)");
    }
    if (metrics.ece_bins < 1) throw ConfigError("metrics.ece_bins must be >= 1");
    if (metrics.hist_bins < 2) throw ConfigError("metrics.hist_bins must be >= 2");
    for (double t : tau_grid)
      if (!(t > 0.0)) throw ConfigError("tau_grid entries must be positive");
    std::set<std::string> tags;
    for (const auto& o : ood_panel) {
      const std::string tag = o.tag.empty() ? ood_kind_name(o.kind) : o.tag;
      if (!tags.insert(tag).second) throw ConfigError("duplicate OOD tag '" + tag + "'");
      if (o.file.empty() && o.m == 0) throw ConfigError("OOD set '" + tag + "' needs m >= 1");
    }
  }
};

// 64-bit FNV-1a over the config bytes, as 16 hex digits.
inline std::string content_hash(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[static_cast<std::size_t>(i)] = kHex[h & 0xF];
    h >>= 4;
  }
  return out;
}

namespace detail {

using nlohmann::json;

// Reads fields from one JSON object and rejects any key it was not asked for.
class StrictObject {
 public:
  StrictObject(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_ + ": expected an object");
  }

  template <class T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception& e) {
      throw ConfigError(path_ + "." + key + ": " + e.what());
    }
  }

  const json* child(const char* key) {
    seen_.insert(key);
    return j_.contains(key) ? &j_.at(key) : nullptr;
  }

  std::string path(const char* key) const { return path_ + "." + key; }

  void finish() const {
    for (const auto& [key, value] : j_.items()) {
      if (!seen_.count(key)) throw ConfigError(path_ + ": unknown key '" + key + "'");
    }
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

inline LossConfig parse_loss(const json& j, const std::string& path) {
  StrictObject o(j, path);
  std::string kind;
  o.get("kind", kind);
  LossConfig c;
  c.kind = parse_loss_kind(kind);
  o.get("tau", c.tau);
  o.get("lambda", c.lambda);
  o.get("stability_eps", c.stability_eps);
  o.finish();
  return c;
}

inline ScoreSpec parse_score(const json& j, const std::string& path) {
  StrictObject o(j, path);
  std::string kind;
  o.get("kind", kind);
  ScoreSpec s;
  s.config.kind = parse_score_kind(kind);
  std::optional<double> T;
  if (const json* t = o.child("T")) {
    if (!t->is_number()) throw ConfigError(o.path("T") + ": expected a number");
    T = t->get<double>();
  }
  if (T) {
    s.config.odin_T = *T;
    s.config.energy_T = *T;
    s.config.gradnorm_T = *T;
  }
  if (s.config.kind == ScoreKind::ODIN) o.get("eps", s.config.odin_eps);
  o.get("T_by_loss", s.temperature_by_loss);
  for (const auto& [loss, value] : s.temperature_by_loss) {
    parse_loss_kind(loss);
    if (!(value > 0.0)) throw ConfigError(path + ".T_by_loss: temperatures must be positive");
  }
  o.finish();
  return s;
}

inline OodSpec parse_ood(const json& j, const std::string& path) {
  StrictObject o(j, path);
  OodSpec s;
  std::string kind = "gaussian_noise";
  o.get("kind", kind);
  s.kind = parse_ood_kind(kind);
  o.get("tag", s.tag);
  o.get("m", s.m);
  o.get("seed", s.seed);
  o.get("file", s.file);
  o.get("half_width", s.params.half_width);
  o.get("mean", s.params.mean);
  if (const json* sd = o.child("stddev")) {
    if (sd->is_string() && sd->get<std::string>() == "match_id") {
      s.match_id_std = true;
    } else if (sd->is_number()) {
      s.params.stddev = sd->get<double>();
    } else {
      throw ConfigError(o.path("stddev") + ": expected a number or \"match_id\"");
    }
  }
  o.get("radius", s.params.radius);
  o.get("ring_width", s.params.ring_width);
  o.get("clusters", s.params.clusters);
  o.get("cluster_radius", s.params.cluster_radius);
  o.get("cluster_spread", s.params.cluster_spread);
  o.get("means_seed", s.params.means_seed);
  o.finish();
  return s;
}

}  // namespace detail

inline ExperimentConfig parse_config(const std::string& text) {
  using nlohmann::json;
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  ExperimentConfig cfg;
  detail::StrictObject top(root, "config");

  if (const json* d = top.child("data")) {
    detail::StrictObject o(*d, "config.data");
    o.get("kind", cfg.data.kind);
    o.get("k", cfg.data.k);
    o.get("d", cfg.data.d);
    o.get("n_train_per_class", cfg.data.n_train_per_class);
    o.get("n_test_per_class", cfg.data.n_test_per_class);
    o.get("cluster_spread", cfg.data.cluster_spread);
    o.get("cluster_radius", cfg.data.cluster_radius);
    o.get("seed", cfg.data.seed);
    o.get("train_file", cfg.data.train_file);
    o.get("test_file", cfg.data.test_file);
    o.get("validation_fraction", cfg.data.validation_fraction);
    o.finish();
  }
  if (const json* m = top.child("model")) {
    detail::StrictObject o(*m, "config.model");
    o.get("hidden", cfg.hidden);
    o.finish();
  }
  if (const json* l = top.child("losses")) {
    if (!l->is_array()) throw ConfigError("config.losses: expected an array");
    cfg.losses.clear();
    for (std::size_t i = 0; i < l->size(); ++i)
      cfg.losses.push_back(detail::parse_loss((*l)[i], "config.losses[" + std::to_string(i) + "]"));
  }
  if (const json* op = top.child("optim")) {
    detail::StrictObject o(*op, "config.optim");
    o.get("lr0", cfg.optim.lr0);
    o.get("momentum", cfg.optim.momentum);
    o.get("weight_decay", cfg.optim.weight_decay);
    o.get("epochs", cfg.optim.epochs);
    o.get("batch_size", cfg.optim.batch_size);
    if (const json* drops = o.child("lr_drops")) {
      if (!drops->is_array()) throw ConfigError("config.optim.lr_drops: expected an array");
      cfg.optim.lr_drops.clear();
      for (std::size_t i = 0; i < drops->size(); ++i) {
        detail::StrictObject d(drops->at(i), "config.optim.lr_drops[" + std::to_string(i) + "]");
        LrDrop drop;
        d.get("epoch", drop.epoch);
        d.get("factor", drop.factor);
        d.finish();
        cfg.optim.lr_drops.push_back(drop);
      }
    }
    o.finish();
  }
  if (const json* s = top.child("scores")) {
    if (!s->is_array()) throw ConfigError("config.scores: expected an array");
    for (std::size_t i = 0; i < s->size(); ++i)
      cfg.scores.push_back(detail::parse_score((*s)[i], "config.scores[" + std::to_string(i) + "]"));
  } else {
    cfg.scores = {ScoreSpec{ScoreConfig::msp(), {}}};
  }
  if (const json* p = top.child("ood_panel")) {
    if (!p->is_array()) throw ConfigError("config.ood_panel: expected an array");
    for (std::size_t i = 0; i < p->size(); ++i)
      cfg.ood_panel.push_back(detail::parse_ood((*p)[i], "config.ood_panel[" + std::to_string(i) + "]"));
  }
  if (const json* v = top.child("validation_ood")) cfg.validation_ood = detail::parse_ood(*v, "config.validation_ood");
  if (const json* m = top.child("metrics")) {
    detail::StrictObject o(*m, "config.metrics");
    o.get("tpr_target", cfg.metrics.tpr_target);
    o.get("ece_bins", cfg.metrics.ece_bins);
    o.get("hist_bins", cfg.metrics.hist_bins);
    o.finish();
  }
  top.get("seeds", cfg.seeds);
  top.get("tau_grid", cfg.tau_grid);
  top.get("output_dir", cfg.output_dir);
  top.finish();
  cfg.validate();
  return cfg;
}

struct LoadedConfig {
  ExperimentConfig config;
  std::string text;
  std::string hash;
};

inline LoadedConfig load_config_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  LoadedConfig lc;
  lc.text = ss.str();
  lc.config = parse_config(lc.text);
  lc.hash = content_hash(lc.text);
  return lc;
}

}  // namespace logitbench
