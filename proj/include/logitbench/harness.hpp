#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "logitbench/config.hpp"
#include "logitbench/data.hpp"
#include "logitbench/errors.hpp"
#include "logitbench/losses.hpp"
#include "logitbench/metrics.hpp"
#include "logitbench/model.hpp"
#include "logitbench/optimizer.hpp"
#include "logitbench/scores.hpp"

namespace logitbench {

// ---- prepared data -------------------------------------------------------------

struct PreparedData {
  LabeledDataset train;
  LabeledDataset test;
  std::optional<LabeledDataset> validation;
  std::vector<OodDataset> ood_panel;
  std::optional<OodDataset> validation_ood;
};

inline OodDataset build_ood(const OodSpec& spec, std::size_t d, const LabeledDataset& train) {
  OodDataset ds;
  if (!spec.file.empty()) {
    auto loaded = load_delimited(spec.file, /*has_label=*/false);
    ds = std::get<OodDataset>(std::move(loaded));
  } else {
    OodParams p = spec.params;
    if (spec.match_id_std) p.stddev = feature_stddev(train.features);
    ds = gen_ood(spec.kind, d, spec.m, p, spec.seed);
  }
  ds.origin_tag = spec.tag.empty() ? ood_kind_name(spec.kind) : spec.tag;
  ds.validate();
  if (ds.dim() != d) {
    throw DataError("OOD set '" + ds.origin_tag + "' has " + std::to_string(ds.dim()) + " features, ID data has " +
                    std::to_string(d));
  }
  return ds;
}

inline PreparedData prepare_data(const ExperimentConfig& cfg) {
  PreparedData out;
  LabeledDataset train_full;
  if (cfg.data.kind == "blobs") {
    const std::size_t per_class = cfg.data.n_train_per_class + cfg.data.n_test_per_class;
    const LabeledDataset all = gen_blobs(cfg.data.k, cfg.data.d, per_class, cfg.data.cluster_spread,
                                         cfg.data.cluster_radius, cfg.data.seed);
    const double train_frac = static_cast<double>(cfg.data.n_train_per_class) / static_cast<double>(per_class);
    auto [tr, te] = split(all, train_frac, 1.0 - train_frac, cfg.data.seed);
    train_full = std::move(tr);
    out.test = std::move(te);
  } else {
    train_full = std::get<LabeledDataset>(load_delimited(cfg.data.train_file, true, cfg.data.k));
    out.test = std::get<LabeledDataset>(load_delimited(cfg.data.test_file, true, cfg.data.k));
  }
  train_full.origin_tag = "id_train";
  out.test.origin_tag = "id_test";
  if (cfg.data.validation_fraction > 0.0) {
    auto [tr, va] = split(train_full, 1.0 - cfg.data.validation_fraction, cfg.data.validation_fraction,
                          cfg.data.seed + 1);
    out.train = std::move(tr);
    va.origin_tag = "id_validation";
    out.validation = std::move(va);
  } else {
    out.train = std::move(train_full);
  }
  out.train.validate();
  out.test.validate();
  if (out.test.dim() != out.train.dim()) throw DataError("train and test feature dimensions differ");
  const std::size_t d = out.train.dim();
  if (d != cfg.data.d) {
    throw ConfigError("data.d = " + std::to_string(cfg.data.d) + " but the data has " + std::to_string(d) +
                      " features");
  }
  if (out.train.k != cfg.data.k) throw ConfigError("data.k disagrees with the data");
  for (const auto& spec : cfg.ood_panel) out.ood_panel.push_back(build_ood(spec, d, out.train));
  if (cfg.validation_ood) out.validation_ood = build_ood(*cfg.validation_ood, d, out.train);
  return out;
}

// ---- per-seed training and evaluation ---------------------------------------------

inline double accuracy(const MlpModel& model, const LabeledDataset& ds) {
  const Matrix2D logits = forward(model, ds.features);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < ds.size(); ++i)
    if (argmax(logits.row(i)) == ds.labels[i]) ++correct;
  return static_cast<double>(correct) / static_cast<double>(ds.size());
}

struct DetectionCell {
  std::string score;
  std::string dataset;
  DetectionReport report;
  std::vector<ScoredExample> scored;
};

struct SeedRun {
  LossConfig loss;
  std::uint64_t seed = 0;
  bool diverged = false;
  std::string failure;
  double id_accuracy = 0.0;
  double id_logit_norm = 0.0;
  std::map<std::string, double> ood_logit_norm;  // by dataset tag
  std::vector<EpochTelemetry> telemetry;
  MlpModel model;
  std::vector<DetectionCell> cells;
};

inline OptimConfig seeded(const OptimConfig& optim, std::uint64_t seed) {
  OptimConfig o = optim;
  o.seed = seed;
  return o;
}

// Trains one model; divergence is recorded rather than thrown.
inline SeedRun train_seed(const ExperimentConfig& cfg, const PreparedData& data, const LossConfig& loss,
                          std::uint64_t seed) {
  SeedRun run;
  run.loss = loss;
  run.seed = seed;
  const OodDataset* probe = data.ood_panel.empty() ? nullptr : &data.ood_panel.front();
  try {
    TrainResult tr = train(init_model(cfg.layer_dims(), seed), data.train, loss, seeded(cfg.optim, seed), probe);
    run.model = std::move(tr.model);
    run.telemetry = std::move(tr.telemetry);
  } catch (const DivergedError& e) {
    run.diverged = true;
    run.failure = e.what();
  }
  return run;
}

inline void evaluate_seed(SeedRun& run, const ExperimentConfig& cfg, const PreparedData& data) {
  if (run.diverged) return;
  try {
    run.id_accuracy = accuracy(run.model, data.test);
    run.id_logit_norm = mean_logit_norm(run.model, data.test.features);
    for (const auto& ood : data.ood_panel) run.ood_logit_norm[ood.origin_tag] = mean_logit_norm(run.model, ood.features);
    for (const auto& spec : cfg.scores) {
      const ScoreConfig sc = spec.for_loss(run.loss.kind);
      const auto id_scores = score_batch(run.model, data.test.features, sc);
      for (const auto& ood : data.ood_panel) {
        DetectionCell cell;
        cell.score = score_name(sc.kind);
        cell.dataset = ood.origin_tag;
        cell.scored = label_scores(id_scores, score_batch(run.model, ood.features, sc));
        cell.report = detection_report(cell.scored, cfg.metrics.tpr_target);
        run.cells.push_back(std::move(cell));
      }
    }
  } catch (const NumericError& e) {
    run.diverged = true;
    run.failure = std::string("evaluation: ") + e.what();
    run.cells.clear();
  }
}

// ---- aggregation -------------------------------------------------------------------

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;
};

// Population standard deviation; 0 for a single value.
inline MeanStd mean_std(const std::vector<double>& v) {
  MeanStd r;
  if (v.empty()) return r;
  for (double x : v) r.mean += x;
  r.mean /= static_cast<double>(v.size());
  double var = 0.0;
  for (double x : v) var += (x - r.mean) * (x - r.mean);
  r.std = std::sqrt(var / static_cast<double>(v.size()));
  return r;
}

struct BenchmarkRow {
  std::string loss_name;
  std::string score_name;
  std::string ood_dataset_tag;
  MeanStd fpr95;
  MeanStd auroc;
  MeanStd aupr;
  MeanStd id_accuracy;
  std::size_t seeds_used = 0;
};

struct ExperimentResult {
  std::vector<SeedRun> runs;
  std::vector<BenchmarkRow> rows;
  std::string config_hash;

  const BenchmarkRow* row(const std::string& loss, const std::string& score, const std::string& dataset) const {
    for (const auto& r : rows)
      if (r.loss_name == loss && r.score_name == score && r.ood_dataset_tag == dataset) return &r;
    return nullptr;
  }

  // Mean over the OOD panel of the per-dataset FPR95 means.
  double panel_mean_fpr(const std::string& loss, const std::string& score) const {
    double total = 0.0;
    std::size_t n = 0;
    for (const auto& r : rows) {
      if (r.loss_name == loss && r.score_name == score && r.seeds_used > 0) {
        total += r.fpr95.mean;
        ++n;
      }
    }
    return n ? total / static_cast<double>(n) : std::nan("");
  }

  double panel_mean_auroc(const std::string& loss, const std::string& score) const {
    double total = 0.0;
    std::size_t n = 0;
    for (const auto& r : rows) {
      if (r.loss_name == loss && r.score_name == score && r.seeds_used > 0) {
        total += r.auroc.mean;
        ++n;
      }
    }
    return n ? total / static_cast<double>(n) : std::nan("");
  }

  std::vector<const SeedRun*> runs_for(const std::string& loss) const {
    std::vector<const SeedRun*> out;
    for (const auto& r : runs)
      if (loss_name(r.loss.kind) == loss && !r.diverged) out.push_back(&r);
    return out;
  }
};

inline std::vector<BenchmarkRow> aggregate(const ExperimentConfig& cfg, const PreparedData& data,
                                           const std::vector<SeedRun>& runs) {
  std::vector<BenchmarkRow> rows;
  for (const auto& loss : cfg.losses) {
    const std::string lname = loss_name(loss.kind);
    for (const auto& spec : cfg.scores) {
      const std::string sname = score_name(spec.config.kind);
      for (const auto& ood : data.ood_panel) {
        BenchmarkRow row{lname, sname, ood.origin_tag, {}, {}, {}, {}, 0};
        std::vector<double> fpr, roc, pr, acc;
        for (const auto& run : runs) {
          if (run.diverged || loss_name(run.loss.kind) != lname) continue;
          for (const auto& cell : run.cells) {
            if (cell.score != sname || cell.dataset != ood.origin_tag) continue;
            fpr.push_back(cell.report.fpr_at_95_tpr);
            roc.push_back(cell.report.auroc);
            pr.push_back(cell.report.aupr);
            acc.push_back(run.id_accuracy);
          }
        }
        row.fpr95 = mean_std(fpr);
        row.auroc = mean_std(roc);
        row.aupr = mean_std(pr);
        row.id_accuracy = mean_std(acc);
        row.seeds_used = fpr.size();
        rows.push_back(row);
      }
    }
  }
  return rows;
}

// ---- output files ---------------------------------------------------------------------

inline void write_bench_csv(std::ostream& out, const std::vector<BenchmarkRow>& rows, const std::string& hash) {
  out << "loss_name,score_name,ood_dataset_tag,fpr95_mean,fpr95_std,auroc_mean,auroc_std,aupr_mean,aupr_std,"
         "id_accuracy_mean,id_accuracy_std,seeds_used,config_hash\n";
  for (const auto& r : rows) {
    out << r.loss_name << ',' << r.score_name << ',' << r.ood_dataset_tag << ',' << format_real(r.fpr95.mean) << ','
        << format_real(r.fpr95.std) << ',' << format_real(r.auroc.mean) << ',' << format_real(r.auroc.std) << ','
        << format_real(r.aupr.mean) << ',' << format_real(r.aupr.std) << ',' << format_real(r.id_accuracy.mean)
        << ',' << format_real(r.id_accuracy.std) << ',' << r.seeds_used << ',' << hash << '\n';
  }
}

// Per-seed rows behind every aggregate, plus one status row per diverged seed.
inline void write_per_seed_csv(std::ostream& out, const std::vector<SeedRun>& runs, const std::string& hash) {
  out << "loss_name,score_name,ood_dataset_tag,seed,status,fpr95,auroc,aupr,id_accuracy,id_logit_norm,"
         "ood_logit_norm,config_hash\n";
  for (const auto& run : runs) {
    const std::string lname = loss_name(run.loss.kind);
    if (run.diverged) {
      std::string why = run.failure;
      std::replace(why.begin(), why.end(), ',', ';');
      out << lname << ",-,-," << run.seed << ",diverged: " << why << ",,,,,,," << hash << '\n';
      continue;
    }
    for (const auto& cell : run.cells) {
      out << lname << ',' << cell.score << ',' << cell.dataset << ',' << run.seed << ",ok,"
          << format_real(cell.report.fpr_at_95_tpr) << ',' << format_real(cell.report.auroc) << ','
          << format_real(cell.report.aupr) << ',' << format_real(run.id_accuracy) << ','
          << format_real(run.id_logit_norm) << ',' << format_real(run.ood_logit_norm.at(cell.dataset)) << ','
          << hash << '\n';
    }
  }
}

struct Histogram {
  std::vector<double> edges;  // bins + 1 edges
  std::vector<std::size_t> id_count;
  std::vector<std::size_t> ood_count;
};

// Equal-width bins over [min score, max score]; the last bin is closed.
inline Histogram histogram(std::span<const ScoredExample> scored, std::size_t bins) {
  if (bins < 2) throw ConfigError("histogram: need at least 2 bins");
  if (scored.empty()) throw DataError("histogram: empty score dump");
  double lo = scored.front().score;
  double hi = lo;
  for (const auto& s : scored) {
    lo = std::min(lo, s.score);
    hi = std::max(hi, s.score);
  }
  Histogram h;
  h.id_count.assign(bins, 0);
  h.ood_count.assign(bins, 0);
  const double width = (hi - lo) / static_cast<double>(bins);
  for (std::size_t b = 0; b <= bins; ++b) h.edges.push_back(b == bins ? hi : lo + width * static_cast<double>(b));
  for (const auto& s : scored) {
    std::size_t b = 0;
    if (width > 0.0) {
      b = static_cast<std::size_t>((s.score - lo) / width);
      b = std::min(b, bins - 1);
      // keep floating-point rounding consistent with the written edges
      while (b > 0 && s.score < h.edges[b]) --b;
      while (b + 1 < bins && s.score >= h.edges[b + 1]) ++b;
    }
    (s.origin == Origin::ID ? h.id_count : h.ood_count)[b] += 1;
  }
  return h;
}

inline void write_histogram_csv(std::ostream& out, const Histogram& h) {
  out << "bin_left,bin_right,id_count,ood_count\n";
  for (std::size_t b = 0; b < h.id_count.size(); ++b) {
    out << format_real(h.edges[b]) << ',' << format_real(h.edges[b + 1]) << ',' << h.id_count[b] << ','
        << h.ood_count[b] << '\n';
  }
}

inline void emit_histogram_data(std::istream& score_dump, std::ostream& out, std::size_t bins) {
  const auto scored = read_score_dump(score_dump);
  write_histogram_csv(out, histogram(scored, bins));
}

namespace detail {

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
}

template <class Fn>
void write_file(const std::filesystem::path& path, Fn&& fn) {
  std::ostringstream ss;
  fn(ss);
  write_text(path, ss.str());
}

}  // namespace detail

struct RunOptions {
  std::string config_text;  // echoed verbatim into the output directory
  std::string config_hash;
  bool write_files = true;
  bool quiet = true;
  std::ostream* log = &std::cerr;
};

inline void echo_config(const std::filesystem::path& dir, const RunOptions& opts) {
  std::filesystem::create_directories(dir);
  detail::write_text(dir / "config.json", opts.config_text);
  detail::write_text(dir / "config.hash", opts.config_hash + "\n");
}

// Trains every (loss, seed), scores every (score, OOD set) pair and
// aggregates mean and std across seeds.
inline ExperimentResult run_experiment(const ExperimentConfig& cfg, const RunOptions& opts = {}) {
  cfg.validate();
  if (cfg.ood_panel.empty()) throw ConfigError("run_experiment: the OOD panel is empty");
  const PreparedData data = prepare_data(cfg);
  ExperimentResult result;
  result.config_hash = opts.config_hash;
  for (const auto& loss : cfg.losses) {
    for (std::uint64_t seed : cfg.seeds) {
      if (!opts.quiet) *opts.log << "[bench] training " << loss_name(loss.kind) << " seed " << seed << '\n';
      SeedRun run = train_seed(cfg, data, loss, seed);
      evaluate_seed(run, cfg, data);
      if (run.diverged) {
        *opts.log << "[bench] WARNING: " << loss_name(loss.kind) << " seed " << seed
                  << " excluded: " << run.failure << '\n';
      }
      result.runs.push_back(std::move(run));
    }
  }
  result.rows = aggregate(cfg, data, result.runs);

  if (opts.write_files) {
    const std::filesystem::path dir(cfg.output_dir);
    echo_config(dir, opts);
    detail::write_file(dir / "bench.csv", [&](std::ostream& o) { write_bench_csv(o, result.rows, opts.config_hash); });
    detail::write_file(dir / "bench_per_seed.csv",
                       [&](std::ostream& o) { write_per_seed_csv(o, result.runs, opts.config_hash); });
    for (const auto& run : result.runs) {
      const std::string lname = loss_name(run.loss.kind);
      const std::string suffix = lname + "_" + std::to_string(run.seed);
      if (run.diverged) continue;
      detail::write_file(dir / ("telemetry_" + suffix + ".csv"),
                         [&](std::ostream& o) { write_telemetry_csv(o, run.telemetry); });
      detail::write_file(dir / ("checkpoint_" + suffix + ".txt"),
                         [&](std::ostream& o) { save_checkpoint(o, run.model, opts.config_hash); });
      for (const auto& cell : run.cells) {
        const std::string stem = lname + "_" + cell.score + "_" + cell.dataset + "_" + std::to_string(run.seed);
        detail::write_file(dir / ("scores_" + stem + ".txt"), [&](std::ostream& o) { write_score_dump(o, cell.scored); });
        detail::write_file(dir / ("hist_" + stem + ".csv"),
                           [&](std::ostream& o) { write_histogram_csv(o, histogram(cell.scored, cfg.metrics.hist_bins)); });
      }
    }
  }
  return result;
}

// ---- tau sweep --------------------------------------------------------------------------

struct TauSweepRow {
  double tau = 0.0;
  MeanStd validation_fpr95;
  MeanStd panel_fpr95;  // MSP FPR95 averaged over the OOD panel (report only)
  MeanStd final_train_loss;
  double lower_bound = 0.0;
  std::size_t seeds_used = 0;
};

struct TauSweepResult {
  std::vector<TauSweepRow> rows;
  double selected_tau = 0.0;
};

// Trains one LogitNorm model per (tau, seed) and selects the tau with the
// lowest mean MSP FPR95 against the validation OOD set; ties go to the
// smaller tau.
inline TauSweepResult sweep_tau(const ExperimentConfig& cfg, const std::vector<double>& tau_grid,
                                const RunOptions& opts = {}) {
  cfg.validate();
  if (tau_grid.empty()) throw ConfigError("sweep_tau: tau grid is empty");
  for (double t : tau_grid)
    if (!(t > 0.0)) throw ConfigError("sweep_tau: tau values must be positive");
  if (!cfg.validation_ood) throw ConfigError("sweep_tau: config has no validation_ood set");
  const PreparedData data = prepare_data(cfg);
  LossConfig base = LossConfig::logit_norm();
  for (const auto& l : cfg.losses)
    if (l.kind == LossKind::LogitNorm) base = l;

  TauSweepResult result;
  std::vector<double> grid = tau_grid;
  std::sort(grid.begin(), grid.end());
  grid.erase(std::unique(grid.begin(), grid.end()), grid.end());
  for (double tau : grid) {
    LossConfig loss = base;
    loss.tau = tau;
    std::vector<double> val, panel, final_loss;
    for (std::uint64_t seed : cfg.seeds) {
      if (!opts.quiet) *opts.log << "[sweep] tau " << tau << " seed " << seed << '\n';
      SeedRun run = train_seed(cfg, data, loss, seed);
      if (run.diverged) {
        *opts.log << "[sweep] WARNING: tau " << tau << " seed " << seed << " excluded: " << run.failure << '\n';
        continue;
      }
      const auto id_scores = score_batch(run.model, data.test.features, ScoreConfig::msp());
      val.push_back(fpr_at_tpr(label_scores(id_scores, score_batch(run.model, data.validation_ood->features,
                                                                   ScoreConfig::msp())),
                               cfg.metrics.tpr_target));
      if (!data.ood_panel.empty()) {
        double total = 0.0;
        for (const auto& ood : data.ood_panel) {
          total += fpr_at_tpr(label_scores(id_scores, score_batch(run.model, ood.features, ScoreConfig::msp())),
                              cfg.metrics.tpr_target);
        }
        panel.push_back(total / static_cast<double>(data.ood_panel.size()));
      }
      final_loss.push_back(run.telemetry.back().train_loss);
    }
    TauSweepRow row;
    row.tau = tau;
    row.validation_fpr95 = mean_std(val);
    row.panel_fpr95 = mean_std(panel);
    row.final_train_loss = mean_std(final_loss);
    row.lower_bound = logitnorm_lower_bound(data.train.k, tau);
    row.seeds_used = val.size();
    result.rows.push_back(row);
  }
  bool found = false;
  double best = 0.0;
  for (const auto& row : result.rows) {
    if (row.seeds_used == 0) continue;
    if (!found || row.validation_fpr95.mean < best) {
      best = row.validation_fpr95.mean;
      result.selected_tau = row.tau;
      found = true;
    }
  }
  if (!found) throw DivergedError(0, 0, "every tau in the sweep diverged");

  if (opts.write_files) {
    const std::filesystem::path dir(cfg.output_dir);
    echo_config(dir, opts);
    detail::write_file(dir / "sweep_tau.csv", [&](std::ostream& o) {
      o << "tau,validation_fpr95_mean,validation_fpr95_std,panel_fpr95_mean,panel_fpr95_std,final_train_loss_mean,"
           "lower_bound,seeds_used,selected,config_hash\n";
      for (const auto& r : result.rows) {
        o << format_real(r.tau) << ',' << format_real(r.validation_fpr95.mean) << ','
          << format_real(r.validation_fpr95.std) << ',' << format_real(r.panel_fpr95.mean) << ','
          << format_real(r.panel_fpr95.std) << ',' << format_real(r.final_train_loss.mean) << ','
          << format_real(r.lower_bound) << ',' << r.seeds_used << ',' << (r.tau == result.selected_tau ? 1 : 0)
          << ',' << opts.config_hash << '\n';
      }
    });
  }
  return result;
}

// ---- calibration --------------------------------------------------------------------------

struct CalibrationRun {
  std::string loss_name;
  std::uint64_t seed = 0;
  CalibrationReport before;
  CalibrationReport after;
  double nll_before = 0.0;
  double nll_after = 0.0;
  double id_accuracy = 0.0;
};

// Fits a temperature on the validation split and reports test ECE before and
// after scaling, for every loss and seed.
inline std::vector<CalibrationRun> run_calibration(const ExperimentConfig& cfg, const RunOptions& opts = {}) {
  cfg.validate();
  if (!(cfg.data.validation_fraction > 0.0)) {
    throw ConfigError("run_calibration: data.validation_fraction must reserve a validation split");
  }
  const PreparedData data = prepare_data(cfg);
  std::vector<CalibrationRun> out;
  for (const auto& loss : cfg.losses) {
    for (std::uint64_t seed : cfg.seeds) {
      if (!opts.quiet) *opts.log << "[calibrate] training " << loss_name(loss.kind) << " seed " << seed << '\n';
      SeedRun run = train_seed(cfg, data, loss, seed);
      if (run.diverged) {
        *opts.log << "[calibrate] WARNING: " << loss_name(loss.kind) << " seed " << seed
                  << " excluded: " << run.failure << '\n';
        continue;
      }
      CalibrationRun c;
      c.loss_name = loss_name(loss.kind);
      c.seed = seed;
      const Matrix2D val_logits = forward(run.model, data.validation->features);
      const Matrix2D test_logits = forward(run.model, data.test.features);
      const double T = fit_temperature(val_logits, data.validation->labels);
      auto [conf0, ok0] = confidences_from_logits(test_logits, data.test.labels, 1.0);
      auto [conf1, ok1] = confidences_from_logits(test_logits, data.test.labels, T);
      c.before = ece(conf0, ok0, cfg.metrics.ece_bins);
      c.after = ece(conf1, ok1, cfg.metrics.ece_bins);
      c.after.fitted_T = T;
      c.nll_before = temperature_nll(val_logits, data.validation->labels, 1.0);
      c.nll_after = temperature_nll(val_logits, data.validation->labels, T);
      c.id_accuracy = accuracy(run.model, data.test);
      out.push_back(c);
    }
  }
  if (opts.write_files) {
    const std::filesystem::path dir(cfg.output_dir);
    echo_config(dir, opts);
    detail::write_file(dir / "calibration.csv", [&](std::ostream& o) {
      o << "loss_name,seed,ece_before,ece_after,fitted_T,val_nll_before,val_nll_after,id_accuracy,ece_bins,config_hash\n";
      for (const auto& c : out) {
        o << c.loss_name << ',' << c.seed << ',' << format_real(c.before.ece) << ',' << format_real(c.after.ece) << ','
          << format_real(*c.after.fitted_T) << ',' << format_real(c.nll_before) << ',' << format_real(c.nll_after)
          << ',' << format_real(c.id_accuracy) << ',' << cfg.metrics.ece_bins << ',' << opts.config_hash << '\n';
      }
    });
  }
  return out;
}

}  // namespace logitbench
