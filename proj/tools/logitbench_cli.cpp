// logitbench command line: train, score, eval, bench, sweep-tau, calibrate, report.
//
// Exit codes: 0 success, 1 config error, 2 data error, 3 every seed diverged.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "logitbench/logitbench.hpp"

namespace lb = logitbench;
namespace fs = std::filesystem;

namespace {

constexpr int kExitConfig = 1;
constexpr int kExitData = 2;
constexpr int kExitDiverged = 3;

struct CommonFlags {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out;
  bool quiet = false;
};

void add_common(CLI::App* cmd, CommonFlags& flags, bool needs_config) {
  auto* opt = cmd->add_option("--config", flags.config_path, "experiment config (JSON)");
  if (needs_config) opt->required();
  cmd->add_option("--seed", flags.seed, "run a single seed instead of the config's seed list");
  cmd->add_option("--out", flags.out, "output directory (overrides config output_dir)");
  cmd->add_flag("--quiet", flags.quiet, "suppress progress messages");
}

struct Session {
  lb::ExperimentConfig config;
  lb::RunOptions opts;
};

Session open_session(const CommonFlags& flags) {
  lb::LoadedConfig loaded = lb::load_config_file(flags.config_path);
  Session s;
  s.config = std::move(loaded.config);
  if (flags.seed) s.config.seeds = {*flags.seed};
  if (!flags.out.empty()) s.config.output_dir = flags.out;
  s.opts.config_text = std::move(loaded.text);
  s.opts.config_hash = std::move(loaded.hash);
  s.opts.quiet = flags.quiet;
  return s;
}

template <class Fn>
void write_to(const fs::path& path, Fn&& fn) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw lb::DataError("cannot write " + path.string());
  fn(out);
}

int cmd_train(const CommonFlags& flags) {
  Session s = open_session(flags);
  const lb::PreparedData data = lb::prepare_data(s.config);
  const fs::path dir(s.config.output_dir);
  lb::echo_config(dir, s.opts);
  std::size_t ok = 0;
  for (const auto& loss : s.config.losses) {
    for (auto seed : s.config.seeds) {
      if (!flags.quiet) std::cerr << "[train] " << lb::loss_name(loss.kind) << " seed " << seed << '\n';
      lb::SeedRun run = lb::train_seed(s.config, data, loss, seed);
      if (run.diverged) {
        std::cerr << "[train] WARNING: " << run.failure << '\n';
        continue;
      }
      ++ok;
      const std::string suffix = lb::loss_name(loss.kind) + "_" + std::to_string(seed);
      write_to(dir / ("telemetry_" + suffix + ".csv"),
               [&](std::ostream& o) { lb::write_telemetry_csv(o, run.telemetry); });
      write_to(dir / ("checkpoint_" + suffix + ".txt"),
               [&](std::ostream& o) { lb::save_checkpoint(o, run.model, s.opts.config_hash); });
    }
  }
  return ok == 0 ? kExitDiverged : 0;
}

int cmd_score(const CommonFlags& flags, const std::string& checkpoint_path, const std::string& tag,
              const std::string& loss) {
  Session s = open_session(flags);
  const lb::PreparedData data = lb::prepare_data(s.config);
  const lb::Checkpoint ck = lb::load_checkpoint_file(checkpoint_path);
  if (ck.model.input_dim() != data.test.dim() || ck.model.num_classes() != data.test.k) {
    throw lb::DataError("checkpoint shape does not match the configured data");
  }
  const fs::path dir(s.config.output_dir);
  lb::echo_config(dir, s.opts);
  const std::string stem = tag.empty() ? fs::path(checkpoint_path).stem().string() : tag;
  for (const auto& spec : s.config.scores) {
    // checkpoints do not record their loss; --loss selects per-loss temperatures
    const lb::ScoreConfig sc = loss.empty() ? spec.config : spec.for_loss(lb::parse_loss_kind(loss));
    const auto id_scores = lb::score_batch(ck.model, data.test.features, sc);
    for (const auto& ood : data.ood_panel) {
      const auto scored = lb::label_scores(id_scores, lb::score_batch(ck.model, ood.features, sc));
      write_to(dir / ("scores_" + stem + "_" + lb::score_name(sc.kind) + "_" + ood.origin_tag + ".txt"),
               [&](std::ostream& o) { lb::write_score_dump(o, scored); });
    }
  }
  return 0;
}

int cmd_eval(const std::string& dump_path, double tpr, const std::string& out_path) {
  std::ifstream in(dump_path);
  if (!in) throw lb::DataError("cannot open score dump " + dump_path);
  const auto scored = lb::read_score_dump(in, dump_path);
  const auto report = lb::detection_report(scored, tpr);
  if (out_path.empty()) {
    lb::write_detection_csv(std::cout, report);
  } else {
    write_to(out_path, [&](std::ostream& o) { lb::write_detection_csv(o, report); });
  }
  return 0;
}

int cmd_bench(const CommonFlags& flags) {
  Session s = open_session(flags);
  const lb::ExperimentResult result = lb::run_experiment(s.config, s.opts);
  bool any_ok = false;
  for (const auto& run : result.runs) any_ok = any_ok || !run.diverged;
  if (!flags.quiet) {
    for (const auto& loss : s.config.losses) {
      for (const auto& spec : s.config.scores) {
        const std::string l = lb::loss_name(loss.kind);
        const std::string sc = lb::score_name(spec.config.kind);
        std::cerr << "[bench] " << l << " + " << sc << ": panel FPR95 " << result.panel_mean_fpr(l, sc)
                  << ", AUROC " << result.panel_mean_auroc(l, sc) << '\n';
      }
    }
  }
  return any_ok ? 0 : kExitDiverged;
}

int cmd_sweep(const CommonFlags& flags, std::vector<double> grid) {
  Session s = open_session(flags);
  if (grid.empty()) grid = s.config.tau_grid;
  const lb::TauSweepResult r = lb::sweep_tau(s.config, grid, s.opts);
  if (!flags.quiet) std::cerr << "[sweep] selected tau " << r.selected_tau << '\n';
  return 0;
}

int cmd_calibrate(const CommonFlags& flags) {
  Session s = open_session(flags);
  const auto runs = lb::run_calibration(s.config, s.opts);
  if (runs.empty()) return kExitDiverged;
  if (!flags.quiet) {
    for (const auto& c : runs) {
      std::cerr << "[calibrate] " << c.loss_name << " seed " << c.seed << ": ECE " << c.before.ece << " -> "
                << c.after.ece << " (T=" << *c.after.fitted_T << ")\n";
    }
  }
  return 0;
}

int cmd_report(const std::string& dump_path, std::size_t bins, const std::string& out_path) {
  std::ifstream in(dump_path);
  if (!in) throw lb::DataError("cannot open score dump " + dump_path);
  if (out_path.empty()) {
    lb::emit_histogram_data(in, std::cout, bins);
  } else {
    write_to(out_path, [&](std::ostream& o) { lb::emit_histogram_data(in, o, bins); });
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"logitbench: train classifiers with CE / LogitNorm / LogitPenalty and evaluate OOD detectors"};
  app.require_subcommand(1);

  CommonFlags train_flags, score_flags, bench_flags, sweep_flags, cal_flags;
  auto* train = app.add_subcommand("train", "train models and write telemetry + checkpoints");
  add_common(train, train_flags, true);

  auto* score = app.add_subcommand("score", "score ID test and OOD panel with a checkpoint");
  add_common(score, score_flags, true);
  std::string checkpoint_path, score_tag, score_loss;
  score->add_option("--checkpoint", checkpoint_path, "checkpoint file")->required();
  score->add_option("--loss", score_loss, "loss the checkpoint was trained with (selects per-loss temperatures)");
  score->add_option("--tag", score_tag, "file name stem for the dumps (default: checkpoint stem)");

  auto* eval = app.add_subcommand("eval", "detection metrics from a score dump");
  std::string eval_dump, eval_out;
  double eval_tpr = 0.95;
  bool eval_quiet = false;
  eval->add_option("--scores", eval_dump, "score dump file")->required();
  eval->add_option("--tpr", eval_tpr, "TPR target for the FPR metric");
  eval->add_option("--out", eval_out, "output CSV (default stdout)");
  eval->add_flag("--quiet", eval_quiet, "accepted for symmetry");

  auto* bench = app.add_subcommand("bench", "full loss x score x OOD-set benchmark");
  add_common(bench, bench_flags, true);

  auto* sweep = app.add_subcommand("sweep-tau", "select the LogitNorm temperature on the validation OOD set");
  add_common(sweep, sweep_flags, true);
  std::vector<double> grid;
  sweep->add_option("--grid", grid, "tau values (default: config tau_grid)");

  auto* cal = app.add_subcommand("calibrate", "ECE before and after temperature scaling");
  add_common(cal, cal_flags, true);

  auto* report = app.add_subcommand("report", "histogram data from a score dump");
  std::string report_dump, report_out;
  std::size_t bins = 50;
  bool report_quiet = false;
  report->add_option("--scores", report_dump, "score dump file")->required();
  report->add_option("--bins", bins, "number of bins");
  report->add_option("--out", report_out, "output CSV (default stdout)");
  report->add_flag("--quiet", report_quiet, "accepted for symmetry");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitConfig;
  }

  try {
    if (*train) return cmd_train(train_flags);
    if (*score) return cmd_score(score_flags, checkpoint_path, score_tag, score_loss);
    if (*eval) return cmd_eval(eval_dump, eval_tpr, eval_out);
    if (*bench) return cmd_bench(bench_flags);
    if (*sweep) return cmd_sweep(sweep_flags, grid);
    if (*cal) return cmd_calibrate(cal_flags);
    if (*report) return cmd_report(report_dump, bins, report_out);
  } catch (const lb::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const lb::DivergedError& e) {
    std::cerr << "diverged: " << e.what() << '\n';
    return kExitDiverged;
  } catch (const lb::Error& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kExitData;
  }
  return 0;
}
