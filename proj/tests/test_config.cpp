#include <gtest/gtest.h>

#include "logitbench/config.hpp"

using namespace logitbench;

namespace {

const char* kFull = R"({
  "data": {"kind": "blobs", "k": 4, "d": 6, "n_train_per_class": 30, "n_test_per_class": 10,
           "cluster_spread": 0.4, "cluster_radius": 2.0, "seed": 3, "validation_fraction": 0.1},
  "model": {"hidden": [16]},
  "losses": [{"kind": "ce"}, {"kind": "logitnorm", "tau": 0.1}, {"kind": "logitpenalty", "lambda": 0.05}],
  "optim": {"lr0": 0.05, "momentum": 0.9, "weight_decay": 0.0005, "epochs": 10, "batch_size": 16,
            "lr_drops": [{"epoch": 5, "factor": 0.1}]},
  "scores": [{"kind": "msp"}, {"kind": "odin", "T": 1000, "eps": 0.0014},
             {"kind": "energy", "T": 1, "T_by_loss": {"logitnorm": 0.1}}, {"kind": "gradnorm"}],
  "ood_panel": [{"kind": "uniform_box", "half_width": 4, "m": 50, "seed": 1},
                {"kind": "gaussian_noise", "stddev": "match_id", "m": 50, "seed": 2},
                {"kind": "ring", "radius": 8, "m": 50, "seed": 3},
                {"kind": "shifted_blobs", "tag": "near", "clusters": 4, "cluster_radius": 2,
                 "cluster_spread": 0.4, "means_seed": 99, "m": 50, "seed": 4}],
  "validation_ood": {"kind": "gaussian_noise", "tag": "val", "stddev": 1.5, "m": 40, "seed": 5},
  "metrics": {"tpr_target": 0.95, "ece_bins": 15, "hist_bins": 20},
  "seeds": [0, 1],
  "tau_grid": [0.01, 0.04, 1],
  "output_dir": "somewhere"
})";

std::string with(const std::string& from, const std::string& to) {
  std::string s = kFull;
  const auto pos = s.find(from);
  if (pos == std::string::npos) throw std::logic_error("fixture text not found: " + from);
  s.replace(pos, from.size(), to);
  return s;
}

}  // namespace

TEST(Config, ParsesEveryField) {
  const ExperimentConfig c = parse_config(kFull);
  EXPECT_EQ(c.data.k, 4u);
  EXPECT_EQ(c.data.d, 6u);
  EXPECT_DOUBLE_EQ(c.data.validation_fraction, 0.1);
  EXPECT_EQ(c.layer_dims(), (std::vector<std::size_t>{6, 16, 4}));
  ASSERT_EQ(c.losses.size(), 3u);
  EXPECT_EQ(c.losses[1].kind, LossKind::LogitNorm);
  EXPECT_DOUBLE_EQ(c.losses[1].tau, 0.1);
  EXPECT_EQ(c.optim.epochs, 10u);
  ASSERT_EQ(c.optim.lr_drops.size(), 1u);
  EXPECT_EQ(c.optim.lr_drops[0].epoch, 5u);
  ASSERT_EQ(c.scores.size(), 4u);
  EXPECT_DOUBLE_EQ(c.scores[1].config.odin_eps, 0.0014);
  EXPECT_DOUBLE_EQ(c.scores[2].for_loss(LossKind::LogitNorm).energy_T, 0.1);
  EXPECT_DOUBLE_EQ(c.scores[2].for_loss(LossKind::CrossEntropy).energy_T, 1.0);
  ASSERT_EQ(c.ood_panel.size(), 4u);
  EXPECT_TRUE(c.ood_panel[1].match_id_std);
  EXPECT_EQ(c.ood_panel[3].tag, "near");
  EXPECT_EQ(c.ood_panel[3].params.means_seed, 99u);
  ASSERT_TRUE(c.validation_ood.has_value());
  EXPECT_DOUBLE_EQ(c.validation_ood->params.stddev, 1.5);
  EXPECT_EQ(c.metrics.hist_bins, 20u);
  EXPECT_EQ(c.seeds, (std::vector<std::uint64_t>{0, 1}));
  EXPECT_EQ(c.tau_grid.size(), 3u);
  EXPECT_EQ(c.output_dir, "somewhere");
}

TEST(Config, DefaultsMatchTrainingRecipe) {
  const ExperimentConfig c = parse_config("{}");
  EXPECT_DOUBLE_EQ(c.optim.lr0, 0.1);
  EXPECT_DOUBLE_EQ(c.optim.momentum, 0.9);
  EXPECT_DOUBLE_EQ(c.optim.weight_decay, 5e-4);
  EXPECT_EQ(c.optim.epochs, 200u);
  EXPECT_EQ(c.optim.batch_size, 128u);
  EXPECT_DOUBLE_EQ(c.losses[1].tau, 0.04);
  EXPECT_DOUBLE_EQ(c.metrics.tpr_target, 0.95);
  EXPECT_EQ(c.metrics.ece_bins, 15u);
  EXPECT_EQ(c.layer_dims(), (std::vector<std::size_t>{16, 64, 64, 10}));
}

TEST(Config, UnknownKeysAreErrorsAtEveryLevel) {
  EXPECT_THROW(parse_config(with("\"output_dir\"", "\"outptu_dir\"")), ConfigError);
  EXPECT_THROW(parse_config(with("\"cluster_spread\"", "\"cluster_sprad\"")), ConfigError);
  EXPECT_THROW(parse_config(with("{\"kind\": \"ce\"}", "{\"kind\": \"ce\", \"tau\": 1, \"extra\": 1}")), ConfigError);
  EXPECT_THROW(parse_config(with("\"factor\"", "\"factr\"")), ConfigError);
  EXPECT_THROW(parse_config(with("\"half_width\"", "\"halfwidth\"")), ConfigError);
  EXPECT_THROW(parse_config(with("{\"kind\": \"gradnorm\"}", "{\"kind\": \"gradnorm\", \"eps\": 0.1}")), ConfigError);
}

TEST(Config, InvalidValuesAreErrors) {
  EXPECT_THROW(parse_config("{ not json"), ConfigError);
  EXPECT_THROW(parse_config(with("\"tau\": 0.1", "\"tau\": 0")), ConfigError);
  EXPECT_THROW(parse_config(with("\"seeds\": [0, 1]", "\"seeds\": []")), ConfigError);
  EXPECT_THROW(parse_config(with("\"tpr_target\": 0.95", "\"tpr_target\": 1.5")), ConfigError);
  EXPECT_THROW(parse_config(with("\"epoch\": 5", "\"epoch\": 50")), ConfigError);
  EXPECT_THROW(parse_config(with("\"kind\": \"msp\"", "\"kind\": \"knn\"")), ConfigError);
  EXPECT_THROW(parse_config(with("\"epochs\": 10", "\"epochs\": \"ten\"")), ConfigError);
  EXPECT_THROW(parse_config(with("\"stddev\": \"match_id\"", "\"stddev\": \"match\"")), ConfigError);
  EXPECT_THROW(parse_config(with("\"tag\": \"near\"", "\"tag\": \"ring\"")), ConfigError);
}

TEST(Config, HashIsContentBased) {
  EXPECT_EQ(content_hash(kFull), content_hash(std::string(kFull)));
  EXPECT_NE(content_hash(kFull), content_hash(with("\"seeds\": [0, 1]", "\"seeds\": [0, 2]")));
  EXPECT_EQ(content_hash("").size(), 16u);
  // FNV-1a 64 reference values.
  EXPECT_EQ(content_hash(""), "cbf29ce484222325");
  EXPECT_EQ(content_hash("a"), "af63dc4c8601ec8c");
}

TEST(Config, MissingFileIsConfigError) {
  EXPECT_THROW(load_config_file("/nonexistent/config.json"), ConfigError);
}
