#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <ostream>
#include <utility>
#include <vector>

#include "logitbench/data.hpp"
#include "logitbench/errors.hpp"
#include "logitbench/losses.hpp"
#include "logitbench/model.hpp"
#include "logitbench/rng.hpp"
#include "logitbench/tape.hpp"

namespace logitbench {

struct LrDrop {
  std::size_t epoch = 0;
  double factor = 0.1;
};

struct OptimConfig {
  double lr0 = 0.1;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  std::size_t epochs = 200;
  std::size_t batch_size = 128;
  std::vector<LrDrop> lr_drops = {{80, 0.1}, {140, 0.1}};
  std::uint64_t seed = 0;

  void validate() const {
    if (!(lr0 >= 0.0)) throw ConfigError("lr0 must be nonnegative");
    if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("momentum must lie in [0, 1)");
    if (!(weight_decay >= 0.0)) throw ConfigError("weight_decay must be nonnegative");
    if (epochs == 0) throw ConfigError("epochs must be positive");
    if (batch_size == 0) throw ConfigError("batch_size must be >= 1");
    for (std::size_t i = 0; i < lr_drops.size(); ++i) {
      if (lr_drops[i].epoch >= epochs) throw ConfigError("lr drop epoch must be < epochs");
      if (i > 0 && lr_drops[i].epoch <= lr_drops[i - 1].epoch) {
        throw ConfigError("lr drop epochs must be strictly increasing");
      }
      if (!(lr_drops[i].factor > 0.0)) throw ConfigError("lr drop factor must be positive");
    }
  }
};

// Learning rate in effect during 0-based `epoch`.
inline double lr_at(const OptimConfig& cfg, std::size_t epoch) {
  if (epoch >= cfg.epochs) {
    throw ContractError("lr_at: epoch " + std::to_string(epoch) + " outside [0," + std::to_string(cfg.epochs) + ")");
  }
  double lr = cfg.lr0;
  for (const LrDrop& d : cfg.lr_drops)
    if (d.epoch <= epoch) lr *= d.factor;
  return lr;
}

struct EpochTelemetry {
  std::size_t epoch = 0;  // 1-based: state after this many epochs
  double train_loss = 0.0;
  double train_acc = 0.0;
  double mean_logit_norm_id = 0.0;
  std::optional<double> mean_logit_norm_ood;

  friend bool operator==(const EpochTelemetry&, const EpochTelemetry&) = default;
};

inline double mean_logit_norm(const MlpModel& model, const Matrix2D& x) {
  const auto norms = row_l2_norm(forward(model, x));
  double total = 0.0;
  for (double n : norms) total += n;
  return total / static_cast<double>(norms.size());
}

// Momentum buffers, one per parameter matrix. v <- m v + g; theta <- theta - lr v.
class SgdMomentum {
 public:
  SgdMomentum(const MlpModel& model, double momentum, double weight_decay)
      : momentum_(momentum), weight_decay_(weight_decay) {
    for (std::size_t l = 0; l < model.num_layers(); ++l) {
      vel_w_.emplace_back(model.weights[l].rows(), model.weights[l].cols());
      vel_b_.emplace_back(1, model.biases[l].cols());
    }
  }

  // Weight decay is added to weight gradients only; biases are not decayed.
  void step(MlpModel& model, const std::vector<Matrix2D>& grad_w, const std::vector<Matrix2D>& grad_b, double lr) {
    for (std::size_t l = 0; l < model.num_layers(); ++l) {
      update(model.weights[l], vel_w_[l], grad_w[l], weight_decay_, lr);
      update(model.biases[l], vel_b_[l], grad_b[l], 0.0, lr);
    }
  }

  const std::vector<Matrix2D>& weight_velocity() const { return vel_w_; }
  const std::vector<Matrix2D>& bias_velocity() const { return vel_b_; }

 private:
  void update(Matrix2D& param, Matrix2D& vel, const Matrix2D& grad, double decay, double lr) const {
    auto p = param.data();
    auto v = vel.data();
    const auto g = grad.data();
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double gi = g[i] + decay * p[i];
      v[i] = momentum_ * v[i] + gi;
      p[i] -= lr * v[i];
    }
  }

  double momentum_;
  double weight_decay_;
  std::vector<Matrix2D> vel_w_;
  std::vector<Matrix2D> vel_b_;
};

inline constexpr std::uint64_t kShuffleStream = 2;

struct TrainResult {
  MlpModel model;
  std::vector<EpochTelemetry> telemetry;
};

// Minibatch SGD with momentum. Telemetry: loss and accuracy are averaged over
// the epoch's minibatches (as seen during the epoch); logit norms are measured
// on the full ID set (and OOD probe) after the epoch ends.
inline TrainResult train(MlpModel model, const LabeledDataset& data, const LossConfig& loss_cfg,
                         const OptimConfig& optim, const OodDataset* probe_ood = nullptr) {
  loss_cfg.validate();
  optim.validate();
  data.validate();
  if (data.dim() != model.input_dim()) {
    throw ShapeError("train: data has " + std::to_string(data.dim()) + " features, model expects " +
                     std::to_string(model.input_dim()));
  }
  if (data.k != model.num_classes()) {
    throw ShapeError("train: data has " + std::to_string(data.k) + " classes, model outputs " +
                     std::to_string(model.num_classes()));
  }
  if (probe_ood && probe_ood->dim() != model.input_dim()) throw ShapeError("train: OOD probe dimension mismatch");

  Rng shuffle = Rng::derive(optim.seed, kShuffleStream);
  SgdMomentum opt(model, optim.momentum, optim.weight_decay);
  TrainResult result;
  const std::size_t n = data.size();
  std::vector<Matrix2D> grad_w(model.num_layers());
  std::vector<Matrix2D> grad_b(model.num_layers());
  std::vector<std::size_t> batch_labels;

  for (std::size_t epoch = 0; epoch < optim.epochs; ++epoch) {
    const double lr = lr_at(optim, epoch);
    const auto order = shuffle.permutation(n);
    double loss_sum = 0.0;
    std::size_t correct = 0;
    std::size_t step = 0;
    for (std::size_t start = 0; start < n; start += optim.batch_size, ++step) {
      const std::size_t stop = std::min(n, start + optim.batch_size);
      const std::span<const std::size_t> idx(order.data() + start, stop - start);
      const Matrix2D x = data.features.gather_rows(idx);
      batch_labels.clear();
      for (std::size_t i : idx) batch_labels.push_back(data.labels[i]);

      GradTape tape;
      double loss_value = 0.0;
      try {
        const TracedForward traced = forward(tape, model, x);
        const Var loss = apply_loss(tape, traced.logits, batch_labels, loss_cfg);
        loss_value = tape.value(loss)(0, 0);
        if (!std::isfinite(loss_value)) throw NumericError("loss is not finite");
        tape.backward(loss);
        for (std::size_t l = 0; l < model.num_layers(); ++l) {
          grad_w[l] = tape.grad(traced.weights[l]);
          grad_b[l] = tape.grad(traced.biases[l]);
          require_finite(grad_w[l], "weight gradient");
          require_finite(grad_b[l], "bias gradient");
        }
        const Matrix2D& logits = tape.value(traced.logits);
        for (std::size_t r = 0; r < logits.rows(); ++r)
          if (argmax(logits.row(r)) == batch_labels[r]) ++correct;
      } catch (const NumericError& e) {
        throw DivergedError(epoch + 1, step, e.what());
      }
      loss_sum += loss_value * static_cast<double>(idx.size());
      opt.step(model, grad_w, grad_b, lr);
    }
    EpochTelemetry t;
    t.epoch = epoch + 1;
    t.train_loss = loss_sum / static_cast<double>(n);
    t.train_acc = static_cast<double>(correct) / static_cast<double>(n);
    try {
      t.mean_logit_norm_id = mean_logit_norm(model, data.features);
      if (probe_ood) t.mean_logit_norm_ood = mean_logit_norm(model, probe_ood->features);
    } catch (const NumericError& e) {
      throw DivergedError(epoch + 1, step, e.what());
    }
    result.telemetry.push_back(t);
  }
  result.model = std::move(model);
  return result;
}

inline void write_telemetry_csv(std::ostream& out, const std::vector<EpochTelemetry>& telemetry) {
  out << "epoch,train_loss,train_acc,mean_logit_norm_id,mean_logit_norm_ood\n";
  for (const auto& t : telemetry) {
    out << t.epoch << ',' << format_real(t.train_loss) << ',' << format_real(t.train_acc) << ','
        << format_real(t.mean_logit_norm_id) << ',';
    if (t.mean_logit_norm_ood) out << format_real(*t.mean_logit_norm_ood);
    out << '\n';
  }
}

}  // namespace logitbench
