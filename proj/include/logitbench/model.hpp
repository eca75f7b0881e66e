#pragma once

#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "logitbench/errors.hpp"
#include "logitbench/matrix.hpp"
#include "logitbench/rng.hpp"
#include "logitbench/tape.hpp"

namespace logitbench {

// Fully connected classifier: ReLU between layers, identity on the output.
// weights[l] is dims[l] x dims[l+1]; biases[l] is 1 x dims[l+1].
struct MlpModel {
  std::vector<std::size_t> layer_dims;
  std::vector<Matrix2D> weights;
  std::vector<Matrix2D> biases;

  std::size_t input_dim() const { return layer_dims.front(); }
  std::size_t num_classes() const { return layer_dims.back(); }
  std::size_t num_layers() const { return weights.size(); }

  friend bool operator==(const MlpModel&, const MlpModel&) = default;
};

inline constexpr std::uint64_t kInitStream = 1;

inline void validate_layer_dims(const std::vector<std::size_t>& dims) {
  if (dims.size() < 2) throw ConfigError("layer_dims needs at least input and output widths");
  for (std::size_t d : dims)
    if (d == 0) throw ConfigError("layer_dims entries must be positive");
}

// He-style fan-in scaled uniform weights, zero biases.
inline MlpModel init_model(const std::vector<std::size_t>& layer_dims, std::uint64_t seed) {
  validate_layer_dims(layer_dims);
  Rng rng = Rng::derive(seed, kInitStream);
  MlpModel m;
  m.layer_dims = layer_dims;
  for (std::size_t l = 0; l + 1 < layer_dims.size(); ++l) {
    const std::size_t fan_in = layer_dims[l];
    const std::size_t fan_out = layer_dims[l + 1];
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
    Matrix2D w(fan_in, fan_out);
    for (double& v : w.data()) v = rng.uniform(-bound, bound);
    m.weights.push_back(std::move(w));
    m.biases.emplace_back(1, fan_out);
  }
  return m;
}

struct ForwardResult {
  Matrix2D logits;
  // Input to the last layer (post-ReLU hidden activations, or x itself for a
  // single-layer model).
  Matrix2D penultimate;
};

inline void check_input(const MlpModel& model, const Matrix2D& x) {
  if (x.cols() != model.input_dim()) {
    throw ShapeError("forward: input has " + std::to_string(x.cols()) + " features, model expects " +
                     std::to_string(model.input_dim()));
  }
}

// Untraced forward pass.
inline ForwardResult forward_full(const MlpModel& model, const Matrix2D& x) {
  check_input(model, x);
  Matrix2D h = x;
  for (std::size_t l = 0; l + 1 < model.num_layers(); ++l) {
    h = add_row_bias(matmul(h, model.weights[l]), model.biases[l]);
    for (double& v : h.data()) v = v > 0.0 ? v : 0.0;
  }
  Matrix2D logits = add_row_bias(matmul(h, model.weights.back()), model.biases.back());
  return {std::move(logits), std::move(h)};
}

inline Matrix2D forward(const MlpModel& model, const Matrix2D& x) {
  return forward_full(model, x).logits;
}

// Model parameters and input placed on a tape.
struct TracedForward {
  std::vector<Var> weights;
  std::vector<Var> biases;
  Var input;
  Var penultimate;
  Var logits;
};

// Traced forward pass. Parameter gradients are always tracked; input
// gradients only when trace_input is set.
inline TracedForward forward(GradTape& tape, const MlpModel& model, const Matrix2D& x,
                             bool trace_input = false, bool trace_params = true) {
  check_input(model, x);
  TracedForward t;
  t.input = tape.leaf(x, trace_input);
  for (std::size_t l = 0; l < model.num_layers(); ++l) {
    t.weights.push_back(tape.leaf(model.weights[l], trace_params));
    t.biases.push_back(tape.leaf(model.biases[l], trace_params));
  }
  Var h = t.input;
  for (std::size_t l = 0; l + 1 < model.num_layers(); ++l) {
    h = tape.relu(tape.add_bias(tape.matmul(h, t.weights[l]), t.biases[l]));
  }
  t.penultimate = h;
  t.logits = tape.add_bias(tape.matmul(h, t.weights.back()), t.biases.back());
  return t;
}

// f = magnitude * direction. A zero vector is flagged degenerate and carries
// a zero direction.
struct LogitDecomposition {
  double magnitude = 0.0;
  std::vector<double> direction;
  bool degenerate = false;
};

inline LogitDecomposition decompose(std::span<const double> logits) {
  LogitDecomposition d;
  d.magnitude = l2_norm(logits);
  d.direction.assign(logits.begin(), logits.end());
  if (d.magnitude == 0.0) {
    d.degenerate = true;
    return d;
  }
  for (double& v : d.direction) v /= d.magnitude;
  return d;
}

// ---- checkpoint text format ------------------------------------------------
//
//   logitbench-checkpoint 1
//   config_hash <hex>
//   activation relu
//   layer_dims <n> <d0> <d1> ...
//   weight <l> <rows> <cols>
//   <one line per row, values with 17 significant digits>
//   bias <l> 1 <cols>
//   <values>
//   end

inline std::string format_real(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::scientific, 16);
  return std::string(buf, res.ptr);
}

inline double parse_real(std::string_view token, const std::string& where) {
  double v = 0.0;
  const char* first = token.data();
  const char* last = token.data() + token.size();
  if (!token.empty() && *first == '+') ++first;
  const auto res = std::from_chars(first, last, v);
  if (res.ec != std::errc() || res.ptr != last || !std::isfinite(v)) {
    throw DataError(where + ": not a finite number: '" + std::string(token) + "'");
  }
  return v;
}

namespace detail {

inline void write_matrix_rows(std::ostream& out, const Matrix2D& m) {
  for (std::size_t r = 0; r < m.rows(); ++r) {
    const auto row = m.row(r);
    for (std::size_t c = 0; c < row.size(); ++c) {
      if (c) out << ' ';
      out << format_real(row[c]);
    }
    out << '\n';
  }
}

class LineReader {
 public:
  explicit LineReader(std::istream& in) : in_(in) {}

  std::vector<std::string> next(const char* expecting) {
    std::string line;
    while (std::getline(in_, line)) {
      ++line_no_;
      std::istringstream ss(line);
      std::vector<std::string> tokens;
      for (std::string tok; ss >> tok;) tokens.push_back(tok);
      if (!tokens.empty()) return tokens;
    }
    throw DataError("checkpoint: unexpected end of file, expecting " + std::string(expecting));
  }

  std::string where() const { return "checkpoint line " + std::to_string(line_no_); }

 private:
  std::istream& in_;
  std::size_t line_no_ = 0;
};

inline std::size_t parse_count(const std::string& token, const std::string& where) {
  std::size_t v = 0;
  const auto res = std::from_chars(token.data(), token.data() + token.size(), v);
  if (res.ec != std::errc() || res.ptr != token.data() + token.size()) {
    throw DataError(where + ": expected a count, got '" + token + "'");
  }
  return v;
}

inline Matrix2D read_block(LineReader& reader, const char* tag, std::size_t layer) {
  auto header = reader.next(tag);
  if (header.size() != 4 || header[0] != tag) {
    throw DataError(reader.where() + ": expected '" + tag + " " + std::to_string(layer) + " <rows> <cols>'");
  }
  if (parse_count(header[1], reader.where()) != layer) {
    throw DataError(reader.where() + ": layer index out of order");
  }
  const std::size_t rows = parse_count(header[2], reader.where());
  const std::size_t cols = parse_count(header[3], reader.where());
  Matrix2D m(rows, cols);
  for (std::size_t r = 0; r < rows; ++r) {
    auto tokens = reader.next("matrix row");
    if (tokens.size() != cols) {
      throw DataError(reader.where() + ": expected " + std::to_string(cols) + " values, got " +
                      std::to_string(tokens.size()));
    }
    for (std::size_t c = 0; c < cols; ++c) m(r, c) = parse_real(tokens[c], reader.where());
  }
  return m;
}

}  // namespace detail

inline void save_checkpoint(std::ostream& out, const MlpModel& model, const std::string& config_hash) {
  out << "logitbench-checkpoint 1\n";
  out << "config_hash " << (config_hash.empty() ? "-" : config_hash) << '\n';
  out << "activation relu\n";
  out << "layer_dims " << model.layer_dims.size();
  for (std::size_t d : model.layer_dims) out << ' ' << d;
  out << '\n';
  for (std::size_t l = 0; l < model.num_layers(); ++l) {
    out << "weight " << l << ' ' << model.weights[l].rows() << ' ' << model.weights[l].cols() << '\n';
    detail::write_matrix_rows(out, model.weights[l]);
    out << "bias " << l << " 1 " << model.biases[l].cols() << '\n';
    detail::write_matrix_rows(out, model.biases[l]);
  }
  out << "end\n";
}

struct Checkpoint {
  MlpModel model;
  std::string config_hash;
};

inline Checkpoint load_checkpoint(std::istream& in) {
  detail::LineReader reader(in);
  auto magic = reader.next("header");
  if (magic.size() != 2 || magic[0] != "logitbench-checkpoint" || magic[1] != "1") {
    throw DataError(reader.where() + ": not a logitbench checkpoint");
  }
  Checkpoint ck;
  auto hash = reader.next("config_hash");
  if (hash.size() != 2 || hash[0] != "config_hash") throw DataError(reader.where() + ": expected config_hash");
  ck.config_hash = hash[1] == "-" ? "" : hash[1];
  auto act = reader.next("activation");
  if (act.size() != 2 || act[0] != "activation" || act[1] != "relu") {
    throw DataError(reader.where() + ": unsupported activation");
  }
  auto dims = reader.next("layer_dims");
  if (dims.size() < 2 || dims[0] != "layer_dims") throw DataError(reader.where() + ": expected layer_dims");
  const std::size_t n = detail::parse_count(dims[1], reader.where());
  if (dims.size() != n + 2) throw DataError(reader.where() + ": layer_dims count mismatch");
  for (std::size_t i = 0; i < n; ++i) ck.model.layer_dims.push_back(detail::parse_count(dims[i + 2], reader.where()));
  try {
    validate_layer_dims(ck.model.layer_dims);
  } catch (const ConfigError& e) {
    throw DataError(reader.where() + ": " + e.what());
  }
  for (std::size_t l = 0; l + 1 < n; ++l) {
    Matrix2D w = detail::read_block(reader, "weight", l);
    Matrix2D b = detail::read_block(reader, "bias", l);
    if (w.rows() != ck.model.layer_dims[l] || w.cols() != ck.model.layer_dims[l + 1] || b.rows() != 1 ||
        b.cols() != w.cols()) {
      throw DataError(reader.where() + ": layer " + std::to_string(l) + " shape disagrees with layer_dims");
    }
    ck.model.weights.push_back(std::move(w));
    ck.model.biases.push_back(std::move(b));
  }
  auto end = reader.next("end");
  if (end.size() != 1 || end[0] != "end") throw DataError(reader.where() + ": expected end");
  return ck;
}

inline void save_checkpoint_file(const std::string& path, const MlpModel& model, const std::string& config_hash) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot open " + path + " for writing");
  save_checkpoint(out, model, config_hash);
}

inline Checkpoint load_checkpoint_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open checkpoint " + path);
  return load_checkpoint(in);
}

}  // namespace logitbench
