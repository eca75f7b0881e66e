#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "logitbench/errors.hpp"
#include "logitbench/matrix.hpp"
#include "logitbench/model.hpp"
#include "logitbench/rng.hpp"

namespace logitbench {

struct LabeledDataset {
  Matrix2D features;
  std::vector<std::size_t> labels;
  std::size_t k = 0;
  std::string origin_tag;

  std::size_t size() const { return labels.size(); }
  std::size_t dim() const { return features.cols(); }

  void validate() const {
    if (labels.empty()) throw DataError(origin_tag + ": dataset is empty");
    if (features.rows() != labels.size()) throw DataError(origin_tag + ": feature/label count mismatch");
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (labels[i] >= k) {
        throw DataError(origin_tag + ": label " + std::to_string(labels[i]) + " at row " + std::to_string(i) +
                        " outside [0," + std::to_string(k) + ")");
      }
    }
    if (!features.all_finite()) throw DataError(origin_tag + ": non-finite feature");
  }

  LabeledDataset subset(std::span<const std::size_t> idx) const {
    LabeledDataset out;
    out.features = features.gather_rows(idx);
    out.labels.reserve(idx.size());
    for (std::size_t i : idx) out.labels.push_back(labels[i]);
    out.k = k;
    out.origin_tag = origin_tag;
    return out;
  }
};

struct OodDataset {
  Matrix2D features;
  std::string origin_tag;

  std::size_t size() const { return features.rows(); }
  std::size_t dim() const { return features.cols(); }

  void validate() const {
    if (features.rows() == 0) throw DataError(origin_tag + ": OOD dataset is empty");
    if (!features.all_finite()) throw DataError(origin_tag + ": non-finite feature");
  }
};

inline constexpr std::uint64_t kMeansStream = 11;
inline constexpr std::uint64_t kSamplesStream = 12;
inline constexpr std::uint64_t kSplitStream = 13;

// Random orthogonal d x d matrix (Gram-Schmidt on Gaussian columns).
inline Matrix2D random_rotation(std::size_t d, Rng& rng) {
  Matrix2D q(d, d);
  for (std::size_t c = 0; c < d; ++c) {
    std::vector<double> v(d);
    double norm = 0.0;
    while (norm < 1e-6) {
      for (double& x : v) x = rng.normal();
      for (std::size_t p = 0; p < c; ++p) {
        double dot = 0.0;
        for (std::size_t r = 0; r < d; ++r) dot += v[r] * q(r, p);
        for (std::size_t r = 0; r < d; ++r) v[r] -= dot * q(r, p);
      }
      norm = l2_norm(v);
    }
    for (std::size_t r = 0; r < d; ++r) q(r, c) = v[r] / norm;
  }
  return q;
}

// k class means of norm `radius`. The first d classes sit on rotated
// coordinate axes, the next d on their negatives; beyond 2d the directions
// are random.
inline Matrix2D blob_means(std::size_t k, std::size_t d, double radius, std::uint64_t seed) {
  Rng rng = Rng::derive(seed, kMeansStream);
  const Matrix2D rot = random_rotation(d, rng);
  Matrix2D means(k, d);
  for (std::size_t c = 0; c < k; ++c) {
    std::vector<double> dir(d);
    if (c < 2 * d) {
      const std::size_t axis = c % d;
      const double sign = c < d ? 1.0 : -1.0;
      for (std::size_t r = 0; r < d; ++r) dir[r] = sign * rot(r, axis);
    } else {
      for (double& x : dir) x = rng.normal();
      const double n = l2_norm(dir);
      for (double& x : dir) x /= n;
    }
    for (std::size_t r = 0; r < d; ++r) means(c, r) = radius * dir[r];
  }
  return means;
}

// Isotropic Gaussian clusters around blob_means(k, d, radius, seed). Rows are
// grouped by class.
inline LabeledDataset gen_blobs(std::size_t k, std::size_t d, std::size_t n_per_class, double cluster_spread,
                                double cluster_radius, std::uint64_t seed) {
  if (k < 2) throw ConfigError("gen_blobs: need k >= 2");
  if (d < 2) throw ConfigError("gen_blobs: need d >= 2");
  if (n_per_class == 0) throw ConfigError("gen_blobs: n_per_class must be positive");
  if (!(cluster_spread >= 0.0) || !(cluster_radius > 0.0)) {
    throw ConfigError("gen_blobs: spread must be >= 0 and radius > 0");
  }
  const Matrix2D means = blob_means(k, d, cluster_radius, seed);
  Rng rng = Rng::derive(seed, kSamplesStream);
  LabeledDataset ds;
  ds.features = Matrix2D(k * n_per_class, d);
  ds.labels.resize(k * n_per_class);
  ds.k = k;
  ds.origin_tag = "blobs";
  for (std::size_t c = 0; c < k; ++c) {
    for (std::size_t i = 0; i < n_per_class; ++i) {
      const std::size_t row = c * n_per_class + i;
      ds.labels[row] = c;
      for (std::size_t j = 0; j < d; ++j) {
        const double noise = cluster_spread == 0.0 ? 0.0 : cluster_spread * rng.normal();
        ds.features(row, j) = means(c, j) + noise;
      }
    }
  }
  return ds;
}

enum class OodKind { UniformBox, GaussianNoise, Ring, ShiftedBlobs };

inline std::string ood_kind_name(OodKind kind) {
  switch (kind) {
    case OodKind::UniformBox: return "uniform_box";
    case OodKind::GaussianNoise: return "gaussian_noise";
    case OodKind::Ring: return "ring";
    case OodKind::ShiftedBlobs: return "shifted_blobs";
  }
  return "?";
}

inline OodKind parse_ood_kind(const std::string& name) {
  if (name == "uniform_box") return OodKind::UniformBox;
  if (name == "gaussian_noise") return OodKind::GaussianNoise;
  if (name == "ring") return OodKind::Ring;
  if (name == "shifted_blobs") return OodKind::ShiftedBlobs;
  throw ConfigError("unknown OOD kind '" + name + "'");
}

// Parameters for every OOD kind; each kind reads only its own fields.
struct OodParams {
  double half_width = 3.0;  // uniform_box: cube [-half_width, half_width]^d
  double mean = 0.0;        // gaussian_noise
  double stddev = 1.0;      // gaussian_noise
  double radius = 6.0;      // ring: sphere shell radius
  double ring_width = 0.0;  // ring: radial Gaussian jitter
  std::size_t clusters = 10;      // shifted_blobs
  double cluster_radius = 3.0;    // shifted_blobs
  double cluster_spread = 0.5;    // shifted_blobs
  std::uint64_t means_seed = 0;   // shifted_blobs: seed of the displaced means
};

inline OodDataset gen_ood(OodKind kind, std::size_t d, std::size_t m, const OodParams& p, std::uint64_t seed) {
  if (d < 1 || m < 1) throw ConfigError("gen_ood: d and m must be positive");
  Rng rng = Rng::derive(seed, kSamplesStream);
  OodDataset ds;
  ds.features = Matrix2D(m, d);
  ds.origin_tag = ood_kind_name(kind);
  switch (kind) {
    case OodKind::UniformBox:
      if (!(p.half_width > 0.0)) throw ConfigError("uniform_box: half_width must be positive");
      for (double& v : ds.features.data()) v = rng.uniform(-p.half_width, p.half_width);
      break;
    case OodKind::GaussianNoise:
      if (!(p.stddev >= 0.0)) throw ConfigError("gaussian_noise: stddev must be nonnegative");
      for (double& v : ds.features.data()) v = rng.normal(p.mean, p.stddev);
      break;
    case OodKind::Ring:
      if (!(p.radius > 0.0)) throw ConfigError("ring: radius must be positive");
      for (std::size_t i = 0; i < m; ++i) {
        auto row = ds.features.row(i);
        double n = 0.0;
        while (n < 1e-12) {
          for (double& v : row) v = rng.normal();
          n = l2_norm(row);
        }
        const double r = p.radius + (p.ring_width > 0.0 ? p.ring_width * rng.normal() : 0.0);
        for (double& v : row) v *= r / n;
      }
      break;
    case OodKind::ShiftedBlobs: {
      if (p.clusters < 1) throw ConfigError("shifted_blobs: need at least one cluster");
      if (!(p.cluster_radius > 0.0) || !(p.cluster_spread >= 0.0)) {
        throw ConfigError("shifted_blobs: radius must be positive and spread nonnegative");
      }
      const Matrix2D means = blob_means(p.clusters, d, p.cluster_radius, p.means_seed);
      for (std::size_t i = 0; i < m; ++i) {
        const std::size_t c = i % p.clusters;
        for (std::size_t j = 0; j < d; ++j) ds.features(i, j) = means(c, j) + p.cluster_spread * rng.normal();
      }
      break;
    }
  }
  return ds;
}

// Class-stratified split. Within each class the first round(train * n_c)
// shuffled members go to the first part.
inline std::pair<LabeledDataset, LabeledDataset> split(const LabeledDataset& ds, double train_fraction,
                                                       double test_fraction, std::uint64_t seed) {
  if (!(train_fraction > 0.0) || !(test_fraction > 0.0) || std::abs(train_fraction + test_fraction - 1.0) > 1e-9) {
    throw ConfigError("split: fractions must be positive and sum to 1");
  }
  ds.validate();
  std::vector<std::vector<std::size_t>> by_class(ds.k);
  for (std::size_t i = 0; i < ds.size(); ++i) by_class[ds.labels[i]].push_back(i);
  Rng rng = Rng::derive(seed, kSplitStream);
  std::vector<std::size_t> first;
  std::vector<std::size_t> second;
  for (std::size_t c = 0; c < ds.k; ++c) {
    const auto& members = by_class[c];
    if (members.empty()) continue;
    if (members.size() < 2) {
      throw DataError("split: class " + std::to_string(c) + " has fewer than 2 samples");
    }
    const auto perm = rng.permutation(members.size());
    auto n_first = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(members.size())));
    n_first = std::clamp<std::size_t>(n_first, 1, members.size() - 1);
    for (std::size_t i = 0; i < members.size(); ++i) (i < n_first ? first : second).push_back(members[perm[i]]);
  }
  std::sort(first.begin(), first.end());
  std::sort(second.begin(), second.end());
  return {ds.subset(first), ds.subset(second)};
}

// Standard deviation over every feature value.
inline double feature_stddev(const Matrix2D& x) {
  double mean = 0.0;
  for (double v : x.data()) mean += v;
  mean /= static_cast<double>(x.size());
  double var = 0.0;
  for (double v : x.data()) var += (v - mean) * (v - mean);
  return std::sqrt(var / static_cast<double>(x.size()));
}

// ---- delimited text ----------------------------------------------------------

using LoadedDataset = std::variant<LabeledDataset, OodDataset>;

inline LoadedDataset load_delimited(std::istream& in, const std::string& name, bool has_label,
                                    std::optional<std::size_t> k = std::nullopt) {
  std::vector<double> values;
  std::vector<std::size_t> labels;
  std::size_t cols = 0;
  std::size_t rows = 0;
  std::size_t line_no = 0;
  std::string line;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto first = line.find_first_not_of(" \t");
    if (first == std::string::npos || line[first] == '#') continue;
    const std::string where = name + ":" + std::to_string(line_no);
    std::vector<std::string> cells;
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) {
      const auto b = cell.find_first_not_of(" \t");
      const auto e = cell.find_last_not_of(" \t");
      cells.push_back(b == std::string::npos ? "" : cell.substr(b, e - b + 1));
    }
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    if (rows == 0) {
      cols = cells.size();
      if (cols < (has_label ? 2u : 1u)) throw DataError(where + ": too few columns");
    } else if (cells.size() != cols) {
      throw DataError(where + ": expected " + std::to_string(cols) + " fields, found " +
                      std::to_string(cells.size()));
    }
    const std::size_t n_features = has_label ? cols - 1 : cols;
    for (std::size_t c = 0; c < n_features; ++c) values.push_back(parse_real(cells[c], where));
    if (has_label) {
      const std::string& cell = cells.back();
      std::size_t label = 0;
      const auto res = std::from_chars(cell.data(), cell.data() + cell.size(), label);
      if (res.ec != std::errc() || res.ptr != cell.data() + cell.size()) {
        throw DataError(where + ": label '" + cell + "' is not a class index");
      }
      if (k && label >= *k) {
        throw DataError(where + ": label " + std::to_string(label) + " >= k=" + std::to_string(*k));
      }
      labels.push_back(label);
    }
    ++rows;
  }
  if (rows == 0) throw DataError(name + ": no data rows");
  const std::size_t n_features = has_label ? cols - 1 : cols;
  Matrix2D features(rows, n_features, std::move(values));
  if (has_label) {
    LabeledDataset ds;
    ds.features = std::move(features);
    ds.labels = std::move(labels);
    ds.k = k ? *k : *std::max_element(ds.labels.begin(), ds.labels.end()) + 1;
    ds.origin_tag = name;
    return ds;
  }
  return OodDataset{std::move(features), name};
}

inline LoadedDataset load_delimited(const std::string& path, bool has_label,
                                    std::optional<std::size_t> k = std::nullopt) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  return load_delimited(in, path, has_label, k);
}

inline void save_delimited(std::ostream& out, const Matrix2D& features, const std::vector<std::size_t>* labels) {
  for (std::size_t r = 0; r < features.rows(); ++r) {
    const auto row = features.row(r);
    for (std::size_t c = 0; c < row.size(); ++c) {
      if (c) out << ',';
      out << format_real(row[c]);
    }
    if (labels) out << ',' << (*labels)[r];
    out << '\n';
  }
}

}  // namespace logitbench
