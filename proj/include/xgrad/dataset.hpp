#pragma once

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "xgrad/rng.hpp"
#include "xgrad/tensor.hpp"

namespace xgrad {

/// Tabular dataset: one feature row per sample, integer class labels.
struct DatasetHandle {
  Tensor features;  // [N, n]
  std::vector<int64_t> labels;
  std::vector<std::string> feature_names;
  std::string provenance;  // generator spec or source-file digest

  int64_t num_samples() const { return features.ndim() == 2 ? features.shape[0] : 0; }
  int64_t num_features() const { return features.ndim() == 2 ? features.shape[1] : 0; }

  Tensor sample(int64_t i) const {
    const int64_t n = num_features();
    Tensor x = Tensor::zeros({n});
    for (int64_t j = 0; j < n; ++j) x[j] = features.at(i, j);
    return x;
  }
};

inline uint64_t fnv1a_bytes(const std::string& bytes) {
  uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

inline std::string hex64(uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

/// Parse a numeric CSV with a header row; `label_column` names the label.
/// Malformed rows and non-numeric cells are reported with their location.
inline DatasetHandle ingest_csv(const std::string& path, const std::string& label_column) {
  std::ifstream in(path);
  if (!in) throw ValueError("cannot open " + path);
  std::stringstream buffer;
  buffer << in.rdbuf();
  const std::string content = buffer.str();

  std::istringstream lines(content);
  std::string line;
  if (!std::getline(lines, line)) throw ValueError(path + ": empty file");

  auto split = [](const std::string& s) {
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream ss(s);
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (!s.empty() && s.back() == ',') cells.push_back("");
    return cells;
  };

  std::vector<std::string> header = split(line);
  int64_t label_idx = -1;
  for (size_t i = 0; i < header.size(); ++i)
    if (header[i] == label_column) label_idx = static_cast<int64_t>(i);
  if (label_idx < 0) throw ValueError(path + ": no column named '" + label_column + "'");

  DatasetHandle ds;
  for (size_t i = 0; i < header.size(); ++i)
    if (static_cast<int64_t>(i) != label_idx) ds.feature_names.push_back(header[i]);
  const int64_t n = static_cast<int64_t>(ds.feature_names.size());

  std::vector<double> values;
  int64_t row = 1;
  while (std::getline(lines, line)) {
    ++row;
    if (line.empty()) continue;
    std::vector<std::string> cells = split(line);
    if (cells.size() != header.size())
      throw ValueError(path + ": line " + std::to_string(row) + " has " +
                       std::to_string(cells.size()) + " cells, expected " +
                       std::to_string(header.size()));
    for (size_t c = 0; c < cells.size(); ++c) {
      size_t consumed = 0;
      double v = 0.0;
      try {
        v = std::stod(cells[c], &consumed);
      } catch (const std::exception&) {
        consumed = 0;
      }
      if (consumed != cells[c].size() || cells[c].empty())
        throw ValueError(path + ": line " + std::to_string(row) + ", column '" + header[c] +
                         "': non-numeric cell '" + cells[c] + "'");
      if (static_cast<int64_t>(c) == label_idx)
        ds.labels.push_back(static_cast<int64_t>(v));
      else
        values.push_back(v);
    }
  }
  const int64_t N = static_cast<int64_t>(ds.labels.size());
  ds.features = Tensor({N, n}, std::move(values));
  if (!ds.features.all_finite()) throw ValueError(path + ": non-finite feature value");
  ds.provenance = "csv:" + hex64(fnv1a_bytes(content));
  return ds;
}

inline void write_dataset_csv(const std::string& path, const DatasetHandle& ds,
                              const std::string& label_column = "label") {
  std::ofstream out(path);
  if (!out) throw ValueError("cannot open " + path + " for writing");
  for (int64_t j = 0; j < ds.num_features(); ++j) {
    if (static_cast<size_t>(j) < ds.feature_names.size())
      out << ds.feature_names[static_cast<size_t>(j)];
    else
      out << 'f' << j;
    out << ',';
  }
  out << label_column << '\n';
  out.precision(17);
  for (int64_t i = 0; i < ds.num_samples(); ++i) {
    for (int64_t j = 0; j < ds.num_features(); ++j) out << ds.features.at(i, j) << ',';
    out << ds.labels[static_cast<size_t>(i)] << '\n';
  }
}

/// Synthetic binary tabular benchmark. A small informative subset shifts the
/// class-conditional means; the remaining features are label-independent
/// nuisance noise correlated within blocks.
struct GeneratorSpec {
  int64_t n_samples = 13000;
  int64_t n_features = 118;
  int64_t n_informative = 10;
  double shift = 1.4;         // class-mean separation of the strongest feature
  double shift_decay = 0.55;  // geometric decay across informative features:
                              // a few dominant predictors plus a weak tail
  double noise = 1.0;         // per-feature noise scale
  int64_t nuisance_block = 8; // block size of correlated nuisance features
  double block_rho = 0.6;     // within-block correlation strength
  double label_flip = 0.08;   // fraction of labels flipped after generation
  double pos_fraction = 0.75; // class prior; survival-style outcomes are skewed

  std::string describe() const {
    std::ostringstream os;
    os << "synthetic:N=" << n_samples << ",n=" << n_features << ",informative=" << n_informative
       << ",shift=" << shift << ",decay=" << shift_decay << ",noise=" << noise
       << ",block=" << nuisance_block << ",rho=" << block_rho << ",flip=" << label_flip
       << ",pos=" << pos_fraction;
    return os.str();
  }
};

inline DatasetHandle generate_synthetic(const GeneratorSpec& spec, uint64_t seed) {
  if (spec.n_informative > spec.n_features)
    throw ValueError("generate_synthetic: n_informative exceeds n_features");
  if (spec.n_samples < 1 || spec.n_features < 1)
    throw ValueError("generate_synthetic: sizes must be positive");
  Rng rng(derive_seed(seed, "synthetic"));
  const int64_t N = spec.n_samples, n = spec.n_features, ninf = spec.n_informative;

  std::vector<double> direction(static_cast<size_t>(ninf));
  for (double& d : direction) d = rng.bernoulli(0.5) ? 1.0 : -1.0;

  DatasetHandle ds;
  ds.features = Tensor::zeros({N, n});
  ds.labels.resize(static_cast<size_t>(N));
  for (int64_t i = 0; i < N; ++i) {
    const int64_t y = rng.bernoulli(spec.pos_fraction) ? 1 : 0;
    ds.labels[static_cast<size_t>(i)] = y;
    const double sign = y == 1 ? 1.0 : -1.0;
    double feature_shift = spec.shift;
    for (int64_t j = 0; j < ninf; ++j) {
      ds.features.at(i, j) =
          feature_shift * sign * direction[static_cast<size_t>(j)] + spec.noise * rng.normal();
      feature_shift *= spec.shift_decay;
    }
    int64_t j = ninf;
    while (j < n) {
      const int64_t block = std::min(spec.nuisance_block, n - j);
      const double factor = rng.normal();
      const double rho = std::clamp(spec.block_rho, 0.0, 1.0);
      for (int64_t t = 0; t < block; ++t)
        ds.features.at(i, j + t) =
            spec.noise * (std::sqrt(rho) * factor + std::sqrt(1.0 - rho) * rng.normal());
      j += block;
    }
  }
  if (spec.label_flip > 0.0)
    for (int64_t i = 0; i < N; ++i)
      if (rng.bernoulli(spec.label_flip))
        ds.labels[static_cast<size_t>(i)] = 1 - ds.labels[static_cast<size_t>(i)];

  ds.feature_names.reserve(static_cast<size_t>(n));
  for (int64_t j = 0; j < n; ++j)
    ds.feature_names.push_back((j < ninf ? "inf" : "nui") + std::to_string(j));
  ds.provenance = spec.describe() + ",seed=" + std::to_string(seed);
  return ds;
}

inline DatasetHandle subset(const DatasetHandle& ds, std::span<const int64_t> indices) {
  DatasetHandle out;
  const int64_t n = ds.num_features();
  out.features = Tensor::zeros({static_cast<int64_t>(indices.size()), n});
  out.labels.reserve(indices.size());
  for (size_t r = 0; r < indices.size(); ++r) {
    for (int64_t j = 0; j < n; ++j)
      out.features.at(static_cast<int64_t>(r), j) = ds.features.at(indices[r], j);
    out.labels.push_back(ds.labels[static_cast<size_t>(indices[r])]);
  }
  out.feature_names = ds.feature_names;
  out.provenance = ds.provenance + ",subset=" + std::to_string(indices.size());
  return out;
}

inline Tensor column_means(const DatasetHandle& ds) {
  const int64_t N = ds.num_samples(), n = ds.num_features();
  Tensor m = Tensor::zeros({n});
  for (int64_t i = 0; i < N; ++i)
    for (int64_t j = 0; j < n; ++j) m[j] += ds.features.at(i, j);
  for (int64_t j = 0; j < n; ++j) m[j] /= static_cast<double>(N);
  return m;
}

}  // namespace xgrad
