// Copyright 2026 The uaal Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

// Synthetic Gaussian-mixture pools with controllable class overlap, and
// their line-oriented JSON persistence.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "uaal/errors.hpp"
#include "uaal/features.hpp"
#include "uaal/rng.hpp"

namespace uaal {

enum class Split { train_pool, eval };

inline const char* to_string(Split s) { return s == Split::train_pool ? "train_pool" : "eval"; }

/// Feature pool with ground truth and a fixed train/eval split. Sample ids
/// are the row indices 0..N-1.
struct PoolDataset {
  std::size_t num_classes = 0;
  FeatureMatrix features;
  std::vector<std::optional<std::size_t>> labels;
  std::vector<Split> splits;
  nlohmann::json generator = nlohmann::json::object();

  std::size_t size() const { return features.rows(); }
  std::size_t dim() const { return features.cols(); }

  std::vector<std::size_t> ids_in(Split s) const {
    std::vector<std::size_t> ids;
    for (std::size_t i = 0; i < splits.size(); ++i) {
      if (splits[i] == s) ids.push_back(i);
    }
    return ids;
  }

  bool fully_labeled() const {
    return std::all_of(labels.begin(), labels.end(), [](const auto& l) { return l.has_value(); });
  }

  friend bool operator==(const PoolDataset&, const PoolDataset&) = default;
};

struct MixtureSpec {
  std::size_t num_classes = 5;
  std::size_t num_samples = 10000;
  std::size_t dim = 16;
  std::vector<std::vector<double>> centers;  // empty: auto-placed
  double sigma = 1.0;
  double overlap_factor = 4.0;  // pairwise center distance in units of sigma
  double eval_fraction = 0.2;
  std::uint64_t seed = 0;
  // Class count of the out-domain variant; 0 keeps num_classes.
  std::size_t variant_num_classes = 0;

  void validate() const {
    if (num_classes < 2) throw DomainError("MixtureSpec: need K >= 2");
    if (num_samples < num_classes) throw DomainError("MixtureSpec: need N >= K");
    if (dim < 1) throw DomainError("MixtureSpec: dim must be >= 1");
    if (!(sigma > 0.0)) throw DomainError("MixtureSpec: sigma must be > 0");
    if (!(overlap_factor >= 0.0)) throw DomainError("MixtureSpec: overlap_factor must be >= 0");
    if (!(eval_fraction >= 0.0 && eval_fraction < 1.0)) {
      throw DomainError("MixtureSpec: eval_fraction must lie in [0, 1)");
    }
    if (!centers.empty()) {
      if (centers.size() != num_classes) throw DomainError("MixtureSpec: need one center per class");
      for (const auto& c : centers) {
        if (c.size() != dim) throw DomainError("MixtureSpec: center dimension mismatch");
      }
    }
  }
};

/// Named benchmark presets.
inline MixtureSpec preset_spec(const std::string& name, std::uint64_t seed) {
  MixtureSpec spec;
  spec.seed = seed;
  if (name == "nct-toy") {
    spec.num_classes = 5;
    spec.num_samples = 10000;
    spec.dim = 16;
    // Full-label eval accuracy ≈ 0.95 with the default network.
    spec.overlap_factor = 4.6;
  } else if (name == "pcam-toy") {
    spec.num_classes = 2;
    spec.num_samples = 8000;
    spec.dim = 16;
    spec.overlap_factor = 3.0;
  } else {
    throw DataError("unknown dataset preset '" + name + "'");
  }
  return spec;
}

namespace detail {

// Rows of a random orthonormal dim x dim matrix (Gram–Schmidt on Gaussians).
inline std::vector<std::vector<double>> random_rotation(std::size_t dim, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<std::vector<double>> q;
  while (q.size() < dim) {
    std::vector<double> v(dim);
    for (auto& x : v) x = normal(rng);
    for (const auto& b : q) {
      const double dot = std::inner_product(v.begin(), v.end(), b.begin(), 0.0);
      for (std::size_t i = 0; i < dim; ++i) v[i] -= dot * b[i];
    }
    const double norm = std::sqrt(std::inner_product(v.begin(), v.end(), v.begin(), 0.0));
    if (norm < 1e-8) continue;
    for (auto& x : v) x /= norm;
    q.push_back(std::move(v));
  }
  return q;
}

// K centers with equal pairwise distance `distance` when K <= dim (scaled
// simplex vertices, randomly rotated); random directions otherwise.
inline std::vector<std::vector<double>> place_centers(std::size_t k, std::size_t dim,
                                                      double distance, Rng& rng) {
  std::vector<std::vector<double>> centers(k, std::vector<double>(dim, 0.0));
  if (k <= dim) {
    const auto rot = random_rotation(dim, rng);
    const double radius = distance / std::sqrt(2.0);
    for (std::size_t c = 0; c < k; ++c) {
      for (std::size_t i = 0; i < dim; ++i) centers[c][i] = radius * rot[c][i];
    }
  } else {
    std::normal_distribution<double> normal(0.0, 1.0);
    for (auto& c : centers) {
      double sq = 0.0;
      for (auto& x : c) {
        x = normal(rng);
        sq += x * x;
      }
      const double scale = distance / std::sqrt(2.0) / std::sqrt(std::max(sq, 1e-12));
      for (auto& x : c) x *= scale;
    }
  }
  return centers;
}

inline nlohmann::json spec_json(const MixtureSpec& spec, const std::string& kind,
                                const std::vector<std::vector<double>>& centers,
                                const std::vector<double>& feature_sigma) {
  return {{"kind", kind},
          {"num_classes", spec.num_classes},
          {"num_samples", spec.num_samples},
          {"dim", spec.dim},
          {"sigma", spec.sigma},
          {"overlap_factor", spec.overlap_factor},
          {"eval_fraction", spec.eval_fraction},
          {"seed", spec.seed},
          {"variant_num_classes", spec.variant_num_classes},
          {"centers", centers},
          {"feature_sigma", feature_sigma}};
}

inline PoolDataset sample_mixture(const MixtureSpec& spec, std::size_t k,
                                  const std::vector<std::vector<double>>& centers,
                                  const std::vector<double>& feature_sigma, Rng& rng,
                                  std::uint64_t split_seed) {
  PoolDataset ds;
  ds.num_classes = k;
  std::vector<std::size_t> labels(spec.num_samples);
  for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = i % k;
  std::shuffle(labels.begin(), labels.end(), rng);

  std::normal_distribution<double> normal(0.0, 1.0);
  ds.features = FeatureMatrix(spec.num_samples, spec.dim);
  ds.labels.resize(spec.num_samples);
  for (std::size_t i = 0; i < spec.num_samples; ++i) {
    auto row = ds.features.row(i);
    for (std::size_t d = 0; d < spec.dim; ++d) {
      row[d] = centers[labels[i]][d] + feature_sigma[d] * normal(rng);
    }
    ds.labels[i] = labels[i];
  }

  // Stratified split: round(eval_fraction · n_c) of each class go to eval.
  ds.splits.assign(spec.num_samples, Split::train_pool);
  Rng split_rng(split_seed);
  for (std::size_t c = 0; c < k; ++c) {
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (labels[i] == c) members.push_back(i);
    }
    std::shuffle(members.begin(), members.end(), split_rng);
    const auto n_eval = static_cast<std::size_t>(
        std::llround(spec.eval_fraction * static_cast<double>(members.size())));
    for (std::size_t j = 0; j < n_eval; ++j) ds.splits[members[j]] = Split::eval;
  }
  return ds;
}

}  // namespace detail

inline PoolDataset generate_gaussian_mixture(const MixtureSpec& spec) {
  spec.validate();
  Rng rng(derive_seed(spec.seed, {kStreamDataset}));
  // Placement always draws from the stream so that explicit centers equal to
  // the placed ones reproduce the same samples.
  auto centers = detail::place_centers(spec.num_classes, spec.dim,
                                       spec.overlap_factor * spec.sigma, rng);
  if (!spec.centers.empty()) centers = spec.centers;
  const std::vector<double> feature_sigma(spec.dim, spec.sigma);
  auto ds = detail::sample_mixture(spec, spec.num_classes, centers, feature_sigma, rng,
                                   derive_seed(spec.seed, {kStreamSplit}));
  ds.generator = detail::spec_json(spec, "gaussian_mixture", centers, feature_sigma);
  return ds;
}

/// A different distribution over the same feature space: seed-derived
/// centers and per-feature scales, optionally a different class count.
/// Used only as pre-training input in out-domain mode.
inline PoolDataset generate_outdomain_variant(const MixtureSpec& spec) {
  spec.validate();
  const std::uint64_t seed = derive_seed(spec.seed, {kStreamOutdomain});
  Rng rng(derive_seed(seed, {kStreamDataset}));
  const std::size_t k = spec.variant_num_classes ? spec.variant_num_classes : spec.num_classes;
  if (k < 2) throw DomainError("generate_outdomain_variant: need K >= 2");
  const auto centers =
      detail::place_centers(k, spec.dim, spec.overlap_factor * spec.sigma, rng);
  std::uniform_real_distribution<double> scale(0.5, 1.5);
  std::vector<double> feature_sigma(spec.dim);
  for (auto& s : feature_sigma) s = spec.sigma * scale(rng);
  MixtureSpec variant = spec;
  variant.num_classes = k;
  variant.seed = seed;
  auto ds = detail::sample_mixture(variant, k, centers, feature_sigma, rng,
                                   derive_seed(seed, {kStreamSplit}));
  ds.generator = detail::spec_json(variant, "gaussian_mixture_outdomain", centers, feature_sigma);
  ds.generator["base_seed"] = spec.seed;
  return ds;
}

/// Rebuilds the spec recorded in a generated dataset's header, so the same
/// mixture (and its out-domain variant) can be regenerated from a file.
inline MixtureSpec mixture_spec_from_json(const nlohmann::json& generator) {
  if (!generator.is_object() || generator.value("kind", "") != "gaussian_mixture") {
    throw DataError("dataset header does not describe an in-domain Gaussian mixture");
  }
  try {
    MixtureSpec spec;
    spec.num_classes = generator.at("num_classes").get<std::size_t>();
    spec.num_samples = generator.at("num_samples").get<std::size_t>();
    spec.dim = generator.at("dim").get<std::size_t>();
    spec.sigma = generator.at("sigma").get<double>();
    spec.overlap_factor = generator.at("overlap_factor").get<double>();
    spec.eval_fraction = generator.at("eval_fraction").get<double>();
    spec.seed = generator.at("seed").get<std::uint64_t>();
    spec.variant_num_classes = generator.value("variant_num_classes", std::size_t{0});
    spec.centers = generator.at("centers").get<std::vector<std::vector<double>>>();
    spec.validate();
    return spec;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("dataset generator header: ") + e.what());
  }
}

inline void save_dataset(const PoolDataset& ds, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("save_dataset: cannot open '" + path + "' for writing");
  nlohmann::json header = {{"format", "uaal-dataset"},
                           {"version", 1},
                           {"num_classes", ds.num_classes},
                           {"dim", ds.dim()},
                           {"num_samples", ds.size()},
                           {"generator", ds.generator}};
  out << header.dump() << '\n';
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const auto row = ds.features.row(i);
    nlohmann::json line = {{"id", i},
                           {"split", to_string(ds.splits[i])},
                           {"label", nullptr},
                           {"features", std::vector<double>(row.begin(), row.end())}};
    if (ds.labels[i]) line["label"] = *ds.labels[i];
    out << line.dump() << '\n';
  }
  if (!out) throw DataError("save_dataset: write to '" + path + "' failed");
}

inline PoolDataset load_dataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("load_dataset: cannot open '" + path + "'");
  auto fail = [&](std::size_t line_no, const std::string& what) -> DataError {
    return DataError(path + ":" + std::to_string(line_no) + ": " + what);
  };

  std::string line;
  std::size_t line_no = 1;
  if (!std::getline(in, line)) throw fail(1, "missing header line");
  PoolDataset ds;
  std::size_t expected = 0;
  std::size_t dim = 0;
  try {
    const auto header = nlohmann::json::parse(line);
    if (header.at("format") != "uaal-dataset") throw fail(1, "not a uaal dataset file");
    if (header.at("version") != 1) throw fail(1, "unsupported dataset version");
    ds.num_classes = header.at("num_classes").get<std::size_t>();
    dim = header.at("dim").get<std::size_t>();
    expected = header.at("num_samples").get<std::size_t>();
    ds.generator = header.value("generator", nlohmann::json::object());
  } catch (const nlohmann::json::exception& e) {
    throw fail(1, std::string("bad header: ") + e.what());
  }
  if (ds.num_classes < 2) throw fail(1, "num_classes must be >= 2");

  ds.features = FeatureMatrix(expected, dim);
  ds.labels.assign(expected, std::nullopt);
  ds.splits.assign(expected, Split::train_pool);
  std::vector<bool> seen(expected, false);
  std::size_t count = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      const auto rec = nlohmann::json::parse(line);
      const auto id = rec.at("id").get<std::size_t>();
      if (id >= expected) throw fail(line_no, "id " + std::to_string(id) + " out of range");
      if (seen[id]) throw fail(line_no, "duplicate id " + std::to_string(id));
      seen[id] = true;
      const auto split = rec.at("split").get<std::string>();
      if (split == "train_pool") {
        ds.splits[id] = Split::train_pool;
      } else if (split == "eval") {
        ds.splits[id] = Split::eval;
      } else {
        throw fail(line_no, "unknown split '" + split + "'");
      }
      const auto& label = rec.at("label");
      if (!label.is_null()) {
        const auto l = label.get<long long>();
        if (l < 0 || static_cast<std::size_t>(l) >= ds.num_classes) {
          throw fail(line_no, "label " + std::to_string(l) + " outside [0, " +
                                  std::to_string(ds.num_classes) + ")");
        }
        ds.labels[id] = static_cast<std::size_t>(l);
      }
      const auto features = rec.at("features").get<std::vector<double>>();
      if (features.size() != dim) {
        throw fail(line_no, "expected " + std::to_string(dim) + " features, got " +
                                std::to_string(features.size()));
      }
      std::copy(features.begin(), features.end(), ds.features.row(id).begin());
      ++count;
    } catch (const nlohmann::json::exception& e) {
      throw fail(line_no, std::string("malformed record: ") + e.what());
    }
  }
  if (count != expected) {
    throw fail(line_no, "expected " + std::to_string(expected) + " samples, found " +
                            std::to_string(count));
  }
  return ds;
}

}  // namespace uaal
