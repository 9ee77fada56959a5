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

// Normalized-temperature cross-entropy over pairs of augmented views, and
// the vector-data augmentations that produce those views.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <random>
#include <span>
#include <vector>

#include "uaal/errors.hpp"
#include "uaal/features.hpp"
#include "uaal/rng.hpp"

namespace uaal {

struct AugmentationConfig {
  double noise_sigma = 0.1;           // relative to each feature's std
  double feature_dropout_prob = 0.1;
  std::uint64_t seed = 0;

  void validate() const {
    if (!(noise_sigma >= 0.0)) throw DomainError("AugmentationConfig: noise_sigma must be >= 0");
    if (!(feature_dropout_prob >= 0.0 && feature_dropout_prob <= 1.0)) {
      throw DomainError("AugmentationConfig: dropout probability must lie in [0, 1]");
    }
  }
};

/// Per-column standard deviation (population form).
inline std::vector<double> feature_std(const FeatureMatrix& xs) {
  std::vector<double> mean(xs.cols(), 0.0), var(xs.cols(), 0.0);
  if (xs.empty()) return var;
  for (std::size_t i = 0; i < xs.rows(); ++i) {
    for (std::size_t c = 0; c < xs.cols(); ++c) mean[c] += xs.row(i)[c];
  }
  for (auto& m : mean) m /= static_cast<double>(xs.rows());
  for (std::size_t i = 0; i < xs.rows(); ++i) {
    for (std::size_t c = 0; c < xs.cols(); ++c) {
      const double d = xs.row(i)[c] - mean[c];
      var[c] += d * d;
    }
  }
  for (auto& v : var) v = std::sqrt(v / static_cast<double>(xs.rows()));
  return var;
}

/// Gaussian jitter scaled by feature std, then random feature dropout.
inline std::vector<double> augment(std::span<const double> x, std::span<const double> scale,
                                   const AugmentationConfig& aug, Rng& rng) {
  std::vector<double> out(x.begin(), x.end());
  std::normal_distribution<double> normal(0.0, 1.0);
  std::bernoulli_distribution drop(aug.feature_dropout_prob);
  for (std::size_t c = 0; c < out.size(); ++c) {
    if (aug.noise_sigma > 0.0) out[c] += aug.noise_sigma * scale[c] * normal(rng);
    if (aug.feature_dropout_prob > 0.0 && drop(rng)) out[c] = 0.0;
  }
  return out;
}

struct ContrastiveLoss {
  double mean_loss = 0.0;
  std::vector<double> per_anchor;
  std::vector<std::vector<double>> grad;  // d(mean_loss)/d(projection), per view
};

/// Views 0..B-1 are first augmentations and B..2B-1 their partners, so the
/// positive of anchor i is (i + B) mod 2B. The denominator runs over every
/// other view, the positive included.
inline ContrastiveLoss nt_xent(const std::vector<std::vector<double>>& projections,
                               double temperature) {
  if (!(temperature > 0.0)) throw DomainError("nt_xent: temperature must be > 0");
  const std::size_t n = projections.size();
  if (n < 4 || n % 2 != 0) {
    throw DomainError("nt_xent: need an even number of views from >= 2 samples");
  }
  const std::size_t half = n / 2;
  const std::size_t dim = projections.front().size();

  std::vector<std::vector<double>> unit(n, std::vector<double>(dim));
  std::vector<double> norms(n);
  for (std::size_t i = 0; i < n; ++i) {
    double sq = 0.0;
    for (double v : projections[i]) sq += v * v;
    norms[i] = std::max(std::sqrt(sq), 1e-12);
    for (std::size_t d = 0; d < dim; ++d) unit[i][d] = projections[i][d] / norms[i];
  }
  std::vector<double> sim(n * n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = i; k < n; ++k) {
      double dot = 0.0;
      for (std::size_t d = 0; d < dim; ++d) dot += unit[i][d] * unit[k][d];
      sim[i * n + k] = sim[k * n + i] = dot;
    }
  }

  ContrastiveLoss out;
  out.per_anchor.resize(n);
  std::vector<std::vector<double>> d_unit(n, std::vector<double>(dim, 0.0));
  std::vector<double> weight(n);
  const double inv_count = 1.0 / static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t pos = (i + half) % n;
    double max_logit = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < n; ++k) {
      if (k != i) max_logit = std::max(max_logit, sim[i * n + k] / temperature);
    }
    double denom = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      weight[k] = k == i ? 0.0 : std::exp(sim[i * n + k] / temperature - max_logit);
      denom += weight[k];
    }
    out.per_anchor[i] = -(sim[i * n + pos] / temperature - max_logit) + std::log(denom);
    out.mean_loss += out.per_anchor[i] * inv_count;
    for (std::size_t k = 0; k < n; ++k) {
      if (k == i) continue;
      const double coeff =
          (weight[k] / denom - (k == pos ? 1.0 : 0.0)) / temperature * inv_count;
      for (std::size_t d = 0; d < dim; ++d) {
        d_unit[i][d] += coeff * unit[k][d];
        d_unit[k][d] += coeff * unit[i][d];
      }
    }
  }
  // Through the normalization z / ‖z‖.
  out.grad.assign(n, std::vector<double>(dim));
  for (std::size_t i = 0; i < n; ++i) {
    double radial = 0.0;
    for (std::size_t d = 0; d < dim; ++d) radial += unit[i][d] * d_unit[i][d];
    for (std::size_t d = 0; d < dim; ++d) {
      out.grad[i][d] = (d_unit[i][d] - unit[i][d] * radial) / norms[i];
    }
  }
  return out;
}

/// Cosine similarity of two vectors.
inline double cosine_similarity(std::span<const double> a, std::span<const double> b) {
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  return dot / std::max(std::sqrt(na) * std::sqrt(nb), 1e-24);
}

}  // namespace uaal
