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

// Dirichlet opinions over class evidence and the evidential training loss:
// expected squared error under Dirichlet(α) plus an annealed KL penalty
// on misleading evidence, with analytic gradients w.r.t. the evidence.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "uaal/errors.hpp"
#include "uaal/numerics.hpp"

namespace uaal {

/// Non-negative evidence per class, K ≥ 2.
class EvidenceVector {
 public:
  EvidenceVector() = default;
  explicit EvidenceVector(std::vector<double> values) : values_(std::move(values)) {
    if (values_.size() < 2) throw DomainError("EvidenceVector: need K >= 2 classes");
    for (double v : values_) {
      if (!(v >= 0.0) || !std::isfinite(v)) {
        throw DomainError("EvidenceVector: evidence must be finite and >= 0");
      }
    }
  }

  std::size_t num_classes() const { return values_.size(); }
  double operator[](std::size_t k) const { return values_[k]; }
  std::span<const double> values() const { return values_; }

 private:
  std::vector<double> values_;
};

/// One-hot encoding of a ground-truth class.
class OneHotLabel {
 public:
  OneHotLabel() = default;
  OneHotLabel(std::size_t class_index, std::size_t num_classes)
      : class_index_(class_index), num_classes_(num_classes) {
    if (num_classes < 2) throw DomainError("OneHotLabel: need K >= 2 classes");
    if (class_index >= num_classes) {
      throw DomainError("OneHotLabel: class index " + std::to_string(class_index) +
                        " outside [0, " + std::to_string(num_classes) + ")");
    }
  }

  std::size_t class_index() const { return class_index_; }
  std::size_t num_classes() const { return num_classes_; }
  double operator[](std::size_t k) const { return k == class_index_ ? 1.0 : 0.0; }
  std::vector<double> dense() const {
    std::vector<double> y(num_classes_, 0.0);
    y[class_index_] = 1.0;
    return y;
  }

 private:
  std::size_t class_index_ = 0;
  std::size_t num_classes_ = 2;
};

/// Subjective opinion equivalent to Dirichlet(α), α = e + 1.
struct DirichletOpinion {
  std::vector<double> alpha;
  double strength = 0.0;  // S = Σ α_k
  std::vector<double> belief;
  double uncertainty = 1.0;  // K / S
  std::vector<double> expected_prob;

  std::size_t num_classes() const { return alpha.size(); }
};

struct LossBreakdown {
  double mse_term = 0.0;
  double kl_term = 0.0;
  double lambda = 0.0;
  double total = 0.0;
};

struct EvidentialSample {
  EvidenceVector evidence;
  OneHotLabel label;
};

inline DirichletOpinion opinion_from_evidence(const EvidenceVector& e) {
  const std::size_t k = e.num_classes();
  DirichletOpinion op;
  op.alpha.resize(k);
  for (std::size_t i = 0; i < k; ++i) op.alpha[i] = e[i] + 1.0;
  op.strength = std::accumulate(op.alpha.begin(), op.alpha.end(), 0.0);
  op.belief.resize(k);
  op.expected_prob.resize(k);
  for (std::size_t i = 0; i < k; ++i) {
    op.belief[i] = e[i] / op.strength;
    op.expected_prob[i] = op.alpha[i] / op.strength;
  }
  op.uncertainty = static_cast<double>(k) / op.strength;
  return op;
}

/// ln of the Dirichlet density at an interior simplex point p.
inline double dirichlet_log_density(std::span<const double> p,
                                    std::span<const double> alpha) {
  if (p.size() != alpha.size() || p.size() < 2) {
    throw DomainError("dirichlet_log_density: p and alpha must share K >= 2");
  }
  double sum_p = 0.0;
  for (double v : p) {
    if (!(v > 0.0)) throw DomainError("dirichlet_log_density: p must be strictly interior");
    sum_p += v;
  }
  if (std::abs(sum_p - 1.0) > 1e-9) {
    throw DomainError("dirichlet_log_density: p must sum to 1");
  }
  double strength = 0.0;
  double log_beta = 0.0;
  double kernel = 0.0;
  for (std::size_t k = 0; k < p.size(); ++k) {
    strength += alpha[k];
    log_beta += log_gamma(alpha[k]);
    kernel += (alpha[k] - 1.0) * std::log(p[k]);
  }
  log_beta -= log_gamma(strength);
  return kernel - log_beta;
}

namespace detail {

inline void check_alpha(std::span<const double> alpha, const char* fn) {
  if (alpha.size() < 2) throw DomainError(std::string(fn) + ": need K >= 2");
  for (double a : alpha) {
    if (!(a >= 1.0) || !std::isfinite(a)) {
      throw DomainError(std::string(fn) + ": every alpha must be finite and >= 1");
    }
  }
}

inline void check_label(std::span<const double> alpha, const OneHotLabel& y,
                        const char* fn) {
  if (y.num_classes() != alpha.size()) {
    throw DomainError(std::string(fn) + ": label and alpha class counts differ");
  }
}

}  // namespace detail

/// E_{p ~ Dir(α)} ‖y − p‖², via the error + variance decomposition.
inline double evidential_mse_loss(std::span<const double> alpha, const OneHotLabel& y) {
  detail::check_alpha(alpha, "evidential_mse_loss");
  detail::check_label(alpha, y, "evidential_mse_loss");
  const double s = std::accumulate(alpha.begin(), alpha.end(), 0.0);
  double loss = 0.0;
  for (std::size_t j = 0; j < alpha.size(); ++j) {
    const double p = alpha[j] / s;
    const double err = y[j] - p;
    loss += err * err + p * (1.0 - p) / (s + 1.0);
  }
  return loss;
}

/// α̃ = y + (1 − y) ∘ α: the true class's parameter is reset to 1.
inline std::vector<double> remove_non_misleading(std::span<const double> alpha,
                                                 const OneHotLabel& y) {
  detail::check_label(alpha, y, "remove_non_misleading");
  std::vector<double> tilde(alpha.begin(), alpha.end());
  tilde[y.class_index()] = 1.0;
  return tilde;
}

/// KL[Dir(α̃) ‖ Dir(1,…,1)].
inline double kl_to_uniform(std::span<const double> alpha_tilde) {
  detail::check_alpha(alpha_tilde, "kl_to_uniform");
  const double k = static_cast<double>(alpha_tilde.size());
  const double s = std::accumulate(alpha_tilde.begin(), alpha_tilde.end(), 0.0);
  const double psi_s = digamma(s);
  double kl = log_gamma(s) - log_gamma(k);
  for (double a : alpha_tilde) {
    kl -= log_gamma(a);
    kl += (a - 1.0) * (digamma(a) - psi_s);
  }
  // Rounding can leave a tiny negative residue near α̃ = 1.
  return std::max(kl, 0.0);
}

/// λ_t = min(1, t / 10) for 1-based epoch t.
inline double annealing_coefficient(int epoch) {
  if (epoch < 1) {
    throw DomainError("annealing_coefficient: epoch index is 1-based, got " +
                      std::to_string(epoch));
  }
  return std::min(1.0, static_cast<double>(epoch) / 10.0);
}

namespace detail {

inline std::vector<double> alpha_of(const EvidenceVector& e) {
  std::vector<double> alpha(e.num_classes());
  for (std::size_t k = 0; k < alpha.size(); ++k) alpha[k] = e[k] + 1.0;
  return alpha;
}

inline void check_batch(std::span<const EvidentialSample> batch, const char* fn) {
  if (batch.empty()) throw DomainError(std::string(fn) + ": empty batch");
  const std::size_t k = batch.front().evidence.num_classes();
  for (const auto& s : batch) {
    if (s.evidence.num_classes() != k || s.label.num_classes() != k) {
      throw DomainError(std::string(fn) + ": samples must share K");
    }
  }
}

}  // namespace detail

/// Loss of one sample, split into its two terms (λ not applied).
inline std::pair<double, double> sample_loss_terms(const EvidenceVector& e,
                                                   const OneHotLabel& y) {
  const auto alpha = detail::alpha_of(e);
  return {evidential_mse_loss(alpha, y), kl_to_uniform(remove_non_misleading(alpha, y))};
}

/// d/dα of (mse + λ·KL(α̃)) for one sample. Since α = e + 1 this is also the
/// gradient w.r.t. the evidence.
inline std::vector<double> sample_loss_gradient(std::span<const double> alpha,
                                                const OneHotLabel& y, double lambda) {
  const std::size_t k = alpha.size();
  const double s = std::accumulate(alpha.begin(), alpha.end(), 0.0);
  std::vector<double> p(k);
  double sum_p2 = 0.0;
  double err_dot_p = 0.0;
  for (std::size_t j = 0; j < k; ++j) {
    p[j] = alpha[j] / s;
    sum_p2 += p[j] * p[j];
    err_dot_p += (y[j] - p[j]) * p[j];
  }
  std::vector<double> grad(k);
  const double var_shift = (1.0 - sum_p2) / ((s + 1.0) * (s + 1.0));
  for (std::size_t j = 0; j < k; ++j) {
    const double d_err = -2.0 / s * ((y[j] - p[j]) - err_dot_p);
    const double d_var = -2.0 * (p[j] - sum_p2) / (s * (s + 1.0)) - var_shift;
    grad[j] = d_err + d_var;
  }
  if (lambda != 0.0) {
    const auto tilde = remove_non_misleading(alpha, y);
    const double s_tilde = std::accumulate(tilde.begin(), tilde.end(), 0.0);
    const double shared = (s_tilde - static_cast<double>(k)) * trigamma(s_tilde);
    for (std::size_t j = 0; j < k; ++j) {
      if (j == y.class_index()) continue;  // dα̃_j/dα_j = 0 on the true class
      grad[j] += lambda * ((tilde[j] - 1.0) * trigamma(tilde[j]) - shared);
    }
  }
  return grad;
}

/// Σᵢ mse(αᵢ, yᵢ) + λ_t Σᵢ KL(α̃ᵢ). The breakdown holds undivided sums.
inline LossBreakdown total_loss(std::span<const EvidentialSample> batch, int epoch) {
  detail::check_batch(batch, "total_loss");
  LossBreakdown out;
  out.lambda = annealing_coefficient(epoch);
  for (const auto& s : batch) {
    const auto [mse, kl] = sample_loss_terms(s.evidence, s.label);
    out.mse_term += mse;
    out.kl_term += kl;
  }
  out.total = out.mse_term + out.lambda * out.kl_term;
  return out;
}

/// ∂ total_loss / ∂ eᵢ for each sample i, in batch order.
inline std::vector<std::vector<double>> total_loss_gradient(
    std::span<const EvidentialSample> batch, int epoch) {
  detail::check_batch(batch, "total_loss_gradient");
  const double lambda = annealing_coefficient(epoch);
  std::vector<std::vector<double>> grads;
  grads.reserve(batch.size());
  for (const auto& s : batch) {
    grads.push_back(sample_loss_gradient(detail::alpha_of(s.evidence), s.label, lambda));
  }
  return grads;
}

}  // namespace uaal
