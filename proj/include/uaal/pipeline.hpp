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

// The three training stages: contrastive pre-training of the encoder,
// evidential fine-tuning, and optional distillation into a student.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "uaal/contrastive.hpp"
#include "uaal/errors.hpp"
#include "uaal/features.hpp"
#include "uaal/network.hpp"
#include "uaal/rng.hpp"

namespace uaal {

enum class PretrainDomain { indomain, outdomain };

inline const char* to_string(PretrainDomain d) {
  return d == PretrainDomain::indomain ? "indomain" : "outdomain";
}

inline PretrainDomain parse_domain(const std::string& s) {
  if (s == "indomain") return PretrainDomain::indomain;
  if (s == "outdomain") return PretrainDomain::outdomain;
  throw DataError("unknown pre-training domain '" + s + "'");
}

enum class Stage { pretrained, finetuned, distilled };

inline const char* to_string(Stage s) {
  switch (s) {
    case Stage::pretrained: return "pretrained";
    case Stage::finetuned: return "finetuned";
    case Stage::distilled: return "distilled";
  }
  return "?";
}

struct PretrainConfig {
  double temperature = 0.5;
  int epochs = 20;
  std::size_t batch_size = 64;
  PretrainDomain domain = PretrainDomain::indomain;
  TrainHyper hyper;

  void validate() const {
    if (!(temperature > 0.0)) throw DomainError("PretrainConfig: temperature must be > 0");
    if (batch_size < 2) throw DomainError("PretrainConfig: batch size must be >= 2");
    if (epochs < 0) throw DomainError("PretrainConfig: epochs must be >= 0");
  }
};

struct StageResult {
  ModelState model;
  std::vector<double> epoch_losses;
};

/// Contrastive loss and encoder/projection gradient for one batch of rows.
/// grad must be zeroed by the caller and receives the gradient of the mean loss.
inline ContrastiveLoss contrastive_batch(const ModelState& model, const FeatureMatrix& xs,
                                         std::span<const std::size_t> rows,
                                         std::span<const double> scale,
                                         const AugmentationConfig& aug, double temperature,
                                         Rng& rng, std::span<double> grad) {
  const std::size_t b = rows.size();
  std::vector<ForwardTrace> traces(2 * b);
  std::vector<std::vector<double>> z(2 * b);
  for (std::size_t view = 0; view < 2; ++view) {
    for (std::size_t i = 0; i < b; ++i) {
      const auto x = augment(xs.row(rows[i]), scale, aug, rng);
      auto& trace = traces[view * b + i];
      projection_traced(model, x, trace);
      z[view * b + i] = trace.head.back().out;
    }
  }
  auto loss = nt_xent(z, temperature);
  if (!grad.empty()) {
    for (std::size_t v = 0; v < 2 * b; ++v) {
      backward_traced(model, traces[v], false, loss.grad[v], grad);
    }
  }
  return loss;
}

/// Trains encoder and projection head with NT-Xent on unlabeled rows. The
/// evidence head receives no gradient. Returns the mean loss per epoch.
inline StageResult pretrain_contrastive(ModelState model, const FeatureMatrix& xs,
                                        const PretrainConfig& config,
                                        const AugmentationConfig& aug) {
  config.validate();
  aug.validate();
  if (xs.rows() < 2) throw DomainError("pretrain_contrastive: need >= 2 samples");
  const auto scale = feature_std(xs);
  model.reset_optimizer();
  StageResult result;
  std::vector<double> grad(model.parameter_count());
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    const auto order = shuffled_indices(
        xs.rows(), derive_seed(aug.seed, {kStreamShuffle, static_cast<std::uint64_t>(epoch)}));
    Rng rng(derive_seed(aug.seed, {kStreamAugment, static_cast<std::uint64_t>(epoch)}));
    double total = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      if (end - start < 2) break;  // a single leftover sample has no negatives
      std::span<const std::size_t> rows(order.data() + start, end - start);
      std::fill(grad.begin(), grad.end(), 0.0);
      const auto loss =
          contrastive_batch(model, xs, rows, scale, aug, config.temperature, rng, grad);
      if (!std::isfinite(loss.mean_loss)) {
        throw NumericError("pretrain_contrastive: non-finite loss at epoch " +
                           std::to_string(epoch));
      }
      adam_step(model, grad, config.hyper);
      total += loss.mean_loss;
      ++batches;
    }
    result.epoch_losses.push_back(batches ? total / static_cast<double>(batches) : 0.0);
  }
  model.reset_optimizer();
  result.model = std::move(model);
  return result;
}

struct FinetuneConfig {
  int epochs = 30;
  int anneal_start_t = 1;
  TrainHyper hyper;
  std::uint64_t seed = 0;  // mini-batch shuffling
};

/// Evidential fine-tuning of all layers. Epoch e (0-based) uses annealing
/// index anneal_start_t + e. Returns per-epoch mean total loss.
inline StageResult finetune_evidential(ModelState model,
                                       std::span<const LabeledExample> labeled,
                                       const FinetuneConfig& config) {
  if (labeled.empty()) throw DomainError("finetune_evidential: empty labeled subset");
  if (config.anneal_start_t < 1) throw DomainError("finetune_evidential: anneal start must be >= 1");
  StageResult result;
  model.reset_optimizer();
  for (int e = 0; e < config.epochs; ++e) {
    const int t = config.anneal_start_t + e;
    const auto loss = train_epoch(model, labeled, t, config.hyper,
                                  derive_seed(config.seed, {kStreamShuffle,
                                                            static_cast<std::uint64_t>(t)}));
    result.epoch_losses.push_back(loss.total);
  }
  result.model = std::move(model);
  return result;
}

struct DistillConfig {
  int epochs = 10;
  TrainHyper hyper;
  std::uint64_t seed = 0;
};

/// Mean cross-entropy −Σ q_k ln p̂_k between teacher targets q and the
/// student's expected probabilities, with its parameter gradient.
inline double distillation_loss_and_gradient(const ModelState& student,
                                             const FeatureMatrix& xs,
                                             std::span<const std::size_t> rows,
                                             const std::vector<std::vector<double>>& targets,
                                             std::span<double> grad) {
  double loss = 0.0;
  const double inv = 1.0 / static_cast<double>(rows.size());
  ForwardTrace trace;
  std::vector<double> d_alpha;
  for (std::size_t r : rows) {
    evidence_traced(student, xs.row(r), trace);
    const auto& evidence = trace.head[0].out;
    const auto& q = targets[r];
    double s = 0.0;
    for (double e : evidence) s += e + 1.0;
    d_alpha.resize(evidence.size());
    double q_total = 0.0;
    for (std::size_t k = 0; k < evidence.size(); ++k) {
      const double alpha = evidence[k] + 1.0;
      loss -= q[k] * std::log(alpha / s) * inv;
      d_alpha[k] = -q[k] / alpha * inv;
      q_total += q[k];
    }
    for (auto& d : d_alpha) d += q_total / s * inv;
    if (!grad.empty()) backward_traced(student, trace, true, d_alpha, grad);
  }
  return loss;
}

/// Trains the student on the teacher's expected probabilities over unlabeled
/// rows. Returns per-epoch mean cross-entropy.
inline StageResult distill(const ModelState& teacher, ModelState student,
                           const FeatureMatrix& xs, const DistillConfig& config) {
  if (teacher.config().num_classes != student.config().num_classes) {
    throw DomainError("distill: teacher and student must share K");
  }
  if (xs.empty()) throw DomainError("distill: no unlabeled samples");
  std::vector<std::vector<double>> targets;
  targets.reserve(xs.rows());
  for (std::size_t i = 0; i < xs.rows(); ++i) {
    targets.push_back(opinion_from_evidence(forward(teacher, xs.row(i)).evidence).expected_prob);
  }
  StageResult result;
  student.reset_optimizer();
  std::vector<double> grad(student.parameter_count());
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    const auto order = shuffled_indices(
        xs.rows(), derive_seed(config.seed, {kStreamShuffle, static_cast<std::uint64_t>(epoch)}));
    double total = 0.0;
    for (std::size_t start = 0; start < order.size(); start += config.hyper.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.hyper.batch_size);
      std::span<const std::size_t> rows(order.data() + start, end - start);
      std::fill(grad.begin(), grad.end(), 0.0);
      const double loss = distillation_loss_and_gradient(student, xs, rows, targets, grad);
      if (!std::isfinite(loss)) throw NumericError("distill: non-finite loss");
      adam_step(student, grad, config.hyper);
      total += loss * static_cast<double>(rows.size());
    }
    result.epoch_losses.push_back(total / static_cast<double>(xs.rows()));
  }
  result.model = std::move(student);
  return result;
}

}  // namespace uaal
