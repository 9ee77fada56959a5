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

// Pool-based active learning controller: a random seed round, then rounds
// of query → annotate → fine-tune → evaluate until the label budget is
// spent. The same controller backs both the dataset oracle and the
// interactive annotation service.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "uaal/datagen.hpp"
#include "uaal/errors.hpp"
#include "uaal/metrics.hpp"
#include "uaal/network.hpp"
#include "uaal/pipeline.hpp"
#include "uaal/rng.hpp"

namespace uaal {

enum class QueryStrategy { uncertainty_topk, random };

inline const char* to_string(QueryStrategy s) {
  return s == QueryStrategy::uncertainty_topk ? "uncertainty_topk" : "random";
}

inline QueryStrategy parse_strategy(const std::string& s) {
  if (s == "uncertainty_topk") return QueryStrategy::uncertainty_topk;
  if (s == "random") return QueryStrategy::random;
  throw DataError("unknown query strategy '" + s + "'");
}

/// The label source refused or failed; the round is aborted with the
/// controller state unchanged.
class OracleError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class Oracle {
 public:
  virtual ~Oracle() = default;
  /// Labels for ids, in the same order.
  virtual std::vector<std::size_t> annotate(std::span<const std::size_t> ids) = 0;
};

/// Answers from the dataset's stored ground truth.
class DatasetOracle : public Oracle {
 public:
  explicit DatasetOracle(const PoolDataset& pool) : pool_(pool) {}

  std::vector<std::size_t> annotate(std::span<const std::size_t> ids) override {
    std::vector<std::size_t> out;
    out.reserve(ids.size());
    for (auto id : ids) {
      if (id >= pool_.size() || !pool_.labels[id]) {
        throw OracleError("dataset oracle: no ground truth for sample " + std::to_string(id));
      }
      out.push_back(*pool_.labels[id]);
    }
    return out;
  }

 private:
  const PoolDataset& pool_;
};

struct RoundRecord {
  int round = 0;
  double labels_fraction = 0.0;
  std::string strategy;
  std::uint64_t seed = 0;
  double accuracy = 0.0;
  double weighted_f1 = 0.0;
  std::optional<double> mean_u_correct;
  std::optional<double> mean_u_incorrect;
  std::vector<std::size_t> queried_ids;
  double wall_time = 0.0;  // seconds; not part of reproducible output

  /// Equality on everything except wall_time.
  bool same_outcome(const RoundRecord& o) const {
    return round == o.round && labels_fraction == o.labels_fraction &&
           strategy == o.strategy && seed == o.seed && accuracy == o.accuracy &&
           weighted_f1 == o.weighted_f1 && mean_u_correct == o.mean_u_correct &&
           mean_u_incorrect == o.mean_u_incorrect && queried_ids == o.queried_ids;
  }
};

struct ALConfig {
  QueryStrategy strategy = QueryStrategy::uncertainty_topk;
  double budget_fraction_per_round = 0.01;
  double max_budget_fraction = 0.10;
  std::uint64_t seed = 0;
  FinetuneConfig finetune;        // its seed is replaced per round
  bool warm_start = true;         // false: every round restarts from the initial model
  bool continue_anneal = false;   // false: λ_t restarts at t = 1 each round
  bool verify_queries = false;    // brute-force check of every top-k query

  void validate() const {
    if (!(budget_fraction_per_round > 0.0 && budget_fraction_per_round <= 1.0)) {
      throw DomainError("ALConfig: per-round fraction must lie in (0, 1]");
    }
    if (!(max_budget_fraction >= budget_fraction_per_round && max_budget_fraction <= 1.0)) {
      throw DomainError("ALConfig: max budget must lie in [per-round fraction, 1]");
    }
  }
};

struct ALState {
  int round = 0;
  std::vector<std::size_t> labeled_ids;  // insertion order
  std::vector<bool> is_labeled;          // indexed by sample id
  std::vector<std::optional<std::size_t>> annotations;  // labels received
  std::vector<RoundRecord> history;
  int epochs_run = 0;
};

namespace detail {

// ceil(x) tolerant of representation error in products like 0.07 · 8000.
inline std::size_t ceil_count(double x) {
  return static_cast<std::size_t>(std::ceil(x - 1e-9));
}

}  // namespace detail

/// |labeled| required after `round` rounds: min(ceil(r·q·N), N).
inline std::size_t labeled_target(int round, double q, std::size_t pool_size) {
  return std::min(pool_size, detail::ceil_count(round * q * static_cast<double>(pool_size)));
}

/// Uniform draw of `count` ids without replacement, returned in draw order.
inline std::vector<std::size_t> sample_without_replacement(std::vector<std::size_t> candidates,
                                                           std::size_t count,
                                                           std::uint64_t seed) {
  if (count > candidates.size()) {
    throw DomainError("sample_without_replacement: requested " + std::to_string(count) +
                      " of " + std::to_string(candidates.size()));
  }
  Rng rng(seed);
  for (std::size_t i = 0; i < count; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, candidates.size() - 1);
    std::swap(candidates[i], candidates[pick(rng)]);
  }
  candidates.resize(count);
  return candidates;
}

struct ScoredId {
  std::size_t id;
  double uncertainty;
};

/// The k entries with the largest uncertainty, ordered by (descending u,
/// ascending id).
inline std::vector<std::size_t> top_uncertain(std::vector<ScoredId> scored, std::size_t k) {
  if (k > scored.size()) {
    throw DomainError("query: k = " + std::to_string(k) + " exceeds " +
                      std::to_string(scored.size()) + " unlabeled samples");
  }
  auto before = [](const ScoredId& a, const ScoredId& b) {
    return a.uncertainty != b.uncertainty ? a.uncertainty > b.uncertainty : a.id < b.id;
  };
  std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(k),
                    scored.end(), before);
  std::vector<std::size_t> out(k);
  for (std::size_t i = 0; i < k; ++i) out[i] = scored[i].id;
  return out;
}

/// Unlabeled train-pool ids in ascending order.
inline std::vector<std::size_t> unlabeled_pool_ids(const ALState& state, const PoolDataset& pool) {
  std::vector<std::size_t> out;
  for (std::size_t id = 0; id < pool.size(); ++id) {
    if (pool.splits[id] == Split::train_pool && !state.is_labeled[id]) out.push_back(id);
  }
  return out;
}

/// Selects k unlabeled pool ids by the given strategy.
inline std::vector<std::size_t> query(const ALState& state, const ModelState& model,
                                      const PoolDataset& pool, QueryStrategy strategy,
                                      std::size_t k, std::uint64_t random_seed) {
  const auto candidates = unlabeled_pool_ids(state, pool);
  if (k > candidates.size()) {
    throw DomainError("query: k = " + std::to_string(k) + " exceeds " +
                      std::to_string(candidates.size()) + " unlabeled samples");
  }
  if (strategy == QueryStrategy::random) {
    return sample_without_replacement(candidates, k, random_seed);
  }
  std::vector<ScoredId> scored;
  scored.reserve(candidates.size());
  for (auto id : candidates) {
    scored.push_back({id, predict(model, pool.features.row(id), id).opinion.uncertainty});
  }
  return top_uncertain(std::move(scored), k);
}

/// Labeled training set in labeled_ids order.
inline std::vector<LabeledExample> labeled_examples(const ALState& state, const PoolDataset& pool) {
  std::vector<LabeledExample> out;
  out.reserve(state.labeled_ids.size());
  for (auto id : state.labeled_ids) {
    const auto row = pool.features.row(id);
    out.push_back({std::vector<double>(row.begin(), row.end()), *state.annotations[id]});
  }
  return out;
}

/// Predictions on the eval split with correctness attached.
inline std::vector<Prediction> evaluate_split(const ModelState& model, const PoolDataset& pool,
                                              Split split = Split::eval) {
  const auto ids = pool.ids_in(split);
  std::vector<Prediction> preds;
  preds.reserve(ids.size());
  for (auto id : ids) {
    if (!pool.labels[id]) throw DataError("evaluation sample " + std::to_string(id) + " has no label");
    auto p = predict(model, pool.features.row(id), id);
    p.correct = p.predicted_class == *pool.labels[id];
    preds.push_back(std::move(p));
  }
  return preds;
}

/// Drives one active-learning run. Holds a reference to the pool, which
/// must outlive it.
class ActiveLearner {
 public:
  ActiveLearner(const PoolDataset& pool, ModelState initial_model, ALConfig config)
      : pool_(pool), initial_(std::move(initial_model)), config_(std::move(config)) {
    config_.validate();
    if (initial_.config().num_classes != pool_.num_classes) {
      throw DomainError("ActiveLearner: model and pool disagree on K");
    }
    if (initial_.config().input_dim != pool_.dim()) {
      throw DomainError("ActiveLearner: model and pool disagree on input dimension");
    }
    pool_size_ = pool_.ids_in(Split::train_pool).size();
    if (pool_size_ == 0) throw DomainError("ActiveLearner: empty train pool");
    if (pool_.ids_in(Split::eval).empty()) throw DomainError("ActiveLearner: empty eval split");
    model_ = initial_;
    state_.is_labeled.assign(pool_.size(), false);
    state_.annotations.assign(pool_.size(), std::nullopt);
    total_rounds_ = static_cast<int>(std::llround(config_.max_budget_fraction /
                                                  config_.budget_fraction_per_round));
    if (std::abs(total_rounds_ * config_.budget_fraction_per_round -
                 config_.max_budget_fraction) > 1e-9) {
      total_rounds_ = static_cast<int>(
          std::ceil(config_.max_budget_fraction / config_.budget_fraction_per_round));
    }
  }

  const ALState& state() const { return state_; }
  const ALConfig& config() const { return config_; }
  const ModelState& model() const { return model_; }
  const PoolDataset& pool() const { return pool_; }
  std::size_t pool_size() const { return pool_size_; }
  int total_rounds() const { return total_rounds_; }
  const std::vector<Prediction>& last_eval() const { return last_eval_; }

  double labels_fraction() const {
    return static_cast<double>(state_.labeled_ids.size()) / static_cast<double>(pool_size_);
  }

  bool finished() const {
    return state_.round >= total_rounds_ || state_.labeled_ids.size() >= pool_size_;
  }

  /// Ids to annotate in the upcoming round: the random seed set first, then
  /// strategy queries. Stable until commit().
  const std::vector<std::size_t>& pending() {
    if (finished()) throw StateError("active learning budget exhausted");
    if (!pending_) {
      const std::size_t k =
          labeled_target(state_.round + 1, config_.budget_fraction_per_round, pool_size_) -
          state_.labeled_ids.size();
      const auto round_tag = static_cast<std::uint64_t>(state_.round);
      if (state_.round == 0) {
        pending_ = sample_without_replacement(pool_.ids_in(Split::train_pool), k,
                                              derive_seed(config_.seed, {kStreamSeedSet}));
      } else {
        pending_ = query(state_, model_, pool_, config_.strategy, k,
                         derive_seed(config_.seed, {kStreamRandomQuery, round_tag}));
        if (config_.verify_queries) verify_query(*pending_);
      }
    }
    return *pending_;
  }

  /// Adds labels for exactly the pending ids (in pending order), fine-tunes,
  /// evaluates and appends a RoundRecord.
  const RoundRecord& commit(std::span<const std::size_t> labels) {
    const auto start = std::chrono::steady_clock::now();
    const auto ids = pending();
    if (labels.size() != ids.size()) {
      throw StateError("commit: expected " + std::to_string(ids.size()) + " labels, got " +
                       std::to_string(labels.size()));
    }
    for (auto l : labels) {
      if (l >= pool_.num_classes) throw DomainError("commit: label outside [0, K)");
    }
    for (std::size_t i = 0; i < ids.size(); ++i) {
      if (state_.is_labeled[ids[i]]) throw StateError("commit: sample annotated twice");
      state_.is_labeled[ids[i]] = true;
      state_.annotations[ids[i]] = labels[i];
      state_.labeled_ids.push_back(ids[i]);
    }
    ++state_.round;
    pending_.reset();

    FinetuneConfig ft = config_.finetune;
    ft.seed = derive_seed(config_.seed, {kStreamShuffle, static_cast<std::uint64_t>(state_.round)});
    ft.anneal_start_t = config_.continue_anneal ? state_.epochs_run + 1 : 1;
    const auto train = labeled_examples(state_, pool_);
    model_ = finetune_evidential(config_.warm_start ? model_ : initial_, train, ft).model;
    state_.epochs_run += ft.epochs;

    last_eval_ = evaluate_split(model_, pool_);
    std::vector<std::size_t> truth, predicted;
    for (const auto& p : last_eval_) {
      truth.push_back(*pool_.labels[p.sample_id]);
      predicted.push_back(p.predicted_class);
    }
    RoundRecord rec;
    rec.round = state_.round;
    rec.labels_fraction = labels_fraction();
    rec.strategy = to_string(config_.strategy);
    rec.seed = config_.seed;
    rec.accuracy = accuracy(last_eval_);
    rec.weighted_f1 = weighted_f1(truth, predicted);
    const auto sep = uncertainty_separation(last_eval_);
    rec.mean_u_correct = sep.mean_u_correct;
    rec.mean_u_incorrect = sep.mean_u_incorrect;
    rec.queried_ids = ids;
    rec.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    state_.history.push_back(std::move(rec));
    return state_.history.back();
  }

  /// pending → oracle → commit. An oracle failure leaves the state untouched.
  const RoundRecord& run_round(Oracle& oracle) {
    const auto ids = pending();
    std::vector<std::size_t> labels;
    try {
      labels = oracle.annotate(ids);
    } catch (const OracleError&) {
      throw;
    } catch (const std::exception& e) {
      throw OracleError(std::string("oracle failed: ") + e.what());
    }
    if (labels.size() != ids.size()) throw OracleError("oracle returned wrong number of labels");
    return commit(labels);
  }

 private:
  void verify_query(const std::vector<std::size_t>& chosen) const {
    if (config_.strategy != QueryStrategy::uncertainty_topk) return;
    std::vector<bool> picked(pool_.size(), false);
    double min_chosen = 2.0;
    for (auto id : chosen) {
      if (state_.is_labeled[id]) throw StateError("query returned a labeled id");
      if (picked[id]) throw StateError("query returned a duplicate id");
      picked[id] = true;
      min_chosen = std::min(min_chosen, predict(model_, pool_.features.row(id), id).opinion.uncertainty);
    }
    // Full sort of every unlabeled score.
    std::vector<ScoredId> all;
    for (auto id : unlabeled_pool_ids(state_, pool_)) {
      all.push_back({id, predict(model_, pool_.features.row(id), id).opinion.uncertainty});
    }
    std::sort(all.begin(), all.end(), [](const ScoredId& a, const ScoredId& b) {
      return a.uncertainty != b.uncertainty ? a.uncertainty > b.uncertainty : a.id < b.id;
    });
    for (std::size_t i = 0; i < all.size(); ++i) {
      const bool should_pick = i < chosen.size();
      if (should_pick && all[i].id != chosen[i]) throw StateError("top-k query disagrees with full sort");
      if (!should_pick && !picked[all[i].id] && all[i].uncertainty > min_chosen) {
        throw StateError("top-k query skipped a more uncertain sample");
      }
    }
  }

  const PoolDataset& pool_;
  ModelState initial_;
  ALConfig config_;
  ModelState model_;
  ALState state_;
  std::size_t pool_size_ = 0;
  int total_rounds_ = 0;
  std::optional<std::vector<std::size_t>> pending_;
  std::vector<Prediction> last_eval_;
};

struct ExperimentConfig {
  NetworkConfig network;          // seed replaced by the run seed
  bool pretrain = true;
  PretrainDomain domain = PretrainDomain::indomain;
  PretrainConfig pretrain_config;
  AugmentationConfig augmentation;  // seed replaced by the run seed
  ALConfig al;
};

/// Fresh model for a run seed, contrastively pre-trained on the train pool
/// (in-domain) or on the out-domain variant's samples.
inline ModelState prepare_initial_model(const ExperimentConfig& config, const PoolDataset& pool,
                                        const PoolDataset* outdomain, std::uint64_t run_seed) {
  NetworkConfig net = config.network;
  net.seed = derive_seed(run_seed, {kStreamInit});
  net.input_dim = pool.dim();
  net.num_classes = pool.num_classes;
  auto model = init_model(net);
  if (!config.pretrain) return model;
  FeatureMatrix unlabeled;
  if (config.domain == PretrainDomain::outdomain) {
    if (!outdomain) throw DomainError("out-domain pre-training needs a variant dataset");
    if (outdomain->dim() != pool.dim()) throw DomainError("out-domain variant dimension differs");
    unlabeled = outdomain->features;
  } else {
    unlabeled = pool.features.gather(pool.ids_in(Split::train_pool));
  }
  AugmentationConfig aug = config.augmentation;
  aug.seed = derive_seed(run_seed, {kStreamAugment});
  return pretrain_contrastive(std::move(model), unlabeled, config.pretrain_config, aug).model;
}

struct ExperimentResult {
  std::vector<RoundRecord> history;
  ModelState final_model;
  std::vector<Prediction> final_eval;
};

/// Seed round then rounds until the budget is spent, with the dataset oracle.
inline ExperimentResult run_experiment(const PoolDataset& pool, ModelState initial_model,
                                       const ALConfig& al) {
  if (!pool.fully_labeled()) throw DataError("run_experiment: dataset oracle needs every label");
  ActiveLearner learner(pool, std::move(initial_model), al);
  DatasetOracle oracle(pool);
  while (!learner.finished()) learner.run_round(oracle);
  return {learner.state().history, learner.model(), learner.last_eval()};
}

struct FractionSummary {
  std::string strategy;
  double labels_fraction = 0.0;
  std::size_t runs = 0;
  double mean_accuracy = 0.0;
  double std_accuracy = 0.0;
  double mean_f1 = 0.0;
  double std_f1 = 0.0;
};

/// Mean and sample standard deviation per (strategy, fraction), ordered by
/// strategy then fraction.
inline std::vector<FractionSummary> aggregate_by_fraction(std::span<const RoundRecord> records) {
  std::vector<FractionSummary> out;
  std::vector<std::vector<const RoundRecord*>> groups;
  for (const auto& r : records) {
    auto it = std::find_if(out.begin(), out.end(), [&](const FractionSummary& s) {
      return s.strategy == r.strategy && std::abs(s.labels_fraction - r.labels_fraction) < 1e-12;
    });
    if (it == out.end()) {
      out.push_back({r.strategy, r.labels_fraction});
      groups.emplace_back();
      it = out.end() - 1;
    }
    groups[static_cast<std::size_t>(it - out.begin())].push_back(&r);
  }
  auto stats = [](const std::vector<double>& v, double& mean, double& sd) {
    mean = 0.0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    sd = v.size() > 1 ? std::sqrt(ss / static_cast<double>(v.size() - 1)) : 0.0;
  };
  for (std::size_t g = 0; g < out.size(); ++g) {
    std::vector<double> acc, f1;
    for (const auto* r : groups[g]) {
      acc.push_back(r->accuracy);
      f1.push_back(r->weighted_f1);
    }
    out[g].runs = acc.size();
    stats(acc, out[g].mean_accuracy, out[g].std_accuracy);
    stats(f1, out[g].mean_f1, out[g].std_f1);
  }
  std::stable_sort(out.begin(), out.end(), [](const FractionSummary& a, const FractionSummary& b) {
    return a.strategy != b.strategy ? a.strategy < b.strategy
                                    : a.labels_fraction < b.labels_fraction;
  });
  return out;
}

}  // namespace uaal
