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

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "uaal/errors.hpp"
#include "uaal/network.hpp"

namespace uaal {

inline double accuracy(std::span<const std::size_t> y_true, std::span<const std::size_t> y_pred) {
  if (y_true.empty()) throw DomainError("accuracy: empty input");
  if (y_true.size() != y_pred.size()) throw DomainError("accuracy: length mismatch");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < y_true.size(); ++i) hits += y_true[i] == y_pred[i];
  return static_cast<double>(hits) / static_cast<double>(y_true.size());
}

inline double accuracy(std::span<const Prediction> preds) {
  if (preds.empty()) throw DomainError("accuracy: empty input");
  std::size_t hits = 0;
  for (const auto& p : preds) {
    if (!p.correct) throw DomainError("accuracy: prediction without ground truth");
    hits += *p.correct;
  }
  return static_cast<double>(hits) / static_cast<double>(preds.size());
}

/// Per-class F1 averaged with weights proportional to true-class support.
/// Precision is 0 for a class never predicted; F1 is 0 when P + R = 0.
inline double weighted_f1(std::span<const std::size_t> y_true,
                          std::span<const std::size_t> y_pred) {
  if (y_true.empty()) throw DomainError("weighted_f1: empty input");
  if (y_true.size() != y_pred.size()) throw DomainError("weighted_f1: length mismatch");
  const std::size_t k =
      1 + std::max(*std::max_element(y_true.begin(), y_true.end()),
                   *std::max_element(y_pred.begin(), y_pred.end()));
  std::vector<std::size_t> tp(k, 0), predicted(k, 0), support(k, 0);
  for (std::size_t i = 0; i < y_true.size(); ++i) {
    ++support[y_true[i]];
    ++predicted[y_pred[i]];
    if (y_true[i] == y_pred[i]) ++tp[y_true[i]];
  }
  double score = 0.0;
  for (std::size_t c = 0; c < k; ++c) {
    if (support[c] == 0) continue;
    const double precision =
        predicted[c] ? static_cast<double>(tp[c]) / static_cast<double>(predicted[c]) : 0.0;
    const double recall = static_cast<double>(tp[c]) / static_cast<double>(support[c]);
    const double f1 =
        precision + recall > 0.0 ? 2.0 * precision * recall / (precision + recall) : 0.0;
    score += f1 * static_cast<double>(support[c]);
  }
  return score / static_cast<double>(y_true.size());
}

/// Mann–Whitney form of ROC AUC: P(score_pos > score_neg), ties count ½.
inline double binary_auc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw DomainError("binary_auc: length mismatch");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  double n_pos = 0.0, n_neg = 0.0;
  for (int l : labels) {
    if (l == 1) {
      n_pos += 1.0;
    } else if (l == 0) {
      n_neg += 1.0;
    } else {
      throw DomainError("binary_auc: labels must be 0 or 1");
    }
  }
  if (n_pos == 0.0 || n_neg == 0.0) {
    throw DomainError("binary_auc: need at least one positive and one negative");
  }
  // Walk groups of tied scores; each positive beats every negative ranked
  // strictly below and ties half of those in its group.
  double wins = 0.0;
  double neg_below = 0.0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    double pos_group = 0.0, neg_group = 0.0;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) {
      (labels[order[j]] == 1 ? pos_group : neg_group) += 1.0;
      ++j;
    }
    wins += pos_group * (neg_below + 0.5 * neg_group);
    neg_below += neg_group;
    i = j;
  }
  return wins / (n_pos * n_neg);
}

struct HistogramPair {
  std::vector<double> bin_edges;
  std::vector<std::size_t> counts_correct;
  std::vector<std::size_t> counts_incorrect;
};

/// Uniform bins over [0, 1]; the last bin includes u = 1.
inline HistogramPair uncertainty_histograms(std::span<const Prediction> preds,
                                            std::size_t num_bins = 20) {
  if (preds.empty()) throw DomainError("uncertainty_histograms: empty input");
  if (num_bins < 2) throw DomainError("uncertainty_histograms: need >= 2 bins");
  HistogramPair h;
  h.bin_edges.resize(num_bins + 1);
  for (std::size_t i = 0; i <= num_bins; ++i) {
    h.bin_edges[i] = static_cast<double>(i) / static_cast<double>(num_bins);
  }
  h.counts_correct.assign(num_bins, 0);
  h.counts_incorrect.assign(num_bins, 0);
  for (const auto& p : preds) {
    if (!p.correct) throw DomainError("uncertainty_histograms: prediction without ground truth");
    const double u = std::clamp(p.opinion.uncertainty, 0.0, 1.0);
    const auto bin = std::min(num_bins - 1,
                              static_cast<std::size_t>(u * static_cast<double>(num_bins)));
    ++(*p.correct ? h.counts_correct : h.counts_incorrect)[bin];
  }
  return h;
}

struct UncertaintySeparation {
  std::optional<double> mean_u_correct;    // absent when nothing was correct
  std::optional<double> mean_u_incorrect;  // absent when nothing was wrong
};

inline UncertaintySeparation uncertainty_separation(std::span<const Prediction> preds) {
  if (preds.empty()) throw DomainError("uncertainty_separation: empty input");
  double sum[2] = {0.0, 0.0};
  std::size_t count[2] = {0, 0};
  for (const auto& p : preds) {
    if (!p.correct) throw DomainError("uncertainty_separation: prediction without ground truth");
    const int side = *p.correct ? 0 : 1;
    sum[side] += p.opinion.uncertainty;
    ++count[side];
  }
  UncertaintySeparation out;
  if (count[0]) out.mean_u_correct = sum[0] / static_cast<double>(count[0]);
  if (count[1]) out.mean_u_incorrect = sum[1] / static_cast<double>(count[1]);
  return out;
}

}  // namespace uaal
