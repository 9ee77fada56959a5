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

// Feed-forward encoder with a contrastive projection head and an evidence
// head, exact backpropagation, and an Adam optimizer. All parameters live
// in one flat vector; layers are views into it by offset.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "uaal/errors.hpp"
#include "uaal/evidential.hpp"
#include "uaal/features.hpp"
#include "uaal/rng.hpp"

namespace uaal {

enum class Activation { identity, tanh, relu, softplus };

enum class EvidenceActivation { relu, softplus };

inline const char* to_string(EvidenceActivation a) {
  return a == EvidenceActivation::relu ? "relu" : "softplus";
}

inline EvidenceActivation parse_evidence_activation(const std::string& s) {
  if (s == "relu") return EvidenceActivation::relu;
  if (s == "softplus") return EvidenceActivation::softplus;
  throw DataError("unknown evidence activation '" + s + "'");
}

inline double activate(Activation a, double z) {
  switch (a) {
    case Activation::identity: return z;
    case Activation::tanh: return std::tanh(z);
    case Activation::relu: return z > 0.0 ? z : 0.0;
    case Activation::softplus:
      return z > 30.0 ? z : std::log1p(std::exp(z));
  }
  return z;
}

// Derivative given pre-activation z and output a.
inline double activate_derivative(Activation act, double z, double a) {
  switch (act) {
    case Activation::identity: return 1.0;
    case Activation::tanh: return 1.0 - a * a;
    case Activation::relu: return z > 0.0 ? 1.0 : 0.0;
    case Activation::softplus: return 1.0 / (1.0 + std::exp(-z));
  }
  return 1.0;
}

struct NetworkConfig {
  std::size_t input_dim = 16;
  std::vector<std::size_t> hidden_dims = {64, 64};
  std::size_t embedding_dim = 32;
  std::size_t projection_dim = 16;
  std::size_t num_classes = 2;
  EvidenceActivation evidence_activation = EvidenceActivation::relu;
  std::uint64_t seed = 0;

  void validate() const {
    if (input_dim < 1 || embedding_dim < 1 || projection_dim < 1) {
      throw DomainError("NetworkConfig: dimensions must be >= 1");
    }
    for (auto h : hidden_dims) {
      if (h < 1) throw DomainError("NetworkConfig: hidden dims must be >= 1");
    }
    if (num_classes < 2) throw DomainError("NetworkConfig: need K >= 2");
  }

  friend bool operator==(const NetworkConfig&, const NetworkConfig&) = default;
};

struct LayerShape {
  std::size_t in = 0;
  std::size_t out = 0;
  std::size_t weight_offset = 0;  // out x in, row-major
  std::size_t bias_offset = 0;
  Activation activation = Activation::identity;

  friend bool operator==(const LayerShape&, const LayerShape&) = default;
};

/// Network parameters plus Adam moments. Regular value type.
class ModelState {
 public:
  ModelState() = default;

  explicit ModelState(NetworkConfig config) : config_(std::move(config)) {
    config_.validate();
    std::size_t offset = 0;
    auto add = [&](std::size_t in, std::size_t out, Activation act) {
      LayerShape s{in, out, offset, offset + in * out, act};
      offset += in * out + out;
      layers_.push_back(s);
    };
    std::size_t prev = config_.input_dim;
    for (auto h : config_.hidden_dims) {
      add(prev, h, Activation::tanh);
      prev = h;
    }
    add(prev, config_.embedding_dim, Activation::tanh);
    num_encoder_ = layers_.size();
    add(config_.embedding_dim, config_.embedding_dim, Activation::tanh);
    add(config_.embedding_dim, config_.projection_dim, Activation::identity);
    add(config_.embedding_dim, config_.num_classes,
        config_.evidence_activation == EvidenceActivation::relu ? Activation::relu
                                                                : Activation::softplus);
    params_.assign(offset, 0.0);
    adam_m_.assign(offset, 0.0);
    adam_v_.assign(offset, 0.0);
  }

  const NetworkConfig& config() const { return config_; }
  std::size_t parameter_count() const { return params_.size(); }

  std::span<const double> params() const { return params_; }
  std::span<double> params() { return params_; }

  std::span<const LayerShape> encoder_layers() const {
    return std::span<const LayerShape>(layers_).first(num_encoder_);
  }
  std::span<const LayerShape> projection_layers() const {
    return std::span<const LayerShape>(layers_).subspan(num_encoder_, 2);
  }
  const LayerShape& evidence_layer() const { return layers_.back(); }
  std::span<const LayerShape> all_layers() const { return layers_; }

  std::span<const double> adam_m() const { return adam_m_; }
  std::span<const double> adam_v() const { return adam_v_; }
  std::span<double> adam_m() { return adam_m_; }
  std::span<double> adam_v() { return adam_v_; }
  std::uint64_t step() const { return step_; }
  void set_step(std::uint64_t s) { step_ = s; }

  void reset_optimizer() {
    std::fill(adam_m_.begin(), adam_m_.end(), 0.0);
    std::fill(adam_v_.begin(), adam_v_.end(), 0.0);
    step_ = 0;
  }

  friend bool operator==(const ModelState&, const ModelState&) = default;

 private:
  NetworkConfig config_;
  std::vector<LayerShape> layers_;
  std::size_t num_encoder_ = 0;
  std::vector<double> params_;
  std::vector<double> adam_m_;
  std::vector<double> adam_v_;
  std::uint64_t step_ = 0;
};

/// Weights ~ N(0, 1/fan_in), biases zero, deterministic in config.seed.
inline ModelState init_model(const NetworkConfig& config) {
  ModelState model(config);
  Rng rng(derive_seed(config.seed, {kStreamInit}));
  auto params = model.params();
  for (const auto& layer : model.all_layers()) {
    std::normal_distribution<double> normal(0.0,
                                            1.0 / std::sqrt(static_cast<double>(layer.in)));
    for (std::size_t i = 0; i < layer.in * layer.out; ++i) {
      params[layer.weight_offset + i] = normal(rng);
    }
  }
  return model;
}

/// Activations of one dense layer, kept for the backward pass.
struct LayerTrace {
  std::vector<double> input;
  std::vector<double> pre;
  std::vector<double> out;
};

namespace detail {

inline void dense_forward(const LayerShape& layer, std::span<const double> params,
                          std::span<const double> in, LayerTrace& trace) {
  trace.input.assign(in.begin(), in.end());
  trace.pre.resize(layer.out);
  trace.out.resize(layer.out);
  const double* w = params.data() + layer.weight_offset;
  const double* b = params.data() + layer.bias_offset;
  for (std::size_t o = 0; o < layer.out; ++o) {
    double z = b[o];
    const double* row = w + o * layer.in;
    for (std::size_t i = 0; i < layer.in; ++i) z += row[i] * in[i];
    trace.pre[o] = z;
    trace.out[o] = activate(layer.activation, z);
  }
}

// Accumulates parameter gradients into grad; writes d(loss)/d(input) to d_in
// when requested.
inline void dense_backward(const LayerShape& layer, std::span<const double> params,
                           const LayerTrace& trace, std::span<const double> d_out,
                           std::span<double> grad, std::vector<double>* d_in) {
  const double* w = params.data() + layer.weight_offset;
  double* gw = grad.data() + layer.weight_offset;
  double* gb = grad.data() + layer.bias_offset;
  if (d_in) d_in->assign(layer.in, 0.0);
  for (std::size_t o = 0; o < layer.out; ++o) {
    const double dz =
        d_out[o] * activate_derivative(layer.activation, trace.pre[o], trace.out[o]);
    if (dz == 0.0) continue;
    gb[o] += dz;
    double* grow = gw + o * layer.in;
    for (std::size_t i = 0; i < layer.in; ++i) grow[i] += dz * trace.input[i];
    if (d_in) {
      const double* row = w + o * layer.in;
      for (std::size_t i = 0; i < layer.in; ++i) (*d_in)[i] += dz * row[i];
    }
  }
}

inline void check_input(const ModelState& model, std::span<const double> x) {
  if (x.size() != model.config().input_dim) {
    throw DomainError("network: input has " + std::to_string(x.size()) +
                      " features, model expects " +
                      std::to_string(model.config().input_dim));
  }
}

}  // namespace detail

/// Per-sample forward trace through encoder and one head.
struct ForwardTrace {
  std::vector<LayerTrace> encoder;
  std::vector<LayerTrace> head;

  std::span<const double> embedding() const { return encoder.back().out; }
  std::span<const double> head_output() const { return head.back().out; }
};

inline void encode_traced(const ModelState& model, std::span<const double> x,
                          ForwardTrace& trace) {
  detail::check_input(model, x);
  const auto layers = model.encoder_layers();
  trace.encoder.resize(layers.size());
  std::span<const double> in = x;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    detail::dense_forward(layers[l], model.params(), in, trace.encoder[l]);
    in = trace.encoder[l].out;
  }
}

inline void evidence_traced(const ModelState& model, std::span<const double> x,
                            ForwardTrace& trace) {
  encode_traced(model, x, trace);
  trace.head.resize(1);
  detail::dense_forward(model.evidence_layer(), model.params(), trace.embedding(),
                        trace.head[0]);
}

inline void projection_traced(const ModelState& model, std::span<const double> x,
                              ForwardTrace& trace) {
  encode_traced(model, x, trace);
  const auto layers = model.projection_layers();
  trace.head.resize(layers.size());
  std::span<const double> in = trace.embedding();
  for (std::size_t l = 0; l < layers.size(); ++l) {
    detail::dense_forward(layers[l], model.params(), in, trace.head[l]);
    in = trace.head[l].out;
  }
}

/// Backpropagates d(loss)/d(head output) through the traced head and the
/// encoder, accumulating into grad (same layout as model.params()).
inline void backward_traced(const ModelState& model, const ForwardTrace& trace,
                            bool evidence_head, std::span<const double> d_head_out,
                            std::span<double> grad) {
  std::vector<double> d_cur(d_head_out.begin(), d_head_out.end());
  std::vector<double> d_next;
  if (evidence_head) {
    detail::dense_backward(model.evidence_layer(), model.params(), trace.head[0], d_cur,
                           grad, &d_next);
    d_cur.swap(d_next);
  } else {
    const auto layers = model.projection_layers();
    for (std::size_t l = layers.size(); l-- > 0;) {
      detail::dense_backward(layers[l], model.params(), trace.head[l], d_cur, grad,
                             &d_next);
      d_cur.swap(d_next);
    }
  }
  const auto layers = model.encoder_layers();
  for (std::size_t l = layers.size(); l-- > 0;) {
    detail::dense_backward(layers[l], model.params(), trace.encoder[l], d_cur, grad,
                           l > 0 ? &d_next : nullptr);
    if (l > 0) d_cur.swap(d_next);
  }
}

struct ForwardOutput {
  std::vector<double> embedding;
  EvidenceVector evidence;
};

inline ForwardOutput forward(const ModelState& model, std::span<const double> x) {
  ForwardTrace trace;
  evidence_traced(model, x, trace);
  return {std::vector<double>(trace.embedding().begin(), trace.embedding().end()),
          EvidenceVector(trace.head[0].out)};
}

/// Projection-head output used by the contrastive objective.
inline std::vector<double> project(const ModelState& model, std::span<const double> x) {
  ForwardTrace trace;
  projection_traced(model, x, trace);
  return trace.head.back().out;
}

struct Prediction {
  std::size_t sample_id = 0;
  DirichletOpinion opinion;
  std::size_t predicted_class = 0;
  std::optional<bool> correct;
};

/// argmax over α, lowest index on exact ties.
inline std::size_t predicted_class_of(const DirichletOpinion& op) {
  return static_cast<std::size_t>(
      std::max_element(op.alpha.begin(), op.alpha.end()) - op.alpha.begin());
}

inline Prediction predict(const ModelState& model, std::span<const double> x,
                          std::size_t sample_id) {
  Prediction p;
  p.sample_id = sample_id;
  p.opinion = opinion_from_evidence(forward(model, x).evidence);
  p.predicted_class = predicted_class_of(p.opinion);
  return p;
}

/// Predictions for every row of xs. ids[i] names row i; when ids is empty the
/// row index is used.
inline std::vector<Prediction> predict_batch(const ModelState& model, const FeatureMatrix& xs,
                                             std::span<const std::size_t> ids = {}) {
  if (!ids.empty() && ids.size() != xs.rows()) {
    throw DomainError("predict_batch: ids and rows differ in length");
  }
  std::vector<Prediction> out;
  out.reserve(xs.rows());
  for (std::size_t i = 0; i < xs.rows(); ++i) {
    out.push_back(predict(model, xs.row(i), ids.empty() ? i : ids[i]));
  }
  return out;
}

/// Marks each prediction correct/incorrect against labels (same order).
inline void attach_ground_truth(std::vector<Prediction>& preds,
                                std::span<const std::size_t> labels) {
  if (labels.size() != preds.size()) {
    throw DomainError("attach_ground_truth: size mismatch");
  }
  for (std::size_t i = 0; i < preds.size(); ++i) {
    preds[i].correct = preds[i].predicted_class == labels[i];
  }
}

struct TrainHyper {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::size_t batch_size = 64;
};

struct LabeledExample {
  std::vector<double> features;
  std::size_t label = 0;
};

/// One Adam update with the given (already batch-averaged) gradient. A zero
/// learning rate leaves the whole state untouched.
inline void adam_step(ModelState& model, std::span<const double> grad,
                      const TrainHyper& hyper) {
  if (hyper.learning_rate == 0.0) return;
  auto params = model.params();
  auto m = model.adam_m();
  auto v = model.adam_v();
  model.set_step(model.step() + 1);
  const double t = static_cast<double>(model.step());
  const double c1 = 1.0 - std::pow(hyper.beta1, t);
  const double c2 = 1.0 - std::pow(hyper.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!std::isfinite(grad[i])) throw NumericError("adam_step: non-finite gradient");
    m[i] = hyper.beta1 * m[i] + (1.0 - hyper.beta1) * grad[i];
    v[i] = hyper.beta2 * v[i] + (1.0 - hyper.beta2) * grad[i] * grad[i];
    params[i] -= hyper.learning_rate * (m[i] / c1) / (std::sqrt(v[i] / c2) + hyper.epsilon);
  }
}

/// Evidential loss of a batch with its full parameter gradient (both as
/// undivided sums over samples). grad must be zeroed by the caller.
inline LossBreakdown evidential_loss_and_gradient(const ModelState& model,
                                                  std::span<const LabeledExample> batch,
                                                  int epoch, std::span<double> grad) {
  if (batch.empty()) throw DomainError("evidential_loss_and_gradient: empty batch");
  LossBreakdown out;
  out.lambda = annealing_coefficient(epoch);
  const std::size_t k = model.config().num_classes;
  ForwardTrace trace;
  for (const auto& ex : batch) {
    evidence_traced(model, ex.features, trace);
    const auto& evidence = trace.head[0].out;
    const OneHotLabel y(ex.label, k);
    std::vector<double> alpha(evidence.size());
    for (std::size_t j = 0; j < k; ++j) {
      if (!std::isfinite(evidence[j])) throw NumericError("network produced non-finite evidence");
      alpha[j] = evidence[j] + 1.0;
    }
    out.mse_term += evidential_mse_loss(alpha, y);
    out.kl_term += kl_to_uniform(remove_non_misleading(alpha, y));
    const auto d_evidence = sample_loss_gradient(alpha, y, out.lambda);
    backward_traced(model, trace, true, d_evidence, grad);
  }
  out.total = out.mse_term + out.lambda * out.kl_term;
  return out;
}

/// Evidential loss only, no gradient.
inline LossBreakdown evidential_loss(const ModelState& model,
                                     std::span<const LabeledExample> batch, int epoch) {
  if (batch.empty()) throw DomainError("evidential_loss: empty batch");
  std::vector<EvidentialSample> samples;
  samples.reserve(batch.size());
  for (const auto& ex : batch) {
    samples.push_back({forward(model, ex.features).evidence,
                       OneHotLabel(ex.label, model.config().num_classes)});
  }
  return total_loss(samples, epoch);
}

/// Shuffled index order for one epoch.
inline std::vector<std::size_t> shuffled_indices(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  return order;
}

/// One pass over shuffled mini-batches. Each step uses the batch-mean
/// gradient. Returns the epoch's per-sample mean loss terms.
inline LossBreakdown train_epoch(ModelState& model, std::span<const LabeledExample> examples,
                                 int epoch, const TrainHyper& hyper,
                                 std::uint64_t shuffle_seed) {
  if (examples.empty()) throw DomainError("train_epoch: no labeled examples");
  if (hyper.batch_size == 0) throw DomainError("train_epoch: batch size must be >= 1");
  const auto order = shuffled_indices(examples.size(), shuffle_seed);
  LossBreakdown sum;
  std::vector<double> grad(model.parameter_count());
  std::vector<LabeledExample> batch;
  for (std::size_t start = 0; start < order.size(); start += hyper.batch_size) {
    const std::size_t end = std::min(order.size(), start + hyper.batch_size);
    batch.clear();
    for (std::size_t i = start; i < end; ++i) batch.push_back(examples[order[i]]);
    std::fill(grad.begin(), grad.end(), 0.0);
    const auto loss = evidential_loss_and_gradient(model, batch, epoch, grad);
    if (!std::isfinite(loss.total)) {
      throw NumericError("train_epoch: non-finite loss at epoch " + std::to_string(epoch) +
                         " (mse=" + std::to_string(loss.mse_term) +
                         ", kl=" + std::to_string(loss.kl_term) + ")");
    }
    const double scale = 1.0 / static_cast<double>(batch.size());
    for (auto& g : grad) g *= scale;
    adam_step(model, grad, hyper);
    sum.mse_term += loss.mse_term;
    sum.kl_term += loss.kl_term;
    sum.lambda = loss.lambda;
  }
  const double n = static_cast<double>(examples.size());
  sum.mse_term /= n;
  sum.kl_term /= n;
  sum.total = sum.mse_term + sum.lambda * sum.kl_term;
  return sum;
}

struct GradientCheckReport {
  double max_relative_error = 0.0;
  std::size_t checked = 0;
  std::size_t excluded_kinks = 0;
  std::size_t skipped_tiny = 0;
};

/// Backpropagated parameter gradient of the evidential batch loss against
/// central differences. Coordinates where both gradients are below 1e-8 are
/// skipped; with relu evidence, coordinates whose perturbation moves a head
/// pre-activation lying within 1e-3 of the kink are excluded.
inline GradientCheckReport gradient_check_model(const ModelState& model,
                                                std::span<const LabeledExample> batch,
                                                int epoch, double h = 1e-5) {
  constexpr double kTiny = 1e-8;
  constexpr double kKinkBand = 1e-3;
  std::vector<double> analytic(model.parameter_count(), 0.0);
  evidential_loss_and_gradient(model, batch, epoch, analytic);

  const bool relu = model.config().evidence_activation == EvidenceActivation::relu;
  auto head_pre = [&](const ModelState& m) {
    std::vector<double> pre;
    ForwardTrace trace;
    for (const auto& ex : batch) {
      evidence_traced(m, ex.features, trace);
      pre.insert(pre.end(), trace.head[0].pre.begin(), trace.head[0].pre.end());
    }
    return pre;
  };
  const auto base_pre = relu ? head_pre(model) : std::vector<double>{};

  GradientCheckReport report;
  ModelState probe = model;
  auto params = probe.params();
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double saved = params[i];
    params[i] = saved + h;
    const double up = evidential_loss(probe, batch, epoch).total;
    const auto up_pre = relu ? head_pre(probe) : std::vector<double>{};
    params[i] = saved - h;
    const double down = evidential_loss(probe, batch, epoch).total;
    const auto down_pre = relu ? head_pre(probe) : std::vector<double>{};
    params[i] = saved;

    if (relu) {
      bool near_kink = false;
      for (std::size_t u = 0; u < base_pre.size() && !near_kink; ++u) {
        const double closest =
            std::min({std::abs(base_pre[u]), std::abs(up_pre[u]), std::abs(down_pre[u])});
        near_kink = closest < kKinkBand && up_pre[u] != down_pre[u];
      }
      if (near_kink) {
        ++report.excluded_kinks;
        continue;
      }
    }
    const double numeric = (up - down) / (2.0 * h);
    const double a = analytic[i];
    if (std::abs(a) < kTiny && std::abs(numeric) < kTiny) {
      ++report.skipped_tiny;
      continue;
    }
    const double rel = std::abs(a - numeric) / std::max(std::abs(a), std::abs(numeric));
    report.max_relative_error = std::max(report.max_relative_error, rel);
    ++report.checked;
  }
  return report;
}

}  // namespace uaal
