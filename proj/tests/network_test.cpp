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

#include "uaal/network.hpp"

#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>
#include <random>

#include "uaal/checkpoint.hpp"

namespace uaal {
namespace {

NetworkConfig tiny_config(EvidenceActivation act, std::uint64_t seed = 3) {
  NetworkConfig c;
  c.input_dim = 4;
  c.hidden_dims = {8};
  c.embedding_dim = 6;
  c.projection_dim = 4;
  c.num_classes = 3;
  c.evidence_activation = act;
  c.seed = seed;
  return c;
}

std::vector<LabeledExample> random_batch(std::size_t n, std::size_t dim, std::size_t k,
                                         std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.5);
  std::vector<LabeledExample> out;
  for (std::size_t i = 0; i < n; ++i) {
    LabeledExample ex;
    ex.features.resize(dim);
    for (auto& v : ex.features) v = normal(rng);
    ex.label = rng() % k;
    out.push_back(std::move(ex));
  }
  return out;
}

// Two well separated Gaussian blobs in 2-D.
std::vector<LabeledExample> blobs(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 0.5);
  std::vector<LabeledExample> out;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t label = i % 2;
    const double c = label ? 3.0 : -3.0;
    out.push_back({{c + normal(rng), c + normal(rng)}, label});
  }
  return out;
}

TEST(InitModel, DeterministicPerSeed) {
  const auto a = init_model(tiny_config(EvidenceActivation::relu, 9));
  const auto b = init_model(tiny_config(EvidenceActivation::relu, 9));
  const auto c = init_model(tiny_config(EvidenceActivation::relu, 10));
  EXPECT_EQ(a, b);
  EXPECT_NE(std::vector<double>(a.params().begin(), a.params().end()),
            std::vector<double>(c.params().begin(), c.params().end()));
}

TEST(InitModel, BiasesZeroWeightsScaled) {
  const auto m = init_model(tiny_config(EvidenceActivation::relu));
  for (const auto& layer : m.all_layers()) {
    for (std::size_t o = 0; o < layer.out; ++o) EXPECT_EQ(m.params()[layer.bias_offset + o], 0.0);
  }
}

TEST(InitModel, NoHiddenLayers) {
  auto c = tiny_config(EvidenceActivation::relu);
  c.hidden_dims.clear();
  const auto m = init_model(c);
  ASSERT_EQ(m.encoder_layers().size(), 1u);
  EXPECT_EQ(m.encoder_layers()[0].in, 4u);
  EXPECT_EQ(m.encoder_layers()[0].out, 6u);
}

TEST(InitModel, RejectsBadConfig) {
  auto c = tiny_config(EvidenceActivation::relu);
  c.num_classes = 1;
  EXPECT_THROW(init_model(c), DomainError);
}

TEST(Forward, EvidenceNonNegative) {
  for (auto act : {EvidenceActivation::relu, EvidenceActivation::softplus}) {
    const auto m = init_model(tiny_config(act));
    for (const auto& ex : random_batch(200, 4, 3, 1)) {
      const auto out = forward(m, ex.features);
      for (double e : out.evidence.values()) EXPECT_GE(e, 0.0);
      EXPECT_EQ(out.embedding.size(), 6u);
    }
  }
}

TEST(Forward, ZeroModelGivesFullUncertainty) {
  ModelState m(tiny_config(EvidenceActivation::relu));
  const std::vector<double> x{1.0, -2.0, 0.5, 3.0};
  const auto op = opinion_from_evidence(forward(m, x).evidence);
  EXPECT_EQ(op.uncertainty, 1.0);
}

TEST(Forward, DimensionMismatch) {
  const auto m = init_model(tiny_config(EvidenceActivation::relu));
  const std::vector<double> x{1.0, 2.0};
  EXPECT_THROW(forward(m, x), DomainError);
}

TEST(Forward, Deterministic) {
  const auto m = init_model(tiny_config(EvidenceActivation::softplus));
  const std::vector<double> x{0.3, -0.1, 2.0, 1.0};
  const auto a = forward(m, x);
  const auto b = forward(m, x);
  EXPECT_EQ(a.embedding, b.embedding);
  EXPECT_TRUE(std::equal(a.evidence.values().begin(), a.evidence.values().end(),
                         b.evidence.values().begin()));
}

// Head weights zero, head bias = target evidence, relu.
ModelState model_with_head_bias(std::vector<double> bias) {
  auto c = tiny_config(EvidenceActivation::relu);
  c.num_classes = bias.size();
  auto m = init_model(c);
  const auto& head = m.evidence_layer();
  for (std::size_t i = 0; i < head.in * head.out; ++i) m.params()[head.weight_offset + i] = 0.0;
  for (std::size_t o = 0; o < head.out; ++o) m.params()[head.bias_offset + o] = bias[o];
  return m;
}

TEST(PredictBatch, ClassAndUncertainty) {
  const auto m = model_with_head_bias({3.0, 1.0});
  FeatureMatrix xs(1, 4);
  const auto preds = predict_batch(m, xs);
  ASSERT_EQ(preds.size(), 1u);
  EXPECT_EQ(preds[0].predicted_class, 0u);
  EXPECT_DOUBLE_EQ(preds[0].opinion.uncertainty, 1.0 / 3.0);
}

TEST(PredictBatch, TieGoesToLowestIndex) {
  const auto m = model_with_head_bias({1.0, 2.0, 2.0});
  FeatureMatrix xs(3, 4);
  for (const auto& p : predict_batch(m, xs)) EXPECT_EQ(p.predicted_class, 1u);
}

TEST(PredictBatch, EmptyInput) {
  const auto m = init_model(tiny_config(EvidenceActivation::relu));
  EXPECT_TRUE(predict_batch(m, FeatureMatrix(0, 4)).empty());
}

TEST(PredictBatch, UsesGivenIds) {
  const auto m = init_model(tiny_config(EvidenceActivation::relu));
  FeatureMatrix xs(2, 4);
  const std::vector<std::size_t> ids{17, 4};
  const auto preds = predict_batch(m, xs, ids);
  EXPECT_EQ(preds[0].sample_id, 17u);
  EXPECT_EQ(preds[1].sample_id, 4u);
}

TEST(TrainEpoch, ZeroLearningRateLeavesModelUnchanged) {
  auto m = init_model(tiny_config(EvidenceActivation::softplus));
  const auto before = m;
  TrainHyper hyper;
  hyper.learning_rate = 0.0;
  const auto loss = train_epoch(m, random_batch(50, 4, 3, 2), 1, hyper, 5);
  EXPECT_EQ(m, before);
  EXPECT_GT(loss.total, 0.0);
  EXPECT_DOUBLE_EQ(loss.lambda, 0.1);
}

TEST(TrainEpoch, EmptySetRejected) {
  auto m = init_model(tiny_config(EvidenceActivation::relu));
  EXPECT_THROW(train_epoch(m, std::vector<LabeledExample>{}, 1, TrainHyper{}, 0), DomainError);
}

TEST(TrainEpoch, SeparatesTwoBlobs) {
  NetworkConfig c;
  c.input_dim = 2;
  c.num_classes = 2;
  c.seed = 21;
  auto m = init_model(c);
  const auto data = blobs(200, 4);
  TrainHyper hyper;
  std::vector<double> losses;
  for (int t = 1; t <= 50; ++t) losses.push_back(train_epoch(m, data, t, hyper, 100 + t).total);
  std::size_t hits = 0;
  for (const auto& ex : data) hits += predict(m, ex.features, 0).predicted_class == ex.label;
  EXPECT_GE(static_cast<double>(hits) / data.size(), 0.99);
  EXPECT_LE(losses[29], losses[0]);
}

TEST(TrainEpoch, BitwiseDeterministic) {
  auto a = init_model(tiny_config(EvidenceActivation::relu, 5));
  auto b = a;
  const auto data = random_batch(100, 4, 3, 8);
  for (int t = 1; t <= 5; ++t) {
    train_epoch(a, data, t, TrainHyper{}, 40 + t);
    train_epoch(b, data, t, TrainHyper{}, 40 + t);
  }
  EXPECT_EQ(a, b);
}

TEST(GradientCheck, SoftplusWithinTolerance) {
  const auto m = init_model(tiny_config(EvidenceActivation::softplus));
  ASSERT_LE(m.parameter_count(), 2000u);
  const auto batch = random_batch(8, 4, 3, 6);
  for (int t : {1, 5, 10, 50}) {
    const auto report = gradient_check_model(m, batch, t);
    EXPECT_LE(report.max_relative_error, 1e-4) << "t=" << t;
    EXPECT_GT(report.checked, 50u);
  }
}

TEST(GradientCheck, ReluWithKinkExclusion) {
  std::size_t checked = 0;
  for (std::uint64_t seed : {4, 5, 6}) {
    const auto m = init_model(tiny_config(EvidenceActivation::relu, seed));
    const auto batch = random_batch(8, 4, 3, seed + 3);
    for (int t : {1, 5, 10, 50}) {
      const auto report = gradient_check_model(m, batch, t);
      EXPECT_LE(report.max_relative_error, 1e-4) << "seed=" << seed << " t=" << t;
      checked += report.checked;
    }
  }
  EXPECT_GT(checked, 400u);
}

TEST(GradientCheck, ProjectionHeadIsAConstantLossDirection) {
  const auto m = init_model(tiny_config(EvidenceActivation::softplus));
  std::size_t projection_params = 0;
  for (const auto& l : m.projection_layers()) projection_params += l.in * l.out + l.out;
  const auto report = gradient_check_model(m, random_batch(4, 4, 3, 9), 3);
  EXPECT_GE(report.skipped_tiny, projection_params);
  EXPECT_LE(report.max_relative_error, 1e-4);
}

TEST(Checkpoint, RoundTripIsBitwiseExact) {
  auto m = init_model(tiny_config(EvidenceActivation::softplus, 77));
  train_epoch(m, random_batch(30, 4, 3, 1), 1, TrainHyper{}, 3);
  Checkpoint ckpt{m, "finetuned", 77, {{"note", "test"}}};
  const auto path = (std::filesystem::temp_directory_path() / "uaal_ckpt_test.json").string();
  save_checkpoint(ckpt, path);
  const auto loaded = load_checkpoint(path);
  std::filesystem::remove(path);
  EXPECT_EQ(loaded.model, m);
  EXPECT_EQ(loaded.stage, "finetuned");
  EXPECT_EQ(loaded.run_seed, 77u);
  EXPECT_EQ(loaded.metadata["note"], "test");
}

TEST(Checkpoint, RejectsMalformedFile) {
  const auto path = (std::filesystem::temp_directory_path() / "uaal_ckpt_bad.json").string();
  {
    std::FILE* f = std::fopen(path.c_str(), "w");
    std::fputs("{\"format\": \"something-else\"}", f);
    std::fclose(f);
  }
  EXPECT_THROW(load_checkpoint(path), DataError);
  std::filesystem::remove(path);
}

}  // namespace
}  // namespace uaal
