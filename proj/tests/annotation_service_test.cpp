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

#include "uaal/annotation_service.hpp"

#include <gtest/gtest.h>

#include <future>
#include <set>

namespace uaal {
namespace {

using nlohmann::json;

PoolDataset thousand_pool() {
  // 5 classes of 250 with a 20% eval split leave a train pool of 1000.
  MixtureSpec s;
  s.num_classes = 5;
  s.num_samples = 1250;
  s.dim = 4;
  s.overlap_factor = 3.0;
  s.seed = 21;
  return generate_gaussian_mixture(s);
}

NetworkConfig net() {
  NetworkConfig c;
  c.input_dim = 4;
  c.hidden_dims = {16};
  c.embedding_dim = 8;
  c.projection_dim = 4;
  c.num_classes = 5;
  c.seed = 3;
  return c;
}

ALConfig al_config(double max_fraction = 0.03) {
  ALConfig al;
  al.seed = 5;
  al.max_budget_fraction = max_fraction;
  al.finetune.epochs = 3;
  al.finetune.hyper.batch_size = 16;
  return al;
}

class ServiceTest : public ::testing::Test {
 protected:
  void SetUp() override {
    port_ = service_.bind_to_any_port();
    ASSERT_GT(port_, 0);
    server_thread_ = std::thread([this] { service_.listen_after_bind(); });
    service_.wait_until_ready();
    client_ = std::make_unique<httplib::Client>("127.0.0.1", port_);
  }

  void TearDown() override {
    service_.stop();
    server_thread_.join();
  }

  void attach(const ALConfig& al) {
    service_.attach(std::make_unique<ActiveLearner>(pool_, init_model(net()), al));
  }

  json get(const std::string& path, int expected_status = 200) {
    auto res = client_->Get(path);
    EXPECT_TRUE(res) << path;
    if (!res) return nullptr;
    EXPECT_EQ(res->status, expected_status) << path << ": " << res->body;
    return json::parse(res->body);
  }

  httplib::Result post_label(const json& body) {
    return client_->Post("/api/labels", body.dump(), "application/json");
  }

  void label_everything_queued() {
    for (const auto& item : get("/api/queue")) {
      const auto id = item["sample_id"].get<std::size_t>();
      auto res = post_label({{"sample_id", id}, {"label", *pool_.labels[id]}});
      ASSERT_TRUE(res);
      ASSERT_EQ(res->status, 200) << res->body;
    }
  }

  PoolDataset pool_ = thousand_pool();
  AnnotationService service_;
  int port_ = 0;
  std::thread server_thread_;
  std::unique_ptr<httplib::Client> client_;
};

TEST_F(ServiceTest, NoRunAttachedIs503) {
  get("/api/status", 503);
  get("/api/queue", 503);
  EXPECT_EQ(get("/api/history"), json::array());
  auto index = client_->Get("/");
  ASSERT_TRUE(index);
  EXPECT_EQ(index->status, 200);
  EXPECT_NE(index->body.find("/api/queue"), std::string::npos);
}

TEST_F(ServiceTest, FreshRunStatus) {
  attach(al_config());
  const auto s = get("/api/status");
  EXPECT_EQ(s["phase"], "awaiting_labels");
  EXPECT_EQ(s["round"], 0);
  EXPECT_EQ(s["labels_fraction"], 0.0);
  EXPECT_EQ(s["quota_remaining"], 10);
  EXPECT_EQ(s["K"], 5);
  EXPECT_TRUE(s["last_round"].is_null());
  EXPECT_EQ(get("/api/history"), json::array());
}

TEST_F(ServiceTest, QueueItemsCarryNoGroundTruth) {
  attach(al_config());
  const auto items = get("/api/queue");
  ASSERT_EQ(items.size(), 10u);
  const std::set<std::string> allowed{"sample_id", "features", "projection",
                                      "belief",    "uncertainty", "round"};
  for (const auto& item : items) {
    std::set<std::string> keys;
    for (const auto& [k, v] : item.items()) keys.insert(k);
    EXPECT_EQ(keys, allowed);
    EXPECT_EQ(item["features"].size(), 4u);
    EXPECT_EQ(item["projection"].size(), 2u);
    EXPECT_EQ(item["belief"].size(), 5u);
    EXPECT_GE(item["uncertainty"].get<double>(), 0.0);
    EXPECT_LE(item["uncertainty"].get<double>(), 1.0);
    EXPECT_EQ(item["round"], 1);
  }
  // Nor anywhere else on the wire.
  for (const auto& path : {"/api/status", "/api/history", "/api/queue"}) {
    auto res = client_->Get(path);
    ASSERT_TRUE(res);
    for (const auto* key : {"\"label\"", "\"labels\"", "\"true_label\"", "\"ground_truth\""}) {
      EXPECT_EQ(res->body.find(key), std::string::npos) << path << " exposes " << key;
    }
  }
}

TEST_F(ServiceTest, QueueLimit) {
  attach(al_config());
  EXPECT_EQ(get("/api/queue?limit=3").size(), 3u);
  EXPECT_EQ(get("/api/queue?limit=0").size(), 0u);
  EXPECT_EQ(get("/api/queue?limit=500").size(), 10u);
  get("/api/queue?limit=-1", 400);
  get("/api/queue?limit=abc", 400);
}

TEST_F(ServiceTest, SubmissionRules) {
  attach(al_config());
  const auto items = get("/api/queue");
  const auto first = items[0]["sample_id"].get<std::size_t>();

  auto res = post_label({{"sample_id", first}, {"label", 1}, {"annotator", "a"}});
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 200);
  const auto body = json::parse(res->body);
  EXPECT_EQ(body["accepted"], true);
  EXPECT_EQ(body["quota_remaining"], 9);
  EXPECT_EQ(get("/api/status")["quota_remaining"], 9);

  EXPECT_EQ(post_label({{"sample_id", first}, {"label", 2}})->status, 409);
  const auto second = items[1]["sample_id"].get<std::size_t>();
  EXPECT_EQ(post_label({{"sample_id", second}, {"label", 5}})->status, 400);
  EXPECT_EQ(post_label({{"sample_id", second}, {"label", -1}})->status, 400);
  EXPECT_EQ(post_label({{"sample_id", second}, {"label", "x"}})->status, 400);
  EXPECT_EQ(post_label({{"sample_id", second}, {"label", 0}, {"round", 2}})->status, 409);
  EXPECT_EQ(client_->Post("/api/labels", "{oops", "application/json")->status, 400);

  std::set<std::size_t> queued;
  for (const auto& item : items) queued.insert(item["sample_id"].get<std::size_t>());
  std::size_t outsider = 0;
  while (queued.count(outsider)) ++outsider;
  EXPECT_EQ(post_label({{"sample_id", outsider}, {"label", 0}})->status, 409);

  // The labeled id leaves the queue; nothing else changed.
  const auto after = get("/api/queue");
  EXPECT_EQ(after.size(), 9u);
  for (const auto& item : after) EXPECT_NE(item["sample_id"], first);
}

TEST_F(ServiceTest, RoundAdvancesAfterRetraining) {
  attach(al_config());
  label_everything_queued();
  service_.wait_while_training();
  const auto s = get("/api/status");
  EXPECT_EQ(s["round"], 1);
  EXPECT_EQ(s["labels_fraction"], 0.01);
  EXPECT_EQ(s["phase"], "awaiting_labels");
  EXPECT_EQ(s["last_round"]["round"], 1);
  EXPECT_EQ(get("/api/history").size(), 1u);

  // Round two follows the top-k query order: descending uncertainty.
  const auto items = get("/api/queue");
  ASSERT_EQ(items.size(), 10u);
  for (std::size_t i = 1; i < items.size(); ++i) {
    EXPECT_GE(items[i - 1]["uncertainty"].get<double>(), items[i]["uncertainty"].get<double>());
    EXPECT_EQ(items[i]["round"], 2);
  }
  EXPECT_EQ(post_label({{"sample_id", items[0]["sample_id"]}, {"label", 0}, {"round", 1}})->status,
            409);
}

TEST_F(ServiceTest, LabelsDuringTrainingAreRejected) {
  std::promise<void> entered, release;
  auto gate = release.get_future().share();
  service_.on_round_complete([&, gate](const ActiveLearner&) {
    entered.set_value();
    gate.wait();
  });
  attach(al_config());
  const auto seed_ids = get("/api/queue");
  label_everything_queued();
  entered.get_future().wait();
  const auto s = get("/api/status");
  EXPECT_EQ(s["phase"], "training");
  EXPECT_EQ(s["quota_remaining"], 0);
  get("/api/queue", 409);
  EXPECT_EQ(post_label({{"sample_id", seed_ids[0]["sample_id"]}, {"label", 0}})->status, 409);
  release.set_value();
  service_.on_round_complete(nullptr);
  service_.wait_while_training();
  EXPECT_EQ(get("/api/status")["round"], 1);
}

TEST_F(ServiceTest, HistoryMatchesCsvValues) {
  attach(al_config(0.02));
  label_everything_queued();
  service_.wait_while_training();
  label_everything_queued();
  ASSERT_TRUE(service_.wait_until_finished(std::chrono::seconds(30)));
  EXPECT_EQ(get("/api/status")["phase"], "finished");
  get("/api/queue", 409);
  const auto history = get("/api/history");
  ASSERT_EQ(history.size(), 2u);
  const auto path = (std::filesystem::temp_directory_path() / "uaal_service_hist.csv").string();
  service_.with_learner([&](const ActiveLearner* l) { write_round_csv(path, l->state().history); });
  const auto rows = read_round_csv(path);
  std::filesystem::remove(path);
  ASSERT_EQ(rows.size(), 2u);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto from_csv = round_record_json(rows[i]);
    for (const auto& key : {"round", "labels_fraction", "strategy", "seed", "accuracy",
                            "weighted_f1", "mean_u_correct", "mean_u_incorrect"}) {
      EXPECT_EQ(history[i][key], from_csv[key]) << key;
    }
  }
}

TEST_F(ServiceTest, HttpAnnotatorMatchesDatasetOracle) {
  const auto al = al_config(0.05);
  attach(al);
  const int rounds = annotate_over_http("127.0.0.1", port_,
                                        [&](std::size_t id) { return *pool_.labels[id]; });
  EXPECT_EQ(rounds, 5);
  ASSERT_TRUE(service_.wait_until_finished(std::chrono::seconds(30)));
  const auto reference = run_experiment(pool_, init_model(net()), al);
  const auto [history, model] = service_.with_learner(
      [](const ActiveLearner* l) { return std::pair(l->state().history, l->model()); });
  ASSERT_EQ(history.size(), reference.history.size());
  for (std::size_t i = 0; i < history.size(); ++i) {
    EXPECT_TRUE(history[i].same_outcome(reference.history[i])) << "round " << i + 1;
  }
  EXPECT_EQ(model, reference.final_model);
}

}  // namespace
}  // namespace uaal
