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

#include <httplib.h>

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <functional>
#include <memory>
#include <mutex>
#include <nlohmann/json.hpp>
#include <optional>
#include <string>
#include <thread>
#include <unordered_map>
#include <vector>

#include "uaal/active_loop.hpp"
#include "uaal/run_io.hpp"

namespace uaal {

enum class ServicePhase { idle, awaiting_labels, training, finished };

inline const char* to_string(ServicePhase p) {
  switch (p) {
    case ServicePhase::idle: return "idle";
    case ServicePhase::awaiting_labels: return "awaiting_labels";
    case ServicePhase::training: return "training";
    case ServicePhase::finished: return "finished";
  }
  return "?";
}

struct QueueItem {
  std::size_t sample_id = 0;
  std::vector<double> features;
  std::vector<double> projection;  // first two feature coordinates
  std::vector<double> belief;
  double uncertainty = 1.0;
  int round = 0;
};

inline nlohmann::json to_json(const QueueItem& q) {
  return {{"sample_id", q.sample_id},   {"features", q.features},
          {"projection", q.projection}, {"belief", q.belief},
          {"uncertainty", q.uncertainty}, {"round", q.round}};
}

/// HTTP front end for one ActiveLearner whose labels come from a human.
/// Every mutation goes through one mutex; retraining after the last label
/// of a round runs on a background thread while reads stay available.
class AnnotationService {
 public:
  using RoundCallback = std::function<void(const ActiveLearner&)>;

  AnnotationService() { install_routes(); }

  ~AnnotationService() {
    stop();
    join_trainer();
  }

  AnnotationService(const AnnotationService&) = delete;
  AnnotationService& operator=(const AnnotationService&) = delete;

  /// Takes ownership of the run and prepares the first queue.
  void attach(std::unique_ptr<ActiveLearner> learner) {
    join_trainer();
    auto queue = build_queue(*learner);
    std::lock_guard lock(mutex_);
    learner_ = std::move(learner);
    install_round_locked(std::move(queue));
  }

  /// Called from the training thread after every completed round. Set it
  /// before the first label arrives.
  void on_round_complete(RoundCallback cb) { on_round_ = std::move(cb); }

  ServicePhase phase() const {
    std::lock_guard lock(mutex_);
    return phase_;
  }

  /// Blocks until the phase is not training.
  void wait_while_training() {
    std::unique_lock lock(mutex_);
    changed_.wait(lock, [&] { return phase_ != ServicePhase::training; });
  }

  /// Blocks until the run finishes or the timeout elapses.
  bool wait_until_finished(std::chrono::milliseconds timeout) {
    std::unique_lock lock(mutex_);
    return changed_.wait_for(lock, timeout, [&] { return phase_ == ServicePhase::finished; });
  }

  /// Runs f with the learner while holding the state lock. Only meaningful
  /// outside the training phase, when no other thread touches the learner.
  template <class F>
  auto with_learner(F&& f) const {
    std::lock_guard lock(mutex_);
    return f(learner_.get());
  }

  int bind_to_any_port(const std::string& host = "127.0.0.1") {
    return server_.bind_to_any_port(host);
  }
  bool bind(const std::string& host, int port) { return server_.bind_to_port(host, port); }
  bool listen_after_bind() { return server_.listen_after_bind(); }
  void stop() { server_.stop(); }
  void wait_until_ready() { server_.wait_until_ready(); }

 private:
  static void send_json(httplib::Response& res, int status, const nlohmann::json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
  }

  static void send_error(httplib::Response& res, int status, const std::string& message) {
    send_json(res, status, {{"error", message}});
  }

  void install_routes() {
    server_.Get("/", [](const httplib::Request&, httplib::Response& res) {
      res.set_content(kIndexPage, "text/html; charset=utf-8");
    });
    server_.Get("/api/status", [this](const httplib::Request&, httplib::Response& res) {
      std::lock_guard lock(mutex_);
      if (!learner_) return send_error(res, 503, "no active learning run attached");
      send_json(res, 200, status_locked());
    });
    server_.Get("/api/queue", [this](const httplib::Request& req, httplib::Response& res) {
      std::size_t limit = std::numeric_limits<std::size_t>::max();
      if (req.has_param("limit")) {
        try {
          const long long v = std::stoll(req.get_param_value("limit"));
          if (v < 0) throw std::invalid_argument("negative");
          limit = static_cast<std::size_t>(v);
        } catch (const std::exception&) {
          return send_error(res, 400, "limit must be a non-negative integer");
        }
      }
      std::lock_guard lock(mutex_);
      if (!learner_) return send_error(res, 503, "no active learning run attached");
      if (phase_ != ServicePhase::awaiting_labels) {
        return send_error(res, 409, std::string("no round awaiting labels (phase ") +
                                        to_string(phase_) + ")");
      }
      nlohmann::json items = nlohmann::json::array();
      for (const auto& item : queue_) {
        if (items.size() >= limit) break;
        if (!submitted_.count(item.sample_id)) items.push_back(to_json(item));
      }
      send_json(res, 200, items);
    });
    server_.Post("/api/labels", [this](const httplib::Request& req, httplib::Response& res) {
      handle_label(req, res);
    });
    server_.Get("/api/history", [this](const httplib::Request&, httplib::Response& res) {
      std::lock_guard lock(mutex_);
      nlohmann::json out = nlohmann::json::array();
      for (const auto& r : snapshot_.history) out.push_back(round_record_json(r));
      send_json(res, 200, out);
    });
  }

  void handle_label(const httplib::Request& req, httplib::Response& res) {
    nlohmann::json body;
    try {
      body = nlohmann::json::parse(req.body);
    } catch (const nlohmann::json::exception&) {
      return send_error(res, 400, "body is not valid JSON");
    }
    if (!body.is_object() || !body.contains("sample_id") || !body.contains("label") ||
        !body["sample_id"].is_number_unsigned() || !body["label"].is_number_integer()) {
      return send_error(res, 400, "expected {\"sample_id\": uint, \"label\": int}");
    }
    const auto id = body["sample_id"].get<std::size_t>();
    const auto label = body["label"].get<long long>();

    std::unique_lock lock(mutex_);
    if (!learner_) return send_error(res, 503, "no active learning run attached");
    if (label < 0 || static_cast<std::size_t>(label) >= snapshot_.num_classes) {
      return send_error(res, 400, "label outside [0, K)");
    }
    if (phase_ != ServicePhase::awaiting_labels) {
      return send_error(res, 409, std::string("not accepting labels (phase ") +
                                      to_string(phase_) + ")");
    }
    if (body.contains("round") &&
        (!body["round"].is_number_integer() || body["round"].get<long long>() != current_round())) {
      return send_error(res, 409, "submission is for a different round");
    }
    if (!queue_index_.count(id)) return send_error(res, 409, "sample is not in the current queue");
    if (submitted_.count(id)) return send_error(res, 409, "sample already labeled this round");
    submitted_[id] = static_cast<std::size_t>(label);
    const std::size_t remaining = queue_.size() - submitted_.size();
    send_json(res, 200, {{"accepted", true}, {"quota_remaining", remaining}});
    if (remaining == 0) start_training_locked(lock);
  }

  int current_round() const { return snapshot_.round + 1; }

  nlohmann::json status_locked() const {
    nlohmann::json last = nullptr;
    if (!snapshot_.history.empty()) last = round_record_json(snapshot_.history.back());
    const std::size_t quota =
        phase_ == ServicePhase::awaiting_labels ? queue_.size() - submitted_.size() : 0;
    nlohmann::json out{{"phase", to_string(phase_)},
                       {"round", snapshot_.round},
                       {"labels_fraction", snapshot_.labels_fraction},
                       {"quota_remaining", quota},
                       {"K", snapshot_.num_classes},
                       {"total_rounds", snapshot_.total_rounds},
                       {"strategy", snapshot_.strategy},
                       {"last_round", last}};
    if (!error_.empty()) out["error"] = error_;
    return out;
  }

  // Scores the next queue; touches only the learner, so no lock is needed
  // while this thread is its sole user.
  static std::vector<QueueItem> build_queue(ActiveLearner& learner) {
    std::vector<QueueItem> queue;
    if (learner.finished()) return queue;
    const auto& ids = learner.pending();
    const auto& pool = learner.pool();
    for (auto id : ids) {
      const auto row = pool.features.row(id);
      const auto p = predict(learner.model(), row, id);
      QueueItem item;
      item.sample_id = id;
      item.features.assign(row.begin(), row.end());
      item.projection.assign(row.begin(), row.begin() + std::min<std::size_t>(2, row.size()));
      item.belief = p.opinion.belief;
      item.uncertainty = p.opinion.uncertainty;
      item.round = learner.state().round + 1;
      queue.push_back(std::move(item));
    }
    return queue;
  }

  // Caller holds mutex_.
  void install_round_locked(std::vector<QueueItem> queue) {
    snapshot_.round = learner_->state().round;
    snapshot_.labels_fraction = learner_->labels_fraction();
    snapshot_.history = learner_->state().history;
    snapshot_.num_classes = learner_->pool().num_classes;
    snapshot_.total_rounds = learner_->total_rounds();
    snapshot_.strategy = to_string(learner_->config().strategy);
    queue_ = std::move(queue);
    queue_index_.clear();
    submitted_.clear();
    for (std::size_t i = 0; i < queue_.size(); ++i) queue_index_[queue_[i].sample_id] = i;
    phase_ = learner_->finished() ? ServicePhase::finished : ServicePhase::awaiting_labels;
    changed_.notify_all();
  }

  void start_training_locked(std::unique_lock<std::mutex>& lock) {
    std::vector<std::size_t> labels;
    labels.reserve(queue_.size());
    for (const auto& item : queue_) labels.push_back(submitted_.at(item.sample_id));
    phase_ = ServicePhase::training;
    changed_.notify_all();
    lock.unlock();
    join_trainer();
    trainer_ = std::thread([this, labels = std::move(labels)] { train(labels); });
  }

  void train(const std::vector<std::size_t>& labels) {
    // While the phase is training this thread is the learner's only user;
    // HTTP readers see the snapshot taken when the round opened.
    try {
      learner_->commit(labels);
      if (on_round_) on_round_(*learner_);
      auto queue = build_queue(*learner_);
      std::lock_guard lock(mutex_);
      install_round_locked(std::move(queue));
    } catch (const std::exception& e) {
      std::lock_guard lock(mutex_);
      error_ = e.what();
      phase_ = ServicePhase::finished;
      changed_.notify_all();
    }
  }

  void join_trainer() {
    if (trainer_.joinable() && trainer_.get_id() != std::this_thread::get_id()) trainer_.join();
  }

  static constexpr const char* kIndexPage =
      "<!doctype html><html><head><meta charset=\"utf-8\"><title>uaal annotation</title></head>"
      "<body><h1>uaal annotation service</h1><p>Endpoints: GET /api/status, GET /api/queue, "
      "POST /api/labels, GET /api/history.</p></body></html>\n";

  struct Snapshot {
    int round = 0;
    double labels_fraction = 0.0;
    std::vector<RoundRecord> history;
    std::size_t num_classes = 0;
    int total_rounds = 0;
    std::string strategy;
  };

  httplib::Server server_;
  mutable std::mutex mutex_;
  std::condition_variable changed_;
  std::unique_ptr<ActiveLearner> learner_;
  ServicePhase phase_ = ServicePhase::idle;
  Snapshot snapshot_;
  std::vector<QueueItem> queue_;
  std::unordered_map<std::size_t, std::size_t> queue_index_;
  std::unordered_map<std::size_t, std::size_t> submitted_;
  std::string error_;
  RoundCallback on_round_;
  std::thread trainer_;
};

/// Plays the annotator over HTTP, answering every queued sample with the
/// label returned by `label_of`. Returns the number of rounds completed.
inline int annotate_over_http(const std::string& host, int port,
                              const std::function<std::size_t(std::size_t)>& label_of,
                              std::chrono::milliseconds poll = std::chrono::milliseconds(5)) {
  httplib::Client client(host, port);
  client.set_read_timeout(std::chrono::seconds(60));
  int rounds = 0;
  for (;;) {
    auto status = client.Get("/api/status");
    if (!status || status->status != 200) throw OracleError("annotation service unavailable");
    const auto s = nlohmann::json::parse(status->body);
    const std::string phase = s.at("phase").get<std::string>();
    if (phase == "finished") {
      if (s.contains("error")) throw OracleError("service failed: " + s["error"].get<std::string>());
      return rounds;
    }
    if (phase != "awaiting_labels") {
      std::this_thread::sleep_for(poll);
      continue;
    }
    auto queue = client.Get("/api/queue");
    if (!queue) throw OracleError("annotation service unavailable");
    if (queue->status == 409) continue;
    const auto items = nlohmann::json::parse(queue->body);
    for (const auto& item : items) {
      const auto id = item.at("sample_id").get<std::size_t>();
      const nlohmann::json body{{"sample_id", id},
                                {"label", label_of(id)},
                                {"round", item.at("round")},
                                {"annotator", "script"}};
      auto res = client.Post("/api/labels", body.dump(), "application/json");
      if (!res || res->status != 200) {
        throw OracleError("label for sample " + std::to_string(id) + " rejected");
      }
    }
    if (!items.empty()) ++rounds;
  }
}

}  // namespace uaal
