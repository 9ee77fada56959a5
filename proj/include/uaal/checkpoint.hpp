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

// Model checkpoints as versioned JSON. Doubles are written in shortest
// round-trip form, so load(save(m)) == m bit for bit.

#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "uaal/errors.hpp"
#include "uaal/network.hpp"

namespace uaal {

inline constexpr int kCheckpointVersion = 1;

struct Checkpoint {
  ModelState model;
  std::string stage;  // pretrained | finetuned | distilled
  std::uint64_t run_seed = 0;
  nlohmann::json metadata = nlohmann::json::object();
};

inline nlohmann::json to_json(const NetworkConfig& c) {
  return {{"input_dim", c.input_dim},
          {"hidden_dims", c.hidden_dims},
          {"embedding_dim", c.embedding_dim},
          {"projection_dim", c.projection_dim},
          {"num_classes", c.num_classes},
          {"evidence_activation", to_string(c.evidence_activation)},
          {"seed", c.seed}};
}

inline NetworkConfig network_config_from_json(const nlohmann::json& j) {
  NetworkConfig c;
  c.input_dim = j.at("input_dim").get<std::size_t>();
  c.hidden_dims = j.at("hidden_dims").get<std::vector<std::size_t>>();
  c.embedding_dim = j.at("embedding_dim").get<std::size_t>();
  c.projection_dim = j.at("projection_dim").get<std::size_t>();
  c.num_classes = j.at("num_classes").get<std::size_t>();
  c.evidence_activation = parse_evidence_activation(j.at("evidence_activation").get<std::string>());
  c.seed = j.at("seed").get<std::uint64_t>();
  return c;
}

inline void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  const auto& m = ckpt.model;
  nlohmann::json j = {
      {"format", "uaal-checkpoint"},
      {"version", kCheckpointVersion},
      {"stage", ckpt.stage},
      {"run_seed", ckpt.run_seed},
      {"config", to_json(m.config())},
      {"params", std::vector<double>(m.params().begin(), m.params().end())},
      {"adam_m", std::vector<double>(m.adam_m().begin(), m.adam_m().end())},
      {"adam_v", std::vector<double>(m.adam_v().begin(), m.adam_v().end())},
      {"step", m.step()},
      {"metadata", ckpt.metadata}};
  std::ofstream out(path);
  if (!out) throw DataError("save_checkpoint: cannot open '" + path + "'");
  out << j.dump() << '\n';
  if (!out) throw DataError("save_checkpoint: write to '" + path + "' failed");
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("load_checkpoint: cannot open '" + path + "'");
  try {
    const auto j = nlohmann::json::parse(in);
    if (j.at("format") != "uaal-checkpoint") throw DataError(path + ": not a uaal checkpoint");
    if (j.at("version") != kCheckpointVersion) {
      throw DataError(path + ": unsupported checkpoint version");
    }
    Checkpoint ckpt;
    ckpt.model = ModelState(network_config_from_json(j.at("config")));
    auto load_array = [&](const char* key, std::span<double> dst) {
      const auto values = j.at(key).get<std::vector<double>>();
      if (values.size() != dst.size()) {
        throw DataError(path + ": '" + key + "' has " + std::to_string(values.size()) +
                        " entries, model expects " + std::to_string(dst.size()));
      }
      std::copy(values.begin(), values.end(), dst.begin());
    };
    load_array("params", ckpt.model.params());
    load_array("adam_m", ckpt.model.adam_m());
    load_array("adam_v", ckpt.model.adam_v());
    ckpt.model.set_step(j.at("step").get<std::uint64_t>());
    ckpt.stage = j.at("stage").get<std::string>();
    ckpt.run_seed = j.at("run_seed").get<std::uint64_t>();
    ckpt.metadata = j.value("metadata", nlohmann::json::object());
    return ckpt;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path + ": malformed checkpoint: " + e.what());
  }
}

}  // namespace uaal
