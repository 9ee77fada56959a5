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

// Run artifacts: the per-round CSV, the queried-ids sidecar, histogram
// exports and RoundRecord JSON. Numbers are formatted once, by
// format_number, so the CSV and the service's JSON carry identical values.

#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "uaal/active_loop.hpp"
#include "uaal/errors.hpp"
#include "uaal/metrics.hpp"

namespace uaal {

inline constexpr int kCsvSchemaVersion = 1;
inline constexpr const char* kRoundCsvHeader =
    "round,labels_fraction,strategy,seed,accuracy,weighted_f1,mean_u_correct,mean_u_incorrect";

/// Shortest representation that round-trips to the same double.
inline std::string format_number(double x) { return nlohmann::json(x).dump(); }

inline std::string format_optional(const std::optional<double>& x) {
  return x ? format_number(*x) : std::string();
}

inline std::string csv_row(const RoundRecord& r) {
  std::ostringstream os;
  os << r.round << ',' << format_number(r.labels_fraction) << ',' << r.strategy << ',' << r.seed
     << ',' << format_number(r.accuracy) << ',' << format_number(r.weighted_f1) << ','
     << format_optional(r.mean_u_correct) << ',' << format_optional(r.mean_u_incorrect);
  return os.str();
}

inline void write_round_csv(const std::string& path, const std::vector<RoundRecord>& records) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write '" + path + "'");
  out << kRoundCsvHeader << '\n';
  for (const auto& r : records) out << csv_row(r) << '\n';
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream is(line);
  while (std::getline(is, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

inline std::vector<RoundRecord> read_round_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read '" + path + "'");
  std::string line;
  if (!std::getline(in, line) || line != kRoundCsvHeader) {
    throw DataError(path + ":1: unexpected header (schema version " +
                    std::to_string(kCsvSchemaVersion) + " expected)");
  }
  std::vector<RoundRecord> out;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != 8) {
      throw DataError(path + ":" + std::to_string(line_no) + ": expected 8 columns");
    }
    try {
      RoundRecord r;
      r.round = std::stoi(cells[0]);
      r.labels_fraction = std::stod(cells[1]);
      r.strategy = cells[2];
      r.seed = std::stoull(cells[3]);
      r.accuracy = std::stod(cells[4]);
      r.weighted_f1 = std::stod(cells[5]);
      if (!cells[6].empty()) r.mean_u_correct = std::stod(cells[6]);
      if (!cells[7].empty()) r.mean_u_incorrect = std::stod(cells[7]);
      out.push_back(std::move(r));
    } catch (const std::exception&) {
      throw DataError(path + ":" + std::to_string(line_no) + ": malformed row");
    }
  }
  return out;
}

/// CSV columns as JSON, values parsed back from the CSV text.
inline nlohmann::json round_record_json(const RoundRecord& r) {
  auto opt = [](const std::optional<double>& x) {
    return x ? nlohmann::json::parse(format_number(*x)) : nlohmann::json(nullptr);
  };
  return {{"round", r.round},
          {"labels_fraction", nlohmann::json::parse(format_number(r.labels_fraction))},
          {"strategy", r.strategy},
          {"seed", r.seed},
          {"accuracy", nlohmann::json::parse(format_number(r.accuracy))},
          {"weighted_f1", nlohmann::json::parse(format_number(r.weighted_f1))},
          {"mean_u_correct", opt(r.mean_u_correct)},
          {"mean_u_incorrect", opt(r.mean_u_incorrect)},
          {"queried_ids", r.queried_ids}};
}

/// One JSON object per line: strategy, seed, round, queried_ids.
inline void write_queried_sidecar(const std::string& path, const std::vector<RoundRecord>& records) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write '" + path + "'");
  for (const auto& r : records) {
    out << nlohmann::json{{"strategy", r.strategy},
                          {"seed", r.seed},
                          {"round", r.round},
                          {"queried_ids", r.queried_ids}}
               .dump()
        << '\n';
  }
}

inline nlohmann::json histogram_json(const HistogramPair& h) {
  return {{"bin_edges", h.bin_edges},
          {"counts_correct", h.counts_correct},
          {"counts_incorrect", h.counts_incorrect}};
}

inline HistogramPair histogram_from_json(const nlohmann::json& j) {
  HistogramPair h;
  h.bin_edges = j.at("bin_edges").get<std::vector<double>>();
  h.counts_correct = j.at("counts_correct").get<std::vector<std::size_t>>();
  h.counts_incorrect = j.at("counts_incorrect").get<std::vector<std::size_t>>();
  if (h.bin_edges.size() != h.counts_correct.size() + 1 ||
      h.counts_correct.size() != h.counts_incorrect.size()) {
    throw DataError("histogram: inconsistent array lengths");
  }
  return h;
}

inline void write_json_file(const std::string& path, const nlohmann::json& j) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write '" + path + "'");
  out << j.dump(2) << '\n';
}

inline nlohmann::json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read '" + path + "'");
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path + ": " + e.what());
  }
}

}  // namespace uaal
