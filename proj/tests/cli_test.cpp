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

#include "uaal/cli.hpp"

#include <gtest/gtest.h>

#include <csignal>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <thread>

namespace uaal {
namespace {

namespace fs = std::filesystem;

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    root_ = fs::temp_directory_path() /
            ("uaal_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(root_);
    fs::create_directories(root_);
  }
  void TearDown() override { fs::remove_all(root_); }

  int run(std::vector<std::string> args) {
    out_.str("");
    err_.str("");
    return cli::run(args, out_, err_);
  }

  std::string path(const std::string& rel) const { return (root_ / rel).string(); }

  static std::string read(const std::string& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
  }

  // A small pool: 5 classes, 600 samples, 4 features.
  std::string small_dataset() {
    EXPECT_EQ(run({"generate", "--preset", "nct-toy", "--seed", "7", "--num-samples", "600",
                   "--dim", "4", "--out", path("data")}),
              0)
        << err_.str();
    return path("data/dataset.jsonl");
  }

  std::vector<std::string> quick_al_run(const std::string& data, const std::string& out) {
    return {"al-run", "--dataset", data, "--seeds", "1", "2", "--max-budget", "0.03",
            "--pretrain-epochs", "1", "--finetune-epochs", "2", "--hidden-dims", "16",
            "--embedding-dim", "8", "--projection-dim", "4", "--out", out};
  }

  fs::path root_;
  std::ostringstream out_, err_;
};

TEST_F(CliTest, GenerateWritesDataset) {
  EXPECT_EQ(run({"generate", "--preset", "nct-toy", "--seed", "7", "--out", path("data")}), 0);
  const auto ds = load_dataset(path("data/dataset.jsonl"));
  EXPECT_EQ(ds.num_classes, 5u);
  EXPECT_EQ(ds.size(), 10000u);
  EXPECT_EQ(ds, generate_gaussian_mixture(preset_spec("nct-toy", 7)));
}

TEST_F(CliTest, GenerateWithoutOutIsUsageError) {
  EXPECT_EQ(run({"generate", "--preset", "nct-toy", "--seed", "7"}), cli::kExitUsage);
  EXPECT_EQ(run({"generate", "--preset", "imagenet", "--out", path("x")}), cli::kExitUsage);
  EXPECT_EQ(run({}), cli::kExitUsage);
  EXPECT_EQ(run({"frobnicate"}), cli::kExitUsage);
}

TEST_F(CliTest, PcamPresetHasTwoClasses) {
  EXPECT_EQ(run({"generate", "--preset", "pcam-toy", "--seed", "1", "--out", path("p"),
                 "--with-variant"}),
            0);
  std::ifstream in(path("p/dataset.jsonl"));
  std::string header;
  std::getline(in, header);
  EXPECT_EQ(nlohmann::json::parse(header)["num_classes"], 2);
  EXPECT_TRUE(fs::exists(path("p/outdomain.jsonl")));
}

TEST_F(CliTest, AlRunArtifactsAndDeterminism) {
  const auto data = small_dataset();
  ASSERT_EQ(run(quick_al_run(data, path("run1"))), 0) << err_.str();
  ASSERT_EQ(run(quick_al_run(data, path("run2"))), 0) << err_.str();
  EXPECT_EQ(read(path("run1/rounds.csv")), read(path("run2/rounds.csv")));
  EXPECT_EQ(read(path("run1/queried.jsonl")), read(path("run2/queried.jsonl")));

  // 2 strategies x 2 seeds x 3 rounds.
  const auto rows = read_round_csv(path("run1/rounds.csv"));
  ASSERT_EQ(rows.size(), 12u);
  for (const char* strategy : {"uncertainty_topk", "random"}) {
    for (int seed : {1, 2}) {
      const auto tag = std::string(strategy) + "_seed" + std::to_string(seed);
      EXPECT_TRUE(fs::exists(path("run1/histograms/final_" + tag + ".json"))) << tag;
      const auto ckpt = load_checkpoint(path("run1/checkpoints/final_" + tag + ".json"));
      EXPECT_EQ(ckpt.stage, "finetuned");
    }
  }
  const auto meta = read_json_file(path("run1/metadata.json"));
  EXPECT_EQ(meta["csv_schema_version"], kCsvSchemaVersion);
  EXPECT_EQ(meta["model"]["evidence_activation"], "relu");
  EXPECT_EQ(meta["model"]["optimizer"]["name"], "adam");
  EXPECT_EQ(meta["active_learning"]["anneal_mode"], "reset each round");
  EXPECT_EQ(meta["active_learning"]["warm_start"], true);
  EXPECT_EQ(meta["pretrain"]["domain"], "outdomain");
}

TEST_F(CliTest, WrittenConfigReproducesRun) {
  const auto data = small_dataset();
  ASSERT_EQ(run(quick_al_run(data, path("run1"))), 0) << err_.str();
  ASSERT_EQ(run({"al-run", "--config", path("run1/config.ini"), "--out", path("again")}), 0)
      << err_.str();
  EXPECT_EQ(read(path("run1/rounds.csv")), read(path("again/rounds.csv")));
}

TEST_F(CliTest, ConfigFileWithFlagOverride) {
  const auto data = small_dataset();
  {
    std::ofstream ini(path("run.ini"));
    ini << "[al-run]\ndataset = " << data
        << "\nseeds = 3\nstrategies = random\nmax-budget = 0.05\npretrain-epochs = 1\n"
           "finetune-epochs = 1\nhidden-dims = 8\n";
  }
  ASSERT_EQ(run({"al-run", "--config", path("run.ini"), "--max-budget", "0.02", "--out",
                 path("r")}),
            0)
      << err_.str();
  const auto rows = read_round_csv(path("r/rounds.csv"));
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[0].seed, 3u);
  EXPECT_EQ(rows[0].strategy, "random");
}

TEST_F(CliTest, ReportSummarisesAndWarns) {
  const auto data = small_dataset();
  ASSERT_EQ(run(quick_al_run(data, path("run"))), 0) << err_.str();
  ASSERT_EQ(run({"report", "--run", path("run"), "--out", path("rep")}), 0);
  const auto text = out_.str();
  EXPECT_EQ(text, read(path("rep/report.txt")));
  // Three fractions per strategy, each averaged over both seeds.
  std::size_t summary_rows = 0;
  std::istringstream lines(text);
  for (std::string line; std::getline(lines, line);) {
    const auto cells = split_csv_line(line);
    if (cells.size() == 7 && cells[2] == "2") ++summary_rows;
  }
  EXPECT_EQ(summary_rows, 6u) << text;
  EXPECT_NE(text.find("fractions from 0.02"), std::string::npos);
  EXPECT_EQ(text.find("warning"), std::string::npos);
  ASSERT_EQ(run({"report", "--run", path("run")}), 0);
  EXPECT_EQ(out_.str(), text);

  // Drop the random rows and one topk round.
  auto rows = read_round_csv(path("run/rounds.csv"));
  std::vector<RoundRecord> partial;
  for (const auto& r : rows) {
    if (r.strategy == "uncertainty_topk" && !(r.seed == 2 && r.round == 3)) partial.push_back(r);
  }
  write_round_csv(path("run/rounds.csv"), partial);
  ASSERT_EQ(run({"report", "--run", path("run")}), 0);
  EXPECT_NE(out_.str().find("warning: strategy random missing"), std::string::npos) << out_.str();
  EXPECT_NE(out_.str().find("seed 2 is incomplete"), std::string::npos) << out_.str();

  EXPECT_EQ(run({"report", "--run", path("nowhere")}), cli::kExitData);
}

TEST_F(CliTest, ExportEmbeddings) {
  const auto data = small_dataset();
  ASSERT_EQ(run({"finetune", "--dataset", data, "--epochs", "2", "--out", path("ft")}), 0)
      << err_.str();
  for (const char* dir : {"e1", "e2"}) {
    ASSERT_EQ(run({"export-embeddings", "--checkpoint", path("ft/finetuned.json"), "--dataset",
                   data, "--out", path(dir)}),
              0)
        << err_.str();
  }
  const auto text = read(path("e1/embeddings.csv"));
  EXPECT_EQ(text, read(path("e2/embeddings.csv")));
  std::istringstream lines(text);
  std::string line;
  std::getline(lines, line);
  EXPECT_EQ(line.rfind("id,split,label,predicted,uncertainty,e0,", 0), 0u);
  std::size_t n = 0;
  while (std::getline(lines, line)) {
    const auto cells = split_csv_line(line);
    ASSERT_EQ(cells.size(), 5u + 32u);
    const double u = std::stod(cells[4]);
    EXPECT_GE(u, 0.0);
    EXPECT_LE(u, 1.0);
    ++n;
  }
  EXPECT_EQ(n, 600u);
  EXPECT_EQ(run({"export-embeddings", "--checkpoint", path("ft/finetuned.json"), "--preset",
                 "pcam-toy", "--out", path("bad")}),
            cli::kExitData);
}

TEST_F(CliTest, PretrainFinetuneDistillStages) {
  const auto data = small_dataset();
  ASSERT_EQ(run({"pretrain", "--dataset", data, "--pretrain-epochs", "1", "--out", path("pre")}), 0)
      << err_.str();
  EXPECT_EQ(load_checkpoint(path("pre/pretrained.json")).stage, "pretrained");
  ASSERT_EQ(run({"finetune", "--dataset", data, "--checkpoint", path("pre/pretrained.json"),
                 "--epochs", "2", "--distill-epochs", "1", "--out", path("ft")}),
            0)
      << err_.str();
  EXPECT_EQ(load_checkpoint(path("ft/finetuned.json")).stage, "finetuned");
  EXPECT_EQ(load_checkpoint(path("ft/distilled.json")).stage, "distilled");
  const auto eval = read_json_file(path("ft/eval.json"));
  EXPECT_TRUE(eval.contains("accuracy"));
  EXPECT_TRUE(eval["distilled"].contains("weighted_f1"));
  const auto hist = histogram_from_json(read_json_file(path("ft/histogram.json")));
  EXPECT_EQ(hist.bin_edges.size(), 21u);
}

TEST_F(CliTest, ExitCodes) {
  const auto data = small_dataset();
  EXPECT_EQ(run({"al-run", "--dataset", path("missing.jsonl"), "--out", path("x")}),
            cli::kExitData);
  EXPECT_EQ(run({"al-run", "--dataset", data, "--q", "0", "--out", path("x")}), cli::kExitUsage);
  EXPECT_EQ(run({"al-run", "--dataset", data, "--strategies", "entropy", "--out", path("x")}),
            cli::kExitUsage);
  EXPECT_EQ(run({"al-run", "--dataset", data, "--preset", "nct-toy", "--out", path("x")}),
            cli::kExitUsage);
  {
    std::ofstream broken(path("broken.jsonl"));
    broken << "{\"format\":\"uaal-dataset\"\n";
  }
  EXPECT_EQ(run({"finetune", "--dataset", path("broken.jsonl"), "--out", path("x")}),
            cli::kExitData);
  // An absurd learning rate drives the loss non-finite.
  EXPECT_EQ(run({"finetune", "--dataset", data, "--lr", "1e308", "--epochs", "5", "--out",
                 path("x")}),
            cli::kExitNumeric)
      << err_.str();
}

TEST_F(CliTest, ServeAnswersStatus) {
  const auto data = small_dataset();
  int port = 0;
  {
    httplib::Server probe;
    port = probe.bind_to_any_port("127.0.0.1");
  }
  ASSERT_GT(port, 0);
  int code = -1;
  std::ostringstream serve_out, serve_err;
  std::thread server([&] {
    code = cli::run({"serve", "--dataset", data, "--port", std::to_string(port), "--no-pretrain",
                     "--strategy", "random", "--out", path("live")},
                    serve_out, serve_err);
  });
  httplib::Client client("127.0.0.1", port);
  httplib::Result res;
  for (int i = 0; i < 200 && !(res = client.Get("/api/status")); ++i) {
    std::this_thread::sleep_for(std::chrono::milliseconds(20));
  }
  ASSERT_TRUE(res);
  const auto status = nlohmann::json::parse(res->body);
  EXPECT_EQ(status["round"], 0);
  EXPECT_EQ(status["K"], 5);
  EXPECT_EQ(status["strategy"], "random");
  std::raise(SIGINT);
  server.join();
  EXPECT_EQ(code, 0) << serve_err.str();
}

}  // namespace
}  // namespace uaal
