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

#include <CLI11.hpp>

#include <csignal>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <nlohmann/json.hpp>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "uaal/active_loop.hpp"
#include "uaal/annotation_service.hpp"
#include "uaal/checkpoint.hpp"
#include "uaal/datagen.hpp"
#include "uaal/errors.hpp"
#include "uaal/metrics.hpp"
#include "uaal/pipeline.hpp"
#include "uaal/run_io.hpp"

namespace uaal::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitData = 2;
inline constexpr int kExitNumeric = 3;
inline constexpr int kMetadataVersion = 1;

namespace fs = std::filesystem;

/// Where the pool comes from: a dataset file or a preset generated on the fly.
struct DataOptions {
  std::string dataset;
  std::string preset;
  std::uint64_t data_seed = 0;

  void add_to(CLI::App* app) {
    app->add_option("--dataset", dataset, "Dataset file written by 'generate'");
    app->add_option("--preset", preset, "Generate a preset pool instead (nct-toy, pcam-toy)");
    app->add_option("--data-seed", data_seed, "Seed for --preset")->capture_default_str();
  }

  PoolDataset load() const {
    if (!dataset.empty() && !preset.empty()) {
      throw DomainError("give either --dataset or --preset, not both");
    }
    if (!dataset.empty()) return load_dataset(dataset);
    if (!preset.empty()) {
      if (preset != "nct-toy" && preset != "pcam-toy") {
        throw DomainError("unknown preset '" + preset + "'");
      }
      return generate_gaussian_mixture(preset_spec(preset, data_seed));
    }
    throw DomainError("one of --dataset or --preset is required");
  }

  nlohmann::json describe() const {
    return {{"dataset", dataset}, {"preset", preset}, {"data_seed", data_seed}};
  }
};

struct ModelOptions {
  NetworkConfig network;
  std::string evidence_activation = "relu";
  TrainHyper hyper;

  void add_to(CLI::App* app) {
    app->add_option("--hidden-dims", network.hidden_dims, "Encoder hidden widths")
        ->capture_default_str();
    app->add_option("--embedding-dim", network.embedding_dim)->capture_default_str();
    app->add_option("--projection-dim", network.projection_dim)->capture_default_str();
    app->add_option("--evidence-activation", evidence_activation, "relu or softplus")
        ->capture_default_str()
        ->check(CLI::IsMember({"relu", "softplus"}));
    app->add_option("--lr", hyper.learning_rate, "Adam learning rate")->capture_default_str();
    app->add_option("--batch-size", hyper.batch_size)->capture_default_str();
    app->add_option("--adam-beta1", hyper.beta1)->capture_default_str();
    app->add_option("--adam-beta2", hyper.beta2)->capture_default_str();
    app->add_option("--adam-epsilon", hyper.epsilon)->capture_default_str();
  }

  NetworkConfig config_for(const PoolDataset& pool, std::uint64_t seed) const {
    NetworkConfig c = network;
    c.input_dim = pool.dim();
    c.num_classes = pool.num_classes;
    c.evidence_activation = parse_evidence_activation(evidence_activation);
    c.seed = seed;
    return c;
  }

  nlohmann::json describe() const {
    return {{"hidden_dims", network.hidden_dims},
            {"hidden_activation", "tanh"},
            {"embedding_dim", network.embedding_dim},
            {"embedding_activation", "tanh"},
            {"projection_dim", network.projection_dim},
            {"projection_head", "tanh hidden layer of embedding width, then linear"},
            {"evidence_activation", evidence_activation},
            {"init", "weights N(0, 1/fan_in), biases 0"},
            {"optimizer",
             {{"name", "adam"},
              {"learning_rate", hyper.learning_rate},
              {"beta1", hyper.beta1},
              {"beta2", hyper.beta2},
              {"epsilon", hyper.epsilon},
              {"batch_size", hyper.batch_size},
              {"state", "reset at the start of every training stage"}}}};
  }
};

struct PretrainOptions {
  bool skip = false;
  std::string domain = "outdomain";
  std::string pretrain_dataset;
  PretrainConfig config;
  AugmentationConfig augmentation;

  void add_to(CLI::App* app) {
    app->add_flag("--no-pretrain", skip, "Start from a randomly initialised encoder");
    app->add_option("--domain", domain, "Pre-training data: indomain or outdomain")
        ->capture_default_str()
        ->check(CLI::IsMember({"indomain", "outdomain"}));
    app->add_option("--pretrain-dataset", pretrain_dataset,
                    "Out-domain data file; default regenerates the variant of the pool");
    app->add_option("--temperature", config.temperature)->capture_default_str();
    app->add_option("--pretrain-epochs", config.epochs)->capture_default_str();
    app->add_option("--pretrain-batch-size", config.batch_size)->capture_default_str();
    app->add_option("--noise-sigma", augmentation.noise_sigma,
                    "Augmentation noise, in units of each feature's std")
        ->capture_default_str();
    app->add_option("--dropout", augmentation.feature_dropout_prob,
                    "Augmentation feature dropout probability")
        ->capture_default_str();
  }

  PretrainDomain parsed_domain() const { return parse_domain(domain); }

  /// The out-domain pool, or nothing when it is not needed.
  std::optional<PoolDataset> outdomain_pool(const PoolDataset& pool) const {
    if (skip || parsed_domain() != PretrainDomain::outdomain) return std::nullopt;
    if (!pretrain_dataset.empty()) return load_dataset(pretrain_dataset);
    return generate_outdomain_variant(mixture_spec_from_json(pool.generator));
  }

  nlohmann::json describe() const {
    return {{"enabled", !skip},
            {"domain", domain},
            {"pretrain_dataset", pretrain_dataset},
            {"loss", "nt-xent, positive included in the denominator"},
            {"temperature", config.temperature},
            {"epochs", config.epochs},
            {"batch_size", config.batch_size},
            {"augmentation",
             {{"noise_sigma_relative_to_feature_std", augmentation.noise_sigma},
              {"feature_dropout_prob", augmentation.feature_dropout_prob}}}};
  }
};

inline void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw DataError("cannot create directory '" + dir + "': " + ec.message());
}

inline std::string join(const std::string& dir, const std::string& name) {
  return (fs::path(dir) / name).string();
}

inline ExperimentConfig experiment_config(const ModelOptions& model, const PretrainOptions& pre,
                                          const ALConfig& al) {
  ExperimentConfig config;
  config.network = model.network;
  config.network.evidence_activation = parse_evidence_activation(model.evidence_activation);
  config.pretrain = !pre.skip;
  config.domain = pre.parsed_domain();
  config.pretrain_config = pre.config;
  config.pretrain_config.hyper = model.hyper;
  config.augmentation = pre.augmentation;
  config.al = al;
  config.al.finetune.hyper = model.hyper;
  return config;
}

inline nlohmann::json eval_summary(const std::vector<Prediction>& preds, const PoolDataset& pool) {
  std::vector<std::size_t> truth, predicted;
  for (const auto& p : preds) {
    truth.push_back(*pool.labels[p.sample_id]);
    predicted.push_back(p.predicted_class);
  }
  const auto sep = uncertainty_separation(preds);
  auto opt = [](const std::optional<double>& x) {
    return x ? nlohmann::json(*x) : nlohmann::json(nullptr);
  };
  nlohmann::json out{{"num_eval", preds.size()},
                     {"accuracy", accuracy(preds)},
                     {"weighted_f1", weighted_f1(truth, predicted)},
                     {"mean_u_correct", opt(sep.mean_u_correct)},
                     {"mean_u_incorrect", opt(sep.mean_u_incorrect)}};
  if (pool.num_classes == 2) {
    std::vector<double> scores;
    std::vector<int> labels;
    for (const auto& p : preds) {
      scores.push_back(p.opinion.expected_prob[1]);
      labels.push_back(static_cast<int>(*pool.labels[p.sample_id]));
    }
    try {
      out["auc"] = binary_auc(scores, labels);
    } catch (const DomainError&) {
      out["auc"] = nullptr;
    }
  }
  return out;
}

inline std::vector<LabeledExample> train_pool_examples(const PoolDataset& pool) {
  std::vector<LabeledExample> out;
  for (auto id : pool.ids_in(Split::train_pool)) {
    if (!pool.labels[id]) throw DataError("sample " + std::to_string(id) + " has no label");
    const auto row = pool.features.row(id);
    out.push_back({std::vector<double>(row.begin(), row.end()), *pool.labels[id]});
  }
  if (out.empty()) throw DataError("the train pool is empty");
  return out;
}

// ---------------------------------------------------------------- generate

struct GenerateCommand {
  std::string preset = "nct-toy";
  std::uint64_t seed = 0;
  std::string out;
  std::optional<std::size_t> num_samples, num_classes, dim, variant_classes;
  std::optional<double> overlap, sigma, eval_fraction;
  bool with_variant = false;

  void add_to(CLI::App* app) {
    app->add_option("--preset", preset, "nct-toy or pcam-toy")
        ->capture_default_str()
        ->check(CLI::IsMember({"nct-toy", "pcam-toy"}));
    app->add_option("--seed", seed)->capture_default_str();
    app->add_option("--out", out, "Output directory")->required();
    app->add_option("--num-samples", num_samples);
    app->add_option("--num-classes", num_classes);
    app->add_option("--dim", dim);
    app->add_option("--overlap", overlap, "Pairwise center distance in units of sigma");
    app->add_option("--sigma", sigma);
    app->add_option("--eval-fraction", eval_fraction);
    app->add_option("--variant-classes", variant_classes, "Class count of the out-domain variant");
    app->add_flag("--with-variant", with_variant, "Also write the out-domain variant");
  }

  int run(std::ostream& log) const {
    auto spec = preset_spec(preset, seed);
    if (num_samples) spec.num_samples = *num_samples;
    if (num_classes) spec.num_classes = *num_classes;
    if (dim) spec.dim = *dim;
    if (overlap) spec.overlap_factor = *overlap;
    if (sigma) spec.sigma = *sigma;
    if (eval_fraction) spec.eval_fraction = *eval_fraction;
    if (variant_classes) spec.variant_num_classes = *variant_classes;
    ensure_dir(out);
    const auto path = join(out, "dataset.jsonl");
    save_dataset(generate_gaussian_mixture(spec), path);
    log << "wrote " << path << '\n';
    if (with_variant) {
      const auto vpath = join(out, "outdomain.jsonl");
      save_dataset(generate_outdomain_variant(spec), vpath);
      log << "wrote " << vpath << '\n';
    }
    return kExitOk;
  }
};

// ---------------------------------------------------------------- pretrain

struct PretrainCommand {
  DataOptions data;
  ModelOptions model;
  PretrainOptions pre;
  std::uint64_t seed = 0;
  std::string out;

  void add_to(CLI::App* app) {
    data.add_to(app);
    model.add_to(app);
    pre.add_to(app);
    app->add_option("--seed", seed, "Run seed")->capture_default_str();
    app->add_option("--out", out, "Output directory")->required();
  }

  int run(std::ostream& log) const {
    if (pre.skip) throw DomainError("pretrain: --no-pretrain makes no sense here");
    const auto pool = data.load();
    const auto outdomain = pre.outdomain_pool(pool);
    const auto config = experiment_config(model, pre, ALConfig{});
    Checkpoint ckpt;
    ckpt.model = prepare_initial_model(config, pool, outdomain ? &*outdomain : nullptr, seed);
    ckpt.stage = to_string(Stage::pretrained);
    ckpt.run_seed = seed;
    ckpt.metadata = {{"data", data.describe()},
                     {"model", model.describe()},
                     {"pretrain", pre.describe()}};
    ensure_dir(out);
    const auto path = join(out, "pretrained.json");
    save_checkpoint(ckpt, path);
    log << "wrote " << path << '\n';
    return kExitOk;
  }
};

// ---------------------------------------------------------------- finetune

struct FinetuneCommand {
  DataOptions data;
  ModelOptions model;
  std::string checkpoint;
  int epochs = 30;
  int distill_epochs = 0;
  std::uint64_t seed = 0;
  std::string out;

  void add_to(CLI::App* app) {
    data.add_to(app);
    model.add_to(app);
    app->add_option("--checkpoint", checkpoint, "Start from this checkpoint (default: fresh init)");
    app->add_option("--epochs", epochs)->capture_default_str();
    app->add_option("--distill-epochs", distill_epochs,
                    "Distil into a fresh student for this many epochs (0: off)")
        ->capture_default_str();
    app->add_option("--seed", seed, "Run seed")->capture_default_str();
    app->add_option("--out", out, "Output directory")->required();
  }

  int run(std::ostream& log) const {
    const auto pool = data.load();
    ModelState start;
    if (!checkpoint.empty()) {
      start = load_checkpoint(checkpoint).model;
      if (start.config().input_dim != pool.dim() ||
          start.config().num_classes != pool.num_classes) {
        throw DataError("checkpoint '" + checkpoint + "' does not match the dataset shape");
      }
    } else {
      start = init_model(model.config_for(pool, derive_seed(seed, {kStreamInit})));
    }
    FinetuneConfig ft;
    ft.epochs = epochs;
    ft.hyper = model.hyper;
    ft.seed = derive_seed(seed, {kStreamShuffle});
    const auto result = finetune_evidential(start, train_pool_examples(pool), ft);
    ensure_dir(out);

    const auto preds = evaluate_split(result.model, pool);
    auto summary = eval_summary(preds, pool);
    summary["epoch_losses"] = result.epoch_losses;
    Checkpoint ckpt{result.model, to_string(Stage::finetuned), seed,
                    {{"data", data.describe()},
                     {"model", model.describe()},
                     {"epochs", epochs},
                     {"anneal", "lambda_t = min(1, t/10), t = 1 at the first epoch"},
                     {"initial_checkpoint", checkpoint}}};
    save_checkpoint(ckpt, join(out, "finetuned.json"));
    write_json_file(join(out, "histogram.json"), histogram_json(uncertainty_histograms(preds)));

    if (distill_epochs > 0) {
      DistillConfig dc;
      dc.epochs = distill_epochs;
      dc.hyper = model.hyper;
      dc.seed = derive_seed(seed, {kStreamShuffle, 1});
      const auto student_init = init_model(model.config_for(pool, derive_seed(seed, {kStreamInit, 1})));
      const auto student = distill(result.model, student_init,
                                   pool.features.gather(pool.ids_in(Split::train_pool)), dc);
      summary["distilled"] = eval_summary(evaluate_split(student.model, pool), pool);
      Checkpoint sckpt{student.model, to_string(Stage::distilled), seed,
                       {{"teacher", join(out, "finetuned.json")}, {"epochs", distill_epochs}}};
      save_checkpoint(sckpt, join(out, "distilled.json"));
    }
    write_json_file(join(out, "eval.json"), summary);
    log << "accuracy " << format_number(summary["accuracy"].get<double>()) << " weighted_f1 "
        << format_number(summary["weighted_f1"].get<double>()) << '\n';
    return kExitOk;
  }
};

// ------------------------------------------------------------------ al-run

struct AlOptions {
  std::vector<std::string> strategies{"uncertainty_topk", "random"};
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  double q = 0.01;
  double max_budget = 0.10;
  int finetune_epochs = 30;
  bool retrain_from_scratch = false;
  bool continue_anneal = false;
  bool verify_queries = false;

  void add_to(CLI::App* app, bool many) {
    if (many) {
      app->add_option("--strategies", strategies, "uncertainty_topk and/or random")
          ->capture_default_str();
      app->add_option("--seeds", seeds)->capture_default_str();
    }
    app->add_option("--q", q, "Label fraction per round")->capture_default_str();
    app->add_option("--max-budget", max_budget, "Stop at this label fraction")
        ->capture_default_str();
    app->add_option("--finetune-epochs", finetune_epochs, "Fine-tuning epochs per round")
        ->capture_default_str();
    app->add_flag("--retrain-from-scratch", retrain_from_scratch,
                  "Fine-tune every round from the initial model");
    app->add_flag("--continue-anneal", continue_anneal,
                  "Keep counting annealing epochs across rounds");
    app->add_flag("--verify-queries", verify_queries,
                  "Check every top-k query against a full sort");
  }

  ALConfig config(QueryStrategy strategy, std::uint64_t seed) const {
    ALConfig al;
    al.strategy = strategy;
    al.budget_fraction_per_round = q;
    al.max_budget_fraction = max_budget;
    al.seed = seed;
    al.finetune.epochs = finetune_epochs;
    al.warm_start = !retrain_from_scratch;
    al.continue_anneal = continue_anneal;
    al.verify_queries = verify_queries;
    al.validate();
    return al;
  }

  nlohmann::json describe() const {
    return {{"strategies", strategies},
            {"seeds", seeds},
            {"q", q},
            {"max_budget", max_budget},
            {"finetune_epochs", finetune_epochs},
            {"warm_start", !retrain_from_scratch},
            {"anneal_mode", continue_anneal ? "continue" : "reset each round"},
            {"verify_queries", verify_queries},
            {"round_target", "min(ceil(r * q * N_pool), N_pool) labels after round r"},
            {"topk_ties", "ascending sample id"},
            {"seed_round", "uniform without replacement from the run seed"}};
  }
};

struct AlRunCommand {
  DataOptions data;
  ModelOptions model;
  PretrainOptions pre;
  AlOptions al;
  std::string out;
  CLI::App* app = nullptr;

  void add_to(CLI::App* sub) {
    app = sub;
    data.add_to(sub);
    model.add_to(sub);
    pre.add_to(sub);
    al.add_to(sub, true);
    sub->add_option("--out", out, "Output directory")->required();
  }

  int run(std::ostream& log) const {
    if (al.seeds.empty()) throw DomainError("al-run: --seeds must not be empty");
    if (al.strategies.empty()) throw DomainError("al-run: --strategies must not be empty");
    std::vector<QueryStrategy> strategies;
    for (const auto& s : al.strategies) {
      if (s != "uncertainty_topk" && s != "random") {
        throw DomainError("al-run: unknown strategy '" + s + "'");
      }
      strategies.push_back(parse_strategy(s));
    }
    for (auto s : strategies) al.config(s, 0);  // validate before the long part

    const auto pool = data.load();
    if (!pool.fully_labeled()) throw DataError("al-run needs ground truth for every sample");
    const auto outdomain = pre.outdomain_pool(pool);
    ensure_dir(out);
    ensure_dir(join(out, "checkpoints"));
    ensure_dir(join(out, "histograms"));
    write_config(join(out, "config.ini"));

    std::vector<RoundRecord> all;
    for (auto seed : al.seeds) {
      const auto config = experiment_config(model, pre, al.config(strategies.front(), seed));
      const auto initial =
          prepare_initial_model(config, pool, outdomain ? &*outdomain : nullptr, seed);
      for (auto strategy : strategies) {
        const auto tag = std::string(to_string(strategy)) + "_seed" + std::to_string(seed);
        auto cfg = al.config(strategy, seed);
        cfg.finetune.hyper = model.hyper;
        const auto result = run_experiment(pool, initial, cfg);
        for (const auto& r : result.history) {
          log << tag << " round " << r.round << " labels " << format_number(r.labels_fraction)
              << " accuracy " << format_number(r.accuracy) << '\n';
        }
        all.insert(all.end(), result.history.begin(), result.history.end());
        auto hist = histogram_json(uncertainty_histograms(result.final_eval));
        hist["strategy"] = to_string(strategy);
        hist["seed"] = seed;
        hist["labels_fraction"] = result.history.back().labels_fraction;
        write_json_file(join(out, "histograms/final_" + tag + ".json"), hist);
        save_checkpoint({result.final_model, to_string(Stage::finetuned), seed,
                         {{"strategy", to_string(strategy)},
                          {"labels_fraction", result.history.back().labels_fraction}}},
                        join(out, "checkpoints/final_" + tag + ".json"));
      }
    }
    write_round_csv(join(out, "rounds.csv"), all);
    write_queried_sidecar(join(out, "queried.jsonl"), all);
    write_json_file(join(out, "metadata.json"), metadata(pool));
    log << "wrote " << join(out, "rounds.csv") << '\n';
    return kExitOk;
  }

  void write_config(const std::string& path) const {
    std::ofstream f(path);
    if (!f) throw DataError("cannot write '" + path + "'");
    f << "# Re-run with: uaal al-run --config " << path << " --out <dir>\n";
    f << "[al-run]\n" << app->config_to_str(true, false);
  }

  nlohmann::json metadata(const PoolDataset& pool) const {
    return {{"metadata_version", kMetadataVersion},
            {"csv_schema_version", kCsvSchemaVersion},
            {"csv_header", kRoundCsvHeader},
            {"command", "al-run"},
            {"data", data.describe()},
            {"pool",
             {{"num_classes", pool.num_classes},
              {"dim", pool.dim()},
              {"train_pool", pool.ids_in(Split::train_pool).size()},
              {"eval", pool.ids_in(Split::eval).size()},
              {"generator", pool.generator}}},
            {"model", model.describe()},
            {"pretrain", pre.describe()},
            {"active_learning", al.describe()},
            {"finetune_loss",
             {{"data_term", "closed-form expected squared error under the Dirichlet"},
              {"regulariser", "KL to the uniform Dirichlet after removing true-class evidence"},
              {"anneal", "lambda_t = min(1, t/10)"}}},
            {"seed_derivation", "splitmix64 over (run seed, stream tag, index)"},
            {"histogram_bins", 20},
            {"config_file", "config.ini"}};
  }
};

// ------------------------------------------------------------------ report

struct ReportCommand {
  std::string run_dir;
  std::string out;

  void add_to(CLI::App* app) {
    app->add_option("--run", run_dir, "Directory written by al-run")->required();
    app->add_option("--out", out, "Also write report.txt here");
  }

  static std::string render(const std::vector<RoundRecord>& records) {
    std::ostringstream os;
    const auto summary = aggregate_by_fraction(records);
    std::map<std::string, std::map<std::size_t, std::size_t>> rows_per_run;
    std::set<std::string> strategies;
    std::size_t max_rounds = 0;
    for (const auto& r : records) {
      strategies.insert(r.strategy);
      max_rounds = std::max(max_rounds, ++rows_per_run[r.strategy][r.seed]);
    }
    for (const auto& [strategy, runs] : rows_per_run) {
      for (const auto& [seed, n] : runs) {
        if (n < max_rounds) {
          os << "warning: " << strategy << " seed " << seed << " is incomplete (" << n << " of "
             << max_rounds << " rounds)\n";
        }
      }
    }
    for (const char* s : {"uncertainty_topk", "random"}) {
      if (!strategies.count(s)) os << "warning: strategy " << s << " missing; partial report\n";
    }
    os << "strategy,labels_fraction,runs,mean_accuracy,std_accuracy,mean_weighted_f1,std_weighted_f1\n";
    for (const auto& s : summary) {
      os << s.strategy << ',' << format_number(s.labels_fraction) << ',' << s.runs << ','
         << std::fixed << std::setprecision(4) << s.mean_accuracy << ',' << s.std_accuracy << ','
         << s.mean_f1 << ',' << s.std_f1 << std::defaultfloat << '\n';
    }
    if (strategies.count("uncertainty_topk") && strategies.count("random")) {
      std::map<double, double> topk, random;
      for (const auto& s : summary) {
        (s.strategy == "random" ? random : topk)[s.labels_fraction] = s.mean_accuracy;
      }
      std::size_t wins = 0, compared = 0;
      for (const auto& [fraction, acc] : topk) {
        if (fraction < 0.02 - 1e-9 || !random.count(fraction)) continue;
        const bool ok = acc >= random[fraction];
        wins += ok;
        ++compared;
        os << "fraction " << format_number(fraction) << ": uncertainty_topk "
           << (ok ? ">=" : "<") << " random\n";
      }
      os << "uncertainty_topk >= random at " << wins << " of " << compared
         << " fractions from 0.02\n";
    }
    return os.str();
  }

  int run(std::ostream& log) const {
    const auto text = render(read_round_csv(join(run_dir, "rounds.csv")));
    log << text;
    if (!out.empty()) {
      ensure_dir(out);
      std::ofstream f(join(out, "report.txt"));
      if (!f) throw DataError("cannot write report");
      f << text;
    }
    return kExitOk;
  }
};

// ------------------------------------------------------- export-embeddings

struct ExportCommand {
  std::string checkpoint;
  DataOptions data;
  std::string out;

  void add_to(CLI::App* app) {
    app->add_option("--checkpoint", checkpoint)->required();
    data.add_to(app);
    app->add_option("--out", out, "Output directory")->required();
  }

  int run(std::ostream& log) const {
    const auto model = load_checkpoint(checkpoint).model;
    const auto pool = data.load();
    if (model.config().input_dim != pool.dim()) {
      throw DataError("checkpoint expects " + std::to_string(model.config().input_dim) +
                      " features, dataset has " + std::to_string(pool.dim()));
    }
    if (model.config().num_classes != pool.num_classes) {
      throw DataError("checkpoint and dataset disagree on the number of classes");
    }
    ensure_dir(out);
    const auto path = join(out, "embeddings.csv");
    std::ofstream f(path);
    if (!f) throw DataError("cannot write '" + path + "'");
    f << "id,split,label,predicted,uncertainty";
    for (std::size_t d = 0; d < model.config().embedding_dim; ++d) f << ",e" << d;
    f << '\n';
    for (std::size_t id = 0; id < pool.size(); ++id) {
      const auto o = forward(model, pool.features.row(id));
      const auto op = opinion_from_evidence(o.evidence);
      f << id << ',' << to_string(pool.splits[id]) << ','
        << (pool.labels[id] ? std::to_string(*pool.labels[id]) : std::string()) << ','
        << predicted_class_of(op) << ',' << format_number(op.uncertainty);
      for (double e : o.embedding) f << ',' << format_number(e);
      f << '\n';
    }
    log << "wrote " << path << '\n';
    return kExitOk;
  }
};

// ------------------------------------------------------------------- serve

inline AnnotationService* g_serving = nullptr;

inline void stop_serving(int) {
  if (g_serving) g_serving->stop();
}

struct ServeCommand {
  DataOptions data;
  ModelOptions model;
  PretrainOptions pre;
  AlOptions al;
  std::string strategy = "uncertainty_topk";
  std::uint64_t seed = 1;
  std::string host = "127.0.0.1";
  int port = 8080;
  std::string out;

  void add_to(CLI::App* app) {
    data.add_to(app);
    model.add_to(app);
    pre.add_to(app);
    al.add_to(app, false);
    app->add_option("--strategy", strategy)
        ->capture_default_str()
        ->check(CLI::IsMember({"uncertainty_topk", "random"}));
    app->add_option("--seed", seed, "Run seed")->capture_default_str();
    app->add_option("--host", host)->capture_default_str();
    app->add_option("--port", port)->capture_default_str();
    app->add_option("--out", out, "Write rounds.csv here after every round");
  }

  int run(std::ostream& log) const {
    const auto pool = data.load();
    const auto outdomain = pre.outdomain_pool(pool);
    auto cfg = al.config(parse_strategy(strategy), seed);
    const auto config = experiment_config(model, pre, cfg);
    auto initial = prepare_initial_model(config, pool, outdomain ? &*outdomain : nullptr, seed);
    AnnotationService service;
    if (!out.empty()) {
      ensure_dir(out);
      service.on_round_complete([dir = out](const ActiveLearner& l) {
        write_round_csv(join(dir, "rounds.csv"), l.state().history);
        write_queried_sidecar(join(dir, "queried.jsonl"), l.state().history);
      });
    }
    service.attach(std::make_unique<ActiveLearner>(pool, std::move(initial), config.al));
    if (!service.bind(host, port)) throw DataError("cannot bind " + host + ":" + std::to_string(port));
    g_serving = &service;
    std::signal(SIGINT, stop_serving);
    std::signal(SIGTERM, stop_serving);
    log << "serving on http://" << host << ':' << port << '\n' << std::flush;
    service.listen_after_bind();
    g_serving = nullptr;
    return kExitOk;
  }
};

// -------------------------------------------------------------------- main

/// Parses and runs one invocation. Returns the process exit code.
inline int run(int argc, const char* const* argv, std::ostream& log = std::cout,
               std::ostream& err = std::cerr) {
  CLI::App app{"Uncertainty-aware active learning on evidential classifiers"};
  app.set_config("--config", "", "INI file with one [subcommand] section; flags win");
  app.fallthrough();
  app.require_subcommand(1);

  GenerateCommand generate;
  PretrainCommand pretrain;
  FinetuneCommand finetune;
  AlRunCommand al_run;
  ReportCommand report;
  ExportCommand export_embeddings;
  ServeCommand serve;
  auto* generate_app = app.add_subcommand("generate", "Write a synthetic pool dataset");
  auto* pretrain_app = app.add_subcommand("pretrain", "Contrastive pre-training");
  auto* finetune_app = app.add_subcommand("finetune", "Evidential fine-tuning on all pool labels");
  auto* al_app = app.add_subcommand("al-run", "Active-learning experiment over seeds and strategies");
  auto* report_app = app.add_subcommand("report", "Summarise an al-run directory");
  auto* export_app = app.add_subcommand("export-embeddings", "Per-sample embeddings and uncertainty");
  auto* serve_app = app.add_subcommand("serve", "Annotation service for a live run");
  generate.add_to(generate_app);
  pretrain.add_to(pretrain_app);
  finetune.add_to(finetune_app);
  al_run.add_to(al_app);
  report.add_to(report_app);
  export_embeddings.add_to(export_app);
  serve.add_to(serve_app);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, log, err);
    return code == 0 ? kExitOk : kExitUsage;
  }
  try {
    if (*generate_app) return generate.run(log);
    if (*pretrain_app) return pretrain.run(log);
    if (*finetune_app) return finetune.run(log);
    if (*al_app) return al_run.run(log);
    if (*report_app) return report.run(log);
    if (*export_app) return export_embeddings.run(log);
    if (*serve_app) return serve.run(log);
  } catch (const NumericError& e) {
    err << "numeric failure: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const DomainError& e) {
    err << "invalid arguments: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitData;
  }
  return kExitUsage;
}

inline int run(const std::vector<std::string>& args, std::ostream& log = std::cout,
               std::ostream& err = std::cerr) {
  std::vector<const char*> argv{"uaal"};
  for (const auto& a : args) argv.push_back(a.c_str());
  return run(static_cast<int>(argv.size()), argv.data(), log, err);
}

}  // namespace uaal::cli
