// Copyright 2026 The gdrift Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Command-line front end: gen-data, train, extract, evaluate, ablate,
// drift-report, consistency and run-all.
//
// A config file (--config) supplies base values in "key = value" form; any
// flag given on the command line overrides it.

#include <cstdint>
#include <cstdio>
#include <iostream>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <CLI11.hpp>

#include "gdrift/error.h"
#include "gdrift/harness.h"
#include "gdrift/io.h"

namespace {

using gdrift::ExperimentConfig;

std::optional<std::string> FindConfigPath(int argc, char** argv) {
  for (int i = 1; i < argc; ++i) {
    const std::string_view a = argv[i];
    if (a == "--config" && i + 1 < argc) return argv[i + 1];
    if (a.starts_with("--config=")) return std::string(a.substr(9));
  }
  return std::nullopt;
}

void AddConfigOptions(CLI::App* app, ExperimentConfig& c,
                      std::optional<std::uint64_t>& seed, std::string& config_path) {
  app->add_option("--config", config_path, "Key-value config file");
  app->add_option("--out", c.out_dir, "Output directory");
  // Applied as soon as it is parsed, so specific seed options still win.
  app->add_option_function<std::uint64_t>(
         "--seed",
         [&c, &seed](std::uint64_t v) {
           seed = v;
           c.SetAllSeeds(v);
         },
         "Sets every seed field")
      ->trigger_on_parse();
  app->add_option("--corpus-seed", c.corpus_seed);
  app->add_option("--n-facts", c.n_facts);
  app->add_option("--n-members", c.n_members);
  app->add_option("--n-nonmembers", c.n_nonmembers);
  app->add_option("--counterfactual-fraction", c.counterfactual_fraction);
  app->add_option("--split-seed", c.split_seed);
  app->add_option("--train-fraction", c.train_fraction);
  app->add_option("--validation-fraction", c.validation_fraction);
  app->add_option("--test-fraction", c.test_fraction);
  app->add_option("--model-seed", c.model_seed);
  app->add_option("--model-dim", c.model_dim);
  app->add_option("--n-layers", c.n_layers);
  app->add_option("--n-heads", c.n_heads);
  app->add_option("--ffn-dim", c.ffn_dim);
  app->add_option("--max-seq-len", c.max_seq_len);
  app->add_option("--train-seed", c.train_seed);
  app->add_option("--epochs", c.epochs);
  app->add_option("--lr", c.lr);
  app->add_option("--loss-threshold", c.loss_threshold);
  app->add_flag("--train-split-only", c.train_split_only,
                "Fine-tune on train-split members only");
  app->add_option("--eta", c.eta, "Gradient-ascent step size");
  app->add_option("--probe-seed", c.probe_seed);
  app->add_option("--k-percents", c.k_percents)->delimiter(',');
  app->add_option("--n-neighbours", c.n_neighbours);
  app->add_option("--neighbour-seed", c.neighbour_seed);
  app->add_option("--lambda-grid", c.lambda_grid)->delimiter(',');
  app->add_option("--cv-folds", c.cv_folds);
  app->add_option("--cv-seed", c.cv_seed);
  app->add_option("--fpr-grid", c.fpr_grid)->delimiter(',');
  app->add_flag("--shuffle-labels", c.shuffle_labels,
                "Null control: permute labels within each split");
  app->add_option("--shuffle-seed", c.shuffle_seed);
  app->add_option("--fact-ids", c.consistency_fact_ids, "Consistency facts")
      ->delimiter(',');
  app->add_option("--consistency-n-facts", c.consistency_n_facts);
  app->add_option("--k", c.consistency_k, "Paraphrases per fact");
}

void PrintEval(const gdrift::EvalReport& report) {
  std::printf("%-14s %8s %8s\n", "attack", "auc", "raw_auc");
  for (const auto& m : report.attacks) {
    std::printf("%-14s %8.4f %8.4f\n", m.attack.c_str(), m.auc, m.raw_auc);
  }
}

}  // namespace

int main(int argc, char** argv) {
  ExperimentConfig config;
  try {
    if (auto path = FindConfigPath(argc, argv)) {
      config = gdrift::ConfigFromText(gdrift::ReadFile(*path));
    }
  } catch (const gdrift::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }

  CLI::App app{"White-box membership-inference auditing with G-Drift"};
  app.require_subcommand(1);
  std::optional<std::uint64_t> seed;
  std::string config_path;
  bool resume = false;

  struct Sub {
    const char* name;
    const char* help;
  };
  const std::vector<Sub> subs = {
      {"gen-data", "Generate the synthetic member/non-member dataset"},
      {"train", "Fine-tune the model on member samples"},
      {"extract", "Compute G-Drift features and baseline scores"},
      {"evaluate", "Fit classifiers and report per-attack metrics"},
      {"ablate", "Feature-set ablation table"},
      {"drift-report", "Per-class drift statistics and CDF data"},
      {"consistency", "Paraphrase drift consistency table"},
      {"run-all", "Run every stage in order"},
  };
  std::vector<CLI::App*> cmds;
  for (const Sub& s : subs) {
    CLI::App* cmd = app.add_subcommand(s.name, s.help);
    AddConfigOptions(cmd, config, seed, config_path);
    cmds.push_back(cmd);
  }
  cmds[1]->add_flag("--resume", resume, "Continue from the existing checkpoint");
  cmds.back()->get_option("--seed")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    const std::string name = app.get_subcommands().front()->get_name();
    std::cerr << "config " << gdrift::ConfigHash(config) << "\n";
    if (name == "gen-data") {
      const auto r = gdrift::GenData(config);
      std::printf("samples %d (train %d, validation %d, test %d), vocab %d\n",
                  r.n_samples, r.split_sizes[0], r.split_sizes[1], r.split_sizes[2],
                  r.vocab_size);
    } else if (name == "train") {
      const auto r = gdrift::TrainStage(config, resume);
      std::printf("examples %d, non-member examples %d, final loss %.6f, %s\n",
                  r.n_examples, r.n_nonmember_examples, r.final_loss,
                  r.success ? "below threshold" : "ABOVE threshold");
    } else if (name == "extract") {
      const auto r = gdrift::Extract(config);
      std::printf("samples %d, checksum %s unchanged, max projection residual %.3g\n",
                  r.n_samples, r.checksum_after.c_str(), r.max_projection_residual);
    } else if (name == "evaluate") {
      PrintEval(gdrift::Evaluate(config));
    } else if (name == "ablate") {
      for (const auto& row : gdrift::Ablate(config)) {
        std::printf("%-26s %.4f\n", row.name.c_str(), row.auc);
      }
    } else if (name == "drift-report") {
      std::cout << gdrift::FormatDriftReport(gdrift::MakeDriftReport(config));
    } else if (name == "consistency") {
      const auto r = gdrift::Consistency(config);
      std::printf("facts %zu, mean std |d alpha| member %.6g, non-member %.6g\n",
                  r.facts.size(), r.mean_member_std, r.mean_nonmember_std);
    } else if (name == "run-all") {
      PrintEval(gdrift::RunAll(config));
    }
  } catch (const gdrift::InputError& e) {
    std::cerr << "input error: " << e.what() << "\n";
    return 2;
  } catch (const gdrift::IntegrityError& e) {
    std::cerr << "integrity error: " << e.what() << "\n";
    return 3;
  } catch (const gdrift::TrainingError& e) {
    std::cerr << "training error (epoch " << e.epoch() << "): " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
