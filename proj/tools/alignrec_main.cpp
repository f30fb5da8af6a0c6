// Copyright 2026 The alignrec Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//   http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// alignrec: command-line experiment runner.
//
//   alignrec run --config exp.json [--seed N] [--workers N] [--output DIR]
//   alignrec split|featurize|fit|evaluate --config exp.json ...
//   alignrec report --output DIR | alignrec report base.json aligned.json
//
// Exit codes: 0 success, 2 config error, 3 data error, 4 numerical error.

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "alignrec/experiment.hpp"

namespace {

namespace fs = std::filesystem;

constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitNumerical = 4;

struct CommonFlags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> workers;
  std::string output;
};

void add_common(CLI::App* cmd, CommonFlags& flags) {
  cmd->add_option("--config", flags.config, "Experiment config (JSON) or run manifest")->required();
  cmd->add_option("--seed", flags.seed, "Override the split seed");
  cmd->add_option("--workers", flags.workers, "Worker threads (default: ALIGNREC_WORKERS or 1)");
  cmd->add_option("--output", flags.output, "Output directory");
}

alignrec::ExperimentConfig load(const CommonFlags& flags) {
  alignrec::ExperimentConfig cfg = alignrec::ExperimentConfig::load(flags.config);
  if (flags.seed) cfg.seed = *flags.seed;
  if (flags.workers) cfg.workers = *flags.workers;
  if (!flags.output.empty()) cfg.output = fs::absolute(flags.output).lexically_normal();
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Metadata-aligned cold-start recommenders"};
  app.require_subcommand(1);

  CommonFlags flags;
  auto* split = app.add_subcommand("split", "Build and save the train/validation/test split");
  auto* featurize = app.add_subcommand("featurize", "Encode item attributes");
  auto* fit = app.add_subcommand("fit", "Select hyperparameters on validation and fit the model");
  auto* evaluate = app.add_subcommand("evaluate", "Evaluate a fitted model on the test split");
  auto* run = app.add_subcommand("run", "Full pipeline with baseline and lift summary");
  for (auto* cmd : {split, featurize, fit, evaluate, run}) add_common(cmd, flags);

  auto* report = app.add_subcommand("report", "Print lift tables for saved reports");
  std::vector<std::string> report_paths;
  std::string report_dir;
  report->add_option("reports", report_paths, "One or two report JSON files (baseline first)");
  report->add_option("--output", report_dir, "Output directory of a run");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (split->parsed()) {
      alignrec::run_split(load(flags));
    } else if (featurize->parsed()) {
      alignrec::run_featurize(load(flags));
    } else if (fit->parsed()) {
      alignrec::run_fit(load(flags));
    } else if (evaluate->parsed()) {
      for (const auto& r : alignrec::run_evaluate(load(flags))) std::cout << r.to_text() << "\n";
    } else if (run->parsed()) {
      std::cout << alignrec::run_experiment(load(flags)).summary;
    } else if (report->parsed()) {
      if (!report_paths.empty()) {
        std::vector<fs::path> files(report_paths.begin(), report_paths.end());
        std::cout << alignrec::report_files(files);
      } else if (!report_dir.empty()) {
        std::cout << alignrec::report_directory(report_dir);
      } else {
        throw alignrec::ConfigError("report: give report files or --output");
      }
    }
  } catch (const alignrec::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const alignrec::DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const alignrec::NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
