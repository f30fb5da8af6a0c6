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

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "alignrec/alignment.hpp"
#include "alignrec/data.hpp"
#include "alignrec/eval.hpp"
#include "alignrec/features.hpp"
#include "alignrec/solvers.hpp"

namespace alignrec {

/// Mixing-weight grid: either explicit points, or the cross-product of
/// `first_values` over every attribute and `second_values` over every
/// attribute pair (the all-zero point is dropped).
struct MuGrid {
  std::vector<MixCoefficients> points;
  std::vector<double> first_values{1.0};
  std::vector<double> second_values{0.0};

  std::vector<MixCoefficients> expand(std::size_t attributes) const;
};

struct ExperimentConfig {
  std::filesystem::path source;  // file the config was read from

  // data
  std::filesystem::path interactions;
  TableFormat format = TableFormat::csv;
  double binarize_threshold = 0.0;

  // split
  std::string protocol = "cold";  // "cold" or "warm"
  std::uint64_t seed = 0;
  ColdSplitOptions cold;
  WarmSplitOptions warm;
  std::size_t validation_negatives = 100;
  std::optional<std::filesystem::path> split_dir;  // use a saved split

  std::vector<AttributeSpec> attributes;

  // alignment grids
  std::vector<double> deltas{20.0};
  std::vector<double> alphas{1.0};
  std::vector<double> betas{100.0};
  double percentile = 10.0;
  DecayKind decay = DecayKind::step_linear;
  MuGrid mu;

  // solver grids
  SolverKind solver = SolverKind::ease;
  std::vector<double> lambda0s{0.0};
  std::vector<double> lambda1s{1.0};
  std::vector<double> w1s{1.0};
  std::vector<double> gamma1s{0.0};

  // evaluation
  std::vector<std::size_t> ks{10};
  std::vector<Scenario> scenarios{Scenario::cold};
  Scenario selection = Scenario::cold;
  bool with_ci = true;
  BootstrapOptions bootstrap;
  bool baseline = true;

  // output and resources
  std::filesystem::path output = "alignrec-out";
  std::size_t top_k = 0;  // model persistence, 0 = dense
  std::size_t workers = 0;  // 0 = ALIGNREC_WORKERS or 1
  std::size_t memory_budget_bytes = kDefaultMemoryBudget;

  /// Parses JSON text. Relative paths resolve against `base_dir`.
  /// Accepts either a config or a run manifest (its "config" member).
  static ExperimentConfig from_json(const std::string& text, const std::filesystem::path& base_dir);
  /// Reads and validates a config file. Throws ConfigError.
  static ExperimentConfig load(const std::filesystem::path& path);

  /// Checks value ranges, grid sizes and that referenced files exist.
  void validate() const;

  /// JSON form with absolute paths. Worker count and output directory
  /// are left out so the text does not depend on where a run happened.
  std::string to_json() const;
};

/// One hyperparameter assignment, in declaration order.
using GridPoint = std::vector<std::pair<std::string, double>>;

double grid_value(const GridPoint& point, const std::string& name);

struct ValidationScore {
  double ndcg = 0.0;
  double hr = 0.0;
};

struct GridTraceEntry {
  GridPoint point;
  std::optional<ValidationScore> score;  // empty when the point failed
  std::string error;
  double wall_seconds = 0.0;
};

struct GridSearchResult {
  std::size_t best = 0;
  std::vector<GridTraceEntry> trace;

  const GridPoint& best_point() const { return trace.at(best).point; }
  /// CSV with one row per point: parameters, ndcg@10, hr@10, status and,
  /// optionally, wall time.
  std::string trace_csv(bool with_wall_time = true) const;
};

/// Cross-product of named value lists, earlier names varying slowest.
std::vector<GridPoint> cross_product(
    const std::vector<std::pair<std::string, std::vector<double>>>& axes);

/// Evaluates every point (in parallel up to `workers`) and picks the
/// highest ndcg, then highest hr, then the earliest point. Library errors
/// at a point are recorded in the trace; if every point fails a
/// NumericalError lists them all.
GridSearchResult grid_search(const std::vector<GridPoint>& grid,
                             const std::function<ValidationScore(const GridPoint&)>& fit_eval,
                             std::size_t workers = 1);

/// Baseline-vs-aligned table for reports of the same scenario: one column
/// per metric, one row per report, plus a lift row when given two.
std::string lift_table(const std::vector<std::pair<std::string, EvalReport>>& rows);

/// "+50.0%", "-12.5%", "0.0%", or "n/a" when the baseline is zero.
std::string format_lift(double baseline, double value);

/// Outcome of a pipeline run, as written to the output directory.
struct ExperimentResult {
  std::vector<EvalReport> reports;
  std::vector<EvalReport> baseline_reports;
  GridPoint selected;
  MixCoefficients mu;
  std::string summary;  // lift tables
};

// Pipeline verbs. Each writes under cfg.output; errors are rethrown with
// the stage name and config path, leaving an INCOMPLETE marker.
void run_split(const ExperimentConfig& cfg);
void run_featurize(const ExperimentConfig& cfg);
/// Split (reused if present), features, mixing fit, grid search and
/// final fit; writes model.bin, trace.csv and manifest.json.
void run_fit(const ExperimentConfig& cfg);
/// Test-set reports for a model written by run_fit.
std::vector<EvalReport> run_evaluate(const ExperimentConfig& cfg);
/// Everything above plus the alpha = 0 baseline and lift summary.
ExperimentResult run_experiment(const ExperimentConfig& cfg);

/// Lift tables for the reports found in an output directory.
std::string report_directory(const std::filesystem::path& output);
/// Lift table for one or two report files (baseline first).
std::string report_files(const std::vector<std::filesystem::path>& files);

}  // namespace alignrec
