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
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "alignrec/data.hpp"
#include "alignrec/linalg.hpp"

namespace alignrec {

/// A user's candidates in descending score order (ties by ascending item
/// index). May be a prefix of the full ranking; metrics only read the
/// first k positions.
struct RankedList {
  std::size_t user = 0;
  std::vector<std::size_t> ranked;
  std::vector<std::size_t> relevant;
};

/// Ranks `candidates` by score, dropping -inf entries (masked items).
/// Keeps at most `depth` items.
std::vector<std::size_t> rank_candidates(std::span<const double> scores,
                                         std::span<const std::size_t> candidates,
                                         std::size_t depth);

struct ConfidenceInterval {
  double low = 0.0;
  double high = 0.0;
  double level = 0.95;
};

struct MetricResult {
  std::string name;  // "hr" or "ndcg"
  std::size_t k = 0;
  std::vector<std::size_t> users;
  std::vector<double> per_user;
  double mean = 0.0;
  std::optional<ConfidenceInterval> ci;

  std::string label() const { return name + "@" + std::to_string(k); }
};

/// hits in top k / min(k, |I_u|), averaged over users with a nonempty
/// relevant set (others are skipped with a warning).
MetricResult hr_at_k(std::span<const RankedList> lists, std::size_t k);

/// DCG of hits in the top k over the ideal DCG of min(k, |I_u|) hits.
MetricResult ndcg_at_k(std::span<const RankedList> lists, std::size_t k);

struct BootstrapOptions {
  std::size_t resamples = 500;
  double fraction = 0.20;
  double level = 0.95;
};

/// Percentile interval of the means of `resamples` with-replacement
/// subsamples of ceil(fraction * n) users. Throws ArgumentError with fewer
/// than 5 users.
ConfidenceInterval bootstrap_ci(std::span<const double> per_user_values, std::uint64_t seed,
                                const BootstrapOptions& opts = {});

enum class Scenario { cold, warm, all, leave_one_out };
enum class Stage { validation, test };

Scenario parse_scenario(const std::string& name);
std::string to_string(Scenario s);
std::string to_string(Stage s);

/// Produces score rows (|users| x |I|) for the given user rows.
using ScoreFunction = std::function<DenseMatrix(std::span<const std::size_t> users)>;

struct EvalOptions {
  std::vector<std::size_t> ks{10};
  bool with_ci = true;
  BootstrapOptions bootstrap;
  std::uint64_t seed = 0;
  std::size_t batch_users = 512;
};

struct EvalReport {
  std::string scenario;
  std::string stage;
  std::size_t num_users = 0;
  std::size_t num_interactions = 0;
  std::size_t num_candidates = 0;
  std::vector<MetricResult> metrics;

  /// Throws ArgumentError if the metric was not computed.
  const MetricResult& metric(const std::string& name, std::size_t k) const;

  std::string to_json() const;
  std::string to_text() const;
  /// Reads the aggregate fields written by to_json (no per-user values).
  static EvalReport from_json(const std::string& text);
};

/// Cold-split scenarios: cold (cold items only), warm (warm items only)
/// and all (full catalog). Training positives are always masked.
EvalReport evaluate_scenario(const ScoreFunction& scores, const ColdSplit& split, Scenario scenario,
                             Stage stage, const EvalOptions& opts);

/// Leave-one-out: held-out positive ranked against its sampled negatives.
EvalReport evaluate_scenario(const ScoreFunction& scores, const WarmSplit& split,
                             const EvalOptions& opts, Stage stage = Stage::test);

}  // namespace alignrec
