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

// Acceptance checks. Prints one PASS / FAIL / SKIP line per criterion and
// exits nonzero if any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <functional>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "alignrec/experiment.hpp"
#include "fixtures.hpp"
#include "json.hpp"
#include "oracles.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace alignrec {
namespace {

enum class Verdict { pass, fail, skip };

struct Outcome {
  Verdict verdict;
  std::string detail;
};

oracle::Mat to_mat(const DenseMatrix& d) {
  oracle::Mat m(d.rows(), oracle::Vec(d.cols()));
  for (std::size_t r = 0; r < d.rows(); ++r) {
    for (std::size_t c = 0; c < d.cols(); ++c) m[r][c] = d(r, c);
  }
  return m;
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), f, v);
  return buf;
}

// 1. EASE against the textbook inverse-based formula.
Outcome ease_oracle() {
  Rng rng(101);
  double worst = 0.0;
  double worst_diag = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t items = 2 + rng.below(29);
    const std::size_t users = 5 + rng.below(56);
    const double density = 0.05 + 0.4 * rng.uniform();
    const SparseMatrix x = testing::random_clicks(users, items, density, 1000 + trial);
    EaseConfig cfg;
    cfg.lambda1 = 0.1 + 20.0 * rng.uniform();
    const ItemModel m = fit_ease(x, nullptr, AlignmentMatrix::zero(users, items), cfg);
    const oracle::Mat want = oracle::textbook_ease(to_mat(x.to_dense()), cfg.lambda1);
    for (std::size_t i = 0; i < items; ++i) {
      worst_diag = std::max(worst_diag, std::abs(m.theta(i, i)));
      for (std::size_t j = 0; j < items; ++j) worst = std::max(worst, std::abs(m.theta(i, j) - want[i][j]));
    }
  }
  const bool ok = worst <= 1e-8 && worst_diag <= 1e-10;
  return {ok ? Verdict::pass : Verdict::fail,
          "20 instances, max |diff| " + fmt("%.2e", worst) + ", max |diag| " + fmt("%.2e", worst_diag)};
}

// 2. mSLIM against dense weighted normal equations, half of the instances aligned.
Outcome mslim_oracle() {
  Rng rng(202);
  double worst = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t items = 2 + rng.below(14);
    const std::size_t users = 8 + rng.below(40);
    auto x = std::make_shared<const SparseMatrix>(
        testing::random_clicks(users, items, 0.1 + 0.4 * rng.uniform(), 2000 + trial));
    MslimConfig cfg;
    cfg.w0 = 1.0;
    cfg.w1 = 0.05 + 0.9 * rng.uniform();
    cfg.lambda1 = 0.1 + 5.0 * rng.uniform();
    cfg.gamma1 = rng.below(2) ? 0.0 : 10.0 * rng.uniform();
    AlignmentMatrix b = AlignmentMatrix::zero(users, items);
    if (trial % 2 == 1) {
      DenseMatrix g(items, items);
      for (std::size_t i = 0; i < items; ++i) {
        for (std::size_t j = 0; j <= i; ++j) g(i, j) = g(j, i) = i == j ? 1.0 : rng.uniform();
      }
      AlignmentConfig acfg;
      acfg.alpha = 0.5 + rng.uniform();
      acfg.beta = 5.0;
      acfg.percentile = 50.0;
      b = align(x, std::make_shared<const DenseMatrix>(std::move(g)), acfg);
    }
    const ItemModel m = fit_mslim(*x, b, cfg);
    const oracle::Mat xd = to_mat(x->to_dense());
    const oracle::Mat bd = b.is_zero() ? oracle::Mat{} : to_mat(b.materialize());
    for (std::size_t i = 0; i < items; ++i) {
      const oracle::Vec col = oracle::weighted_ridge_column(xd, bd, i, cfg.w0, cfg.w1, cfg.lambda1, cfg.gamma1);
      for (std::size_t r = 0; r < items; ++r) worst = std::max(worst, std::abs(m.theta(r, i) - col[r]));
    }
  }
  return {worst <= 1e-7 ? Verdict::pass : Verdict::fail, "20 instances, max |diff| " + fmt("%.2e", worst)};
}

// 3. Ranking metrics against rank enumeration.
Outcome metric_oracle() {
  Rng rng(303);
  std::size_t mismatches = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 2 + rng.below(49);
    std::vector<double> scores(n);
    for (double& s : scores) s = static_cast<double>(rng.below(8));
    std::vector<std::size_t> candidates;
    for (std::size_t j = 0; j < n; ++j) {
      if (rng.uniform() < 0.85) candidates.push_back(j);
    }
    if (candidates.empty()) candidates.push_back(n - 1);
    std::vector<std::size_t> relevant;
    for (std::size_t c : candidates) {
      if (rng.uniform() < 0.25) relevant.push_back(c);
    }
    if (relevant.empty()) relevant.push_back(candidates[rng.below(candidates.size())]);
    const std::size_t k = 1 + rng.below(15);
    RankedList l;
    l.ranked = rank_candidates(scores, candidates, k);
    l.relevant = relevant;
    const std::vector<RankedList> lists{l};
    const oracle::RankMetrics want = oracle::rank_metrics(scores, candidates, relevant, k);
    if (hr_at_k(lists, k).mean != want.hr || ndcg_at_k(lists, k).mean != want.ndcg) ++mismatches;
  }
  RankedList example;
  example.ranked = {0, 7, 1, 8, 9};
  example.relevant = {0, 1};
  const std::vector<RankedList> ex{example};
  const double v = ndcg_at_k(ex, 10).mean;
  const bool ok = mismatches == 0 && std::abs(v - 0.9197) < 5e-5;
  return {ok ? Verdict::pass : Verdict::fail,
          "200 instances, " + std::to_string(mismatches) + " mismatches, ranks {1,3} ndcg@10 = " + fmt("%.4f", v)};
}

json planted_config(const testing::PlantedFiles& files, const fs::path& out) {
  return json{
      {"data", {{"interactions", files.interactions.string()}}},
      {"split", {{"protocol", "cold"}, {"seed", 7}}},
      {"attributes",
       json::array({{{"name", "genre"}, {"kind", "categorical"}, {"path", files.genre.string()}},
                    {{"name", "tags"}, {"kind", "text"}, {"path", files.tags.string()}}})},
      {"alignment", {{"delta", {1.0, 20.0}}, {"alpha", {0.0, 1.0, 10.0, 100.0}}, {"beta", {10.0, 100.0}}}},
      {"solver", {{"name", "ease"}, {"lambda1", {1.0, 10.0, 100.0}}}},
      {"eval", {{"ks", {10}}, {"scenarios", {"cold", "all"}}, {"with_ci", false}}},
      {"output", out.string()}};
}

ExperimentConfig config_from(const json& j, const fs::path& path) {
  testing::write_file(path, j.dump(2));
  return ExperimentConfig::load(path);
}

// Expected hr@k of a uniformly random ranking of the candidate pool.
double random_hr(const EvalReport& r, const ColdSplit& split, bool cold_only, std::size_t k) {
  std::map<std::size_t, std::size_t> relevant;
  for (const auto& p : split.cold_test) ++relevant[p.user];
  if (!cold_only) {
    for (const auto& p : split.warm_test) ++relevant[p.user];
  }
  // Each relevant item lands in the top k with probability k / pool (pool net of masked train items).
  double sum = 0.0;
  for (const auto& [u, n] : relevant) {
    const double pool = static_cast<double>(r.num_candidates - (cold_only ? 0 : split.train.x.row(u).size()));
    const double kk = static_cast<double>(std::min<std::size_t>(k, static_cast<std::size_t>(pool)));
    sum += static_cast<double>(n) * kk / pool / static_cast<double>(std::min(k, n));
  }
  return sum / static_cast<double>(relevant.size());
}

// 4. Planted cold-start lift.
Outcome planted_lift(const fs::path& root) {
  testing::PlantedOptions opts;  // 2,000 users, 400 items, 20 topics
  opts.seed = 4;
  const testing::PlantedFiles files = testing::write_planted(opts, root / "planted");
  const ExperimentConfig cfg = config_from(planted_config(files, root / "planted-ease"), root / "planted-ease.json");
  const ExperimentResult res = run_experiment(cfg);
  const double aligned = res.reports.at(0).metric("ndcg", 10).mean;
  const double base = res.baseline_reports.at(0).metric("ndcg", 10).mean;
  const double lift = base > 0.0 ? aligned / base : std::numeric_limits<double>::infinity();
  const bool lift_ok = aligned >= 1.5 * base;

  // itemknn on the same split and features.
  json knn = planted_config(files, root / "planted-knn");
  knn["solver"] = {{"name", "itemknn"}};
  knn["split"]["path"] = (cfg.output / "split").string();
  knn["alignment"] = {{"delta", {1.0, 20.0}}};
  const ExperimentResult knn_res = run_experiment(config_from(knn, root / "planted-knn.json"));
  const ColdSplit split = load_cold_split(cfg.output / "split");
  const EvalReport& knn_cold = knn_res.reports.at(0);
  const double knn_hr = knn_cold.metric("hr", 10).mean;
  const double rand_hr = random_hr(knn_cold, split, true, 10);
  const double ratio = knn_hr / rand_hr;
  const bool knn_ok = ratio >= 10.0;
  const double all_ratio =
      knn_res.reports.at(1).metric("hr", 10).mean / random_hr(knn_res.reports.at(1), split, false, 10);

  std::string detail = "cold ndcg@10 aligned " + fmt("%.4f", aligned) + " vs alpha=0 " + fmt("%.4f", base) +
                       " (" + fmt("%.2f", lift) + "x, need 1.5x); itemknn cold hr@10 " + fmt("%.4f", knn_hr) +
                       " vs random " + fmt("%.4f", rand_hr) + " (" + fmt("%.2f", ratio) +
                       "x, need 10x; full-catalog ratio " + fmt("%.1f", all_ratio) + "x)";
  return {lift_ok && knn_ok ? Verdict::pass : Verdict::fail, detail};
}

// 5. Reference cold split, only when a prepared config is supplied.
Outcome reference_split() {
  const char* path = std::getenv("ALIGNREC_HETREC_CONFIG");
  if (path == nullptr || *path == '\0') {
    return {Verdict::skip, "set ALIGNREC_HETREC_CONFIG to a cold-split experiment config to run"};
  }
  const ExperimentResult res = run_experiment(ExperimentConfig::load(path));
  const auto it = std::find_if(res.reports.begin(), res.reports.end(),
                               [](const EvalReport& r) { return r.scenario == "cold"; });
  if (it == res.reports.end()) return {Verdict::fail, "config does not evaluate the cold scenario"};
  const double hr = it->metric("hr", 10).mean;
  const double target = 0.2928;
  const bool ok = std::abs(hr - target) <= 0.15 * target;
  return {ok ? Verdict::pass : Verdict::fail,
          "cold hr@10 " + fmt("%.4f", hr) + " vs " + fmt("%.4f", target) + " +-15%"};
}

json warm_config(const fs::path& interactions, const fs::path& out, double w1) {
  return json{{"data", {{"interactions", interactions.string()}}},
              {"split", {{"protocol", "warm"}, {"seed", 5}}},
              {"solver",
               {{"name", "mslim"}, {"w1", w1}, {"lambda1", {1.0, 10.0, 100.0}}, {"gamma1", {0.0, 10.0, 1000.0}}}},
              {"eval", {{"ks", {10}}, {"with_ci", false}}},
              {"output", out.string()}};
}

// 6. Warm leave-one-out sanity for weighted SLIM.
Outcome warm_sanity(const fs::path& root) {
  std::string detail;
  bool changed = false;
  bool beats_popularity = true;
  for (std::uint64_t seed : {21u, 22u, 23u}) {
    testing::PlantedOptions opts;
    opts.users = 600;
    opts.items = 200;
    opts.topics = 8;
    opts.clicks_per_user = 30;
    opts.seed = seed;
    const fs::path dir = root / ("warm-" + std::to_string(seed));
    const testing::PlantedFiles files = testing::write_planted(opts, dir);
    const ExperimentResult full = run_experiment(config_from(warm_config(files.interactions, dir / "w1-1", 1.0), dir / "w1-1.json"));
    const ExperimentResult down =
        run_experiment(config_from(warm_config(files.interactions, dir / "w1-low", 0.2), dir / "w1-low.json"));
    const auto pick = [](const GridPoint& p) {
      return std::make_pair(grid_value(p, "lambda1"), grid_value(p, "gamma1"));
    };
    const bool differs = pick(full.selected) != pick(down.selected);
    changed = changed || differs;

    const WarmSplit split = load_warm_split(dir / "w1-low" / "split");
    const std::vector<double> pop = split.train.x.column_sums();
    ScoreFunction popularity = [&](std::span<const std::size_t> users) {
      DenseMatrix s(users.size(), pop.size());
      for (std::size_t r = 0; r < users.size(); ++r) std::copy(pop.begin(), pop.end(), s.row(r).begin());
      return s;
    };
    EvalOptions eo;
    eo.with_ci = false;
    const double pop_hr = evaluate_scenario(popularity, split, eo).metric("hr", 10).mean;
    const double model_hr = down.reports.at(0).metric("hr", 10).mean;
    beats_popularity = beats_popularity && model_hr > pop_hr;
    detail += "seed " + std::to_string(seed) + ": (l1,g1) w1=1 " + fmt("(%g,", pick(full.selected).first) +
              fmt("%g)", pick(full.selected).second) + " w1=0.2 " + fmt("(%g,", pick(down.selected).first) +
              fmt("%g)", pick(down.selected).second) + " hr@10 " + fmt("%.4f", model_hr) + " vs popularity " +
              fmt("%.4f", pop_hr) + "; ";
  }
  return {changed && beats_popularity ? Verdict::pass : Verdict::fail, detail};
}

std::string trace_without_wall_time(const fs::path& file) {
  std::string out;
  std::string text = testing::read_file(file);
  std::size_t start = 0;
  while (start < text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string::npos) end = text.size();
    const std::string line = text.substr(start, end - start);
    out += line.substr(0, line.rfind(',')) + "\n";
    start = end + 1;
  }
  return out;
}

// Every regular file under dir, keyed by relative path.
std::map<std::string, std::string> snapshot(const fs::path& dir) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    const std::string rel = fs::relative(e.path(), dir).string();
    files[rel] = rel == "trace.csv" ? trace_without_wall_time(e.path()) : testing::read_file(e.path());
  }
  return files;
}

// 7. Determinism across reruns and worker counts.
Outcome determinism(const fs::path& root) {
  testing::PlantedOptions opts;
  opts.users = 500;
  opts.items = 150;
  opts.topics = 10;
  opts.clicks_per_user = 30;
  opts.seed = 9;
  const testing::PlantedFiles files = testing::write_planted(opts, root / "det");
  std::size_t compared = 0;
  std::vector<std::string> diffs;
  const std::vector<std::pair<std::string, json>> pipelines{
      {"cold-ease", planted_config(files, "")},
      {"warm-mslim", warm_config(files.interactions, "", 0.5)}};
  for (const auto& [name, base] : pipelines) {
    std::vector<std::map<std::string, std::string>> runs;
    for (const auto& [tag, workers] : std::vector<std::pair<std::string, int>>{{"a", 1}, {"b", 1}, {"c", 4}}) {
      json j = base;
      j["output"] = (root / "det" / (name + "-" + tag)).string();
      j["workers"] = workers;
      run_experiment(config_from(j, root / "det" / (name + "-" + tag + ".json")));
      runs.push_back(snapshot(root / "det" / (name + "-" + tag)));
    }
    for (std::size_t r = 1; r < runs.size(); ++r) {
      if (runs[r].size() != runs[0].size()) diffs.push_back(name + ": file sets differ");
      for (const auto& [file, bytes] : runs[0]) {
        ++compared;
        const auto it = runs[r].find(file);
        if (it == runs[r].end() || it->second != bytes) diffs.push_back(name + "/" + file);
      }
    }
  }
  std::string detail = std::to_string(compared) + " file comparisons over 2 pipelines x 3 runs (workers 1,1,4)";
  if (!diffs.empty()) {
    detail += "; differing:";
    for (const auto& d : diffs) detail += " " + d;
  }
  return {diffs.empty() ? Verdict::pass : Verdict::fail, detail};
}

// 8. Bootstrap interval coverage.
Outcome bootstrap_coverage() {
  Rng rng(808);
  const double p = 0.3;
  int covered = 0;
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> values(500);
    for (double& v : values) v = rng.uniform() < p ? 1.0 : 0.0;
    const ConfidenceInterval ci = bootstrap_ci(values, derive_seed(77, trial));
    if (ci.low <= p && p <= ci.high) ++covered;
  }
  return {covered >= 180 ? Verdict::pass : Verdict::fail,
          std::to_string(covered) + "/200 intervals cover the true mean (need 180)"};
}

}  // namespace
}  // namespace alignrec

int main() {
  using namespace alignrec;
  const fs::path root = testing::scratch_dir("acceptance");
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"1 ease oracle", ease_oracle},
      {"2 mslim oracle", mslim_oracle},
      {"3 metric oracle", metric_oracle},
      {"4 planted cold-start lift", [&] { return planted_lift(root); }},
      {"5 reference cold split", reference_split},
      {"6 warm leave-one-out sanity", [&] { return warm_sanity(root); }},
      {"7 determinism", [&] { return determinism(root); }},
      {"8 bootstrap coverage", bootstrap_coverage},
  };
  int failures = 0;
  for (const auto& [name, check] : criteria) {
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = check();
    } catch (const std::exception& e) {
      o = {Verdict::fail, std::string("error: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const char* tag = o.verdict == Verdict::pass ? "PASS" : o.verdict == Verdict::fail ? "FAIL" : "SKIP";
    if (o.verdict == Verdict::fail) ++failures;
    std::printf("%s criterion %s: %s [%.1fs]\n", tag, name.c_str(), o.detail.c_str(), secs);
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
