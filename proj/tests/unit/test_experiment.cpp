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

#include <gtest/gtest.h>

#include <sys/wait.h>

#include <algorithm>
#include <chrono>
#include <cstdlib>

#include "alignrec/experiment.hpp"
#include "fixtures.hpp"
#include "json.hpp"

namespace alignrec {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

struct SmokeData {
  fs::path dir;
  testing::PlantedFiles files;
};

const SmokeData& smoke_data() {
  static const SmokeData data = [] {
    testing::PlantedOptions opts;
    opts.users = 100;
    opts.items = 50;
    opts.topics = 5;
    opts.clicks_per_user = 10;
    opts.seed = 3;
    SmokeData d;
    d.dir = testing::scratch_dir("experiment-smoke");
    d.files = testing::write_planted(opts, d.dir);
    return d;
  }();
  return data;
}

json smoke_config(const std::string& output) {
  const SmokeData& d = smoke_data();
  return json{
      {"data", {{"interactions", d.files.interactions.string()}}},
      {"split", {{"protocol", "cold"}, {"seed", 11}}},
      {"attributes",
       json::array({{{"name", "genre"}, {"kind", "categorical"}, {"path", d.files.genre.string()}},
                    {{"name", "tags"}, {"kind", "text"}, {"path", d.files.tags.string()}}})},
      {"alignment", {{"delta", 1.0}, {"alpha", {0.0, 1.0}}, {"beta", 10.0}}},
      {"solver", {{"name", "ease"}, {"lambda1", {1.0, 10.0}}}},
      {"eval", {{"ks", {10}}, {"scenarios", {"cold", "warm", "all"}}, {"bootstrap", {{"resamples", 50}}}}},
      {"output", (d.dir / output).string()}};
}

ExperimentConfig write_and_load(const json& j, const std::string& name) {
  const fs::path p = smoke_data().dir / (name + ".json");
  testing::write_file(p, j.dump(2));
  return ExperimentConfig::load(p);
}

TEST(Experiment, SmokeRunWritesArtifacts) {
  const auto start = std::chrono::steady_clock::now();
  const ExperimentConfig cfg = write_and_load(smoke_config("run-a"), "smoke-a");
  const ExperimentResult r = run_experiment(cfg);
  const double seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  EXPECT_LT(seconds, 10.0);
  ASSERT_EQ(r.reports.size(), 3u);
  EXPECT_EQ(r.baseline_reports.size(), 3u);
  for (const char* f : {"model.bin", "model.bin.json", "trace.csv", "manifest.json", "summary.txt",
                        "report_cold.json", "report_cold.txt", "report_all.json", "split/split.json",
                        "baseline/report_cold.json"}) {
    EXPECT_TRUE(fs::exists(cfg.output / f)) << f;
  }
  EXPECT_FALSE(fs::exists(cfg.output / "INCOMPLETE"));
  EXPECT_NE(r.summary.find("lift"), std::string::npos);
  const json manifest = json::parse(testing::read_file(cfg.output / "manifest.json"));
  EXPECT_EQ(manifest["format"], "alignrec-manifest");
  EXPECT_EQ(manifest["grid_points"], 4);
  EXPECT_EQ(manifest["seeds"]["split"], 11);
  // Trace has a header plus one row per grid point.
  const std::string trace = testing::read_file(cfg.output / "trace.csv");
  EXPECT_EQ(std::count(trace.begin(), trace.end(), '\n'), 5);
}

TEST(Experiment, RerunIsByteIdentical) {
  const ExperimentConfig a = write_and_load(smoke_config("det-a"), "det-a");
  ExperimentConfig b = write_and_load(smoke_config("det-b"), "det-b");
  b.workers = 3;
  run_experiment(a);
  run_experiment(b);
  for (const char* f : {"model.bin", "model.bin.json", "manifest.json", "summary.txt", "report_cold.json",
                        "report_warm.json", "report_all.json", "baseline/report_cold.json",
                        "split/train.csv", "split/test.csv"}) {
    EXPECT_EQ(testing::read_file(a.output / f), testing::read_file(b.output / f)) << f;
  }
}

TEST(Experiment, ManifestReproducesRun) {
  const ExperimentConfig a = write_and_load(smoke_config("man-a"), "man-a");
  run_experiment(a);
  ExperimentConfig again = ExperimentConfig::load(a.output / "manifest.json");
  again.output = smoke_data().dir / "man-b";
  run_experiment(again);
  const json trace_b = json::parse(testing::read_file(again.output / "manifest.json"));
  EXPECT_EQ(trace_b["grid_points"], 1);
  for (const char* f : {"model.bin", "report_cold.json", "report_all.json"}) {
    EXPECT_EQ(testing::read_file(a.output / f), testing::read_file(again.output / f)) << f;
  }
}

TEST(Experiment, StagedVerbsMatchRun) {
  json j = smoke_config("staged");
  j["alignment"]["alpha"] = 1.0;
  j["solver"]["lambda1"] = 10.0;
  j["baseline"] = false;
  const ExperimentConfig cfg = write_and_load(j, "staged");
  run_split(cfg);
  EXPECT_TRUE(fs::exists(cfg.output / "split" / "split.json"));
  run_featurize(cfg);
  EXPECT_TRUE(fs::exists(cfg.output / "features" / "genre.emb"));
  run_fit(cfg);
  EXPECT_TRUE(fs::exists(cfg.output / "model.bin"));
  const std::vector<EvalReport> reports = run_evaluate(cfg);
  ASSERT_EQ(reports.size(), 3u);

  j["output"] = (smoke_data().dir / "staged-run").string();
  const ExperimentResult whole = run_experiment(write_and_load(j, "staged-run"));
  EXPECT_EQ(reports[0].to_json(), whole.reports[0].to_json());
  EXPECT_NE(report_directory(cfg.output).find("hr@10"), std::string::npos);
}

TEST(ExperimentConfig, ParsingRules) {
  const fs::path base = smoke_data().dir;
  const std::string minimal = R"({"data": {"interactions": "interactions.csv"}, "split": {"seed": 4}})";
  const ExperimentConfig c = ExperimentConfig::from_json(minimal, base);
  EXPECT_EQ(c.interactions, base / "interactions.csv");
  EXPECT_EQ(c.seed, 4u);
  EXPECT_EQ(c.lambda1s, std::vector<double>{1.0});

  EXPECT_THROW(ExperimentConfig::from_json(R"({"split": {}})", base), ConfigError);
  EXPECT_THROW(ExperimentConfig::from_json(R"({"split": {"seed": 1}, "typo": 1})", base), ConfigError);
  EXPECT_THROW(ExperimentConfig::from_json("{not json", base), ConfigError);

  const ExperimentConfig warm =
      ExperimentConfig::from_json(R"({"split": {"seed": 1, "protocol": "warm"}})", base);
  EXPECT_EQ(warm.selection, Scenario::leave_one_out);
  ASSERT_EQ(warm.scenarios.size(), 1u);
  EXPECT_EQ(warm.scenarios[0], Scenario::leave_one_out);

  const ExperimentConfig grid =
      ExperimentConfig::from_json(R"({"split": {"seed": 1}, "solver": {"lambda1": [1, 2, 3]}})", base);
  EXPECT_EQ(grid.lambda1s, (std::vector<double>{1, 2, 3}));
}

TEST(ExperimentConfig, MissingFileFailsBeforeCompute) {
  EXPECT_THROW(ExperimentConfig::load(smoke_data().dir / "nope.json"), ConfigError);
  json j = smoke_config("missing-attr");
  j["attributes"][0]["path"] = (smoke_data().dir / "absent.csv").string();
  const ExperimentConfig cfg = write_and_load(j, "missing-attr");
  EXPECT_THROW(run_experiment(cfg), ConfigError);
  EXPECT_FALSE(fs::exists(cfg.output / "model.bin"));
}

TEST(ExperimentConfig, ToJsonRoundTrips) {
  const ExperimentConfig a = write_and_load(smoke_config("rt"), "rt");
  const ExperimentConfig b = ExperimentConfig::from_json(a.to_json(), "/");
  EXPECT_EQ(a.to_json(), b.to_json());
  EXPECT_EQ(json::parse(a.to_json()).count("workers"), 0u);
}

TEST(MuGrid, ExpansionOrderAndZeroPoint) {
  MuGrid g;
  g.first_values = {0, 1};
  g.second_values = {0};
  const auto points = g.expand(2);
  ASSERT_EQ(points.size(), 3u);
  EXPECT_EQ(points[0], (MixCoefficients{{0, 1}, {0}}));
  EXPECT_EQ(points[1], (MixCoefficients{{1, 0}, {0}}));
  EXPECT_EQ(points[2], (MixCoefficients{{1, 1}, {0}}));
  EXPECT_EQ(g.expand(0).size(), 1u);
  g.first_values = {0};
  EXPECT_THROW(g.expand(1), ConfigError);
}

TEST(GridSearch, SelectionRules) {
  const auto grid = cross_product({{"a", {1, 2}}, {"b", {10, 20}}});
  ASSERT_EQ(grid.size(), 4u);
  EXPECT_EQ(grid_value(grid[1], "a"), 1.0);
  EXPECT_EQ(grid_value(grid[1], "b"), 20.0);

  const std::vector<GridPoint> single{grid[0]};
  EXPECT_EQ(grid_search(single, [](const GridPoint&) { return ValidationScore{0.1, 0.2}; }).best, 0u);

  auto dominant = [](const GridPoint& p) {
    return ValidationScore{grid_value(p, "a") == 2 && grid_value(p, "b") == 10 ? 0.9 : 0.1, 0.5};
  };
  EXPECT_EQ(grid_search(grid, dominant, 3).best, 2u);

  // Equal ndcg: higher hr wins; full tie keeps the earliest point.
  auto hr_break = [](const GridPoint& p) { return ValidationScore{0.3, grid_value(p, "b") / 100}; };
  EXPECT_EQ(grid_search(grid, hr_break).best, 1u);
  EXPECT_EQ(grid_search(grid, [](const GridPoint&) { return ValidationScore{0.3, 0.3}; }).best, 0u);

  auto some_fail = [](const GridPoint& p) {
    if (grid_value(p, "a") == 1) throw SingularityError(0, 0.0, "singular");
    return ValidationScore{0.2, 0.2};
  };
  const GridSearchResult r = grid_search(grid, some_fail, 2);
  EXPECT_EQ(r.best, 2u);
  EXPECT_FALSE(r.trace[0].score.has_value());
  EXPECT_NE(r.trace_csv(false).find("singular"), std::string::npos);

  auto all_fail = [](const GridPoint&) -> ValidationScore { throw SingularityError(0, 0.0, "singular"); };
  EXPECT_THROW(grid_search(grid, all_fail), NumericalError);
}

TEST(Lift, Formatting) {
  EXPECT_EQ(format_lift(0.2, 0.3), "+50.0%");
  EXPECT_EQ(format_lift(0.2, 0.2), "0.0%");
  EXPECT_EQ(format_lift(0.4, 0.3), "-25.0%");
  EXPECT_EQ(format_lift(0.0, 0.3), "n/a");

  EvalReport r;
  MetricResult m;
  m.name = "hr";
  m.k = 10;
  m.mean = 0.2;
  r.metrics.push_back(m);
  const std::string one = lift_table({{"model", r}});
  EXPECT_EQ(one.find("lift"), std::string::npos);
  EvalReport better = r;
  better.metrics[0].mean = 0.3;
  const std::string two = lift_table({{"baseline", r}, {"aligned", better}});
  EXPECT_NE(two.find("+50.0%"), std::string::npos);
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(ALIGNREC_CLI_PATH) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

TEST(Cli, ExitCodes) {
  const fs::path dir = smoke_data().dir;
  EXPECT_EQ(run_cli("run --config " + (dir / "nope.json").string()), 2);
  EXPECT_EQ(run_cli("run"), 2);

  testing::write_file(dir / "bad.csv", "user,item,value\na,x,1\nb,y,zzz\n");
  json bad = smoke_config("cli-bad");
  bad["data"]["interactions"] = (dir / "bad.csv").string();
  testing::write_file(dir / "cli-bad.json", bad.dump());
  EXPECT_EQ(run_cli("split --config " + (dir / "cli-bad.json").string()), 3);

  // Without ridge or alignment every mSLIM column system with a cold item is singular.
  json singular = smoke_config("cli-singular");
  singular["alignment"]["alpha"] = 0.0;
  singular["solver"] = {{"name", "mslim"}, {"lambda1", 0.0}};
  testing::write_file(dir / "cli-singular.json", singular.dump());
  EXPECT_EQ(run_cli("run --config " + (dir / "cli-singular.json").string()), 4);

  testing::write_file(dir / "cli-ok.json", smoke_config("cli-ok").dump());
  EXPECT_EQ(run_cli("run --workers 2 --config " + (dir / "cli-ok.json").string()), 0);
  EXPECT_TRUE(fs::exists(dir / "cli-ok" / "report_cold.json"));
  EXPECT_EQ(run_cli("report --output " + (dir / "cli-ok").string()), 0);
  EXPECT_EQ(run_cli("run --seed 5 --output " + (dir / "cli-seed").string() + " --config " +
                    (dir / "cli-ok.json").string()),
            0);
  const json m = json::parse(testing::read_file(dir / "cli-seed" / "manifest.json"));
  EXPECT_EQ(m["seeds"]["split"], 5);
}

}  // namespace
}  // namespace alignrec
