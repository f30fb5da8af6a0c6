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

#include "alignrec/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <initializer_list>
#include <map>
#include <memory>
#include <set>
#include <sstream>

#include "json.hpp"
#include "table_io.hpp"

namespace alignrec {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

namespace {

constexpr const char* kManifestFormat = "alignrec-manifest";
constexpr int kManifestVersion = 1;

// ---------------------------------------------------------------------------
// Config parsing helpers

void check_keys(const json& obj, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!obj.is_object()) throw ConfigError(where + ": expected an object");
  for (const auto& [key, value] : obj.items()) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || key == a;
    if (!ok) throw ConfigError(where + ": unknown key '" + key + "'");
  }
}

double get_real(const json& v, const std::string& where) {
  if (!v.is_number()) throw ConfigError(where + ": expected a number");
  const double d = v.get<double>();
  if (!std::isfinite(d)) throw ConfigError(where + ": not finite");
  return d;
}

std::uint64_t get_uint(const json& v, const std::string& where) {
  if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<std::int64_t>() >= 0)) {
    throw ConfigError(where + ": expected a non-negative integer");
  }
  return v.get<std::uint64_t>();
}

bool get_bool(const json& v, const std::string& where) {
  if (!v.is_boolean()) throw ConfigError(where + ": expected true or false");
  return v.get<bool>();
}

std::string get_string(const json& v, const std::string& where) {
  if (!v.is_string()) throw ConfigError(where + ": expected a string");
  return v.get<std::string>();
}

/// A number or a nonempty array of numbers.
std::vector<double> get_grid(const json& v, const std::string& where) {
  std::vector<double> out;
  if (v.is_array()) {
    for (std::size_t i = 0; i < v.size(); ++i) {
      out.push_back(get_real(v[i], where + "[" + std::to_string(i) + "]"));
    }
    if (out.empty()) throw ConfigError(where + ": grid is empty");
  } else {
    out.push_back(get_real(v, where));
  }
  return out;
}

std::vector<double> get_reals(const json& v, const std::string& where) {
  if (!v.is_array()) throw ConfigError(where + ": expected an array of numbers");
  std::vector<double> out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    out.push_back(get_real(v[i], where + "[" + std::to_string(i) + "]"));
  }
  return out;
}

fs::path resolve(const fs::path& base, const fs::path& p) {
  return (p.is_absolute() ? p : base / p).lexically_normal();
}

MixCoefficients parse_mu_point(const json& v, const std::string& where) {
  check_keys(v, {"first_order", "second_order"}, where);
  MixCoefficients mu;
  if (v.contains("first_order")) mu.first_order = get_reals(v["first_order"], where + ".first_order");
  if (v.contains("second_order")) mu.second_order = get_reals(v["second_order"], where + ".second_order");
  return mu;
}

ordered_json grid_json(const std::vector<double>& grid) {
  if (grid.size() == 1) return grid.front();
  return grid;
}

ordered_json mu_json(const MixCoefficients& mu) {
  ordered_json j;
  j["first_order"] = mu.first_order;
  j["second_order"] = mu.second_order;
  return j;
}

// ---------------------------------------------------------------------------
// Stage and marker handling

std::string stage_message(const ExperimentConfig& cfg, const std::string& stage, const char* what) {
  return "stage '" + stage + "' failed for config " + cfg.source.string() + ": " + what;
}

template <typename Fn>
auto run_stage(const ExperimentConfig& cfg, const std::string& name, Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const ConfigError& e) {
    throw ConfigError(stage_message(cfg, name, e.what()));
  } catch (const DataError& e) {
    throw DataError(stage_message(cfg, name, e.what()));
  } catch (const NumericalError& e) {
    throw NumericalError(stage_message(cfg, name, e.what()));
  } catch (const fs::filesystem_error& e) {
    throw DataError(stage_message(cfg, name, e.what()));
  }
}

/// INCOMPLETE exists in the output directory from the start of a verb
/// until it succeeds; on failure it holds the error.
class IncompleteMarker {
 public:
  IncompleteMarker(const fs::path& output, const std::string& verb) : path_(output / "INCOMPLETE") {
    auto out = io::open_output(path_);
    out << verb << ": in progress\n";
  }
  void fail(const std::string& message) {
    std::ofstream out(path_, std::ios::trunc);
    out << message << "\n";
    done_ = true;
  }
  void done() {
    std::error_code ec;
    fs::remove(path_, ec);
    done_ = true;
  }
  ~IncompleteMarker() {
    if (!done_) fail("interrupted");
  }

 private:
  fs::path path_;
  bool done_ = false;
};

template <typename Fn>
auto guarded(const ExperimentConfig& cfg, const std::string& verb, Fn&& fn) -> decltype(fn()) {
  IncompleteMarker marker(cfg.output, verb);
  try {
    if constexpr (std::is_void_v<decltype(fn())>) {
      fn();
      marker.done();
    } else {
      auto result = fn();
      marker.done();
      return result;
    }
  } catch (const std::exception& e) {
    marker.fail(e.what());
    throw;
  }
}

void write_text(const fs::path& path, const std::string& text) {
  auto out = io::open_output(path, std::ios::binary);
  out << text;
  if (!out) throw DataError("failed writing " + path.string());
}

std::string read_text(const fs::path& path) {
  auto in = io::open_input(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// ---------------------------------------------------------------------------
// Pipeline pieces

struct Seeds {
  std::uint64_t split;
  std::uint64_t validation;
  std::uint64_t bootstrap;
};

Seeds seeds_of(const ExperimentConfig& cfg) {
  return {cfg.seed, derive_seed(cfg.seed, 1), derive_seed(cfg.seed, 2)};
}

struct SplitData {
  std::optional<ColdSplit> cold;
  std::optional<WarmSplit> warm;

  const Dataset& train() const { return cold ? cold->train : warm->train; }
};

fs::path split_dir_of(const ExperimentConfig& cfg) {
  return cfg.split_dir ? *cfg.split_dir : cfg.output / "split";
}

SplitData load_split_dir(const ExperimentConfig& cfg, const fs::path& dir) {
  const std::string protocol = split_protocol(dir);
  if (protocol != cfg.protocol) {
    throw ConfigError("split at " + dir.string() + " uses protocol '" + protocol +
                      "', config asks for '" + cfg.protocol + "'");
  }
  SplitData s;
  if (protocol == "cold") {
    s.cold = load_cold_split(dir);
  } else {
    s.warm = load_warm_split(dir);
  }
  return s;
}

/// Builds and saves the split unless one is configured or (with
/// reuse) already saved, then reads it back so every verb sees the same
/// on-disk data.
SplitData obtain_split(const ExperimentConfig& cfg, bool reuse) {
  if (cfg.split_dir) return load_split_dir(cfg, *cfg.split_dir);
  const fs::path dir = cfg.output / "split";
  if (!(reuse && fs::exists(dir / "split.json"))) {
    const Dataset d = load_interactions(cfg.interactions, cfg.format, cfg.binarize_threshold);
    const Seeds seeds = seeds_of(cfg);
    if (cfg.protocol == "cold") {
      save_split(make_cold_split(d, cfg.cold, seeds.split), dir);
    } else {
      save_split(make_warm_split(d, cfg.warm, seeds.split), dir);
    }
  }
  return load_split_dir(cfg, dir);
}

EvalOptions selection_options() {
  EvalOptions opts;
  opts.ks = {10};
  opts.with_ci = false;
  return opts;
}

ValidationScore score_of(const EvalReport& r) {
  return {r.metric("ndcg", 10).mean, r.metric("hr", 10).mean};
}

double value_or(const GridPoint& point, const std::string& name, double fallback) {
  for (const auto& [k, v] : point) {
    if (k == name) return v;
  }
  return fallback;
}

void set_value(GridPoint& point, const std::string& name, double value) {
  for (auto& [k, v] : point) {
    if (k == name) v = value;
  }
}

/// Everything a fit needs besides the hyperparameters.
class ModelFactory {
 public:
  ModelFactory(const ExperimentConfig& cfg, const FeatureSet& features) : cfg_(cfg), features_(features) {
    for (double delta : cfg.deltas) {
      if (similarities_.count(delta) || features.empty()) continue;
      std::vector<DenseMatrix> sims;
      for (const auto& block : features.blocks()) {
        sims.push_back(smoothed_cosine(block, delta, cfg.memory_budget_bytes));
      }
      similarities_.emplace(delta, std::move(sims));
    }
  }

  bool has_metadata() const { return !features_.empty(); }

  /// Fits the mixing weights for every delta against `objective_for`.
  void fit_mixing(const std::function<MixFitResult(std::span<const DenseMatrix>,
                                                   std::span<const MixCoefficients>)>& fit) {
    const std::vector<MixCoefficients> grid = cfg_.mu.expand(features_.size());
    for (const auto& [delta, sims] : similarities_) {
      MixCoefficients mu = grid.front();
      if (grid.size() > 1) mu = fit(sims, grid).best;
      mixed_[delta] = std::make_shared<const DenseMatrix>(mix_similarities(sims, mu));
      mu_[delta] = std::move(mu);
    }
  }

  const MixCoefficients& mu(double delta) const { return mu_.at(delta); }

  ItemModel fit(const GridPoint& point, const std::shared_ptr<const SparseMatrix>& x,
                std::size_t workers) const {
    const double delta = value_or(point, "delta", cfg_.deltas.front());
    const double alpha = value_or(point, "alpha", 0.0);
    const double beta = value_or(point, "beta", 0.0);
    FitOptions opts;
    opts.workers = workers;
    opts.budget_bytes = cfg_.memory_budget_bytes;

    if (cfg_.solver == SolverKind::itemknn) {
      ItemModel m = itemknn_model(*mixed_.at(delta));
      m.params["delta"] = delta;
      return m;
    }
    AlignmentMatrix b = AlignmentMatrix::zero(x->rows(), x->cols());
    if (alpha > 0.0 && has_metadata()) {
      AlignmentConfig ac;
      ac.delta = delta;
      ac.alpha = alpha;
      ac.beta = beta;
      ac.percentile = cfg_.percentile;
      ac.decay = cfg_.decay;
      b = align(x, mixed_.at(delta), ac);
    }
    ItemModel m;
    if (cfg_.solver == SolverKind::ease) {
      EaseConfig ec;
      ec.lambda0 = value_or(point, "lambda0", 0.0);
      ec.lambda1 = value_or(point, "lambda1", 1.0);
      m = fit_ease(*x, &features_, b, ec, opts);
    } else {
      MslimConfig mc;
      mc.w1 = value_or(point, "w1", 1.0);
      mc.lambda1 = value_or(point, "lambda1", 1.0);
      mc.gamma1 = value_or(point, "gamma1", 0.0);
      m = fit_mslim(*x, b, mc, opts);
    }
    if (has_metadata()) {
      m.params["delta"] = delta;
      m.params["alpha"] = alpha;
      m.params["beta"] = beta;
    }
    return m;
  }

 private:
  const ExperimentConfig& cfg_;
  const FeatureSet& features_;
  std::map<double, std::vector<DenseMatrix>> similarities_;
  std::map<double, std::shared_ptr<const DenseMatrix>> mixed_;
  std::map<double, MixCoefficients> mu_;
};

std::vector<GridPoint> solver_grid(const ExperimentConfig& cfg, bool metadata) {
  std::vector<std::pair<std::string, std::vector<double>>> axes;
  if (metadata) axes.push_back({"delta", cfg.deltas});
  switch (cfg.solver) {
    case SolverKind::itemknn:
      break;
    case SolverKind::ease:
      if (metadata) {
        axes.push_back({"alpha", cfg.alphas});
        axes.push_back({"beta", cfg.betas});
      }
      axes.push_back({"lambda0", cfg.lambda0s});
      axes.push_back({"lambda1", cfg.lambda1s});
      break;
    case SolverKind::mslim:
      if (metadata) {
        axes.push_back({"alpha", cfg.alphas});
        axes.push_back({"beta", cfg.betas});
      }
      axes.push_back({"w1", cfg.w1s});
      axes.push_back({"lambda1", cfg.lambda1s});
      axes.push_back({"gamma1", cfg.gamma1s});
      break;
  }
  return cross_product(axes);
}

struct FitOutcome {
  SplitData split;
  GridSearchResult search;
  GridPoint selected;
  MixCoefficients mu;
  ItemModel model;
  std::unique_ptr<FeatureSet> features;
  std::unique_ptr<ModelFactory> factory;
  std::shared_ptr<const SparseMatrix> train_x;
};

/// Config with every grid collapsed to the selected point.
ExperimentConfig resolved_config(const ExperimentConfig& cfg, const GridPoint& point,
                                 const MixCoefficients& mu, bool metadata) {
  ExperimentConfig r = cfg;
  auto pin = [&](std::vector<double>& grid, const char* name) {
    grid = {value_or(point, name, grid.front())};
  };
  pin(r.deltas, "delta");
  pin(r.alphas, "alpha");
  pin(r.betas, "beta");
  pin(r.lambda0s, "lambda0");
  pin(r.lambda1s, "lambda1");
  pin(r.w1s, "w1");
  pin(r.gamma1s, "gamma1");
  if (metadata) r.mu.points = {mu};
  return r;
}

ordered_json point_json(const GridPoint& point) {
  ordered_json j = ordered_json::object();
  for (const auto& [k, v] : point) j[k] = v;
  return j;
}

void write_manifest(const ExperimentConfig& cfg, const FitOutcome& fit,
                    const std::optional<GridPoint>& baseline) {
  const Seeds seeds = seeds_of(cfg);
  const Dataset& train = fit.split.train();
  const bool metadata = fit.factory->has_metadata();
  ordered_json m;
  m["format"] = kManifestFormat;
  m["version"] = kManifestVersion;
  m["config"] = ordered_json::parse(resolved_config(cfg, fit.selected, fit.mu, metadata).to_json());
  m["seeds"] = {{"split", seeds.split}, {"validation", seeds.validation}, {"bootstrap", seeds.bootstrap}};
  ordered_json split;
  split["protocol"] = cfg.protocol;
  split["users"] = train.num_users();
  split["items"] = train.num_items();
  split["train_interactions"] = train.x.nnz();
  if (fit.split.cold) split["cold_items"] = fit.split.cold->cold_items.size();
  m["split"] = split;
  ordered_json selected = point_json(fit.selected);
  if (metadata) selected["mu"] = mu_json(fit.mu);
  m["selected"] = selected;
  const auto& best = fit.search.trace.at(fit.search.best);
  m["validation"] = {{"ndcg@10", best.score->ndcg}, {"hr@10", best.score->hr}};
  m["grid_points"] = fit.search.trace.size();
  if (baseline) m["baseline"] = point_json(*baseline);
  m["model"] = {{"file", "model.bin"}, {"solver", to_string(cfg.solver)}};
  write_text(cfg.output / "manifest.json", m.dump(2) + "\n");
}

FitOutcome fit_pipeline(const ExperimentConfig& cfg, bool reuse_split) {
  FitOutcome out;
  const std::size_t workers = resolve_workers(cfg.workers);
  out.split = run_stage(cfg, "split", [&] { return obtain_split(cfg, reuse_split); });
  const Dataset& train = out.split.train();
  out.train_x = std::make_shared<const SparseMatrix>(train.x);

  out.features = run_stage(cfg, "featurize", [&] {
    return std::make_unique<FeatureSet>(build_features(cfg.attributes, train.items));
  });

  // Validation data: the cold split's own validation sets, or a nested
  // leave-one-out split of the warm training data.
  std::optional<WarmSplit> warm_val;
  std::shared_ptr<const SparseMatrix> select_x = out.train_x;
  if (out.split.warm) {
    warm_val = run_stage(cfg, "split", [&] {
      return make_warm_validation(*out.split.warm, cfg.validation_negatives, seeds_of(cfg).validation);
    });
    select_x = std::make_shared<const SparseMatrix>(warm_val->train.x);
  }
  auto validate_scores = [&](const ScoreFunction& scores) {
    if (warm_val) return score_of(evaluate_scenario(scores, *warm_val, selection_options(), Stage::validation));
    return score_of(evaluate_scenario(scores, *out.split.cold, cfg.selection, Stage::validation,
                                      selection_options()));
  };

  out.factory = run_stage(cfg, "similarity", [&] {
    auto f = std::make_unique<ModelFactory>(cfg, *out.features);
    f->fit_mixing([&](std::span<const DenseMatrix> sims, std::span<const MixCoefficients> grid) {
      if (out.split.cold) {
        MixFitOptions mo;
        mo.workers = workers;
        return fit_mix_coefficients(sims, *out.split.cold, grid, mo);
      }
      const SparseMatrix& x = *select_x;
      return select_mix_coefficients(
          sims, grid,
          [&](const DenseMatrix& mixed) {
            ScoreFunction scores = [&](std::span<const std::size_t> users) {
              return multiply_rows(x, users, mixed);
            };
            return validate_scores(scores).ndcg;
          },
          workers);
    });
    return f;
  });

  const std::vector<GridPoint> grid = solver_grid(cfg, out.factory->has_metadata());
  const std::size_t inner = grid.size() >= workers ? 1 : workers;
  out.search = run_stage(cfg, "grid_search", [&] {
    return grid_search(
        grid,
        [&](const GridPoint& point) {
          const ItemModel m = out.factory->fit(point, select_x, inner);
          ScoreFunction scores = [&](std::span<const std::size_t> users) {
            return predict_rows(m, *select_x, users, false);
          };
          return validate_scores(scores);
        },
        workers);
  });
  out.selected = out.search.best_point();
  if (out.factory->has_metadata()) {
    out.mu = out.factory->mu(value_or(out.selected, "delta", cfg.deltas.front()));
  }

  out.model = run_stage(cfg, "fit", [&] { return out.factory->fit(out.selected, out.train_x, workers); });
  run_stage(cfg, "write_model", [&] {
    ModelStorage storage;
    storage.top_k = cfg.top_k;
    save_model(out.model, train.items, cfg.output / "model.bin", storage);
    write_text(cfg.output / "trace.csv", out.search.trace_csv(true));
  });
  return out;
}

std::vector<EvalReport> evaluate_model(const ExperimentConfig& cfg, const SplitData& split,
                                       const ItemModel& model) {
  EvalOptions opts;
  opts.ks = cfg.ks;
  opts.with_ci = cfg.with_ci;
  opts.bootstrap = cfg.bootstrap;
  opts.seed = seeds_of(cfg).bootstrap;
  const SparseMatrix& x = split.train().x;
  ScoreFunction scores = [&](std::span<const std::size_t> users) {
    return predict_rows(model, x, users, false);
  };
  std::vector<EvalReport> reports;
  if (split.warm) {
    reports.push_back(evaluate_scenario(scores, *split.warm, opts, Stage::test));
  } else {
    for (Scenario s : cfg.scenarios) {
      reports.push_back(evaluate_scenario(scores, *split.cold, s, Stage::test, opts));
    }
  }
  return reports;
}

void write_reports(const fs::path& dir, const std::vector<EvalReport>& reports) {
  for (const auto& r : reports) {
    const std::string stem = "report_" + r.scenario;
    write_text(dir / (stem + ".json"), r.to_json());
    write_text(dir / (stem + ".txt"), r.to_text());
  }
}

std::string summary_text(const std::vector<EvalReport>& reports,
                         const std::vector<EvalReport>& baseline) {
  std::string out;
  for (std::size_t i = 0; i < reports.size(); ++i) {
    out += reports[i].scenario + " (" + reports[i].stage + ")\n";
    if (i < baseline.size()) {
      out += lift_table({{"baseline", baseline[i]}, {"aligned", reports[i]}});
    } else {
      out += lift_table({{"model", reports[i]}});
    }
    out += "\n";
  }
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// MuGrid

std::vector<MixCoefficients> MuGrid::expand(std::size_t attributes) const {
  if (!points.empty()) return points;
  if (attributes == 0) return {MixCoefficients{}};
  const std::size_t pairs = MixCoefficients::pair_count(attributes);
  std::vector<std::pair<std::string, std::vector<double>>> axes;
  for (std::size_t k = 0; k < attributes; ++k) axes.push_back({"mu" + std::to_string(k), first_values});
  for (std::size_t p = 0; p < pairs; ++p) axes.push_back({"mu_pair" + std::to_string(p), second_values});
  std::vector<MixCoefficients> out;
  for (const GridPoint& point : cross_product(axes)) {
    MixCoefficients mu;
    for (std::size_t k = 0; k < attributes; ++k) mu.first_order.push_back(point[k].second);
    for (std::size_t p = 0; p < pairs; ++p) mu.second_order.push_back(point[attributes + p].second);
    if (mu.nonzeros() > 0) out.push_back(std::move(mu));
  }
  if (out.empty()) throw ConfigError("mixing grid has no nonzero point");
  return out;
}

// ---------------------------------------------------------------------------
// ExperimentConfig

ExperimentConfig ExperimentConfig::from_json(const std::string& text, const fs::path& base_dir) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  if (root.is_object() && root.value("format", std::string()) == kManifestFormat) {
    if (!root.contains("config")) throw ConfigError("manifest has no config");
    root = root["config"];
  }
  check_keys(root,
             {"data", "split", "attributes", "alignment", "solver", "eval", "baseline", "output",
              "workers", "memory_budget_mb"},
             "config");
  const fs::path base = fs::absolute(base_dir);
  ExperimentConfig cfg;

  if (root.contains("data")) {
    const json& d = root["data"];
    check_keys(d, {"interactions", "format", "binarize_threshold"}, "data");
    if (d.contains("interactions")) {
      cfg.interactions = resolve(base, get_string(d["interactions"], "data.interactions"));
      cfg.format = format_from_extension(cfg.interactions);
    }
    if (d.contains("format")) cfg.format = parse_table_format(get_string(d["format"], "data.format"));
    if (d.contains("binarize_threshold")) {
      cfg.binarize_threshold = get_real(d["binarize_threshold"], "data.binarize_threshold");
    }
  }

  if (!root.contains("split")) throw ConfigError("config: missing 'split'");
  {
    const json& s = root["split"];
    check_keys(s,
               {"protocol", "seed", "cold_fraction", "warm_fractions", "min_user_clicks", "negatives",
                "validation_negatives", "path"},
               "split");
    if (!s.contains("seed")) throw ConfigError("split: missing 'seed'");
    cfg.seed = get_uint(s["seed"], "split.seed");
    if (s.contains("protocol")) cfg.protocol = get_string(s["protocol"], "split.protocol");
    if (s.contains("cold_fraction")) cfg.cold.cold_fraction = get_real(s["cold_fraction"], "split.cold_fraction");
    if (s.contains("warm_fractions")) {
      const auto f = get_reals(s["warm_fractions"], "split.warm_fractions");
      if (f.size() != 3) throw ConfigError("split.warm_fractions: expected three numbers");
      cfg.cold.warm_fractions = {f[0], f[1], f[2]};
    }
    if (s.contains("min_user_clicks")) cfg.warm.min_user_clicks = get_uint(s["min_user_clicks"], "split.min_user_clicks");
    if (s.contains("negatives")) cfg.warm.negatives = get_uint(s["negatives"], "split.negatives");
    cfg.validation_negatives = cfg.warm.negatives;
    if (s.contains("validation_negatives")) {
      cfg.validation_negatives = get_uint(s["validation_negatives"], "split.validation_negatives");
    }
    if (s.contains("path")) cfg.split_dir = resolve(base, get_string(s["path"], "split.path"));
  }

  if (root.contains("attributes")) {
    const json& a = root["attributes"];
    if (!a.is_array()) throw ConfigError("attributes: expected an array");
    for (std::size_t i = 0; i < a.size(); ++i) {
      const std::string where = "attributes[" + std::to_string(i) + "]";
      check_keys(a[i], {"name", "kind", "path", "vocab_size"}, where);
      AttributeSpec spec;
      if (!a[i].contains("name") || !a[i].contains("kind") || !a[i].contains("path")) {
        throw ConfigError(where + ": needs name, kind and path");
      }
      spec.name = get_string(a[i]["name"], where + ".name");
      spec.kind = parse_attribute_kind(get_string(a[i]["kind"], where + ".kind"));
      spec.path = resolve(base, get_string(a[i]["path"], where + ".path"));
      if (a[i].contains("vocab_size")) spec.vocab_size = get_uint(a[i]["vocab_size"], where + ".vocab_size");
      cfg.attributes.push_back(std::move(spec));
    }
  }

  if (root.contains("alignment")) {
    const json& a = root["alignment"];
    check_keys(a, {"delta", "alpha", "beta", "percentile", "decay", "mu"}, "alignment");
    if (a.contains("delta")) cfg.deltas = get_grid(a["delta"], "alignment.delta");
    if (a.contains("alpha")) cfg.alphas = get_grid(a["alpha"], "alignment.alpha");
    if (a.contains("beta")) cfg.betas = get_grid(a["beta"], "alignment.beta");
    if (a.contains("percentile")) cfg.percentile = get_real(a["percentile"], "alignment.percentile");
    if (a.contains("decay")) cfg.decay = parse_decay(get_string(a["decay"], "alignment.decay"));
    if (a.contains("mu")) {
      const json& mu = a["mu"];
      check_keys(mu, {"first_order", "second_order", "points"}, "alignment.mu");
      if (mu.contains("points")) {
        if (!mu["points"].is_array() || mu["points"].empty()) {
          throw ConfigError("alignment.mu.points: expected a nonempty array");
        }
        for (std::size_t i = 0; i < mu["points"].size(); ++i) {
          cfg.mu.points.push_back(
              parse_mu_point(mu["points"][i], "alignment.mu.points[" + std::to_string(i) + "]"));
        }
      }
      if (mu.contains("first_order")) cfg.mu.first_values = get_grid(mu["first_order"], "alignment.mu.first_order");
      if (mu.contains("second_order")) cfg.mu.second_values = get_grid(mu["second_order"], "alignment.mu.second_order");
    }
  }

  if (root.contains("solver")) {
    const json& s = root["solver"];
    check_keys(s, {"name", "lambda0", "lambda1", "w1", "gamma1"}, "solver");
    if (s.contains("name")) cfg.solver = parse_solver(get_string(s["name"], "solver.name"));
    if (s.contains("lambda0")) cfg.lambda0s = get_grid(s["lambda0"], "solver.lambda0");
    if (s.contains("lambda1")) cfg.lambda1s = get_grid(s["lambda1"], "solver.lambda1");
    if (s.contains("w1")) cfg.w1s = get_grid(s["w1"], "solver.w1");
    if (s.contains("gamma1")) cfg.gamma1s = get_grid(s["gamma1"], "solver.gamma1");
  }

  if (cfg.protocol == "warm") {
    cfg.scenarios = {Scenario::leave_one_out};
    cfg.selection = Scenario::leave_one_out;
  }
  if (root.contains("eval")) {
    const json& e = root["eval"];
    check_keys(e, {"ks", "scenarios", "selection", "with_ci", "bootstrap"}, "eval");
    if (e.contains("ks")) {
      cfg.ks.clear();
      const json& ks = e["ks"].is_array() ? e["ks"] : json::array({e["ks"]});
      for (const auto& k : ks) cfg.ks.push_back(get_uint(k, "eval.ks"));
    }
    if (e.contains("scenarios")) {
      cfg.scenarios.clear();
      const json& sc = e["scenarios"].is_array() ? e["scenarios"] : json::array({e["scenarios"]});
      for (const auto& s : sc) cfg.scenarios.push_back(parse_scenario(get_string(s, "eval.scenarios")));
    }
    if (e.contains("selection")) cfg.selection = parse_scenario(get_string(e["selection"], "eval.selection"));
    if (e.contains("with_ci")) cfg.with_ci = get_bool(e["with_ci"], "eval.with_ci");
    if (e.contains("bootstrap")) {
      const json& b = e["bootstrap"];
      check_keys(b, {"resamples", "fraction", "level"}, "eval.bootstrap");
      if (b.contains("resamples")) cfg.bootstrap.resamples = get_uint(b["resamples"], "eval.bootstrap.resamples");
      if (b.contains("fraction")) cfg.bootstrap.fraction = get_real(b["fraction"], "eval.bootstrap.fraction");
      if (b.contains("level")) cfg.bootstrap.level = get_real(b["level"], "eval.bootstrap.level");
    }
  }
  if (root.contains("baseline")) cfg.baseline = get_bool(root["baseline"], "baseline");
  if (root.contains("output")) {
    const json& o = root["output"];
    if (o.is_string()) {
      cfg.output = resolve(base, o.get<std::string>());
    } else {
      check_keys(o, {"dir", "top_k"}, "output");
      if (o.contains("dir")) cfg.output = resolve(base, get_string(o["dir"], "output.dir"));
      if (o.contains("top_k")) cfg.top_k = get_uint(o["top_k"], "output.top_k");
    }
  } else {
    cfg.output = resolve(base, cfg.output);
  }
  if (root.contains("workers")) cfg.workers = get_uint(root["workers"], "workers");
  if (root.contains("memory_budget_mb")) {
    cfg.memory_budget_bytes = get_uint(root["memory_budget_mb"], "memory_budget_mb") << 20;
  }
  return cfg;
}

ExperimentConfig ExperimentConfig::load(const fs::path& path) {
  if (!fs::exists(path)) throw ConfigError("config file not found: " + path.string());
  std::string text;
  try {
    text = read_text(path);
  } catch (const DataError& e) {
    throw ConfigError(e.what());
  }
  ExperimentConfig cfg = from_json(text, path.has_parent_path() ? path.parent_path() : fs::path("."));
  cfg.source = path;
  return cfg;
}

void ExperimentConfig::validate() const {
  auto fail = [](const std::string& m) { throw ConfigError(m); };
  if (protocol != "cold" && protocol != "warm") fail("split.protocol must be 'cold' or 'warm'");
  if (split_dir) {
    if (!fs::exists(*split_dir / "split.json")) fail("split.path has no split.json: " + split_dir->string());
  } else {
    if (interactions.empty()) fail("data.interactions is required unless split.path is set");
    if (!fs::exists(interactions)) fail("interactions file not found: " + interactions.string());
  }
  std::set<std::string> names;
  for (const auto& a : attributes) {
    if (a.name.empty()) fail("attribute name is empty");
    if (!names.insert(a.name).second) fail("duplicate attribute '" + a.name + "'");
    if (!fs::exists(a.path)) fail("attribute file not found: " + a.path.string());
  }
  if (protocol == "cold") {
    if (!(cold.cold_fraction > 0.0 && cold.cold_fraction < 1.0)) fail("split.cold_fraction must be in (0, 1)");
    double sum = 0.0;
    for (double f : cold.warm_fractions) {
      if (f < 0.0) fail("split.warm_fractions must be >= 0");
      sum += f;
    }
    if (std::abs(sum - 1.0) > 1e-9) fail("split.warm_fractions must sum to 1");
  } else {
    if (warm.min_user_clicks < 2) fail("split.min_user_clicks must be >= 2");
    if (warm.negatives < 1 || validation_negatives < 1) fail("split.negatives must be >= 1");
  }
  auto nonneg = [&](const std::vector<double>& grid, const char* name) {
    if (grid.empty()) fail(std::string(name) + ": grid is empty");
    for (double v : grid) {
      if (!(v >= 0.0)) fail(std::string(name) + ": values must be >= 0");
    }
  };
  nonneg(deltas, "alignment.delta");
  nonneg(alphas, "alignment.alpha");
  nonneg(betas, "alignment.beta");
  nonneg(lambda0s, "solver.lambda0");
  nonneg(lambda1s, "solver.lambda1");
  nonneg(w1s, "solver.w1");
  nonneg(gamma1s, "solver.gamma1");
  if (!(percentile > 0.0 && percentile <= 100.0)) fail("alignment.percentile must be in (0, 100]");
  if (solver == SolverKind::ease) {
    for (double l : lambda1s) {
      if (!(l > 0.0)) fail("solver.lambda1 must be > 0 for ease");
    }
  }
  if (attributes.empty()) {
    if (solver == SolverKind::itemknn) fail("itemknn needs at least one attribute");
  } else {
    for (const auto& mu : this->mu.points) mu.validate(attributes.size());
    this->mu.expand(attributes.size());
  }
  if (ks.empty()) fail("eval.ks is empty");
  for (std::size_t k : ks) {
    if (k < 1) fail("eval.ks must be >= 1");
  }
  if (scenarios.empty()) fail("eval.scenarios is empty");
  for (Scenario s : scenarios) {
    if ((s == Scenario::leave_one_out) != (protocol == "warm")) {
      fail("scenario '" + to_string(s) + "' does not fit the " + protocol + " protocol");
    }
  }
  if ((selection == Scenario::leave_one_out) != (protocol == "warm")) {
    fail("eval.selection does not fit the " + protocol + " protocol");
  }
  if (bootstrap.resamples < 1) fail("eval.bootstrap.resamples must be >= 1");
  if (!(bootstrap.fraction > 0.0 && bootstrap.fraction <= 1.0)) fail("eval.bootstrap.fraction must be in (0, 1]");
  if (!(bootstrap.level > 0.0 && bootstrap.level < 1.0)) fail("eval.bootstrap.level must be in (0, 1)");
  if (memory_budget_bytes == 0) fail("memory_budget_mb must be > 0");
}

std::string ExperimentConfig::to_json() const {
  ordered_json j;
  ordered_json data = ordered_json::object();
  if (!interactions.empty()) {
    data["interactions"] = interactions.string();
    data["format"] = format == TableFormat::csv ? "csv" : "tsv";
    data["binarize_threshold"] = binarize_threshold;
  }
  j["data"] = data;
  ordered_json split;
  split["protocol"] = protocol;
  split["seed"] = seed;
  if (protocol == "cold") {
    split["cold_fraction"] = cold.cold_fraction;
    split["warm_fractions"] = cold.warm_fractions;
  } else {
    split["min_user_clicks"] = warm.min_user_clicks;
    split["negatives"] = warm.negatives;
    split["validation_negatives"] = validation_negatives;
  }
  if (split_dir) split["path"] = split_dir->string();
  j["split"] = split;
  ordered_json attrs = ordered_json::array();
  for (const auto& a : attributes) {
    ordered_json aj;
    aj["name"] = a.name;
    aj["kind"] = alignrec::to_string(a.kind);
    aj["path"] = a.path.string();
    if (a.kind == AttributeKind::text) aj["vocab_size"] = a.vocab_size;
    attrs.push_back(aj);
  }
  j["attributes"] = attrs;
  ordered_json al;
  al["delta"] = grid_json(deltas);
  al["alpha"] = grid_json(alphas);
  al["beta"] = grid_json(betas);
  al["percentile"] = percentile;
  al["decay"] = alignrec::to_string(decay);
  ordered_json mj;
  if (!mu.points.empty()) {
    ordered_json pts = ordered_json::array();
    for (const auto& p : mu.points) pts.push_back(mu_json(p));
    mj["points"] = pts;
  } else {
    mj["first_order"] = grid_json(mu.first_values);
    mj["second_order"] = grid_json(mu.second_values);
  }
  al["mu"] = mj;
  j["alignment"] = al;
  ordered_json so;
  so["name"] = alignrec::to_string(solver);
  if (solver == SolverKind::ease) {
    so["lambda0"] = grid_json(lambda0s);
    so["lambda1"] = grid_json(lambda1s);
  } else if (solver == SolverKind::mslim) {
    so["w1"] = grid_json(w1s);
    so["lambda1"] = grid_json(lambda1s);
    so["gamma1"] = grid_json(gamma1s);
  }
  j["solver"] = so;
  ordered_json ev;
  ev["ks"] = ks;
  ordered_json sc = ordered_json::array();
  for (Scenario s : scenarios) sc.push_back(alignrec::to_string(s));
  ev["scenarios"] = sc;
  ev["selection"] = alignrec::to_string(selection);
  ev["with_ci"] = with_ci;
  ev["bootstrap"] = {{"resamples", bootstrap.resamples},
                     {"fraction", bootstrap.fraction},
                     {"level", bootstrap.level}};
  j["eval"] = ev;
  j["baseline"] = baseline;
  if (top_k > 0) j["output"] = {{"top_k", top_k}};
  j["memory_budget_mb"] = memory_budget_bytes >> 20;
  return j.dump(2);
}

// ---------------------------------------------------------------------------
// Grid search

double grid_value(const GridPoint& point, const std::string& name) {
  for (const auto& [k, v] : point) {
    if (k == name) return v;
  }
  throw ArgumentError("grid point has no parameter '" + name + "'");
}

std::vector<GridPoint> cross_product(
    const std::vector<std::pair<std::string, std::vector<double>>>& axes) {
  std::vector<GridPoint> out{GridPoint{}};
  for (const auto& [name, values] : axes) {
    if (values.empty()) throw ArgumentError("grid axis '" + name + "' is empty");
    std::vector<GridPoint> next;
    next.reserve(out.size() * values.size());
    for (const auto& prefix : out) {
      for (double v : values) {
        GridPoint p = prefix;
        p.emplace_back(name, v);
        next.push_back(std::move(p));
      }
    }
    out = std::move(next);
  }
  return out;
}

GridSearchResult grid_search(const std::vector<GridPoint>& grid,
                             const std::function<ValidationScore(const GridPoint&)>& fit_eval,
                             std::size_t workers) {
  if (grid.empty()) throw ArgumentError("grid search: empty grid");
  GridSearchResult result;
  result.trace.resize(grid.size());
  parallel_for(grid.size(), workers, [&](std::size_t i) {
    GridTraceEntry& e = result.trace[i];
    e.point = grid[i];
    const auto start = std::chrono::steady_clock::now();
    try {
      e.score = fit_eval(grid[i]);
    } catch (const Error& err) {
      e.error = err.what();
    }
    e.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  });
  std::optional<std::size_t> best;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const auto& s = result.trace[i].score;
    if (!s) continue;
    if (!best) {
      best = i;
      continue;
    }
    const auto& b = *result.trace[*best].score;
    if (s->ndcg > b.ndcg || (s->ndcg == b.ndcg && s->hr > b.hr)) best = i;
  }
  if (!best) {
    std::ostringstream msg;
    msg << "all " << grid.size() << " grid points failed";
    for (const auto& e : result.trace) {
      msg << "\n  {";
      for (std::size_t k = 0; k < e.point.size(); ++k) {
        msg << (k ? ", " : "") << e.point[k].first << "=" << io::format_double(e.point[k].second);
      }
      msg << "}: " << e.error;
    }
    throw NumericalError(msg.str());
  }
  result.best = *best;
  return result;
}

std::string GridSearchResult::trace_csv(bool with_wall_time) const {
  std::ostringstream out;
  if (!trace.empty()) {
    for (const auto& [name, value] : trace.front().point) out << name << ",";
  }
  out << "ndcg@10,hr@10,status" << (with_wall_time ? ",wall_seconds" : "") << "\n";
  for (const auto& e : trace) {
    for (const auto& [name, value] : e.point) out << io::format_double(value) << ",";
    if (e.score) {
      out << io::format_double(e.score->ndcg) << "," << io::format_double(e.score->hr) << ",ok";
    } else {
      std::string msg = e.error;
      std::replace(msg.begin(), msg.end(), '\n', ' ');
      std::string quoted;
      for (char c : msg) {
        if (c == '"') quoted += '"';
        quoted += c;
      }
      out << ",,\"failed: " << quoted << "\"";
    }
    if (with_wall_time) out << "," << io::format_double(e.wall_seconds);
    out << "\n";
  }
  return out.str();
}

// ---------------------------------------------------------------------------
// Reports

std::string format_lift(double baseline, double value) {
  if (value == baseline) return "0.0%";
  if (baseline == 0.0) return "n/a";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%+.1f%%", 100.0 * (value - baseline) / baseline);
  return buf;
}

std::string lift_table(const std::vector<std::pair<std::string, EvalReport>>& rows) {
  if (rows.empty()) throw ArgumentError("lift table needs at least one report");
  std::vector<std::pair<std::string, std::size_t>> columns;
  for (const auto& m : rows.front().second.metrics) columns.emplace_back(m.name, m.k);
  std::ostringstream out;
  char cell[64];
  std::snprintf(cell, sizeof(cell), "%-10s", "");
  out << cell;
  for (const auto& [name, k] : columns) {
    std::snprintf(cell, sizeof(cell), "%10s", (name + "@" + std::to_string(k)).c_str());
    out << cell;
  }
  out << "\n";
  for (const auto& [label, report] : rows) {
    std::snprintf(cell, sizeof(cell), "%-10s", label.c_str());
    out << cell;
    for (const auto& [name, k] : columns) {
      std::snprintf(cell, sizeof(cell), "%10.4f", report.metric(name, k).mean);
      out << cell;
    }
    out << "\n";
  }
  if (rows.size() == 2) {
    std::snprintf(cell, sizeof(cell), "%-10s", "lift");
    out << cell;
    for (const auto& [name, k] : columns) {
      const std::string lift =
          format_lift(rows[0].second.metric(name, k).mean, rows[1].second.metric(name, k).mean);
      std::snprintf(cell, sizeof(cell), "%10s", lift.c_str());
      out << cell;
    }
    out << "\n";
  }
  return out.str();
}

std::string report_files(const std::vector<fs::path>& files) {
  if (files.empty() || files.size() > 2) throw ArgumentError("report: expected one or two report files");
  std::vector<std::pair<std::string, EvalReport>> rows;
  for (const auto& f : files) {
    if (!fs::exists(f)) throw DataError("report file not found: " + f.string());
    rows.emplace_back(f.stem().string(), EvalReport::from_json(read_text(f)));
  }
  if (rows.size() == 2) {
    rows[0].first = "baseline";
    rows[1].first = "aligned";
  }
  return lift_table(rows);
}

std::string report_directory(const fs::path& output) {
  if (!fs::is_directory(output)) throw DataError("output directory not found: " + output.string());
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(output)) {
    const std::string name = entry.path().filename().string();
    if (name.rfind("report_", 0) == 0 && entry.path().extension() == ".json") files.push_back(entry.path());
  }
  if (files.empty()) throw DataError("no reports in " + output.string());
  std::sort(files.begin(), files.end());
  std::vector<EvalReport> reports;
  std::vector<EvalReport> baseline;
  for (const auto& f : files) {
    reports.push_back(EvalReport::from_json(read_text(f)));
    const fs::path b = output / "baseline" / f.filename();
    if (fs::exists(b)) baseline.push_back(EvalReport::from_json(read_text(b)));
  }
  if (baseline.size() != reports.size()) baseline.clear();
  return summary_text(reports, baseline);
}

// ---------------------------------------------------------------------------
// Verbs

void run_split(const ExperimentConfig& cfg) {
  cfg.validate();
  guarded(cfg, "split", [&] { run_stage(cfg, "split", [&] { obtain_split(cfg, false); }); });
}

void run_featurize(const ExperimentConfig& cfg) {
  cfg.validate();
  guarded(cfg, "featurize", [&] {
    const SplitData split = run_stage(cfg, "split", [&] { return obtain_split(cfg, true); });
    run_stage(cfg, "featurize", [&] {
      const Dataset& train = split.train();
      const FeatureSet features = build_features(cfg.attributes, train.items);
      ordered_json summary = ordered_json::array();
      for (const auto& block : features.blocks()) {
        const fs::path file = cfg.output / "features" / (block.attribute() + ".emb");
        save_embedding_block(block, train.items, file);
        summary.push_back({{"name", block.attribute()},
                           {"file", file.filename().string()},
                           {"items", block.rows()},
                           {"dim", block.dim()},
                           {"missing_items", block.missing_rows}});
      }
      write_text(cfg.output / "features" / "features.json", summary.dump(2) + "\n");
    });
  });
}

void run_fit(const ExperimentConfig& cfg) {
  cfg.validate();
  guarded(cfg, "fit", [&] {
    const FitOutcome fit = fit_pipeline(cfg, true);
    run_stage(cfg, "write_manifest", [&] { write_manifest(cfg, fit, std::nullopt); });
  });
}

std::vector<EvalReport> run_evaluate(const ExperimentConfig& cfg) {
  cfg.validate();
  return guarded(cfg, "evaluate", [&] {
    const fs::path dir = split_dir_of(cfg);
    if (!fs::exists(dir / "split.json")) {
      throw DataError("no split at " + dir.string() + "; run 'split' or 'fit' first");
    }
    const SplitData split = run_stage(cfg, "split", [&] { return load_split_dir(cfg, dir); });
    const LoadedModel loaded = run_stage(cfg, "load_model", [&] { return load_model(cfg.output / "model.bin"); });
    const auto ids = split.train().items.ids();
    if (!std::equal(ids.begin(), ids.end(), loaded.item_ids.begin(), loaded.item_ids.end())) {
      throw DataError("model items do not match the split's item index");
    }
    std::vector<EvalReport> reports =
        run_stage(cfg, "evaluate", [&] { return evaluate_model(cfg, split, loaded.model); });
    run_stage(cfg, "write_reports", [&] { write_reports(cfg.output, reports); });
    return reports;
  });
}

ExperimentResult run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  return guarded(cfg, "run", [&] {
    FitOutcome fit = fit_pipeline(cfg, false);
    ExperimentResult result;
    result.selected = fit.selected;
    result.mu = fit.mu;
    result.reports = run_stage(cfg, "evaluate", [&] { return evaluate_model(cfg, fit.split, fit.model); });
    run_stage(cfg, "write_reports", [&] { write_reports(cfg.output, result.reports); });

    std::optional<GridPoint> baseline;
    const bool ablate = cfg.baseline && cfg.solver != SolverKind::itemknn && fit.factory->has_metadata();
    if (ablate) {
      baseline = fit.selected;
      set_value(*baseline, "alpha", 0.0);
      result.baseline_reports = run_stage(cfg, "baseline", [&] {
        const ItemModel m = fit.factory->fit(*baseline, fit.train_x, resolve_workers(cfg.workers));
        return evaluate_model(cfg, fit.split, m);
      });
      run_stage(cfg, "write_reports", [&] { write_reports(cfg.output / "baseline", result.baseline_reports); });
    }
    result.summary = summary_text(result.reports, result.baseline_reports);
    run_stage(cfg, "write_manifest", [&] {
      write_text(cfg.output / "summary.txt", result.summary);
      write_manifest(cfg, fit, baseline);
    });
    return result;
  });
}

}  // namespace alignrec
