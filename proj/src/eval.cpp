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

#include "alignrec/eval.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <map>
#include <sstream>

#include "json.hpp"

namespace alignrec {

using json = nlohmann::json;

std::vector<std::size_t> rank_candidates(std::span<const double> scores,
                                         std::span<const std::size_t> candidates,
                                         std::size_t depth) {
  std::vector<std::size_t> items;
  items.reserve(candidates.size());
  for (auto j : candidates) {
    if (scores[j] != -std::numeric_limits<double>::infinity()) items.push_back(j);
  }
  auto better = [&](std::size_t a, std::size_t b) {
    return scores[a] != scores[b] ? scores[a] > scores[b] : a < b;
  };
  depth = std::min(depth, items.size());
  std::partial_sort(items.begin(), items.begin() + static_cast<std::ptrdiff_t>(depth), items.end(), better);
  items.resize(depth);
  return items;
}

namespace {

// Marks which of the first k ranked items are relevant.
std::vector<bool> hits_in_top(const RankedList& list, std::size_t k) {
  std::vector<bool> hits(std::min(k, list.ranked.size()), false);
  for (std::size_t pos = 0; pos < hits.size(); ++pos) {
    hits[pos] = std::find(list.relevant.begin(), list.relevant.end(), list.ranked[pos]) !=
                list.relevant.end();
  }
  return hits;
}

template <typename PerUser>
MetricResult compute_metric(std::span<const RankedList> lists, std::size_t k, const char* name,
                            PerUser per_user) {
  if (k < 1) throw ArgumentError("k must be >= 1");
  MetricResult m;
  m.name = name;
  m.k = k;
  std::size_t skipped = 0;
  for (const auto& list : lists) {
    if (list.relevant.empty()) {
      ++skipped;
      continue;
    }
    m.users.push_back(list.user);
    m.per_user.push_back(per_user(list));
  }
  if (skipped > 0) {
    log_warning(std::to_string(skipped) + " users without relevant items skipped for " + m.label());
  }
  double sum = 0.0;
  for (double v : m.per_user) sum += v;
  m.mean = m.per_user.empty() ? 0.0 : sum / static_cast<double>(m.per_user.size());
  return m;
}

}  // namespace

MetricResult hr_at_k(std::span<const RankedList> lists, std::size_t k) {
  return compute_metric(lists, k, "hr", [k](const RankedList& list) {
    const auto hits = hits_in_top(list, k);
    const auto n = static_cast<double>(std::count(hits.begin(), hits.end(), true));
    return n / static_cast<double>(std::min(k, list.relevant.size()));
  });
}

MetricResult ndcg_at_k(std::span<const RankedList> lists, std::size_t k) {
  return compute_metric(lists, k, "ndcg", [k](const RankedList& list) {
    const auto hits = hits_in_top(list, k);
    double dcg = 0.0;
    for (std::size_t pos = 0; pos < hits.size(); ++pos) {
      if (hits[pos]) dcg += 1.0 / std::log2(static_cast<double>(pos) + 2.0);
    }
    double ideal = 0.0;
    const std::size_t n_ideal = std::min(k, list.relevant.size());
    for (std::size_t j = 1; j <= n_ideal; ++j) ideal += 1.0 / std::log2(1.0 + static_cast<double>(j));
    return dcg / ideal;
  });
}

ConfidenceInterval bootstrap_ci(std::span<const double> values, std::uint64_t seed,
                                const BootstrapOptions& opts) {
  if (values.size() < 5) {
    throw ArgumentError("bootstrap CI undefined for fewer than 5 users (got " +
                        std::to_string(values.size()) + ")");
  }
  if (opts.resamples < 1) throw ArgumentError("bootstrap needs at least one resample");
  if (!(opts.fraction > 0.0 && opts.fraction <= 1.0)) throw ArgumentError("bootstrap fraction outside (0, 1]");
  const auto m = static_cast<std::size_t>(std::ceil(opts.fraction * static_cast<double>(values.size())));
  Rng rng(seed);
  std::vector<double> means(opts.resamples);
  for (auto& mean : means) {
    double s = 0.0;
    for (std::size_t i = 0; i < m; ++i) s += values[rng.below(values.size())];
    mean = s / static_cast<double>(m);
  }
  const double tail = (1.0 - opts.level) / 2.0 * 100.0;
  return {percentile(means, tail), percentile(means, 100.0 - tail), opts.level};
}

Scenario parse_scenario(const std::string& name) {
  if (name == "cold") return Scenario::cold;
  if (name == "warm") return Scenario::warm;
  if (name == "all") return Scenario::all;
  if (name == "leave_one_out") return Scenario::leave_one_out;
  throw ConfigError("unknown scenario '" + name + "'");
}

std::string to_string(Scenario s) {
  switch (s) {
    case Scenario::cold: return "cold";
    case Scenario::warm: return "warm";
    case Scenario::all: return "all";
    case Scenario::leave_one_out: return "leave_one_out";
  }
  return "unknown";
}

std::string to_string(Stage s) { return s == Stage::validation ? "validation" : "test"; }

const MetricResult& EvalReport::metric(const std::string& name, std::size_t k) const {
  for (const auto& m : metrics) {
    if (m.name == name && m.k == k) return m;
  }
  throw ArgumentError("report has no " + name + "@" + std::to_string(k));
}

std::string EvalReport::to_json() const {
  json j;
  j["scenario"] = scenario;
  j["stage"] = stage;
  j["num_users"] = num_users;
  j["num_interactions"] = num_interactions;
  j["num_candidates"] = num_candidates;
  j["metrics"] = json::array();
  for (const auto& m : metrics) {
    json mj = {{"name", m.name}, {"k", m.k}, {"mean", m.mean}, {"num_users", m.per_user.size()}};
    if (m.ci) {
      mj["ci_low"] = m.ci->low;
      mj["ci_high"] = m.ci->high;
      mj["ci_level"] = m.ci->level;
    }
    j["metrics"].push_back(mj);
  }
  return j.dump(2) + "\n";
}

EvalReport EvalReport::from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
    EvalReport r;
    r.scenario = j.at("scenario").get<std::string>();
    r.stage = j.value("stage", "");
    r.num_users = j.value("num_users", std::size_t{0});
    r.num_interactions = j.value("num_interactions", std::size_t{0});
    r.num_candidates = j.value("num_candidates", std::size_t{0});
    for (const auto& mj : j.at("metrics")) {
      MetricResult m;
      m.name = mj.at("name").get<std::string>();
      m.k = mj.at("k").get<std::size_t>();
      m.mean = mj.at("mean").get<double>();
      if (mj.contains("ci_low")) {
        m.ci = ConfidenceInterval{mj["ci_low"].get<double>(), mj["ci_high"].get<double>(),
                                  mj.value("ci_level", 0.95)};
      }
      r.metrics.push_back(std::move(m));
    }
    return r;
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed report: ") + e.what());
  }
}

std::string EvalReport::to_text() const {
  std::ostringstream os;
  os << "scenario: " << scenario << " (" << stage << ")  users: " << num_users
     << "  interactions: " << num_interactions << "  candidates: " << num_candidates << '\n';
  os << std::left << std::setw(10) << "metric" << std::right << std::setw(10) << "mean"
     << std::setw(12) << "ci_low" << std::setw(12) << "ci_high" << '\n';
  os << std::fixed << std::setprecision(4);
  for (const auto& m : metrics) {
    os << std::left << std::setw(10) << m.label() << std::right << std::setw(10) << m.mean;
    if (m.ci) {
      os << std::setw(12) << m.ci->low << std::setw(12) << m.ci->high;
    } else {
      os << std::setw(12) << "-" << std::setw(12) << "-";
    }
    os << '\n';
  }
  return os.str();
}

namespace {

// Scores users in batches, masks training positives, ranks their
// candidates and fills the report's metrics.
EvalReport finish(const ScoreFunction& score_fn, const SparseMatrix& train,
                  const std::vector<std::size_t>& users,
                  const std::vector<std::vector<std::size_t>>& relevant,
                  const std::function<std::span<const std::size_t>(std::size_t)>& candidates_of,
                  const EvalOptions& opts, EvalReport report) {
  if (opts.ks.empty()) throw ArgumentError("no cutoffs requested");
  const std::size_t depth = *std::max_element(opts.ks.begin(), opts.ks.end());
  std::vector<RankedList> lists(users.size());
  const std::size_t batch = std::max<std::size_t>(1, opts.batch_users);
  for (std::size_t start = 0; start < users.size(); start += batch) {
    const std::size_t end = std::min(users.size(), start + batch);
    std::span<const std::size_t> rows(users.data() + start, end - start);
    DenseMatrix scores = score_fn(rows);
    if (scores.rows() != rows.size() || scores.cols() != train.cols()) {
      throw ArgumentError("score function returned a matrix of the wrong shape");
    }
    for (std::size_t b = 0; b < rows.size(); ++b) {
      auto s = scores.row(b);
      for (auto j : train.row(rows[b]).cols) s[j] = -std::numeric_limits<double>::infinity();
      auto& list = lists[start + b];
      list.user = rows[b];
      list.relevant = relevant[start + b];
      list.ranked = rank_candidates(s, candidates_of(rows[b]), depth);
    }
  }
  report.num_users = users.size();
  for (const auto& r : relevant) report.num_interactions += r.size();
  for (std::size_t k : opts.ks) {
    for (auto* metric_fn : {&hr_at_k, &ndcg_at_k}) {
      MetricResult m = metric_fn(lists, k);
      if (opts.with_ci && m.per_user.size() >= 5) {
        const std::uint64_t stream = (m.name == "hr" ? 0 : 1) + 2 * k;
        m.ci = bootstrap_ci(m.per_user, derive_seed(opts.seed, stream), opts.bootstrap);
      }
      report.metrics.push_back(std::move(m));
    }
  }
  return report;
}

}  // namespace

EvalReport evaluate_scenario(const ScoreFunction& scores, const ColdSplit& split, Scenario scenario,
                             Stage stage, const EvalOptions& opts) {
  if (scenario == Scenario::leave_one_out) {
    throw ArgumentError("leave_one_out scenario needs a warm split");
  }
  const auto cold = split.cold_mask();
  std::vector<std::size_t> pool;
  for (std::size_t j = 0; j < cold.size(); ++j) {
    if (scenario == Scenario::all || (scenario == Scenario::cold) == cold[j]) pool.push_back(j);
  }
  if (pool.empty()) throw ArgumentError("empty candidate pool for scenario " + to_string(scenario));

  const bool val = stage == Stage::validation;
  std::vector<const InteractionSet*> sets;
  if (scenario != Scenario::warm) sets.push_back(val ? &split.cold_val : &split.cold_test);
  if (scenario != Scenario::cold) sets.push_back(val ? &split.warm_val : &split.warm_test);

  std::map<std::size_t, std::vector<std::size_t>> by_user;
  for (const auto* set : sets) {
    for (const auto& p : *set) by_user[p.user].push_back(p.item);
  }
  if (by_user.empty()) {
    throw ArgumentError("no held-out interactions for " + to_string(scenario) + "/" + to_string(stage));
  }
  std::vector<std::size_t> users;
  std::vector<std::vector<std::size_t>> relevant;
  for (auto& [u, items] : by_user) {
    std::sort(items.begin(), items.end());
    users.push_back(u);
    relevant.push_back(std::move(items));
  }

  EvalReport report;
  report.scenario = to_string(scenario);
  report.stage = to_string(stage);
  report.num_candidates = pool.size();
  return finish(scores, split.train.x, users, relevant,
                [&](std::size_t) { return std::span<const std::size_t>(pool); }, opts,
                std::move(report));
}

EvalReport evaluate_scenario(const ScoreFunction& scores, const WarmSplit& split,
                             const EvalOptions& opts, Stage stage) {
  const std::size_t n = split.held_out.size();
  if (n == 0) throw ArgumentError("warm split has no users");
  std::vector<std::size_t> users(n);
  std::vector<std::vector<std::size_t>> relevant(n);
  std::vector<std::vector<std::size_t>> pools(n);
  for (std::size_t u = 0; u < n; ++u) {
    users[u] = u;
    relevant[u] = {split.held_out[u]};
    pools[u] = split.negatives[u];
    pools[u].push_back(split.held_out[u]);
    std::sort(pools[u].begin(), pools[u].end());
  }
  EvalReport report;
  report.scenario = to_string(Scenario::leave_one_out);
  report.stage = to_string(stage);
  report.num_candidates = n ? pools.front().size() : 0;
  return finish(scores, split.train.x, users, relevant,
                [&](std::size_t u) { return std::span<const std::size_t>(pools[u]); }, opts,
                std::move(report));
}

}  // namespace alignrec
