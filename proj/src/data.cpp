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

#include "alignrec/data.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <unordered_set>

#include "json.hpp"
#include "table_io.hpp"

namespace alignrec {

namespace fs = std::filesystem;
using json = nlohmann::json;

std::size_t IdIndex::add(const std::string& id) {
  auto [it, inserted] = map_.try_emplace(id, ids_.size());
  if (inserted) ids_.push_back(id);
  return it->second;
}

std::optional<std::size_t> IdIndex::find(const std::string& id) const {
  auto it = map_.find(id);
  if (it == map_.end()) return std::nullopt;
  return it->second;
}

TableFormat parse_table_format(const std::string& name) {
  if (name == "csv") return TableFormat::csv;
  if (name == "tsv") return TableFormat::tsv;
  throw ConfigError("unknown table format '" + name + "' (expected csv or tsv)");
}

TableFormat format_from_extension(const fs::path& path) {
  const auto ext = path.extension().string();
  return (ext == ".tsv" || ext == ".tab") ? TableFormat::tsv : TableFormat::csv;
}

Dataset Dataset::from_events(IdIndex users, IdIndex items, std::vector<Event> events) {
  std::sort(events.begin(), events.end(),
            [](const Event& a, const Event& b) { return a.order < b.order; });
  std::vector<Triplet> entries;
  entries.reserve(events.size());
  for (const auto& e : events) entries.push_back({e.user, e.item, 1.0});
  Dataset d;
  d.x = SparseMatrix::from_triplets(users.size(), items.size(), std::move(entries));
  d.users = std::move(users);
  d.items = std::move(items);
  d.events = std::move(events);
  return d;
}

InteractionLog read_interaction_log(const fs::path& path, TableFormat format) {
  auto in = io::open_input(path);
  const char delim = format == TableFormat::csv ? ',' : '\t';
  InteractionLog log;
  std::string line;
  std::size_t lineno = 0;
  bool header_seen = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (io::is_blank(line)) continue;
    const auto fields = io::split_fields(line, delim);
    if (!header_seen) {
      header_seen = true;
      if (fields.size() < 3 || fields.size() > 4) {
        throw ParseError(path.string(), lineno,
                         "header must name 3 or 4 columns: user,item,value[,timestamp]");
      }
      continue;
    }
    if (fields.size() < 3 || fields.size() > 4) {
      throw ParseError(path.string(), lineno,
                       "expected 3 or 4 fields, got " + std::to_string(fields.size()));
    }
    if (fields[0].empty() || fields[1].empty()) {
      throw ParseError(path.string(), lineno, "empty user or item id");
    }
    const auto value = io::parse_double(fields[2]);
    if (!value || !std::isfinite(*value)) {
      throw ParseError(path.string(), lineno, "invalid value '" + std::string(fields[2]) + "'");
    }
    Interaction rec{std::string(fields[0]), std::string(fields[1]), *value, std::nullopt};
    if (fields.size() == 4 && !fields[3].empty()) {
      const auto ts = io::parse_int(fields[3]);
      if (!ts) {
        throw ParseError(path.string(), lineno,
                         "invalid timestamp '" + std::string(fields[3]) + "'");
      }
      rec.timestamp = *ts;
    }
    log.records.push_back(std::move(rec));
  }
  return log;
}

Dataset binarize(const InteractionLog& log, double threshold) {
  IdIndex users, items;
  std::vector<Event> events;
  std::map<std::pair<std::size_t, std::size_t>, std::size_t> seen;
  std::size_t position = 0;
  for (const auto& rec : log.records) {
    ++position;
    if (!(rec.value >= threshold)) continue;
    if (rec.user.empty() || rec.item.empty()) throw DataError("interaction with empty id");
    const std::size_t u = users.add(rec.user);
    const std::size_t i = items.add(rec.item);
    auto [it, inserted] = seen.try_emplace({u, i}, events.size());
    if (inserted) {
      events.push_back({u, i, rec.timestamp, position});
    } else {
      Event& e = events[it->second];
      if (rec.timestamp && (!e.timestamp || *rec.timestamp >= *e.timestamp)) {
        e.timestamp = rec.timestamp;
      }
      e.order = position;
    }
  }
  if (events.empty()) throw EmptyDatasetError("no interactions at or above the binarize threshold");
  return Dataset::from_events(std::move(users), std::move(items), std::move(events));
}

Dataset load_interactions(const fs::path& path, TableFormat format, double binarize_threshold) {
  try {
    return binarize(read_interaction_log(path, format), binarize_threshold);
  } catch (const EmptyDatasetError& e) {
    throw EmptyDatasetError(path.string() + ": " + e.what());
  }
}

std::vector<bool> ColdSplit::cold_mask() const {
  std::vector<bool> mask(train.num_items(), false);
  for (auto j : cold_items) mask[j] = true;
  return mask;
}

namespace {

IdIndex copy_index(const IdIndex& src) {
  IdIndex out;
  for (const auto& id : src.ids()) out.add(id);
  return out;
}

InteractionSet to_pairs(const std::vector<Event>& events) {
  InteractionSet out;
  out.reserve(events.size());
  for (const auto& e : events) out.push_back({e.user, e.item});
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

ColdSplit make_cold_split(const Dataset& d, const ColdSplitOptions& opts, std::uint64_t seed) {
  if (!(opts.cold_fraction > 0.0 && opts.cold_fraction < 1.0)) {
    throw ArgumentError("cold_fraction must lie in (0, 1)");
  }
  double total = 0.0;
  for (double f : opts.warm_fractions) {
    if (f < 0.0) throw ArgumentError("warm fractions must be non-negative");
    total += f;
  }
  if (std::abs(total - 1.0) > 1e-9) throw ArgumentError("warm fractions must sum to 1");

  const std::size_t n_items = d.num_items();
  const auto n_cold =
      static_cast<std::size_t>(std::llround(opts.cold_fraction * static_cast<double>(n_items)));
  if (n_cold < 1) {
    throw ArgumentError("dataset with " + std::to_string(n_items) +
                        " items yields no cold item at cold_fraction " +
                        std::to_string(opts.cold_fraction));
  }
  if (n_cold >= n_items) throw ArgumentError("cold_fraction leaves no warm items");

  Rng rng(seed);
  std::vector<std::size_t> perm(n_items);
  for (std::size_t j = 0; j < n_items; ++j) perm[j] = j;
  rng.shuffle(perm);

  ColdSplit split;
  split.seed = seed;
  split.cold_items.assign(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(n_cold));
  std::sort(split.cold_items.begin(), split.cold_items.end());
  std::vector<bool> cold(n_items, false);
  for (auto j : split.cold_items) cold[j] = true;

  std::vector<std::vector<Event>> per_cold_item(n_items);
  std::vector<Event> warm;
  for (const auto& e : d.events) {
    if (cold[e.item]) {
      per_cold_item[e.item].push_back(e);
    } else {
      warm.push_back(e);
    }
  }

  std::vector<Event> cold_val, cold_test;
  for (auto j : split.cold_items) {
    auto& ev = per_cold_item[j];
    rng.shuffle(ev);
    const std::size_t n_val = ev.size() / 2;
    cold_val.insert(cold_val.end(), ev.begin(), ev.begin() + static_cast<std::ptrdiff_t>(n_val));
    cold_test.insert(cold_test.end(), ev.begin() + static_cast<std::ptrdiff_t>(n_val), ev.end());
  }

  rng.shuffle(warm);
  const double n_warm = static_cast<double>(warm.size());
  auto n_train = static_cast<std::size_t>(std::llround(opts.warm_fractions[0] * n_warm));
  auto n_val = static_cast<std::size_t>(std::llround(opts.warm_fractions[1] * n_warm));
  n_train = std::min(n_train, warm.size());
  n_val = std::min(n_val, warm.size() - n_train);
  std::vector<Event> train(warm.begin(), warm.begin() + static_cast<std::ptrdiff_t>(n_train));
  std::vector<Event> warm_val(warm.begin() + static_cast<std::ptrdiff_t>(n_train),
                              warm.begin() + static_cast<std::ptrdiff_t>(n_train + n_val));
  std::vector<Event> warm_test(warm.begin() + static_cast<std::ptrdiff_t>(n_train + n_val),
                               warm.end());

  split.train = Dataset::from_events(copy_index(d.users), copy_index(d.items), std::move(train));
  split.warm_val = to_pairs(warm_val);
  split.warm_test = to_pairs(warm_test);
  split.cold_val = to_pairs(cold_val);
  split.cold_test = to_pairs(cold_test);
  return split;
}

WarmSplit make_warm_split(const Dataset& d, const WarmSplitOptions& opts, std::uint64_t seed) {
  if (opts.negatives < 1) throw ArgumentError("negatives must be >= 1");
  std::vector<std::vector<const Event*>> history(d.num_users());
  for (const auto& e : d.events) history[e.user].push_back(&e);

  IdIndex users;
  std::vector<std::size_t> old_row;
  for (std::size_t u = 0; u < d.num_users(); ++u) {
    if (history[u].size() >= opts.min_user_clicks && !history[u].empty()) {
      users.add(d.users.id(u));
      old_row.push_back(u);
    }
  }
  if (old_row.empty()) {
    throw EmptyDatasetError("no user has at least " + std::to_string(opts.min_user_clicks) +
                            " clicks");
  }

  const std::size_t n_items = d.num_items();
  Rng rng(seed);
  WarmSplit split;
  split.seed = seed;
  split.held_out.resize(old_row.size());
  split.negatives.resize(old_row.size());
  std::vector<Event> train;
  for (std::size_t r = 0; r < old_row.size(); ++r) {
    const auto& h = history[old_row[r]];
    const bool timed = std::all_of(h.begin(), h.end(), [](const Event* e) { return e->timestamp; });
    const Event* last = h.front();
    for (const Event* e : h) {
      const bool later = timed ? std::pair(*e->timestamp, e->order) > std::pair(*last->timestamp, last->order)
                               : e->order > last->order;
      if (later) last = e;
    }
    split.held_out[r] = last->item;
    for (const Event* e : h) {
      if (e != last) train.push_back({r, e->item, e->timestamp, e->order});
    }

    std::vector<bool> in_history(n_items, false);
    for (const Event* e : h) in_history[e->item] = true;
    const std::size_t available = n_items - h.size();
    if (available < opts.negatives) {
      throw DataError("user '" + d.users.id(old_row[r]) + "' has only " +
                      std::to_string(available) + " unclicked items, cannot draw " +
                      std::to_string(opts.negatives) + " negatives");
    }
    auto& neg = split.negatives[r];
    if (available >= 2 * opts.negatives) {
      std::unordered_set<std::size_t> chosen;
      while (neg.size() < opts.negatives) {
        const auto j = static_cast<std::size_t>(rng.below(n_items));
        if (!in_history[j] && chosen.insert(j).second) neg.push_back(j);
      }
    } else {
      std::vector<std::size_t> pool;
      for (std::size_t j = 0; j < n_items; ++j)
        if (!in_history[j]) pool.push_back(j);
      for (std::size_t k = 0; k < opts.negatives; ++k) {
        const auto pick = k + static_cast<std::size_t>(rng.below(pool.size() - k));
        std::swap(pool[k], pool[pick]);
      }
      neg.assign(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(opts.negatives));
    }
    std::sort(neg.begin(), neg.end());
  }
  split.train = Dataset::from_events(std::move(users), copy_index(d.items), std::move(train));
  return split;
}

WarmSplit make_warm_validation(const WarmSplit& split, std::size_t negatives, std::uint64_t seed) {
  return make_warm_split(split.train, WarmSplitOptions{1, negatives}, seed);
}

// ---------------------------------------------------------- persistence

namespace {

void write_pairs(const fs::path& path, const Dataset& d, const InteractionSet& a,
                 const InteractionSet& b = {}) {
  auto out = io::open_output(path);
  out << "user,item,value\n";
  InteractionSet all(a);
  all.insert(all.end(), b.begin(), b.end());
  std::sort(all.begin(), all.end());
  for (const auto& p : all) out << d.users.id(p.user) << ',' << d.items.id(p.item) << ",1\n";
}

void write_train(const fs::path& path, const Dataset& d) {
  auto out = io::open_output(path);
  out << "user,item,value,timestamp\n";
  for (const auto& e : d.events) {
    out << d.users.id(e.user) << ',' << d.items.id(e.item) << ",1,";
    if (e.timestamp) out << *e.timestamp;
    out << '\n';
  }
}

json index_json(const IdIndex& index) { return json(std::vector<std::string>(index.ids().begin(), index.ids().end())); }

void write_sidecar(const fs::path& path, const json& j) {
  auto out = io::open_output(path);
  out << j.dump(2) << '\n';
}

json read_sidecar(const fs::path& dir) {
  auto in = io::open_input(dir / "split.json");
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw FormatError((dir / "split.json").string() + ": " + e.what());
  }
}

struct RawPair {
  std::string user, item;
  std::optional<std::int64_t> timestamp;
};

std::vector<RawPair> read_pairs(const fs::path& path) {
  const auto log = read_interaction_log(path, format_from_extension(path));
  std::vector<RawPair> out;
  out.reserve(log.records.size());
  for (const auto& r : log.records) out.push_back({r.user, r.item, r.timestamp});
  return out;
}

// Index maps come from the sidecar when present, else from first
// appearance across the listed files.
void build_indices(const json& side, const std::vector<const std::vector<RawPair>*>& files,
                   IdIndex& users, IdIndex& items) {
  if (side.contains("user_ids")) {
    for (const auto& id : side["user_ids"]) users.add(id.get<std::string>());
  }
  if (side.contains("item_ids")) {
    for (const auto& id : side["item_ids"]) items.add(id.get<std::string>());
  }
  const bool fixed_users = side.contains("user_ids");
  const bool fixed_items = side.contains("item_ids");
  for (const auto* f : files) {
    for (const auto& p : *f) {
      if (!fixed_users) users.add(p.user);
      if (!fixed_items) items.add(p.item);
    }
  }
}

std::size_t lookup(const IdIndex& index, const std::string& id, const char* what) {
  auto v = index.find(id);
  if (!v) throw FormatError(std::string("split manifest references unknown ") + what + " '" + id + "'");
  return *v;
}

Dataset train_from_pairs(const std::vector<RawPair>& rows, IdIndex users, IdIndex items) {
  std::vector<Event> events;
  std::map<std::pair<std::size_t, std::size_t>, bool> seen;
  for (std::size_t k = 0; k < rows.size(); ++k) {
    const auto u = lookup(users, rows[k].user, "user");
    const auto i = lookup(items, rows[k].item, "item");
    if (!seen.try_emplace({u, i}, true).second) continue;
    events.push_back({u, i, rows[k].timestamp, k});
  }
  return Dataset::from_events(std::move(users), std::move(items), std::move(events));
}

}  // namespace

void save_split(const ColdSplit& split, const fs::path& dir) {
  const Dataset& d = split.train;
  write_train(dir / "train.csv", d);
  write_pairs(dir / "val.csv", d, split.warm_val, split.cold_val);
  write_pairs(dir / "test.csv", d, split.warm_test, split.cold_test);
  json cold = json::array();
  for (auto j : split.cold_items) cold.push_back(d.items.id(j));
  json side = {{"protocol", "cold"},
               {"seed", split.seed},
               {"cold_item_ids", cold},
               {"counts",
                {{"train", d.events.size()},
                 {"warm_val", split.warm_val.size()},
                 {"warm_test", split.warm_test.size()},
                 {"cold_val", split.cold_val.size()},
                 {"cold_test", split.cold_test.size()}}},
               {"user_ids", index_json(d.users)},
               {"item_ids", index_json(d.items)}};
  write_sidecar(dir / "split.json", side);
}

void save_split(const WarmSplit& split, const fs::path& dir) {
  const Dataset& d = split.train;
  write_train(dir / "train.csv", d);
  InteractionSet held;
  InteractionSet negs;
  for (std::size_t u = 0; u < split.held_out.size(); ++u) {
    held.push_back({u, split.held_out[u]});
    for (auto j : split.negatives[u]) negs.push_back({u, j});
  }
  write_pairs(dir / "test.csv", d, held);
  write_pairs(dir / "negatives.csv", d, negs);
  json side = {{"protocol", "warm"},
               {"seed", split.seed},
               {"counts", {{"train", d.events.size()}, {"test", held.size()}}},
               {"user_ids", index_json(d.users)},
               {"item_ids", index_json(d.items)}};
  write_sidecar(dir / "split.json", side);
}

std::string split_protocol(const fs::path& dir) {
  const auto side = read_sidecar(dir);
  if (!side.contains("protocol")) throw FormatError("split.json lacks a protocol field");
  return side["protocol"].get<std::string>();
}

ColdSplit load_cold_split(const fs::path& dir) {
  const auto side = read_sidecar(dir);
  if (side.value("protocol", "") != "cold") throw FormatError(dir.string() + " is not a cold split");
  const auto train = read_pairs(dir / "train.csv");
  const auto val = read_pairs(dir / "val.csv");
  const auto test = read_pairs(dir / "test.csv");
  IdIndex users, items;
  build_indices(side, {&train, &val, &test}, users, items);
  if (side.contains("cold_item_ids")) {
    for (const auto& id : side["cold_item_ids"]) items.add(id.get<std::string>());
  }

  ColdSplit split;
  split.seed = side.value("seed", std::uint64_t{0});
  for (const auto& id : side.value("cold_item_ids", json::array())) {
    split.cold_items.push_back(lookup(items, id.get<std::string>(), "item"));
  }
  std::sort(split.cold_items.begin(), split.cold_items.end());
  split.train = train_from_pairs(train, std::move(users), std::move(items));
  const auto cold = split.cold_mask();
  auto assign = [&](const std::vector<RawPair>& rows, InteractionSet& warm_set, InteractionSet& cold_set) {
    for (const auto& p : rows) {
      UserItem ui{lookup(split.train.users, p.user, "user"), lookup(split.train.items, p.item, "item")};
      (cold[ui.item] ? cold_set : warm_set).push_back(ui);
    }
    std::sort(warm_set.begin(), warm_set.end());
    std::sort(cold_set.begin(), cold_set.end());
  };
  assign(val, split.warm_val, split.cold_val);
  assign(test, split.warm_test, split.cold_test);
  const auto clicks = split.train.x.column_sums();
  for (auto j : split.cold_items) {
    if (clicks[j] != 0.0) {
      throw FormatError("cold item '" + split.train.items.id(j) + "' has training clicks");
    }
  }
  return split;
}

WarmSplit load_warm_split(const fs::path& dir) {
  const auto side = read_sidecar(dir);
  if (side.value("protocol", "") != "warm") throw FormatError(dir.string() + " is not a warm split");
  const auto train = read_pairs(dir / "train.csv");
  const auto test = read_pairs(dir / "test.csv");
  const auto negatives = read_pairs(dir / "negatives.csv");
  IdIndex users, items;
  build_indices(side, {&train, &test, &negatives}, users, items);

  WarmSplit split;
  split.seed = side.value("seed", std::uint64_t{0});
  split.train = train_from_pairs(train, std::move(users), std::move(items));
  const std::size_t n = split.train.num_users();
  split.held_out.assign(n, SIZE_MAX);
  split.negatives.assign(n, {});
  for (const auto& p : test) {
    const auto u = lookup(split.train.users, p.user, "user");
    if (split.held_out[u] != SIZE_MAX) throw FormatError("user '" + p.user + "' has two held-out items");
    split.held_out[u] = lookup(split.train.items, p.item, "item");
  }
  for (const auto& p : negatives) {
    split.negatives[lookup(split.train.users, p.user, "user")].push_back(
        lookup(split.train.items, p.item, "item"));
  }
  for (std::size_t u = 0; u < n; ++u) {
    if (split.held_out[u] == SIZE_MAX) {
      throw FormatError("user '" + split.train.users.id(u) + "' has no held-out item");
    }
    std::sort(split.negatives[u].begin(), split.negatives[u].end());
  }
  return split;
}

}  // namespace alignrec
