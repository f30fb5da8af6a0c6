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

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "alignrec/linalg.hpp"

namespace alignrec {

/// Bidirectional string id <-> dense index map, indices in insertion order.
class IdIndex {
 public:
  std::size_t add(const std::string& id);
  std::optional<std::size_t> find(const std::string& id) const;
  const std::string& id(std::size_t index) const { return ids_.at(index); }
  std::size_t size() const { return ids_.size(); }
  std::span<const std::string> ids() const { return ids_; }

 private:
  std::unordered_map<std::string, std::size_t> map_;
  std::vector<std::string> ids_;
};

enum class TableFormat { csv, tsv };

TableFormat parse_table_format(const std::string& name);
/// csv unless the extension is .tsv or .tab.
TableFormat format_from_extension(const std::filesystem::path& path);

struct Interaction {
  std::string user;
  std::string item;
  double value = 1.0;
  std::optional<std::int64_t> timestamp;
};

struct InteractionLog {
  std::vector<Interaction> records;
};

/// One binarized (user, item) click. `order` is the input position used
/// for tie-breaking when timestamps are absent.
struct Event {
  std::size_t user;
  std::size_t item;
  std::optional<std::int64_t> timestamp;
  std::size_t order;
};

/// Binary click matrix with its id maps. `events` holds exactly one entry
/// per nonzero of X, in input order.
struct Dataset {
  SparseMatrix x;
  IdIndex users;
  IdIndex items;
  std::vector<Event> events;

  std::size_t num_users() const { return users.size(); }
  std::size_t num_items() const { return items.size(); }

  /// Builds X from events; events are re-sorted by `order`.
  static Dataset from_events(IdIndex users, IdIndex items, std::vector<Event> events);
};

/// Reads `user,item,value[,timestamp]` rows after a mandatory header.
/// Throws ParseError (with line number) on malformed rows.
InteractionLog read_interaction_log(const std::filesystem::path& path, TableFormat format);

/// Keeps records with value >= threshold as clicks. Repeated (user, item)
/// pairs collapse to one click carrying the latest timestamp and position.
/// Throws EmptyDatasetError when nothing survives.
Dataset binarize(const InteractionLog& log, double threshold);

Dataset load_interactions(const std::filesystem::path& path, TableFormat format,
                          double binarize_threshold);

struct UserItem {
  std::size_t user;
  std::size_t item;
  auto operator<=>(const UserItem&) const = default;
};

using InteractionSet = std::vector<UserItem>;

/// Item cold-start split. `train` shares the user and item index of the
/// source dataset; cold item columns of train.x are empty.
struct ColdSplit {
  Dataset train;
  InteractionSet warm_val;
  InteractionSet warm_test;
  InteractionSet cold_val;
  InteractionSet cold_test;
  std::vector<std::size_t> cold_items;  // ascending
  std::uint64_t seed = 0;

  std::vector<bool> cold_mask() const;
};

/// Leave-one-out split with sampled negatives. Indexed by train user row.
struct WarmSplit {
  Dataset train;
  std::vector<std::size_t> held_out;
  std::vector<std::vector<std::size_t>> negatives;  // each ascending
  std::uint64_t seed = 0;
};

struct ColdSplitOptions {
  double cold_fraction = 0.20;
  std::array<double, 3> warm_fractions{0.80, 0.10, 0.10};
};

struct WarmSplitOptions {
  std::size_t min_user_clicks = 20;
  std::size_t negatives = 100;
};

/// Samples round(cold_fraction * |I|) cold items; their clicks are split
/// per item between cold_val (floor half) and cold_test. Remaining clicks
/// are shuffled and cut train/warm_val/warm_test by warm_fractions.
ColdSplit make_cold_split(const Dataset& d, const ColdSplitOptions& opts, std::uint64_t seed);

/// Drops users below min_user_clicks, holds out each user's last click
/// (latest timestamp, else latest input position) and draws `negatives`
/// distinct items outside the user's full history.
WarmSplit make_warm_split(const Dataset& d, const WarmSplitOptions& opts, std::uint64_t seed);

/// Same leave-one-out protocol applied to a warm split's training data,
/// used for hyperparameter selection.
WarmSplit make_warm_validation(const WarmSplit& split, std::size_t negatives, std::uint64_t seed);

// Split manifests: three interaction files plus split.json.
//   cold: train.csv, val.csv, test.csv (val/test mix warm and cold rows;
//         cold rows are those whose item is listed in cold_item_ids)
//   warm: train.csv, test.csv (held-out positives), negatives.csv
void save_split(const ColdSplit& split, const std::filesystem::path& dir);
void save_split(const WarmSplit& split, const std::filesystem::path& dir);

/// "cold" or "warm", read from split.json.
std::string split_protocol(const std::filesystem::path& dir);
ColdSplit load_cold_split(const std::filesystem::path& dir);
WarmSplit load_warm_split(const std::filesystem::path& dir);

}  // namespace alignrec
