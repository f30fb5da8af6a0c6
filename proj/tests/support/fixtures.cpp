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

#include "fixtures.hpp"

#include <unistd.h>

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include "alignrec/common.hpp"

namespace alignrec::testing {

namespace fs = std::filesystem;

SparseMatrix random_clicks(std::size_t rows, std::size_t cols, double density, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Triplet> t;
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      if (rng.uniform() < density) t.push_back({r, c, 1.0});
    }
  }
  return SparseMatrix::from_triplets(rows, cols, std::move(t));
}

PlantedFiles write_planted(const PlantedOptions& opts, const fs::path& dir) {
  fs::create_directories(dir);
  Rng rng(opts.seed);
  PlantedFiles files;
  files.interactions = dir / "interactions.csv";
  files.genre = dir / "genre.csv";
  files.tags = dir / "tags.csv";

  // Items by topic, with a popularity skew inside each topic.
  std::vector<std::vector<std::size_t>> by_topic(opts.topics);
  files.item_topic.resize(opts.items);
  for (std::size_t i = 0; i < opts.items; ++i) {
    files.item_topic[i] = i % opts.topics;
    by_topic[i % opts.topics].push_back(i);
  }
  auto pick_in_topic = [&](std::size_t topic) {
    const auto& pool = by_topic[topic];
    // Weight ~ 1 / (rank + 1): draw rank by inverting a harmonic CDF.
    double total = 0.0;
    for (std::size_t r = 0; r < pool.size(); ++r) total += 1.0 / (r + 1.0);
    double u = rng.uniform() * total;
    for (std::size_t r = 0; r < pool.size(); ++r) {
      u -= 1.0 / (r + 1.0);
      if (u <= 0.0) return pool[r];
    }
    return pool.back();
  };

  std::ostringstream inter;
  inter << "user,item,value,timestamp\n";
  std::int64_t clock = 0;
  for (std::size_t u = 0; u < opts.users; ++u) {
    const std::size_t primary = rng.below(opts.topics);
    const std::size_t secondary = rng.below(opts.topics);
    const std::size_t n = opts.clicks_per_user / 2 + rng.below(opts.clicks_per_user + 1);
    std::set<std::size_t> seen;
    for (std::size_t k = 0; k < n * 3 && seen.size() < n; ++k) {
      std::size_t item;
      if (rng.uniform() < opts.topic_purity) {
        item = pick_in_topic(rng.uniform() < 0.7 ? primary : secondary);
      } else {
        item = rng.below(opts.items);
      }
      if (!seen.insert(item).second) continue;
      inter << "u" << u << ",i" << item << ",1," << clock++ << "\n";
    }
  }
  write_file(files.interactions, inter.str());

  std::ostringstream genre;
  std::ostringstream tags;
  genre << "item,genre\n";
  tags << "item,text\n";
  for (std::size_t i = 0; i < opts.items; ++i) {
    std::size_t label = files.item_topic[i];
    if (rng.uniform() < opts.label_noise) label = rng.below(opts.topics);
    genre << "i" << i << ",g" << label << "\n";
    if (rng.uniform() < opts.label_noise) genre << "i" << i << ",g" << rng.below(opts.topics) << "\n";
    std::size_t word_topic = files.item_topic[i];
    if (rng.uniform() < opts.label_noise) word_topic = rng.below(opts.topics);
    tags << "i" << i << ",topic" << word_topic << " about topic" << word_topic << "x";
    for (int w = 0; w < 3; ++w) tags << " noise" << rng.below(200);
    tags << "\n";
  }
  write_file(files.genre, genre.str());
  write_file(files.tags, tags.str());
  return files;
}

fs::path scratch_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("alignrec-test-" + std::to_string(::getpid())) / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

void write_file(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace alignrec::testing
