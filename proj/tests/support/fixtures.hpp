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

// Synthetic data shared by the unit and acceptance tests.

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "alignrec/linalg.hpp"

namespace alignrec::testing {

/// Random 0/1 matrix with roughly `density` of the entries set.
SparseMatrix random_clicks(std::size_t rows, std::size_t cols, double density, std::uint64_t seed);

/// Users drawn around latent topics; item metadata are noisy topic labels.
struct PlantedOptions {
  std::size_t users = 2000;
  std::size_t items = 400;
  std::size_t topics = 20;
  std::size_t clicks_per_user = 20;
  double topic_purity = 0.85;  // share of clicks inside the user's topics
  double label_noise = 0.2;    // chance a metadata label is replaced
  std::uint64_t seed = 1;
};

struct PlantedFiles {
  std::filesystem::path interactions;  // user,item,value,timestamp
  std::filesystem::path genre;         // item,value categorical labels
  std::filesystem::path tags;          // item,value free text
  std::vector<std::size_t> item_topic;
};

PlantedFiles write_planted(const PlantedOptions& opts, const std::filesystem::path& dir);

/// Fresh empty directory under the system temp dir.
std::filesystem::path scratch_dir(const std::string& name);

void write_file(const std::filesystem::path& path, const std::string& text);
std::string read_file(const std::filesystem::path& path);

}  // namespace alignrec::testing
