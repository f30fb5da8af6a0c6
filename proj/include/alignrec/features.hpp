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

#include <filesystem>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "alignrec/data.hpp"
#include "alignrec/linalg.hpp"

namespace alignrec {

enum class AttributeKind { text, categorical, embedding_file };

AttributeKind parse_attribute_kind(const std::string& name);
std::string to_string(AttributeKind kind);

struct AttributeSpec {
  std::string name;
  AttributeKind kind = AttributeKind::categorical;
  std::filesystem::path path;
  std::size_t vocab_size = 1000;  // text only
};

/// One attribute's item x dim representation. Rows follow the item index
/// of the dataset it was built for; missing metadata gives a zero row.
class FeatureBlock {
 public:
  FeatureBlock(std::string attribute, SparseMatrix m);
  FeatureBlock(std::string attribute, DenseMatrix m);

  const std::string& attribute() const { return attribute_; }
  std::size_t rows() const;
  std::size_t dim() const;
  bool is_sparse() const { return std::holds_alternative<SparseMatrix>(matrix_); }
  const SparseMatrix& sparse() const { return std::get<SparseMatrix>(matrix_); }
  const DenseMatrix& dense() const { return std::get<DenseMatrix>(matrix_); }

  std::vector<double> row_norms() const;
  /// Z Z^T, the item x item inner products (bitwise symmetric).
  DenseMatrix inner_products(std::size_t budget_bytes = kDefaultMemoryBudget) const;
  DenseMatrix to_dense() const;

  /// Items whose metadata was absent (embedding files only).
  std::size_t missing_rows = 0;

 private:
  std::string attribute_;
  std::variant<SparseMatrix, DenseMatrix> matrix_;
};

/// Ordered attribute blocks sharing one item dimension.
class FeatureSet {
 public:
  /// Throws ArgumentError on a duplicate name or item-count mismatch.
  void add(FeatureBlock block);

  std::span<const FeatureBlock> blocks() const { return blocks_; }
  std::size_t size() const { return blocks_.size(); }
  bool empty() const { return blocks_.empty(); }
  std::size_t num_items() const { return blocks_.empty() ? 0 : blocks_.front().rows(); }
  /// K, the summed block width.
  std::size_t total_dim() const;

  /// F F^T over the concatenated representation: sum of per-block inner
  /// products.
  DenseMatrix inner_products(std::size_t budget_bytes = kDefaultMemoryBudget) const;
  /// All blocks side by side as one dense block.
  FeatureBlock concatenated(const std::string& name = "all") const;

 private:
  std::vector<FeatureBlock> blocks_;
};

/// Lowercase, split on non-alphanumerics (bytes >= 0x80 count as word
/// characters), keep the vocab_size tokens with highest document
/// frequency (ties lexicographic), weight raw tf by
/// idf = ln((1 + n) / (1 + df)) + 1 and L2-normalize rows.
FeatureBlock tfidf_encode(std::span<const std::string> texts, std::size_t vocab_size = 1000,
                          const std::string& attribute = "text");

/// Columns are the distinct labels in first-appearance order.
FeatureBlock multihot_encode(std::span<const std::vector<std::string>> categories,
                             const std::string& attribute = "categories");

/// Reads a text (`item_id<TAB>dim` header, then `id<TAB>v1,v2,...`) or
/// binary embedding file aligned to item_index.
FeatureBlock load_embedding_block(const std::filesystem::path& path, const IdIndex& item_index,
                                  const std::string& attribute = "embedding");

/// Writes the binary variant: magic "ARECEMB1", u64 rows, u64 dim, then per
/// row a u32-length-prefixed id followed by dim little-endian f64 values.
void save_embedding_block(const FeatureBlock& block, const IdIndex& item_index,
                          const std::filesystem::path& path);

/// Per-item values from an `item,value` metadata CSV (header required).
/// Items not in item_index are skipped.
std::vector<std::vector<std::string>> read_attribute_values(const std::filesystem::path& path,
                                                            const IdIndex& item_index);

FeatureBlock build_feature_block(const AttributeSpec& spec, const IdIndex& item_index);
FeatureSet build_features(std::span<const AttributeSpec> specs, const IdIndex& item_index);

}  // namespace alignrec
