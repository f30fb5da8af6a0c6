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

#include "alignrec/features.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <map>
#include <set>
#include <unordered_map>
#include <unordered_set>

#include "table_io.hpp"

namespace alignrec {

namespace fs = std::filesystem;

namespace {
constexpr char kEmbeddingMagic[8] = {'A', 'R', 'E', 'C', 'E', 'M', 'B', '1'};
}

AttributeKind parse_attribute_kind(const std::string& name) {
  if (name == "text") return AttributeKind::text;
  if (name == "categorical") return AttributeKind::categorical;
  if (name == "embedding_file") return AttributeKind::embedding_file;
  throw ConfigError("unknown attribute kind '" + name + "'");
}

std::string to_string(AttributeKind kind) {
  switch (kind) {
    case AttributeKind::text: return "text";
    case AttributeKind::categorical: return "categorical";
    case AttributeKind::embedding_file: return "embedding_file";
  }
  return "unknown";
}

FeatureBlock::FeatureBlock(std::string attribute, SparseMatrix m)
    : attribute_(std::move(attribute)), matrix_(std::move(m)) {}

FeatureBlock::FeatureBlock(std::string attribute, DenseMatrix m)
    : attribute_(std::move(attribute)), matrix_(std::move(m)) {}

std::size_t FeatureBlock::rows() const {
  return is_sparse() ? sparse().rows() : dense().rows();
}

std::size_t FeatureBlock::dim() const {
  return is_sparse() ? sparse().cols() : dense().cols();
}

std::vector<double> FeatureBlock::row_norms() const {
  std::vector<double> norms(rows(), 0.0);
  for (std::size_t r = 0; r < rows(); ++r) {
    double s = 0.0;
    if (is_sparse()) {
      for (double v : sparse().row(r).values) s += v * v;
    } else {
      for (double v : dense().row(r)) s += v * v;
    }
    norms[r] = std::sqrt(s);
  }
  return norms;
}

DenseMatrix FeatureBlock::inner_products(std::size_t budget_bytes) const {
  if (rows() == 0) return DenseMatrix();
  if (is_sparse()) {
    if (sparse().cols() == 0) return DenseMatrix(rows(), rows());
    return gram(sparse().transposed(), budget_bytes);
  }
  const auto n = rows();
  if (n > 0 && n * n * sizeof(double) > budget_bytes) {
    throw CapacityError("feature inner products exceed the memory budget");
  }
  DenseMatrix g = multiply(dense(), dense().transposed());
  g.mirror_upper();
  return g;
}

DenseMatrix FeatureBlock::to_dense() const {
  return is_sparse() ? sparse().to_dense() : dense();
}

void FeatureSet::add(FeatureBlock block) {
  for (const auto& b : blocks_) {
    if (b.attribute() == block.attribute()) {
      throw ArgumentError("duplicate attribute name '" + block.attribute() + "'");
    }
  }
  if (!blocks_.empty() && block.rows() != num_items()) {
    throw ArgumentError("attribute '" + block.attribute() + "' has " +
                        std::to_string(block.rows()) + " rows, expected " +
                        std::to_string(num_items()));
  }
  blocks_.push_back(std::move(block));
}

std::size_t FeatureSet::total_dim() const {
  std::size_t k = 0;
  for (const auto& b : blocks_) k += b.dim();
  return k;
}

DenseMatrix FeatureSet::inner_products(std::size_t budget_bytes) const {
  if (blocks_.empty()) throw ArgumentError("empty feature set");
  DenseMatrix total = blocks_.front().inner_products(budget_bytes);
  for (std::size_t k = 1; k < blocks_.size(); ++k) {
    add_scaled(total, blocks_[k].inner_products(budget_bytes));
  }
  return total;
}

FeatureBlock FeatureSet::concatenated(const std::string& name) const {
  if (blocks_.empty()) throw ArgumentError("empty feature set");
  DenseMatrix out(num_items(), total_dim());
  std::size_t offset = 0;
  for (const auto& b : blocks_) {
    const DenseMatrix d = b.to_dense();
    for (std::size_t r = 0; r < d.rows(); ++r) {
      std::copy(d.row(r).begin(), d.row(r).end(), out.row(r).begin() + static_cast<std::ptrdiff_t>(offset));
    }
    offset += b.dim();
  }
  return FeatureBlock(name, std::move(out));
}

// ------------------------------------------------------------- encoders

namespace {

std::vector<std::string> tokenize(const std::string& text) {
  std::vector<std::string> tokens;
  std::string cur;
  for (unsigned char c : text) {
    if (std::isalnum(c) || c >= 0x80) {
      cur.push_back(static_cast<char>(c < 0x80 ? std::tolower(c) : c));
    } else if (!cur.empty()) {
      tokens.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) tokens.push_back(std::move(cur));
  return tokens;
}

}  // namespace

FeatureBlock tfidf_encode(std::span<const std::string> texts, std::size_t vocab_size,
                          const std::string& attribute) {
  if (vocab_size < 1) throw ArgumentError("vocab_size must be >= 1");
  const std::size_t n = texts.size();
  std::vector<std::map<std::string, std::size_t>> counts(n);
  std::unordered_map<std::string, std::size_t> df;
  for (std::size_t i = 0; i < n; ++i) {
    for (auto& tok : tokenize(texts[i])) counts[i][tok]++;
    for (const auto& [tok, c] : counts[i]) df[tok]++;
  }

  std::vector<std::pair<std::string, std::size_t>> ranked(df.begin(), df.end());
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second > b.second : a.first < b.first;
  });
  if (ranked.size() > vocab_size) ranked.resize(vocab_size);

  std::unordered_map<std::string, std::size_t> column;
  std::vector<double> idf(ranked.size());
  for (std::size_t k = 0; k < ranked.size(); ++k) {
    column[ranked[k].first] = k;
    idf[k] = std::log((1.0 + static_cast<double>(n)) / (1.0 + static_cast<double>(ranked[k].second))) + 1.0;
  }

  std::vector<Triplet> entries;
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<Triplet> row;
    double norm2 = 0.0;
    for (const auto& [tok, c] : counts[i]) {
      auto it = column.find(tok);
      if (it == column.end()) continue;
      const double w = static_cast<double>(c) * idf[it->second];
      row.push_back({i, it->second, w});
      norm2 += w * w;
    }
    const double norm = std::sqrt(norm2);
    for (auto& t : row) {
      t.value /= norm;
      entries.push_back(t);
    }
  }
  return FeatureBlock(attribute, SparseMatrix::from_triplets(n, ranked.size(), std::move(entries)));
}

FeatureBlock multihot_encode(std::span<const std::vector<std::string>> categories,
                             const std::string& attribute) {
  IdIndex labels;
  std::vector<Triplet> entries;
  for (std::size_t i = 0; i < categories.size(); ++i) {
    std::set<std::size_t> cols;
    for (const auto& label : categories[i]) cols.insert(labels.add(label));
    for (auto c : cols) entries.push_back({i, c, 1.0});
  }
  return FeatureBlock(attribute,
                      SparseMatrix::from_triplets(categories.size(), labels.size(), std::move(entries)));
}

// ------------------------------------------------------------ embedding

namespace {

FeatureBlock finish_embedding(const std::string& attribute, const fs::path& path,
                              const IdIndex& item_index, std::size_t dim,
                              const std::vector<std::pair<std::string, std::vector<double>>>& rows) {
  DenseMatrix m(item_index.size(), dim);
  std::vector<bool> filled(item_index.size(), false);
  std::size_t matched = 0;
  for (const auto& [id, vec] : rows) {
    auto idx = item_index.find(id);
    if (!idx) continue;
    if (filled[*idx]) throw FormatError(path.string() + ": duplicate item id '" + id + "'");
    filled[*idx] = true;
    std::copy(vec.begin(), vec.end(), m.row(*idx).begin());
    ++matched;
  }
  if (matched == 0) {
    throw ArgumentError(path.string() + ": no embedding row matches a dataset item");
  }
  FeatureBlock block(attribute, std::move(m));
  block.missing_rows = item_index.size() - matched;
  if (block.missing_rows > 0) {
    log_warning(path.string() + ": " + std::to_string(block.missing_rows) +
                " items without an embedding get a zero row");
  }
  return block;
}

}  // namespace

FeatureBlock load_embedding_block(const fs::path& path, const IdIndex& item_index,
                                  const std::string& attribute) {
  auto in = io::open_input(path, std::ios::in | std::ios::binary);
  char magic[8] = {};
  in.read(magic, 8);
  std::vector<std::pair<std::string, std::vector<double>>> rows;

  if (in.gcount() == 8 && std::memcmp(magic, kEmbeddingMagic, 8) == 0) {
    const std::uint64_t n = io::read_u64(in);
    const std::uint64_t dim = io::read_u64(in);
    rows.reserve(n);
    for (std::uint64_t r = 0; r < n; ++r) {
      std::string id = io::read_string(in);
      std::vector<double> v(dim);
      for (auto& x : v) x = io::read_f64(in);
      rows.emplace_back(std::move(id), std::move(v));
    }
    return finish_embedding(attribute, path, item_index, dim, rows);
  }

  in.clear();
  in.seekg(0);
  std::string line;
  std::size_t lineno = 0;
  std::optional<std::size_t> dim;
  bool header = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (io::is_blank(line)) continue;
    const auto fields = io::split_fields(line, '\t');
    if (!header) {
      header = true;
      if (fields.size() != 2 || fields[0] != "item_id") {
        throw ParseError(path.string(), lineno, "expected header 'item_id<TAB>dim'");
      }
      if (auto d = io::parse_int(fields[1]); d && *d > 0) dim = static_cast<std::size_t>(*d);
      continue;
    }
    if (fields.size() != 2) throw ParseError(path.string(), lineno, "expected 'id<TAB>v1,v2,...'");
    std::vector<double> v;
    for (auto f : io::split_fields(fields[1], ',')) {
      auto x = io::parse_double(f);
      if (!x || !std::isfinite(*x)) throw ParseError(path.string(), lineno, "invalid vector component");
      v.push_back(*x);
    }
    if (!dim) dim = v.size();
    if (v.size() != *dim) {
      throw FormatError(path.string() + ":" + std::to_string(lineno) + ": vector width " +
                        std::to_string(v.size()) + " differs from " + std::to_string(*dim));
    }
    rows.emplace_back(std::string(fields[0]), std::move(v));
  }
  if (!header) throw FormatError(path.string() + ": empty embedding file");
  return finish_embedding(attribute, path, item_index, dim.value_or(0), rows);
}

void save_embedding_block(const FeatureBlock& block, const IdIndex& item_index, const fs::path& path) {
  if (block.rows() != item_index.size()) throw ArgumentError("block rows differ from item count");
  auto out = io::open_output(path, std::ios::out | std::ios::binary);
  out.write(kEmbeddingMagic, 8);
  io::write_u64(out, block.rows());
  io::write_u64(out, block.dim());
  const DenseMatrix d = block.to_dense();
  for (std::size_t r = 0; r < d.rows(); ++r) {
    io::write_string(out, item_index.id(r));
    for (double v : d.row(r)) io::write_f64(out, v);
  }
  if (!out) throw DataError("failed writing " + path.string());
}

// ------------------------------------------------------------- metadata

std::vector<std::vector<std::string>> read_attribute_values(const fs::path& path,
                                                            const IdIndex& item_index) {
  auto in = io::open_input(path);
  const char delim = format_from_extension(path) == TableFormat::tsv ? '\t' : ',';
  std::vector<std::vector<std::string>> values(item_index.size());
  std::string line;
  std::size_t lineno = 0;
  bool header = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (io::is_blank(line)) continue;
    if (!header) {
      header = true;
      continue;
    }
    const std::string_view sv(line);
    const auto cut = sv.find(delim);
    if (cut == std::string_view::npos) throw ParseError(path.string(), lineno, "expected 'item,value'");
    const auto item = io::trim(sv.substr(0, cut));
    const auto value = io::trim(sv.substr(cut + 1));
    if (item.empty()) throw ParseError(path.string(), lineno, "empty item id");
    if (auto idx = item_index.find(std::string(item))) {
      if (!value.empty()) values[*idx].emplace_back(value);
    }
  }
  return values;
}

FeatureBlock build_feature_block(const AttributeSpec& spec, const IdIndex& item_index) {
  switch (spec.kind) {
    case AttributeKind::text: {
      const auto values = read_attribute_values(spec.path, item_index);
      std::vector<std::string> texts(values.size());
      for (std::size_t i = 0; i < values.size(); ++i) {
        for (const auto& v : values[i]) {
          if (!texts[i].empty()) texts[i] += ' ';
          texts[i] += v;
        }
      }
      return tfidf_encode(texts, spec.vocab_size, spec.name);
    }
    case AttributeKind::categorical:
      return multihot_encode(read_attribute_values(spec.path, item_index), spec.name);
    case AttributeKind::embedding_file:
      return load_embedding_block(spec.path, item_index, spec.name);
  }
  throw ConfigError("unhandled attribute kind");
}

FeatureSet build_features(std::span<const AttributeSpec> specs, const IdIndex& item_index) {
  FeatureSet set;
  for (const auto& spec : specs) set.add(build_feature_block(spec, item_index));
  return set;
}

}  // namespace alignrec
