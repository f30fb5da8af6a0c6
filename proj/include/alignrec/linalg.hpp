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

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "alignrec/common.hpp"

namespace alignrec {

/// Default cap on a single dense allocation produced by gram-type products.
inline constexpr std::size_t kDefaultMemoryBudget = std::size_t{8} << 30;

struct Triplet {
  std::size_t row;
  std::size_t col;
  double value;
};

class DenseMatrix;

/// Compressed sparse row matrix. Immutable after construction.
class SparseMatrix {
 public:
  struct RowView {
    std::span<const std::uint32_t> cols;
    std::span<const double> values;
    std::size_t size() const { return cols.size(); }
  };

  SparseMatrix() = default;
  /// All-zero matrix of the given shape.
  SparseMatrix(std::size_t rows, std::size_t cols);

  /// Builds from unordered triplets. Throws ArgumentError on out-of-range
  /// indices, duplicate (row, col) pairs or non-finite values.
  static SparseMatrix from_triplets(std::size_t rows, std::size_t cols,
                                    std::vector<Triplet> entries);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t nnz() const { return values_.size(); }

  RowView row(std::size_t r) const {
    const std::size_t b = offsets_[r];
    const std::size_t e = offsets_[r + 1];
    return {std::span<const std::uint32_t>(indices_).subspan(b, e - b),
            std::span<const double>(values_).subspan(b, e - b)};
  }

  std::span<const std::size_t> offsets() const { return offsets_; }
  std::span<const std::uint32_t> indices() const { return indices_; }
  std::span<const double> values() const { return values_; }

  /// Value at (r, c), zero if absent. Binary search within the row.
  double at(std::size_t r, std::size_t c) const;

  SparseMatrix transposed() const;
  /// Rows in the given order, same column count.
  SparseMatrix select_rows(std::span<const std::size_t> rows) const;
  std::vector<double> column_sums() const;
  DenseMatrix to_dense() const;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<std::size_t> offsets_{0};
  std::vector<std::uint32_t> indices_;
  std::vector<double> values_;
};

/// Row-major dense matrix of doubles.
class DenseMatrix {
 public:
  DenseMatrix() = default;
  DenseMatrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  DenseMatrix(std::size_t rows, std::size_t cols, std::vector<double> data);
  /// Nested-list constructor, mostly for tests: {{1, 2}, {3, 4}}.
  DenseMatrix(std::initializer_list<std::initializer_list<double>> rows);

  static DenseMatrix identity(std::size_t n);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) {
    return std::span<double>(data_).subspan(r * cols_, cols_);
  }
  std::span<const double> row(std::size_t r) const {
    return std::span<const double>(data_).subspan(r * cols_, cols_);
  }

  std::vector<double> column(std::size_t c) const;

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }

  bool all_finite() const;
  double max_abs() const;
  DenseMatrix transposed() const;

  /// Copies the upper triangle onto the lower one (square only).
  void mirror_upper();

  bool operator==(const DenseMatrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

/// Diagonal matrix stored as its diagonal.
class DiagonalMatrix {
 public:
  DiagonalMatrix() = default;
  explicit DiagonalMatrix(std::vector<double> diagonal) : diagonal_(std::move(diagonal)) {}

  /// Diagonal for regularizer roles; throws ArgumentError on negative or
  /// non-finite entries.
  static DiagonalMatrix nonnegative(std::vector<double> diagonal);

  std::size_t dim() const { return diagonal_.size(); }
  double operator[](std::size_t i) const { return diagonal_[i]; }
  std::span<const double> values() const { return diagonal_; }

 private:
  std::vector<double> diagonal_;
};

/// A^T A. Bitwise symmetric. Throws CapacityError when cols^2 doubles
/// exceed budget_bytes, ArgumentError when A is empty.
DenseMatrix gram(const SparseMatrix& a, std::size_t budget_bytes = kDefaultMemoryBudget,
                 std::size_t workers = 1);

/// A_S^T A_S where S are the rows with row_mask[r] == true.
DenseMatrix masked_gram(const SparseMatrix& a, std::span<const bool> row_mask,
                        std::size_t budget_bytes = kDefaultMemoryBudget, std::size_t workers = 1);

/// Sum of outer products of the listed rows, added into `out` scaled by
/// `scale`. Used for rank updates restricted to a handful of rows.
void add_row_gram(const SparseMatrix& a, std::span<const std::size_t> rows, double scale,
                  DenseMatrix& out);

struct SolveOptions {
  /// Reciprocal condition estimate below this raises SingularityError.
  double min_rcond = 1e-12;
  /// Check the residual bound and apply one refinement step if violated.
  bool refine = true;
};

/// Solves M S = RHS with a partial-pivoting LU. M need not be symmetric.
/// Throws SingularityError (carrying the weakest pivot) when M is singular
/// to working precision.
DenseMatrix solve_general(const DenseMatrix& m, const DenseMatrix& rhs, SolveOptions opts = {});

/// Residual max-norm |M S - RHS|_max.
double residual_max(const DenseMatrix& m, const DenseMatrix& s, const DenseMatrix& rhs);

DenseMatrix multiply(const DenseMatrix& a, const DenseMatrix& b);
/// Sparse x dense product.
DenseMatrix multiply(const SparseMatrix& a, const DenseMatrix& b);
/// Dense result of a selected-rows sparse x dense product.
DenseMatrix multiply_rows(const SparseMatrix& a, std::span<const std::size_t> rows,
                          const DenseMatrix& b);

/// In-place a += scale * b.
void add_scaled(DenseMatrix& a, const DenseMatrix& b, double scale = 1.0);
/// In-place column scaling a(:, j) *= d[j].
void scale_columns(DenseMatrix& a, const DiagonalMatrix& d);

}  // namespace alignrec
