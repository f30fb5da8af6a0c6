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

#include "alignrec/linalg.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

namespace alignrec {

namespace {

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMajor>;
using Map = Eigen::Map<RowMajor>;

ConstMap view(const DenseMatrix& m) {
  return ConstMap(m.data().data(), static_cast<Eigen::Index>(m.rows()),
                  static_cast<Eigen::Index>(m.cols()));
}

Map view(DenseMatrix& m) {
  return Map(m.data().data(), static_cast<Eigen::Index>(m.rows()),
             static_cast<Eigen::Index>(m.cols()));
}

void check_capacity(std::size_t n, std::size_t budget_bytes, const char* what) {
  if (n != 0 && n > std::numeric_limits<std::size_t>::max() / n / sizeof(double)) {
    throw CapacityError(std::string(what) + ": dimension overflow");
  }
  const std::size_t bytes = n * n * sizeof(double);
  if (bytes > budget_bytes) {
    std::ostringstream os;
    os << what << ": " << n << "x" << n << " dense result needs " << bytes
       << " bytes, budget is " << budget_bytes;
    throw CapacityError(os.str());
  }
}

// Upper-triangle accumulation of sum over selected rows of a_r^T a_r.
// Each worker owns a contiguous band of output rows and scans every input
// row in order, so every entry sees the same summation order regardless of
// the worker count.
DenseMatrix gram_impl(const SparseMatrix& a, const std::vector<bool>* mask,
                      std::size_t budget_bytes, std::size_t workers) {
  const std::size_t n = a.cols();
  check_capacity(n, budget_bytes, "gram");
  DenseMatrix out(n, n);
  workers = std::max<std::size_t>(1, std::min(workers, n));
  const std::size_t band = n == 0 ? 0 : (n + workers - 1) / workers;
  parallel_for(workers, workers, [&](std::size_t w) {
    const std::size_t lo = w * band;
    const std::size_t hi = std::min(n, lo + band);
    if (lo >= hi) return;
    for (std::size_t r = 0; r < a.rows(); ++r) {
      if (mask && !(*mask)[r]) continue;
      const auto row = a.row(r);
      for (std::size_t p = 0; p < row.size(); ++p) {
        const std::size_t i = row.cols[p];
        if (i < lo || i >= hi) continue;
        const double vi = row.values[p];
        auto out_row = out.row(i);
        for (std::size_t q = p; q < row.size(); ++q) {
          out_row[row.cols[q]] += vi * row.values[q];
        }
      }
    }
  });
  out.mirror_upper();
  return out;
}

}  // namespace

// ---------------------------------------------------------------- sparse

SparseMatrix::SparseMatrix(std::size_t rows, std::size_t cols)
    : rows_(rows), cols_(cols), offsets_(rows + 1, 0) {}

SparseMatrix SparseMatrix::from_triplets(std::size_t rows, std::size_t cols,
                                         std::vector<Triplet> entries) {
  if (cols > std::numeric_limits<std::uint32_t>::max()) {
    throw ArgumentError("sparse matrix: too many columns for 32-bit indices");
  }
  for (const auto& t : entries) {
    if (t.row >= rows || t.col >= cols) {
      std::ostringstream os;
      os << "sparse matrix: entry (" << t.row << ", " << t.col << ") outside " << rows << "x"
         << cols;
      throw ArgumentError(os.str());
    }
    if (!std::isfinite(t.value)) throw ArgumentError("sparse matrix: non-finite value");
  }
  std::sort(entries.begin(), entries.end(), [](const Triplet& x, const Triplet& y) {
    return x.row != y.row ? x.row < y.row : x.col < y.col;
  });
  SparseMatrix m(rows, cols);
  m.indices_.reserve(entries.size());
  m.values_.reserve(entries.size());
  for (std::size_t k = 0; k < entries.size(); ++k) {
    if (k > 0 && entries[k].row == entries[k - 1].row && entries[k].col == entries[k - 1].col) {
      std::ostringstream os;
      os << "sparse matrix: duplicate entry (" << entries[k].row << ", " << entries[k].col << ")";
      throw ArgumentError(os.str());
    }
    m.offsets_[entries[k].row + 1]++;
    m.indices_.push_back(static_cast<std::uint32_t>(entries[k].col));
    m.values_.push_back(entries[k].value);
  }
  std::partial_sum(m.offsets_.begin(), m.offsets_.end(), m.offsets_.begin());
  return m;
}

double SparseMatrix::at(std::size_t r, std::size_t c) const {
  const auto v = row(r);
  auto it = std::lower_bound(v.cols.begin(), v.cols.end(), static_cast<std::uint32_t>(c));
  if (it == v.cols.end() || *it != c) return 0.0;
  return v.values[static_cast<std::size_t>(it - v.cols.begin())];
}

SparseMatrix SparseMatrix::transposed() const {
  SparseMatrix t(cols_, rows_);
  t.indices_.resize(nnz());
  t.values_.resize(nnz());
  for (auto c : indices_) t.offsets_[c + 1]++;
  std::partial_sum(t.offsets_.begin(), t.offsets_.end(), t.offsets_.begin());
  std::vector<std::size_t> cursor(t.offsets_.begin(), t.offsets_.end() - 1);
  for (std::size_t r = 0; r < rows_; ++r) {
    for (std::size_t k = offsets_[r]; k < offsets_[r + 1]; ++k) {
      const std::size_t dst = cursor[indices_[k]]++;
      t.indices_[dst] = static_cast<std::uint32_t>(r);
      t.values_[dst] = values_[k];
    }
  }
  return t;
}

SparseMatrix SparseMatrix::select_rows(std::span<const std::size_t> rows) const {
  SparseMatrix s(rows.size(), cols_);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= rows_) throw ArgumentError("select_rows: row out of range");
    const auto v = row(rows[i]);
    s.indices_.insert(s.indices_.end(), v.cols.begin(), v.cols.end());
    s.values_.insert(s.values_.end(), v.values.begin(), v.values.end());
    s.offsets_[i + 1] = s.indices_.size();
  }
  return s;
}

std::vector<double> SparseMatrix::column_sums() const {
  std::vector<double> sums(cols_, 0.0);
  for (std::size_t k = 0; k < nnz(); ++k) sums[indices_[k]] += values_[k];
  return sums;
}

DenseMatrix SparseMatrix::to_dense() const {
  DenseMatrix d(rows_, cols_);
  for (std::size_t r = 0; r < rows_; ++r) {
    const auto v = row(r);
    for (std::size_t k = 0; k < v.size(); ++k) d(r, v.cols[k]) = v.values[k];
  }
  return d;
}

// ----------------------------------------------------------------- dense

DenseMatrix::DenseMatrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows_ * cols_) {
    throw ArgumentError("dense matrix: data length does not match shape");
  }
}

DenseMatrix::DenseMatrix(std::initializer_list<std::initializer_list<double>> rows) {
  rows_ = rows.size();
  cols_ = rows_ == 0 ? 0 : rows.begin()->size();
  data_.reserve(rows_ * cols_);
  for (const auto& r : rows) {
    if (r.size() != cols_) throw ArgumentError("dense matrix: ragged initializer");
    data_.insert(data_.end(), r.begin(), r.end());
  }
}

DenseMatrix DenseMatrix::identity(std::size_t n) {
  DenseMatrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

std::vector<double> DenseMatrix::column(std::size_t c) const {
  std::vector<double> out(rows_);
  for (std::size_t r = 0; r < rows_; ++r) out[r] = (*this)(r, c);
  return out;
}

bool DenseMatrix::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

double DenseMatrix::max_abs() const {
  double m = 0.0;
  for (double v : data_) m = std::max(m, std::abs(v));
  return m;
}

DenseMatrix DenseMatrix::transposed() const {
  DenseMatrix t(cols_, rows_);
  for (std::size_t r = 0; r < rows_; ++r)
    for (std::size_t c = 0; c < cols_; ++c) t(c, r) = (*this)(r, c);
  return t;
}

void DenseMatrix::mirror_upper() {
  if (rows_ != cols_) throw ArgumentError("mirror_upper: matrix not square");
  for (std::size_t i = 0; i < rows_; ++i)
    for (std::size_t j = i + 1; j < cols_; ++j) (*this)(j, i) = (*this)(i, j);
}

DiagonalMatrix DiagonalMatrix::nonnegative(std::vector<double> diagonal) {
  for (double v : diagonal) {
    if (!std::isfinite(v) || v < 0.0) {
      throw ArgumentError("regularizer diagonal must be finite and non-negative");
    }
  }
  return DiagonalMatrix(std::move(diagonal));
}

// ------------------------------------------------------------- products

DenseMatrix gram(const SparseMatrix& a, std::size_t budget_bytes, std::size_t workers) {
  if (a.rows() == 0 || a.cols() == 0) throw ArgumentError("gram: empty matrix");
  return gram_impl(a, nullptr, budget_bytes, workers);
}

DenseMatrix masked_gram(const SparseMatrix& a, std::span<const bool> row_mask,
                        std::size_t budget_bytes, std::size_t workers) {
  if (row_mask.size() != a.rows()) {
    throw ArgumentError("masked_gram: mask length " + std::to_string(row_mask.size()) +
                        " != rows " + std::to_string(a.rows()));
  }
  std::vector<bool> mask(row_mask.begin(), row_mask.end());
  return gram_impl(a, &mask, budget_bytes, workers);
}

void add_row_gram(const SparseMatrix& a, std::span<const std::size_t> rows, double scale,
                  DenseMatrix& out) {
  if (out.rows() != a.cols() || out.cols() != a.cols()) {
    throw ArgumentError("add_row_gram: output shape mismatch");
  }
  for (std::size_t r : rows) {
    const auto v = a.row(r);
    for (std::size_t p = 0; p < v.size(); ++p) {
      const double vi = scale * v.values[p];
      auto out_row = out.row(v.cols[p]);
      for (std::size_t q = 0; q < v.size(); ++q) out_row[v.cols[q]] += vi * v.values[q];
    }
  }
}

DenseMatrix solve_general(const DenseMatrix& m, const DenseMatrix& rhs, SolveOptions opts) {
  if (m.rows() != m.cols()) throw ArgumentError("solve_general: matrix not square");
  if (rhs.rows() != m.rows()) throw ArgumentError("solve_general: rhs row count mismatch");
  if (!m.all_finite()) throw NumericalError("solve_general: non-finite matrix entries");
  const std::size_t n = m.rows();
  if (n == 0) return DenseMatrix(0, rhs.cols());

  Eigen::PartialPivLU<Eigen::MatrixXd> lu(Eigen::MatrixXd(view(m)));
  const auto diag = lu.matrixLU().diagonal();
  Eigen::Index weakest = 0;
  diag.cwiseAbs().minCoeff(&weakest);
  const double rcond = diag(weakest) == 0.0 ? 0.0 : lu.rcond();
  if (!(rcond >= opts.min_rcond)) {
    std::ostringstream os;
    os << "matrix is singular to working precision (rcond estimate " << rcond << ", weakest pivot "
       << weakest << ")";
    throw SingularityError(static_cast<std::size_t>(weakest), rcond, os.str());
  }

  Eigen::MatrixXd b = view(rhs);
  Eigen::MatrixXd s = lu.solve(b);
  if (opts.refine) {
    const Eigen::MatrixXd mm = view(m);
    const double bound = 1e-8 * (1.0 + (b.size() ? b.cwiseAbs().maxCoeff() : 0.0));
    Eigen::MatrixXd r = b - mm * s;
    if (r.size() && r.cwiseAbs().maxCoeff() > bound) s += lu.solve(r);
  }
  DenseMatrix out(n, rhs.cols());
  view(out) = s;
  return out;
}

double residual_max(const DenseMatrix& m, const DenseMatrix& s, const DenseMatrix& rhs) {
  const RowMajor r = view(m) * view(s) - view(rhs);
  return r.size() ? r.cwiseAbs().maxCoeff() : 0.0;
}

DenseMatrix multiply(const DenseMatrix& a, const DenseMatrix& b) {
  if (a.cols() != b.rows()) throw ArgumentError("multiply: inner dimension mismatch");
  DenseMatrix out(a.rows(), b.cols());
  view(out).noalias() = view(a) * view(b);
  return out;
}

DenseMatrix multiply(const SparseMatrix& a, const DenseMatrix& b) {
  if (a.cols() != b.rows()) throw ArgumentError("multiply: inner dimension mismatch");
  DenseMatrix out(a.rows(), b.cols());
  for (std::size_t r = 0; r < a.rows(); ++r) {
    const auto v = a.row(r);
    auto dst = out.row(r);
    for (std::size_t k = 0; k < v.size(); ++k) {
      const auto src = b.row(v.cols[k]);
      const double x = v.values[k];
      for (std::size_t c = 0; c < dst.size(); ++c) dst[c] += x * src[c];
    }
  }
  return out;
}

DenseMatrix multiply_rows(const SparseMatrix& a, std::span<const std::size_t> rows,
                          const DenseMatrix& b) {
  if (a.cols() != b.rows()) throw ArgumentError("multiply: inner dimension mismatch");
  DenseMatrix out(rows.size(), b.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto v = a.row(rows[i]);
    auto dst = out.row(i);
    for (std::size_t k = 0; k < v.size(); ++k) {
      const auto src = b.row(v.cols[k]);
      const double x = v.values[k];
      for (std::size_t c = 0; c < dst.size(); ++c) dst[c] += x * src[c];
    }
  }
  return out;
}

void add_scaled(DenseMatrix& a, const DenseMatrix& b, double scale) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw ArgumentError("add_scaled: shape mismatch");
  auto dst = a.data();
  const auto src = b.data();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += scale * src[i];
}

void scale_columns(DenseMatrix& a, const DiagonalMatrix& d) {
  if (d.dim() != a.cols()) throw ArgumentError("scale_columns: dimension mismatch");
  for (std::size_t r = 0; r < a.rows(); ++r) {
    auto row = a.row(r);
    for (std::size_t c = 0; c < row.size(); ++c) row[c] *= d[c];
  }
}

}  // namespace alignrec
