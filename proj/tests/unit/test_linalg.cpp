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

#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "alignrec/linalg.hpp"
#include "fixtures.hpp"

namespace alignrec {
namespace {

SparseMatrix from_dense(const DenseMatrix& d) {
  std::vector<Triplet> t;
  for (std::size_t r = 0; r < d.rows(); ++r) {
    for (std::size_t c = 0; c < d.cols(); ++c) {
      if (d(r, c) != 0.0) t.push_back({r, c, d(r, c)});
    }
  }
  return SparseMatrix::from_triplets(d.rows(), d.cols(), t);
}

TEST(SparseMatrix, FromTripletsSortsAndReads) {
  const auto m = SparseMatrix::from_triplets(2, 3, {{1, 2, 5.0}, {0, 1, 2.0}, {1, 0, 3.0}});
  EXPECT_EQ(m.nnz(), 3u);
  EXPECT_DOUBLE_EQ(m.at(0, 1), 2.0);
  EXPECT_DOUBLE_EQ(m.at(1, 0), 3.0);
  EXPECT_DOUBLE_EQ(m.at(1, 2), 5.0);
  EXPECT_DOUBLE_EQ(m.at(0, 0), 0.0);
  const auto row1 = m.row(1);
  ASSERT_EQ(row1.size(), 2u);
  EXPECT_EQ(row1.cols[0], 0u);
  EXPECT_EQ(row1.cols[1], 2u);
}

TEST(SparseMatrix, RejectsInvalidEntries) {
  EXPECT_THROW(SparseMatrix::from_triplets(2, 2, {{2, 0, 1.0}}), ArgumentError);
  EXPECT_THROW(SparseMatrix::from_triplets(2, 2, {{0, 0, 1.0}, {0, 0, 2.0}}), ArgumentError);
  EXPECT_THROW(SparseMatrix::from_triplets(2, 2, {{0, 0, std::nan("")}}), ArgumentError);
}

TEST(SparseMatrix, TransposeSelectAndSums) {
  const auto m = SparseMatrix::from_triplets(3, 2, {{0, 0, 1}, {1, 1, 2}, {2, 0, 3}});
  const auto t = m.transposed();
  EXPECT_EQ(t.rows(), 2u);
  EXPECT_DOUBLE_EQ(t.at(0, 2), 3.0);
  EXPECT_DOUBLE_EQ(t.at(1, 1), 2.0);
  const std::vector<std::size_t> pick{2, 0};
  const auto s = m.select_rows(pick);
  EXPECT_DOUBLE_EQ(s.at(0, 0), 3.0);
  EXPECT_DOUBLE_EQ(s.at(1, 0), 1.0);
  EXPECT_EQ(m.column_sums(), (std::vector<double>{4.0, 2.0}));
}

TEST(Gram, HandExample) {
  const auto x = from_dense({{1, 1}, {1, 0}});
  EXPECT_EQ(gram(x), (DenseMatrix{{2, 1}, {1, 1}}));
}

TEST(Gram, IdentityAndZeros) {
  EXPECT_EQ(gram(from_dense(DenseMatrix::identity(3))), DenseMatrix::identity(3));
  EXPECT_EQ(gram(SparseMatrix(2, 2)), DenseMatrix(2, 2));
}

TEST(Gram, EmptyInputAndBudget) {
  EXPECT_THROW(gram(SparseMatrix(0, 0)), ArgumentError);
  const auto x = testing::random_clicks(10, 100, 0.1, 1);
  EXPECT_THROW(gram(x, 100 * 100 * 8 - 1), CapacityError);
  EXPECT_NO_THROW(gram(x, 100 * 100 * 8));
}

TEST(Gram, BitwiseSymmetricAndWorkerIndependent) {
  const auto x = testing::random_clicks(80, 40, 0.2, 9);
  const DenseMatrix g1 = gram(x, kDefaultMemoryBudget, 1);
  const DenseMatrix g4 = gram(x, kDefaultMemoryBudget, 4);
  EXPECT_EQ(g1, g4);
  EXPECT_EQ(g1, g1.transposed());
  const DenseMatrix dense = x.to_dense();
  for (std::size_t i = 0; i < 40; ++i) {
    for (std::size_t j = 0; j < 40; ++j) {
      double s = 0.0;
      for (std::size_t u = 0; u < 80; ++u) s += dense(u, i) * dense(u, j);
      EXPECT_DOUBLE_EQ(g1(i, j), s);
    }
  }
}

TEST(MaskedGram, Examples) {
  const auto x = from_dense({{1, 1}, {1, 0}});
  const bool first[] = {true, false};
  EXPECT_EQ(masked_gram(x, first), (DenseMatrix{{1, 1}, {1, 1}}));
  const bool all[] = {true, true};
  EXPECT_EQ(masked_gram(x, all), gram(x));
  const bool none[] = {false, false};
  EXPECT_EQ(masked_gram(x, none), DenseMatrix(2, 2));
  const bool short_mask[] = {true};
  EXPECT_THROW(masked_gram(x, short_mask), ArgumentError);
}

TEST(MaskedGram, ComplementaryMasksSumToGram) {
  const auto x = testing::random_clicks(50, 20, 0.25, 4);
  Rng rng(2);
  std::vector<char> raw(50);
  for (auto& b : raw) b = rng.uniform() < 0.4;
  std::vector<bool> mask(raw.begin(), raw.end());
  std::unique_ptr<bool[]> m(new bool[50]);
  std::unique_ptr<bool[]> c(new bool[50]);
  for (std::size_t i = 0; i < 50; ++i) {
    m[i] = mask[i];
    c[i] = !mask[i];
  }
  DenseMatrix sum = masked_gram(x, std::span<const bool>(m.get(), 50));
  add_scaled(sum, masked_gram(x, std::span<const bool>(c.get(), 50)));
  EXPECT_EQ(sum, gram(x));

  // add_row_gram over the masked rows gives the same matrix.
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < 50; ++i) {
    if (mask[i]) rows.push_back(i);
  }
  DenseMatrix acc(20, 20);
  add_row_gram(x, rows, 1.0, acc);
  EXPECT_EQ(acc, masked_gram(x, std::span<const bool>(m.get(), 50)));
}

TEST(SolveGeneral, Examples) {
  const DenseMatrix rhs{{1, 2}, {3, 4}, {5, 6}};
  EXPECT_EQ(solve_general(DenseMatrix::identity(3), rhs), rhs);
  const DenseMatrix s = solve_general(DenseMatrix{{2, 0}, {0, 4}}, DenseMatrix{{2}, {8}});
  EXPECT_DOUBLE_EQ(s(0, 0), 1.0);
  EXPECT_DOUBLE_EQ(s(1, 0), 2.0);
}

TEST(SolveGeneral, SingularCarriesPivot) {
  try {
    solve_general(DenseMatrix{{1, 1}, {1, 1}}, DenseMatrix{{1}, {2}});
    FAIL() << "expected SingularityError";
  } catch (const SingularityError& e) {
    EXPECT_EQ(e.pivot(), 1u);
  }
  EXPECT_THROW(solve_general(DenseMatrix{{1, 2}}, DenseMatrix{{1}}), ArgumentError);
}

TEST(SolveGeneral, ResidualBoundOnRandomNonSymmetricSystems) {
  Rng rng(17);
  for (int trial = 0; trial < 25; ++trial) {
    const std::size_t n = 5 + rng.below(40);
    DenseMatrix m(n, n);
    for (double& v : m.data()) v = rng.normal();
    for (std::size_t i = 0; i < n; ++i) m(i, i) += 3.0 * std::sqrt(static_cast<double>(n));
    DenseMatrix rhs(n, 3);
    for (double& v : rhs.data()) v = 100.0 * rng.normal();
    const DenseMatrix s = solve_general(m, rhs);
    EXPECT_LE(residual_max(m, s, rhs), 1e-8 * (1.0 + rhs.max_abs()));
  }
}

TEST(DenseOps, MultiplyVariantsAgree) {
  const auto x = testing::random_clicks(12, 7, 0.3, 5);
  DenseMatrix b(7, 4);
  Rng rng(1);
  for (double& v : b.data()) v = rng.normal();
  const DenseMatrix via_sparse = multiply(x, b);
  const DenseMatrix via_dense = multiply(x.to_dense(), b);
  for (std::size_t i = 0; i < via_sparse.size(); ++i) {
    EXPECT_NEAR(via_sparse.data()[i], via_dense.data()[i], 1e-12);
  }
  const std::vector<std::size_t> rows{3, 0};
  const DenseMatrix picked = multiply_rows(x, rows, b);
  for (std::size_t j = 0; j < 4; ++j) {
    EXPECT_DOUBLE_EQ(picked(0, j), via_sparse(3, j));
    EXPECT_DOUBLE_EQ(picked(1, j), via_sparse(0, j));
  }
}

TEST(DiagonalMatrix, NonnegativeFactory) {
  EXPECT_NO_THROW(DiagonalMatrix::nonnegative({0.0, 1.0}));
  EXPECT_THROW(DiagonalMatrix::nonnegative({-1.0}), ArgumentError);
  EXPECT_THROW(DiagonalMatrix::nonnegative({std::numeric_limits<double>::infinity()}), ArgumentError);
  DenseMatrix a{{1, 1}, {2, 2}};
  scale_columns(a, DiagonalMatrix({3.0, 0.5}));
  EXPECT_EQ(a, (DenseMatrix{{3, 0.5}, {6, 1}}));
}

}  // namespace
}  // namespace alignrec
