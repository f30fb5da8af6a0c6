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

#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "alignrec/data.hpp"
#include "alignrec/features.hpp"
#include "alignrec/linalg.hpp"

namespace alignrec {

/// Weights of the per-attribute similarities (first order) and of the
/// symmetrized pairwise products (second order). Pairs are ordered
/// (0,1), (0,2), ..., (0,N-1), (1,2), ...
struct MixCoefficients {
  std::vector<double> first_order;
  std::vector<double> second_order;

  static MixCoefficients uniform_first_order(std::size_t attributes, double value = 1.0);
  static std::size_t pair_count(std::size_t attributes) { return attributes * (attributes - (attributes > 0)) / 2; }

  std::size_t nonzeros() const;
  /// Throws ArgumentError on negative entries or wrong lengths.
  void validate(std::size_t attributes) const;

  bool operator==(const MixCoefficients&) const = default;
};

enum class DecayKind { step_linear, exponential };

DecayKind parse_decay(const std::string& name);
std::string to_string(DecayKind kind);

struct AlignmentConfig {
  double delta = 20.0;       // cosine smoothing
  double alpha = 1.0;        // alignment scale, 0 disables alignment
  double beta = 100.0;       // popularity regularizer scale
  double percentile = 10.0;  // click-count percentile p, in (0, 100]
  DecayKind decay = DecayKind::step_linear;

  void validate() const;
};

/// G_ij = z_i . z_j / (|z_i| |z_j| + delta). Rows that are all zero give
/// zero similarity. Result is bitwise symmetric.
DenseMatrix smoothed_cosine(const FeatureBlock& block, double delta,
                            std::size_t budget_bytes = kDefaultMemoryBudget);

/// sum_k mu_k G_k + sum_{k<l} mu_kl (G_k G_l + G_l G_k) / 2.
DenseMatrix mix_similarities(std::span<const DenseMatrix> similarities, const MixCoefficients& mu);

/// Diagonal d_j = h(r_j) over item click counts r_j = column sums of x.
/// Step-linear: (beta / p) (p - r) for r <= p, else 0. Exponential:
/// beta * exp(-r ln2 / p). When p = 0 both fall back to beta on unclicked
/// items and 0 elsewhere, with a warning.
DiagonalMatrix popularity_regularizer(const SparseMatrix& x, const AlignmentConfig& cfg);

/// B = alpha * X G D, kept in factored form. Rows are produced on demand;
/// the dense |U| x |I| matrix is only built by materialize().
class AlignmentMatrix {
 public:
  /// The zero alignment target for a users x items problem.
  static AlignmentMatrix zero(std::size_t users, std::size_t items);

  AlignmentMatrix(std::shared_ptr<const SparseMatrix> x, std::shared_ptr<const DenseMatrix> g,
                  DiagonalMatrix d, double alpha);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  bool is_zero() const;
  double alpha() const { return alpha_; }
  const DiagonalMatrix& regularizer() const { return d_; }

  /// Rows of B for the listed users of the bound X.
  DenseMatrix rows_of(std::span<const std::size_t> users) const;
  /// Dense B. Throws CapacityError above budget_bytes.
  DenseMatrix materialize(std::size_t budget_bytes = kDefaultMemoryBudget) const;
  /// X^T B = alpha (X^T X) G D, given gram_x = X^T X.
  DenseMatrix xt_b(const DenseMatrix& gram_x) const;
  /// out += scale * sum over listed users u of x_u^T b_u.
  void add_xt_b_rows(std::span<const std::size_t> users, double scale, DenseMatrix& out) const;

 private:
  AlignmentMatrix(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols) {}

  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::shared_ptr<const SparseMatrix> x_;
  std::shared_ptr<const DenseMatrix> g_;
  DiagonalMatrix d_;
  double alpha_ = 0.0;
};

/// B = alpha * X G D^R with D^R = popularity_regularizer(X, cfg).
AlignmentMatrix align(std::shared_ptr<const SparseMatrix> x, std::shared_ptr<const DenseMatrix> g,
                      const AlignmentConfig& cfg);
AlignmentMatrix align(const SparseMatrix& x, const DenseMatrix& g, const AlignmentConfig& cfg);

struct MixFitOptions {
  std::size_t k = 10;
  std::size_t workers = 1;
};

struct MixFitResult {
  MixCoefficients best;
  std::size_t best_index = 0;
  std::vector<double> validation_ndcg;  // one per grid point
};

/// Scores a candidate mixed similarity; larger is better.
using SimilarityObjective = std::function<double(const DenseMatrix& mixed)>;

/// Evaluates every grid point and returns the best one. Ties go to fewer
/// nonzero coefficients, then to the earlier grid point.
MixFitResult select_mix_coefficients(std::span<const DenseMatrix> similarities,
                                     std::span<const MixCoefficients> grid,
                                     const SimilarityObjective& objective, std::size_t workers = 1);

/// Grid search of mixing weights on cold-validation ndcg@k of the
/// metadata-only scores X_train G_mixed.
MixFitResult fit_mix_coefficients(std::span<const DenseMatrix> similarities, const ColdSplit& split,
                                  std::span<const MixCoefficients> grid,
                                  const MixFitOptions& opts = {});

}  // namespace alignrec
