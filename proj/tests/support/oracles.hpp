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

// Reference implementations used only to check the library. They work on
// plain nested vectors and share no code with the library's linear
// algebra, ranking or solver paths.

#pragma once

#include <cstddef>
#include <vector>

namespace alignrec::oracle {

using Vec = std::vector<double>;
using Mat = std::vector<Vec>;

Mat zeros(std::size_t rows, std::size_t cols);
Mat transpose(const Mat& a);
Mat matmul(const Mat& a, const Mat& b);

/// Solves a x = b by Gaussian elimination with partial pivoting.
Vec solve(Mat a, Vec b);
/// Inverse by Gauss-Jordan elimination with partial pivoting.
Mat inverse(Mat a);

/// P = (X^T X + l I)^-1, T_ij = -P_ij / P_jj off the diagonal, 0 on it.
Mat textbook_ease(const Mat& x, double lambda);

/// Column by column: the zero-diagonal ridge problem solved through its
/// bordered KKT system [[G + l I, e_j], [e_j^T, 0]].
Mat kkt_ease(const Mat& x, double lambda);

/// Minimizer of sum_u W_uu (X_ui - x_u t)^2 + l1 |t|^2 + g1 t_i^2 with
/// W_uu = w0 where X_ui = 1 and w1 elsewhere, from dense normal equations
/// with an explicit weight vector. When `b` is nonempty the weighted
/// alignment terms X^T W B and X^T W B_.i are added to the system and the
/// right-hand side.
Vec weighted_ridge_column(const Mat& x, const Mat& b, std::size_t i, double w0, double w1,
                          double lambda1, double gamma1);

/// Ranks every candidate with a full sort (score descending, index
/// ascending) and scores the top k.
struct RankMetrics {
  double hr;
  double ndcg;
};
RankMetrics rank_metrics(const Vec& scores, const std::vector<std::size_t>& candidates,
                         const std::vector<std::size_t>& relevant, std::size_t k);

}  // namespace alignrec::oracle
