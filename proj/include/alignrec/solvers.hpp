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
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "alignrec/alignment.hpp"
#include "alignrec/data.hpp"
#include "alignrec/features.hpp"
#include "alignrec/linalg.hpp"

namespace alignrec {

enum class SolverKind { ease, mslim, itemknn };

SolverKind parse_solver(const std::string& name);
std::string to_string(SolverKind kind);

struct EaseConfig {
  double lambda0 = 0.0;  // feature reconstruction weight
  double lambda1 = 1.0;  // ridge
  bool use_alignment = true;
  /// Also report the largest off-diagonal gradient entry of the objective
  /// at the solution (costs a few extra matrix products).
  bool diagnostics = false;
};

struct MslimConfig {
  double w0 = 1.0;  // weight on observed clicks
  double w1 = 1.0;  // weight on unobserved entries
  double lambda1 = 1.0;
  double gamma1 = 0.0;  // penalty on the self-weight
};

struct FitOptions {
  std::size_t workers = 1;
  std::size_t budget_bytes = kDefaultMemoryBudget;
  SolveOptions solve;
};

struct FitDiagnostics {
  double wall_seconds = 0.0;
  double max_abs_diagonal = 0.0;
  std::optional<double> gradient_residual;
};

struct ItemModel {
  SolverKind solver = SolverKind::ease;
  DenseMatrix theta;  // item x item
  std::map<std::string, double> params;
  FitDiagnostics diagnostics;
};

/// Closed-form item-item model with zero diagonal minimizing
///   |X - X T|^2 + l1 |T|^2 + |X T D - B|^2 + l0 |F - F T|^2
/// where B = alpha X G D comes from `alignment` (ignored when
/// use_alignment is false) and F stacks the feature blocks item-wise.
/// `features` may be null when lambda0 = 0.
ItemModel fit_ease(const SparseMatrix& x, const FeatureSet* features,
                   const AlignmentMatrix& alignment, const EaseConfig& cfg,
                   const FitOptions& opts = {});

/// Column-wise weighted least squares: observed clicks (users who clicked
/// item i) weigh w0, the rest w1; ridge lambda1 plus gamma1 on the
/// self-weight. Columns are solved independently in parallel. Throws
/// SingularityError listing every failed column.
ItemModel fit_mslim(const SparseMatrix& x, const AlignmentMatrix& alignment,
                    const MslimConfig& cfg, const FitOptions& opts = {});

/// Item-item model whose weights are the given similarity.
ItemModel itemknn_model(DenseMatrix similarity);

/// x_rows G: each user's clicks summed through the similarity.
DenseMatrix itemknn_scores(const SparseMatrix& x_rows, const DenseMatrix& similarity);

/// Scores = x_rows Theta. With mask_train, each row's own positives are set
/// to -inf. With candidates, everything outside them is -inf.
DenseMatrix predict(const ItemModel& model, const SparseMatrix& x_rows, bool mask_train,
                    std::optional<std::span<const std::size_t>> candidates = std::nullopt);

/// Same, for selected rows of x.
DenseMatrix predict_rows(const ItemModel& model, const SparseMatrix& x,
                         std::span<const std::size_t> rows, bool mask_train);

// Binary model file: "ARECMDL1", u32 solver, u32 storage (0 dense,
// 1 top-k), u64 n, n item ids, then either n*n row-major f64 or u64 k
// followed by n columns of k (u32 row, f64 value) pairs. A JSON sidecar
// <path>.json holds the parameters and fit diagnostics.
struct ModelStorage {
  std::size_t top_k = 0;  // 0 stores the dense matrix
};

void save_model(const ItemModel& model, const IdIndex& items, const std::filesystem::path& path,
                const ModelStorage& storage = {});

struct LoadedModel {
  ItemModel model;
  std::vector<std::string> item_ids;
};

LoadedModel load_model(const std::filesystem::path& path);

}  // namespace alignrec
