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

#include "alignrec/solvers.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <mutex>
#include <numeric>
#include <sstream>

#include "json.hpp"

#include "table_io.hpp"

namespace alignrec {

namespace {

constexpr char kModelMagic[8] = {'A', 'R', 'E', 'C', 'M', 'D', 'L', '1'};

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

double max_abs_diagonal(const DenseMatrix& theta) {
  double m = 0.0;
  for (std::size_t i = 0; i < theta.rows(); ++i) m = std::max(m, std::abs(theta(i, i)));
  return m;
}

void check_alignment_shape(const SparseMatrix& x, const AlignmentMatrix& b) {
  if (b.is_zero() && b.rows() == 0) return;
  if (b.rows() != x.rows() || b.cols() != x.cols()) {
    throw ArgumentError("alignment target is " + std::to_string(b.rows()) + "x" +
                        std::to_string(b.cols()) + ", clicks are " + std::to_string(x.rows()) +
                        "x" + std::to_string(x.cols()));
  }
}

void require_finite(const DenseMatrix& theta, const char* solver) {
  if (!theta.all_finite()) {
    throw NumericalError(std::string(solver) + ": non-finite weights; increase lambda1");
  }
}

}  // namespace

SolverKind parse_solver(const std::string& name) {
  if (name == "ease") return SolverKind::ease;
  if (name == "mslim") return SolverKind::mslim;
  if (name == "itemknn") return SolverKind::itemknn;
  throw ConfigError("unknown solver '" + name + "' (expected ease, mslim or itemknn)");
}

std::string to_string(SolverKind kind) {
  switch (kind) {
    case SolverKind::ease: return "ease";
    case SolverKind::mslim: return "mslim";
    case SolverKind::itemknn: return "itemknn";
  }
  return "unknown";
}

ItemModel fit_ease(const SparseMatrix& x, const FeatureSet* features,
                   const AlignmentMatrix& alignment, const EaseConfig& cfg,
                   const FitOptions& opts) {
  const auto start = std::chrono::steady_clock::now();
  if (!(cfg.lambda1 > 0.0) || !std::isfinite(cfg.lambda1)) {
    throw ArgumentError("ease: lambda1 must be finite and > 0");
  }
  if (!(cfg.lambda0 >= 0.0) || !std::isfinite(cfg.lambda0)) {
    throw ArgumentError("ease: lambda0 must be finite and >= 0");
  }
  const std::size_t n = x.cols();
  const bool aligned = cfg.use_alignment && !alignment.is_zero();
  if (aligned) check_alignment_shape(x, alignment);

  const DenseMatrix g = gram(x, opts.budget_bytes, opts.workers);
  DenseMatrix base = g;  // X^T X + l0 F^T F
  if (cfg.lambda0 > 0.0) {
    if (features == nullptr || features->empty()) {
      throw ArgumentError("ease: lambda0 > 0 needs item features");
    }
    if (features->num_items() != n) {
      throw ArgumentError("ease: features cover " + std::to_string(features->num_items()) +
                          " items, clicks have " + std::to_string(n));
    }
    add_scaled(base, features->inner_products(opts.budget_bytes), cfg.lambda0);
  }
  DenseMatrix xtb;
  DenseMatrix system = base;
  if (aligned) {
    xtb = alignment.xt_b(g);
    add_scaled(system, xtb);
  }
  for (std::size_t i = 0; i < n; ++i) system(i, i) += cfg.lambda1;

  DenseMatrix p;
  try {
    p = solve_general(system, DenseMatrix::identity(n), opts.solve);
  } catch (const SingularityError& e) {
    throw SingularityError(e.pivot(), e.rcond(),
                           std::string("ease: system matrix is singular (") + e.what() +
                               "); increase lambda1");
  }

  // P (system - l1 I) = I - l1 P.
  DenseMatrix theta(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) theta(i, j) = (i == j ? 1.0 : 0.0) - cfg.lambda1 * p(i, j);
  }
  for (std::size_t j = 0; j < n; ++j) {
    const double pjj = p(j, j);
    if (pjj == 0.0 || !std::isfinite(pjj)) {
      throw NumericalError("ease: degenerate item at column " + std::to_string(j) +
                           " (zero diagonal in the inverse)");
    }
    const double c = theta(j, j) / pjj;
    for (std::size_t i = 0; i < n; ++i) theta(i, j) -= p(i, j) * c;
    theta(j, j) = 0.0;
  }
  require_finite(theta, "ease");

  ItemModel model;
  model.solver = SolverKind::ease;
  model.params = {{"lambda0", cfg.lambda0},
                  {"lambda1", cfg.lambda1},
                  {"use_alignment", cfg.use_alignment ? 1.0 : 0.0}};
  model.diagnostics.max_abs_diagonal = max_abs_diagonal(theta);

  if (cfg.diagnostics) {
    // Half gradient of the objective at theta; the diagonal is the
    // constraint's multiplier and is excluded.
    DenseMatrix grad = multiply(base, theta);
    add_scaled(grad, base, -1.0);
    add_scaled(grad, theta, cfg.lambda1);
    if (aligned) {
      const std::span<const double> d = alignment.regularizer().values();
      std::vector<double> d2(n);
      for (std::size_t j = 0; j < n; ++j) d2[j] = d[j] * d[j];
      DenseMatrix fit_term = multiply(g, theta);
      scale_columns(fit_term, DiagonalMatrix(d2));
      add_scaled(grad, fit_term);
      DenseMatrix target = xtb;
      scale_columns(target, alignment.regularizer());
      add_scaled(grad, target, -1.0);
    }
    double worst = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        if (i != j) worst = std::max(worst, std::abs(grad(i, j)));
      }
    }
    model.diagnostics.gradient_residual = worst;
  }
  model.theta = std::move(theta);
  model.diagnostics.wall_seconds = seconds_since(start);
  return model;
}

ItemModel fit_mslim(const SparseMatrix& x, const AlignmentMatrix& alignment,
                    const MslimConfig& cfg, const FitOptions& opts) {
  const auto start = std::chrono::steady_clock::now();
  auto nonneg = [](double v) { return v >= 0.0 && std::isfinite(v); };
  if (!(cfg.w0 > 0.0) || !std::isfinite(cfg.w0)) throw ArgumentError("mslim: w0 must be > 0");
  if (!nonneg(cfg.w1)) throw ArgumentError("mslim: w1 must be >= 0");
  if (!nonneg(cfg.lambda1)) throw ArgumentError("mslim: lambda1 must be >= 0");
  if (!nonneg(cfg.gamma1)) throw ArgumentError("mslim: gamma1 must be >= 0");
  const std::size_t n = x.cols();
  const bool aligned = !alignment.is_zero();
  if (aligned) check_alignment_shape(x, alignment);

  const DenseMatrix g = gram(x, opts.budget_bytes, opts.workers);
  // Shared part of every column system: w1 (X^T X + X^T B).
  DenseMatrix shared = g;
  if (aligned) add_scaled(shared, alignment.xt_b(g));
  for (double& v : shared.data()) v *= cfg.w1;

  // Users who clicked each item.
  const SparseMatrix by_item = x.transposed();
  const double dw = cfg.w0 - cfg.w1;

  DenseMatrix theta(n, n);
  std::vector<std::string> failures;
  std::mutex failures_mutex;
  parallel_for(n, opts.workers, [&](std::size_t i) {
    const auto clickers = by_item.row(i).cols;
    std::vector<std::size_t> users(clickers.begin(), clickers.end());
    DenseMatrix a = shared;
    if (dw != 0.0) {
      add_row_gram(x, users, dw, a);
      alignment.add_xt_b_rows(users, dw, a);
    }
    DenseMatrix rhs(n, 1);
    for (std::size_t r = 0; r < n; ++r) rhs(r, 0) = a(r, i);
    for (std::size_t r = 0; r < n; ++r) a(r, r) += cfg.lambda1;
    a(i, i) += cfg.gamma1;
    try {
      const DenseMatrix col = solve_general(a, rhs, opts.solve);
      for (std::size_t r = 0; r < n; ++r) theta(r, i) = col(r, 0);
    } catch (const NumericalError& e) {
      std::lock_guard<std::mutex> lock(failures_mutex);
      failures.push_back("column " + std::to_string(i) + ": " + e.what());
    }
  });
  if (!failures.empty()) {
    std::sort(failures.begin(), failures.end());
    std::ostringstream msg;
    msg << "mslim: " << failures.size() << " of " << n
        << " column systems failed; increase lambda1 or gamma1";
    const std::size_t shown = std::min<std::size_t>(failures.size(), 10);
    for (std::size_t k = 0; k < shown; ++k) msg << "\n  " << failures[k];
    if (shown < failures.size()) msg << "\n  ...";
    throw SingularityError(0, 0.0, msg.str());
  }
  require_finite(theta, "mslim");

  ItemModel model;
  model.solver = SolverKind::mslim;
  model.params = {{"w0", cfg.w0}, {"w1", cfg.w1}, {"lambda1", cfg.lambda1}, {"gamma1", cfg.gamma1}};
  model.diagnostics.max_abs_diagonal = max_abs_diagonal(theta);
  model.theta = std::move(theta);
  model.diagnostics.wall_seconds = seconds_since(start);
  return model;
}

ItemModel itemknn_model(DenseMatrix similarity) {
  if (similarity.rows() != similarity.cols()) throw ArgumentError("itemknn: similarity must be square");
  ItemModel model;
  model.solver = SolverKind::itemknn;
  model.diagnostics.max_abs_diagonal = max_abs_diagonal(similarity);
  model.theta = std::move(similarity);
  return model;
}

DenseMatrix itemknn_scores(const SparseMatrix& x_rows, const DenseMatrix& similarity) {
  if (similarity.rows() != x_rows.cols()) throw ArgumentError("itemknn: dimension mismatch");
  return multiply(x_rows, similarity);
}

DenseMatrix predict(const ItemModel& model, const SparseMatrix& x_rows, bool mask_train,
                    std::optional<std::span<const std::size_t>> candidates) {
  if (model.theta.rows() != x_rows.cols()) {
    throw ArgumentError("predict: model has " + std::to_string(model.theta.rows()) +
                        " items, input has " + std::to_string(x_rows.cols()));
  }
  DenseMatrix scores = multiply(x_rows, model.theta);
  constexpr double kMasked = -std::numeric_limits<double>::infinity();
  if (candidates) {
    std::vector<bool> keep(scores.cols(), false);
    for (std::size_t c : *candidates) {
      if (c >= keep.size()) throw ArgumentError("predict: candidate out of range");
      keep[c] = true;
    }
    for (std::size_t r = 0; r < scores.rows(); ++r) {
      auto row = scores.row(r);
      for (std::size_t j = 0; j < row.size(); ++j) {
        if (!keep[j]) row[j] = kMasked;
      }
    }
  }
  if (mask_train) {
    for (std::size_t r = 0; r < scores.rows(); ++r) {
      for (std::uint32_t j : x_rows.row(r).cols) scores(r, j) = kMasked;
    }
  }
  return scores;
}

DenseMatrix predict_rows(const ItemModel& model, const SparseMatrix& x,
                         std::span<const std::size_t> rows, bool mask_train) {
  if (model.theta.rows() != x.cols()) throw ArgumentError("predict: item count mismatch");
  DenseMatrix scores = multiply_rows(x, rows, model.theta);
  if (mask_train) {
    for (std::size_t r = 0; r < rows.size(); ++r) {
      for (std::uint32_t j : x.row(rows[r]).cols) {
        scores(r, j) = -std::numeric_limits<double>::infinity();
      }
    }
  }
  return scores;
}

void save_model(const ItemModel& model, const IdIndex& items, const std::filesystem::path& path,
                const ModelStorage& storage) {
  const std::size_t n = model.theta.rows();
  if (items.size() != n) throw ArgumentError("save_model: item index does not match the model");
  auto out = io::open_output(path, std::ios::binary);
  out.write(kModelMagic, sizeof(kModelMagic));
  io::write_u32(out, static_cast<std::uint32_t>(model.solver));
  const bool topk = storage.top_k > 0 && storage.top_k < n;
  io::write_u32(out, topk ? 1 : 0);
  io::write_u64(out, n);
  for (const auto& id : items.ids()) io::write_string(out, id);
  if (!topk) {
    for (double v : model.theta.data()) io::write_f64(out, v);
  } else {
    io::write_u64(out, storage.top_k);
    std::vector<std::size_t> order(n);
    for (std::size_t j = 0; j < n; ++j) {
      std::iota(order.begin(), order.end(), std::size_t{0});
      std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(storage.top_k),
                        order.end(), [&](std::size_t a, std::size_t b) {
                          const double va = std::abs(model.theta(a, j));
                          const double vb = std::abs(model.theta(b, j));
                          return va != vb ? va > vb : a < b;
                        });
      std::sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(storage.top_k));
      for (std::size_t t = 0; t < storage.top_k; ++t) {
        io::write_u32(out, static_cast<std::uint32_t>(order[t]));
        io::write_f64(out, model.theta(order[t], j));
      }
    }
  }
  if (!out) throw DataError("failed writing " + path.string());

  nlohmann::ordered_json side;
  side["solver"] = to_string(model.solver);
  side["items"] = n;
  side["storage"] = topk ? "top_k" : "dense";
  if (topk) side["top_k"] = storage.top_k;
  nlohmann::ordered_json params = nlohmann::ordered_json::object();
  for (const auto& [k, v] : model.params) params[k] = v;
  side["params"] = params;
  nlohmann::ordered_json diag;
  diag["max_abs_diagonal"] = model.diagnostics.max_abs_diagonal;
  if (model.diagnostics.gradient_residual) {
    diag["gradient_residual"] = *model.diagnostics.gradient_residual;
  }
  side["diagnostics"] = diag;
  auto js = io::open_output(path.string() + ".json");
  js << side.dump(2) << "\n";
}

LoadedModel load_model(const std::filesystem::path& path) {
  auto in = io::open_input(path, std::ios::binary);
  char magic[8];
  if (!in.read(magic, 8) || !std::equal(magic, magic + 8, kModelMagic)) {
    throw FormatError(path.string() + ": not a model file");
  }
  LoadedModel loaded;
  const std::uint32_t solver = io::read_u32(in);
  if (solver > static_cast<std::uint32_t>(SolverKind::itemknn)) {
    throw FormatError(path.string() + ": unknown solver code");
  }
  loaded.model.solver = static_cast<SolverKind>(solver);
  const std::uint32_t storage = io::read_u32(in);
  const std::uint64_t n = io::read_u64(in);
  if (n > (std::uint64_t{1} << 24)) throw FormatError(path.string() + ": implausible item count");
  loaded.item_ids.reserve(n);
  for (std::uint64_t i = 0; i < n; ++i) loaded.item_ids.push_back(io::read_string(in));
  DenseMatrix theta(n, n);
  if (storage == 0) {
    for (double& v : theta.data()) v = io::read_f64(in);
  } else if (storage == 1) {
    const std::uint64_t k = io::read_u64(in);
    if (k > n) throw FormatError(path.string() + ": top-k exceeds item count");
    for (std::uint64_t j = 0; j < n; ++j) {
      for (std::uint64_t t = 0; t < k; ++t) {
        const std::uint32_t r = io::read_u32(in);
        const double v = io::read_f64(in);
        if (r >= n) throw FormatError(path.string() + ": row index out of range");
        theta(r, j) = v;
      }
    }
  } else {
    throw FormatError(path.string() + ": unknown storage code");
  }
  loaded.model.theta = std::move(theta);

  const std::filesystem::path side = path.string() + ".json";
  if (std::filesystem::exists(side)) {
    auto js = io::open_input(side);
    nlohmann::json j;
    try {
      js >> j;
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(side.string() + ": " + e.what());
    }
    if (j.contains("params")) {
      for (const auto& [k, v] : j["params"].items()) loaded.model.params[k] = v.get<double>();
    }
    if (j.contains("diagnostics")) {
      const auto& d = j["diagnostics"];
      loaded.model.diagnostics.max_abs_diagonal = d.value("max_abs_diagonal", 0.0);
      if (d.contains("gradient_residual")) {
        loaded.model.diagnostics.gradient_residual = d["gradient_residual"].get<double>();
      }
    }
  }
  return loaded;
}

}  // namespace alignrec
