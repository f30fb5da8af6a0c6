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

#include "alignrec/alignment.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

#include "alignrec/eval.hpp"

namespace alignrec {

MixCoefficients MixCoefficients::uniform_first_order(std::size_t attributes, double value) {
  MixCoefficients mu;
  mu.first_order.assign(attributes, value);
  mu.second_order.assign(pair_count(attributes), 0.0);
  return mu;
}

std::size_t MixCoefficients::nonzeros() const {
  std::size_t n = 0;
  for (double v : first_order) n += v != 0.0;
  for (double v : second_order) n += v != 0.0;
  return n;
}

void MixCoefficients::validate(std::size_t attributes) const {
  if (first_order.size() != attributes) {
    throw ArgumentError("mixing weights: expected " + std::to_string(attributes) +
                        " first-order weights, got " + std::to_string(first_order.size()));
  }
  if (!second_order.empty() && second_order.size() != pair_count(attributes)) {
    throw ArgumentError("mixing weights: expected " + std::to_string(pair_count(attributes)) +
                        " second-order weights, got " + std::to_string(second_order.size()));
  }
  for (double v : first_order) {
    if (!(v >= 0.0) || !std::isfinite(v)) throw ArgumentError("mixing weights must be finite and >= 0");
  }
  for (double v : second_order) {
    if (!(v >= 0.0) || !std::isfinite(v)) throw ArgumentError("mixing weights must be finite and >= 0");
  }
}

DecayKind parse_decay(const std::string& name) {
  if (name == "step_linear") return DecayKind::step_linear;
  if (name == "exponential") return DecayKind::exponential;
  throw ConfigError("unknown decay '" + name + "' (expected step_linear or exponential)");
}

std::string to_string(DecayKind kind) {
  return kind == DecayKind::step_linear ? "step_linear" : "exponential";
}

void AlignmentConfig::validate() const {
  auto check = [](double v, const char* name) {
    if (!std::isfinite(v) || v < 0.0) {
      throw ArgumentError(std::string(name) + " must be finite and >= 0");
    }
  };
  check(delta, "delta");
  check(alpha, "alpha");
  check(beta, "beta");
  if (!(percentile > 0.0 && percentile <= 100.0)) {
    throw ArgumentError("percentile must be in (0, 100]");
  }
}

DenseMatrix smoothed_cosine(const FeatureBlock& block, double delta, std::size_t budget_bytes) {
  if (!std::isfinite(delta) || delta < 0.0) throw ArgumentError("delta must be finite and >= 0");
  DenseMatrix g = block.inner_products(budget_bytes);
  const std::vector<double> norms = block.row_norms();
  const std::size_t n = g.rows();
  for (std::size_t i = 0; i < n; ++i) {
    auto row = g.row(i);
    for (std::size_t j = 0; j < n; ++j) {
      if (norms[i] == 0.0 || norms[j] == 0.0) {
        row[j] = 0.0;
      } else {
        row[j] /= norms[i] * norms[j] + delta;
      }
    }
  }
  return g;
}

DenseMatrix mix_similarities(std::span<const DenseMatrix> similarities, const MixCoefficients& mu) {
  mu.validate(similarities.size());
  if (similarities.empty()) throw ArgumentError("mix_similarities: no similarity blocks");
  const std::size_t n = similarities.front().rows();
  for (const auto& s : similarities) {
    if (s.rows() != n || s.cols() != n) throw ArgumentError("mix_similarities: shape mismatch");
  }
  DenseMatrix out(n, n);
  for (std::size_t k = 0; k < similarities.size(); ++k) {
    if (mu.first_order[k] != 0.0) add_scaled(out, similarities[k], mu.first_order[k]);
  }
  std::size_t pair = 0;
  for (std::size_t k = 0; k < similarities.size(); ++k) {
    for (std::size_t l = k + 1; l < similarities.size(); ++l, ++pair) {
      const double w = mu.second_order.empty() ? 0.0 : mu.second_order[pair];
      if (w == 0.0) continue;
      const DenseMatrix p = multiply(similarities[k], similarities[l]);
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) out(i, j) += 0.5 * w * (p(i, j) + p(j, i));
      }
    }
  }
  return out;
}

DiagonalMatrix popularity_regularizer(const SparseMatrix& x, const AlignmentConfig& cfg) {
  cfg.validate();
  const std::vector<double> clicks = x.column_sums();
  if (clicks.empty()) return DiagonalMatrix{};
  const double p = percentile(clicks, cfg.percentile);
  std::vector<double> d(clicks.size(), 0.0);
  if (p == 0.0) {
    std::ostringstream msg;
    msg << "click-count percentile " << cfg.percentile
        << " is 0; regularizer set to beta on unclicked items only";
    log_warning(msg.str());
    for (std::size_t j = 0; j < clicks.size(); ++j) d[j] = clicks[j] == 0.0 ? cfg.beta : 0.0;
    return DiagonalMatrix::nonnegative(std::move(d));
  }
  for (std::size_t j = 0; j < clicks.size(); ++j) {
    const double r = clicks[j];
    if (cfg.decay == DecayKind::step_linear) {
      d[j] = r <= p ? cfg.beta / p * (p - r) : 0.0;
    } else {
      d[j] = cfg.beta * std::exp(-r * std::numbers::ln2 / p);
    }
  }
  return DiagonalMatrix::nonnegative(std::move(d));
}

AlignmentMatrix AlignmentMatrix::zero(std::size_t users, std::size_t items) {
  return AlignmentMatrix(users, items);
}

AlignmentMatrix::AlignmentMatrix(std::shared_ptr<const SparseMatrix> x,
                                 std::shared_ptr<const DenseMatrix> g, DiagonalMatrix d, double alpha)
    : x_(std::move(x)), g_(std::move(g)), d_(std::move(d)), alpha_(alpha) {
  if (!x_ || !g_) throw ArgumentError("alignment: null factor");
  if (g_->rows() != x_->cols() || g_->cols() != x_->cols()) {
    throw ArgumentError("alignment: similarity is " + std::to_string(g_->rows()) + "x" +
                        std::to_string(g_->cols()) + ", expected " + std::to_string(x_->cols()) +
                        " items");
  }
  if (d_.dim() != x_->cols()) throw ArgumentError("alignment: regularizer dimension mismatch");
  if (!std::isfinite(alpha_) || alpha_ < 0.0) throw ArgumentError("alpha must be finite and >= 0");
  rows_ = x_->rows();
  cols_ = x_->cols();
}

bool AlignmentMatrix::is_zero() const {
  if (!x_ || alpha_ == 0.0) return true;
  for (double v : d_.values()) {
    if (v != 0.0) return false;
  }
  return true;
}

DenseMatrix AlignmentMatrix::rows_of(std::span<const std::size_t> users) const {
  if (is_zero()) return DenseMatrix(users.size(), cols_);
  DenseMatrix b = multiply_rows(*x_, users, *g_);
  scale_columns(b, d_);
  for (double& v : b.data()) v *= alpha_;
  return b;
}

DenseMatrix AlignmentMatrix::materialize(std::size_t budget_bytes) const {
  const double bytes = static_cast<double>(rows_) * static_cast<double>(cols_) * sizeof(double);
  if (bytes > static_cast<double>(budget_bytes)) {
    throw CapacityError("alignment target needs " + std::to_string(bytes / (1 << 20)) +
                        " MiB, budget is " + std::to_string(budget_bytes >> 20) + " MiB");
  }
  std::vector<std::size_t> all(rows_);
  for (std::size_t u = 0; u < rows_; ++u) all[u] = u;
  return rows_of(all);
}

DenseMatrix AlignmentMatrix::xt_b(const DenseMatrix& gram_x) const {
  if (gram_x.rows() != cols_ || gram_x.cols() != cols_) {
    throw ArgumentError("alignment: gram shape mismatch");
  }
  if (is_zero()) return DenseMatrix(cols_, cols_);
  DenseMatrix out = multiply(gram_x, *g_);
  scale_columns(out, d_);
  for (double& v : out.data()) v *= alpha_;
  return out;
}

void AlignmentMatrix::add_xt_b_rows(std::span<const std::size_t> users, double scale,
                                    DenseMatrix& out) const {
  if (out.rows() != cols_ || out.cols() != cols_) {
    throw ArgumentError("alignment: accumulator shape mismatch");
  }
  if (is_zero() || scale == 0.0) return;
  std::vector<double> b(cols_);
  const std::span<const double> d = d_.values();
  for (std::size_t u : users) {
    const auto xu = x_->row(u);
    std::fill(b.begin(), b.end(), 0.0);
    for (std::size_t t = 0; t < xu.size(); ++t) {
      const auto grow = g_->row(xu.cols[t]);
      const double v = xu.values[t];
      for (std::size_t j = 0; j < cols_; ++j) b[j] += v * grow[j];
    }
    for (std::size_t j = 0; j < cols_; ++j) b[j] *= alpha_ * d[j];
    for (std::size_t t = 0; t < xu.size(); ++t) {
      auto orow = out.row(xu.cols[t]);
      const double w = scale * xu.values[t];
      for (std::size_t j = 0; j < cols_; ++j) orow[j] += w * b[j];
    }
  }
}

AlignmentMatrix align(std::shared_ptr<const SparseMatrix> x, std::shared_ptr<const DenseMatrix> g,
                      const AlignmentConfig& cfg) {
  if (!x) throw ArgumentError("align: null interaction matrix");
  DiagonalMatrix d = popularity_regularizer(*x, cfg);
  return AlignmentMatrix(std::move(x), std::move(g), std::move(d), cfg.alpha);
}

AlignmentMatrix align(const SparseMatrix& x, const DenseMatrix& g, const AlignmentConfig& cfg) {
  return align(std::make_shared<const SparseMatrix>(x), std::make_shared<const DenseMatrix>(g), cfg);
}

MixFitResult select_mix_coefficients(std::span<const DenseMatrix> similarities,
                                     std::span<const MixCoefficients> grid,
                                     const SimilarityObjective& objective, std::size_t workers) {
  if (grid.empty()) throw ArgumentError("mixing grid is empty");
  for (const auto& mu : grid) mu.validate(similarities.size());
  std::vector<double> score(grid.size());
  parallel_for(grid.size(), workers, [&](std::size_t i) {
    score[i] = objective(mix_similarities(similarities, grid[i]));
  });
  std::size_t best = 0;
  for (std::size_t i = 1; i < grid.size(); ++i) {
    if (score[i] > score[best] ||
        (score[i] == score[best] && grid[i].nonzeros() < grid[best].nonzeros())) {
      best = i;
    }
  }
  return MixFitResult{grid[best], best, std::move(score)};
}

MixFitResult fit_mix_coefficients(std::span<const DenseMatrix> similarities, const ColdSplit& split,
                                  std::span<const MixCoefficients> grid, const MixFitOptions& opts) {
  if (split.cold_val.empty()) throw ArgumentError("mixing fit: cold validation set is empty");
  const SparseMatrix& x = split.train.x;
  EvalOptions eval;
  eval.ks = {opts.k};
  eval.with_ci = false;
  auto objective = [&](const DenseMatrix& mixed) {
    ScoreFunction scores = [&](std::span<const std::size_t> users) {
      return multiply_rows(x, users, mixed);
    };
    const EvalReport r = evaluate_scenario(scores, split, Scenario::cold, Stage::validation, eval);
    return r.metric("ndcg", opts.k).mean;
  };
  return select_mix_coefficients(similarities, grid, objective, opts.workers);
}

}  // namespace alignrec
