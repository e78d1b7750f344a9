/*
 * Copyright 2026 The HierCL Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "hiercl/contrastive.hpp"
#include "hiercl/embedding.hpp"
#include "hiercl/hierarchy.hpp"
#include "hiercl/matrix.hpp"
#include "hiercl/prototypes.hpp"
#include "hiercl/random.hpp"

namespace hiercl {

/// Central finite differences of a scalar loss with respect to every batch
/// vector entry. The loss is evaluated off the unit sphere during the
/// perturbation; the losses are plain functions of the rows, so that is
/// well defined.
inline Matrix finite_difference_gradient(
    const std::function<double(const EmbeddingBatch&)>& loss,
    const EmbeddingBatch& batch, double step = 1e-5) {
  Matrix grad(batch.vectors.rows(), batch.vectors.cols());
  EmbeddingBatch work = batch;
  for (std::size_t i = 0; i < batch.vectors.rows(); ++i) {
    for (std::size_t j = 0; j < batch.vectors.cols(); ++j) {
      const double original = work.vectors(i, j);
      work.vectors(i, j) = original + step;
      const double up = loss(work);
      work.vectors(i, j) = original - step;
      const double down = loss(work);
      work.vectors(i, j) = original;
      grad(i, j) = (up - down) / (2.0 * step);
    }
  }
  return grad;
}

/// max_ij |a - b| / max(1, |a|, |b|): relative for large entries, absolute
/// near zero where the finite-difference noise floor dominates.
inline double max_relative_error(const Matrix& a, const Matrix& b) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) {
      const double denom = std::max({1.0, std::abs(a(i, j)), std::abs(b(i, j))});
      worst = std::max(worst, std::abs(a(i, j) - b(i, j)) / denom);
    }
  return worst;
}

/// One random trial: a ragged tree of depth 1..3 with 2..6 classes per
/// level, a small batch of random unit vectors labeled at arbitrary nodes
/// (so short paths are exercised), and a seeded bank.
struct GradCheckTrial {
  LabelTree tree;
  EmbeddingBatch batch;
  PrototypeBank bank;
  LossConfig config;
};

inline GradCheckTrial make_gradcheck_trial(Rng& rng) {
  GradCheckTrial trial;
  const int depth = 1 + static_cast<int>(rng.below(3));
  std::vector<NodeSpec> specs{{"root", std::nullopt, false}};
  std::vector<std::vector<std::string>> by_level(static_cast<std::size_t>(depth) + 1);
  by_level[0] = {"root"};
  for (int l = 1; l <= depth; ++l) {
    const std::size_t n = 2 + rng.below(5);
    for (std::size_t k = 0; k < n; ++k) {
      const std::string name = "n" + std::to_string(l) + "_" + std::to_string(k);
      const auto& parents = by_level[static_cast<std::size_t>(l) - 1];
      specs.push_back({name, parents[rng.below(parents.size())], false});
      by_level[static_cast<std::size_t>(l)].push_back(name);
    }
  }
  trial.tree = LabelTree::build(specs);

  const std::size_t dim = rng.below(2) == 0 ? 4 : 16;
  const std::size_t rows = 3 + rng.below(10);
  trial.batch.vectors = Matrix(rows, dim);
  for (std::size_t i = 0; i < rows; ++i) {
    auto row = trial.batch.vectors.row(i);
    for (double& x : row) x = rng.gaussian();
    const double n = norm(row);
    for (double& x : row) x /= n;
    const int node = 1 + static_cast<int>(rng.below(
                             static_cast<std::uint64_t>(trial.tree.category_count())));
    trial.batch.labels.push_back({trial.tree.path_of(node)});
  }

  trial.bank = init_bank(trial.tree, dim, rng.next_u64());
  trial.config.tau = 0.08 + 0.3 * rng.uniform();
  trial.config.level_weights = penalty_weights(trial.tree.depth());
  trial.config.include_prototypes = true;
  return trial;
}

struct GradCheckResult {
  std::size_t trials = 0;
  std::size_t failures = 0;
  double worst_bhcl = 0.0;
  double worst_hcl = 0.0;
};

/// Run `trials` seeded random batches and compare the analytic gradients
/// of both hierarchical losses against central finite differences.
inline GradCheckResult run_gradient_checks(std::uint64_t seed, std::size_t trials,
                                           double tolerance = 1e-5,
                                           double step = 1e-5) {
  Rng rng(seed);
  GradCheckResult result;
  for (std::size_t t = 0; t < trials; ++t) {
    GradCheckTrial trial = make_gradcheck_trial(rng);
    ++result.trials;

    const Matrix analytic = bhcl_gradient(trial.batch, trial.bank, trial.tree, trial.config);
    const Matrix numeric = finite_difference_gradient(
        [&](const EmbeddingBatch& b) {
          return bhcl_loss(b, trial.bank, trial.tree, trial.config);
        },
        trial.batch, step);
    const double err_b = max_relative_error(analytic, numeric);
    result.worst_bhcl = std::max(result.worst_bhcl, err_b);

    const Matrix analytic_h = hcl_gradient(trial.batch, trial.tree, trial.config);
    const Matrix numeric_h = finite_difference_gradient(
        [&](const EmbeddingBatch& b) { return hcl_loss(b, trial.tree, trial.config); },
        trial.batch, step);
    const double err_h = max_relative_error(analytic_h, numeric_h);
    result.worst_hcl = std::max(result.worst_hcl, err_h);

    if (err_b > tolerance || err_h > tolerance) ++result.failures;
  }
  return result;
}

}  // namespace hiercl
