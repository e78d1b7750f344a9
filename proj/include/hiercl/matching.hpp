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
#include <limits>
#include <vector>

#include "hiercl/errors.hpp"
#include "hiercl/geometry.hpp"
#include "hiercl/matrix.hpp"

namespace hiercl {

/// One query's output: a distribution over leaf classes and a rotated box.
struct Prediction {
  std::vector<double> class_probs;
  RotatedBox box;

  void validate(double tol = 1e-6) const {
    double sum = 0.0;
    for (double p : class_probs) {
      if (p < -tol || p > 1.0 + tol) throw Error("prediction: probability out of [0,1]");
      sum += p;
    }
    if (std::abs(sum - 1.0) > tol) throw Error("prediction: probabilities do not sum to 1");
  }
};

struct MatchTarget {
  int class_id = 0;
  RotatedBox box;
};

/// Coefficients of the matching cost, plus the focal parameters and the
/// image extent used to normalize the L1 term.
struct CostWeights {
  double cls = 2.0;
  double iou = 5.0;
  double l1 = 2.0;
  double focal_alpha = 0.25;
  double focal_gamma = 2.0;
  double l1_norm = 1.0;

  void validate() const {
    if (cls < 0.0 || iou < 0.0 || l1 < 0.0)
      throw Error("cost weights must be non-negative");
    if (cls == 0.0 && iou == 0.0 && l1 == 0.0)
      throw Error("cost weights must not all be zero");
  }
};

/// Focal classification cost alpha (1-p_t)^gamma (-log p_t), with p_t
/// clamped to [1e-12, 1] so a zero probability stays finite.
inline double focal_cost(const std::vector<double>& probs, std::size_t target,
                         double alpha = 0.25, double gamma = 2.0) {
  if (target >= probs.size()) throw Error("focal_cost: target class out of range");
  const double pt = std::clamp(probs[target], 1e-12, 1.0);
  return alpha * std::pow(1.0 - pt, gamma) * (-std::log(pt));
}

/// Weighted matching cost: focal + (1 - rotated IoU) + L1 box regression.
inline double match_cost(const Prediction& pred, const MatchTarget& gt,
                         const CostWeights& w) {
  const double c_cls =
      focal_cost(pred.class_probs, static_cast<std::size_t>(gt.class_id),
                 w.focal_alpha, w.focal_gamma);
  const double c_iou = 1.0 - rotated_iou(pred.box, gt.box);
  const double c_l1 = l1_cost(pred.box, gt.box, w.l1_norm);
  return w.cls * c_cls + w.iou * c_iou + w.l1 * c_l1;
}

/// Result of the bipartite assignment: one query per ground truth, the
/// rest flagged background.
struct Assignment {
  std::vector<std::size_t> query_for_gt;  // size G
  std::vector<std::size_t> background;    // unmatched queries, ascending
  double total_cost = 0.0;
};

namespace detail {

/// Minimum-cost assignment of every row of `cost` (ground truths) to a
/// distinct column (queries); rows <= cols. Potentials method, O(r^2 c).
/// Returns only the optimal total.
inline double assignment_optimum(const std::vector<std::vector<double>>& cost) {
  const std::size_t n = cost.size();
  if (n == 0) return 0.0;
  const std::size_t m = cost[0].size();
  constexpr double kInf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(m + 1, 0.0);
  std::vector<std::size_t> p(m + 1, 0), way(m + 1, 0);
  for (std::size_t i = 1; i <= n; ++i) {
    p[0] = i;
    std::size_t j0 = 0;
    std::vector<double> minv(m + 1, kInf);
    std::vector<bool> used(m + 1, false);
    do {
      used[j0] = true;
      const std::size_t i0 = p[j0];
      double delta = kInf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= m; ++j) {
        if (used[j]) continue;
        const double cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= m; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  double total = 0.0;
  for (std::size_t j = 1; j <= m; ++j)
    if (p[j] != 0) total += cost[p[j] - 1][j - 1];
  return total;
}

}  // namespace detail

/// Minimum-total-cost injective map from ground truths to queries. Among
/// equal-cost optima the lexicographically smallest assignment (by ground
/// truth index, then query index) is returned; leftover queries become
/// background.
inline Assignment hungarian(const Matrix& cost) {
  const std::size_t n_queries = cost.rows();
  const std::size_t n_gts = cost.cols();
  if (n_queries < n_gts)
    throw InfeasibleShape("hungarian: fewer queries than ground truths");
  for (double c : cost.data())
    if (!std::isfinite(c)) throw Error("hungarian: non-finite cost entry");

  Assignment out;
  out.query_for_gt.resize(n_gts);
  if (n_gts == 0) {
    for (std::size_t q = 0; q < n_queries; ++q) out.background.push_back(q);
    return out;
  }

  // Optimal total over (gt rows) x (query cols).
  auto subproblem = [&](std::size_t first_gt, const std::vector<bool>& used_query) {
    std::vector<std::vector<double>> sub;
    for (std::size_t g = first_gt; g < n_gts; ++g) {
      std::vector<double> row;
      for (std::size_t q = 0; q < n_queries; ++q)
        if (!used_query[q]) row.push_back(cost(q, g));
      sub.push_back(std::move(row));
    }
    return detail::assignment_optimum(sub);
  };

  std::vector<bool> used(n_queries, false);
  const double optimum = subproblem(0, used);
  const double eps = 1e-9 * std::max(1.0, std::abs(optimum));

  // Fix ground truths in order, picking the smallest query index that still
  // permits an optimal completion.
  double fixed = 0.0;
  for (std::size_t g = 0; g < n_gts; ++g) {
    bool placed = false;
    for (std::size_t q = 0; q < n_queries && !placed; ++q) {
      if (used[q]) continue;
      used[q] = true;
      const double rest = g + 1 < n_gts ? subproblem(g + 1, used) : 0.0;
      if (fixed + cost(q, g) + rest <= optimum + eps) {
        out.query_for_gt[g] = q;
        fixed += cost(q, g);
        placed = true;
      } else {
        used[q] = false;
      }
    }
    if (!placed) throw Error("hungarian: internal error, no optimal completion");
  }
  for (std::size_t q = 0; q < n_queries; ++q)
    if (!used[q]) out.background.push_back(q);
  out.total_cost = 0.0;
  for (std::size_t g = 0; g < n_gts; ++g) out.total_cost += cost(out.query_for_gt[g], g);
  return out;
}

/// Cost matrix for one scene: entry (q, g) = match_cost(pred q, gt g).
inline Matrix match_cost_matrix(const std::vector<Prediction>& preds,
                                const std::vector<MatchTarget>& gts,
                                const CostWeights& w) {
  w.validate();
  Matrix cost(preds.size(), gts.size());
  for (std::size_t q = 0; q < preds.size(); ++q)
    for (std::size_t g = 0; g < gts.size(); ++g)
      cost(q, g) = match_cost(preds[q], gts[g], w);
  return cost;
}

}  // namespace hiercl
