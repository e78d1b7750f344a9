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
#include <map>
#include <utility>
#include <vector>

#include "hiercl/embedding.hpp"
#include "hiercl/errors.hpp"
#include "hiercl/hierarchy.hpp"
#include "hiercl/matrix.hpp"
#include "hiercl/prototypes.hpp"

namespace hiercl {

/// Knobs shared by the hierarchical losses.
struct LossConfig {
  double tau = 0.1;
  std::vector<double> level_weights;  // penalty_weights(tree.depth())
  /// When false, prototypes are dropped from positive sets and
  /// denominators. Used by the no-prototype ablation and reduction tests.
  bool include_prototypes = true;
};

/// A positive partner in the balanced pair loss: either another batch row
/// or the prototype of the anchor's own class at the current level.
struct PositiveRef {
  bool is_prototype = false;
  std::size_t index = 0;  // row index; ignored for the prototype

  static PositiveRef row(std::size_t i) { return {false, i}; }
  static PositiveRef prototype() { return {true, 0}; }
};

namespace detail {

inline void check_config(const LabelTree& tree, const LossConfig& cfg) {
  if (cfg.tau <= 0.0) throw Error("loss config: tau must be positive");
  if (cfg.level_weights.size() != static_cast<std::size_t>(tree.depth()))
    throw DimensionMismatch("loss config: one level weight per tree level required");
  double sum = 0.0;
  for (double w : cfg.level_weights) sum += w;
  if (std::abs(sum - 1.0) > 1e-6)
    throw Error("loss config: level weights must sum to 1");
}

/// Row memberships per level. anc[l-1][i] is the level-l ancestor of row i
/// or -1 when the row's path stops above l.
struct LevelIndex {
  int depth = 0;
  std::vector<std::vector<int>> anc;                            // [l-1][row]
  std::vector<std::map<int, std::vector<std::size_t>>> members; // [l-1][node] -> rows

  LevelIndex(const EmbeddingBatch& batch, const LabelTree& tree)
      : depth(tree.depth()),
        anc(static_cast<std::size_t>(tree.depth()),
            std::vector<int>(batch.size(), -1)),
        members(static_cast<std::size_t>(tree.depth())) {
    for (std::size_t i = 0; i < batch.size(); ++i) {
      const HierLabel& lab = batch.labels[i];
      for (int l = 1; l <= lab.depth(); ++l) {
        const int node = lab.at_level(l);
        anc[static_cast<std::size_t>(l) - 1][i] = node;
        members[static_cast<std::size_t>(l) - 1][node].push_back(i);
      }
    }
  }
};

/// All pairwise inner products scaled by 1/tau.
inline Matrix similarity(const EmbeddingBatch& batch, double tau) {
  const std::size_t n = batch.size();
  Matrix s(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t a = i; a < n; ++a) {
      const double v = dot(batch.vectors.row(i), batch.vectors.row(a)) / tau;
      s(i, a) = v;
      s(a, i) = v;
    }
  }
  return s;
}

/// Row-to-prototype inner products scaled by 1/tau. Column c-1 is node c.
inline Matrix proto_similarity(const EmbeddingBatch& batch, const PrototypeBank& bank,
                               double tau) {
  Matrix s(batch.size(), bank.size());
  for (std::size_t i = 0; i < batch.size(); ++i)
    for (std::size_t c = 0; c < bank.size(); ++c)
      s(i, c) = dot(batch.vectors.row(i), bank.prototype(static_cast<int>(c) + 1)) / tau;
  return s;
}

}  // namespace detail

/// -log softmax of the positive pair against every other row:
///   -log[ exp(f_i.f_p / tau) / sum_{a != i} exp(f_i.f_a / tau) ].
/// Computed with max-subtraction in the exponent.
inline double pair_loss(const EmbeddingBatch& batch, std::size_t i, std::size_t p,
                        double tau) {
  if (batch.size() < 2) throw DegenerateBatch("pair_loss: need at least two rows");
  if (i == p) throw Error("pair_loss: i and p must differ");
  if (tau <= 0.0) throw Error("pair_loss: tau must be positive");
  const auto fi = batch.vectors.row(i);
  double m = -std::numeric_limits<double>::infinity();
  std::vector<double> x(batch.size());
  for (std::size_t a = 0; a < batch.size(); ++a) {
    if (a == i) continue;
    x[a] = dot(fi, batch.vectors.row(a)) / tau;
    m = std::max(m, x[a]);
  }
  double denom = 0.0;
  for (std::size_t a = 0; a < batch.size(); ++a)
    if (a != i) denom += std::exp(x[a] - m);
  return m + std::log(denom) - x[p];
}

/// Denominator of pair_loss in natural scale (used by the replication
/// balance checks and the loss-eval breakdown).
inline double pair_denominator(const EmbeddingBatch& batch, std::size_t i, double tau) {
  const auto fi = batch.vectors.row(i);
  double denom = 0.0;
  for (std::size_t a = 0; a < batch.size(); ++a)
    if (a != i) denom += std::exp(dot(fi, batch.vectors.row(a)) / tau);
  return denom;
}

/// Supervised contrastive loss with finest-level label equality:
/// (1/|I|) sum_i (1/|P(i)|) sum_{p in P(i)} pair_loss(i, p). Rows without
/// a same-class peer (or with an empty label path) contribute 0.
inline double scl_loss(const EmbeddingBatch& batch, double tau) {
  if (batch.size() < 2) throw DegenerateBatch("scl_loss: need at least two rows");
  const Matrix s = detail::similarity(batch, tau);
  double total = 0.0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    if (batch.labels[i].empty()) continue;
    std::vector<std::size_t> positives;
    for (std::size_t p = 0; p < batch.size(); ++p)
      if (p != i && !batch.labels[p].empty() &&
          batch.labels[p].terminal() == batch.labels[i].terminal())
        positives.push_back(p);
    if (positives.empty()) continue;

    double m = -std::numeric_limits<double>::infinity();
    for (std::size_t a = 0; a < batch.size(); ++a)
      if (a != i) m = std::max(m, s(i, a));
    double denom = 0.0;
    for (std::size_t a = 0; a < batch.size(); ++a)
      if (a != i) denom += std::exp(s(i, a) - m);
    const double log_denom = m + std::log(denom);

    double anchor = 0.0;
    for (std::size_t p : positives) anchor += log_denom - s(i, p);
    total += anchor / static_cast<double>(positives.size());
  }
  return total / static_cast<double>(batch.size());
}

/// Hierarchical contrastive loss: level-weighted SCL with positives grouped
/// by the ancestor at each level. Levels a row's path does not reach are
/// skipped for that row; empty positive sets contribute 0.
inline double hcl_loss(const EmbeddingBatch& batch, const LabelTree& tree,
                       const LossConfig& cfg) {
  detail::check_config(tree, cfg);
  if (batch.size() < 2) throw DegenerateBatch("hcl_loss: need at least two rows");
  const Matrix s = detail::similarity(batch, cfg.tau);
  const detail::LevelIndex idx(batch, tree);

  double total = 0.0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    double m = -std::numeric_limits<double>::infinity();
    for (std::size_t a = 0; a < batch.size(); ++a)
      if (a != i) m = std::max(m, s(i, a));
    double denom = 0.0;
    for (std::size_t a = 0; a < batch.size(); ++a)
      if (a != i) denom += std::exp(s(i, a) - m);
    const double log_denom = m + std::log(denom);

    for (int l = 1; l <= batch.labels[i].depth(); ++l) {
      const int node = idx.anc[static_cast<std::size_t>(l) - 1][i];
      const auto& group = idx.members[static_cast<std::size_t>(l) - 1].at(node);
      if (group.size() < 2) continue;  // no positives at this level
      double level_sum = 0.0;
      for (std::size_t p : group)
        if (p != i) level_sum += log_denom - s(i, p);
      total += cfg.level_weights[static_cast<std::size_t>(l) - 1] * level_sum /
               static_cast<double>(group.size() - 1);
    }
  }
  return total / static_cast<double>(batch.size());
}

/// Per-class denominator terms of the balanced pair loss for anchor i at
/// one level, in natural scale and in node-id order:
///   term_c = (1/|I'_c|) sum_{a in I'_c \ {i}} exp(f_i.f_a / tau),
/// where I'_c adds the class prototype to the rows matched to c. Rows whose
/// path stops above the level are in no I_c. Pass include_prototypes=false
/// (bank may be null) for the reduction / no-prototype mode.
inline std::vector<std::pair<int, double>> balanced_class_terms(
    const EmbeddingBatch& batch, const PrototypeBank* bank, const LabelTree& tree,
    int level, std::size_t i, double tau, bool include_prototypes = true) {
  if (tau <= 0.0) throw Error("balanced_class_terms: tau must be positive");
  if (include_prototypes && bank == nullptr)
    throw Error("balanced_class_terms: prototype bank required");
  const auto& classes = tree.nodes_at_level(level);  // throws EmptyLevel
  const detail::LevelIndex idx(batch, tree);
  const auto& members = idx.members[static_cast<std::size_t>(level) - 1];
  const auto fi = batch.vectors.row(i);

  // One exponent per entity, shifted by the global max so that identical
  // inputs produce bit-identical terms.
  std::vector<std::vector<double>> xs(classes.size());
  double m = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < classes.size(); ++k) {
    auto it = members.find(classes[k]);
    if (it != members.end())
      for (std::size_t a : it->second)
        if (a != i) {
          xs[k].push_back(dot(fi, batch.vectors.row(a)) / tau);
          m = std::max(m, xs[k].back());
        }
    if (include_prototypes) {
      xs[k].push_back(dot(fi, bank->prototype(classes[k])) / tau);
      m = std::max(m, xs[k].back());
    }
  }
  if (!std::isfinite(m)) m = 0.0;  // every class empty: all terms are 0

  const double scale = std::exp(m);
  std::vector<std::pair<int, double>> terms;
  terms.reserve(classes.size());
  for (std::size_t k = 0; k < classes.size(); ++k) {
    auto it = members.find(classes[k]);
    const std::size_t class_size =
        (it != members.end() ? it->second.size() : 0) + (include_prototypes ? 1 : 0);
    double sum = 0.0;
    for (double x : xs[k]) sum += std::exp(x - m);
    const double term =
        class_size == 0 ? 0.0 : scale * (sum / static_cast<double>(class_size));
    terms.emplace_back(classes[k], term);
  }
  return terms;
}

/// Sum of balanced_class_terms: the full denominator of the balanced pair
/// loss for anchor i at one level.
inline double balanced_denominator(const EmbeddingBatch& batch, const PrototypeBank* bank,
                                   const LabelTree& tree, int level, std::size_t i,
                                   double tau, bool include_prototypes = true) {
  double d = 0.0;
  for (const auto& [node, term] :
       balanced_class_terms(batch, bank, tree, level, i, tau, include_prototypes))
    d += term;
  return d;
}

/// Balanced pair loss: the pair softmax with each class's denominator mass
/// replaced by the mean over that class's instances plus its prototype.
inline double balanced_pair_loss(const EmbeddingBatch& batch, const PrototypeBank& bank,
                                 const LabelTree& tree, int level, std::size_t i,
                                 PositiveRef p, double tau,
                                 bool include_prototypes = true) {
  const auto fi = batch.vectors.row(i);
  double x_p = 0.0;
  if (p.is_prototype) {
    if (!include_prototypes)
      throw Error("balanced_pair_loss: prototype positive in no-prototype mode");
    if (level < 1 || level > batch.labels[i].depth())
      throw LevelOutOfRange("balanced_pair_loss: anchor label does not reach level " +
                            std::to_string(level));
    const int node = batch.labels[i].at_level(level);
    x_p = dot(fi, bank.prototype(node)) / tau;
  } else {
    if (p.index == i) throw Error("balanced_pair_loss: i and p must differ");
    x_p = dot(fi, batch.vectors.row(p.index)) / tau;
  }
  const double d = balanced_denominator(batch, include_prototypes ? &bank : nullptr,
                                        tree, level, i, tau, include_prototypes);
  if (d <= 0.0) throw DegenerateBatch("balanced_pair_loss: empty denominator");
  return std::log(d) - x_p;
}

namespace detail {

/// Shared evaluator for the balanced hierarchical loss and its gradient.
/// Iteration order is fixed (levels ascending, classes in id order, rows in
/// batch order) so results are deterministic.
struct BalancedEval {
  double loss = 0.0;
  Matrix grad;                        // filled when with_grad
  std::vector<double> level_terms;    // unweighted per-level averages
};

inline BalancedEval evaluate_bhcl(const EmbeddingBatch& batch, const PrototypeBank& bank,
                                  const LabelTree& tree, const LossConfig& cfg,
                                  bool with_grad) {
  check_config(tree, cfg);
  BalancedEval out;
  out.level_terms.assign(static_cast<std::size_t>(tree.depth()), 0.0);
  out.grad = Matrix(batch.size(), batch.dim());
  if (batch.size() == 0) return out;  // empty foreground set: loss 0 by convention

  const bool protos = cfg.include_prototypes;
  if (protos && bank.dim() != batch.dim())
    throw DimensionMismatch("bhcl: bank and batch dimensions differ");
  const Matrix s = similarity(batch, cfg.tau);
  const Matrix sp = protos ? proto_similarity(batch, bank, cfg.tau) : Matrix();
  const LevelIndex idx(batch, tree);
  const double inv_tau = 1.0 / cfg.tau;
  const double inv_n = 1.0 / static_cast<double>(batch.size());

  for (std::size_t i = 0; i < batch.size(); ++i) {
    for (int l = 1; l <= batch.labels[i].depth(); ++l) {
      const std::size_t li = static_cast<std::size_t>(l) - 1;
      const double lambda = cfg.level_weights[li];
      const auto& classes = tree.nodes_at_level(l);
      const auto& members = idx.members[li];
      const int own = idx.anc[li][i];

      const auto own_it = members.find(own);
      const std::size_t own_peers = own_it == members.end() ? 0 : own_it->second.size() - 1;
      const std::size_t n_pos = own_peers + (protos ? 1 : 0);
      if (n_pos == 0) continue;  // reachable only in no-prototype mode

      // Stable log-denominator over every entity at this level.
      double m = -std::numeric_limits<double>::infinity();
      for (int c : classes) {
        auto it = members.find(c);
        if (it != members.end())
          for (std::size_t a : it->second)
            if (a != i) m = std::max(m, s(i, a));
        if (protos) m = std::max(m, sp(i, static_cast<std::size_t>(c) - 1));
      }
      if (!std::isfinite(m)) continue;  // no entities at all

      double d_shift = 0.0;
      for (int c : classes) {
        auto it = members.find(c);
        const std::size_t class_size =
            (it != members.end() ? it->second.size() : 0) + (protos ? 1 : 0);
        if (class_size == 0) continue;
        double sum = 0.0;
        if (it != members.end())
          for (std::size_t a : it->second)
            if (a != i) sum += std::exp(s(i, a) - m);
        if (protos) sum += std::exp(sp(i, static_cast<std::size_t>(c) - 1) - m);
        d_shift += sum / static_cast<double>(class_size);
      }
      if (d_shift <= 0.0) continue;
      const double log_denom = m + std::log(d_shift);

      // Positive part: mean similarity to P'_l(i).
      double pos_sum = 0.0;
      if (own_it != members.end())
        for (std::size_t p : own_it->second)
          if (p != i) pos_sum += s(i, p);
      if (protos) pos_sum += sp(i, static_cast<std::size_t>(own) - 1);

      const double level_value =
          log_denom - pos_sum / static_cast<double>(n_pos);
      out.level_terms[li] += level_value * inv_n;
      out.loss += lambda * level_value * inv_n;

      if (!with_grad) continue;

      // Numerator gradient: attraction between the anchor and each positive.
      const double pos_coeff = inv_n * lambda * inv_tau / static_cast<double>(n_pos);
      if (own_it != members.end()) {
        for (std::size_t p : own_it->second) {
          if (p == i) continue;
          const auto fp = batch.vectors.row(p);
          const auto fi = batch.vectors.row(i);
          for (std::size_t j = 0; j < batch.dim(); ++j) {
            out.grad(i, j) -= pos_coeff * fp[j];
            out.grad(p, j) -= pos_coeff * fi[j];
          }
        }
      }
      if (protos) {
        const auto mp = bank.prototype(own);
        for (std::size_t j = 0; j < batch.dim(); ++j)
          out.grad(i, j) -= pos_coeff * mp[j];
      }

      // Denominator gradient: softmax-weighted repulsion.
      const double den_coeff = inv_n * lambda * inv_tau / d_shift;
      for (int c : classes) {
        auto it = members.find(c);
        const std::size_t class_size =
            (it != members.end() ? it->second.size() : 0) + (protos ? 1 : 0);
        if (class_size == 0) continue;
        const double inv_size = 1.0 / static_cast<double>(class_size);
        if (it != members.end()) {
          for (std::size_t a : it->second) {
            if (a == i) continue;
            const double w = std::exp(s(i, a) - m) * inv_size * den_coeff;
            const auto fa = batch.vectors.row(a);
            const auto fi = batch.vectors.row(i);
            for (std::size_t j = 0; j < batch.dim(); ++j) {
              out.grad(i, j) += w * fa[j];
              out.grad(a, j) += w * fi[j];
            }
          }
        }
        if (protos) {
          const double w =
              std::exp(sp(i, static_cast<std::size_t>(c) - 1) - m) * inv_size * den_coeff;
          const auto mc = bank.prototype(c);
          for (std::size_t j = 0; j < batch.dim(); ++j) out.grad(i, j) += w * mc[j];
        }
      }
    }
  }
  return out;
}

inline BalancedEval evaluate_hcl(const EmbeddingBatch& batch, const LabelTree& tree,
                                 const LossConfig& cfg, bool with_grad) {
  check_config(tree, cfg);
  if (batch.size() < 2) throw DegenerateBatch("hcl: need at least two rows");
  BalancedEval out;
  out.level_terms.assign(static_cast<std::size_t>(tree.depth()), 0.0);
  out.grad = Matrix(batch.size(), batch.dim());

  const Matrix s = similarity(batch, cfg.tau);
  const LevelIndex idx(batch, tree);
  const double inv_tau = 1.0 / cfg.tau;
  const double inv_n = 1.0 / static_cast<double>(batch.size());

  for (std::size_t i = 0; i < batch.size(); ++i) {
    double m = -std::numeric_limits<double>::infinity();
    for (std::size_t a = 0; a < batch.size(); ++a)
      if (a != i) m = std::max(m, s(i, a));
    double d_shift = 0.0;
    for (std::size_t a = 0; a < batch.size(); ++a)
      if (a != i) d_shift += std::exp(s(i, a) - m);
    const double log_denom = m + std::log(d_shift);

    // lambda-weighted count of levels where this anchor has positives;
    // that is the log-denominator's total coefficient for this anchor.
    double denom_weight = 0.0;
    for (int l = 1; l <= batch.labels[i].depth(); ++l) {
      const std::size_t li = static_cast<std::size_t>(l) - 1;
      const int node = idx.anc[li][i];
      const auto& group = idx.members[li].at(node);
      if (group.size() < 2) continue;
      const double lambda = cfg.level_weights[li];
      denom_weight += lambda;

      double pos_sum = 0.0;
      for (std::size_t p : group)
        if (p != i) pos_sum += s(i, p);
      const double inv_pos = 1.0 / static_cast<double>(group.size() - 1);
      const double level_value = log_denom - pos_sum * inv_pos;
      out.level_terms[li] += level_value * inv_n;
      out.loss += lambda * level_value * inv_n;

      if (!with_grad) continue;
      const double pos_coeff = inv_n * lambda * inv_tau * inv_pos;
      for (std::size_t p : group) {
        if (p == i) continue;
        const auto fp = batch.vectors.row(p);
        const auto fi = batch.vectors.row(i);
        for (std::size_t j = 0; j < batch.dim(); ++j) {
          out.grad(i, j) -= pos_coeff * fp[j];
          out.grad(p, j) -= pos_coeff * fi[j];
        }
      }
    }

    if (!with_grad || denom_weight == 0.0) continue;
    const double den_coeff = inv_n * denom_weight * inv_tau / d_shift;
    for (std::size_t a = 0; a < batch.size(); ++a) {
      if (a == i) continue;
      const double w = std::exp(s(i, a) - m) * den_coeff;
      const auto fa = batch.vectors.row(a);
      const auto fi = batch.vectors.row(i);
      for (std::size_t j = 0; j < batch.dim(); ++j) {
        out.grad(i, j) += w * fa[j];
        out.grad(a, j) += w * fi[j];
      }
    }
  }
  return out;
}

}  // namespace detail

/// Balanced hierarchical contrastive loss. An empty batch returns 0.
inline double bhcl_loss(const EmbeddingBatch& batch, const PrototypeBank& bank,
                        const LabelTree& tree, const LossConfig& cfg) {
  return detail::evaluate_bhcl(batch, bank, tree, cfg, false).loss;
}

/// Analytic gradient of bhcl_loss with respect to every batch row.
/// Prototypes are treated as constants: their only update rule is the EMA.
inline Matrix bhcl_gradient(const EmbeddingBatch& batch, const PrototypeBank& bank,
                            const LabelTree& tree, const LossConfig& cfg) {
  return detail::evaluate_bhcl(batch, bank, tree, cfg, true).grad;
}

/// Analytic gradient of hcl_loss, for the A/B training arms.
inline Matrix hcl_gradient(const EmbeddingBatch& batch, const LabelTree& tree,
                           const LossConfig& cfg) {
  return detail::evaluate_hcl(batch, tree, cfg, true).grad;
}

/// Unweighted per-level averages of the hierarchical losses, for debug
/// output: total = sum_l level_weights[l] * term[l].
struct LevelBreakdown {
  std::vector<double> hcl;   // per level, 0-indexed by level-1
  std::vector<double> bhcl;
  double hcl_total = 0.0;
  double bhcl_total = 0.0;
};

inline LevelBreakdown per_level_breakdown(const EmbeddingBatch& batch,
                                          const PrototypeBank& bank,
                                          const LabelTree& tree, const LossConfig& cfg) {
  LevelBreakdown out;
  auto b = detail::evaluate_bhcl(batch, bank, tree, cfg, false);
  out.bhcl = std::move(b.level_terms);
  out.bhcl_total = b.loss;
  if (batch.size() >= 2) {
    auto h = detail::evaluate_hcl(batch, tree, cfg, false);
    out.hcl = std::move(h.level_terms);
    out.hcl_total = h.loss;
  } else {
    out.hcl.assign(static_cast<std::size_t>(tree.depth()), 0.0);
  }
  return out;
}

}  // namespace hiercl
