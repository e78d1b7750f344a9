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
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "hiercl/contrastive.hpp"
#include "hiercl/embedding.hpp"
#include "hiercl/errors.hpp"
#include "hiercl/geometry.hpp"
#include "hiercl/hierarchy.hpp"
#include "hiercl/matching.hpp"
#include "hiercl/matrix.hpp"
#include "hiercl/prototypes.hpp"
#include "hiercl/random.hpp"
#include "hiercl/synthetic.hpp"

namespace hiercl {

/// Divergence guard: throws once the loss magnitude has exceeded 10x the
/// first step's magnitude for 50 consecutive steps.
class DivergenceMonitor {
 public:
  void observe(double loss) {
    if (!initialized_) {
      initial_ = std::max(std::abs(loss), 1e-12);
      initialized_ = true;
      return;
    }
    if (std::abs(loss) > 10.0 * initial_) {
      if (++streak_ >= 50)
        throw DivergenceDetected(
            "training loss exceeded 10x the initial value for 50 consecutive steps");
    } else {
      streak_ = 0;
    }
  }

 private:
  bool initialized_ = false;
  double initial_ = 0.0;
  std::size_t streak_ = 0;
};

/// Combined training objective over precomputed per-term scalars.
struct LossTerms {
  double bhcl = 0.0;
  double cls = 0.0;
  double iou = 0.0;
  double l1 = 0.0;
};

inline double total_loss(const LossTerms& t, const LossWeights& w) {
  return w.lambda_bhcl * t.bhcl + w.lambda_cls * t.cls + w.lambda_iou * t.iou +
         w.lambda_l1 * t.l1;
}

/// Per-level cluster statistics over a labeled embedding set.
struct LevelStats {
  int level = 0;
  double intra = 0.0;          // same ancestor at this level
  double inter_sibling = 0.0;  // different ancestor, same parent group
  double inter_cross = 0.0;    // different parent group (level 1: unused)
  double proto_accuracy = 0.0; // nearest prototype among this level's classes
  std::size_t intra_pairs = 0, sibling_pairs = 0, cross_pairs = 0, scored = 0;
};

struct ClusteringReport {
  std::vector<LevelStats> levels;
  double leaf_accuracy = 0.0;  // nearest prototype among childless classes
  std::size_t leaf_scored = 0;

  nlohmann::json to_json() const {
    nlohmann::json out;
    out["leaf_accuracy"] = leaf_accuracy;
    out["levels"] = nlohmann::json::array();
    for (const auto& s : levels) {
      out["levels"].push_back({{"level", s.level},
                               {"intra", s.intra},
                               {"inter_sibling", s.inter_sibling},
                               {"inter_cross", s.inter_cross},
                               {"proto_accuracy", s.proto_accuracy}});
    }
    return out;
  }
};

/// Mean within/between cosine similarities and nearest-prototype accuracy,
/// level by level. Other* nodes never carry labels, so they are excluded
/// from the candidate sets.
inline ClusteringReport clustering_report(const EmbeddingBatch& batch,
                                          const LabelTree& tree,
                                          const PrototypeBank& bank) {
  ClusteringReport report;
  const std::size_t n = batch.size();
  const int depth = tree.depth();

  for (int l = 1; l <= depth; ++l) {
    LevelStats stats;
    stats.level = l;
    double intra = 0.0, sib = 0.0, cross = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (batch.labels[i].depth() < l) continue;
      for (std::size_t j = i + 1; j < n; ++j) {
        if (batch.labels[j].depth() < l) continue;
        const double cos = dot(batch.vectors.row(i), batch.vectors.row(j));
        const int ai = batch.labels[i].at_level(l);
        const int aj = batch.labels[j].at_level(l);
        if (ai == aj) {
          intra += cos;
          ++stats.intra_pairs;
        } else if (l == 1 || batch.labels[i].at_level(l - 1) ==
                                 batch.labels[j].at_level(l - 1)) {
          sib += cos;
          ++stats.sibling_pairs;
        } else {
          cross += cos;
          ++stats.cross_pairs;
        }
      }
    }
    if (stats.intra_pairs) stats.intra = intra / static_cast<double>(stats.intra_pairs);
    if (stats.sibling_pairs)
      stats.inter_sibling = sib / static_cast<double>(stats.sibling_pairs);
    if (stats.cross_pairs) stats.inter_cross = cross / static_cast<double>(stats.cross_pairs);

    std::vector<int> candidates;
    for (int id : tree.nodes_at_level(l))
      if (!tree.node(id).is_other) candidates.push_back(id);
    std::size_t correct = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (batch.labels[i].depth() < l) continue;
      double best = -std::numeric_limits<double>::infinity();
      int best_node = -1;
      for (int c : candidates) {
        const double s = dot(batch.vectors.row(i), bank.prototype(c));
        if (s > best) {
          best = s;
          best_node = c;
        }
      }
      ++stats.scored;
      if (best_node == batch.labels[i].at_level(l)) ++correct;
    }
    if (stats.scored)
      stats.proto_accuracy = static_cast<double>(correct) / static_cast<double>(stats.scored);
    report.levels.push_back(stats);
  }

  // Leaf-level accuracy: classify among childless non-Other classes those
  // instances whose label terminates at one.
  std::vector<int> leaves;
  for (int id = 1; id <= tree.category_count(); ++id)
    if (tree.is_leaf(id) && !tree.node(id).is_other) leaves.push_back(id);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (batch.labels[i].empty()) continue;
    const int terminal = batch.labels[i].terminal();
    if (!tree.is_leaf(terminal) || tree.node(terminal).is_other) continue;
    double best = -std::numeric_limits<double>::infinity();
    int best_node = -1;
    for (int c : leaves) {
      const double s = dot(batch.vectors.row(i), bank.prototype(c));
      if (s > best) {
        best = s;
        best_node = c;
      }
    }
    ++report.leaf_scored;
    if (best_node == terminal) ++correct;
  }
  if (report.leaf_scored)
    report.leaf_accuracy = static_cast<double>(correct) / static_cast<double>(report.leaf_scored);
  return report;
}

/// Synthetic detection scene used to demonstrate the matching cost and the
/// combined loss on top of a trained embedding run.
struct SceneLosses {
  double cls = 0.0;
  double iou = 0.0;
  double l1 = 0.0;
  std::size_t matched = 0;
};

inline SceneLosses demo_scene_losses(const LabelTree& tree, std::uint64_t seed,
                                     const CostWeights& cw) {
  Rng rng(seed);
  std::vector<int> leaves;
  for (int id = 1; id <= tree.category_count(); ++id)
    if (tree.is_leaf(id) && !tree.node(id).is_other) leaves.push_back(id);
  const std::size_t n_classes = leaves.size();

  SceneLosses out;
  double cls_sum = 0.0, iou_sum = 0.0, l1_sum = 0.0;
  for (int image = 0; image < 3; ++image) {
    const std::size_t n_gt = 3 + rng.below(3);
    const std::size_t n_query = n_gt + 4;
    std::vector<MatchTarget> gts;
    for (std::size_t g = 0; g < n_gt; ++g) {
      RotatedBox box(rng.uniform(10.0, 90.0), rng.uniform(10.0, 90.0),
                     rng.uniform(4.0, 16.0), rng.uniform(4.0, 16.0),
                     rng.uniform(-kPi / 2.0, kPi / 2.0));
      gts.push_back({static_cast<int>(rng.below(n_classes)), box});
    }
    std::vector<Prediction> preds;
    for (std::size_t q = 0; q < n_query; ++q) {
      Prediction p;
      p.class_probs.assign(n_classes, 0.0);
      if (q < n_gt) {
        const auto& g = gts[q];
        for (std::size_t c = 0; c < n_classes; ++c)
          p.class_probs[c] = 0.3 / static_cast<double>(n_classes);
        p.class_probs[static_cast<std::size_t>(g.class_id)] += 0.7;
        p.box = RotatedBox(g.box.cx + rng.gaussian(), g.box.cy + rng.gaussian(),
                           std::max(1.0, g.box.w + 0.5 * rng.gaussian()),
                           std::max(1.0, g.box.h + 0.5 * rng.gaussian()),
                           g.box.theta + 0.1 * rng.gaussian());
      } else {
        for (std::size_t c = 0; c < n_classes; ++c)
          p.class_probs[c] = 1.0 / static_cast<double>(n_classes);
        p.box = RotatedBox(rng.uniform(10.0, 90.0), rng.uniform(10.0, 90.0),
                           rng.uniform(4.0, 16.0), rng.uniform(4.0, 16.0),
                           rng.uniform(-kPi / 2.0, kPi / 2.0));
      }
      preds.push_back(std::move(p));
    }
    CostWeights scene_cw = cw;
    scene_cw.l1_norm = 100.0;
    const Assignment assign = hungarian(match_cost_matrix(preds, gts, scene_cw));
    for (std::size_t g = 0; g < gts.size(); ++g) {
      const Prediction& p = preds[assign.query_for_gt[g]];
      cls_sum += focal_cost(p.class_probs, static_cast<std::size_t>(gts[g].class_id),
                            cw.focal_alpha, cw.focal_gamma);
      iou_sum += 1.0 - rotated_iou(p.box, gts[g].box);
      l1_sum += l1_cost(p.box, gts[g].box, 100.0);
      ++out.matched;
    }
  }
  if (out.matched) {
    out.cls = cls_sum / static_cast<double>(out.matched);
    out.iou = iou_sum / static_cast<double>(out.matched);
    out.l1 = l1_sum / static_cast<double>(out.matched);
  }
  return out;
}

/// Result of one synthetic training run.
struct TrainReport {
  std::vector<double> loss_trace;
  ClusteringReport clustering;
  double leaf_accuracy = 0.0;          // held-out nearest-prototype, leaf level
  double head_accuracy = 0.0;          // macro over the head classes
  double tail_accuracy = 0.0;          // macro over the remaining classes
  std::map<std::string, double> per_class_accuracy;
  double head_mass = 0.0;              // instance share of the top-3 classes
  LossTerms final_terms;
  double final_total = 0.0;
  Matrix final_vectors;
  std::vector<HierLabel> final_labels;
  Matrix projector;  // identity unless the projector was trained
  PrototypeBank bank;
  LabelTree tree;
};

namespace detail {

inline EmbeddingBatch make_batch(const Matrix& raw, const std::vector<HierLabel>& labels,
                                 const std::vector<std::size_t>& idx) {
  EmbeddingBatch b;
  b.vectors = Matrix(idx.size(), raw.cols());
  b.labels.reserve(idx.size());
  for (std::size_t k = 0; k < idx.size(); ++k) {
    const auto src = raw.row(idx[k]);
    auto dst = b.vectors.row(k);
    std::copy(src.begin(), src.end(), dst.begin());
    b.labels.push_back(labels[idx[k]]);
  }
  return b;
}

}  // namespace detail

/// Gradient descent through the unit normalization, with a prototype EMA
/// update after every step. Depending on train_mode the parameters are the
/// raw per-instance embeddings, the shared projection head, or both. The
/// bank is maintained in every mode so the nearest-prototype evaluation is
/// identical across ablation arms; only the loss/gradient sees the
/// include_prototypes switch.
inline TrainReport train_embeddings(const SyntheticConfig& cfg) {
  cfg.validate();
  SyntheticData data = generate_synthetic(cfg);
  const LabelTree& tree = data.tree;
  const std::size_t width = data.width();

  PrototypeBank bank = init_bank(tree, width, Rng(cfg.seed).fork(2).next_u64(),
                                 cfg.weights.epsilon);
  LossConfig loss_cfg;
  loss_cfg.tau = cfg.weights.tau;
  loss_cfg.level_weights = penalty_weights(tree.depth());
  loss_cfg.include_prototypes = cfg.loss != LossKind::bhcl_no_prototypes;

  Matrix raw = data.raw;
  Matrix projector = Matrix::identity(width);
  const bool update_raw = cfg.train_mode != TrainMode::projector;
  const bool update_projector = cfg.train_mode != TrainMode::embeddings;
  const std::size_t n_total = raw.rows();
  Rng batch_rng = Rng(cfg.seed).fork(3);

  // AdamW state (flag-gated; plain SGD is the default to keep A/B runs
  // free of optimizer-state confounds).
  Matrix adam_m(n_total, width), adam_v(n_total, width);
  Matrix adam_mw(width, width), adam_vw(width, width);
  const double beta1 = 0.9, beta2 = 0.999, adam_eps = 1e-8, weight_decay = 0.0;

  TrainReport report;
  report.head_mass = head_mass(data.counts, cfg.head_classes);
  double last_unweighted = 0.0;
  DivergenceMonitor divergence;

  std::vector<std::size_t> all_indices(n_total);
  std::iota(all_indices.begin(), all_indices.end(), 0);

  for (std::size_t step = 0; step < cfg.steps; ++step) {
    std::vector<std::size_t> idx;
    if (cfg.batch_size >= n_total) {
      idx = all_indices;
    } else {
      // Partial Fisher-Yates: batch_size distinct indices per step.
      std::vector<std::size_t> pool = all_indices;
      idx.reserve(cfg.batch_size);
      for (std::size_t k = 0; k < cfg.batch_size; ++k) {
        const std::size_t pick = k + static_cast<std::size_t>(batch_rng.below(pool.size() - k));
        std::swap(pool[k], pool[pick]);
        idx.push_back(pool[k]);
      }
    }

    EmbeddingBatch batch = detail::make_batch(raw, data.labels, idx);
    const Matrix batch_raw = batch.vectors;
    const Projection proj = project_and_normalize(batch_raw, projector);
    batch.vectors = proj.vectors;

    double loss = 0.0;
    Matrix grad_f;
    if (cfg.loss == LossKind::hcl) {
      loss = hcl_loss(batch, tree, loss_cfg);
      grad_f = hcl_gradient(batch, tree, loss_cfg);
    } else {
      loss = bhcl_loss(batch, bank, tree, loss_cfg);
      grad_f = bhcl_gradient(batch, bank, tree, loss_cfg);
    }
    last_unweighted = loss;
    loss *= cfg.weights.lambda_bhcl;
    for (double& g : grad_f.data()) g *= cfg.weights.lambda_bhcl;
    report.loss_trace.push_back(loss);
    divergence.observe(loss);

    const Matrix grad_projected = normalization_vjp(proj, grad_f);
    const double t = static_cast<double>(step + 1);
    const double bc1 = 1.0 - std::pow(beta1, t);
    const double bc2 = 1.0 - std::pow(beta2, t);

    if (update_raw) {
      const Matrix grad_raw = projector_vjp(grad_projected, projector);
      if (cfg.optimizer == OptimizerKind::sgd) {
        for (std::size_t k = 0; k < idx.size(); ++k) {
          auto row = raw.row(idx[k]);
          for (std::size_t j = 0; j < row.size(); ++j)
            row[j] -= cfg.learning_rate * grad_raw(k, j);
        }
      } else {
        for (std::size_t k = 0; k < idx.size(); ++k) {
          auto row = raw.row(idx[k]);
          for (std::size_t j = 0; j < row.size(); ++j) {
            double& m = adam_m(idx[k], j);
            double& v = adam_v(idx[k], j);
            m = beta1 * m + (1.0 - beta1) * grad_raw(k, j);
            v = beta2 * v + (1.0 - beta2) * grad_raw(k, j) * grad_raw(k, j);
            row[j] -= cfg.learning_rate *
                      ((m / bc1) / (std::sqrt(v / bc2) + adam_eps) + weight_decay * row[j]);
          }
        }
      }
    }
    if (update_projector) {
      const Matrix grad_w = matmul(transpose(batch_raw), grad_projected);
      if (cfg.optimizer == OptimizerKind::sgd) {
        for (std::size_t a = 0; a < projector.rows(); ++a)
          for (std::size_t b = 0; b < projector.cols(); ++b)
            projector(a, b) -= cfg.learning_rate * grad_w(a, b);
      } else {
        for (std::size_t a = 0; a < projector.rows(); ++a)
          for (std::size_t b = 0; b < projector.cols(); ++b) {
            double& m = adam_mw(a, b);
            double& v = adam_vw(a, b);
            m = beta1 * m + (1.0 - beta1) * grad_w(a, b);
            v = beta2 * v + (1.0 - beta2) * grad_w(a, b) * grad_w(a, b);
            projector(a, b) -= cfg.learning_rate *
                               ((m / bc1) / (std::sqrt(v / bc2) + adam_eps) +
                                weight_decay * projector(a, b));
          }
      }
    }

    // EMA after the gradient computation, on the same batch.
    ema_update(bank, batch_class_means(batch, tree), tree, cfg.leaf_momentum_override);
  }

  // Final snapshot over the whole training set.
  EmbeddingBatch final_batch = detail::make_batch(raw, data.labels, all_indices);
  final_batch.vectors = project_and_normalize(final_batch.vectors, projector).vectors;
  report.final_vectors = final_batch.vectors;
  report.final_labels = final_batch.labels;
  report.clustering = clustering_report(final_batch, tree, bank);

  // Held-out accuracy: fresh noise around the same centers, mapped through
  // the trained projection head, nearest prototype per label terminal.
  EmbeddingBatch holdout;
  holdout.vectors = project_and_normalize(data.holdout_raw, projector).vectors;
  holdout.labels = data.holdout_labels;

  std::vector<int> leaves;
  for (int id = 1; id <= tree.category_count(); ++id)
    if (tree.is_leaf(id) && !tree.node(id).is_other) leaves.push_back(id);
  std::map<int, std::pair<std::size_t, std::size_t>> per_class;  // node -> (correct, total)
  for (std::size_t i = 0; i < holdout.size(); ++i) {
    if (holdout.labels[i].empty()) continue;
    const int terminal = holdout.labels[i].terminal();
    if (!tree.is_leaf(terminal) || tree.node(terminal).is_other) continue;
    double best = -std::numeric_limits<double>::infinity();
    int best_node = -1;
    for (int c : leaves) {
      const double s = dot(holdout.vectors.row(i), bank.prototype(c));
      if (s > best) {
        best = s;
        best_node = c;
      }
    }
    auto& [correct, tot] = per_class[terminal];
    ++tot;
    if (best_node == terminal) ++correct;
  }
  std::size_t correct_all = 0, total_all = 0;
  for (const auto& [node, ct] : per_class) {
    report.per_class_accuracy[tree.node(node).name] =
        ct.second ? static_cast<double>(ct.first) / static_cast<double>(ct.second) : 0.0;
    correct_all += ct.first;
    total_all += ct.second;
  }
  report.leaf_accuracy =
      total_all ? static_cast<double>(correct_all) / static_cast<double>(total_all) : 0.0;

  // Head/tail split by training-set frequency (macro averages).
  std::vector<std::pair<std::size_t, int>> by_count;  // (count, vocab node)
  for (std::size_t k = 0; k < data.vocab.size(); ++k) {
    const int node = data.vocab[k];
    if (tree.node(node).is_other) continue;
    by_count.emplace_back(data.counts[k], node);
  }
  std::sort(by_count.begin(), by_count.end(), [](const auto& a, const auto& b) {
    return a.first != b.first ? a.first > b.first : a.second < b.second;
  });
  double head_sum = 0.0, tail_sum = 0.0;
  std::size_t head_n = 0, tail_n = 0;
  for (std::size_t k = 0; k < by_count.size(); ++k) {
    const auto it = per_class.find(by_count[k].second);
    if (it == per_class.end() || it->second.second == 0) continue;
    const double acc = static_cast<double>(it->second.first) /
                       static_cast<double>(it->second.second);
    if (k < cfg.head_classes) {
      head_sum += acc;
      ++head_n;
    } else {
      tail_sum += acc;
      ++tail_n;
    }
  }
  report.head_accuracy = head_n ? head_sum / static_cast<double>(head_n) : 0.0;
  report.tail_accuracy = tail_n ? tail_sum / static_cast<double>(tail_n) : 0.0;

  // Combined-loss assembly over the final state (plus a synthetic
  // detection scene when requested).
  report.final_terms.bhcl = last_unweighted;
  if (cfg.with_boxes) {
    const SceneLosses scene =
        demo_scene_losses(tree, Rng(cfg.seed).fork(4).next_u64(), CostWeights{});
    report.final_terms.cls = scene.cls;
    report.final_terms.iou = scene.iou;
    report.final_terms.l1 = scene.l1;
  }
  report.final_total = total_loss(report.final_terms, cfg.weights);

  report.projector = std::move(projector);
  report.bank = std::move(bank);
  report.tree = std::move(data.tree);
  return report;
}

}  // namespace hiercl
