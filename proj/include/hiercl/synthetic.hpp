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
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "hiercl/embedding.hpp"
#include "hiercl/errors.hpp"
#include "hiercl/hierarchy.hpp"
#include "hiercl/matrix.hpp"
#include "hiercl/random.hpp"

namespace hiercl {

/// Weights of the combined training loss, plus the temperature and the
/// prototype momentum control.
struct LossWeights {
  double lambda_bhcl = 0.6;
  double lambda_cls = 1.0;
  double lambda_iou = 1.0;
  double lambda_l1 = 1.0;
  double tau = 0.1;
  double epsilon = 0.1;

  void validate() const {
    if (lambda_bhcl < 0.0) throw Error("loss weights: lambda_bhcl must be >= 0");
    if (!(tau > 0.0)) throw Error("loss weights: tau must be positive");
    if (!(epsilon > 0.0) || !(epsilon < 1.0))
      throw Error("loss weights: epsilon must lie in (0,1)");
  }

  static LossWeights from_json(const nlohmann::json& j) {
    LossWeights w;
    w.lambda_bhcl = j.value("lambda_bhcl", w.lambda_bhcl);
    w.lambda_cls = j.value("lambda_cls", w.lambda_cls);
    w.lambda_iou = j.value("lambda_iou", w.lambda_iou);
    w.lambda_l1 = j.value("lambda_l1", w.lambda_l1);
    w.tau = j.value("tau", w.tau);
    w.epsilon = j.value("epsilon", w.epsilon);
    w.validate();
    return w;
  }

  nlohmann::json to_json() const {
    return {{"lambda_bhcl", lambda_bhcl}, {"lambda_cls", lambda_cls},
            {"lambda_iou", lambda_iou},   {"lambda_l1", lambda_l1},
            {"tau", tau},                 {"epsilon", epsilon}};
  }
};

enum class LossKind { bhcl, hcl, bhcl_no_prototypes };
enum class OptimizerKind { sgd, adamw };

/// Which parameters the training loop updates: the raw per-instance
/// embeddings, the shared projection head, or both. The projector is the
/// shared capacity that a frequency-skewed loss can spend on head classes,
/// so the imbalance ablations train it.
enum class TrainMode { embeddings, projector, both };

inline std::string to_string(LossKind k) {
  switch (k) {
    case LossKind::bhcl: return "bhcl";
    case LossKind::hcl: return "hcl";
    case LossKind::bhcl_no_prototypes: return "bhcl_noproto";
  }
  return "?";
}

inline LossKind loss_kind_from_string(const std::string& s) {
  if (s == "bhcl") return LossKind::bhcl;
  if (s == "hcl") return LossKind::hcl;
  if (s == "bhcl_noproto" || s == "none") return LossKind::bhcl_no_prototypes;
  throw Error("unknown loss kind: " + s);
}

/// Everything the synthetic experiment needs: the hierarchy, the long-tail
/// sampler, the embedding optimizer, and the evaluation protocol.
struct SyntheticConfig {
  std::vector<NodeSpec> hierarchy;
  std::size_t dim = 16;
  std::size_t instances = 600;
  double tail_exponent = 0.0;  // 0 = balanced classes
  double noise = 0.35;
  double center_spread = 0.8;
  /// Extra class-independent coordinates appended to every instance. With
  /// a nonzero scale they dominate the raw cosine geometry, so nothing is
  /// separable until a trained projection head suppresses them.
  std::size_t nuisance_dim = 0;
  double nuisance_scale = 0.0;
  std::uint64_t seed = 1;
  std::size_t steps = 300;
  std::size_t batch_size = 128;
  double learning_rate = 0.05;
  LossKind loss = LossKind::bhcl;
  OptimizerKind optimizer = OptimizerKind::sgd;
  TrainMode train_mode = TrainMode::embeddings;
  LossWeights weights;
  std::optional<double> leaf_momentum_override;
  std::size_t holdout_per_class = 20;
  std::size_t head_classes = 3;
  bool with_boxes = false;

  void validate() const {
    if (hierarchy.empty()) throw Error("config: hierarchy is required");
    if (dim < 2) throw Error("config: dim must be >= 2");
    if (instances == 0) throw Error("config: instances must be positive");
    if (batch_size == 0) throw Error("config: batch_size must be positive");
    if (!(noise >= 0.0)) throw Error("config: noise must be >= 0");
    weights.validate();
  }

  static SyntheticConfig from_json(const nlohmann::json& j) {
    SyntheticConfig c;
    if (j.contains("hierarchy_file")) {
      const LabelTree t = LabelTree::load(j.at("hierarchy_file").get<std::string>());
      for (const auto& n : t.nodes()) {
        NodeSpec s{n.name, std::nullopt, n.is_other};
        if (n.parent) s.parent = t.node(*n.parent).name;
        c.hierarchy.push_back(std::move(s));
      }
    } else if (j.contains("hierarchy")) {
      for (const auto& n : j.at("hierarchy")) {
        NodeSpec s;
        s.name = n.at("name").get<std::string>();
        if (n.contains("parent") && !n.at("parent").is_null())
          s.parent = n.at("parent").get<std::string>();
        s.is_other = n.value("other", false);
        c.hierarchy.push_back(std::move(s));
      }
    } else {
      throw Error("config: 'hierarchy' or 'hierarchy_file' is required");
    }
    c.dim = j.value("dim", c.dim);
    c.instances = j.value("instances", c.instances);
    c.tail_exponent = j.value("tail_exponent", c.tail_exponent);
    c.noise = j.value("noise", c.noise);
    c.center_spread = j.value("center_spread", c.center_spread);
    c.nuisance_dim = j.value("nuisance_dim", c.nuisance_dim);
    c.nuisance_scale = j.value("nuisance_scale", c.nuisance_scale);
    c.seed = j.value("seed", c.seed);
    c.steps = j.value("steps", c.steps);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    if (j.contains("loss")) c.loss = loss_kind_from_string(j.at("loss").get<std::string>());
    if (j.contains("optimizer")) {
      const std::string o = j.at("optimizer").get<std::string>();
      if (o == "sgd")
        c.optimizer = OptimizerKind::sgd;
      else if (o == "adamw")
        c.optimizer = OptimizerKind::adamw;
      else
        throw Error("config: unknown optimizer " + o);
    }
    if (j.contains("train_mode")) {
      const std::string m = j.at("train_mode").get<std::string>();
      if (m == "embeddings")
        c.train_mode = TrainMode::embeddings;
      else if (m == "projector")
        c.train_mode = TrainMode::projector;
      else if (m == "both")
        c.train_mode = TrainMode::both;
      else
        throw Error("config: unknown train_mode " + m);
    }
    if (j.contains("weights")) c.weights = LossWeights::from_json(j.at("weights"));
    if (j.contains("leaf_momentum_override") && !j.at("leaf_momentum_override").is_null())
      c.leaf_momentum_override = j.at("leaf_momentum_override").get<double>();
    c.holdout_per_class = j.value("holdout_per_class", c.holdout_per_class);
    c.head_classes = j.value("head_classes", c.head_classes);
    c.with_boxes = j.value("with_boxes", c.with_boxes);
    c.validate();
    return c;
  }
};

/// Generated long-tail embedding problem. Instance geometry mirrors the
/// tree: each category node owns a "true center"; children scatter around
/// their parent with offsets shrinking by depth. Rows are `dim` signal
/// coordinates followed by `nuisance_dim` nuisance coordinates.
struct SyntheticData {
  LabelTree tree;
  std::vector<int> vocab;           // annotatable node ids (childless), ascending
  Matrix node_centers;              // row (id-1) = center of node id, zero nuisance part
  Matrix raw;                       // instance embeddings before normalization
  std::vector<HierLabel> labels;
  std::vector<int> instance_vocab;  // annotated vocabulary node per instance
  std::vector<std::size_t> counts;  // instances per vocab entry
  Matrix holdout_raw;
  std::vector<HierLabel> holdout_labels;
  std::vector<int> holdout_vocab;

  std::size_t width() const { return raw.cols(); }
};

inline SyntheticData generate_synthetic(const SyntheticConfig& cfg) {
  cfg.validate();
  SyntheticData data;
  data.tree = LabelTree::build(cfg.hierarchy);
  const LabelTree& tree = data.tree;

  for (int id = 1; id <= tree.category_count(); ++id)
    if (tree.is_leaf(id)) data.vocab.push_back(id);
  if (data.vocab.empty()) throw Error("generate_synthetic: hierarchy has no leaves");

  Rng rng(cfg.seed);
  // Gaussian offsets scaled by 1/sqrt(d) so their expected norm equals the
  // configured scale regardless of the embedding dimension.
  const double dim_scale = 1.0 / std::sqrt(static_cast<double>(cfg.dim));
  const std::size_t width = cfg.dim + cfg.nuisance_dim;
  const double nuisance_sigma =
      cfg.nuisance_dim == 0
          ? 0.0
          : cfg.nuisance_scale / std::sqrt(static_cast<double>(cfg.nuisance_dim));

  // True centers, top-down in id order (parents have smaller ids). Signal
  // coordinates only; the nuisance block stays zero.
  data.node_centers = Matrix(static_cast<std::size_t>(tree.category_count()), width);
  for (int id = 1; id <= tree.category_count(); ++id) {
    auto row = data.node_centers.row(static_cast<std::size_t>(id) - 1).subspan(0, cfg.dim);
    const NodeRecord& n = tree.node(id);
    if (*n.parent == tree.root_id()) {
      for (double& x : row) x = rng.gaussian();
    } else {
      const auto parent =
          data.node_centers.row(static_cast<std::size_t>(*n.parent) - 1).subspan(0, cfg.dim);
      const double scale = cfg.center_spread * dim_scale *
                           std::pow(0.5, static_cast<double>(n.level - 2));
      for (std::size_t j = 0; j < row.size(); ++j)
        row[j] = parent[j] + scale * rng.gaussian();
    }
    const double nn = norm(row);
    for (double& x : row) x /= nn;
  }

  // Power-law class counts over the vocabulary, heaviest first in id order.
  data.counts.resize(data.vocab.size());
  double mass = 0.0;
  std::vector<double> probs(data.vocab.size());
  for (std::size_t k = 0; k < probs.size(); ++k) {
    probs[k] = std::pow(static_cast<double>(k + 1), -cfg.tail_exponent);
    mass += probs[k];
  }
  std::size_t total = 0;
  for (std::size_t k = 0; k < probs.size(); ++k) {
    data.counts[k] = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::floor(static_cast<double>(cfg.instances) *
                                                   probs[k] / mass +
                                               0.5)));
    total += data.counts[k];
  }

  auto draw_instances = [&](Rng& r, std::size_t per_class_or_zero, Matrix& out_raw,
                            std::vector<HierLabel>& out_labels,
                            std::vector<int>& out_vocab) {
    std::size_t n = 0;
    for (std::size_t k = 0; k < data.vocab.size(); ++k)
      n += per_class_or_zero ? per_class_or_zero : data.counts[k];
    out_raw = Matrix(n, width);
    out_labels.reserve(n);
    std::size_t row_idx = 0;
    for (std::size_t k = 0; k < data.vocab.size(); ++k) {
      const int node = data.vocab[k];
      const HierLabel label = tree.resolve_label(tree.node(node).name);
      const auto center = data.node_centers.row(static_cast<std::size_t>(node) - 1);
      const std::size_t cnt = per_class_or_zero ? per_class_or_zero : data.counts[k];
      for (std::size_t c = 0; c < cnt; ++c) {
        auto row = out_raw.row(row_idx++);
        for (std::size_t j = 0; j < cfg.dim; ++j)
          row[j] = center[j] + cfg.noise * dim_scale * r.gaussian();
        for (std::size_t j = cfg.dim; j < width; ++j)
          row[j] = nuisance_sigma * r.gaussian();
        out_labels.push_back(label);
        out_vocab.push_back(node);
      }
    }
  };

  draw_instances(rng, 0, data.raw, data.labels, data.instance_vocab);
  Rng holdout_rng = Rng(cfg.seed).fork(1);
  draw_instances(holdout_rng, cfg.holdout_per_class, data.holdout_raw,
                 data.holdout_labels, data.holdout_vocab);
  return data;
}

/// Head-3 share of the instance mass; the long-tail knob is calibrated
/// against this.
inline double head_mass(const std::vector<std::size_t>& counts, std::size_t head = 3) {
  std::vector<std::size_t> sorted = counts;
  std::sort(sorted.begin(), sorted.end(), std::greater<>());
  std::size_t top = 0, total = 0;
  for (std::size_t k = 0; k < sorted.size(); ++k) {
    total += sorted[k];
    if (k < head) top += sorted[k];
  }
  return total == 0 ? 0.0 : static_cast<double>(top) / static_cast<double>(total);
}

}  // namespace hiercl
