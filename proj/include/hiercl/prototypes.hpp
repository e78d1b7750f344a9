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

#include <cmath>
#include <cstddef>
#include <fstream>
#include <map>
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

/// Mean of the batch rows matched to one class, together with how many
/// rows went into it.
struct ClassMean {
  std::vector<double> mean;
  std::size_t count = 0;
};

/// One unit-norm prototype per category node (root excluded). Node id n
/// owns row n-1. Prototypes act as guaranteed instances of their class in
/// every mini-batch and are updated only by EMA, never by gradients.
class PrototypeBank {
 public:
  PrototypeBank() = default;
  PrototypeBank(Matrix rows, double epsilon)
      : m_(std::move(rows)), epsilon_(epsilon) {}

  std::size_t size() const { return m_.rows(); }
  std::size_t dim() const { return m_.cols(); }
  double epsilon() const { return epsilon_; }
  void set_epsilon(double e) { epsilon_ = e; }

  std::span<const double> prototype(int node_id) const {
    return m_.row(static_cast<std::size_t>(node_id) - 1);
  }
  std::span<double> prototype(int node_id) {
    return m_.row(static_cast<std::size_t>(node_id) - 1);
  }
  const Matrix& matrix() const { return m_; }

 private:
  Matrix m_;  // C x d'
  double epsilon_ = 0.1;
};

/// Seeded isotropic Gaussian rows, unit-normalized. Deterministic per seed.
inline PrototypeBank init_bank(const LabelTree& tree, std::size_t dim,
                               std::uint64_t seed, double epsilon = 0.1) {
  if (dim < 2) throw Error("init_bank: dimension must be >= 2");
  Rng rng(seed);
  Matrix m(static_cast<std::size_t>(tree.category_count()), dim);
  for (std::size_t r = 0; r < m.rows(); ++r) {
    auto row = m.row(r);
    double n2 = 0.0;
    do {
      for (double& x : row) x = rng.gaussian();
      n2 = squared_norm(row);
    } while (n2 == 0.0);
    const double inv = 1.0 / std::sqrt(n2);
    for (double& x : row) x *= inv;
  }
  return PrototypeBank(std::move(m), epsilon);
}

/// Per-class means over the batch. A row contributes to every node on its
/// label path, so intermediate nodes average their own matches and all
/// descendant matches.
inline std::map<int, ClassMean> batch_class_means(const EmbeddingBatch& batch,
                                                  const LabelTree& tree) {
  std::map<int, ClassMean> out;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto row = batch.vectors.row(i);
    for (int node : batch.labels[i].path) {
      ClassMean& cm = out[node];
      if (cm.mean.empty()) cm.mean.assign(batch.dim(), 0.0);
      for (std::size_t j = 0; j < batch.dim(); ++j) cm.mean[j] += row[j];
      ++cm.count;
    }
  }
  (void)tree;
  for (auto& [node, cm] : out)
    for (double& x : cm.mean) x /= static_cast<double>(cm.count);
  return out;
}

/// Convex blend (1-coeff)*old + coeff*mean, before renormalization.
inline std::vector<double> ema_blend(std::span<const double> old_row,
                                     std::span<const double> mean,
                                     double coeff) {
  std::vector<double> out(old_row.size());
  for (std::size_t j = 0; j < out.size(); ++j)
    out[j] = (1.0 - coeff) * old_row[j] + coeff * mean[j];
  return out;
}

/// EMA step: for each class c present in `means`, at level l,
///   M_c <- (1 - eps^(L-l)) M_c + eps^(L-l) mean_c,  then renormalize.
/// Leaf level gets eps^0 = 1, i.e. the prototype is replaced by the
/// (renormalized) batch mean. `leaf_momentum_override`, when set, replaces
/// that leaf coefficient. Classes absent from `means` are untouched.
inline void ema_update(PrototypeBank& bank, const std::map<int, ClassMean>& means,
                       const LabelTree& tree,
                       std::optional<double> leaf_momentum_override = std::nullopt) {
  const int depth = tree.depth();
  for (const auto& [node, cm] : means) {
    const int level = tree.node(node).level;
    if (level < 1 || level > depth)
      throw Error("ema_update: node " + std::to_string(node) + " is not a category node");
    double coeff = std::pow(bank.epsilon(), static_cast<double>(depth - level));
    if (level == depth && leaf_momentum_override) coeff = *leaf_momentum_override;
    auto row = bank.prototype(node);
    std::vector<double> blended = ema_blend(row, cm.mean, coeff);
    const double n = norm(blended);
    if (n == 0.0) continue;  // degenerate mean cancels the prototype; keep the old one
    for (std::size_t j = 0; j < row.size(); ++j) row[j] = blended[j] / n;
  }
}

/// Bank file: JSON with header fields and rows in node-id order.
inline nlohmann::json bank_to_json(const PrototypeBank& bank, const LabelTree& tree) {
  nlohmann::json j;
  j["categories"] = bank.size();
  j["dim"] = bank.dim();
  j["epsilon"] = bank.epsilon();
  nlohmann::json rows = nlohmann::json::array();
  for (int id = 1; id <= tree.category_count(); ++id) {
    const auto p = bank.prototype(id);
    rows.push_back({{"id", id},
                    {"name", tree.node(id).name},
                    {"vector", std::vector<double>(p.begin(), p.end())}});
  }
  j["prototypes"] = std::move(rows);
  return j;
}

inline PrototypeBank bank_from_json(const nlohmann::json& j, const LabelTree& tree) {
  const std::size_t c = j.at("categories").get<std::size_t>();
  const std::size_t dim = j.at("dim").get<std::size_t>();
  if (c != static_cast<std::size_t>(tree.category_count()))
    throw Error("bank file: category count does not match the hierarchy");
  Matrix m(c, dim);
  for (const auto& row : j.at("prototypes")) {
    const int id = row.at("id").get<int>();
    if (id < 1 || id > tree.category_count()) throw Error("bank file: bad node id");
    if (tree.node(id).name != row.at("name").get<std::string>())
      throw Error("bank file: node-id order does not match the hierarchy");
    const auto vec = row.at("vector").get<std::vector<double>>();
    if (vec.size() != dim) throw Error("bank file: row dimension mismatch");
    for (std::size_t jx = 0; jx < dim; ++jx) m(static_cast<std::size_t>(id) - 1, jx) = vec[jx];
  }
  return PrototypeBank(std::move(m), j.value("epsilon", 0.1));
}

inline void save_bank(const PrototypeBank& bank, const LabelTree& tree,
                      const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write bank file: " + path);
  out << bank_to_json(bank, tree).dump(2) << "\n";
}

inline PrototypeBank load_bank(const std::string& path, const LabelTree& tree) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open bank file: " + path);
  nlohmann::json j;
  in >> j;
  return bank_from_json(j, tree);
}

}  // namespace hiercl
