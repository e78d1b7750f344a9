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

#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "hiercl/embedding.hpp"
#include "hiercl/errors.hpp"
#include "hiercl/hierarchy.hpp"
#include "hiercl/prototypes.hpp"

namespace hiercl {

/// Embedding-batch file for the loss-eval command:
/// {
///   "hierarchy": [ {"name", "parent", "other"} ... ],
///   "tau": 0.1, "epsilon": 0.1,
///   "rows": [ {"label": "<category name>", "vector": [..]} ... ],
///   "prototype_seed": 7            // or "prototype_bank": {<bank json>}
/// }
/// Labels are annotated category names; Other* names resolve to their
/// parent. Vectors are normalized on load.
struct BatchFile {
  LabelTree tree;
  EmbeddingBatch batch;
  double tau = 0.1;
  double epsilon = 0.1;
  PrototypeBank bank;
};

inline BatchFile batch_file_from_json(const nlohmann::json& j) {
  BatchFile out;
  out.tree = LabelTree::from_json(j.at("hierarchy"));
  out.tau = j.value("tau", 0.1);
  out.epsilon = j.value("epsilon", 0.1);

  const auto& rows = j.at("rows");
  if (!rows.is_array() || rows.empty()) throw Error("batch file: 'rows' must be a non-empty array");
  const std::size_t dim = rows.front().at("vector").size();
  out.batch.vectors = Matrix(rows.size(), dim);
  std::size_t i = 0;
  for (const auto& r : rows) {
    const auto vec = r.at("vector").get<std::vector<double>>();
    if (vec.size() != dim) throw Error("batch file: inconsistent vector dimensions");
    auto row = out.batch.vectors.row(i);
    for (std::size_t k = 0; k < dim; ++k) row[k] = vec[k];
    const double n = norm(row);
    if (n == 0.0) throw ZeroVector("batch file: zero vector in row " + std::to_string(i));
    for (double& x : row) x /= n;
    out.batch.labels.push_back(out.tree.resolve_label(r.at("label").get<std::string>()));
    ++i;
  }

  if (j.contains("prototype_bank"))
    out.bank = bank_from_json(j.at("prototype_bank"), out.tree);
  else
    out.bank = init_bank(out.tree, dim, j.value("prototype_seed", std::uint64_t{0}),
                         out.epsilon);
  return out;
}

inline BatchFile load_batch_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open batch file: " + path);
  nlohmann::json j;
  in >> j;
  return batch_file_from_json(j);
}

}  // namespace hiercl
