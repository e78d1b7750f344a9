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
#include <vector>

#include "hiercl/errors.hpp"
#include "hiercl/hierarchy.hpp"
#include "hiercl/matrix.hpp"

namespace hiercl {

/// Foreground-matched projected classification queries with their labels.
/// Row i is f_i; the index set I of the loss formulas is simply all rows.
struct EmbeddingBatch {
  Matrix vectors;                 // N x d', unit-norm rows
  std::vector<HierLabel> labels;  // N entries

  std::size_t size() const { return vectors.rows(); }
  std::size_t dim() const { return vectors.cols(); }

  void validate(const LabelTree& tree, double norm_tol = 1e-6) const {
    if (labels.size() != vectors.rows())
      throw DimensionMismatch("embedding batch: row/label count mismatch");
    for (std::size_t i = 0; i < vectors.rows(); ++i) {
      if (std::abs(norm(vectors.row(i)) - 1.0) > norm_tol)
        throw Error("embedding batch: row " + std::to_string(i) + " is not unit norm");
      int prev = -1;
      for (int id : labels[i].path) {
        const NodeRecord& n = tree.node(id);
        const bool ok = prev < 0 ? (n.parent && *n.parent == tree.root_id())
                                 : (n.parent && *n.parent == prev);
        if (!ok) throw Error("embedding batch: label path broken at node " + n.name);
        prev = id;
      }
    }
  }
};

/// Output of the projection head. `projected` and `norms` are kept so the
/// caller can chain gradients back through the normalization.
struct Projection {
  Matrix vectors;              // unit rows, N x d'
  Matrix projected;            // raw * projector, pre-normalization
  std::vector<double> norms;   // row norms of `projected`
};

/// Map raw queries through a linear projector and scale rows to unit norm.
inline Projection project_and_normalize(const Matrix& raw, const Matrix& projector) {
  Projection out;
  out.projected = matmul(raw, projector);
  out.vectors = out.projected;
  out.norms.resize(out.projected.rows());
  for (std::size_t i = 0; i < out.projected.rows(); ++i) {
    const double n = norm(out.projected.row(i));
    if (n == 0.0) throw ZeroVector("projected row " + std::to_string(i) + " is zero");
    out.norms[i] = n;
    for (double& x : out.vectors.row(i)) x /= n;
  }
  return out;
}

/// Identity-projector shortcut.
inline Projection normalize_rows(const Matrix& raw) {
  return project_and_normalize(raw, Matrix::identity(raw.cols()));
}

/// Chain-rule factor of the normalization: given dL/d(vectors), return
/// dL/d(projected). For f = u/|u| this is (g - (g.f) f) / |u| row-wise.
inline Matrix normalization_vjp(const Projection& proj, const Matrix& grad_vectors) {
  if (!grad_vectors.same_shape(proj.vectors))
    throw DimensionMismatch("normalization_vjp: gradient shape mismatch");
  Matrix out(grad_vectors.rows(), grad_vectors.cols());
  for (std::size_t i = 0; i < grad_vectors.rows(); ++i) {
    const auto f = proj.vectors.row(i);
    const auto g = grad_vectors.row(i);
    const double gf = dot(g, f);
    for (std::size_t j = 0; j < grad_vectors.cols(); ++j)
      out(i, j) = (g[j] - gf * f[j]) / proj.norms[i];
  }
  return out;
}

/// dL/d(raw) = dL/d(projected) * projector^T.
inline Matrix projector_vjp(const Matrix& grad_projected, const Matrix& projector) {
  return matmul(grad_projected, transpose(projector));
}

}  // namespace hiercl
