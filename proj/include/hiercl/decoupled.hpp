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
#include <limits>
#include <utility>
#include <vector>

#include "hiercl/errors.hpp"
#include "hiercl/matrix.hpp"
#include "hiercl/random.hpp"

namespace hiercl {

/// Classification and localization query sets, one row per object slot.
struct QueryState {
  Matrix q_cls;  // N x d
  Matrix q_loc;  // N x d

  void check() const {
    if (q_cls.rows() != q_loc.rows() || q_cls.cols() != q_loc.cols())
      throw DimensionMismatch("query state: classification/localization shapes differ");
  }
};

/// Encoder output tokens.
struct EncoderMemory {
  Matrix z;  // M x d

  void check() const {
    for (double x : z.data())
      if (!std::isfinite(x)) throw Error("encoder memory: non-finite entry");
  }
};

/// Single-head projection weights.
struct AttentionWeights {
  Matrix wq, wk, wv;  // square, token dim on both sides
};

/// Two-layer feed-forward: relu(x W1 + b1) W2 + b2.
struct FeedForwardWeights {
  Matrix w1;               // d x hidden
  std::vector<double> b1;  // hidden
  Matrix w2;               // hidden x d
  std::vector<double> b2;  // d

  static FeedForwardWeights zeros(std::size_t d, std::size_t hidden) {
    return {Matrix(d, hidden), std::vector<double>(hidden, 0.0), Matrix(hidden, d),
            std::vector<double>(d, 0.0)};
  }
};

/// One task-specific stream: cross-attention into the encoder memory
/// followed by a residual feed-forward block. The classification and
/// localization streams each own an independent set of these.
struct TaskStreamWeights {
  AttentionWeights cross;
  FeedForwardWeights ffn;
};

namespace detail {

/// softmax(q k^T / sqrt(d)) v, row-wise over the keys.
inline Matrix scaled_dot_attention(const Matrix& queries, const Matrix& keys,
                                   const Matrix& values) {
  if (queries.cols() != keys.cols() || keys.rows() != values.rows())
    throw DimensionMismatch("attention: query/key/value shapes inconsistent");
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(queries.cols()));
  Matrix out(queries.rows(), values.cols());
  std::vector<double> logits(keys.rows());
  for (std::size_t i = 0; i < queries.rows(); ++i) {
    double m = -std::numeric_limits<double>::infinity();
    for (std::size_t t = 0; t < keys.rows(); ++t) {
      logits[t] = dot(queries.row(i), keys.row(t)) * inv_sqrt_d;
      m = std::max(m, logits[t]);
    }
    double denom = 0.0;
    for (std::size_t t = 0; t < keys.rows(); ++t) {
      logits[t] = std::exp(logits[t] - m);
      denom += logits[t];
    }
    for (std::size_t t = 0; t < keys.rows(); ++t) {
      const double w = logits[t] / denom;
      for (std::size_t j = 0; j < values.cols(); ++j) out(i, j) += w * values(t, j);
    }
  }
  return out;
}

inline Matrix feed_forward(const Matrix& x, const FeedForwardWeights& f) {
  if (x.cols() != f.w1.rows() || f.w1.cols() != f.b1.size() ||
      f.w1.cols() != f.w2.rows() || f.w2.cols() != f.b2.size() ||
      f.w2.cols() != x.cols())
    throw DimensionMismatch("feed-forward: weight shapes inconsistent");
  Matrix hidden = matmul(x, f.w1);
  for (std::size_t i = 0; i < hidden.rows(); ++i)
    for (std::size_t j = 0; j < hidden.cols(); ++j)
      hidden(i, j) = std::max(0.0, hidden(i, j) + f.b1[j]);
  Matrix out = matmul(hidden, f.w2);
  for (std::size_t i = 0; i < out.rows(); ++i)
    for (std::size_t j = 0; j < out.cols(); ++j) out(i, j) += f.b2[j];
  return out;
}

}  // namespace detail

/// Concat the two query sets along the hidden dimension (tokens of width
/// 2d), run single-head self-attention over the N rows, split back. Aligns
/// classification and localization information for the same object slot.
inline QueryState shared_self_attention(const QueryState& state,
                                        const AttentionWeights& w) {
  state.check();
  const Matrix x = concat_cols(state.q_cls, state.q_loc);
  const std::size_t d2 = x.cols();
  if (w.wq.rows() != d2 || w.wq.cols() != d2 || w.wk.rows() != d2 ||
      w.wk.cols() != d2 || w.wv.rows() != d2 || w.wv.cols() != d2)
    throw DimensionMismatch("shared self-attention: weights must be 2d x 2d");
  const Matrix attended = detail::scaled_dot_attention(matmul(x, w.wq), matmul(x, w.wk),
                                                       matmul(x, w.wv));
  auto [cls, loc] = split_cols(attended);
  return {std::move(cls), std::move(loc)};
}

/// One task stream: queries cross-attend into the encoder memory, then a
/// residual feed-forward block refines the result.
inline Matrix task_stream(const Matrix& queries, const EncoderMemory& memory,
                          const TaskStreamWeights& w) {
  memory.check();
  const std::size_t d = queries.cols();
  if (memory.z.cols() != d)
    throw DimensionMismatch("task stream: memory token width differs from queries");
  if (w.cross.wq.rows() != d || w.cross.wq.cols() != d || w.cross.wk.rows() != d ||
      w.cross.wk.cols() != d || w.cross.wv.rows() != d || w.cross.wv.cols() != d)
    throw DimensionMismatch("task stream: attention weights must be d x d");
  const Matrix attended =
      detail::scaled_dot_attention(matmul(queries, w.cross.wq),
                                   matmul(memory.z, w.cross.wk),
                                   matmul(memory.z, w.cross.wv));
  Matrix out = detail::feed_forward(attended, w.ffn);
  for (std::size_t i = 0; i < out.rows(); ++i)
    for (std::size_t j = 0; j < out.cols(); ++j) out(i, j) += attended(i, j);
  return out;
}

/// Seeded Gaussian weights for demos and tests.
inline AttentionWeights random_attention_weights(Rng& rng, std::size_t dim,
                                                 double scale = 0.2) {
  AttentionWeights w{Matrix(dim, dim), Matrix(dim, dim), Matrix(dim, dim)};
  for (Matrix* m : {&w.wq, &w.wk, &w.wv})
    for (double& x : m->data()) x = scale * rng.gaussian();
  return w;
}

inline TaskStreamWeights random_task_stream_weights(Rng& rng, std::size_t dim,
                                                    std::size_t hidden,
                                                    double scale = 0.2) {
  TaskStreamWeights w;
  w.cross = random_attention_weights(rng, dim, scale);
  w.ffn = FeedForwardWeights::zeros(dim, hidden);
  for (double& x : w.ffn.w1.data()) x = scale * rng.gaussian();
  for (double& x : w.ffn.w2.data()) x = scale * rng.gaussian();
  for (double& x : w.ffn.b1) x = scale * rng.gaussian();
  for (double& x : w.ffn.b2) x = scale * rng.gaussian();
  return w;
}

}  // namespace hiercl
