#include <catch2/catch.hpp>

#include <cmath>
#include <vector>

#include "hiercl/decoupled.hpp"
#include "hiercl/random.hpp"

using namespace hiercl;

namespace {

Matrix random_matrix(Rng& rng, std::size_t r, std::size_t c) {
  Matrix m(r, c);
  for (double& x : m.data()) x = rng.gaussian();
  return m;
}

/// Straight-line reimplementation of the attention arithmetic, kept free of
/// the library's helper functions.
Matrix dense_attention_oracle(const Matrix& x_q, const Matrix& x_kv,
                              const AttentionWeights& w) {
  const std::size_t n = x_q.rows(), m = x_kv.rows(), d = x_q.cols();
  std::vector<std::vector<double>> q(n, std::vector<double>(d, 0.0));
  std::vector<std::vector<double>> k(m, std::vector<double>(d, 0.0));
  std::vector<std::vector<double>> v(m, std::vector<double>(d, 0.0));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j)
      for (std::size_t t = 0; t < d; ++t) q[i][j] += x_q(i, t) * w.wq(t, j);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < d; ++j)
      for (std::size_t t = 0; t < d; ++t) {
        k[i][j] += x_kv(i, t) * w.wk(t, j);
        v[i][j] += x_kv(i, t) * w.wv(t, j);
      }
  Matrix out(n, d);
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> logits(m, 0.0);
    for (std::size_t t = 0; t < m; ++t) {
      for (std::size_t j = 0; j < d; ++j) logits[t] += q[i][j] * k[t][j];
      logits[t] /= std::sqrt(static_cast<double>(d));
    }
    double denom = 0.0;
    for (double l : logits) denom += std::exp(l);
    for (std::size_t t = 0; t < m; ++t) {
      const double weight = std::exp(logits[t]) / denom;
      for (std::size_t j = 0; j < d; ++j) out(i, j) += weight * v[t][j];
    }
  }
  return out;
}

}  // namespace

TEST_CASE("shared self-attention") {
  const std::size_t n = 4, d = 3;
  Rng rng(5);
  QueryState state{random_matrix(rng, n, d), random_matrix(rng, n, d)};

  SECTION("uniform attention with identity values averages the rows") {
    AttentionWeights w{Matrix(2 * d, 2 * d), Matrix(2 * d, 2 * d),
                       Matrix::identity(2 * d)};
    const QueryState out = shared_self_attention(state, w);
    const Matrix x = concat_cols(state.q_cls, state.q_loc);
    for (std::size_t j = 0; j < d; ++j) {
      double mean_cls = 0.0, mean_loc = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        mean_cls += x(i, j) / static_cast<double>(n);
        mean_loc += x(i, d + j) / static_cast<double>(n);
      }
      for (std::size_t i = 0; i < n; ++i) {
        CHECK(out.q_cls(i, j) == Approx(mean_cls).margin(1e-12));
        CHECK(out.q_loc(i, j) == Approx(mean_loc).margin(1e-12));
      }
    }
  }

  SECTION("row permutation equivariance") {
    Rng wrng(6);
    const AttentionWeights w = random_attention_weights(wrng, 2 * d);
    const QueryState out = shared_self_attention(state, w);
    QueryState perm;
    perm.q_cls = Matrix(n, d);
    perm.q_loc = Matrix(n, d);
    std::vector<std::size_t> order{2, 0, 3, 1};
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < d; ++j) {
        perm.q_cls(i, j) = state.q_cls(order[i], j);
        perm.q_loc(i, j) = state.q_loc(order[i], j);
      }
    const QueryState out_perm = shared_self_attention(perm, w);
    // The softmax accumulates in row order, so permutation can move the
    // last bit; everything else is identical.
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < d; ++j) {
        CHECK(out_perm.q_cls(i, j) == Approx(out.q_cls(order[i], j)).margin(1e-13));
        CHECK(out_perm.q_loc(i, j) == Approx(out.q_loc(order[i], j)).margin(1e-13));
      }
  }

  SECTION("split of concat is the identity") {
    const Matrix x = concat_cols(state.q_cls, state.q_loc);
    const auto [cls, loc] = split_cols(x);
    CHECK(cls == state.q_cls);
    CHECK(loc == state.q_loc);
  }

  SECTION("matches the dense-arithmetic oracle") {
    Rng wrng(7);
    const AttentionWeights w = random_attention_weights(wrng, 2 * d);
    const QueryState out = shared_self_attention(state, w);
    const Matrix x = concat_cols(state.q_cls, state.q_loc);
    const Matrix expected = dense_attention_oracle(x, x, w);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < 2 * d; ++j) {
        const double got = j < d ? out.q_cls(i, j) : out.q_loc(i, j - d);
        CHECK(got == Approx(expected(i, j)).margin(1e-10));
      }
  }

  SECTION("shape mismatches are rejected") {
    QueryState bad{Matrix(3, 4), Matrix(2, 4)};
    AttentionWeights w{Matrix(8, 8), Matrix(8, 8), Matrix(8, 8)};
    CHECK_THROWS_AS(shared_self_attention(bad, w), DimensionMismatch);
    AttentionWeights small{Matrix(4, 4), Matrix(4, 4), Matrix(4, 4)};
    CHECK_THROWS_AS(shared_self_attention(state, small), DimensionMismatch);
  }
}

TEST_CASE("task stream") {
  const std::size_t n = 3, d = 4, m = 5;
  Rng rng(9);
  const Matrix queries = random_matrix(rng, n, d);
  const EncoderMemory memory{random_matrix(rng, m, d)};

  SECTION("single memory token broadcasts its value row") {
    EncoderMemory one{random_matrix(rng, 1, d)};
    TaskStreamWeights w;
    Rng wrng(10);
    w.cross = random_attention_weights(wrng, d);
    w.ffn = FeedForwardWeights::zeros(d, 6);
    const Matrix out = task_stream(queries, one, w);
    std::vector<double> value(d, 0.0);
    for (std::size_t j = 0; j < d; ++j)
      for (std::size_t t = 0; t < d; ++t) value[j] += one.z(0, t) * w.cross.wv(t, j);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < d; ++j)
        CHECK(out(i, j) == Approx(value[j]).margin(1e-12));
  }

  SECTION("zero feed-forward weights leave the attention output (residual)") {
    TaskStreamWeights w;
    Rng wrng(11);
    w.cross = random_attention_weights(wrng, d);
    w.ffn = FeedForwardWeights::zeros(d, 8);
    const Matrix out = task_stream(queries, memory, w);
    const Matrix attended = dense_attention_oracle(queries, memory.z, w.cross);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < d; ++j)
        CHECK(out(i, j) == Approx(attended(i, j)).margin(1e-10));
  }

  SECTION("matches the dense-arithmetic oracle with a live feed-forward") {
    Rng wrng(12);
    const TaskStreamWeights w = random_task_stream_weights(wrng, d, 6);
    const Matrix out = task_stream(queries, memory, w);
    const Matrix attended = dense_attention_oracle(queries, memory.z, w.cross);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < d; ++j) {
        // relu(a W1 + b1) W2 + b2 + a
        double expected = attended(i, j) + w.ffn.b2[j];
        for (std::size_t h = 0; h < 6; ++h) {
          double hidden = w.ffn.b1[h];
          for (std::size_t t = 0; t < d; ++t) hidden += attended(i, t) * w.ffn.w1(t, h);
          expected += std::max(0.0, hidden) * w.ffn.w2(h, j);
        }
        CHECK(out(i, j) == Approx(expected).margin(1e-10));
      }
  }

  SECTION("the two streams are independent after the shared block") {
    Rng wrng(13);
    const TaskStreamWeights w_cls = random_task_stream_weights(wrng, d, 6);
    TaskStreamWeights w_loc1 = random_task_stream_weights(wrng, d, 6);
    TaskStreamWeights w_loc2 = random_task_stream_weights(wrng, d, 6);
    const Matrix cls_out1 = task_stream(queries, memory, w_cls);
    (void)task_stream(queries, memory, w_loc1);
    const Matrix cls_out2 = task_stream(queries, memory, w_cls);
    (void)task_stream(queries, memory, w_loc2);
    CHECK(cls_out1 == cls_out2);  // bit-identical
  }

  SECTION("memory width must match the queries") {
    TaskStreamWeights w;
    Rng wrng(14);
    w.cross = random_attention_weights(wrng, d);
    w.ffn = FeedForwardWeights::zeros(d, 4);
    EncoderMemory bad{Matrix(m, d + 1)};
    CHECK_THROWS_AS(task_stream(queries, bad, w), DimensionMismatch);
  }
}
