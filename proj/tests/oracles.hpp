// Independent brute-force oracles. These transcribe the formulas directly
// (no max-subtraction, no shared code with the implementation paths they
// check) and stay deliberately naive.
#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include "hiercl/contrastive.hpp"
#include "hiercl/embedding.hpp"
#include "hiercl/geometry.hpp"
#include "hiercl/hierarchy.hpp"
#include "hiercl/matrix.hpp"
#include "hiercl/prototypes.hpp"

namespace oracle {

using hiercl::EmbeddingBatch;
using hiercl::LabelTree;
using hiercl::Matrix;
using hiercl::PrototypeBank;
using hiercl::RotatedBox;

/// Ancestor by naive parent-chain walking.
inline int walk_ancestor(const LabelTree& tree, int node, int level) {
  while (tree.node(node).level > level) node = *tree.node(node).parent;
  return node;
}

inline double sim(const EmbeddingBatch& b, std::size_t i, std::size_t a, double tau) {
  return hiercl::dot(b.vectors.row(i), b.vectors.row(a)) / tau;
}

inline double pair_direct(const EmbeddingBatch& b, std::size_t i, std::size_t p,
                          double tau) {
  double denom = 0.0;
  for (std::size_t a = 0; a < b.size(); ++a)
    if (a != i) denom += std::exp(sim(b, i, a, tau));
  return -std::log(std::exp(sim(b, i, p, tau)) / denom);
}

inline double scl_direct(const EmbeddingBatch& b, double tau) {
  double total = 0.0;
  for (std::size_t i = 0; i < b.size(); ++i) {
    if (b.labels[i].empty()) continue;
    std::vector<std::size_t> pos;
    for (std::size_t p = 0; p < b.size(); ++p)
      if (p != i && !b.labels[p].empty() &&
          b.labels[p].terminal() == b.labels[i].terminal())
        pos.push_back(p);
    if (pos.empty()) continue;
    double s = 0.0;
    for (std::size_t p : pos) s += pair_direct(b, i, p, tau);
    total += s / static_cast<double>(pos.size());
  }
  return total / static_cast<double>(b.size());
}

inline double hcl_direct(const EmbeddingBatch& b, const LabelTree& tree, double tau,
                         const std::vector<double>& weights) {
  double total = 0.0;
  for (std::size_t i = 0; i < b.size(); ++i) {
    for (int l = 1; l <= b.labels[i].depth(); ++l) {
      const int anchor_anc = walk_ancestor(tree, b.labels[i].terminal(), l);
      std::vector<std::size_t> pos;
      for (std::size_t p = 0; p < b.size(); ++p)
        if (p != i && b.labels[p].depth() >= l &&
            walk_ancestor(tree, b.labels[p].terminal(), l) == anchor_anc)
          pos.push_back(p);
      if (pos.empty()) continue;
      double s = 0.0;
      for (std::size_t p : pos) s += pair_direct(b, i, p, tau);
      total += weights[static_cast<std::size_t>(l) - 1] * s /
               static_cast<double>(pos.size());
    }
  }
  return total / static_cast<double>(b.size());
}

inline double balanced_denominator_direct(const EmbeddingBatch& b,
                                          const PrototypeBank* bank,
                                          const LabelTree& tree, int level,
                                          std::size_t i, double tau, bool protos) {
  double d = 0.0;
  for (int c : tree.nodes_at_level(level)) {
    std::vector<std::size_t> members;
    for (std::size_t a = 0; a < b.size(); ++a)
      if (b.labels[a].depth() >= level &&
          walk_ancestor(tree, b.labels[a].terminal(), level) == c)
        members.push_back(a);
    const std::size_t size = members.size() + (protos ? 1 : 0);
    if (size == 0) continue;
    double s = 0.0;
    for (std::size_t a : members)
      if (a != i) s += std::exp(sim(b, i, a, tau));
    if (protos)
      s += std::exp(hiercl::dot(b.vectors.row(i), bank->prototype(c)) / tau);
    d += s / static_cast<double>(size);
  }
  return d;
}

inline double bhcl_direct(const EmbeddingBatch& b, const PrototypeBank& bank,
                          const LabelTree& tree, double tau,
                          const std::vector<double>& weights, bool protos = true) {
  if (b.size() == 0) return 0.0;
  double total = 0.0;
  for (std::size_t i = 0; i < b.size(); ++i) {
    for (int l = 1; l <= b.labels[i].depth(); ++l) {
      const int own = walk_ancestor(tree, b.labels[i].terminal(), l);
      std::vector<std::size_t> pos;
      for (std::size_t p = 0; p < b.size(); ++p)
        if (p != i && b.labels[p].depth() >= l &&
            walk_ancestor(tree, b.labels[p].terminal(), l) == own)
          pos.push_back(p);
      const std::size_t n_pos = pos.size() + (protos ? 1 : 0);
      if (n_pos == 0) continue;
      const double d = balanced_denominator_direct(b, &bank, tree, l, i, tau, protos);
      double s = 0.0;
      for (std::size_t p : pos)
        s += -std::log(std::exp(sim(b, i, p, tau)) / d);
      if (protos)
        s += -std::log(
            std::exp(hiercl::dot(b.vectors.row(i), bank.prototype(own)) / tau) / d);
      total += weights[static_cast<std::size_t>(l) - 1] * s /
               static_cast<double>(n_pos);
    }
  }
  return total / static_cast<double>(b.size());
}

// ------------------------------------------------------------------
// Monte-Carlo rasterization IoU. Samples the joint bounding rectangle and
// tests point membership by inverse rotation -- no polygon clipping
// involved. Deterministic per (pair, seed).
// ------------------------------------------------------------------

inline double mc_iou(const RotatedBox& a, const RotatedBox& b, std::size_t samples,
                     std::uint64_t seed) {
  const auto pa = hiercl::box_to_polygon(a);
  const auto pb = hiercl::box_to_polygon(b);
  float min_x = std::numeric_limits<float>::max(), max_x = -min_x;
  float min_y = min_x, max_y = -min_x;
  for (const auto& poly : {pa, pb}) {
    for (const auto& v : poly.vertices) {
      min_x = std::min(min_x, static_cast<float>(v.x));
      max_x = std::max(max_x, static_cast<float>(v.x));
      min_y = std::min(min_y, static_cast<float>(v.y));
      max_y = std::max(max_y, static_cast<float>(v.y));
    }
  }
  const float wx = max_x - min_x, wy = max_y - min_y;

  const float ca = std::cos(static_cast<float>(a.theta)), sa = std::sin(static_cast<float>(a.theta));
  const float cb = std::cos(static_cast<float>(b.theta)), sb = std::sin(static_cast<float>(b.theta));
  const float aw2 = static_cast<float>(a.w) * 0.5f, ah2 = static_cast<float>(a.h) * 0.5f;
  const float bw2 = static_cast<float>(b.w) * 0.5f, bh2 = static_cast<float>(b.h) * 0.5f;
  const float acx = static_cast<float>(a.cx), acy = static_cast<float>(a.cy);
  const float bcx = static_cast<float>(b.cx), bcy = static_cast<float>(b.cy);

  // Four interleaved xorshift streams to break the serial dependency, and
  // squared comparisons so the membership loop vectorizes.
  std::uint64_t s0 = (seed ? seed : 1) * 0x9E3779B97F4A7C15ULL;
  std::uint64_t s1 = s0 ^ 0xBF58476D1CE4E5B9ULL;
  std::uint64_t s2 = s0 + 0x94D049BB133111EBULL;
  std::uint64_t s3 = s1 + 0xD6E8FEB86659FD93ULL;
  auto step = [](std::uint64_t& s) {
    s ^= s << 13;
    s ^= s >> 7;
    s ^= s << 17;
    return s;
  };
  // warm up so nearby seeds decorrelate
  for (int w = 0; w < 4; ++w) {
    step(s0); step(s1); step(s2); step(s3);
  }

  const float aw2sq = aw2 * aw2, ah2sq = ah2 * ah2;
  const float bw2sq = bw2 * bw2, bh2sq = bh2 * bh2;
  constexpr std::size_t kBlock = 4096;
  std::vector<float> px(kBlock), py(kBlock);
  std::uint64_t n_both = 0, n_any = 0;
  std::size_t remaining = samples;
  while (remaining > 0) {
    const std::size_t n = std::min(kBlock, remaining);
    for (std::size_t k = 0; k + 4 <= n; k += 4) {
      const std::uint64_t r0 = step(s0), r1 = step(s1), r2 = step(s2), r3 = step(s3);
      px[k] = min_x + wx * static_cast<float>(r0 >> 40) * 0x1.0p-24f;
      py[k] = min_y + wy * static_cast<float>(static_cast<std::uint32_t>(r0) >> 8) * 0x1.0p-24f;
      px[k + 1] = min_x + wx * static_cast<float>(r1 >> 40) * 0x1.0p-24f;
      py[k + 1] = min_y + wy * static_cast<float>(static_cast<std::uint32_t>(r1) >> 8) * 0x1.0p-24f;
      px[k + 2] = min_x + wx * static_cast<float>(r2 >> 40) * 0x1.0p-24f;
      py[k + 2] = min_y + wy * static_cast<float>(static_cast<std::uint32_t>(r2) >> 8) * 0x1.0p-24f;
      px[k + 3] = min_x + wx * static_cast<float>(r3 >> 40) * 0x1.0p-24f;
      py[k + 3] = min_y + wy * static_cast<float>(static_cast<std::uint32_t>(r3) >> 8) * 0x1.0p-24f;
    }
    for (std::size_t k = n & ~std::size_t{3}; k < n; ++k) {
      const std::uint64_t r = step(s0);
      px[k] = min_x + wx * static_cast<float>(r >> 40) * 0x1.0p-24f;
      py[k] = min_y + wy * static_cast<float>(static_cast<std::uint32_t>(r) >> 8) * 0x1.0p-24f;
    }
    std::uint32_t both = 0, any = 0;
    for (std::size_t k = 0; k < n; ++k) {
      const float dxa = px[k] - acx, dya = py[k] - acy;
      const float xa = ca * dxa + sa * dya;
      const float ya = -sa * dxa + ca * dya;
      const int in_a = (xa * xa <= aw2sq) & (ya * ya <= ah2sq);
      const float dxb = px[k] - bcx, dyb = py[k] - bcy;
      const float xb = cb * dxb + sb * dyb;
      const float yb = -sb * dxb + cb * dyb;
      const int in_b = (xb * xb <= bw2sq) & (yb * yb <= bh2sq);
      both += static_cast<std::uint32_t>(in_a & in_b);
      any += static_cast<std::uint32_t>(in_a | in_b);
    }
    n_both += both;
    n_any += any;
    remaining -= n;
  }
  return n_any == 0 ? 0.0 : static_cast<double>(n_both) / static_cast<double>(n_any);
}

// ------------------------------------------------------------------
// Exhaustive bipartite assignment: enumerate injective maps gt -> query in
// lexicographic order and keep the first strict optimum.
// ------------------------------------------------------------------

struct BruteAssignment {
  std::vector<std::size_t> query_for_gt;
  double total = std::numeric_limits<double>::infinity();
};

inline void brute_recurse(const Matrix& cost, std::size_t g,
                          std::vector<std::size_t>& current, std::vector<bool>& used,
                          double running, BruteAssignment& best) {
  if (g == cost.cols()) {
    if (running < best.total) {
      best.total = running;
      best.query_for_gt = current;
    }
    return;
  }
  for (std::size_t q = 0; q < cost.rows(); ++q) {
    if (used[q]) continue;
    used[q] = true;
    current.push_back(q);
    brute_recurse(cost, g + 1, current, used, running + cost(q, g), best);
    current.pop_back();
    used[q] = false;
  }
}

inline BruteAssignment brute_force_assignment(const Matrix& cost) {
  BruteAssignment best;
  if (cost.cols() == 0) {
    best.total = 0.0;
    best.query_for_gt = {};
    return best;
  }
  std::vector<std::size_t> current;
  std::vector<bool> used(cost.rows(), false);
  brute_recurse(cost, 0, current, used, 0.0, best);
  return best;
}

}  // namespace oracle
