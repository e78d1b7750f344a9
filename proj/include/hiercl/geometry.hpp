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
#include <vector>

#include "hiercl/errors.hpp"

namespace hiercl {

struct Point2 {
  double x = 0.0;
  double y = 0.0;
};

inline constexpr double kPi = 3.141592653589793238462643383279502884;

/// Wrap an angle into [-pi/2, pi/2) with period pi. A rectangle rotated by
/// theta + pi has the same vertex set, so this normalization is lossless.
inline double wrap_half_pi(double theta) {
  double t = std::fmod(theta + kPi / 2.0, kPi);
  if (t < 0.0) t += kPi;
  return t - kPi / 2.0;
}

/// Oriented rectangle: center, side lengths, rotation from the x-axis to
/// the w-edge. The constructor normalizes theta.
struct RotatedBox {
  double cx = 0.0, cy = 0.0;
  double w = 1.0, h = 1.0;
  double theta = 0.0;  // radians, in [-pi/2, pi/2)

  RotatedBox() = default;
  RotatedBox(double cx_, double cy_, double w_, double h_, double theta_)
      : cx(cx_), cy(cy_), w(w_), h(h_), theta(wrap_half_pi(theta_)) {
    if (!(w > 0.0) || !(h > 0.0))
      throw Error("rotated box: side lengths must be positive");
  }
};

/// Convex polygon, vertices counter-clockwise.
struct ConvexPolygon {
  std::vector<Point2> vertices;

  bool empty() const { return vertices.size() < 3; }

  double area() const {
    if (vertices.size() < 3) return 0.0;
    double s = 0.0;
    for (std::size_t i = 0; i < vertices.size(); ++i) {
      const Point2& a = vertices[i];
      const Point2& b = vertices[(i + 1) % vertices.size()];
      s += a.x * b.y - b.x * a.y;
    }
    return std::max(0.0, 0.5 * s);
  }
};

/// Four CCW corners of the box.
inline ConvexPolygon box_to_polygon(const RotatedBox& b) {
  const double c = std::cos(b.theta);
  const double s = std::sin(b.theta);
  const double hw = 0.5 * b.w;
  const double hh = 0.5 * b.h;
  // CCW in local coordinates, then rotated; rotation preserves orientation.
  const double lx[4] = {-hw, hw, hw, -hw};
  const double ly[4] = {-hh, -hh, hh, hh};
  ConvexPolygon poly;
  poly.vertices.resize(4);
  for (int k = 0; k < 4; ++k) {
    poly.vertices[static_cast<std::size_t>(k)] = {b.cx + c * lx[k] - s * ly[k],
                                                  b.cy + s * lx[k] + c * ly[k]};
  }
  return poly;
}

namespace detail {
inline constexpr double kClipEps = 1e-9;  // on-edge points count as inside

inline double edge_side(const Point2& a, const Point2& b, const Point2& p) {
  return (b.x - a.x) * (p.y - a.y) - (b.y - a.y) * (p.x - a.x);
}
}  // namespace detail

/// Sutherland-Hodgman clipping of one convex CCW polygon by another.
/// Returns the (possibly empty) intersection.
inline ConvexPolygon intersect_convex(const ConvexPolygon& p, const ConvexPolygon& q) {
  if (p.vertices.size() < 3 || q.vertices.size() < 3) return {};
  std::vector<Point2> poly = p.vertices;
  std::vector<Point2> next;
  for (std::size_t e = 0; e < q.vertices.size() && !poly.empty(); ++e) {
    const Point2& a = q.vertices[e];
    const Point2& b = q.vertices[(e + 1) % q.vertices.size()];
    next.clear();
    for (std::size_t v = 0; v < poly.size(); ++v) {
      const Point2& cur = poly[v];
      const Point2& nxt = poly[(v + 1) % poly.size()];
      const double dc = detail::edge_side(a, b, cur);
      const double dn = detail::edge_side(a, b, nxt);
      const bool cur_in = dc >= -detail::kClipEps;
      const bool nxt_in = dn >= -detail::kClipEps;
      if (cur_in) next.push_back(cur);
      if (cur_in != nxt_in) {
        const double t = dc / (dc - dn);
        next.push_back({cur.x + t * (nxt.x - cur.x), cur.y + t * (nxt.y - cur.y)});
      }
    }
    poly.swap(next);
  }
  ConvexPolygon out;
  out.vertices = std::move(poly);
  return out;
}

/// Exact rotated IoU via polygon clipping: area of intersection over area
/// of union, in [0, 1].
inline double rotated_iou(const RotatedBox& a, const RotatedBox& b) {
  const ConvexPolygon pa = box_to_polygon(a);
  const ConvexPolygon pb = box_to_polygon(b);
  const double inter = intersect_convex(pa, pb).area();
  if (inter <= 0.0) return 0.0;
  const double uni = pa.area() + pb.area() - inter;
  if (uni <= 0.0) return 0.0;
  return std::clamp(inter / uni, 0.0, 1.0);
}

/// L1 regression cost: center and size differences normalized by the image
/// extent, plus the angle difference wrapped to [-pi/2, pi/2) and scaled by
/// 1/pi. A pi rotation of the same rectangle therefore costs nothing.
inline double l1_cost(const RotatedBox& a, const RotatedBox& b, double norm_extent) {
  if (!(norm_extent > 0.0)) throw Error("l1_cost: norm extent must be positive");
  const double geo = std::abs(a.cx - b.cx) + std::abs(a.cy - b.cy) +
                     std::abs(a.w - b.w) + std::abs(a.h - b.h);
  const double dtheta = std::abs(wrap_half_pi(a.theta - b.theta));
  return geo / norm_extent + dtheta / kPi;
}

}  // namespace hiercl
