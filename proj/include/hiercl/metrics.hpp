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
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "hiercl/errors.hpp"
#include "hiercl/geometry.hpp"

namespace hiercl {

struct Detection {
  std::string image_id;
  std::string class_id;
  double score = 0.0;
  RotatedBox box;
};

struct GroundTruthBox {
  std::string image_id;
  std::string class_id;
  RotatedBox box;
};

/// Per-class average precision at one IoU threshold, plus the mean over
/// classes that have at least one ground truth.
struct ApResult {
  std::map<std::string, double> per_class;
  double mean = std::numeric_limits<double>::quiet_NaN();
};

namespace detail {

/// 101-point interpolated AP from a ranked TP/FP sequence.
inline double interpolated_ap(const std::vector<bool>& tp_flags, std::size_t num_gt) {
  if (num_gt == 0) return std::numeric_limits<double>::quiet_NaN();
  std::vector<double> precision, recall;
  std::size_t tp = 0, fp = 0;
  for (bool is_tp : tp_flags) {
    if (is_tp)
      ++tp;
    else
      ++fp;
    precision.push_back(static_cast<double>(tp) / static_cast<double>(tp + fp));
    recall.push_back(static_cast<double>(tp) / static_cast<double>(num_gt));
  }
  // Precision envelope from the right, then sample 101 recall points.
  for (std::size_t k = precision.size(); k-- > 1;)
    precision[k - 1] = std::max(precision[k - 1], precision[k]);
  double ap = 0.0;
  std::size_t idx = 0;
  for (int r = 0; r <= 100; ++r) {
    const double want = static_cast<double>(r) / 100.0;
    while (idx < recall.size() && recall[idx] < want - 1e-12) ++idx;
    if (idx < precision.size()) ap += precision[idx];
  }
  return ap / 101.0;
}

}  // namespace detail

/// Score-descending greedy matching per image and class at one IoU
/// threshold; each ground truth matches at most once, duplicates become
/// false positives. Score ties keep input order (stable sort).
inline ApResult average_precision(const std::vector<Detection>& dets,
                                  const std::vector<GroundTruthBox>& gts,
                                  double iou_threshold) {
  if (!(iou_threshold > 0.0) || !(iou_threshold < 1.0))
    throw Error("average_precision: IoU threshold must lie in (0,1)");

  std::set<std::string> classes;
  for (const auto& g : gts) classes.insert(g.class_id);

  ApResult result;
  double sum = 0.0;
  for (const std::string& cls : classes) {
    // Ground truths of this class, grouped by image.
    std::map<std::string, std::vector<std::size_t>> gt_by_image;
    std::size_t num_gt = 0;
    for (std::size_t g = 0; g < gts.size(); ++g) {
      if (gts[g].class_id != cls) continue;
      gt_by_image[gts[g].image_id].push_back(g);
      ++num_gt;
    }

    std::vector<std::size_t> order;
    for (std::size_t d = 0; d < dets.size(); ++d)
      if (dets[d].class_id == cls) order.push_back(d);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return dets[a].score > dets[b].score;
    });

    std::map<std::size_t, bool> gt_matched;
    std::vector<bool> tp_flags;
    tp_flags.reserve(order.size());
    for (std::size_t d : order) {
      const auto it = gt_by_image.find(dets[d].image_id);
      double best_iou = 0.0;
      std::size_t best_gt = 0;
      bool found = false;
      if (it != gt_by_image.end()) {
        for (std::size_t g : it->second) {
          if (gt_matched[g]) continue;
          const double iou = rotated_iou(dets[d].box, gts[g].box);
          if (iou >= iou_threshold && iou > best_iou) {
            best_iou = iou;
            best_gt = g;
            found = true;
          }
        }
      }
      if (found) gt_matched[best_gt] = true;
      tp_flags.push_back(found);
    }

    const double ap = detail::interpolated_ap(tp_flags, num_gt);
    result.per_class[cls] = ap;
    sum += ap;
  }
  if (!result.per_class.empty())
    result.mean = sum / static_cast<double>(result.per_class.size());
  return result;
}

/// Rotated COCO-style summary over the 0.50:0.05:0.95 threshold range.
struct ApRange {
  double ap50 = std::numeric_limits<double>::quiet_NaN();
  double ap75 = std::numeric_limits<double>::quiet_NaN();
  double ap50_95 = std::numeric_limits<double>::quiet_NaN();
};

inline ApRange ap_range(const std::vector<Detection>& dets,
                        const std::vector<GroundTruthBox>& gts) {
  ApRange out;
  if (gts.empty()) return out;  // undefined: NaN sentinel
  double sum = 0.0;
  for (int k = 0; k < 10; ++k) {
    const double thr = 0.5 + 0.05 * static_cast<double>(k);
    const double mean = average_precision(dets, gts, thr).mean;
    if (k == 0) out.ap50 = mean;
    if (k == 5) out.ap75 = mean;
    sum += mean;
  }
  out.ap50_95 = sum / 10.0;
  return out;
}

// ------------------------------------------------------------------
// Line-delimited record files. Angles are in degrees on disk.
//   detections:    image_id class score cx cy w h deg
//   ground truth:  image_id class cx cy w h deg
// ------------------------------------------------------------------

inline std::vector<Detection> load_detections(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open detections file: " + path);
  std::vector<Detection> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ss(line);
    Detection d;
    double cx, cy, w, h, deg;
    if (!(ss >> d.image_id >> d.class_id >> d.score >> cx >> cy >> w >> h >> deg))
      throw Error("bad detection record: " + line);
    d.box = RotatedBox(cx, cy, w, h, deg * kPi / 180.0);
    out.push_back(std::move(d));
  }
  return out;
}

inline std::vector<GroundTruthBox> load_ground_truth(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open ground-truth file: " + path);
  std::vector<GroundTruthBox> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ss(line);
    GroundTruthBox g;
    double cx, cy, w, h, deg;
    if (!(ss >> g.image_id >> g.class_id >> cx >> cy >> w >> h >> deg))
      throw Error("bad ground-truth record: " + line);
    g.box = RotatedBox(cx, cy, w, h, deg * kPi / 180.0);
    out.push_back(std::move(g));
  }
  return out;
}

}  // namespace hiercl
