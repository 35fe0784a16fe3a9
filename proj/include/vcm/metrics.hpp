// Copyright 2026 The vcm-postproc Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <algorithm>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "vcm/detector.hpp"
#include "vcm/error.hpp"

namespace vcm {

inline void check_box(const Box& b) {
  if (!(b.x_min < b.x_max && b.y_min < b.y_max)) {
    fail(ErrorKind::kUsage, "degenerate box");
  }
}

inline double iou(const Box& a, const Box& b) {
  check_box(a);
  check_box(b);
  const double iw = std::min(a.x_max, b.x_max) - std::max(a.x_min, b.x_min);
  const double ih = std::min(a.y_max, b.y_max) - std::max(a.y_min, b.y_min);
  if (iw <= 0 || ih <= 0) return 0.0;
  const double inter = iw * ih;
  return inter / (a.area() + b.area() - inter);
}

struct MatchResult {
  // Indexed like the input detections.
  std::vector<bool> true_positive;
  std::vector<std::optional<int>> matched_gt;
  // Indexed like the input ground truth.
  std::vector<bool> gt_matched;

  int tp_count() const {
    return static_cast<int>(std::count(true_positive.begin(), true_positive.end(), true));
  }
  int fp_count() const { return static_cast<int>(true_positive.size()) - tp_count(); }
};

/// Indices of `dets` in evaluation order (confidence desc, stable).
inline std::vector<int> confidence_order(std::span<const Detection> dets) {
  std::vector<int> order(dets.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return dets[a].confidence > dets[b].confidence; });
  return order;
}

/// Greedy matching: each detection, in confidence order, claims the unmatched
/// ground truth with the highest IoU >= iou_thr (ties to the lower index).
inline MatchResult match_detections(std::span<const Detection> dets,
                                    std::span<const GroundTruthObject> gts, double iou_thr) {
  std::set<int> classes;
  for (const auto& d : dets) classes.insert(d.class_id);
  for (const auto& g : gts) classes.insert(g.class_id);
  if (classes.size() > 1) fail(ErrorKind::kUsage, "match_detections needs a single class");

  MatchResult result;
  result.true_positive.assign(dets.size(), false);
  result.matched_gt.assign(dets.size(), std::nullopt);
  result.gt_matched.assign(gts.size(), false);
  for (int d : confidence_order(dets)) {
    int best = -1;
    double best_iou = iou_thr;
    for (std::size_t g = 0; g < gts.size(); ++g) {
      if (result.gt_matched[g]) continue;
      const double overlap = iou(dets[d].box, gts[g].box);
      if (overlap >= best_iou && (best < 0 || overlap > best_iou)) {
        best = static_cast<int>(g);
        best_iou = overlap;
      }
    }
    if (best >= 0) {
      result.true_positive[d] = true;
      result.matched_gt[d] = best;
      result.gt_matched[best] = true;
    }
  }
  return result;
}

/// Detections and annotations of one frame.
struct FrameResults {
  std::vector<Detection> detections;
  std::vector<GroundTruthObject> ground_truth;
};

namespace detail {

struct RankedOutcome {
  double confidence;
  bool true_positive;
};

inline std::vector<Detection> of_class(std::span<const Detection> dets, int cls) {
  std::vector<Detection> out;
  for (const auto& d : dets) {
    if (d.class_id == cls) out.push_back(d);
  }
  return out;
}

inline std::vector<GroundTruthObject> of_class(std::span<const GroundTruthObject> gts, int cls) {
  std::vector<GroundTruthObject> out;
  for (const auto& g : gts) {
    if (g.class_id == cls) out.push_back(g);
  }
  return out;
}

/// Per-frame matching, then one confidence ranking across all frames.
inline std::vector<RankedOutcome> ranked_outcomes(std::span<const FrameResults> frames, int cls,
                                                  double iou_thr, double conf_thr, int& gt_total) {
  std::vector<RankedOutcome> ranked;
  gt_total = 0;
  for (const auto& frame : frames) {
    auto dets = of_class(frame.detections, cls);
    std::erase_if(dets, [&](const Detection& d) { return d.confidence < conf_thr; });
    const auto gts = of_class(frame.ground_truth, cls);
    gt_total += static_cast<int>(gts.size());
    const MatchResult m = match_detections(dets, gts, iou_thr);
    for (int i : confidence_order(dets)) ranked.push_back({dets[i].confidence, m.true_positive[i]});
  }
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const RankedOutcome& a, const RankedOutcome& b) { return a.confidence > b.confidence; });
  return ranked;
}

}  // namespace detail

/// All-point interpolated AP for one class over a whole sequence, in [0,1].
/// Returns nullopt when the class has no ground truth ("class absent").
inline std::optional<double> average_precision(std::span<const FrameResults> frames, int cls,
                                               double iou_thr = 0.5) {
  int gt_total = 0;
  const auto ranked = detail::ranked_outcomes(frames, cls, iou_thr, 0.0, gt_total);
  if (gt_total == 0) return std::nullopt;
  std::vector<double> recall;
  std::vector<double> precision;
  int tp = 0;
  for (std::size_t i = 0; i < ranked.size(); ++i) {
    tp += ranked[i].true_positive ? 1 : 0;
    recall.push_back(static_cast<double>(tp) / gt_total);
    precision.push_back(static_cast<double>(tp) / static_cast<double>(i + 1));
  }
  // Precision envelope, then area under the step function at recall changes.
  for (int i = static_cast<int>(precision.size()) - 2; i >= 0; --i) {
    precision[i] = std::max(precision[i], precision[i + 1]);
  }
  double ap = 0.0;
  double prev_recall = 0.0;
  for (std::size_t i = 0; i < recall.size(); ++i) {
    if (recall[i] > prev_recall) {
      ap += (recall[i] - prev_recall) * precision[i];
      prev_recall = recall[i];
    }
  }
  return ap;
}

/// Single-image, class-homogeneous AP.
inline std::optional<double> average_precision(std::span<const Detection> dets,
                                               std::span<const GroundTruthObject> gts,
                                               double iou_thr = 0.5) {
  std::set<int> classes;
  for (const auto& d : dets) classes.insert(d.class_id);
  for (const auto& g : gts) classes.insert(g.class_id);
  if (classes.size() > 1) fail(ErrorKind::kUsage, "average_precision needs a single class");
  if (gts.empty()) return std::nullopt;
  const FrameResults frame{{dets.begin(), dets.end()}, {gts.begin(), gts.end()}};
  return average_precision(std::span<const FrameResults>(&frame, 1), gts.front().class_id, iou_thr);
}

/// Mean of per-class AP (each in [0,1]) on a 0-100 scale.
inline double mean_ap(const std::map<int, double>& per_class_ap) {
  if (per_class_ap.empty()) fail(ErrorKind::kUsage, "mean_ap needs at least one class present in ground truth");
  double sum = 0.0;
  for (const auto& [cls, ap] : per_class_ap) sum += ap;
  return 100.0 * sum / static_cast<double>(per_class_ap.size());
}

struct F1Score {
  int true_positives = 0;
  int false_positives = 0;
  int ground_truth = 0;
  double precision = 0;
  double recall = 0;
  double f1 = 0;
};

/// F1 at a confidence threshold with TP/FP/GT counts pooled over all frames.
inline F1Score f1_at_threshold(std::span<const FrameResults> frames, int cls, double conf_thr = 0.25,
                               double iou_thr = 0.5) {
  int gt_total = 0;
  const auto ranked = detail::ranked_outcomes(frames, cls, iou_thr, conf_thr, gt_total);
  F1Score s;
  s.ground_truth = gt_total;
  for (const auto& r : ranked) (r.true_positive ? s.true_positives : s.false_positives) += 1;
  const int predicted = s.true_positives + s.false_positives;
  s.precision = predicted > 0 ? static_cast<double>(s.true_positives) / predicted : 0.0;
  s.recall = gt_total > 0 ? static_cast<double>(s.true_positives) / gt_total : 0.0;
  s.f1 = s.precision + s.recall > 0 ? 2 * s.precision * s.recall / (s.precision + s.recall) : 0.0;
  return s;
}

inline F1Score f1_at_threshold(std::span<const Detection> dets, std::span<const GroundTruthObject> gts,
                               double conf_thr = 0.25, double iou_thr = 0.5) {
  std::set<int> classes;
  for (const auto& d : dets) classes.insert(d.class_id);
  for (const auto& g : gts) classes.insert(g.class_id);
  if (classes.size() > 1) fail(ErrorKind::kUsage, "f1_at_threshold needs a single class");
  const int cls = classes.empty() ? 0 : *classes.begin();
  const FrameResults frame{{dets.begin(), dets.end()}, {gts.begin(), gts.end()}};
  return f1_at_threshold(std::span<const FrameResults>(&frame, 1), cls, conf_thr, iou_thr);
}

// ---------------------------------------------------------------------------
// Rate-accuracy points

inline constexpr const char* kLabelEncoded = "encoded";
inline constexpr const char* kLabelPostprocessed = "postprocessed";

struct RatePoint {
  std::string sequence;
  std::string label;  // encoded | postprocessed
  int qp = 0;
  double bitrate_kbps = 0;
  double map_value = 0;               // 0-100
  std::map<int, double> per_class_ap;  // 0-100, classes present in GT only
  std::map<int, double> f1;            // 0-1
};

/// Per-class AP/F1 and mAP of one sequence at one operating point.
inline RatePoint score_sequence(std::span<const FrameResults> frames, double conf_thr = 0.25,
                                double iou_thr = 0.5) {
  std::set<int> classes;
  for (const auto& f : frames) {
    for (const auto& g : f.ground_truth) classes.insert(g.class_id);
  }
  RatePoint point;
  std::map<int, double> ap01;
  for (int cls : classes) {
    // AP ranks every detection; the confidence threshold applies to F1 only.
    const auto ap = average_precision(frames, cls, iou_thr);
    ap01[cls] = *ap;
    point.per_class_ap[cls] = 100.0 * *ap;
    point.f1[cls] = f1_at_threshold(frames, cls, conf_thr, iou_thr).f1;
  }
  point.map_value = mean_ap(ap01);
  return point;
}

struct RateCurve {
  // label -> points sorted by bitrate
  std::map<std::string, std::vector<RatePoint>> groups;
};

inline RateCurve build_rate_curve(std::span<const RatePoint> points) {
  if (points.empty()) fail(ErrorKind::kUsage, "rate curve needs at least one point");
  RateCurve curve;
  for (const auto& p : points) curve.groups[p.label].push_back(p);
  for (auto& [label, group] : curve.groups) {
    std::stable_sort(group.begin(), group.end(),
                     [](const RatePoint& a, const RatePoint& b) { return a.bitrate_kbps < b.bitrate_kbps; });
  }
  return curve;
}

}  // namespace vcm
