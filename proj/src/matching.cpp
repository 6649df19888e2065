#include "sgcp/matching.hpp"

#include <algorithm>
#include <numeric>

namespace sgcp {

double iou(const BoundingBox& a, const BoundingBox& b) {
  const double ix1 = std::max(a.x1, b.x1);
  const double iy1 = std::max(a.y1, b.y1);
  const double ix2 = std::min(a.x2, b.x2);
  const double iy2 = std::min(a.y2, b.y2);
  const double iw = ix2 - ix1;
  const double ih = iy2 - iy1;
  if (iw <= 0 || ih <= 0) return 0.0;
  const double inter = iw * ih;
  return inter / (a.area() + b.area() - inter);
}

std::vector<MatchResult> greedy_match(std::span<const PredictedPair> predicted,
                                      std::span<const GroundTruthTriplet> gts) {
  std::vector<int> order(predicted.size());
  std::iota(order.begin(), order.end(), 0);
  // Descending rank, stable so equal ranks keep input order.
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return predicted[static_cast<size_t>(a)].rank_score >
           predicted[static_cast<size_t>(b)].rank_score;
  });

  std::vector<bool> gt_used(gts.size(), false);
  std::vector<MatchResult> matches;
  for (int pi : order) {
    const auto& pred = predicted[static_cast<size_t>(pi)];
    int best_gt = -1;
    double best_mean = -1;
    for (size_t j = 0; j < gts.size(); ++j) {
      if (gt_used[j]) continue;
      const double iou_s = iou(pred.subject_box, gts[j].subject_box);
      if (iou_s < 0.5) continue;
      const double iou_o = iou(pred.object_box, gts[j].object_box);
      if (iou_o < 0.5) continue;
      const double mean = 0.5 * (iou_s + iou_o);
      if (mean > best_mean) {  // strict: equal means keep the lower gt index
        best_mean = mean;
        best_gt = static_cast<int>(j);
      }
    }
    if (best_gt >= 0) {
      gt_used[static_cast<size_t>(best_gt)] = true;
      matches.push_back({pi, best_gt, best_mean});
    }
  }
  return matches;
}

std::vector<MatchResult> greedy_match(const ImageDetections& detections,
                                      const ImageAnnotation& annotation) {
  std::vector<PredictedPair> pairs;
  pairs.reserve(detections.triplets.size());
  for (const auto& t : detections.triplets)
    pairs.push_back({detections.object_by_roi(t.subject_roi).box,
                     detections.object_by_roi(t.object_roi).box,
                     t.rank_score});
  return greedy_match(pairs, annotation.triplets);
}

}  // namespace sgcp
