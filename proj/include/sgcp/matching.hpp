#pragma once

#include <span>
#include <vector>

#include "sgcp/core.hpp"

namespace sgcp {

double iou(const BoundingBox& a, const BoundingBox& b);

struct PredictedPair {
  BoundingBox subject_box;
  BoundingBox object_box;
  double rank_score = 0;
};

struct MatchResult {
  int pair_index = -1;  // index into the predicted list
  int gt_index = -1;    // index into the ground-truth list
  double mean_iou = 0;  // >= 0.5 by the matching constraint
};

// Greedy pairwise matching: predictions in descending rank_score order each
// take the unused ground truth maximizing the mean of subject/object IoU,
// subject to both IoUs >= 0.5. Ties on mean IoU go to the lower gt index.
std::vector<MatchResult> greedy_match(std::span<const PredictedPair> predicted,
                                      std::span<const GroundTruthTriplet> gts);

std::vector<MatchResult> greedy_match(const ImageDetections& detections,
                                      const ImageAnnotation& annotation);

}  // namespace sgcp
