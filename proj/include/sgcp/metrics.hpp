#pragma once

#include <array>
#include <map>
#include <span>
#include <vector>

#include "sgcp/conformal.hpp"
#include "sgcp/core.hpp"

namespace sgcp {

struct ClassCoverage {
  long samples = 0;
  long covered = 0;
};

struct EvalReport {
  double object_cov = 0, predicate_cov = 0;        // percent
  double object_covgap = 0, predicate_covgap = 0;  // percentage points
  double object_avgsize = 0, predicate_avgsize = 0, triplet_avgsize = 0;
  double cov_t = 0;  // percent
  // Component marginals of the triplet events (subject / predicate / object),
  // percent; used alongside cov_t for factorization checks.
  double cov_s = 0, cov_r = 0, cov_o = 0;
  std::map<int, double> r_at, mr_at, cr_at, cmr_at;  // K -> percent
  long matched_count = 0;
  long unmatched_pred_count = 0;
  long unmatched_gt_count = 0;
  long fallback_count = 0;
  long sets_missing_argmax = 0;
  std::vector<ClassCoverage> object_class_coverage;
  std::vector<ClassCoverage> predicate_class_coverage;
};

// --- standalone metric reductions ---

double coverage(const std::vector<bool>& memberships);  // percent

// Mean over observed classes of |c_y - (1 - alpha_y)|, in points. Classes
// absent from per_sample are excluded.
double covgap(std::span<const std::pair<int, bool>> per_sample,
              double alpha_y);

double avg_size(std::span<const PredictionSet> sets);
double avg_size(std::span<const TripletPredictionSet> sets);

double cov_t(std::span<const std::pair<TripletPredictionSet,
                                       GroundTruthTriplet>> matched);

enum class RecallMode { Exact, Coverage };
enum class RecallAggregation { Overall, PerClassMean };

struct RankedPrediction {
  double rank_score = 0;
  int matched_gt = -1;  // -1 when unmatched
  std::array<int, 3> argmax_labels{0, 0, 0};
  TripletPredictionSet set;
};

struct ImageEval {
  std::vector<RankedPrediction> predictions;
  std::vector<std::array<int, 3>> gt_labels;  // (s, r, o)
};

// R@K / cR@K (Overall) and mR@K / cmR@K (PerClassMean, keyed by the ground
// truth predicate class). Unmatched ground truths count in denominators.
double recall_at_k(std::span<const ImageEval> images, int k, RecallMode mode,
                   RecallAggregation aggregation, int num_predicate_classes);

// Streaming evaluation over (detections, sets, annotation) images; matches,
// gathers CP metrics and recall variants, then finalizes into an EvalReport.
class EvalAccumulator {
 public:
  EvalAccumulator(const LabelSpace& space, ConformalConfig config,
                  std::vector<int> ks);

  void add_image(const ImageDetections& detections,
                 std::span<const TripletPredictionSet> sets,
                 const ImageAnnotation& annotation);

  EvalReport finalize() const;

 private:
  ConformalConfig config_;
  std::vector<int> ks_;
  int k_r_;

  std::vector<ClassCoverage> object_class_;
  std::vector<ClassCoverage> predicate_class_;
  long matched_ = 0, unmatched_pred_ = 0, unmatched_gt_ = 0;
  long fallback_ = 0, missing_argmax_ = 0;
  long triplet_covered_ = 0;
  long subj_covered_ = 0, pred_covered_ = 0, obj_covered_ = 0;
  double object_size_sum_ = 0, predicate_size_sum_ = 0, triplet_size_sum_ = 0;
  // per K: overall hits, and per predicate class hits, for Exact / Coverage
  struct RecallCounters {
    long exact_hits = 0, cover_hits = 0;
    std::vector<long> exact_by_class, cover_by_class;
  };
  std::map<int, RecallCounters> recall_;
  long gt_total_ = 0;
  std::vector<long> gt_by_class_;
};

}  // namespace sgcp
