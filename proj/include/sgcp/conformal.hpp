#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "sgcp/core.hpp"

namespace sgcp {

struct ConformalConfig {
  double alpha_o = 0.05;
  double alpha_r = 0.1;

  void validate() const;
  double alpha(Task t) const { return t == Task::Object ? alpha_o : alpha_r; }
};

struct CalibrationRecord {
  Task task = Task::Object;
  ScoreVector scores;
  int true_label = 0;
};

struct ClassQuantile {
  double q_hat = 1.0;
  int count = 0;
  bool all_inclusive = true;
};

// Per-class conformal thresholds for both tasks, tied to the label space
// they were calibrated for.
struct QuantileTable {
  std::vector<ClassQuantile> object_quantiles;
  std::vector<ClassQuantile> predicate_quantiles;
  ConformalConfig config;
  std::uint64_t label_fingerprint = 0;

  const std::vector<ClassQuantile>& side(Task t) const {
    return t == Task::Object ? object_quantiles : predicate_quantiles;
  }
};

// 1 - probs[label]
double nonconformity(const ScoreVector& scores, int label);

// Rank k = ceil((n+1)(1-alpha)); k-th smallest score, or (1.0, all-inclusive)
// when n = 0 or the rank exceeds n.
std::pair<double, bool> class_quantile(std::vector<double> scores,
                                       double alpha);

// Incremental per-class nonconformity collection; lets large runs calibrate
// without materializing CalibrationRecords.
class CalibrationCollector {
 public:
  CalibrationCollector(const LabelSpace& space, ConformalConfig config);

  void add(Task task, const ScoreVector& scores, int true_label);

  // Classes with fewer than `min_samples` calibration samples get a warning.
  QuantileTable build(std::vector<std::string>* warnings = nullptr,
                      int min_samples = 2) const;

 private:
  ConformalConfig config_;
  std::uint64_t fingerprint_;
  std::vector<std::vector<double>> object_scores_;
  std::vector<std::vector<double>> predicate_scores_;
};

QuantileTable calibrate(std::span<const CalibrationRecord> records,
                        const ConformalConfig& config, const LabelSpace& space,
                        std::vector<std::string>* warnings = nullptr);

// C(X) = {y : probs[y] >= 1 - q_hat_y}; argmax singleton fallback when empty.
PredictionSet predict_set(const ScoreVector& scores,
                          const QuantileTable& table);

TripletPredictionSet predict_triplet_set(const DetectedObject& subject,
                                         const DetectedObject& object,
                                         const DetectedTriplet& triplet,
                                         const QuantileTable& table);

}  // namespace sgcp
