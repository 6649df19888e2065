#include "sgcp/conformal.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace sgcp {

void ConformalConfig::validate() const {
  if (!(alpha_o > 0 && alpha_o < 1) || !(alpha_r > 0 && alpha_r < 1))
    throw std::invalid_argument("ConformalConfig: alphas must lie in (0,1)");
}

double nonconformity(const ScoreVector& scores, int label) {
  if (label < 0 || label >= static_cast<int>(scores.probs.size()))
    throw std::invalid_argument("nonconformity: label out of bounds");
  return 1.0 - scores.probs[static_cast<size_t>(label)];
}

std::pair<double, bool> class_quantile(std::vector<double> scores,
                                       double alpha) {
  const auto n = scores.size();
  const auto k = static_cast<size_t>(
      std::ceil((static_cast<double>(n) + 1.0) * (1.0 - alpha)));
  if (n == 0 || k > n) return {1.0, true};
  std::nth_element(scores.begin(), scores.begin() + (k - 1), scores.end());
  return {scores[k - 1], false};
}

CalibrationCollector::CalibrationCollector(const LabelSpace& space,
                                           ConformalConfig config)
    : config_(config),
      fingerprint_(space.fingerprint()),
      object_scores_(space.object_classes.size()),
      predicate_scores_(space.predicate_classes.size()) {
  config_.validate();
}

void CalibrationCollector::add(Task task, const ScoreVector& scores,
                               int true_label) {
  auto& per_class =
      task == Task::Object ? object_scores_ : predicate_scores_;
  if (true_label < 0 || true_label >= static_cast<int>(per_class.size()))
    throw std::invalid_argument("CalibrationCollector: label out of bounds");
  per_class[static_cast<size_t>(true_label)].push_back(
      nonconformity(scores, true_label));
}

QuantileTable CalibrationCollector::build(std::vector<std::string>* warnings,
                                          int min_samples) const {
  QuantileTable table;
  table.config = config_;
  table.label_fingerprint = fingerprint_;
  auto build_side = [&](Task task, const std::vector<std::vector<double>>& src,
                        std::vector<ClassQuantile>& dst) {
    const double alpha = config_.alpha(task);
    dst.resize(src.size());
    for (size_t y = 0; y < src.size(); ++y) {
      auto [q, all_inclusive] = class_quantile(src[y], alpha);
      dst[y] = {q, static_cast<int>(src[y].size()), all_inclusive};
      if (warnings && static_cast<int>(src[y].size()) < min_samples)
        warnings->push_back(std::string(task_name(task)) + " class " +
                            std::to_string(y) + " has only " +
                            std::to_string(src[y].size()) +
                            " calibration samples");
    }
  };
  build_side(Task::Object, object_scores_, table.object_quantiles);
  build_side(Task::Predicate, predicate_scores_, table.predicate_quantiles);
  return table;
}

QuantileTable calibrate(std::span<const CalibrationRecord> records,
                        const ConformalConfig& config, const LabelSpace& space,
                        std::vector<std::string>* warnings) {
  CalibrationCollector collector(space, config);
  for (const auto& rec : records)
    collector.add(rec.task, rec.scores, rec.true_label);
  return collector.build(warnings);
}

PredictionSet predict_set(const ScoreVector& scores,
                          const QuantileTable& table) {
  const auto& quantiles = table.side(scores.task);
  if (quantiles.size() != scores.probs.size())
    throw std::invalid_argument(
        "predict_set: score length does not match quantile table");
  PredictionSet set;
  set.task = scores.task;
  for (size_t y = 0; y < scores.probs.size(); ++y)
    if (scores.probs[y] >= 1.0 - quantiles[y].q_hat)
      set.members.push_back(static_cast<int>(y));
  if (set.members.empty()) {
    set.members.push_back(scores.argmax());
    set.fallback_used = true;
  }
  return set;
}

TripletPredictionSet predict_triplet_set(const DetectedObject& subject,
                                         const DetectedObject& object,
                                         const DetectedTriplet& triplet,
                                         const QuantileTable& table) {
  return TripletPredictionSet::factored(
      predict_set(subject.scores, table),
      predict_set(triplet.predicate_scores, table),
      predict_set(object.scores, table));
}

}  // namespace sgcp
