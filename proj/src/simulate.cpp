#include "sgcp/simulate.hpp"

#include "sgcp/matching.hpp"

namespace sgcp {

SimulateResult run_simulation(const SimulateOptions& options) {
  options.synthetic.validate();
  options.conformal.validate();
  SyntheticGenerator gen(options.synthetic);
  const LabelSpace space = gen.label_space();

  // Pass 1: annotations only, for the calibration split.
  std::vector<ImageAnnotation> annotations;
  annotations.reserve(static_cast<size_t>(options.synthetic.images));
  for (int i = 0; i < options.synthetic.images; ++i)
    annotations.push_back(gen.image(i).annotation);
  const auto split =
      split_calibration(annotations, options.min_fraction,
                        options.min_per_class, options.synthetic.k_o,
                        options.synthetic.k_r);
  std::vector<bool> is_calibration(annotations.size(), false);
  for (size_t idx : split.calibration_indices) is_calibration[idx] = true;
  annotations.clear();
  annotations.shrink_to_fit();

  SimulateResult result;
  result.calibration_images =
      static_cast<long>(split.calibration_indices.size());
  result.test_images = static_cast<long>(split.remainder_indices.size());

  // Pass 2a: calibration scores from matched predictions.
  CalibrationCollector collector(space, options.conformal);
  for (size_t idx : split.calibration_indices) {
    const auto img = gen.image(static_cast<int>(idx));
    const auto matches = greedy_match(img.detections, img.annotation);
    for (const auto& m : matches) {
      const auto& det =
          img.detections.triplets[static_cast<size_t>(m.pair_index)];
      const auto& gt = img.annotation.triplets[static_cast<size_t>(m.gt_index)];
      collector.add(Task::Object,
                    img.detections.object_by_roi(det.subject_roi).scores,
                    gt.subject_label);
      collector.add(Task::Object,
                    img.detections.object_by_roi(det.object_roi).scores,
                    gt.object_label);
      collector.add(Task::Predicate, det.predicate_scores, gt.predicate_label);
    }
  }
  result.table = collector.build(&result.warnings);

  // Pass 2b: predict and evaluate on the remainder.
  EvalAccumulator acc(space, options.conformal, options.ks);
  for (size_t idx : split.remainder_indices) {
    const auto img = gen.image(static_cast<int>(idx));
    std::vector<TripletPredictionSet> sets;
    sets.reserve(img.detections.triplets.size());
    for (const auto& det : img.detections.triplets)
      sets.push_back(predict_triplet_set(
          img.detections.object_by_roi(det.subject_roi),
          img.detections.object_by_roi(det.object_roi), det, result.table));
    acc.add_image(img.detections, sets, img.annotation);
  }
  result.report = acc.finalize();
  return result;
}

}  // namespace sgcp
