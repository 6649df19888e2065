#include "sgcp/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "sgcp/matching.hpp"

namespace sgcp {

double coverage(const std::vector<bool>& memberships) {
  if (memberships.empty()) throw std::invalid_argument("coverage: empty input");
  const long hits = std::count(memberships.begin(), memberships.end(), true);
  return 100.0 * static_cast<double>(hits) /
         static_cast<double>(memberships.size());
}

double covgap(std::span<const std::pair<int, bool>> per_sample,
              double alpha_y) {
  if (per_sample.empty()) throw std::invalid_argument("covgap: empty input");
  std::map<int, ClassCoverage> by_class;
  for (const auto& [cls, member] : per_sample) {
    auto& c = by_class[cls];
    ++c.samples;
    if (member) ++c.covered;
  }
  double sum = 0;
  for (const auto& [cls, c] : by_class) {
    const double c_hat =
        static_cast<double>(c.covered) / static_cast<double>(c.samples);
    sum += std::abs(c_hat - (1.0 - alpha_y));
  }
  return 100.0 * sum / static_cast<double>(by_class.size());
}

double avg_size(std::span<const PredictionSet> sets) {
  if (sets.empty()) throw std::invalid_argument("avg_size: empty input");
  double sum = 0;
  for (const auto& s : sets) sum += static_cast<double>(s.size());
  return sum / static_cast<double>(sets.size());
}

double avg_size(std::span<const TripletPredictionSet> sets) {
  if (sets.empty()) throw std::invalid_argument("avg_size: empty input");
  double sum = 0;
  for (const auto& s : sets) sum += static_cast<double>(s.size());
  return sum / static_cast<double>(sets.size());
}

double cov_t(std::span<const std::pair<TripletPredictionSet,
                                       GroundTruthTriplet>> matched) {
  if (matched.empty()) throw std::invalid_argument("cov_t: empty input");
  long hits = 0;
  for (const auto& [set, gt] : matched)
    if (set.contains(gt.subject_label, gt.predicate_label, gt.object_label))
      ++hits;
  return 100.0 * static_cast<double>(hits) /
         static_cast<double>(matched.size());
}

namespace {

bool prediction_hits(const RankedPrediction& pred,
                     const std::array<int, 3>& gt, RecallMode mode) {
  if (mode == RecallMode::Exact) return pred.argmax_labels == gt;
  return pred.set.contains(gt[0], gt[1], gt[2]);
}

// Indices of the top-k predictions by descending rank_score, ties stable.
std::vector<int> top_k_order(const std::vector<RankedPrediction>& preds,
                             int k) {
  std::vector<int> order(preds.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return preds[static_cast<size_t>(a)].rank_score >
           preds[static_cast<size_t>(b)].rank_score;
  });
  if (static_cast<int>(order.size()) > k) order.resize(static_cast<size_t>(k));
  return order;
}

}  // namespace

double recall_at_k(std::span<const ImageEval> images, int k, RecallMode mode,
                   RecallAggregation aggregation, int num_predicate_classes) {
  if (k < 1) throw std::invalid_argument("recall_at_k: K must be >= 1");
  std::vector<long> hits_by_class(static_cast<size_t>(num_predicate_classes),
                                  0);
  std::vector<long> total_by_class(static_cast<size_t>(num_predicate_classes),
                                   0);
  long hits = 0, total = 0;
  for (const auto& image : images) {
    const auto order = top_k_order(image.predictions, k);
    for (size_t gi = 0; gi < image.gt_labels.size(); ++gi) {
      const auto& gt = image.gt_labels[gi];
      ++total;
      ++total_by_class[static_cast<size_t>(gt[1])];
      for (int pi : order) {
        const auto& pred = image.predictions[static_cast<size_t>(pi)];
        if (pred.matched_gt != static_cast<int>(gi)) continue;
        if (prediction_hits(pred, gt, mode)) {
          ++hits;
          ++hits_by_class[static_cast<size_t>(gt[1])];
        }
        break;  // at most one prediction is matched to this gt
      }
    }
  }
  if (aggregation == RecallAggregation::Overall) {
    if (total == 0) throw std::invalid_argument("recall_at_k: no ground truths");
    return 100.0 * static_cast<double>(hits) / static_cast<double>(total);
  }
  double sum = 0;
  int observed = 0;
  for (int c = 0; c < num_predicate_classes; ++c) {
    if (total_by_class[static_cast<size_t>(c)] == 0) continue;
    sum += static_cast<double>(hits_by_class[static_cast<size_t>(c)]) /
           static_cast<double>(total_by_class[static_cast<size_t>(c)]);
    ++observed;
  }
  if (observed == 0) throw std::invalid_argument("recall_at_k: no ground truths");
  return 100.0 * sum / observed;
}

EvalAccumulator::EvalAccumulator(const LabelSpace& space,
                                 ConformalConfig config, std::vector<int> ks)
    : config_(config),
      ks_(std::move(ks)),
      k_r_(space.k(Task::Predicate)),
      object_class_(space.object_classes.size()),
      predicate_class_(space.predicate_classes.size()),
      gt_by_class_(space.predicate_classes.size(), 0) {
  config_.validate();
  for (int k : ks_) {
    auto& rc = recall_[k];
    rc.exact_by_class.assign(space.predicate_classes.size(), 0);
    rc.cover_by_class.assign(space.predicate_classes.size(), 0);
  }
}

void EvalAccumulator::add_image(const ImageDetections& detections,
                                std::span<const TripletPredictionSet> sets,
                                const ImageAnnotation& annotation) {
  if (sets.size() != detections.triplets.size())
    throw std::invalid_argument(
        "EvalAccumulator: one prediction set required per detected triplet");
  const auto matches = greedy_match(detections, annotation);

  std::vector<int> match_of_pred(detections.triplets.size(), -1);
  for (const auto& m : matches)
    match_of_pred[static_cast<size_t>(m.pair_index)] = m.gt_index;

  gt_total_ += static_cast<long>(annotation.triplets.size());
  for (const auto& gt : annotation.triplets)
    ++gt_by_class_[static_cast<size_t>(gt.predicate_label)];
  matched_ += static_cast<long>(matches.size());
  unmatched_pred_ +=
      static_cast<long>(detections.triplets.size() - matches.size());
  unmatched_gt_ +=
      static_cast<long>(annotation.triplets.size() - matches.size());

  // CP metrics over matched predictions only.
  for (const auto& m : matches) {
    const auto& gt = annotation.triplets[static_cast<size_t>(m.gt_index)];
    const auto& set = sets[static_cast<size_t>(m.pair_index)];
    const bool cs = set.form == TripletPredictionSet::Form::Factored
                        ? set.subject.contains(gt.subject_label)
                        : set.contains(gt.subject_label, gt.predicate_label,
                                       gt.object_label);
    // Component events are only separable for factored sets; explicit sets
    // contribute the conjunction to all three marginals.
    bool cr = cs, co = cs;
    if (set.form == TripletPredictionSet::Form::Factored) {
      cr = set.predicate.contains(gt.predicate_label);
      co = set.object.contains(gt.object_label);
    }
    auto bump = [](ClassCoverage& c, bool hit) {
      ++c.samples;
      if (hit) ++c.covered;
    };
    bump(object_class_[static_cast<size_t>(gt.subject_label)], cs);
    bump(object_class_[static_cast<size_t>(gt.object_label)], co);
    bump(predicate_class_[static_cast<size_t>(gt.predicate_label)], cr);
    if (cs) ++subj_covered_;
    if (cr) ++pred_covered_;
    if (co) ++obj_covered_;
    if (cs && cr && co) ++triplet_covered_;

    triplet_size_sum_ += static_cast<double>(set.size());
    if (set.form == TripletPredictionSet::Form::Factored) {
      object_size_sum_ += static_cast<double>(set.subject.size()) +
                          static_cast<double>(set.object.size());
      predicate_size_sum_ += static_cast<double>(set.predicate.size());
      if (set.subject.fallback_used || set.predicate.fallback_used ||
          set.object.fallback_used)
        ++fallback_;
    } else if (set.fallback_used) {
      ++fallback_;
    }
  }

  // Recall variants over all ground truths.
  ImageEval eval;
  eval.predictions.reserve(detections.triplets.size());
  for (size_t i = 0; i < detections.triplets.size(); ++i) {
    const auto& t = detections.triplets[i];
    RankedPrediction rp;
    rp.rank_score = t.rank_score;
    rp.matched_gt = match_of_pred[i];
    rp.argmax_labels = {
        detections.object_by_roi(t.subject_roi).scores.argmax(),
        t.predicate_scores.argmax(),
        detections.object_by_roi(t.object_roi).scores.argmax()};
    rp.set = sets[i];
    if (!rp.set.contains(rp.argmax_labels[0], rp.argmax_labels[1],
                         rp.argmax_labels[2]))
      ++missing_argmax_;
    eval.predictions.push_back(std::move(rp));
  }
  for (const auto& gt : annotation.triplets)
    eval.gt_labels.push_back(
        {gt.subject_label, gt.predicate_label, gt.object_label});

  for (int k : ks_) {
    auto& rc = recall_[k];
    // Reuse the per-image hit logic by accumulating raw counts.
    const auto order = top_k_order(eval.predictions, k);
    for (size_t gi = 0; gi < eval.gt_labels.size(); ++gi) {
      const auto& gt = eval.gt_labels[gi];
      for (int pi : order) {
        const auto& pred = eval.predictions[static_cast<size_t>(pi)];
        if (pred.matched_gt != static_cast<int>(gi)) continue;
        if (prediction_hits(pred, gt, RecallMode::Exact)) {
          ++rc.exact_hits;
          ++rc.exact_by_class[static_cast<size_t>(gt[1])];
        }
        if (prediction_hits(pred, gt, RecallMode::Coverage)) {
          ++rc.cover_hits;
          ++rc.cover_by_class[static_cast<size_t>(gt[1])];
        }
        break;
      }
    }
  }
}

EvalReport EvalAccumulator::finalize() const {
  if (matched_ == 0)
    throw std::runtime_error("EvalAccumulator: no matched predictions");
  EvalReport rep;
  rep.matched_count = matched_;
  rep.unmatched_pred_count = unmatched_pred_;
  rep.unmatched_gt_count = unmatched_gt_;
  rep.fallback_count = fallback_;
  rep.sets_missing_argmax = missing_argmax_;
  rep.object_class_coverage = object_class_;
  rep.predicate_class_coverage = predicate_class_;

  auto side_stats = [](const std::vector<ClassCoverage>& per_class,
                       double alpha, double& cov, double& gap) {
    long samples = 0, covered = 0;
    double gap_sum = 0;
    int observed = 0;
    for (const auto& c : per_class) {
      samples += c.samples;
      covered += c.covered;
      if (c.samples == 0) continue;
      const double c_hat =
          static_cast<double>(c.covered) / static_cast<double>(c.samples);
      gap_sum += std::abs(c_hat - (1.0 - alpha));
      ++observed;
    }
    cov = 100.0 * static_cast<double>(covered) / static_cast<double>(samples);
    gap = observed ? 100.0 * gap_sum / observed : 0.0;
  };
  side_stats(object_class_, config_.alpha_o, rep.object_cov,
             rep.object_covgap);
  side_stats(predicate_class_, config_.alpha_r, rep.predicate_cov,
             rep.predicate_covgap);

  const auto m = static_cast<double>(matched_);
  rep.object_avgsize = object_size_sum_ / (2.0 * m);
  rep.predicate_avgsize = predicate_size_sum_ / m;
  rep.triplet_avgsize = triplet_size_sum_ / m;
  rep.cov_t = 100.0 * static_cast<double>(triplet_covered_) / m;
  rep.cov_s = 100.0 * static_cast<double>(subj_covered_) / m;
  rep.cov_r = 100.0 * static_cast<double>(pred_covered_) / m;
  rep.cov_o = 100.0 * static_cast<double>(obj_covered_) / m;

  for (const auto& [k, rc] : recall_) {
    rep.r_at[k] = 100.0 * static_cast<double>(rc.exact_hits) /
                  static_cast<double>(gt_total_);
    rep.cr_at[k] = 100.0 * static_cast<double>(rc.cover_hits) /
                   static_cast<double>(gt_total_);
    auto per_class_mean = [&](const std::vector<long>& hits) {
      double sum = 0;
      int observed = 0;
      for (int c = 0; c < k_r_; ++c) {
        if (gt_by_class_[static_cast<size_t>(c)] == 0) continue;
        sum += static_cast<double>(hits[static_cast<size_t>(c)]) /
               static_cast<double>(gt_by_class_[static_cast<size_t>(c)]);
        ++observed;
      }
      return observed ? 100.0 * sum / observed : 0.0;
    };
    rep.mr_at[k] = per_class_mean(rc.exact_by_class);
    rep.cmr_at[k] = per_class_mean(rc.cover_by_class);
  }
  return rep;
}

}  // namespace sgcp
