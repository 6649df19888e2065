#include <doctest.h>

#include <random>

#include "sgcp/metrics.hpp"

using namespace sgcp;

namespace {

TripletPredictionSet factored(std::vector<int> s, std::vector<int> r,
                              std::vector<int> o) {
  return TripletPredictionSet::factored({Task::Object, std::move(s), false},
                                        {Task::Predicate, std::move(r), false},
                                        {Task::Object, std::move(o), false});
}

}  // namespace

TEST_CASE("coverage") {
  std::vector<bool> m = {true, true, false};
  CHECK(coverage(m) == doctest::Approx(66.6666666667));
  m.assign(5, true);
  CHECK(coverage(m) == 100.0);
  m.clear();
  CHECK_THROWS_AS(coverage(m), std::invalid_argument);
}

TEST_CASE("covgap") {
  std::vector<std::pair<int, bool>> per_sample;
  // class 0 at 90%, class 1 at 100%, alpha = 0.05
  for (int i = 0; i < 9; ++i) per_sample.push_back({0, true});
  per_sample.push_back({0, false});
  for (int i = 0; i < 4; ++i) per_sample.push_back({1, true});
  CHECK(covgap(per_sample, 0.05) == doctest::Approx(5.0));

  // all classes exactly at 1 - alpha
  per_sample.clear();
  for (int i = 0; i < 9; ++i) per_sample.push_back({0, true});
  per_sample.push_back({0, false});
  CHECK(covgap(per_sample, 0.1) == doctest::Approx(0.0));

  // single fully covered class, alpha = 0.1
  per_sample.assign(3, {2, true});
  CHECK(covgap(per_sample, 0.1) == doctest::Approx(10.0));
}

TEST_CASE("avg_size") {
  std::vector<PredictionSet> sets = {{Task::Object, {0}, false},
                                     {Task::Object, {1}, false},
                                     {Task::Object, {2}, false}};
  CHECK(avg_size(sets) == 1.0);
  sets = {{Task::Object, {0, 1, 2, 3}, false}};
  std::vector<int> sixteen(16);
  for (int i = 0; i < 16; ++i) sixteen[(size_t)i] = i;
  sets.push_back({Task::Object, sixteen, false});
  CHECK(avg_size(sets) == 10.0);

  std::vector<TripletPredictionSet> tsets;
  tsets.push_back(factored({0, 1}, {0, 1, 2}, {0, 1}));  // 12
  std::vector<std::array<int, 3>> eight(8, {0, 0, 0});
  tsets.push_back(TripletPredictionSet::explicit_set(eight));
  CHECK(avg_size(tsets) == 10.0);
}

TEST_CASE("cov_t requires the full conjunction") {
  GroundTruthTriplet gt;
  gt.subject_box = gt.object_box = BoundingBox(0, 0, 1, 1);
  gt.subject_label = 1;
  gt.predicate_label = 2;
  gt.object_label = 3;
  std::vector<std::pair<TripletPredictionSet, GroundTruthTriplet>> matched;
  matched.push_back({factored({1}, {2}, {3}), gt});
  CHECK(cov_t(matched) == 100.0);
  matched.push_back({factored({1}, {0}, {3}), gt});  // predicate missing
  CHECK(cov_t(matched) == 50.0);
}

TEST_CASE("cov_t is invariant under materialization") {
  std::mt19937_64 rng(3);
  std::vector<std::pair<TripletPredictionSet, GroundTruthTriplet>> a, b;
  for (int i = 0; i < 40; ++i) {
    auto pick = [&rng](int k) {
      std::vector<int> v;
      for (int j = 0; j < k; ++j)
        if (rng() % 2) v.push_back(j);
      if (v.empty()) v.push_back(0);
      return v;
    };
    auto t = factored(pick(5), pick(3), pick(5));
    GroundTruthTriplet gt;
    gt.subject_box = gt.object_box = BoundingBox(0, 0, 1, 1);
    gt.subject_label = (int)(rng() % 5);
    gt.predicate_label = (int)(rng() % 3);
    gt.object_label = (int)(rng() % 5);
    a.push_back({t, gt});
    b.push_back({materialize(t), gt});
  }
  CHECK(cov_t(a) == cov_t(b));
}

TEST_CASE("coverage recall counts set membership instead of equality") {
  ImageEval img;
  RankedPrediction rp;
  rp.rank_score = 0.9;
  rp.matched_gt = 0;
  rp.argmax_labels = {0, 1, 0};           // argmax predicate differs from gt
  rp.set = factored({0}, {1, 2}, {0});    // but the set contains it
  img.predictions.push_back(rp);
  img.gt_labels.push_back({0, 2, 0});
  std::vector<ImageEval> images = {img};
  CHECK(recall_at_k(images, 1, RecallMode::Exact, RecallAggregation::Overall,
                    3) == 0.0);
  CHECK(recall_at_k(images, 1, RecallMode::Coverage,
                    RecallAggregation::Overall, 3) == 100.0);

  // exact-hit variant
  images[0].predictions[0].argmax_labels = {0, 2, 0};
  CHECK(recall_at_k(images, 1, RecallMode::Exact, RecallAggregation::Overall,
                    3) == 100.0);
}

TEST_CASE("unmatched ground truths stay in recall denominators") {
  ImageEval img;
  RankedPrediction rp;
  rp.rank_score = 0.9;
  rp.matched_gt = 0;
  rp.argmax_labels = {0, 0, 0};
  rp.set = factored({0}, {0}, {0});
  img.predictions.push_back(rp);
  img.gt_labels.push_back({0, 0, 0});
  img.gt_labels.push_back({1, 1, 1});  // never matched
  std::vector<ImageEval> images = {img};
  CHECK(recall_at_k(images, 50, RecallMode::Exact, RecallAggregation::Overall,
                    2) == 50.0);
  // per-class mean: class 0 hits 1/1, class 1 hits 0/1
  CHECK(recall_at_k(images, 50, RecallMode::Exact,
                    RecallAggregation::PerClassMean, 2) == 50.0);
}

TEST_CASE("recall is non-decreasing in K") {
  ImageEval img;
  for (int i = 0; i < 6; ++i) {
    RankedPrediction rp;
    rp.rank_score = 1.0 - 0.1 * i;
    rp.matched_gt = i;
    rp.argmax_labels = {0, 0, 0};
    rp.set = factored({0}, {0}, {0});
    img.predictions.push_back(rp);
    img.gt_labels.push_back({0, 0, 0});
  }
  std::vector<ImageEval> images = {img};
  double prev = -1;
  for (int k = 1; k <= 8; ++k) {
    const double r = recall_at_k(images, k, RecallMode::Coverage,
                                 RecallAggregation::Overall, 1);
    CHECK(r >= prev);
    prev = r;
  }
  CHECK(prev == 100.0);
}

TEST_CASE("accumulator accepts fallback singleton sets") {
  LabelSpace space;
  space.object_classes = {"a", "b"};
  space.predicate_classes = {"p", "q"};

  ImageDetections det;
  det.image_id = "im";
  det.objects.push_back({0, BoundingBox(0, 0, 10, 10),
                         ScoreVector(Task::Object, {0.9, 0.1})});
  det.objects.push_back({1, BoundingBox(20, 0, 30, 10),
                         ScoreVector(Task::Object, {0.2, 0.8})});
  det.triplets.push_back({0, 1, ScoreVector(Task::Predicate, {0.7, 0.3}),
                          BoundingBox(0, 0, 30, 10), 0.5});
  ImageAnnotation ann;
  ann.image_id = "im";
  ann.triplets.push_back(
      {BoundingBox(0, 0, 10, 10), BoundingBox(20, 0, 30, 10), 0, 1, 0});

  auto t = TripletPredictionSet::factored({Task::Object, {0}, true},
                                          {Task::Predicate, {0}, true},
                                          {Task::Object, {1}, true});
  std::vector<TripletPredictionSet> sets = {t};
  EvalAccumulator acc(space, {0.05, 0.1}, {50});
  acc.add_image(det, sets, ann);
  const auto rep = acc.finalize();
  CHECK(rep.fallback_count == 1);
  CHECK(rep.cov_t == 100.0);
  CHECK(rep.triplet_avgsize == 1.0);
  CHECK(rep.sets_missing_argmax == 0);
}
