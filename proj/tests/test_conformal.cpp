#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "sgcp/conformal.hpp"

using namespace sgcp;

namespace {

LabelSpace tiny_space(int k_o, int k_r) {
  LabelSpace space;
  for (int i = 0; i < k_o; ++i)
    space.object_classes.push_back("o" + std::to_string(i));
  for (int i = 0; i < k_r; ++i)
    space.predicate_classes.push_back("p" + std::to_string(i));
  return space;
}

std::pair<double, bool> brute_force_quantile(std::vector<double> scores,
                                             double alpha) {
  std::sort(scores.begin(), scores.end());
  const size_t n = scores.size();
  const auto k = (size_t)std::ceil(((double)n + 1.0) * (1.0 - alpha));
  if (n == 0 || k > n) return {1.0, true};
  return {scores[k - 1], false};
}

}  // namespace

TEST_CASE("nonconformity") {
  CHECK(nonconformity(ScoreVector(Task::Object, {1.0, 0.0}), 0) == 0.0);
  CHECK(nonconformity(ScoreVector(Task::Object, {1.0, 0.0}), 1) == 1.0);
  CHECK(nonconformity(ScoreVector(Task::Object, {0.7, 0.2, 0.1}), 1) ==
        doctest::Approx(0.8));
  CHECK_THROWS_AS(nonconformity(ScoreVector(Task::Object, {1.0}), 1),
                  std::invalid_argument);
}

TEST_CASE("class_quantile worked examples") {
  auto [q, inc] = class_quantile({0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9},
                                 0.1);
  CHECK(q == doctest::Approx(0.9));  // k = ceil(10 * 0.9) = 9
  CHECK(!inc);

  std::tie(q, inc) = class_quantile({0.1, 0.2, 0.3, 0.4}, 0.1);
  CHECK(q == 1.0);  // k = ceil(4.5) = 5 > 4
  CHECK(inc);

  std::tie(q, inc) = class_quantile({}, 0.5);
  CHECK(q == 1.0);
  CHECK(inc);
}

TEST_CASE("class_quantile equals the brute-force reference") {
  std::mt19937_64 rng(42);
  std::uniform_real_distribution<double> unit(0, 1), a(0.01, 0.5);
  std::uniform_int_distribution<int> sz(0, 50);
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<double> scores((size_t)sz(rng));
    for (auto& s : scores) s = unit(rng);
    const double alpha = a(rng);
    const auto got = class_quantile(scores, alpha);
    const auto want = brute_force_quantile(scores, alpha);
    CHECK(got.first == want.first);
    CHECK(got.second == want.second);
  }
}

TEST_CASE("quantile is non-increasing in alpha") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> unit(0, 1);
  std::vector<double> scores(37);
  for (auto& s : scores) s = unit(rng);
  double prev = 2.0;
  for (double alpha : {0.01, 0.05, 0.1, 0.2, 0.3, 0.5, 0.8}) {
    const double q = class_quantile(scores, alpha).first;
    CHECK(q <= prev);
    prev = q;
  }
}

TEST_CASE("calibrate single record per class goes all-inclusive") {
  const auto space = tiny_space(2, 2);
  std::vector<CalibrationRecord> records = {
      {Task::Object, ScoreVector(Task::Object, {0.3, 0.7}), 0},
      {Task::Object, ScoreVector(Task::Object, {0.7, 0.3}), 1},
      {Task::Predicate, ScoreVector(Task::Predicate, {0.3, 0.7}), 0},
      {Task::Predicate, ScoreVector(Task::Predicate, {0.7, 0.3}), 1},
  };
  std::vector<std::string> warnings;
  const auto table = calibrate(records, {0.05, 0.1}, space, &warnings);
  // n = 1, k = ceil(2 * 0.9) = 2 > 1
  for (const auto& q : table.predicate_quantiles) {
    CHECK(q.q_hat == 1.0);
    CHECK(q.all_inclusive);
    CHECK(q.count == 1);
  }
  CHECK(warnings.size() == 4);  // every class below min_samples = 2
}

TEST_CASE("per-class quantiles are independent across classes") {
  const auto space = tiny_space(2, 2);
  std::vector<CalibrationRecord> records;
  for (int cls = 0; cls < 2; ++cls)
    for (int i = 1; i <= 9; ++i) {
      const double nc = 0.1 * i;  // nonconformity = 1 - p_true
      std::vector<double> probs(2);
      probs[(size_t)cls] = 1.0 - nc;
      probs[(size_t)(1 - cls)] = nc;
      records.push_back({Task::Object, ScoreVector(Task::Object, probs), cls});
    }
  const auto table = calibrate(records, {0.1, 0.1}, space);
  CHECK(table.object_quantiles[0].q_hat == doctest::Approx(0.9));
  CHECK(table.object_quantiles[1].q_hat == doctest::Approx(0.9));
  CHECK(!table.object_quantiles[0].all_inclusive);
}

TEST_CASE("classes with no records are flagged all-inclusive") {
  const auto space = tiny_space(3, 2);
  std::vector<CalibrationRecord> records = {
      {Task::Object, ScoreVector(Task::Object, {0.8, 0.1, 0.1}), 0},
      {Task::Object, ScoreVector(Task::Object, {0.8, 0.1, 0.1}), 0},
      {Task::Predicate, ScoreVector(Task::Predicate, {0.6, 0.4}), 0},
      {Task::Predicate, ScoreVector(Task::Predicate, {0.6, 0.4}), 1},
  };
  std::vector<std::string> warnings;
  const auto table = calibrate(records, {0.05, 0.1}, space, &warnings);
  CHECK(table.object_quantiles[1].count == 0);
  CHECK(table.object_quantiles[1].q_hat == 1.0);
  CHECK(table.object_quantiles[1].all_inclusive);
  bool mentioned = false;
  for (const auto& w : warnings)
    if (w.find("object class 1") != std::string::npos) mentioned = true;
  CHECK(mentioned);
}

TEST_CASE("predict_set thresholds per class") {
  QuantileTable table;
  table.object_quantiles = {{0.5, 10, false}, {0.85, 10, false},
                            {0.95, 10, false}};
  table.predicate_quantiles = {{1.0, 0, true}};
  auto set = predict_set(ScoreVector(Task::Object, {0.7, 0.2, 0.1}), table);
  CHECK(set.members == std::vector<int>{0, 1, 2});
  CHECK(!set.fallback_used);
}

TEST_CASE("predict_set falls back to the argmax singleton") {
  QuantileTable table;
  table.object_quantiles = {{0.1, 10, false}, {0.1, 10, false},
                            {0.1, 10, false}};
  auto set = predict_set(ScoreVector(Task::Object, {0.6, 0.3, 0.1}), table);
  CHECK(set.members == std::vector<int>{0});
  CHECK(set.fallback_used);
}

TEST_CASE("all-inclusive quantiles give the full label space") {
  QuantileTable table;
  table.object_quantiles.assign(4, {1.0, 0, true});
  auto set = predict_set(ScoreVector(Task::Object, {0.1, 0.2, 0.3, 0.4}),
                         table);
  CHECK(set.members == std::vector<int>{0, 1, 2, 3});
}

TEST_CASE("factored triplet sets compose component sets") {
  const int k_o = 16, k_r = 16;
  QuantileTable table;
  // 5 object classes and all 16 predicate classes admitted
  table.object_quantiles.assign((size_t)k_o, {0.0, 10, false});
  for (int y = 0; y < 5; ++y) table.object_quantiles[(size_t)y] = {1.0, 10,
                                                                   false};
  table.predicate_quantiles.assign((size_t)k_r, {1.0, 10, false});

  std::vector<double> uniform_o((size_t)k_o, 1.0 / k_o);
  std::vector<double> uniform_r((size_t)k_r, 1.0 / k_r);
  DetectedObject subj{0, BoundingBox(0, 0, 1, 1),
                      ScoreVector(Task::Object, uniform_o)};
  DetectedObject obj{1, BoundingBox(2, 0, 3, 1),
                     ScoreVector(Task::Object, uniform_o)};
  DetectedTriplet trip{0, 1, ScoreVector(Task::Predicate, uniform_r),
                       BoundingBox(0, 0, 3, 1), 0.5};

  auto t = predict_triplet_set(subj, obj, trip, table);
  CHECK(t.subject.size() == 5);
  CHECK(t.predicate.size() == 16);
  CHECK(t.object.size() == 5);
  CHECK(t.size() == 400);

  // all-singleton case
  QuantileTable tight;
  tight.object_quantiles.assign((size_t)k_o, {0.0, 10, false});
  tight.predicate_quantiles.assign((size_t)k_r, {0.0, 10, false});
  auto t1 = predict_triplet_set(subj, obj, trip, tight);
  CHECK(t1.size() == 1);
  CHECK(t1.subject.fallback_used);

  // subject fallback composes with normal components
  QuantileTable mixed = table;
  mixed.object_quantiles.assign((size_t)k_o, {0.0, 10, false});
  auto t2 = predict_triplet_set(subj, obj, trip, mixed);
  CHECK(t2.subject.size() == 1);
  CHECK(t2.subject.fallback_used);
  CHECK(t2.size() == 1 * 16 * 1);
}

TEST_CASE("config validation") {
  ConformalConfig bad_o{0.0, 0.1};
  CHECK_THROWS_AS(bad_o.validate(), std::invalid_argument);
  ConformalConfig bad_r{0.05, 1.0};
  CHECK_THROWS_AS(bad_r.validate(), std::invalid_argument);
  ConformalConfig ok{0.05, 0.1};
  CHECK_NOTHROW(ok.validate());
}
