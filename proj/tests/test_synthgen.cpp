#include <doctest.h>

#include <cmath>
#include <vector>

#include "sgcp/matching.hpp"
#include "sgcp/synthgen.hpp"

using namespace sgcp;

TEST_CASE("config validation") {
  SyntheticConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  SyntheticConfig bad = cfg;
  bad.k_r = 1;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = cfg;
  bad.min_confidence = 0.4;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = cfg;
  bad.max_objects = bad.min_objects - 1;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = cfg;
  bad.tail_exponent = 0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("generation is deterministic per seed and index") {
  SyntheticConfig cfg;
  cfg.images = 10;
  cfg.k_o = 12;
  cfg.k_r = 6;
  cfg.seed = 123;
  SyntheticGenerator g1(cfg), g2(cfg);
  for (int i : {0, 3, 9}) {
    const auto a = g1.image(i);
    const auto b = g2.image(i);
    REQUIRE(a.detections.objects.size() == b.detections.objects.size());
    for (size_t j = 0; j < a.detections.objects.size(); ++j) {
      CHECK(a.detections.objects[j].box.x1 == b.detections.objects[j].box.x1);
      CHECK(a.detections.objects[j].scores.probs ==
            b.detections.objects[j].scores.probs);
    }
    REQUIRE(a.annotation.triplets.size() == b.annotation.triplets.size());
    for (size_t j = 0; j < a.annotation.triplets.size(); ++j)
      CHECK(a.annotation.triplets[j].predicate_label ==
            b.annotation.triplets[j].predicate_label);
  }
  // order of calls must not matter
  const auto again = g1.image(3);
  CHECK(again.detections.objects[0].scores.probs ==
        g2.image(3).detections.objects[0].scores.probs);

  SyntheticConfig other = cfg;
  other.seed = 124;
  CHECK(SyntheticGenerator(other).image(0).detections.objects[0].scores.probs
        != g1.image(0).detections.objects[0].scores.probs);
}

TEST_CASE("predicted boxes stay matchable to their ground truth") {
  SyntheticConfig cfg;
  cfg.images = 50;
  cfg.seed = 9;
  SyntheticGenerator gen(cfg);
  for (int i = 0; i < cfg.images; ++i) {
    const auto img = gen.image(i);
    const auto matches = greedy_match(img.detections, img.annotation);
    CHECK(matches.size() == img.annotation.triplets.size());
    for (const auto& m : matches) CHECK(m.mean_iou >= 0.5);
  }
}

TEST_CASE("class frequencies decay with rank") {
  SyntheticConfig cfg;
  cfg.images = 2000;
  cfg.k_o = 20;
  cfg.k_r = 10;
  cfg.tail_exponent = 1.0;
  cfg.seed = 11;
  SyntheticGenerator gen(cfg);
  std::vector<long> obj_count((size_t)cfg.k_o, 0);
  std::vector<long> pred_count((size_t)cfg.k_r, 0);
  for (int i = 0; i < cfg.images; ++i) {
    const auto img = gen.image(i);
    for (const auto& gt : img.annotation.triplets) {
      ++obj_count[(size_t)gt.subject_label];
      ++obj_count[(size_t)gt.object_label];
      ++pred_count[(size_t)gt.predicate_label];
    }
  }
  CHECK(obj_count[0] > 2 * obj_count[(size_t)(cfg.k_o - 1)]);
  CHECK(pred_count[0] > 2 * pred_count[(size_t)(cfg.k_r - 1)]);
  // head-vs-tail halves, a cruder but less noisy ordering check
  long head = 0, tail = 0;
  for (int y = 0; y < cfg.k_o / 2; ++y) head += obj_count[(size_t)y];
  for (int y = cfg.k_o / 2; y < cfg.k_o; ++y) tail += obj_count[(size_t)y];
  CHECK(head > tail);
}

TEST_CASE("calibrated scores are reliable, tempered scores are not") {
  SyntheticConfig cfg;
  cfg.images = 4000;
  cfg.k_o = 10;
  cfg.k_r = 5;
  cfg.seed = 21;

  struct Stats {
    std::vector<long> n, hit;      // binned by emitted top probability
    std::vector<double> conf;
    long total = 0, hits = 0;
    double conf_sum = 0;
  };
  auto stats = [](const SyntheticConfig& c) {
    SyntheticGenerator gen(c);
    const int bins = 9;
    Stats s{std::vector<long>((size_t)bins, 0),
            std::vector<long>((size_t)bins, 0),
            std::vector<double>((size_t)bins, 0)};
    for (int i = 0; i < c.images; ++i) {
      const auto img = gen.image(i);
      // subjects pair with annotation triplets in generation order
      for (size_t p = 0; p < img.annotation.triplets.size(); ++p) {
        const auto& gt = img.annotation.triplets[p];
        const auto& det = img.detections.triplets[p];
        const auto& subj = img.detections.object_by_roi(det.subject_roi);
        const double top = subj.scores.max_prob();
        const bool ok = subj.scores.argmax() == gt.subject_label;
        ++s.total;
        s.conf_sum += top;
        if (ok) ++s.hits;
        const int b =
            std::min(bins - 1, (int)((top - 0.5) / 0.5 * bins));
        if (b < 0) continue;
        ++s.n[(size_t)b];
        s.conf[(size_t)b] += top;
        if (ok) ++s.hit[(size_t)b];
      }
    }
    return s;
  };

  // Calibrated: per-bin accuracy tracks mean confidence
  const auto cal = stats(cfg);
  int checked = 0;
  for (size_t b = 0; b < cal.n.size(); ++b) {
    if (cal.n[b] < 400) continue;
    const double acc = (double)cal.hit[b] / (double)cal.n[b];
    const double mean_conf = cal.conf[b] / (double)cal.n[b];
    CHECK(std::abs(acc - mean_conf) <= 0.03);
    ++checked;
  }
  CHECK(checked >= 5);

  // Overconfident: mean confidence overstates accuracy overall
  SyntheticConfig over = cfg;
  over.noise_mode = NoiseMode::Overconfident;
  over.score_temperature = 0.5;
  const auto o = stats(over);
  CHECK(o.conf_sum / (double)o.total - (double)o.hits / (double)o.total >
        0.02);

  // Underconfident: the opposite direction
  SyntheticConfig under = cfg;
  under.noise_mode = NoiseMode::Underconfident;
  under.score_temperature = 2.0;
  const auto u = stats(under);
  CHECK((double)u.hits / (double)u.total - u.conf_sum / (double)u.total >
        0.02);
}

TEST_CASE("split_calibration meets per-class floors") {
  SyntheticConfig cfg;
  cfg.images = 300;
  cfg.k_o = 10;
  cfg.k_r = 5;
  cfg.seed = 31;
  std::vector<ImageAnnotation> anns;
  SyntheticGenerator gen(cfg);
  for (int i = 0; i < cfg.images; ++i) anns.push_back(gen.image(i).annotation);

  const double min_fraction = 0.3;
  const int min_per_class = 2;
  const auto split =
      split_calibration(anns, min_fraction, min_per_class, cfg.k_o, cfg.k_r);

  // disjoint, complete, ascending
  CHECK(split.calibration_indices.size() + split.remainder_indices.size() ==
        anns.size());
  std::vector<bool> seen(anns.size(), false);
  for (size_t i : split.calibration_indices) {
    CHECK(!seen[i]);
    seen[i] = true;
  }
  for (size_t i : split.remainder_indices) {
    CHECK(!seen[i]);
    seen[i] = true;
  }

  std::vector<long> obj_total((size_t)cfg.k_o, 0), obj_cal((size_t)cfg.k_o, 0);
  std::vector<long> pred_total((size_t)cfg.k_r, 0),
      pred_cal((size_t)cfg.k_r, 0);
  auto count = [&](const ImageAnnotation& ann, std::vector<long>& obj,
                   std::vector<long>& pred) {
    for (const auto& gt : ann.triplets) {
      ++obj[(size_t)gt.subject_label];
      ++obj[(size_t)gt.object_label];
      ++pred[(size_t)gt.predicate_label];
    }
  };
  for (const auto& ann : anns) count(ann, obj_total, pred_total);
  for (size_t i : split.calibration_indices)
    count(anns[i], obj_cal, pred_cal);
  for (int y = 0; y < cfg.k_o; ++y)
    CHECK(obj_cal[(size_t)y] >=
          std::max<long>(min_per_class,
                         (long)std::ceil(min_fraction * obj_total[(size_t)y])));
  for (int y = 0; y < cfg.k_r; ++y)
    CHECK(pred_cal[(size_t)y] >=
          std::max<long>(min_per_class,
                         (long)std::ceil(min_fraction *
                                         pred_total[(size_t)y])));
}

TEST_CASE("split_calibration names infeasible classes") {
  ImageAnnotation ann;
  ann.image_id = "only";
  ann.triplets.push_back(
      {BoundingBox(0, 0, 10, 10), BoundingBox(20, 0, 30, 10), 0, 1, 0});
  std::vector<ImageAnnotation> anns = {ann};
  // object class 2 has zero samples, classes 0/1 have one each
  try {
    split_calibration(anns, 0.1, 2, 3, 1);
    FAIL("expected infeasibility error");
  } catch (const std::runtime_error& e) {
    const std::string msg = e.what();
    CHECK(msg.find("object class 2") != std::string::npos);
    CHECK(msg.find("0 samples") != std::string::npos);
  }
}

TEST_CASE("min_fraction 1.0 pulls every populated image into calibration") {
  SyntheticConfig cfg;
  cfg.images = 40;
  cfg.k_o = 5;
  cfg.k_r = 3;
  cfg.seed = 41;
  std::vector<ImageAnnotation> anns;
  SyntheticGenerator gen(cfg);
  for (int i = 0; i < cfg.images; ++i) anns.push_back(gen.image(i).annotation);
  const auto split = split_calibration(anns, 1.0, 1, cfg.k_o, cfg.k_r);
  for (size_t i : split.remainder_indices)
    CHECK(anns[i].triplets.empty());
}

TEST_CASE("parameter validation") {
  std::vector<ImageAnnotation> anns;
  CHECK_THROWS_AS(split_calibration(anns, 0.0, 2, 2, 2),
                  std::invalid_argument);
  CHECK_THROWS_AS(split_calibration(anns, 1.5, 2, 2, 2),
                  std::invalid_argument);
  CHECK_THROWS_AS(split_calibration(anns, 0.5, 0, 2, 2),
                  std::invalid_argument);
}
