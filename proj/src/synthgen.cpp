#include "sgcp/synthgen.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

namespace sgcp {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

std::vector<double> zipf_cdf(int k, double exponent) {
  std::vector<double> cdf(static_cast<size_t>(k));
  double sum = 0;
  for (int r = 0; r < k; ++r) {
    sum += std::pow(static_cast<double>(r + 1), -exponent);
    cdf[static_cast<size_t>(r)] = sum;
  }
  for (auto& v : cdf) v /= sum;
  cdf.back() = 1.0;
  return cdf;
}

int sample_cdf(const std::vector<double>& cdf, double u) {
  auto it = std::lower_bound(cdf.begin(), cdf.end(), u);
  return static_cast<int>(it - cdf.begin());
}

std::string image_id_for(int index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "img_%06d", index);
  return buf;
}

// One honestly-calibrated sample: target class, its confidence, the drawn
// true label, and the emitted (possibly tempered) probability vector.
struct Sample {
  int true_label;
  ScoreVector scores;
};

Sample draw_sample(Task task, const std::vector<double>& cdf, int k,
                   const SyntheticConfig& cfg, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const int target = sample_cdf(cdf, unit(rng));
  const double u = cfg.min_confidence +
                   (cfg.max_confidence - cfg.min_confidence) * unit(rng);
  // True label drawn from the calibrated vector regardless of noise mode.
  int label = target;
  if (unit(rng) >= u) {
    int j = static_cast<int>(
        std::uniform_int_distribution<int>(0, k - 2)(rng));
    label = j >= target ? j + 1 : j;
  }
  double pt = u;
  double pv = (1.0 - u) / static_cast<double>(k - 1);
  if (cfg.noise_mode != NoiseMode::Calibrated) {
    const double a = 1.0 / cfg.score_temperature;
    const double wt = std::pow(u, a);
    const double wv = std::pow(pv, a);
    const double z = wt + static_cast<double>(k - 1) * wv;
    pt = wt / z;
    pv = wv / z;
  }
  std::vector<double> probs(static_cast<size_t>(k), pv);
  probs[static_cast<size_t>(target)] = pt;
  return {label, ScoreVector(task, std::move(probs))};
}

}  // namespace

void SyntheticConfig::validate() const {
  if (k_o < 1 || k_r < 1 || images < 1)
    throw std::invalid_argument("SyntheticConfig: k_o, k_r, images must be >= 1");
  if (!(tail_exponent > 0))
    throw std::invalid_argument("SyntheticConfig: tail_exponent must be > 0");
  if (!(score_temperature > 0))
    throw std::invalid_argument("SyntheticConfig: temperature must be > 0");
  if (min_objects < 1 || max_objects < min_objects)
    throw std::invalid_argument("SyntheticConfig: bad objects_per_image range");
  if (!(min_confidence > 0.5) || !(max_confidence < 1.0) ||
      !(max_confidence > min_confidence))
    throw std::invalid_argument(
        "SyntheticConfig: confidence range must satisfy 0.5 < min < max < 1");
  if (k_o < 2 || k_r < 2)
    throw std::invalid_argument("SyntheticConfig: need at least 2 classes");
}

SyntheticGenerator::SyntheticGenerator(SyntheticConfig config)
    : config_(config) {
  config_.validate();
  object_cdf_ = zipf_cdf(config_.k_o, config_.tail_exponent);
  predicate_cdf_ = zipf_cdf(config_.k_r, config_.tail_exponent);
}

LabelSpace SyntheticGenerator::label_space() const {
  LabelSpace space;
  char buf[32];
  for (int i = 0; i < config_.k_o; ++i) {
    std::snprintf(buf, sizeof(buf), "object_%03d", i);
    space.object_classes.emplace_back(buf);
  }
  for (int i = 0; i < config_.k_r; ++i) {
    std::snprintf(buf, sizeof(buf), "predicate_%03d", i);
    space.predicate_classes.emplace_back(buf);
  }
  return space;
}

SyntheticImage SyntheticGenerator::image(int index) const {
  std::mt19937_64 rng(splitmix64(config_.seed ^ splitmix64(
                          static_cast<std::uint64_t>(index) + 1)));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const int m = std::uniform_int_distribution<int>(config_.min_objects,
                                                   config_.max_objects)(rng);

  SyntheticImage img;
  img.detections.image_id = image_id_for(index);
  img.annotation.image_id = img.detections.image_id;

  std::vector<int> true_labels(static_cast<size_t>(m));
  std::vector<BoundingBox> gt_boxes;
  gt_boxes.reserve(static_cast<size_t>(m));
  for (int i = 0; i < m; ++i) {
    // Jittered grid: gt boxes are disjoint; predicted boxes are shifted
    // copies whose IoU with their gt stays >= 0.73.
    const double cx = static_cast<double>(i % 4) * 120.0;
    const double cy = static_cast<double>(i / 4) * 120.0;
    BoundingBox gt_box(cx + 10, cy + 10, cx + 110, cy + 110);
    const double dx = (unit(rng) * 2.0 - 1.0) * 8.0;
    const double dy = (unit(rng) * 2.0 - 1.0) * 8.0;
    BoundingBox pred_box(gt_box.x1 + dx, gt_box.y1 + dy, gt_box.x2 + dx,
                         gt_box.y2 + dy);
    auto sample = draw_sample(Task::Object, object_cdf_, config_.k_o, config_,
                              rng);
    true_labels[static_cast<size_t>(i)] = sample.true_label;
    gt_boxes.push_back(gt_box);
    img.detections.objects.push_back({i, pred_box, std::move(sample.scores)});
  }

  for (int p = 0; p + 1 < m; p += 2) {
    const int si = p, oi = p + 1;
    auto sample = draw_sample(Task::Predicate, predicate_cdf_, config_.k_r,
                              config_, rng);
    GroundTruthTriplet gt;
    gt.subject_box = gt_boxes[static_cast<size_t>(si)];
    gt.object_box = gt_boxes[static_cast<size_t>(oi)];
    gt.subject_label = true_labels[static_cast<size_t>(si)];
    gt.object_label = true_labels[static_cast<size_t>(oi)];
    gt.predicate_label = sample.true_label;
    img.annotation.triplets.push_back(gt);

    DetectedTriplet det;
    det.subject_roi = si;
    det.object_roi = oi;
    det.union_box = union_box(img.detections.objects[static_cast<size_t>(si)].box,
                              img.detections.objects[static_cast<size_t>(oi)].box);
    det.rank_score =
        img.detections.objects[static_cast<size_t>(si)].scores.max_prob() *
        sample.scores.max_prob() *
        img.detections.objects[static_cast<size_t>(oi)].scores.max_prob();
    det.predicate_scores = std::move(sample.scores);
    img.detections.triplets.push_back(std::move(det));
  }
  return img;
}

std::vector<SyntheticImage> generate(const SyntheticConfig& config) {
  SyntheticGenerator gen(config);
  std::vector<SyntheticImage> images;
  images.reserve(static_cast<size_t>(config.images));
  for (int i = 0; i < config.images; ++i) images.push_back(gen.image(i));
  return images;
}

SplitResult split_calibration(std::span<const ImageAnnotation> annotations,
                              double min_fraction, int min_per_class, int k_o,
                              int k_r) {
  if (!(min_fraction > 0) || !(min_fraction <= 1))
    throw std::invalid_argument("split_calibration: min_fraction outside (0,1]");
  if (min_per_class < 1)
    throw std::invalid_argument("split_calibration: min_per_class must be >= 1");

  std::vector<long> obj_total(static_cast<size_t>(k_o), 0);
  std::vector<long> pred_total(static_cast<size_t>(k_r), 0);
  for (const auto& ann : annotations) {
    for (const auto& gt : ann.triplets) {
      ++obj_total[static_cast<size_t>(gt.subject_label)];
      ++obj_total[static_cast<size_t>(gt.object_label)];
      ++pred_total[static_cast<size_t>(gt.predicate_label)];
    }
  }

  std::string infeasible;
  auto floors = [&](const std::vector<long>& totals, const char* kind) {
    std::vector<long> f(totals.size());
    for (size_t y = 0; y < totals.size(); ++y) {
      if (totals[y] < min_per_class) {
        if (!infeasible.empty()) infeasible += ", ";
        infeasible += std::string(kind) + " class " + std::to_string(y) +
                      " (" + std::to_string(totals[y]) + " samples)";
      }
      f[y] = std::max<long>(
          min_per_class,
          static_cast<long>(std::ceil(min_fraction *
                                      static_cast<double>(totals[y]))));
    }
    return f;
  };
  auto obj_floor = floors(obj_total, "object");
  auto pred_floor = floors(pred_total, "predicate");
  if (!infeasible.empty())
    throw std::runtime_error(
        "split_calibration: infeasible, classes below min_per_class: " +
        infeasible);

  std::vector<long> obj_have(static_cast<size_t>(k_o), 0);
  std::vector<long> pred_have(static_cast<size_t>(k_r), 0);
  long unmet = 0;
  for (size_t y = 0; y < obj_floor.size(); ++y)
    if (obj_floor[y] > 0) ++unmet;
  for (size_t y = 0; y < pred_floor.size(); ++y)
    if (pred_floor[y] > 0) ++unmet;

  SplitResult result;
  for (size_t i = 0; i < annotations.size(); ++i) {
    if (unmet == 0) {
      result.remainder_indices.push_back(i);
      continue;
    }
    bool needed = false;
    for (const auto& gt : annotations[i].triplets) {
      if (obj_have[static_cast<size_t>(gt.subject_label)] <
              obj_floor[static_cast<size_t>(gt.subject_label)] ||
          obj_have[static_cast<size_t>(gt.object_label)] <
              obj_floor[static_cast<size_t>(gt.object_label)] ||
          pred_have[static_cast<size_t>(gt.predicate_label)] <
              pred_floor[static_cast<size_t>(gt.predicate_label)]) {
        needed = true;
        break;
      }
    }
    if (!needed) {
      result.remainder_indices.push_back(i);
      continue;
    }
    result.calibration_indices.push_back(i);
    for (const auto& gt : annotations[i].triplets) {
      auto bump = [&unmet](long& have, long floor) {
        ++have;
        if (have == floor) --unmet;
      };
      bump(obj_have[static_cast<size_t>(gt.subject_label)],
           obj_floor[static_cast<size_t>(gt.subject_label)]);
      bump(obj_have[static_cast<size_t>(gt.object_label)],
           obj_floor[static_cast<size_t>(gt.object_label)]);
      bump(pred_have[static_cast<size_t>(gt.predicate_label)],
           pred_floor[static_cast<size_t>(gt.predicate_label)]);
    }
  }
  if (unmet != 0)
    throw std::runtime_error(
        "split_calibration: ran out of images before meeting all floors");
  return result;
}

}  // namespace sgcp
