#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "sgcp/core.hpp"

namespace sgcp {

enum class NoiseMode { Calibrated, Overconfident, Underconfident };

struct SyntheticConfig {
  int k_o = 150;
  int k_r = 50;
  double tail_exponent = 1.0;      // Zipf-like class frequency decay
  double score_temperature = 1.0;  // applied in non-calibrated modes
  NoiseMode noise_mode = NoiseMode::Calibrated;
  int images = 100;
  int min_objects = 4;
  int max_objects = 8;
  std::uint64_t seed = 0;
  double min_confidence = 0.55;
  double max_confidence = 0.99;

  void validate() const;
};

struct SyntheticImage {
  ImageDetections detections;
  ImageAnnotation annotation;
};

// Long-tailed synthetic scene graphs with a known, honestly-calibrated score
// process: the true label of every sample is drawn from its emitted score
// vector, so per-class coverage of the conformal pipeline is testable
// without a trained model. Deterministic per (seed, image index).
class SyntheticGenerator {
 public:
  explicit SyntheticGenerator(SyntheticConfig config);

  const SyntheticConfig& config() const { return config_; }
  LabelSpace label_space() const;

  SyntheticImage image(int index) const;

 private:
  SyntheticConfig config_;
  std::vector<double> object_cdf_;
  std::vector<double> predicate_cdf_;
};

std::vector<SyntheticImage> generate(const SyntheticConfig& config);

struct SplitResult {
  std::vector<size_t> calibration_indices;  // ascending image indices
  std::vector<size_t> remainder_indices;
};

// Greedy in-order image selection until every object and predicate class has
// at least max(min_per_class, ceil(min_fraction * class total)) samples in
// the calibration partition. Throws (naming the classes) when some class has
// fewer than min_per_class samples overall.
SplitResult split_calibration(std::span<const ImageAnnotation> annotations,
                              double min_fraction, int min_per_class, int k_o,
                              int k_r);

}  // namespace sgcp
