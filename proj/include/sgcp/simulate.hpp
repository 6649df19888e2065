#pragma once

#include <string>
#include <vector>

#include "sgcp/conformal.hpp"
#include "sgcp/metrics.hpp"
#include "sgcp/synthgen.hpp"

namespace sgcp {

struct SimulateOptions {
  SyntheticConfig synthetic;
  ConformalConfig conformal;
  double min_fraction = 0.1;
  int min_per_class = 2;
  std::vector<int> ks = {50, 100};
};

struct SimulateResult {
  EvalReport report;
  QuantileTable table;
  std::vector<std::string> warnings;
  long calibration_images = 0;
  long test_images = 0;
};

// generate -> split -> calibrate -> predict -> evaluate, streaming images so
// large statistical runs never hold the dataset in memory. Deterministic for
// a fixed configuration and seed.
SimulateResult run_simulation(const SimulateOptions& options);

}  // namespace sgcp
