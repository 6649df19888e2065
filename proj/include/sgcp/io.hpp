#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "sgcp/conformal.hpp"
#include "sgcp/core.hpp"
#include "sgcp/metrics.hpp"

namespace sgcp::io {

// Diagnostic carrying the offending file and (1-based) line number.
struct ParseError : std::runtime_error {
  ParseError(const std::string& path, long line, const std::string& what)
      : std::runtime_error(path + ":" + std::to_string(line) + ": " + what),
        line_number(line) {}
  long line_number;
};

enum class ReadMode { Strict, Lenient };

struct ScoreDump {
  int k_o = 0;
  int k_r = 0;
  std::vector<ImageDetections> images;
};

struct AnnotationDump {
  int k_o = 0;
  int k_r = 0;
  std::vector<ImageAnnotation> images;
};

struct TripletSetRecord {
  int subject_roi = 0;
  int object_roi = 0;
  TripletPredictionSet set;
};

struct ImageSets {
  std::string image_id;
  std::vector<TripletSetRecord> sets;
};

struct PredictionSetDump {
  int k_o = 0;
  int k_r = 0;
  std::vector<ImageSets> images;
};

ScoreDump read_score_dump(const std::string& path,
                          ReadMode mode = ReadMode::Strict,
                          long* skipped = nullptr);
void write_score_dump(const std::string& path, const ScoreDump& dump);

AnnotationDump read_annotations(const std::string& path,
                                ReadMode mode = ReadMode::Strict,
                                long* skipped = nullptr);
void write_annotations(const std::string& path, const AnnotationDump& dump);

PredictionSetDump read_prediction_sets(const std::string& path,
                                       ReadMode mode = ReadMode::Strict,
                                       long* skipped = nullptr);
void write_prediction_sets(const std::string& path,
                           const PredictionSetDump& dump);

// Quantile tables carry the label-space fingerprint and K sizes so they
// cannot silently be applied to a different label space.
struct QuantileTableFile {
  QuantileTable table;
  int k_o = 0;
  int k_r = 0;
};

QuantileTableFile read_quantile_table(const std::string& path);
void write_quantile_table(const std::string& path,
                          const QuantileTableFile& file);
void check_fingerprint(const QuantileTableFile& file, const LabelSpace& space);

LabelSpace read_label_space(const std::string& path);
void write_label_space(const std::string& path, const LabelSpace& space);

EvalReport read_report(const std::string& path);
void write_report(const std::string& path, const EvalReport& report);
std::string report_to_json(const EvalReport& report);

}  // namespace sgcp::io
