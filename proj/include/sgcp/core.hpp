#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace sgcp {

enum class Task { Object, Predicate };

inline const char* task_name(Task t) {
  return t == Task::Object ? "object" : "predicate";
}

// Fixed object/predicate vocabularies shared by the whole pipeline.
struct LabelSpace {
  std::vector<std::string> object_classes;
  std::vector<std::string> predicate_classes;

  int k(Task t) const {
    return static_cast<int>(t == Task::Object ? object_classes.size()
                                              : predicate_classes.size());
  }
  const std::vector<std::string>& names(Task t) const {
    return t == Task::Object ? object_classes : predicate_classes;
  }

  void validate() const;

  // FNV-1a over both name lists; used to guard quantile tables against
  // being applied to a different label space.
  std::uint64_t fingerprint() const;
};

struct BoundingBox {
  double x1 = 0, y1 = 0, x2 = 0, y2 = 0;

  BoundingBox() = default;
  BoundingBox(double x1_, double y1_, double x2_, double y2_)
      : x1(x1_), y1(y1_), x2(x2_), y2(y2_) {
    if (!(x2 > x1) || !(y2 > y1))
      throw std::invalid_argument("BoundingBox: requires x2 > x1 and y2 > y1");
  }

  double area() const { return (x2 - x1) * (y2 - y1); }
  bool contains(const BoundingBox& b) const {
    return x1 <= b.x1 && y1 <= b.y1 && x2 >= b.x2 && y2 >= b.y2;
  }
};

BoundingBox union_box(const BoundingBox& a, const BoundingBox& b);

// Softmax probability vector over one label space.
struct ScoreVector {
  Task task = Task::Object;
  std::vector<double> probs;

  ScoreVector() = default;
  ScoreVector(Task t, std::vector<double> p);

  int argmax() const;
  double max_prob() const { return probs[static_cast<size_t>(argmax())]; }
};

struct DetectedObject {
  int roi_id = 0;
  BoundingBox box;
  ScoreVector scores;  // Task::Object
};

struct DetectedTriplet {
  int subject_roi = 0;
  int object_roi = 0;
  ScoreVector predicate_scores;  // Task::Predicate
  BoundingBox union_box;
  double rank_score = 0;  // max_s * max_r * max_o, descending rank
};

struct GroundTruthTriplet {
  BoundingBox subject_box;
  BoundingBox object_box;
  int subject_label = 0;
  int object_label = 0;
  int predicate_label = 0;
};

struct PredictionSet {
  Task task = Task::Object;
  std::vector<int> members;  // strictly increasing, non-empty
  bool fallback_used = false;

  bool contains(int label) const {
    return std::binary_search(members.begin(), members.end(), label);
  }
  size_t size() const { return members.size(); }
  void validate(int k) const;
};

// Factored (C_s x C_r x C_o) or explicit list of (s,r,o) entries.
struct TripletPredictionSet {
  enum class Form { Factored, Explicit };

  Form form = Form::Factored;
  PredictionSet subject, predicate, object;   // Factored
  std::vector<std::array<int, 3>> entries;    // Explicit
  bool fallback_used = false;                 // set by the plausibility filter

  static TripletPredictionSet factored(PredictionSet s, PredictionSet r,
                                       PredictionSet o);
  static TripletPredictionSet explicit_set(std::vector<std::array<int, 3>> e,
                                           bool fallback = false);

  std::uint64_t size() const;
  bool contains(int s, int r, int o) const;
};

// Enumerates the cartesian product of a Factored set in lexicographic
// (s, r, o) order. Throws when the product exceeds `cap`.
TripletPredictionSet materialize(const TripletPredictionSet& t,
                                 std::uint64_t cap = 100000);

// Per-image containers shared by io, matching and evaluation.
struct ImageDetections {
  std::string image_id;
  std::optional<std::string> image_path;
  std::vector<DetectedObject> objects;
  std::vector<DetectedTriplet> triplets;

  const DetectedObject& object_by_roi(int roi) const;
};

struct ImageAnnotation {
  std::string image_id;
  std::vector<GroundTruthTriplet> triplets;
};

}  // namespace sgcp
