#include "sgcp/core.hpp"

#include <cmath>
#include <unordered_set>

namespace sgcp {

void LabelSpace::validate() const {
  if (object_classes.empty() || predicate_classes.empty())
    throw std::invalid_argument("LabelSpace: class lists must be non-empty");
  for (const auto* list : {&object_classes, &predicate_classes}) {
    std::unordered_set<std::string> seen;
    for (const auto& name : *list)
      if (!seen.insert(name).second)
        throw std::invalid_argument("LabelSpace: duplicate class name '" +
                                    name + "'");
  }
}

std::uint64_t LabelSpace::fingerprint() const {
  std::uint64_t h = 14695981039346656037ull;
  auto mix = [&h](const std::string& s) {
    for (unsigned char c : s) {
      h ^= c;
      h *= 1099511628211ull;
    }
    h ^= 0x1f;  // separator
    h *= 1099511628211ull;
  };
  for (const auto& n : object_classes) mix(n);
  h ^= 0x2f;
  h *= 1099511628211ull;
  for (const auto& n : predicate_classes) mix(n);
  return h;
}

BoundingBox union_box(const BoundingBox& a, const BoundingBox& b) {
  return BoundingBox(std::min(a.x1, b.x1), std::min(a.y1, b.y1),
                     std::max(a.x2, b.x2), std::max(a.y2, b.y2));
}

ScoreVector::ScoreVector(Task t, std::vector<double> p)
    : task(t), probs(std::move(p)) {
  if (probs.empty())
    throw std::invalid_argument("ScoreVector: empty probability vector");
  double sum = 0;
  for (double v : probs) {
    if (!(v >= 0.0) || !(v <= 1.0))
      throw std::invalid_argument("ScoreVector: probability outside [0,1]");
    sum += v;
  }
  if (std::abs(sum - 1.0) > 1e-4)
    throw std::invalid_argument("ScoreVector: probabilities sum to " +
                                std::to_string(sum) + ", expected 1");
}

int ScoreVector::argmax() const {
  return static_cast<int>(
      std::max_element(probs.begin(), probs.end()) - probs.begin());
}

void PredictionSet::validate(int k) const {
  if (members.empty())
    throw std::invalid_argument("PredictionSet: empty member list");
  for (size_t i = 0; i < members.size(); ++i) {
    if (members[i] < 0 || members[i] >= k)
      throw std::invalid_argument("PredictionSet: member out of bounds");
    if (i > 0 && members[i] <= members[i - 1])
      throw std::invalid_argument(
          "PredictionSet: members must be strictly increasing");
  }
}

TripletPredictionSet TripletPredictionSet::factored(PredictionSet s,
                                                    PredictionSet r,
                                                    PredictionSet o) {
  TripletPredictionSet t;
  t.form = Form::Factored;
  t.subject = std::move(s);
  t.predicate = std::move(r);
  t.object = std::move(o);
  return t;
}

TripletPredictionSet TripletPredictionSet::explicit_set(
    std::vector<std::array<int, 3>> e, bool fallback) {
  TripletPredictionSet t;
  t.form = Form::Explicit;
  t.entries = std::move(e);
  t.fallback_used = fallback;
  return t;
}

std::uint64_t TripletPredictionSet::size() const {
  if (form == Form::Explicit) return entries.size();
  return static_cast<std::uint64_t>(subject.size()) * predicate.size() *
         object.size();
}

bool TripletPredictionSet::contains(int s, int r, int o) const {
  if (form == Form::Factored)
    return subject.contains(s) && predicate.contains(r) && object.contains(o);
  std::array<int, 3> key{s, r, o};
  return std::find(entries.begin(), entries.end(), key) != entries.end();
}

TripletPredictionSet materialize(const TripletPredictionSet& t,
                                 std::uint64_t cap) {
  if (t.form == TripletPredictionSet::Form::Explicit) return t;
  if (t.size() > cap)
    throw std::runtime_error("materialize: product size " +
                             std::to_string(t.size()) + " exceeds cap " +
                             std::to_string(cap));
  std::vector<std::array<int, 3>> entries;
  entries.reserve(static_cast<size_t>(t.size()));
  for (int s : t.subject.members)
    for (int r : t.predicate.members)
      for (int o : t.object.members) entries.push_back({s, r, o});
  return TripletPredictionSet::explicit_set(std::move(entries),
                                            t.fallback_used);
}

const DetectedObject& ImageDetections::object_by_roi(int roi) const {
  for (const auto& obj : objects)
    if (obj.roi_id == roi) return obj;
  throw std::invalid_argument("ImageDetections: unknown roi " +
                              std::to_string(roi) + " in image " + image_id);
}

}  // namespace sgcp
