#include "sgcp/io.hpp"

#include <fstream>
#include <functional>
#include <sstream>

#include <json.hpp>

namespace sgcp::io {

using nlohmann::json;

namespace {

constexpr int kFormatVersion = 1;

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  return out;
}

json box_to_json(const BoundingBox& b) {
  return json::array({b.x1, b.y1, b.x2, b.y2});
}

BoundingBox box_from_json(const json& j) {
  if (!j.is_array() || j.size() != 4)
    throw std::runtime_error("box must be a 4-element array");
  return BoundingBox(j[0].get<double>(), j[1].get<double>(),
                     j[2].get<double>(), j[3].get<double>());
}

json set_to_json(const PredictionSet& s) {
  return json{{"members", s.members}, {"fallback", s.fallback_used}};
}

PredictionSet set_from_json(const json& j, Task task, int k) {
  PredictionSet s;
  s.task = task;
  s.members = j.at("members").get<std::vector<int>>();
  s.fallback_used = j.at("fallback").get<bool>();
  s.validate(k);
  return s;
}

// Shared JSONL scaffolding: header line with format/version/K sizes, then one
// record per line handed to `parse`. Lenient mode skips malformed records.
void read_jsonl(const std::string& path, const std::string& format,
                ReadMode mode, long* skipped, int& k_o, int& k_r,
                const std::function<void(const json&)>& parse) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open: " + path);
  std::string line;
  long line_no = 0;
  if (skipped) *skipped = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      const json j = json::parse(line);
      if (!have_header) {
        if (j.at("format").get<std::string>() != format)
          throw std::runtime_error("expected format '" + format + "', got '" +
                                   j.at("format").get<std::string>() + "'");
        if (j.at("version").get<int>() != kFormatVersion)
          throw std::runtime_error("unsupported version " +
                                   std::to_string(j.at("version").get<int>()));
        k_o = j.at("k_o").get<int>();
        k_r = j.at("k_r").get<int>();
        have_header = true;
        continue;
      }
      parse(j);
    } catch (const std::exception& e) {
      if (mode == ReadMode::Lenient && have_header) {
        if (skipped) ++*skipped;
        continue;
      }
      throw ParseError(path, line_no, e.what());
    }
  }
  if (!have_header) throw ParseError(path, line_no, "missing header line");
}

json header_json(const std::string& format, int k_o, int k_r) {
  // Ordered object keeps writes byte-stable.
  json h;
  h["format"] = format;
  h["version"] = kFormatVersion;
  h["k_o"] = k_o;
  h["k_r"] = k_r;
  return h;
}

}  // namespace

ScoreDump read_score_dump(const std::string& path, ReadMode mode,
                          long* skipped) {
  ScoreDump dump;
  read_jsonl(path, "sgcp.scores", mode, skipped, dump.k_o, dump.k_r,
             [&](const json& j) {
               ImageDetections img;
               img.image_id = j.at("image_id").get<std::string>();
               if (j.contains("image_path") && !j["image_path"].is_null())
                 img.image_path = j["image_path"].get<std::string>();
               for (const auto& jo : j.at("objects")) {
                 DetectedObject obj;
                 obj.roi_id = jo.at("roi").get<int>();
                 obj.box = box_from_json(jo.at("box"));
                 obj.scores = ScoreVector(
                     Task::Object, jo.at("probs").get<std::vector<double>>());
                 if (static_cast<int>(obj.scores.probs.size()) != dump.k_o)
                   throw std::runtime_error("object probs length != k_o");
                 img.objects.push_back(std::move(obj));
               }
               for (const auto& jt : j.at("triplets")) {
                 DetectedTriplet t;
                 t.subject_roi = jt.at("subject_roi").get<int>();
                 t.object_roi = jt.at("object_roi").get<int>();
                 t.predicate_scores = ScoreVector(
                     Task::Predicate,
                     jt.at("probs").get<std::vector<double>>());
                 if (static_cast<int>(t.predicate_scores.probs.size()) !=
                     dump.k_r)
                   throw std::runtime_error("predicate probs length != k_r");
                 t.union_box = box_from_json(jt.at("union_box"));
                 t.rank_score = jt.at("rank_score").get<double>();
                 if (t.subject_roi == t.object_roi)
                   throw std::runtime_error("triplet subject_roi == object_roi");
                 // roi references must resolve within the record
                 img.object_by_roi(t.subject_roi);
                 img.object_by_roi(t.object_roi);
                 img.triplets.push_back(std::move(t));
               }
               dump.images.push_back(std::move(img));
             });
  return dump;
}

void write_score_dump(const std::string& path, const ScoreDump& dump) {
  auto out = open_out(path);
  out << header_json("sgcp.scores", dump.k_o, dump.k_r).dump() << "\n";
  for (const auto& img : dump.images) {
    json j;
    j["image_id"] = img.image_id;
    if (img.image_path) j["image_path"] = *img.image_path;
    j["objects"] = json::array();
    for (const auto& obj : img.objects)
      j["objects"].push_back(json{{"roi", obj.roi_id},
                                  {"box", box_to_json(obj.box)},
                                  {"probs", obj.scores.probs}});
    j["triplets"] = json::array();
    for (const auto& t : img.triplets)
      j["triplets"].push_back(json{{"subject_roi", t.subject_roi},
                                   {"object_roi", t.object_roi},
                                   {"probs", t.predicate_scores.probs},
                                   {"union_box", box_to_json(t.union_box)},
                                   {"rank_score", t.rank_score}});
    out << j.dump() << "\n";
  }
}

AnnotationDump read_annotations(const std::string& path, ReadMode mode,
                                long* skipped) {
  AnnotationDump dump;
  read_jsonl(path, "sgcp.annotations", mode, skipped, dump.k_o, dump.k_r,
             [&](const json& j) {
               ImageAnnotation img;
               img.image_id = j.at("image_id").get<std::string>();
               for (const auto& jt : j.at("triplets")) {
                 GroundTruthTriplet gt;
                 gt.subject_box = box_from_json(jt.at("subject_box"));
                 gt.object_box = box_from_json(jt.at("object_box"));
                 gt.subject_label = jt.at("subject_label").get<int>();
                 gt.object_label = jt.at("object_label").get<int>();
                 gt.predicate_label = jt.at("predicate_label").get<int>();
                 if (gt.subject_label < 0 || gt.subject_label >= dump.k_o ||
                     gt.object_label < 0 || gt.object_label >= dump.k_o ||
                     gt.predicate_label < 0 || gt.predicate_label >= dump.k_r)
                   throw std::runtime_error("gt label out of bounds");
                 img.triplets.push_back(gt);
               }
               dump.images.push_back(std::move(img));
             });
  return dump;
}

void write_annotations(const std::string& path, const AnnotationDump& dump) {
  auto out = open_out(path);
  out << header_json("sgcp.annotations", dump.k_o, dump.k_r).dump() << "\n";
  for (const auto& img : dump.images) {
    json j;
    j["image_id"] = img.image_id;
    j["triplets"] = json::array();
    for (const auto& gt : img.triplets)
      j["triplets"].push_back(json{{"subject_box", box_to_json(gt.subject_box)},
                                   {"subject_label", gt.subject_label},
                                   {"object_box", box_to_json(gt.object_box)},
                                   {"object_label", gt.object_label},
                                   {"predicate_label", gt.predicate_label}});
    out << j.dump() << "\n";
  }
}

PredictionSetDump read_prediction_sets(const std::string& path, ReadMode mode,
                                       long* skipped) {
  PredictionSetDump dump;
  read_jsonl(
      path, "sgcp.sets", mode, skipped, dump.k_o, dump.k_r,
      [&](const json& j) {
        ImageSets img;
        img.image_id = j.at("image_id").get<std::string>();
        for (const auto& js : j.at("sets")) {
          TripletSetRecord rec;
          rec.subject_roi = js.at("subject_roi").get<int>();
          rec.object_roi = js.at("object_roi").get<int>();
          const auto form = js.at("form").get<std::string>();
          if (form == "factored") {
            rec.set = TripletPredictionSet::factored(
                set_from_json(js.at("subject"), Task::Object, dump.k_o),
                set_from_json(js.at("predicate"), Task::Predicate, dump.k_r),
                set_from_json(js.at("object"), Task::Object, dump.k_o));
          } else if (form == "explicit") {
            std::vector<std::array<int, 3>> entries;
            for (const auto& je : js.at("entries")) {
              if (!je.is_array() || je.size() != 3)
                throw std::runtime_error("explicit entry must be a triple");
              entries.push_back({je[0].get<int>(), je[1].get<int>(),
                                 je[2].get<int>()});
            }
            rec.set = TripletPredictionSet::explicit_set(
                std::move(entries), js.at("fallback").get<bool>());
          } else {
            throw std::runtime_error("unknown set form '" + form + "'");
          }
          img.sets.push_back(std::move(rec));
        }
        dump.images.push_back(std::move(img));
      });
  return dump;
}

void write_prediction_sets(const std::string& path,
                           const PredictionSetDump& dump) {
  auto out = open_out(path);
  out << header_json("sgcp.sets", dump.k_o, dump.k_r).dump() << "\n";
  for (const auto& img : dump.images) {
    json j;
    j["image_id"] = img.image_id;
    j["sets"] = json::array();
    for (const auto& rec : img.sets) {
      json js;
      js["subject_roi"] = rec.subject_roi;
      js["object_roi"] = rec.object_roi;
      if (rec.set.form == TripletPredictionSet::Form::Factored) {
        js["form"] = "factored";
        js["subject"] = set_to_json(rec.set.subject);
        js["predicate"] = set_to_json(rec.set.predicate);
        js["object"] = set_to_json(rec.set.object);
      } else {
        js["form"] = "explicit";
        js["entries"] = json::array();
        for (const auto& e : rec.set.entries)
          js["entries"].push_back(json::array({e[0], e[1], e[2]}));
        js["fallback"] = rec.set.fallback_used;
      }
      j["sets"].push_back(std::move(js));
    }
    out << j.dump() << "\n";
  }
}

QuantileTableFile read_quantile_table(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open: " + path);
  json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw ParseError(path, 1, e.what());
  }
  if (j.at("format").get<std::string>() != "sgcp.quantiles")
    throw std::runtime_error(path + ": not a quantile table file");
  if (j.at("version").get<int>() != kFormatVersion)
    throw std::runtime_error(path + ": unsupported version");
  QuantileTableFile file;
  file.k_o = j.at("k_o").get<int>();
  file.k_r = j.at("k_r").get<int>();
  file.table.label_fingerprint =
      std::stoull(j.at("fingerprint").get<std::string>(), nullptr, 16);
  file.table.config.alpha_o = j.at("alpha_o").get<double>();
  file.table.config.alpha_r = j.at("alpha_r").get<double>();
  file.table.config.validate();
  auto read_side = [](const json& arr) {
    std::vector<ClassQuantile> side;
    for (const auto& jq : arr) {
      ClassQuantile q;
      q.count = jq.at("count").get<int>();
      q.q_hat = jq.at("q_hat").get<double>();
      q.all_inclusive = jq.at("all_inclusive").get<bool>();
      if (!(q.q_hat >= 0 && q.q_hat <= 1))
        throw std::runtime_error("q_hat outside [0,1]");
      side.push_back(q);
    }
    return side;
  };
  file.table.object_quantiles = read_side(j.at("object_quantiles"));
  file.table.predicate_quantiles = read_side(j.at("predicate_quantiles"));
  if (static_cast<int>(file.table.object_quantiles.size()) != file.k_o ||
      static_cast<int>(file.table.predicate_quantiles.size()) != file.k_r)
    throw std::runtime_error(path + ": quantile list sizes disagree with K");
  return file;
}

void write_quantile_table(const std::string& path,
                          const QuantileTableFile& file) {
  char fp[32];
  std::snprintf(fp, sizeof(fp), "%016llx",
                static_cast<unsigned long long>(file.table.label_fingerprint));
  json j;
  j["format"] = "sgcp.quantiles";
  j["version"] = kFormatVersion;
  j["k_o"] = file.k_o;
  j["k_r"] = file.k_r;
  j["fingerprint"] = fp;
  j["alpha_o"] = file.table.config.alpha_o;
  j["alpha_r"] = file.table.config.alpha_r;
  auto side_json = [](const std::vector<ClassQuantile>& side) {
    json arr = json::array();
    for (const auto& q : side)
      arr.push_back(json{{"count", q.count},
                         {"q_hat", q.q_hat},
                         {"all_inclusive", q.all_inclusive}});
    return arr;
  };
  j["object_quantiles"] = side_json(file.table.object_quantiles);
  j["predicate_quantiles"] = side_json(file.table.predicate_quantiles);
  open_out(path) << j.dump(2) << "\n";
}

void check_fingerprint(const QuantileTableFile& file,
                       const LabelSpace& space) {
  if (file.table.label_fingerprint != space.fingerprint())
    throw std::runtime_error(
        "quantile table fingerprint mismatch: table was calibrated for a "
        "different label space");
  if (file.k_o != space.k(Task::Object) || file.k_r != space.k(Task::Predicate))
    throw std::runtime_error("quantile table K sizes disagree with label space");
}

LabelSpace read_label_space(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open: " + path);
  json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw ParseError(path, 1, e.what());
  }
  if (j.at("format").get<std::string>() != "sgcp.labels")
    throw std::runtime_error(path + ": not a label space file");
  if (j.at("version").get<int>() != kFormatVersion)
    throw std::runtime_error(path + ": unsupported version");
  LabelSpace space;
  space.object_classes = j.at("object_classes").get<std::vector<std::string>>();
  space.predicate_classes =
      j.at("predicate_classes").get<std::vector<std::string>>();
  space.validate();
  return space;
}

void write_label_space(const std::string& path, const LabelSpace& space) {
  json j;
  j["format"] = "sgcp.labels";
  j["version"] = kFormatVersion;
  j["object_classes"] = space.object_classes;
  j["predicate_classes"] = space.predicate_classes;
  open_out(path) << j.dump(2) << "\n";
}

namespace {

json report_to_json_obj(const EvalReport& r) {
  json j;
  j["format"] = "sgcp.report";
  j["version"] = kFormatVersion;
  j["object_cov"] = r.object_cov;
  j["predicate_cov"] = r.predicate_cov;
  j["object_covgap"] = r.object_covgap;
  j["predicate_covgap"] = r.predicate_covgap;
  j["object_avgsize"] = r.object_avgsize;
  j["predicate_avgsize"] = r.predicate_avgsize;
  j["triplet_avgsize"] = r.triplet_avgsize;
  j["cov_t"] = r.cov_t;
  j["cov_s"] = r.cov_s;
  j["cov_r"] = r.cov_r;
  j["cov_o"] = r.cov_o;
  auto recall_json = [](const std::map<int, double>& m) {
    json o = json::object();
    for (const auto& [k, v] : m) o[std::to_string(k)] = v;
    return o;
  };
  j["recall"] = json{{"R", recall_json(r.r_at)},
                     {"mR", recall_json(r.mr_at)},
                     {"cR", recall_json(r.cr_at)},
                     {"cmR", recall_json(r.cmr_at)}};
  j["matched_count"] = r.matched_count;
  j["unmatched_pred_count"] = r.unmatched_pred_count;
  j["unmatched_gt_count"] = r.unmatched_gt_count;
  j["fallback_count"] = r.fallback_count;
  j["sets_missing_argmax"] = r.sets_missing_argmax;
  auto class_json = [](const std::vector<ClassCoverage>& v) {
    json arr = json::array();
    for (const auto& c : v)
      arr.push_back(json{{"samples", c.samples}, {"covered", c.covered}});
    return arr;
  };
  j["object_class_coverage"] = class_json(r.object_class_coverage);
  j["predicate_class_coverage"] = class_json(r.predicate_class_coverage);
  return j;
}

}  // namespace

std::string report_to_json(const EvalReport& report) {
  return report_to_json_obj(report).dump(2) + "\n";
}

void write_report(const std::string& path, const EvalReport& report) {
  open_out(path) << report_to_json(report);
}

EvalReport read_report(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open: " + path);
  json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw ParseError(path, 1, e.what());
  }
  if (j.at("format").get<std::string>() != "sgcp.report")
    throw std::runtime_error(path + ": not a report file");
  EvalReport r;
  r.object_cov = j.at("object_cov").get<double>();
  r.predicate_cov = j.at("predicate_cov").get<double>();
  r.object_covgap = j.at("object_covgap").get<double>();
  r.predicate_covgap = j.at("predicate_covgap").get<double>();
  r.object_avgsize = j.at("object_avgsize").get<double>();
  r.predicate_avgsize = j.at("predicate_avgsize").get<double>();
  r.triplet_avgsize = j.at("triplet_avgsize").get<double>();
  r.cov_t = j.at("cov_t").get<double>();
  r.cov_s = j.at("cov_s").get<double>();
  r.cov_r = j.at("cov_r").get<double>();
  r.cov_o = j.at("cov_o").get<double>();
  auto recall_from = [&](const char* key, std::map<int, double>& m) {
    for (const auto& [k, v] : j.at("recall").at(key).items())
      m[std::stoi(k)] = v.get<double>();
  };
  recall_from("R", r.r_at);
  recall_from("mR", r.mr_at);
  recall_from("cR", r.cr_at);
  recall_from("cmR", r.cmr_at);
  r.matched_count = j.at("matched_count").get<long>();
  r.unmatched_pred_count = j.at("unmatched_pred_count").get<long>();
  r.unmatched_gt_count = j.at("unmatched_gt_count").get<long>();
  r.fallback_count = j.at("fallback_count").get<long>();
  r.sets_missing_argmax = j.at("sets_missing_argmax").get<long>();
  auto class_from = [](const json& arr) {
    std::vector<ClassCoverage> v;
    for (const auto& jc : arr)
      v.push_back({jc.at("samples").get<long>(), jc.at("covered").get<long>()});
    return v;
  };
  r.object_class_coverage = class_from(j.at("object_class_coverage"));
  r.predicate_class_coverage = class_from(j.at("predicate_class_coverage"));
  return r;
}

}  // namespace sgcp::io
