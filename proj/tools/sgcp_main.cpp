#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "sgcp/conformal.hpp"
#include "sgcp/io.hpp"
#include "sgcp/matching.hpp"
#include "sgcp/metrics.hpp"
#include "sgcp/plausibility.hpp"
#include "sgcp/simulate.hpp"
#include "sgcp/synthgen.hpp"

namespace {

using namespace sgcp;

constexpr int kExitOk = 0;
constexpr int kExitValidation = 1;
constexpr int kExitOracle = 2;
constexpr int kExitInfeasibleSplit = 3;

// Values a config file can preset; flags still win.
struct Defaults {
  double alpha_o = 0.05;
  double alpha_r = 0.1;
  double tau = 0.1;
  int group_size = 5;
  std::uint64_t seed = 0;
  std::vector<int> ks = {50, 100};
  std::string oracle = "mock:uniform";
  std::string oracle_url;
  std::string oracle_model;
  std::string api_key_env = "SGCP_ORACLE_API_KEY";
};

Defaults load_defaults(int argc, char** argv) {
  Defaults d;
  for (int i = 1; i + 1 < argc; ++i) {
    if (std::string(argv[i]) != "--config") continue;
    std::ifstream in(argv[i + 1]);
    if (!in) throw std::runtime_error(std::string("cannot open config: ") +
                                      argv[i + 1]);
    nlohmann::json j;
    in >> j;
    if (j.contains("alpha_o")) d.alpha_o = j["alpha_o"].get<double>();
    if (j.contains("alpha_r")) d.alpha_r = j["alpha_r"].get<double>();
    if (j.contains("tau")) d.tau = j["tau"].get<double>();
    if (j.contains("group_size")) d.group_size = j["group_size"].get<int>();
    if (j.contains("seed")) d.seed = j["seed"].get<std::uint64_t>();
    if (j.contains("k_list")) d.ks = j["k_list"].get<std::vector<int>>();
    if (j.contains("oracle")) d.oracle = j["oracle"].get<std::string>();
    if (j.contains("oracle_url"))
      d.oracle_url = j["oracle_url"].get<std::string>();
    if (j.contains("oracle_model"))
      d.oracle_model = j["oracle_model"].get<std::string>();
    if (j.contains("api_key_env"))
      d.api_key_env = j["api_key_env"].get<std::string>();
  }
  return d;
}

LabelSpace placeholder_space(int k_o, int k_r) {
  LabelSpace space;
  char buf[32];
  for (int i = 0; i < k_o; ++i) {
    std::snprintf(buf, sizeof(buf), "object_%03d", i);
    space.object_classes.emplace_back(buf);
  }
  for (int i = 0; i < k_r; ++i) {
    std::snprintf(buf, sizeof(buf), "predicate_%03d", i);
    space.predicate_classes.emplace_back(buf);
  }
  return space;
}

// The annotation file selects which images take part (so a full score dump
// can be paired with one partition's annotations). Every annotated image
// must be present in the score dump.
std::map<std::string, const ImageAnnotation*> annotation_index(
    const io::AnnotationDump& annotations, const io::ScoreDump& scores) {
  std::map<std::string, const ImageAnnotation*> index;
  for (const auto& img : annotations.images) index[img.image_id] = &img;
  std::size_t found = 0;
  for (const auto& img : scores.images) found += index.count(img.image_id);
  if (found != index.size())
    throw std::runtime_error("annotations reference " +
                             std::to_string(index.size() - found) +
                             " image(s) missing from the score dump");
  return index;
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open: " + path);
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

std::unique_ptr<PlausibilityOracle> make_oracle(
    const std::string& kind, std::uint64_t seed, const std::string& url,
    const std::string& model, const std::string& api_key_env,
    const std::string& prompt_dir,
    const std::vector<std::string>& gt_descriptions) {
  if (kind == "mock:uniform")
    return std::make_unique<MockOracle>(MockPolicy::Uniform, seed);
  if (kind == "mock:gt-aware")
    return std::make_unique<MockOracle>(MockPolicy::GtAware, seed,
                                        gt_descriptions);
  if (kind == "mock:adversarial")
    return std::make_unique<MockOracle>(MockPolicy::Adversarial, seed,
                                        gt_descriptions);
  if (kind == "mock:no-valid")
    return std::make_unique<MockOracle>(MockPolicy::NoValidDominant, seed);
  if (kind == "mock:stochastic")
    return std::make_unique<MockOracle>(MockPolicy::Stochastic, seed);
  if (kind.rfind("replay:", 0) == 0)
    return std::make_unique<ReplayOracle>(kind.substr(7));
  if (kind == "remote") {
    RemoteOracleConfig config;
    config.base_url = url;
    config.model = model;
    config.api_key_env = api_key_env;
    config.system_prompt = read_text_file(prompt_dir + "/system.txt");
    config.example_user = read_text_file(prompt_dir + "/example_user.txt");
    config.example_assistant =
        read_text_file(prompt_dir + "/example_assistant.txt");
    if (config.base_url.empty())
      throw std::runtime_error("remote oracle requires --oracle-url");
    return std::make_unique<RemoteOracle>(std::move(config));
  }
  throw std::runtime_error("unknown oracle kind '" + kind + "'");
}

void print_report(const EvalReport& r, std::ostream& out) {
  auto line = [&out](const char* name, double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%-20s %10.4f", name, v);
    out << buf << "\n";
  };
  line("object_cov", r.object_cov);
  line("object_covgap", r.object_covgap);
  line("object_avgsize", r.object_avgsize);
  line("predicate_cov", r.predicate_cov);
  line("predicate_covgap", r.predicate_covgap);
  line("predicate_avgsize", r.predicate_avgsize);
  line("triplet_avgsize", r.triplet_avgsize);
  line("cov_t", r.cov_t);
  for (const auto& [k, v] : r.r_at) line(("R@" + std::to_string(k)).c_str(), v);
  for (const auto& [k, v] : r.mr_at)
    line(("mR@" + std::to_string(k)).c_str(), v);
  for (const auto& [k, v] : r.cr_at)
    line(("cR@" + std::to_string(k)).c_str(), v);
  for (const auto& [k, v] : r.cmr_at)
    line(("cmR@" + std::to_string(k)).c_str(), v);
  out << "matched=" << r.matched_count
      << " unmatched_pred=" << r.unmatched_pred_count
      << " unmatched_gt=" << r.unmatched_gt_count << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Conformal prediction sets for scene graph triplets"};
  app.require_subcommand(1);

  Defaults defaults;
  try {
    defaults = load_defaults(argc, argv);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  }
  std::string config_path;
  app.add_option("--config", config_path,
                 "JSON configuration file; flags override its values");

  // --- split ---
  auto* split = app.add_subcommand(
      "split", "Carve a class-covering calibration split from annotations");
  std::string split_annotations, split_cal_out, split_rest_out;
  double min_fraction = 0.1;
  int min_per_class = 2;
  split->add_option("--annotations", split_annotations)->required();
  split->add_option("--min-fraction", min_fraction)
      ->capture_default_str();
  split->add_option("--min-per-class", min_per_class)->capture_default_str();
  split->add_option("--calibration-out", split_cal_out)->required();
  split->add_option("--remainder-out", split_rest_out)->required();

  // --- calibrate ---
  auto* calib = app.add_subcommand(
      "calibrate", "Match detections to ground truth and fit per-class "
                   "conformal quantiles");
  std::string cal_scores, cal_annotations, cal_labels, cal_out;
  double alpha_o = defaults.alpha_o, alpha_r = defaults.alpha_r;
  calib->add_option("--scores", cal_scores)->required();
  calib->add_option("--annotations", cal_annotations)->required();
  calib->add_option("--labels", cal_labels)->required();
  calib->add_option("--alpha-o", alpha_o)->capture_default_str();
  calib->add_option("--alpha-r", alpha_r)->capture_default_str();
  calib->add_option("--output", cal_out)->required();

  // --- predict ---
  auto* predict = app.add_subcommand(
      "predict", "Build factored triplet prediction sets from a score dump");
  std::string pred_scores, pred_table, pred_labels, pred_out;
  predict->add_option("--scores", pred_scores)->required();
  predict->add_option("--table", pred_table)->required();
  predict->add_option("--labels", pred_labels,
                      "verify the table fingerprint against this label space");
  predict->add_option("--output", pred_out)->required();

  // --- filter ---
  auto* filter = app.add_subcommand(
      "filter", "Truncate prediction sets through the plausibility oracle");
  std::string flt_sets, flt_scores, flt_labels, flt_annotations, flt_out;
  std::string oracle_kind = defaults.oracle;
  std::string oracle_url = defaults.oracle_url;
  std::string oracle_model = defaults.oracle_model;
  std::string api_key_env = defaults.api_key_env;
  std::string prompt_dir = "prompts";
  double tau = defaults.tau;
  int group_size = defaults.group_size;
  int concurrency = 1;
  std::uint64_t flt_seed = defaults.seed;
  filter->add_option("--sets", flt_sets)->required();
  filter->add_option("--scores", flt_scores)->required();
  filter->add_option("--labels", flt_labels)->required();
  filter->add_option("--annotations", flt_annotations,
                     "ground truth, needed by the gt-aware/adversarial mocks");
  filter->add_option("--tau", tau)->capture_default_str();
  filter->add_option("--group-size", group_size)->capture_default_str();
  filter->add_option("--oracle", oracle_kind,
                     "mock:{uniform,gt-aware,adversarial,no-valid,stochastic}"
                     ", replay:<fixture.json>, or remote")
      ->capture_default_str();
  filter->add_option("--oracle-url", oracle_url);
  filter->add_option("--oracle-model", oracle_model);
  filter->add_option("--api-key-env", api_key_env)->capture_default_str();
  filter->add_option("--prompt-dir", prompt_dir)->capture_default_str();
  filter->add_option("--concurrency", concurrency)->capture_default_str();
  filter->add_option("--seed", flt_seed)->capture_default_str();
  filter->add_option("--output", flt_out)->required();

  // --- evaluate ---
  auto* evaluate = app.add_subcommand(
      "evaluate", "Compute CP and recall metrics over matched predictions");
  std::string ev_sets, ev_scores, ev_annotations, ev_out;
  std::vector<int> ks = defaults.ks;
  double ev_alpha_o = defaults.alpha_o, ev_alpha_r = defaults.alpha_r;
  evaluate->add_option("--sets", ev_sets)->required();
  evaluate->add_option("--scores", ev_scores)->required();
  evaluate->add_option("--annotations", ev_annotations)->required();
  evaluate->add_option("--k", ks, "recall cutoffs")->capture_default_str();
  evaluate->add_option("--alpha-o", ev_alpha_o)->capture_default_str();
  evaluate->add_option("--alpha-r", ev_alpha_r)->capture_default_str();
  evaluate->add_option("--output", ev_out, "also write the report as JSON");

  // --- simulate ---
  auto* simulate = app.add_subcommand(
      "simulate",
      "Synthetic end-to-end run: generate, split, calibrate, predict, "
      "evaluate");
  SimulateOptions sim;
  sim.conformal.alpha_o = defaults.alpha_o;
  sim.conformal.alpha_r = defaults.alpha_r;
  sim.ks = defaults.ks;
  sim.synthetic.seed = defaults.seed;
  std::string sim_out, sim_table_out;
  std::string sim_noise = "calibrated";
  std::string sim_export_scores, sim_export_annotations, sim_export_labels;
  simulate->add_option("--images", sim.synthetic.images)
      ->capture_default_str();
  simulate->add_option("--k-o", sim.synthetic.k_o)->capture_default_str();
  simulate->add_option("--k-r", sim.synthetic.k_r)->capture_default_str();
  simulate->add_option("--tail-exponent", sim.synthetic.tail_exponent)
      ->capture_default_str();
  simulate->add_option("--temperature", sim.synthetic.score_temperature)
      ->capture_default_str();
  simulate->add_option("--noise-mode", sim_noise,
                       "calibrated|overconfident|underconfident")
      ->capture_default_str();
  simulate->add_option("--min-objects", sim.synthetic.min_objects)
      ->capture_default_str();
  simulate->add_option("--max-objects", sim.synthetic.max_objects)
      ->capture_default_str();
  simulate->add_option("--seed", sim.synthetic.seed)->capture_default_str();
  simulate->add_option("--alpha-o", sim.conformal.alpha_o)
      ->capture_default_str();
  simulate->add_option("--alpha-r", sim.conformal.alpha_r)
      ->capture_default_str();
  simulate->add_option("--min-fraction", sim.min_fraction)
      ->capture_default_str();
  simulate->add_option("--min-per-class", sim.min_per_class)
      ->capture_default_str();
  simulate->add_option("--k", sim.ks, "recall cutoffs")->capture_default_str();
  simulate->add_option("--output", sim_out, "write the report as JSON");
  simulate->add_option("--table-out", sim_table_out,
                       "write the fitted quantile table");
  simulate->add_option("--export-scores", sim_export_scores,
                       "also write the synthetic score dump");
  simulate->add_option("--export-annotations", sim_export_annotations,
                       "also write the synthetic annotations");
  simulate->add_option("--export-labels", sim_export_labels,
                       "also write the synthetic label space");

  // let subcommands reach the top-level --config flag
  for (CLI::App* sc : {split, calib, predict, filter, evaluate, simulate})
    sc->fallthrough();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*split) {
      const auto dump = io::read_annotations(split_annotations);
      SplitResult result;
      try {
        result = split_calibration(dump.images, min_fraction, min_per_class,
                                   dump.k_o, dump.k_r);
      } catch (const std::runtime_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitInfeasibleSplit;
      }
      io::AnnotationDump cal{dump.k_o, dump.k_r, {}};
      io::AnnotationDump rest{dump.k_o, dump.k_r, {}};
      for (size_t i : result.calibration_indices)
        cal.images.push_back(dump.images[i]);
      for (size_t i : result.remainder_indices)
        rest.images.push_back(dump.images[i]);
      io::write_annotations(split_cal_out, cal);
      io::write_annotations(split_rest_out, rest);
      std::cout << "calibration images: " << cal.images.size()
                << ", remainder: " << rest.images.size() << "\n";
    } else if (*calib) {
      const auto scores = io::read_score_dump(cal_scores);
      const auto annotations = io::read_annotations(cal_annotations);
      const auto space = io::read_label_space(cal_labels);
      if (space.k(Task::Object) != scores.k_o ||
          space.k(Task::Predicate) != scores.k_r)
        throw std::runtime_error("label space sizes disagree with score dump");
      ConformalConfig config{alpha_o, alpha_r};
      CalibrationCollector collector(space, config);
      const auto index = annotation_index(annotations, scores);
      for (const auto& img : scores.images) {
        const auto it = index.find(img.image_id);
        if (it == index.end()) continue;
        const auto& ann = *it->second;
        for (const auto& m : greedy_match(img, ann)) {
          const auto& det = img.triplets[static_cast<size_t>(m.pair_index)];
          const auto& gt = ann.triplets[static_cast<size_t>(m.gt_index)];
          collector.add(Task::Object,
                        img.object_by_roi(det.subject_roi).scores,
                        gt.subject_label);
          collector.add(Task::Object, img.object_by_roi(det.object_roi).scores,
                        gt.object_label);
          collector.add(Task::Predicate, det.predicate_scores,
                        gt.predicate_label);
        }
      }
      std::vector<std::string> warnings;
      const auto table = collector.build(&warnings);
      io::write_quantile_table(cal_out, {table, scores.k_o, scores.k_r});
      auto summarize = [](const std::vector<ClassQuantile>& side,
                         const char* kind) {
        for (size_t y = 0; y < side.size(); ++y)
          std::cout << kind << " " << y << ": n=" << side[y].count
                    << " q_hat=" << side[y].q_hat
                    << (side[y].all_inclusive ? " (all-inclusive)" : "")
                    << "\n";
      };
      summarize(table.object_quantiles, "object");
      summarize(table.predicate_quantiles, "predicate");
      for (const auto& w : warnings) std::cerr << "warning: " << w << "\n";
    } else if (*predict) {
      const auto scores = io::read_score_dump(pred_scores);
      const auto table_file = io::read_quantile_table(pred_table);
      if (table_file.k_o != scores.k_o || table_file.k_r != scores.k_r)
        throw std::runtime_error(
            "quantile table K sizes disagree with score dump");
      if (!pred_labels.empty())
        io::check_fingerprint(table_file, io::read_label_space(pred_labels));
      io::PredictionSetDump out{scores.k_o, scores.k_r, {}};
      for (const auto& img : scores.images) {
        io::ImageSets image_sets;
        image_sets.image_id = img.image_id;
        for (const auto& det : img.triplets) {
          io::TripletSetRecord rec;
          rec.subject_roi = det.subject_roi;
          rec.object_roi = det.object_roi;
          rec.set = predict_triplet_set(img.object_by_roi(det.subject_roi),
                                        img.object_by_roi(det.object_roi), det,
                                        table_file.table);
          image_sets.sets.push_back(std::move(rec));
        }
        out.images.push_back(std::move(image_sets));
      }
      io::write_prediction_sets(pred_out, out);
    } else if (*filter) {
      const auto sets = io::read_prediction_sets(flt_sets);
      const auto scores = io::read_score_dump(flt_scores);
      const auto space = io::read_label_space(flt_labels);
      std::vector<std::string> gt_descriptions;
      if (!flt_annotations.empty()) {
        const auto annotations = io::read_annotations(flt_annotations);
        for (const auto& img : annotations.images)
          for (const auto& gt : img.triplets)
            gt_descriptions.push_back(describe(
                {gt.subject_label, gt.predicate_label, gt.object_label},
                space));
      }
      auto oracle =
          make_oracle(oracle_kind, flt_seed, oracle_url, oracle_model,
                      api_key_env, prompt_dir, gt_descriptions);
      PlausibilityConfig config;
      config.tau = tau;
      config.group_size = group_size;
      config.request_concurrency = concurrency;
      io::PredictionSetDump out{sets.k_o, sets.k_r, {}};
      for (const auto& img_sets : sets.images) {
        const ImageDetections* det_img = nullptr;
        for (const auto& img : scores.images)
          if (img.image_id == img_sets.image_id) det_img = &img;
        if (!det_img)
          throw std::runtime_error("no score-dump image '" +
                                   img_sets.image_id + "'");
        io::ImageSets filtered;
        filtered.image_id = img_sets.image_id;
        for (const auto& rec : img_sets.sets) {
          const DetectedTriplet* det = nullptr;
          for (const auto& t : det_img->triplets)
            if (t.subject_roi == rec.subject_roi &&
                t.object_roi == rec.object_roi)
              det = &t;
          if (!det)
            throw std::runtime_error("no detected triplet for set record in '" +
                                     img_sets.image_id + "'");
          const std::string image_ref =
              det_img->image_path.value_or(det_img->image_id);
          io::TripletSetRecord out_rec;
          out_rec.subject_roi = rec.subject_roi;
          out_rec.object_roi = rec.object_roi;
          out_rec.set = filter_set(rec.set, image_ref, det->union_box, config,
                                   *oracle, space);
          filtered.sets.push_back(std::move(out_rec));
        }
        out.images.push_back(std::move(filtered));
      }
      io::write_prediction_sets(flt_out, out);
    } else if (*evaluate) {
      const auto sets = io::read_prediction_sets(ev_sets);
      const auto scores = io::read_score_dump(ev_scores);
      const auto annotations = io::read_annotations(ev_annotations);
      const auto space = placeholder_space(scores.k_o, scores.k_r);
      EvalAccumulator acc(space, {ev_alpha_o, ev_alpha_r}, ks);
      const auto index = annotation_index(annotations, scores);
      for (const auto& img : scores.images) {
        const auto ann_it = index.find(img.image_id);
        if (ann_it == index.end()) continue;
        const io::ImageSets* img_sets = nullptr;
        for (const auto& s : sets.images)
          if (s.image_id == img.image_id) img_sets = &s;
        if (!img_sets)
          throw std::runtime_error("no prediction sets for image '" +
                                   img.image_id + "'");
        std::vector<TripletPredictionSet> aligned;
        for (const auto& det : img.triplets) {
          const io::TripletSetRecord* found = nullptr;
          for (const auto& rec : img_sets->sets)
            if (rec.subject_roi == det.subject_roi &&
                rec.object_roi == det.object_roi)
              found = &rec;
          if (!found)
            throw std::runtime_error("no set for triplet in image '" +
                                     img.image_id + "'");
          aligned.push_back(found->set);
        }
        acc.add_image(img, aligned, *ann_it->second);
      }
      const auto report = acc.finalize();
      print_report(report, std::cout);
      if (!ev_out.empty()) io::write_report(ev_out, report);
    } else if (*simulate) {
      if (sim_noise == "calibrated")
        sim.synthetic.noise_mode = NoiseMode::Calibrated;
      else if (sim_noise == "overconfident")
        sim.synthetic.noise_mode = NoiseMode::Overconfident;
      else if (sim_noise == "underconfident")
        sim.synthetic.noise_mode = NoiseMode::Underconfident;
      else
        throw std::runtime_error("unknown noise mode '" + sim_noise + "'");
      if (!sim_export_scores.empty() || !sim_export_annotations.empty() ||
          !sim_export_labels.empty()) {
        SyntheticGenerator gen(sim.synthetic);
        if (!sim_export_labels.empty())
          io::write_label_space(sim_export_labels, gen.label_space());
        io::ScoreDump score_dump{sim.synthetic.k_o, sim.synthetic.k_r, {}};
        io::AnnotationDump ann_dump{sim.synthetic.k_o, sim.synthetic.k_r, {}};
        for (int i = 0; i < sim.synthetic.images; ++i) {
          auto img = gen.image(i);
          score_dump.images.push_back(std::move(img.detections));
          ann_dump.images.push_back(std::move(img.annotation));
        }
        if (!sim_export_scores.empty())
          io::write_score_dump(sim_export_scores, score_dump);
        if (!sim_export_annotations.empty())
          io::write_annotations(sim_export_annotations, ann_dump);
      }
      const auto result = run_simulation(sim);
      print_report(result.report, std::cout);
      std::cout << "calibration_images=" << result.calibration_images
                << " test_images=" << result.test_images << "\n";
      for (const auto& w : result.warnings)
        std::cerr << "warning: " << w << "\n";
      if (!sim_out.empty()) io::write_report(sim_out, result.report);
      if (!sim_table_out.empty())
        io::write_quantile_table(
            sim_table_out,
            {result.table, sim.synthetic.k_o, sim.synthetic.k_r});
    }
  } catch (const OracleError& e) {
    std::cerr << "oracle error: " << e.what() << "\n";
    return kExitOracle;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  }
  return kExitOk;
}
