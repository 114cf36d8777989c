// posekit command-line front end.
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "posekit/io.hpp"
#include "posekit/log.hpp"
#include "posekit/pipeline.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace posekit;

namespace {

// Flags shared by every subcommand; applied on top of --config.
struct CommonFlags {
  std::string config;
  std::uint64_t seed = 0;
  std::size_t scenes = 20;
  std::size_t jobs = 1;
  std::string out = "posekit_run";
  std::string models;
  std::string grouping = "similarity";
  std::string centers = "dual";
  std::string confidence = "learned";
  std::string refine = "on";
  double drop_gt = 0.0;
  bool train = false;

};

void add_common(CLI::App* app, CommonFlags& f) {
  app->add_option("--config", f.config, "JSON config file; flags override its values")->check(CLI::ExistingFile);
  app->add_option("--seed", f.seed, "base seed; scene i uses seed + i")->capture_default_str();
  app->add_option("--scenes", f.scenes, "number of scenes")->capture_default_str()->check(CLI::PositiveNumber);
  app->add_option("--jobs", f.jobs, "worker threads (scene-level)")->capture_default_str()->check(CLI::PositiveNumber);
  app->add_option("--out", f.out, "output directory")->capture_default_str();
  app->add_option("--models", f.models, "model directory (default <out>/models)");
  app->add_option("--grouping", f.grouping, "duplicate removal")
                     ->capture_default_str()
                     ->check(CLI::IsMember({"similarity", "nms"}));
  app->add_option("--centers", f.centers, "center channels used for candidates")
                    ->capture_default_str()
                    ->check(CLI::IsMember({"dual", "head", "body"}));
  app->add_option("--confidence", f.confidence, "pose score")
                       ->capture_default_str()
                       ->check(CLI::IsMember({"learned", "center-score"}));
  app->add_option("--refine", f.refine, "residual refinement")
                   ->capture_default_str()
                   ->check(CLI::IsMember({"on", "off"}));
  app->add_option("--drop-gt", f.drop_gt, "fraction of ground truths removed for the missing-annotation AP")
                 ->capture_default_str()
                 ->check(CLI::Range(0.0, 0.999));
  app->add_flag("--train", f.train, "train the heads before running and save them");
}

RunConfig resolve(const CommonFlags& f, const CLI::App& sub) {
  RunConfig cfg;
  if (!f.config.empty()) cfg = run_config_from_json(io::read_json(f.config), cfg);
  json over = json::object();
  if (sub.count("--seed")) over["seed"] = f.seed;
  if (sub.count("--scenes")) over["scenes"] = f.scenes;
  if (sub.count("--jobs")) over["jobs"] = f.jobs;
  if (sub.count("--out")) over["out"] = f.out;
  if (sub.count("--models")) over["models"] = f.models;
  if (sub.count("--grouping")) over["grouping"] = f.grouping;
  if (sub.count("--centers")) over["centers"] = f.centers;
  if (sub.count("--confidence")) over["confidence"] = f.confidence;
  if (sub.count("--refine")) over["refine"] = f.refine;
  if (sub.count("--drop-gt")) over["drop_gt"] = f.drop_gt;
  if (sub.count("--train")) over["train"] = true;
  return run_config_from_json(over, cfg);
}

std::string scene_name(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "scene_%04zu", i);
  return buf;
}

void write_manifest(const RunConfig& cfg, const std::string& command, const json& extra = json::object()) {
  json m = {{"tool", "posekit"}, {"command", command}, {"config", run_config_to_json(cfg)}};
  m.update(extra);
  io::write_json(fs::path(cfg.out) / "manifest.json", m);
}

json summary_json(const EvalReport& r) {
  json j = {{"ap", r.keypoints.ap}, {"ap50", r.keypoints.ap50}, {"ap75", r.keypoints.ap75},
            {"bbp", r.boxes.bbp},   {"bbr", r.boxes.bbr},          {"num_gt", r.keypoints.num_gt},
            {"num_detections", r.keypoints.num_detections}};
  if (r.ap_complete) j["ap_complete"] = *r.ap_complete;
  if (r.ap_incomplete) j["ap_incomplete"] = *r.ap_incomplete;
  return j;
}

// Ground truths of every scene under <dir>/scenes, in index order.
std::vector<Scene> read_scenes(const fs::path& dir) {
  std::vector<Scene> scenes;
  for (std::size_t i = 0;; ++i) {
    const fs::path p = dir / "scenes" / scene_name(i);
    if (!fs::exists(p / "poses.json")) break;
    scenes.push_back(io::read_scene(p));
  }
  if (scenes.empty()) throw Error(ErrorCode::EmptyDataset, "no scenes under " + (dir / "scenes").string());
  return scenes;
}

int cmd_synth(const RunConfig& cfg) {
  for (std::size_t i = 0; i < cfg.scenes; ++i) {
    io::write_scene(fs::path(cfg.out) / "scenes" / scene_name(i), run_scene(cfg, i));
  }
  write_manifest(cfg, "synth", {{"scenes", cfg.scenes}});
  std::cout << json{{"scenes", cfg.scenes}, {"out", cfg.out}}.dump() << '\n';
  return 0;
}

int cmd_encode(const RunConfig& cfg, const std::string& input) {
  std::size_t n = 0;
  if (!input.empty()) {
    const Scene s = io::read_scene(input);
    io::write_scene_maps(fs::path(cfg.out) / "maps", run_scene_maps(cfg, s));
    n = 1;
  } else {
    for (; n < cfg.scenes; ++n) {
      const fs::path dir = fs::path(cfg.out) / "scenes" / scene_name(n);
      const Scene s = run_scene(cfg, n);
      io::write_scene(dir, s);
      io::write_scene_maps(dir / "maps", run_scene_maps(cfg, s));
    }
  }
  write_manifest(cfg, "encode", {{"scenes", n}});
  std::cout << json{{"scenes", n}, {"out", cfg.out}}.dump() << '\n';
  return 0;
}

int cmd_decode(const RunConfig& cfg, const std::string& input) {
  std::size_t n = 0, total = 0;
  auto decode_into = [&](const SceneMaps& maps, const fs::path& dir) {
    const CandidateSet c = decode_scene(maps, cfg.decoder);
    io::write_json(dir / "candidates.json", io::candidates_to_json(c));
    total += c.size();
    ++n;
  };
  if (!input.empty()) {
    fs::create_directories(cfg.out);
    decode_into(io::read_scene_maps(input), cfg.out);
  } else {
    for (std::size_t i = 0; i < cfg.scenes; ++i) {
      const fs::path dir = fs::path(cfg.out) / "scenes" / scene_name(i);
      const Scene s = run_scene(cfg, i);
      io::write_scene(dir, s);
      decode_into(run_scene_maps(cfg, s), dir);
    }
  }
  write_manifest(cfg, "decode", {{"scenes", n}});
  std::cout << json{{"scenes", n}, {"candidates", total}, {"out", cfg.out}}.dump() << '\n';
  return 0;
}

int cmd_train(const RunConfig& cfg, const std::string& head) {
  const TrainingData data = build_training_data(cfg, cfg.seed + cfg.data.seed_offset, cfg.data.scenes);
  TrainResult r;
  std::size_t samples = 0;
  if (head == "confidence") {
    r = train_confidence(data.confidence, cfg.confidence_train);
    samples = data.confidence.size();
  } else if (head == "similarity") {
    r = train_similarity(data.similarity, cfg.similarity_train, cfg.data.embedding_dim);
    samples = data.similarity.size();
  } else {
    r = train_refinement(data.refinement, cfg.refinement_train);
    samples = data.refinement.size();
  }
  const fs::path dir = fs::path(cfg.models_dir()) / head;
  io::write_mlp(dir, r.net, head);
  json out = {{"head", head}, {"samples", samples}, {"epoch_loss", r.epoch_loss}, {"model", dir.string()}};
  io::write_json(dir / "training.json", out);
  out.erase("epoch_loss");
  out["initial_loss"] = r.epoch_loss.front();
  out["final_loss"] = r.epoch_loss.back();
  std::cout << out.dump() << '\n';
  return 0;
}

int cmd_pipeline(const RunConfig& cfg) {
  const PipelineResult r = run_pipeline(cfg);
  json s = summary_json(r.report);
  s["mean_keypoint_error"] = r.mean_keypoint_error;
  s["out"] = cfg.out;
  std::cout << s.dump() << '\n';
  return 0;
}

int cmd_eval(const RunConfig& cfg, const std::string& gt_dir, const std::string& pred) {
  const std::vector<Scene> scenes = read_scenes(gt_dir.empty() ? fs::path(cfg.out) : fs::path(gt_dir));
  std::vector<ImageEval> images(scenes.size());
  for (std::size_t i = 0; i < scenes.size(); ++i) images[i].ground_truths = scenes[i].ground_truths();

  if (pred.empty()) {
    // Re-score the final poses of a pipeline run.
    const fs::path root = gt_dir.empty() ? fs::path(cfg.out) : fs::path(gt_dir);
    for (std::size_t i = 0; i < scenes.size(); ++i) {
      images[i].detections = io::poses_from_json(io::read_json(root / "scenes" / scene_name(i) / "final.json"));
    }
  } else {
    const json j = io::read_json(pred);
    if (j.is_array()) {
      for (auto& [image_id, poses] : io::coco_results_from_json(j)) {
        if (image_id < 0 || static_cast<std::size_t>(image_id) >= images.size()) {
          throw Error(ErrorCode::ParseError, "image_id " + std::to_string(image_id) + " has no scene");
        }
        images[image_id].detections = std::move(poses);
      }
    } else if (j.contains("images")) {
      for (const json& im : j.at("images")) {
        const auto id = im.at("image_id").get<std::size_t>();
        if (id >= images.size()) throw Error(ErrorCode::ParseError, "image_id " + std::to_string(id) + " has no scene");
        images[id].detections = io::poses_from_json(im);
      }
    } else {
      if (images.size() != 1) throw Error(ErrorCode::ParseError, "single-image pose JSON needs exactly one scene");
      images[0].detections = io::poses_from_json(j);
    }
  }

  EvalReport report = evaluate(images);
  if (cfg.drop_gt > 0.0) {
    const MissingGtResult m = simulate_missing_gt(images, {cfg.drop_gt, {}}, cfg.seed);
    report.ap_complete = m.ap_complete;
    report.ap_incomplete = m.ap_incomplete;
  }
  fs::create_directories(cfg.out);
  io::write_json(fs::path(cfg.out) / "report.json", io::report_to_json(report));
  io::write_text(fs::path(cfg.out) / "report_pr.csv", io::report_pr_csv(report));
  std::cout << summary_json(report).dump() << '\n';
  return 0;
}

int cmd_ablate(const RunConfig& cfg, const std::string& axis_name) {
  const AblationAxis axis = parse_axis(axis_name);
  const auto rows = run_ablation(cfg, axis);
  fs::create_directories(cfg.out);
  const std::string csv = ablation_csv(rows);
  io::write_text(fs::path(cfg.out) / ("ablation_" + axis_name + ".csv"), csv);
  json j = json::array();
  for (const AblationRow& r : rows) {
    j.push_back({{"axis", r.axis},
                 {"variant", r.variant},
                 {"ap", r.ap},
                 {"ap50", r.ap50},
                 {"ap75", r.ap75},
                 {"bbp", r.bbp},
                 {"bbr", r.bbr},
                 {"mean_keypoint_error", r.mean_keypoint_error},
                 {"num_final", r.num_final}});
  }
  io::write_json(fs::path(cfg.out) / ("ablation_" + axis_name + ".json"), j);
  std::cout << csv;
  return 0;
}

int cmd_report(const RunConfig& cfg) {
  const fs::path path = fs::path(cfg.out) / "report.json";
  const json r = io::read_json(path);
  const json& kp = r.at("keypoints");
  const json& bx = r.at("boxes");
  std::cout << "run: " << cfg.out << '\n';
  std::printf("keypoint AP  %.4f  AP50 %.4f  AP75 %.4f\n", kp.at("ap").get<double>(), kp.at("ap50").get<double>(),
              kp.at("ap75").get<double>());
  std::printf("box BBP      %.4f  BBR  %.4f\n", bx.at("bbp").get<double>(), bx.at("bbr").get<double>());
  if (r.contains("ap_incomplete")) {
    std::printf("missing gt   complete %.4f  incomplete %.4f\n", r.at("ap_complete").get<double>(),
                r.at("ap_incomplete").get<double>());
  }
  if (r.contains("mean_keypoint_error")) {
    std::printf("kp error px  %.3f (unrefined %.3f)\n", r.at("mean_keypoint_error").get<double>(),
                r.value("mean_keypoint_error_unrefined", 0.0));
  }
  // Flat key,value CSV next to the JSON for plotting scripts.
  std::string csv = "metric,value\n";
  for (const char* k : {"ap", "ap50", "ap75"}) csv += std::string("kp_") + k + "," + kp.at(k).dump() + "\n";
  for (const char* k : {"bbp", "bbr"}) csv += std::string("box_") + k + "," + bx.at(k).dump() + "\n";
  io::write_text(fs::path(cfg.out) / "report_summary.csv", csv);
  return 0;
}

int exit_code(ErrorCode c) { return c == ErrorCode::UsageError || c == ErrorCode::InvalidConfig ? 2 : 1; }

void print_error(const std::string& code, const std::string& message) {
  std::cerr << json{{"error", {{"code", code}, {"message", message}}}}.dump() << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"posekit: dual-center bottom-up pose post-processing on synthetic scenes"};
  app.require_subcommand(1);

  CommonFlags f;
  std::string input, head = "confidence", axis = "centers", gt_dir, pred;

  auto* synth = app.add_subcommand("synth", "generate ground-truth scenes");
  auto* encode = app.add_subcommand("encode", "encode scenes into heatmap/offset/feature maps");
  auto* decode = app.add_subcommand("decode", "decode candidates from maps");
  auto* train = app.add_subcommand("train", "train one head");
  auto* pipeline = app.add_subcommand("pipeline", "decode, group, score, refine and evaluate");
  auto* eval = app.add_subcommand("eval", "evaluate detections against scene ground truth");
  auto* ablate = app.add_subcommand("ablate", "run one ablation axis");
  auto* report = app.add_subcommand("report", "summarize <out>/report.json");
  for (auto* sub : {synth, encode, decode, train, pipeline, eval, ablate, report}) add_common(sub, f);

  encode->add_option("--input", input, "scene directory to encode instead of generating");
  decode->add_option("--input", input, "maps directory to decode instead of generating");
  train->add_option("--head", head, "which head to train")
      ->capture_default_str()
      ->check(CLI::IsMember({"confidence", "similarity", "refinement"}));
  eval->add_option("--gt", gt_dir, "directory with scenes/scene_XXXX ground truth (default --out)");
  eval->add_option("--pred", pred, "detections: pose JSON or COCO keypoint results (default: final.json of the run)");
  ablate->add_option("--axis", axis, "centers|grouping|confidence|refinement|drop_rate")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    print_error("UsageError", e.what());
    return 2;
  }

  try {
    const CLI::App& sub = *app.get_subcommands().front();
    const RunConfig cfg = resolve(f, sub);
    if (synth->parsed()) return cmd_synth(cfg);
    if (encode->parsed()) return cmd_encode(cfg, input);
    if (decode->parsed()) return cmd_decode(cfg, input);
    if (train->parsed()) return cmd_train(cfg, head);
    if (pipeline->parsed()) return cmd_pipeline(cfg);
    if (eval->parsed()) return cmd_eval(cfg, gt_dir, pred);
    if (ablate->parsed()) return cmd_ablate(cfg, axis);
    if (report->parsed()) return cmd_report(cfg);
  } catch (const Error& e) {
    print_error(std::string(to_string(e.code())), e.what());
    return exit_code(e.code());
  } catch (const std::exception& e) {
    print_error("IoError", e.what());
    return 1;
  }
  return 2;
}
