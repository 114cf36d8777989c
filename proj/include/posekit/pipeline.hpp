#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "posekit/decoder.hpp"
#include "posekit/eval.hpp"
#include "posekit/grouping.hpp"
#include "posekit/nets.hpp"
#include "posekit/synth.hpp"

namespace posekit {

enum class GroupingMode { Similarity, Nms };
enum class ConfidenceMode { Learned, CenterScore };

/// How training data for the three heads is harvested from synthetic scenes.
struct DatasetConfig {
  std::size_t scenes = 80;
  std::uint64_t seed_offset = 1'000'000;  // training scenes never overlap evaluation seeds
  NoiseConfig noise{0.02, 1.5, 1.0};      // applied to every other training scene
  double perturb_px = 4.0;                // mean refinement perturbation, pixels
  std::size_t perturbations_per_person = 6;
  std::size_t refinement_perturbations = 20;  // per person, for the refinement head
  double confidence_max_relative = 0.3;   // confidence perturbations up to this fraction of sqrt(area)
  std::size_t embedding_dim = 32;
};

struct RunConfig {
  std::uint64_t seed = 0;
  std::size_t scenes = 20;
  std::size_t jobs = 1;
  std::string out = "posekit_run";
  std::string models;  // defaults to <out>/models
  GroupingMode grouping = GroupingMode::Similarity;
  CenterMode centers = CenterMode::Dual;
  ConfidenceMode confidence = ConfidenceMode::Learned;
  bool refine = true;
  double drop_gt = 0.0;
  bool train = false;
  bool write_artifacts = true;

  SynthConfig synth;
  CodecConfig codec;
  DecoderConfig decoder;
  GroupingConfig grouping_params;
  DatasetConfig data;
  TrainConfig confidence_train{0.1, 60, 32, 11, 1.0, {64, 32}};
  TrainConfig similarity_train{0.05, 30, 32, 12, 1.0, {64}};
  TrainConfig refinement_train{0.02, 60, 32, 13, 1.0, {128}};

  std::string models_dir() const;
  void validate() const;
};

/// Loads a JSON config; unknown keys are rejected at every level.
RunConfig run_config_from_json(const nlohmann::json& j, RunConfig base = {});
nlohmann::json run_config_to_json(const RunConfig& cfg);

struct Models {
  std::optional<Mlp> confidence;
  std::optional<Mlp> similarity;
  std::optional<Mlp> refinement;
};

struct TrainingData {
  std::vector<ConfidenceSample> confidence;
  std::vector<SimilarityPair> similarity;
  std::vector<RefinementSample> refinement;
};

/// Harvests training samples from `count` scenes starting at seed `first_seed`.
TrainingData build_training_data(const RunConfig& cfg, std::uint64_t first_seed, std::size_t count);

/// Refinement samples with a fixed perturbation magnitude, for held-out checks.
std::vector<RefinementSample> build_refinement_eval(const RunConfig& cfg, std::uint64_t first_seed, std::size_t count,
                                                    double magnitude, std::vector<std::vector<double>>* perturbed_xy = nullptr);

struct TrainSummary {
  std::vector<double> confidence_loss;
  std::vector<double> similarity_loss;
  std::vector<double> refinement_loss;
  std::size_t confidence_samples = 0;
  std::size_t similarity_pairs = 0;
  std::size_t refinement_samples = 0;
};

Models train_models(const RunConfig& cfg, TrainSummary* summary = nullptr);
void save_models(const Models& m, const std::string& dir);
/// Loads what the config needs; ModelMissing when a required net is absent.
Models load_models(const RunConfig& cfg);

/// Scene `index` of a run (seed = cfg.seed + index).
Scene run_scene(const RunConfig& cfg, std::size_t index);
/// Encoded maps of a run scene, with the configured synthetic noise.
SceneMaps run_scene_maps(const RunConfig& cfg, const Scene& scene);

struct SceneResult {
  Scene scene;
  CandidateSet candidates;
  std::vector<double> confidences;
  std::vector<PoseGroup> groups;
  std::vector<Pose> unrefined;
  std::vector<Pose> finals;
};

/// Decode, group, select and refine one scene.
SceneResult process_scene(const RunConfig& cfg, const Models& models, std::size_t index);

struct PipelineResult {
  std::vector<SceneResult> scenes;
  EvalReport report;
  double mean_keypoint_error = 0.0;           // final poses vs best-OKS gt, labeled keypoints
  double mean_keypoint_error_unrefined = 0.0;
};

std::vector<ImageEval> to_images(const std::vector<SceneResult>& scenes, bool refined = true);

/// Full run: models (trained when cfg.train), every scene, evaluation, and
/// artifacts under cfg.out when cfg.write_artifacts.
PipelineResult run_pipeline(const RunConfig& cfg);
PipelineResult run_pipeline(const RunConfig& cfg, const Models& models);

enum class AblationAxis { Centers, Grouping, Confidence, Refinement, DropRate };
AblationAxis parse_axis(const std::string& name);

struct AblationRow {
  std::string axis;
  std::string variant;
  double ap = 0.0;
  double ap50 = 0.0;
  double ap75 = 0.0;
  double bbp = 0.0;
  double bbr = 0.0;
  PerScale bbr_per_scale{};
  double mean_keypoint_error = 0.0;
  std::size_t num_final = 0;
};

std::vector<AblationRow> run_ablation(const RunConfig& cfg, AblationAxis axis);
std::vector<AblationRow> run_ablation(const RunConfig& cfg, const Models& models, AblationAxis axis);
std::string ablation_csv(const std::vector<AblationRow>& rows);

}  // namespace posekit
