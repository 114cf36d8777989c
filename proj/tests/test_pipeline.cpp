#include <gtest/gtest.h>

#include <filesystem>

#include "posekit/io.hpp"
#include "posekit/pipeline.hpp"

using namespace posekit;
namespace fs = std::filesystem;

namespace {

ErrorCode code_of(auto&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  return ErrorCode::ParseError;  // sentinel: nothing thrown
}

// Small but real training run, shared by every pipeline test.
RunConfig small_config() {
  RunConfig cfg;
  cfg.seed = 500;
  cfg.scenes = 6;
  cfg.write_artifacts = false;
  cfg.data.scenes = 16;
  cfg.confidence_train.epochs = 15;
  cfg.similarity_train.epochs = 10;
  cfg.refinement_train.epochs = 15;
  return cfg;
}

class Pipeline : public ::testing::Test {
 protected:
  static void SetUpTestSuite() { models_ = new Models(train_models(small_config(), &summary_)); }
  static void TearDownTestSuite() {
    delete models_;
    models_ = nullptr;
  }
  static const Models& models() { return *models_; }

  static Models* models_;
  static TrainSummary summary_;
};

Models* Pipeline::models_ = nullptr;
TrainSummary Pipeline::summary_;

}  // namespace

TEST(RunConfigJson, RoundTripAndDefaults) {
  RunConfig cfg;
  cfg.seed = 9;
  cfg.grouping = GroupingMode::Nms;
  cfg.centers = CenterMode::Head;
  cfg.refine = false;
  cfg.synth.scale_mix = {0.2, 0.3, 0.5};
  const RunConfig back = run_config_from_json(run_config_to_json(cfg));
  EXPECT_EQ(run_config_to_json(back), run_config_to_json(cfg));
  EXPECT_EQ(back.grouping, GroupingMode::Nms);
  EXPECT_EQ(back.centers, CenterMode::Head);
  EXPECT_FALSE(back.refine);
  EXPECT_EQ(run_config_to_json(run_config_from_json(nlohmann::json::object())), run_config_to_json(RunConfig{}));
}

TEST(RunConfigJson, RejectsUnknownKeysAtEveryLevel) {
  EXPECT_EQ(code_of([] { run_config_from_json(nlohmann::json::parse(R"({"sedd": 1})")); }), ErrorCode::InvalidConfig);
  EXPECT_EQ(code_of([] { run_config_from_json(nlohmann::json::parse(R"({"synth": {"image": {"depth": 3}}})")); }),
            ErrorCode::InvalidConfig);
  EXPECT_EQ(code_of([] { run_config_from_json(nlohmann::json::parse(R"({"centers": "torso"})")); }),
            ErrorCode::InvalidConfig);
  EXPECT_EQ(code_of([] { run_config_from_json(nlohmann::json::parse(R"({"scenes": "many"})")); }),
            ErrorCode::InvalidConfig);
}

TEST(RunConfigJson, ValidateCatchesBadValues) {
  RunConfig cfg;
  cfg.drop_gt = 1.0;
  EXPECT_EQ(code_of([&] { cfg.validate(); }), ErrorCode::InvalidConfig);
  cfg = RunConfig{};
  cfg.scenes = 0;
  EXPECT_EQ(code_of([&] { cfg.validate(); }), ErrorCode::InvalidConfig);
}

TEST(RunScene, SeedPlusIndex) {
  RunConfig cfg;
  cfg.seed = 40;
  EXPECT_EQ(run_scene(cfg, 3).seed, 43u);
  EXPECT_EQ(run_scene(cfg, 3), run_scene(cfg, 3));
}

TEST(AblationAxis, ParsesNamesAndRejectsUnknown) {
  EXPECT_EQ(parse_axis("centers"), AblationAxis::Centers);
  EXPECT_EQ(parse_axis("drop_rate"), AblationAxis::DropRate);
  EXPECT_EQ(code_of([] { parse_axis("colour"); }), ErrorCode::UsageError);
}

TEST(LoadModels, MissingDirectoryIsModelMissing) {
  RunConfig cfg;
  cfg.models = (fs::temp_directory_path() / "posekit_no_models_here").string();
  fs::remove_all(cfg.models);
  EXPECT_EQ(code_of([&] { load_models(cfg); }), ErrorCode::ModelMissing);
  // Heuristic-only settings need no model at all.
  cfg.confidence = ConfidenceMode::CenterScore;
  cfg.grouping = GroupingMode::Nms;
  cfg.refine = false;
  EXPECT_NO_THROW(load_models(cfg));
}

TEST(RunPipeline, RequiredModelMissing) {
  RunConfig cfg = small_config();
  EXPECT_EQ(code_of([&] { run_pipeline(cfg, Models{}); }), ErrorCode::ModelMissing);
}

TEST_F(Pipeline, TrainingLossesDecrease) {
  ASSERT_TRUE(models().confidence && models().similarity && models().refinement);
  for (const auto* losses : {&summary_.confidence_loss, &summary_.similarity_loss, &summary_.refinement_loss}) {
    ASSERT_FALSE(losses->empty());
    EXPECT_LT(losses->back(), losses->front());
  }
  EXPECT_GT(summary_.confidence_samples, 0u);
  EXPECT_GT(summary_.similarity_pairs, 0u);
  EXPECT_GT(summary_.refinement_samples, 0u);
}

TEST_F(Pipeline, NoiselessScenesScorePerfectly) {
  const RunConfig cfg = small_config();
  const PipelineResult r = run_pipeline(cfg, models());
  EXPECT_DOUBLE_EQ(r.report.keypoints.ap, 1.0);
  EXPECT_DOUBLE_EQ(r.report.boxes.bbr, 1.0);
  for (const SceneResult& s : r.scenes) EXPECT_EQ(s.finals.size(), s.scene.gt_poses.size());
}

TEST_F(Pipeline, DeterministicAcrossJobCounts) {
  RunConfig cfg = small_config();
  cfg.scenes = 3;
  cfg.synth.noise = {0.05, 1.5, 1.0};
  const PipelineResult a = run_pipeline(cfg, models());
  cfg.jobs = 3;
  const PipelineResult b = run_pipeline(cfg, models());
  ASSERT_EQ(a.scenes.size(), b.scenes.size());
  for (std::size_t i = 0; i < a.scenes.size(); ++i) EXPECT_EQ(a.scenes[i].finals, b.scenes[i].finals);
  EXPECT_EQ(a.report.keypoints.ap, b.report.keypoints.ap);
}

TEST_F(Pipeline, GroupingModesAgreeOnCleanScenes) {
  RunConfig cfg = small_config();
  cfg.refine = false;
  const auto rows = run_ablation(cfg, models(), AblationAxis::Grouping);
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[0].variant, "nms");
  EXPECT_EQ(rows[1].variant, "similarity");
  EXPECT_EQ(rows[0].num_final, rows[1].num_final);
}

TEST_F(Pipeline, RefinementHelpsOnNoisyMaps) {
  RunConfig cfg = small_config();
  cfg.synth.noise = {0.05, 1.5, 1.0};
  const PipelineResult r = run_pipeline(cfg, models());
  EXPECT_LT(r.mean_keypoint_error, r.mean_keypoint_error_unrefined);
}

TEST_F(Pipeline, DroppedGroundTruthNeverHelps) {
  RunConfig cfg = small_config();
  cfg.drop_gt = 0.3;
  const PipelineResult r = run_pipeline(cfg, models());
  ASSERT_TRUE(r.report.ap_complete && r.report.ap_incomplete);
  EXPECT_GE(*r.report.ap_complete, *r.report.ap_incomplete);
  EXPECT_LT(*r.report.ap_incomplete, 1.0);
}

TEST_F(Pipeline, DropRateSweepIsNonIncreasing) {
  const auto rows = run_ablation(small_config(), models(), AblationAxis::DropRate);
  ASSERT_EQ(rows.size(), 6u);
  EXPECT_EQ(rows[0].variant, "0");
  for (std::size_t i = 1; i < rows.size(); ++i) EXPECT_LE(rows[i].ap, rows[i - 1].ap) << rows[i].variant;
  const std::string csv = ablation_csv(rows);
  EXPECT_EQ(csv.substr(0, csv.find('\n')),
            "axis,variant,ap,ap50,ap75,bbp,bbr,bbr_small,bbr_medium,bbr_large,mean_keypoint_error,num_final");
}

TEST_F(Pipeline, ArtifactsAndSavedModels) {
  RunConfig cfg = small_config();
  cfg.scenes = 2;
  cfg.write_artifacts = true;
  cfg.out = (fs::temp_directory_path() / "posekit_pipeline_artifacts").string();
  fs::remove_all(cfg.out);
  save_models(models(), cfg.models_dir());
  const Models loaded = load_models(cfg);
  EXPECT_EQ(*loaded.confidence, *models().confidence);
  EXPECT_EQ(*loaded.refinement, *models().refinement);
  run_pipeline(cfg, loaded);
  std::size_t files = 0;
  for (const auto& e : fs::recursive_directory_iterator(cfg.out)) files += e.is_regular_file();
  EXPECT_GT(files, 6u);
  fs::remove_all(cfg.out);
}
