#include <gtest/gtest.h>

#include <array>
#include <cmath>
#include <random>

#include "posekit/decoder.hpp"
#include "posekit/rng.hpp"
#include "posekit/synth.hpp"

using namespace posekit;

namespace {

SynthConfig seeded(std::uint64_t seed) {
  SynthConfig c;
  c.seed = seed;
  return c;
}

}  // namespace

TEST(GenerateScene, DeterministicPerSeed) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    EXPECT_EQ(generate_scene(seeded(seed)), generate_scene(seeded(seed)));
  }
  EXPECT_FALSE(generate_scene(seeded(1)) == generate_scene(seeded(2)));
}

TEST(GenerateScene, IndexedScenesUseSeedPlusIndex) {
  const SynthConfig base = seeded(100);
  EXPECT_EQ(generate_scene(base, 7), generate_scene(seeded(107)));
  EXPECT_EQ(generate_scene(base, 7).seed, 107u);
}

TEST(GenerateScene, CoreInvariantsHold) {
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    const SynthConfig cfg = seeded(seed);
    const Scene s = generate_scene(cfg);
    ASSERT_EQ(s.gt_poses.size(), s.areas.size());
    ASSERT_EQ(s.gt_poses.size(), s.classes.size());
    EXPECT_LE(s.gt_poses.size(), cfg.persons_max);
    for (std::size_t i = 0; i < s.gt_poses.size(); ++i) {
      const Pose& p = s.gt_poses[i];
      EXPECT_EQ(p.size(), kCocoKeypoints);
      EXPECT_GE(p.num_labeled(), 2u);
      for (const Keypoint& k : p.keypoints) {
        EXPECT_TRUE(k.v == 0 || k.v == 1 || k.v == 2);
        EXPECT_GE(k.x, 0.0);
        EXPECT_GE(k.y, 0.0);
        EXPECT_LT(k.x, s.image.width);
        EXPECT_LT(k.y, s.image.height);
      }
      EXPECT_EQ(scale_class(s.areas[i]), s.classes[i]);
      const auto [lo, hi] = class_area_range(s.classes[i], cfg);
      EXPECT_GT(s.areas[i], lo);
      EXPECT_LE(s.areas[i], hi);
    }
  }
}

TEST(GenerateScene, BodyCentersRespectSeparation) {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    SynthConfig cfg = seeded(seed);
    cfg.template_jitter = 0.0;
    cfg.visibility_dropout = 0.0;
    const Scene s = generate_scene(cfg);
    for (std::size_t i = 0; i < s.gt_poses.size(); ++i)
      for (std::size_t j = i + 1; j < s.gt_poses.size(); ++j) {
        const Point a = body_center(s.gt_poses[i]), b = body_center(s.gt_poses[j]);
        const double need = cfg.min_separation * 0.5 * (std::sqrt(s.areas[i]) + std::sqrt(s.areas[j]));
        EXPECT_GE(std::hypot(a.x - b.x, a.y - b.y), need - 1e-9);
      }
  }
}

TEST(GenerateScene, DegenerateMixGivesOnlySmall) {
  SynthConfig cfg;
  cfg.scale_mix = {1.0, 0.0, 0.0};
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    cfg.seed = seed;
    for (double a : generate_scene(cfg).areas) EXPECT_EQ(scale_class(a), ScaleClass::Small);
  }
}

TEST(GenerateScene, DefaultMixFrequencies) {
  std::array<std::size_t, 3> counts{};
  std::size_t total = 0;
  const SynthConfig cfg;
  for (std::size_t i = 0; total < 10000; ++i) {
    for (ScaleClass c : generate_scene(cfg, i).classes) {
      ++counts[static_cast<std::size_t>(c)];
      ++total;
    }
  }
  const std::array<double, 3> expect{51.0 / 101.0, 21.0 / 101.0, 29.0 / 101.0};
  for (std::size_t c = 0; c < 3; ++c) {
    EXPECT_NEAR(static_cast<double>(counts[c]) / total, expect[c], 0.02) << to_string(static_cast<ScaleClass>(c));
  }
}

TEST(GenerateScene, RejectsInvalidConfig) {
  SynthConfig cfg;
  cfg.scale_mix = {0.0, 0.0, 0.0};
  EXPECT_THROW(generate_scene(cfg), Error);
  cfg = SynthConfig{};
  cfg.visibility_dropout = 1.5;
  EXPECT_THROW(generate_scene(cfg), Error);
  cfg = SynthConfig{};
  cfg.persons_min = 5;
  cfg.persons_max = 2;
  EXPECT_THROW(generate_scene(cfg), Error);
}

TEST(PerturbPose, ZeroMagnitudeIsIdentity) {
  const Scene s = generate_scene(seeded(1));
  EXPECT_EQ(perturb_pose(s.gt_poses[0], 0.0, 5), s.gt_poses[0]);
}

TEST(PerturbPose, ReplaysTheSeededStream) {
  const Scene s = generate_scene(seeded(2));
  const Pose& p = s.gt_poses[0];
  const Pose q = perturb_pose(p, 4.0, 99);
  Rng rng(99);
  std::normal_distribution<double> axis(0.0, 4.0 / std::sqrt(2.0));
  for (std::size_t k = 0; k < p.size(); ++k) {
    if (!p.keypoints[k].labeled()) {
      EXPECT_EQ(q.keypoints[k], p.keypoints[k]);
      continue;
    }
    const double dx = axis(rng);
    const double dy = axis(rng);
    EXPECT_DOUBLE_EQ(q.keypoints[k].x, p.keypoints[k].x + dx);
    EXPECT_DOUBLE_EQ(q.keypoints[k].y, p.keypoints[k].y + dy);
  }
}

TEST(PerturbPose, RmsMagnitudeAndOksLimit) {
  const Scene s = generate_scene(seeded(3));
  const Pose& p = s.gt_poses[0];
  double sum = 0.0;
  std::size_t n = 0;
  for (std::uint64_t seed = 0; seed < 400; ++seed) {
    const Pose q = perturb_pose(p, 4.0, seed);
    for (std::size_t k = 0; k < p.size(); ++k) {
      if (!p.keypoints[k].labeled()) continue;
      sum += std::pow(q.keypoints[k].x - p.keypoints[k].x, 2) + std::pow(q.keypoints[k].y - p.keypoints[k].y, 2);
      ++n;
    }
  }
  EXPECT_NEAR(std::sqrt(sum / n), 4.0, 0.2);
  EXPECT_LT(compute_oks(perturb_pose(p, 1e6, 1), p, s.areas[0], OksConstants::coco()), 1e-6);
  EXPECT_THROW(perturb_pose(p, -1.0, 1), Error);
}

TEST(InjectNoise, ZeroNoiseIsIdentity) {
  const Scene s = generate_scene(seeded(4));
  const SceneMaps maps = encode_scene(s, CodecConfig{});
  EXPECT_EQ(inject_noise(maps, NoiseConfig{}, 7), maps);
}

TEST(InjectNoise, DeterministicAndClipped) {
  const Scene s = generate_scene(seeded(5));
  const SceneMaps maps = encode_scene(s, CodecConfig{});
  NoiseConfig noise{0.2, 1.5, 2.0};
  const SceneMaps a = inject_noise(maps, noise, 11);
  EXPECT_EQ(a, inject_noise(maps, noise, 11));
  EXPECT_FALSE(a == inject_noise(maps, noise, 12));
  for (const auto& res : a.resolutions) {
    for (const auto& g : res.keypoint_heatmaps)
      for (float v : g.values) ASSERT_TRUE(v >= 0.0f && v <= 1.0f);
    for (const auto& g : res.center_heatmaps)
      for (float v : g.values) ASSERT_TRUE(v >= 0.0f && v <= 1.0f);
  }
}

TEST(InjectNoise, SpuriousPeaksAddCandidates) {
  NoiseConfig noise;
  noise.spurious_peak_rate = 1.5;
  std::size_t clean = 0, noisy = 0;
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    const SceneMaps maps = encode_scene(generate_scene(seeded(seed)), CodecConfig{});
    clean += decode_scene(maps).size();
    noisy += decode_scene(inject_noise(maps, noise, seed)).size();
  }
  EXPECT_GT(noisy, clean);
}
