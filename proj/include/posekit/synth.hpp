#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <vector>

#include "posekit/codec.hpp"
#include "posekit/eval.hpp"

namespace posekit {

struct NoiseConfig {
  double heatmap_sigma_noise = 0.0;  // std of additive heatmap noise
  double offset_noise_px = 0.0;      // std of additive offset noise, pixels
  double spurious_peak_rate = 0.0;   // expected spurious peaks per center channel and resolution

  bool zero() const { return heatmap_sigma_noise == 0.0 && offset_noise_px == 0.0 && spurious_peak_rate == 0.0; }
};

struct SynthConfig {
  std::uint64_t seed = 0;
  ImageDims image;
  std::size_t persons_min = 1;
  std::size_t persons_max = 4;
  std::array<double, 3> scale_mix{51.0, 21.0, 29.0};  // small : medium : large
  double template_jitter = 1.0;       // pixels, per-axis std
  double visibility_dropout = 0.1;    // P(keypoint unlabeled)
  double occluded_fraction = 0.2;     // P(v = 1 | labeled)
  double min_separation = 0.5;        // body-center distance, fraction of the pair's mean extent
  double min_extent = 16.0;           // smallest sqrt(area) for Small persons
  double max_extent = 200.0;          // largest sqrt(area) for Large persons
  std::size_t max_retries = 200;
  std::size_t max_layouts = 20;
  NoiseConfig noise;

  void validate() const;
};

struct Scene {
  std::vector<Pose> gt_poses;
  ImageDims image;
  std::vector<double> areas;
  std::vector<ScaleClass> classes;
  std::uint64_t seed = 0;

  std::vector<GroundTruth> ground_truths() const;
  friend bool operator==(const Scene&, const Scene&) = default;
};

/// Canonical standing skeleton in units of person height, body center near
/// the origin, COCO keypoint order.
const std::array<Point, kCocoKeypoints>& skeleton_template();

/// Area interval (lo, hi] sampled for a scale class under `cfg`.
std::pair<double, double> class_area_range(ScaleClass c, const SynthConfig& cfg);

/// Scene with persons drawn from the scale mix; uses cfg.seed.
Scene generate_scene(const SynthConfig& cfg);
/// Scene `index` of a run: seed = cfg.seed + index.
Scene generate_scene(const SynthConfig& cfg, std::size_t index);

/// Isotropic Gaussian displacement with RMS length `magnitude` for every
/// labeled keypoint; draws dx then dy per keypoint.
Pose perturb_pose(const Pose& p, double magnitude, std::uint64_t seed);

/// Spurious center peaks, offset noise and heatmap noise; heatmaps are
/// clipped to [0, 1].
SceneMaps inject_noise(const SceneMaps& maps, const NoiseConfig& cfg, std::uint64_t seed);

/// Encodes a scene using its annotated areas for kernel sizes.
SceneMaps encode_scene(const Scene& scene, const CodecConfig& cfg);

}  // namespace posekit
