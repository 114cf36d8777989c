#include "posekit/synth.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "posekit/log.hpp"
#include "posekit/rng.hpp"

namespace posekit {

namespace {

// Extent of the skeleton template (fraction of height) and the resulting
// box-area factor once the default 10% per-side margin is applied.
constexpr double kTemplateHalfWidth = 0.35;
constexpr double kTemplateTop = -0.42;
constexpr double kTemplateBottom = 0.48;
constexpr double kTemplateBoxFactor =
    (2.0 * kTemplateHalfWidth) * (kTemplateBottom - kTemplateTop) * (1.0 + 2.0 * kDefaultBoxMargin) *
    (1.0 + 2.0 * kDefaultBoxMargin);

struct Placement {
  Point origin;
  double height = 0.0;
};

Point template_body_center() {
  const auto& t = skeleton_template();
  return {(t[coco::kLeftShoulder].x + t[coco::kRightShoulder].x + t[coco::kLeftHip].x + t[coco::kRightHip].x) / 4.0,
          (t[coco::kLeftShoulder].y + t[coco::kRightShoulder].y + t[coco::kLeftHip].y + t[coco::kRightHip].y) / 4.0};
}

Point body_center_of(const Placement& p) {
  const Point b = template_body_center();
  return {p.origin.x + p.height * b.x, p.origin.y + p.height * b.y};
}

std::optional<Placement> try_place(double height, const SynthConfig& cfg, Rng& rng) {
  const double pad = 3.0 * cfg.template_jitter + 0.5;
  const double x0 = pad + kTemplateHalfWidth * height;
  const double x1 = cfg.image.width - pad - kTemplateHalfWidth * height;
  const double y0 = pad - kTemplateTop * height;
  const double y1 = cfg.image.height - pad - kTemplateBottom * height;
  if (x1 < x0 || y1 < y0) return std::nullopt;
  std::uniform_real_distribution<double> ux(x0, x1);
  std::uniform_real_distribution<double> uy(y0, y1);
  return Placement{{ux(rng), uy(rng)}, height};
}

bool separated(const Placement& a, double extent_a, const Placement& b, double extent_b, double factor) {
  const Point ca = body_center_of(a);
  const Point cb = body_center_of(b);
  const double need = factor * 0.5 * (extent_a + extent_b);
  return std::hypot(ca.x - cb.x, ca.y - cb.y) >= need;
}

}  // namespace

void SynthConfig::validate() const {
  if (image.width <= 0 || image.height <= 0) throw Error(ErrorCode::InvalidConfig, "synth: image dims must be positive");
  if (persons_min > persons_max) throw Error(ErrorCode::InvalidConfig, "synth: persons_min > persons_max");
  double total = 0.0;
  for (double r : scale_mix) {
    if (r < 0.0) throw Error(ErrorCode::InvalidConfig, "synth: scale_mix ratios must be non-negative");
    total += r;
  }
  if (!(total > 0.0)) throw Error(ErrorCode::InvalidConfig, "synth: scale_mix must not be all zero");
  auto prob = [](double p) { return p >= 0.0 && p <= 1.0; };
  if (!prob(visibility_dropout) || !prob(occluded_fraction)) {
    throw Error(ErrorCode::InvalidConfig, "synth: probabilities must lie in [0, 1]");
  }
  if (template_jitter < 0.0 || min_separation < 0.0) throw Error(ErrorCode::InvalidConfig, "synth: negative jitter");
  if (!(min_extent > 0.0) || min_extent >= 64.0 || max_extent <= 128.0) {
    throw Error(ErrorCode::InvalidConfig, "synth: need 0 < min_extent < 64 and max_extent > 128");
  }
  if (noise.heatmap_sigma_noise < 0.0 || noise.offset_noise_px < 0.0 || noise.spurious_peak_rate < 0.0) {
    throw Error(ErrorCode::InvalidConfig, "synth: noise levels must be non-negative");
  }
}

const std::array<Point, kCocoKeypoints>& skeleton_template() {
  static const std::array<Point, kCocoKeypoints> t{{
      {0.0, -0.40},     // nose
      {0.025, -0.42},   // left eye
      {-0.025, -0.42},  // right eye
      {0.05, -0.40},    // left ear
      {-0.05, -0.40},   // right ear
      {0.12, -0.28},    // left shoulder
      {-0.12, -0.28},   // right shoulder
      {0.24, -0.22},    // left elbow
      {-0.24, -0.22},   // right elbow
      {0.35, -0.16},    // left wrist
      {-0.35, -0.16},   // right wrist
      {0.08, 0.04},     // left hip
      {-0.08, 0.04},    // right hip
      {0.10, 0.26},     // left knee
      {-0.10, 0.26},    // right knee
      {0.11, 0.48},     // left ankle
      {-0.11, 0.48},    // right ankle
  }};
  return t;
}

std::pair<double, double> class_area_range(ScaleClass c, const SynthConfig& cfg) {
  switch (c) {
    case ScaleClass::Small: return {cfg.min_extent * cfg.min_extent, 64.0 * 64.0};
    case ScaleClass::Medium: return {64.0 * 64.0, 128.0 * 128.0};
    case ScaleClass::Large: return {128.0 * 128.0, cfg.max_extent * cfg.max_extent};
  }
  return {1.0, 1.0};
}

std::vector<GroundTruth> Scene::ground_truths() const {
  std::vector<GroundTruth> out;
  out.reserve(gt_poses.size());
  for (std::size_t i = 0; i < gt_poses.size(); ++i) out.push_back({gt_poses[i], areas[i]});
  return out;
}

Scene generate_scene(const SynthConfig& cfg, std::size_t index) {
  SynthConfig c = cfg;
  c.seed = cfg.seed + index;
  return generate_scene(c);
}

Scene generate_scene(const SynthConfig& cfg) {
  cfg.validate();
  Rng rng(mix_seed(cfg.seed, 0x5ce));
  Scene scene;
  scene.image = cfg.image;
  scene.seed = cfg.seed;

  std::uniform_int_distribution<std::size_t> count_dist(cfg.persons_min, cfg.persons_max);
  const std::size_t n = count_dist(rng);
  std::discrete_distribution<int> class_dist(cfg.scale_mix.begin(), cfg.scale_mix.end());
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  std::vector<ScaleClass> classes(n);
  std::vector<double> areas(n);
  std::vector<double> heights(n);
  for (std::size_t i = 0; i < n; ++i) {
    classes[i] = static_cast<ScaleClass>(class_dist(rng));
    const auto [lo, hi] = class_area_range(classes[i], cfg);
    // Log-uniform on (lo, hi].
    areas[i] = hi * std::pow(lo / hi, unit(rng));
    heights[i] = std::sqrt(areas[i] / kTemplateBoxFactor);
  }

  // Lay persons out one by one; a failed person restarts the whole layout.
  std::vector<std::optional<Placement>> placed(n);
  for (std::size_t layout = 0; layout < cfg.max_layouts; ++layout) {
    std::fill(placed.begin(), placed.end(), std::nullopt);
    bool complete = true;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t attempt = 0; attempt < cfg.max_retries && !placed[i]; ++attempt) {
        auto p = try_place(heights[i], cfg, rng);
        if (!p) break;
        bool ok = true;
        for (std::size_t j = 0; j < i && ok; ++j) {
          if (placed[j]) ok = separated(*p, std::sqrt(areas[i]), *placed[j], std::sqrt(areas[j]), cfg.min_separation);
        }
        if (ok) placed[i] = p;
      }
      complete = complete && placed[i].has_value();
    }
    if (complete) break;
  }

  const auto& tmpl = skeleton_template();
  std::normal_distribution<double> jitter(0.0, cfg.template_jitter > 0.0 ? cfg.template_jitter : 1.0);
  for (std::size_t i = 0; i < n; ++i) {
    if (!placed[i]) {
      log::warn("synth: seed ", cfg.seed, ": could not place person ", i, " (", to_string(classes[i]),
                "); scene keeps fewer persons");
      continue;
    }
    Pose pose(kCocoKeypoints);
    pose.id = static_cast<std::int64_t>(scene.gt_poses.size());
    for (std::size_t k = 0; k < kCocoKeypoints; ++k) {
      double x = placed[i]->origin.x + heights[i] * tmpl[k].x;
      double y = placed[i]->origin.y + heights[i] * tmpl[k].y;
      if (cfg.template_jitter > 0.0) {
        x += jitter(rng);
        y += jitter(rng);
      }
      pose.keypoints[k].x = std::clamp(x, 0.0, std::nextafter(static_cast<double>(cfg.image.width), 0.0));
      pose.keypoints[k].y = std::clamp(y, 0.0, std::nextafter(static_cast<double>(cfg.image.height), 0.0));
    }
    for (int tries = 0;; ++tries) {
      for (Keypoint& kp : pose.keypoints) {
        if (unit(rng) < cfg.visibility_dropout) {
          kp.v = 0;
        } else {
          kp.v = unit(rng) < cfg.occluded_fraction ? 1 : 2;
        }
      }
      if (pose.num_labeled() >= 2) break;
      if (tries >= 10) {
        for (Keypoint& kp : pose.keypoints) kp.v = 2;
        break;
      }
    }
    scene.gt_poses.push_back(std::move(pose));
    scene.areas.push_back(areas[i]);
    scene.classes.push_back(classes[i]);
  }
  return scene;
}

Pose perturb_pose(const Pose& p, double magnitude, std::uint64_t seed) {
  if (magnitude < 0.0) throw Error(ErrorCode::InvalidConfig, "perturbation magnitude must be >= 0");
  Pose out = p;
  if (magnitude == 0.0) return out;
  Rng rng(seed);
  std::normal_distribution<double> axis(0.0, magnitude / std::sqrt(2.0));
  for (Keypoint& kp : out.keypoints) {
    if (!kp.labeled()) continue;
    kp.x += axis(rng);
    kp.y += axis(rng);
  }
  return out;
}

SceneMaps inject_noise(const SceneMaps& maps, const NoiseConfig& cfg, std::uint64_t seed) {
  SceneMaps out = maps;
  if (cfg.zero()) return out;
  Rng rng(mix_seed(seed, 0x401e));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const auto& tmpl = skeleton_template();

  for (ResolutionMaps& res : out.resolutions) {
    for (std::size_t c = 0; c < kNumCenters; ++c) {
      if (cfg.spurious_peak_rate <= 0.0) break;
      std::poisson_distribution<int> count(cfg.spurious_peak_rate);
      const int k = count(rng);
      for (int s = 0; s < k; ++s) {
        const Point at{unit(rng) * res.width * res.stride, unit(rng) * res.height * res.stride};
        const double amplitude = 0.15 + 0.45 * unit(rng);
        const double height = 20.0 + 160.0 * unit(rng);
        Grid2D& heat = res.center_heatmaps[c];
        const int cc = std::clamp(static_cast<int>(at.x / res.stride), 0, res.width - 1);
        const int cr = std::clamp(static_cast<int>(at.y / res.stride), 0, res.height - 1);
        for (int r = std::max(0, cr - 3); r <= std::min(res.height - 1, cr + 3); ++r) {
          for (int col = std::max(0, cc - 3); col <= std::min(res.width - 1, cc + 3); ++col) {
            const Point pos = heat.cell_center(col, r);
            const double d2 = ((pos.x - at.x) * (pos.x - at.x) + (pos.y - at.y) * (pos.y - at.y)) /
                              (res.stride * res.stride);
            const float g = static_cast<float>(amplitude * std::exp(-0.5 * d2));
            heat.at(col, r) = std::max(heat.at(col, r), g);
            // A plausible but wrong pose hangs off every spurious center.
            if (d2 > 4.0) continue;
            for (std::size_t kp = 0; kp < out.num_keypoints && kp < tmpl.size(); ++kp) {
              res.offset_fields[c][2 * kp].at(col, r) = static_cast<float>(at.x + height * tmpl[kp].x - pos.x);
              res.offset_fields[c][2 * kp + 1].at(col, r) = static_cast<float>(at.y + height * tmpl[kp].y - pos.y);
            }
          }
        }
      }
    }
    if (cfg.offset_noise_px > 0.0) {
      std::normal_distribution<double> noise(0.0, cfg.offset_noise_px);
      for (auto& field : res.offset_fields) {
        for (Grid2D& g : field) {
          for (float& v : g.values) v = static_cast<float>(v + noise(rng));
        }
      }
    }
    if (cfg.heatmap_sigma_noise > 0.0) {
      std::normal_distribution<double> noise(0.0, cfg.heatmap_sigma_noise);
      auto jitter = [&](Grid2D& g) {
        for (float& v : g.values) v = static_cast<float>(std::clamp(v + noise(rng), 0.0, 1.0));
      };
      for (Grid2D& g : res.keypoint_heatmaps) jitter(g);
      for (Grid2D& g : res.center_heatmaps) jitter(g);
    }
  }
  return out;
}

SceneMaps encode_scene(const Scene& scene, const CodecConfig& cfg) {
  return encode_scene(scene.gt_poses, scene.image, cfg, scene.areas);
}

}  // namespace posekit
