#include "posekit/grouping.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

namespace posekit {

namespace {

constexpr double kUnitTolerance = 1e-6;

std::vector<std::size_t> by_descending(std::span<const double> confidences) {
  std::vector<std::size_t> order(confidences.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return confidences[a] > confidences[b]; });
  return order;
}

double box_area_or_zero(const Pose& p) {
  try {
    return bbox_from_pose(p).area();
  } catch (const Error&) {
    return 0.0;
  }
}

}  // namespace

PoseFeature PoseFeature::normalized(std::vector<double> raw) {
  double n2 = 0.0;
  for (double v : raw) n2 += v * v;
  if (n2 > 0.0) {
    const double inv = 1.0 / std::sqrt(n2);
    for (double& v : raw) v *= inv;
  }
  return PoseFeature{std::move(raw)};
}

double PoseFeature::norm() const {
  double n2 = 0.0;
  for (double v : values) n2 += v * v;
  return std::sqrt(n2);
}

double d_sp(const Pose& a, const Pose& b, double sigma) {
  if (!(sigma > 0.0)) throw Error(ErrorCode::InvalidKernel, "d_sp sigma must be positive");
  if (a.size() != b.size()) throw Error(ErrorCode::ShapeError, "d_sp pose lengths differ");
  const double norm = 1.0 / (sigma * std::sqrt(2.0 * std::numbers::pi));
  double sum = 0.0;
  std::size_t shared = 0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    const Keypoint& p = a.keypoints[k];
    const Keypoint& q = b.keypoints[k];
    if (!p.labeled() || !q.labeled()) continue;
    const double dx = p.x - q.x;
    const double dy = p.y - q.y;
    sum += norm * std::exp(-0.5 * (dx * dx + dy * dy) / (sigma * sigma));
    ++shared;
  }
  if (shared == 0) throw Error(ErrorCode::NoOverlap, "no mutually labeled keypoints");
  return sum / static_cast<double>(shared);
}

double d_app(const PoseFeature& fa, const PoseFeature& fb) {
  if (fa.values.size() != fb.values.size()) throw Error(ErrorCode::ShapeError, "feature dimensions differ");
  if (std::abs(fa.norm() - 1.0) > kUnitTolerance || std::abs(fb.norm() - 1.0) > kUnitTolerance) {
    throw Error(ErrorCode::NotNormalized, "pose features must be unit-norm");
  }
  double dot = 0.0;
  for (std::size_t i = 0; i < fa.values.size(); ++i) dot += fa.values[i] * fb.values[i];
  return std::clamp(dot, 0.0, 1.0);
}

double d_pose(const Pose& a, const Pose& b, const PoseFeature& fa, const PoseFeature& fb, double sigma) {
  return d_app(fa, fb) * d_sp(a, b, sigma);
}

double pair_sigma(const Pose& a, const Pose& b, const GroupingConfig& cfg) {
  const double mean_area = 0.5 * (box_area_or_zero(a) + box_area_or_zero(b));
  return std::max(cfg.min_sigma, cfg.sigma_scale * std::sqrt(mean_area));
}

double normalized_d_pose(const Pose& a, const Pose& b, const PoseFeature& fa, const PoseFeature& fb, double sigma) {
  return d_pose(a, b, fa, fb, sigma) * sigma * std::sqrt(2.0 * std::numbers::pi);
}

std::vector<PoseGroup> group_poses(std::span<const Pose> poses, std::span<const PoseFeature> feats,
                                   std::span<const double> confidences, const GroupingConfig& cfg) {
  if (feats.size() != poses.size() || confidences.size() != poses.size()) {
    throw Error(ErrorCode::ShapeError, "features and confidences must align with candidates");
  }
  if (!(cfg.tau > 0.0)) throw Error(ErrorCode::InvalidConfig, "grouping tau must be positive");
  std::vector<PoseGroup> groups;
  for (std::size_t i : by_descending(confidences)) {
    bool placed = false;
    for (PoseGroup& g : groups) {
      const std::size_t r = g.representative;
      double sim = 0.0;
      try {
        sim = normalized_d_pose(poses[i], poses[r], feats[i], feats[r], pair_sigma(poses[i], poses[r], cfg));
      } catch (const Error& e) {
        if (e.code() != ErrorCode::NoOverlap) throw;
      }
      if (sim >= cfg.tau) {
        g.member_indices.push_back(i);
        placed = true;
        break;
      }
    }
    if (!placed) groups.push_back({{i}, i});
  }
  return groups;
}

std::vector<PoseGroup> nms_groups(std::span<const Pose> poses, std::span<const double> confidences,
                                  const OksConstants& consts, double oks_threshold) {
  if (confidences.size() != poses.size()) throw Error(ErrorCode::ShapeError, "confidences must align");
  std::vector<PoseGroup> groups;
  std::vector<double> kept_area;
  for (std::size_t i : by_descending(confidences)) {
    bool suppressed = false;
    for (std::size_t g = 0; g < groups.size(); ++g) {
      const Pose& kept = poses[groups[g].representative];
      double oks = 0.0;
      try {
        oks = compute_oks(poses[i], kept, kept_area[g], consts);
      } catch (const Error& e) {
        if (e.code() != ErrorCode::NoLabeledKeypoints) throw;
      }
      if (oks >= oks_threshold) {
        groups[g].member_indices.push_back(i);
        suppressed = true;
        break;
      }
    }
    if (!suppressed) {
      groups.push_back({{i}, i});
      kept_area.push_back(std::max(1.0, box_area_or_zero(poses[i])));
    }
  }
  return groups;
}

std::size_t select_best(const PoseGroup& group, std::span<const double> confidences) {
  if (group.member_indices.empty()) throw Error(ErrorCode::EmptyGroup, "cannot select from an empty group");
  std::size_t best = group.member_indices.front();
  for (std::size_t idx : group.member_indices) {
    if (idx >= confidences.size()) throw Error(ErrorCode::OutOfBounds, "group index beyond confidences");
    if (confidences[idx] > confidences[best] || (confidences[idx] == confidences[best] && idx < best)) best = idx;
  }
  return best;
}

}  // namespace posekit
