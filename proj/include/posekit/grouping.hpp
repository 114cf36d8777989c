#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "posekit/core.hpp"

namespace posekit {

/// Unit-norm appearance embedding of one candidate pose.
struct PoseFeature {
  std::vector<double> values;

  /// Scales `raw` to unit length (zero vectors stay zero and fail d_app).
  static PoseFeature normalized(std::vector<double> raw);
  double norm() const;
};

/// Gaussian spatial similarity of two poses: the mean over mutually labeled
/// keypoints of N(|a_k - b_k|; 0, sigma). Peaks at 1/(sigma*sqrt(2*pi)).
double d_sp(const Pose& a, const Pose& b, double sigma);

/// max(0, cos(fa, fb)); both inputs must be unit-norm within 1e-6.
double d_app(const PoseFeature& fa, const PoseFeature& fb);

/// d_app * d_sp.
double d_pose(const Pose& a, const Pose& b, const PoseFeature& fa, const PoseFeature& fb, double sigma);

struct GroupingConfig {
  double sigma_scale = 0.1;  // sigma = sigma_scale * sqrt(mean box area of the pair)
  double min_sigma = 1.0;    // pixels; floor for collapsed candidates
  double tau = 0.05;         // threshold on peak-normalized d_pose
};

/// Spatial sigma used when comparing a and b under `cfg`.
double pair_sigma(const Pose& a, const Pose& b, const GroupingConfig& cfg);

/// d_pose divided by its maximum 1/(sigma*sqrt(2*pi)), i.e. a value in [0,1].
double normalized_d_pose(const Pose& a, const Pose& b, const PoseFeature& fa, const PoseFeature& fb, double sigma);

struct PoseGroup {
  std::vector<std::size_t> member_indices;
  std::size_t representative = 0;
};

/// Greedy representative linkage: candidates are visited by descending
/// confidence and join the first group whose representative reaches tau
/// in normalized d_pose; otherwise they open a new group.
std::vector<PoseGroup> group_poses(std::span<const Pose> poses, std::span<const PoseFeature> feats,
                                   std::span<const double> confidences, const GroupingConfig& cfg = {});

/// OKS-NMS baseline expressed as groups: each kept pose absorbs the
/// candidates it suppresses (OKS >= oks_threshold against the kept pose).
std::vector<PoseGroup> nms_groups(std::span<const Pose> poses, std::span<const double> confidences,
                                  const OksConstants& consts, double oks_threshold = 0.5);

/// argmax confidence within the group, ties to the lower candidate index.
std::size_t select_best(const PoseGroup& group, std::span<const double> confidences);

}  // namespace posekit
