#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "posekit/core.hpp"

namespace posekit {

/// Annotated person: keypoints plus the object area used by OKS and the
/// keypoint scale split.
struct GroundTruth {
  Pose pose;
  double area = 0.0;
};

/// Detections and ground truths of one image.
struct ImageEval {
  std::vector<Pose> detections;
  std::vector<GroundTruth> ground_truths;
};

enum class MatchMetric { Oks, Iou };

struct DetectionMatch {
  std::size_t image = 0;
  std::size_t det_index = 0;  // index into the image's detection list
  double score = 0.0;
  std::optional<std::size_t> matched_gt;
  double value = 0.0;  // metric against the matched gt, or the best unmatched value
  bool is_tp = false;
};

struct MatchResult {
  std::vector<DetectionMatch> detections;  // descending score, ties by detection index
  std::vector<bool> gt_matched;
};

/// Greedy matching on a precomputed det x gt similarity matrix.
MatchResult match_greedy(std::span<const double> scores, const std::vector<std::vector<double>>& similarity,
                         std::size_t num_gt, double threshold);

/// Greedy matching of one image: detections in descending score each take the
/// unmatched ground truth with the highest metric value if it reaches threshold.
MatchResult match_detections(std::span<const Pose> dets, std::span<const GroundTruth> gts, double threshold,
                             MatchMetric metric, const OksConstants& consts = OksConstants::coco());

struct PrPoint {
  double recall = 0.0;
  double precision = 0.0;
};

struct ApResult {
  double ap = 0.0;
  std::vector<PrPoint> pr_points;
  bool warning = false;  // detections without any ground truth
};

/// 101-point interpolated AP over detections pooled from all images.
ApResult average_precision(std::span<const DetectionMatch> matches, std::size_t num_gt);

inline constexpr std::size_t kNumScales = 3;
using PerScale = std::array<std::optional<double>, kNumScales>;

struct KeypointReport {
  double ap = 0.0;
  double ap50 = 0.0;
  double ap75 = 0.0;
  std::vector<PrPoint> pr_points;  // OKS 0.50 curve
  PerScale per_scale{};
  std::array<std::size_t, kNumScales> gt_counts{};
  std::size_t num_gt = 0;
  std::size_t num_detections = 0;
  std::vector<std::string> warnings;
};

struct BoxReport {
  double bbp = 0.0;
  double bbr = 0.0;
  std::vector<PrPoint> pr_points;
  PerScale per_scale_bbp{};
  PerScale per_scale_bbr{};
  std::array<std::size_t, kNumScales> gt_counts{};
  std::size_t num_gt = 0;
  std::vector<std::string> warnings;
};

struct EvalReport {
  KeypointReport keypoints;
  BoxReport boxes;
  std::optional<double> ap_complete;
  std::optional<double> ap_incomplete;
};

/// OKS thresholds 0.50:0.05:0.95.
std::array<double, 10> oks_thresholds();

KeypointReport evaluate_keypoints(std::span<const ImageEval> images, const OksConstants& consts = OksConstants::coco());
BoxReport evaluate_boxes(std::span<const ImageEval> images);
EvalReport evaluate(std::span<const ImageEval> images, const OksConstants& consts = OksConstants::coco());

/// Which ground truths to remove: a fraction drawn with a seed, or explicit
/// (image, gt) pairs.
struct DropSpec {
  double fraction = 0.0;
  std::vector<std::pair<std::size_t, std::size_t>> indices;
};

struct MissingGtResult {
  double ap_complete = 0.0;
  double ap_incomplete = 0.0;
  std::vector<std::pair<std::size_t, std::size_t>> dropped;
};

/// Keypoint AP with the full annotation and with the dropped persons removed;
/// their correct detections then count as false positives.
MissingGtResult simulate_missing_gt(std::span<const ImageEval> images, const DropSpec& drop, std::uint64_t seed,
                                    const OksConstants& consts = OksConstants::coco());

}  // namespace posekit
