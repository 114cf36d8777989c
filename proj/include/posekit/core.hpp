#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "posekit/error.hpp"

namespace posekit {

/// Number of keypoints in the COCO person skeleton.
inline constexpr std::size_t kCocoKeypoints = 17;

/// COCO keypoint indices used by the anatomical-center definitions.
namespace coco {
inline constexpr std::size_t kNose = 0;
inline constexpr std::size_t kLeftEar = 3;
inline constexpr std::size_t kRightEar = 4;
inline constexpr std::size_t kLeftShoulder = 5;
inline constexpr std::size_t kRightShoulder = 6;
inline constexpr std::size_t kLeftHip = 11;
inline constexpr std::size_t kRightHip = 12;
}  // namespace coco

struct Point {
  double x = 0.0;
  double y = 0.0;

  friend bool operator==(const Point&, const Point&) = default;
};

/// Visibility follows COCO: 0 = unlabeled, 1 = labeled but occluded,
/// 2 = labeled and visible.
struct Keypoint {
  double x = 0.0;
  double y = 0.0;
  int v = 0;

  bool labeled() const { return v > 0; }
  Point point() const { return {x, y}; }

  friend bool operator==(const Keypoint&, const Keypoint&) = default;
};

struct Pose {
  std::vector<Keypoint> keypoints;
  double score = 1.0;
  std::optional<std::int64_t> id;

  Pose() = default;
  explicit Pose(std::size_t num_keypoints) : keypoints(num_keypoints) {}

  std::size_t size() const { return keypoints.size(); }
  std::size_t num_labeled() const;

  friend bool operator==(const Pose&, const Pose&) = default;
};

/// Axis-aligned box, top-left corner plus extent.
struct BoundingBox {
  double x = 0.0;
  double y = 0.0;
  double w = 0.0;
  double h = 0.0;

  double area() const { return w * h; }
  bool valid() const { return w > 0.0 && h > 0.0; }
};

enum class ScaleClass { Small = 0, Medium = 1, Large = 2 };
inline constexpr std::array<ScaleClass, 3> kAllScaleClasses{ScaleClass::Small, ScaleClass::Medium,
                                                            ScaleClass::Large};

std::string_view to_string(ScaleClass c);

/// Per-keypoint OKS falloff constants k_i. The COCO default stores
/// k_i = 2 * sigma_i for the 17 published per-keypoint sigmas, so that
/// OKS term i is exp(-d^2 / (2 * area * k_i^2)).
class OksConstants {
 public:
  explicit OksConstants(std::vector<double> k);

  static OksConstants coco();

  std::size_t size() const { return k_.size(); }
  double operator[](std::size_t i) const { return k_[i]; }
  std::span<const double> values() const { return k_; }

 private:
  std::vector<double> k_;
};

/// Object keypoint similarity between a prediction and a ground truth whose
/// object area is gt_area (pixels^2). Only gt keypoints with v > 0 count.
double compute_oks(const Pose& pred, const Pose& gt, double gt_area, const OksConstants& consts);

inline constexpr double kDefaultBoxMargin = 0.1;

/// Tight box over labeled keypoints grown by `margin` of the extent per side.
BoundingBox bbox_from_pose(const Pose& pose, double margin = kDefaultBoxMargin);

double iou(const BoundingBox& a, const BoundingBox& b);

/// Small (0, 64^2], Medium (64^2, 128^2], Large (128^2, inf).
ScaleClass scale_class(double area);

struct AnatomicalCenters {
  Point head;
  Point body;
};

/// Mean of the labeled facial keypoints (nose, eyes, ears).
Point head_center(const Pose& pose);
/// Mean of the labeled shoulders and hips; needs at least one of each.
Point body_center(const Pose& pose);
AnatomicalCenters anatomical_centers(const Pose& pose);

std::optional<Point> try_head_center(const Pose& pose);
std::optional<Point> try_body_center(const Pose& pose);

enum class CenterKind { Head = 0, Body = 1 };
inline constexpr std::size_t kNumCenters = 2;
std::string_view to_string(CenterKind c);
std::optional<Point> try_center(const Pose& pose, CenterKind kind);

}  // namespace posekit
