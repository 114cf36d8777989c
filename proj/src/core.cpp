#include "posekit/core.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace posekit {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::NoLabeledKeypoints: return "NoLabeledKeypoints";
    case ErrorCode::InvalidArea: return "InvalidArea";
    case ErrorCode::DegeneratePose: return "DegeneratePose";
    case ErrorCode::CenterUndefined: return "CenterUndefined";
    case ErrorCode::InvalidKernel: return "InvalidKernel";
    case ErrorCode::OutOfBounds: return "OutOfBounds";
    case ErrorCode::NoOverlap: return "NoOverlap";
    case ErrorCode::NotNormalized: return "NotNormalized";
    case ErrorCode::EmptyGroup: return "EmptyGroup";
    case ErrorCode::ShapeError: return "ShapeError";
    case ErrorCode::EmptyDataset: return "EmptyDataset";
    case ErrorCode::InvalidDrop: return "InvalidDrop";
    case ErrorCode::ModelMissing: return "ModelMissing";
    case ErrorCode::UsageError: return "UsageError";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::ParseError: return "ParseError";
  }
  return "Unknown";
}

std::string_view to_string(ScaleClass c) {
  switch (c) {
    case ScaleClass::Small: return "small";
    case ScaleClass::Medium: return "medium";
    case ScaleClass::Large: return "large";
  }
  return "unknown";
}

std::string_view to_string(CenterKind c) {
  return c == CenterKind::Head ? "head" : "body";
}

std::size_t Pose::num_labeled() const {
  return static_cast<std::size_t>(
      std::count_if(keypoints.begin(), keypoints.end(), [](const Keypoint& k) { return k.labeled(); }));
}

OksConstants::OksConstants(std::vector<double> k) : k_(std::move(k)) {
  if (k_.empty()) throw Error(ErrorCode::InvalidConfig, "OKS constants must not be empty");
  for (double v : k_) {
    if (!(v > 0.0) || !std::isfinite(v)) throw Error(ErrorCode::InvalidConfig, "OKS constants must be positive");
  }
}

OksConstants OksConstants::coco() {
  // Published COCO per-keypoint sigmas.
  static constexpr std::array<double, kCocoKeypoints> sigmas{
      0.026, 0.025, 0.025, 0.035, 0.035, 0.079, 0.079, 0.072, 0.072,
      0.062, 0.062, 0.107, 0.107, 0.087, 0.087, 0.089, 0.089};
  std::vector<double> k(sigmas.size());
  std::transform(sigmas.begin(), sigmas.end(), k.begin(), [](double s) { return 2.0 * s; });
  return OksConstants(std::move(k));
}

double compute_oks(const Pose& pred, const Pose& gt, double gt_area, const OksConstants& consts) {
  if (!(gt_area > 0.0)) throw Error(ErrorCode::InvalidArea, "gt_area must be positive");
  if (pred.size() != gt.size() || gt.size() != consts.size()) {
    throw Error(ErrorCode::ShapeError, "pose lengths and OKS constants disagree");
  }
  double sum = 0.0;
  std::size_t labeled = 0;
  for (std::size_t i = 0; i < gt.size(); ++i) {
    const Keypoint& g = gt.keypoints[i];
    if (!g.labeled()) continue;
    const double dx = pred.keypoints[i].x - g.x;
    const double dy = pred.keypoints[i].y - g.y;
    const double k = consts[i];
    sum += std::exp(-(dx * dx + dy * dy) / (2.0 * gt_area * k * k));
    ++labeled;
  }
  if (labeled == 0) throw Error(ErrorCode::NoLabeledKeypoints, "ground truth has no labeled keypoints");
  return sum / static_cast<double>(labeled);
}

BoundingBox bbox_from_pose(const Pose& pose, double margin) {
  double x0 = std::numeric_limits<double>::infinity();
  double y0 = x0;
  double x1 = -x0;
  double y1 = -x0;
  std::size_t used = 0;
  for (const Keypoint& k : pose.keypoints) {
    if (!k.labeled()) continue;
    x0 = std::min(x0, k.x);
    y0 = std::min(y0, k.y);
    x1 = std::max(x1, k.x);
    y1 = std::max(y1, k.y);
    ++used;
  }
  if (used < 2 || !(x1 > x0) || !(y1 > y0)) {
    throw Error(ErrorCode::DegeneratePose, "need >= 2 labeled keypoints with nonzero extent");
  }
  const double w = x1 - x0;
  const double h = y1 - y0;
  return {x0 - margin * w, y0 - margin * h, w * (1.0 + 2.0 * margin), h * (1.0 + 2.0 * margin)};
}

double iou(const BoundingBox& a, const BoundingBox& b) {
  const double ix = std::max(0.0, std::min(a.x + a.w, b.x + b.w) - std::max(a.x, b.x));
  const double iy = std::max(0.0, std::min(a.y + a.h, b.y + b.h) - std::max(a.y, b.y));
  const double inter = ix * iy;
  const double uni = a.area() + b.area() - inter;
  if (!(uni > 0.0)) return 0.0;
  return inter / uni;
}

ScaleClass scale_class(double area) {
  if (!(area > 0.0)) throw Error(ErrorCode::InvalidArea, "area must be positive");
  if (area <= 64.0 * 64.0) return ScaleClass::Small;
  if (area <= 128.0 * 128.0) return ScaleClass::Medium;
  return ScaleClass::Large;
}

namespace {

std::optional<Point> labeled_mean(const Pose& pose, std::span<const std::size_t> indices) {
  double sx = 0.0;
  double sy = 0.0;
  std::size_t n = 0;
  for (std::size_t i : indices) {
    if (i >= pose.size() || !pose.keypoints[i].labeled()) continue;
    sx += pose.keypoints[i].x;
    sy += pose.keypoints[i].y;
    ++n;
  }
  if (n == 0) return std::nullopt;
  return Point{sx / static_cast<double>(n), sy / static_cast<double>(n)};
}

bool any_labeled(const Pose& pose, std::size_t a, std::size_t b) {
  return (a < pose.size() && pose.keypoints[a].labeled()) || (b < pose.size() && pose.keypoints[b].labeled());
}

}  // namespace

std::optional<Point> try_head_center(const Pose& pose) {
  static constexpr std::array<std::size_t, 5> face{0, 1, 2, 3, 4};
  return labeled_mean(pose, face);
}

std::optional<Point> try_body_center(const Pose& pose) {
  if (!any_labeled(pose, coco::kLeftShoulder, coco::kRightShoulder) ||
      !any_labeled(pose, coco::kLeftHip, coco::kRightHip)) {
    return std::nullopt;
  }
  static constexpr std::array<std::size_t, 4> torso{coco::kLeftShoulder, coco::kRightShoulder, coco::kLeftHip,
                                                    coco::kRightHip};
  return labeled_mean(pose, torso);
}

std::optional<Point> try_center(const Pose& pose, CenterKind kind) {
  return kind == CenterKind::Head ? try_head_center(pose) : try_body_center(pose);
}

Point head_center(const Pose& pose) {
  auto c = try_head_center(pose);
  if (!c) throw Error(ErrorCode::CenterUndefined, "head center: no labeled facial keypoint");
  return *c;
}

Point body_center(const Pose& pose) {
  auto c = try_body_center(pose);
  if (!c) throw Error(ErrorCode::CenterUndefined, "body center: needs a labeled shoulder and a labeled hip");
  return *c;
}

AnatomicalCenters anatomical_centers(const Pose& pose) {
  return {head_center(pose), body_center(pose)};
}

}  // namespace posekit
