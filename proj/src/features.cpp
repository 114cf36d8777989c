#include <algorithm>
#include <cmath>
#include <limits>

#include "posekit/nets.hpp"

namespace posekit {

std::size_t sampled_feature_dim(std::size_t resolutions, std::size_t channels, std::size_t keypoints) {
  return resolutions * keypoints * channels + keypoints;
}

std::size_t sampled_feature_dim(const SceneMaps& maps) {
  return sampled_feature_dim(maps.resolutions.size(), maps.num_feature_channels(), maps.num_keypoints);
}

SampledFeature sample_features(const SceneMaps& maps, const Pose& pose) {
  if (pose.size() != maps.num_keypoints) throw Error(ErrorCode::ShapeError, "pose length does not match maps");
  SampledFeature f;
  f.values.reserve(sampled_feature_dim(maps));
  for (const ResolutionMaps& res : maps.resolutions) {
    for (const Keypoint& kp : pose.keypoints) {
      for (const Grid2D& fm : res.feature_maps) f.values.push_back(fm.sample(kp.point()));
    }
  }
  if (!maps.resolutions.empty()) {
    const ResolutionMaps& finest = maps.resolutions.back();
    for (std::size_t k = 0; k < pose.size(); ++k) {
      f.values.push_back(finest.keypoint_heatmaps[k].sample(pose.keypoints[k].point()));
    }
  }
  return f;
}

namespace {

// Vertex of the parabola through (-1, lm), (0, l0), (1, lp), in steps.
double parabola_vertex(double lm, double l0, double lp) {
  const double curv = lp - 2.0 * l0 + lm;
  if (!(curv < -1e-12)) return 0.0;
  return std::clamp(-(lp - lm) / (2.0 * curv), -1.0, 1.0);
}

constexpr int kClimbSteps = 3;
constexpr double kMinPeak = 1e-3;
constexpr double kMaxReadoutOffset = 10.0;

}  // namespace

std::vector<double> heatmap_readout(const SceneMaps& maps, const Pose& pose) {
  if (pose.size() != maps.num_keypoints) throw Error(ErrorCode::ShapeError, "pose length does not match maps");
  const double unit = residual_unit(pose);
  std::vector<double> out;
  out.reserve(maps.resolutions.size() * pose.size() * kReadoutPerKeypoint);
  for (const ResolutionMaps& res : maps.resolutions) {
    const double s = res.stride;
    for (std::size_t k = 0; k < pose.size(); ++k) {
      const Grid2D& h = res.keypoint_heatmaps[k];
      const Point p = pose.keypoints[k].point();
      out.push_back(h.sample(p));

      // Climb from the nearest cell to a local maximum, then fit a
      // parabola to log h along each axis. A sampled Gaussian is exactly
      // quadratic in log space, so its peak is recovered to float precision.
      int c = std::clamp(static_cast<int>(std::floor(p.x / s)), 0, h.width - 1);
      int r = std::clamp(static_cast<int>(std::floor(p.y / s)), 0, h.height - 1);
      for (int step = 0; step < kClimbSteps; ++step) {
        int bc = c, br = r;
        for (int dr = -1; dr <= 1; ++dr) {
          for (int dc = -1; dc <= 1; ++dc) {
            const int nc = c + dc, nr = r + dr;
            if (nc < 0 || nr < 0 || nc >= h.width || nr >= h.height) continue;
            if (h.at(nc, nr) > h.at(bc, br)) bc = nc, br = nr;
          }
        }
        if (bc == c && br == r) break;
        c = bc, r = br;
      }
      const double peak = h.at(c, r);
      if (peak < kMinPeak) {
        out.insert(out.end(), {0.0, 0.0, 0.0});
        continue;
      }
      auto log_at = [&](int cc, int rr) {
        cc = std::clamp(cc, 0, h.width - 1);
        rr = std::clamp(rr, 0, h.height - 1);
        return std::log(std::max<double>(h.at(cc, rr), 1e-12));
      };
      const double l0 = std::log(peak);
      const double tx = parabola_vertex(log_at(c - 1, r), l0, log_at(c + 1, r));
      const double ty = parabola_vertex(log_at(c, r - 1), l0, log_at(c, r + 1));
      const Point centre = h.cell_center(c, r);
      out.push_back(peak);
      out.push_back(std::clamp((centre.x + tx * s - p.x) / unit, -kMaxReadoutOffset, kMaxReadoutOffset));
      out.push_back(std::clamp((centre.y + ty * s - p.y) / unit, -kMaxReadoutOffset, kMaxReadoutOffset));
    }
  }
  return out;
}

PoseFrame pose_frame(const Pose& pose) {
  PoseFrame frame;
  double sx = 0.0;
  double sy = 0.0;
  std::size_t n = 0;
  for (const Keypoint& k : pose.keypoints) {
    if (!k.labeled()) continue;
    sx += k.x;
    sy += k.y;
    ++n;
  }
  if (n > 0) frame.origin = {sx / static_cast<double>(n), sy / static_cast<double>(n)};
  double area = 0.0;
  try {
    area = bbox_from_pose(pose).area();
  } catch (const Error&) {
  }
  frame.scale = std::max(4.0, std::sqrt(area));
  return frame;
}

double residual_unit(const Pose& pose) { return kResidualFraction * pose_frame(pose).scale; }

std::vector<double> refinement_input(const SceneMaps& maps, const Pose& pose) {
  std::vector<double> x = sample_features(maps, pose).values;
  const PoseFrame frame = pose_frame(pose);
  for (const Keypoint& k : pose.keypoints) {
    x.push_back((k.x - frame.origin.x) / frame.scale);
    x.push_back((k.y - frame.origin.y) / frame.scale);
  }
  x.push_back(std::log(frame.scale / 64.0));
  const std::vector<double> h = heatmap_readout(maps, pose);
  x.insert(x.end(), h.begin(), h.end());
  return x;
}

std::vector<double> peak_distances(const SceneMaps& maps, const Pose& pose) {
  const std::vector<double> h = heatmap_readout(maps, pose);
  const double unit = residual_unit(pose);
  const std::size_t n = pose.size();
  std::vector<double> out(n, std::numeric_limits<double>::infinity());
  for (std::size_t r = 0; r < maps.resolutions.size(); ++r) {
    for (std::size_t k = 0; k < n; ++k) {
      const double* q = &h[(r * n + k) * kReadoutPerKeypoint];
      if (q[1] < kMinPeak) continue;
      const double dx = q[2], dy = q[3];
      if (std::abs(dx) >= kMaxReadoutOffset || std::abs(dy) >= kMaxReadoutOffset) continue;  // clamped, out of reach
      out[k] = std::min(out[k], unit * std::hypot(dx, dy));
    }
  }
  return out;
}

Pose refine_pose(const SceneMaps& maps, const Pose& p, const Mlp& net) {
  const double unit = residual_unit(p);
  const Pose moved = apply_refinement(p, predict_residual(net, refinement_input(maps, p), unit));
  const std::vector<double> before = peak_distances(maps, p);
  const std::vector<double> after = peak_distances(maps, moved);
  Pose out = p;
  for (std::size_t k = 0; k < p.size(); ++k) {
    if (after[k] < before[k]) out.keypoints[k] = moved.keypoints[k];
  }
  return out;
}

Pose apply_refinement(const Pose& p, std::span<const double> p_delta) {
  if (p_delta.size() != 2 * p.size()) throw Error(ErrorCode::ShapeError, "p_delta must have 2N entries");
  Pose out = p;
  for (std::size_t k = 0; k < p.size(); ++k) {
    out.keypoints[k].x += p_delta[2 * k];
    out.keypoints[k].y += p_delta[2 * k + 1];
  }
  return out;
}

}  // namespace posekit
