#pragma once

// Shared fixtures for the unit tests: seeded random poses and small helpers.

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "posekit/core.hpp"

namespace posekit::testing {

// Published COCO per-keypoint sigmas; the OKS constant is twice each one.
inline const std::vector<double> kCocoSigmas{0.026, 0.025, 0.025, 0.035, 0.035, 0.079, 0.079, 0.072, 0.072,
                                             0.062, 0.062, 0.107, 0.107, 0.087, 0.087, 0.089, 0.089};

inline Pose random_pose(std::mt19937_64& rng, double cx, double cy, double extent, double p_unlabeled = 0.0,
                        std::size_t n = kCocoKeypoints) {
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  std::bernoulli_distribution drop(p_unlabeled);
  Pose p(n);
  for (auto& k : p.keypoints) {
    k.x = cx + extent * u(rng);
    k.y = cy + extent * u(rng);
    k.v = drop(rng) ? 0 : 2;
  }
  return p;
}

inline Pose translated(Pose p, double dx, double dy) {
  for (auto& k : p.keypoints) {
    k.x += dx;
    k.y += dy;
  }
  return p;
}

// Fully labeled pose with every keypoint at one point.
inline Pose point_pose(double x, double y, std::size_t n = kCocoKeypoints) {
  Pose p(n);
  for (auto& k : p.keypoints) k = {x, y, 2};
  return p;
}

}  // namespace posekit::testing
