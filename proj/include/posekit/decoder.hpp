#pragma once

#include <cstddef>
#include <vector>

#include "posekit/codec.hpp"

namespace posekit {

/// Which center channels feed candidate generation.
enum class CenterMode { Dual, Head, Body };

struct DecoderConfig {
  double peak_threshold = 0.1;
  int peak_window = 3;
  CenterMode centers = CenterMode::Dual;
};

struct Candidate {
  Pose pose;
  CenterKind source = CenterKind::Body;
  std::size_t resolution = 0;
  double peak_score = 0.0;
};

using CandidateSet = std::vector<Candidate>;

/// Candidates from every resolution and enabled center channel, pooled and
/// sorted by descending peak score (stable over resolution, channel, peak order).
CandidateSet decode_scene(const SceneMaps& maps, const DecoderConfig& cfg = {});

}  // namespace posekit
