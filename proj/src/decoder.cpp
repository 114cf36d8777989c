#include "posekit/decoder.hpp"

#include <algorithm>

namespace posekit {

namespace {

bool channel_enabled(CenterMode mode, std::size_t channel) {
  switch (mode) {
    case CenterMode::Dual: return true;
    case CenterMode::Head: return channel == static_cast<std::size_t>(CenterKind::Head);
    case CenterMode::Body: return channel == static_cast<std::size_t>(CenterKind::Body);
  }
  return false;
}

}  // namespace

CandidateSet decode_scene(const SceneMaps& maps, const DecoderConfig& cfg) {
  CandidateSet out;
  for (std::size_t r = 0; r < maps.resolutions.size(); ++r) {
    for (std::size_t c = 0; c < kNumCenters; ++c) {
      if (!channel_enabled(cfg.centers, c)) continue;
      for (const Peak& peak : extract_peaks(maps.resolutions[r].center_heatmaps[c], cfg.peak_threshold,
                                            cfg.peak_window, c)) {
        out.push_back({decode_candidate(maps, r, peak), static_cast<CenterKind>(c), r, peak.score});
      }
    }
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const Candidate& a, const Candidate& b) { return a.peak_score > b.peak_score; });
  return out;
}

}  // namespace posekit
