#include "posekit/codec.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "posekit/log.hpp"
#include "posekit/rng.hpp"

namespace posekit {

Grid2D::Grid2D(int w, int h, double s, float fill)
    : width(w), height(h), stride(s), values(static_cast<std::size_t>(w) * static_cast<std::size_t>(h), fill) {
  if (w <= 0 || h <= 0 || !(s > 0.0)) throw Error(ErrorCode::ShapeError, "grid dimensions must be positive");
}

bool Grid2D::contains(Point p) const {
  return p.x >= 0.0 && p.y >= 0.0 && p.x < width * stride && p.y < height * stride;
}

double Grid2D::sample(Point p) const {
  const double u = std::clamp(p.x / stride - 0.5, 0.0, static_cast<double>(width - 1));
  const double v = std::clamp(p.y / stride - 0.5, 0.0, static_cast<double>(height - 1));
  const int c0 = static_cast<int>(std::floor(u));
  const int r0 = static_cast<int>(std::floor(v));
  const int c1 = std::min(c0 + 1, width - 1);
  const int r1 = std::min(r0 + 1, height - 1);
  const double fu = u - c0;
  const double fv = v - r0;
  const double top = (1.0 - fu) * at(c0, r0) + fu * at(c1, r0);
  const double bottom = (1.0 - fu) * at(c0, r1) + fu * at(c1, r1);
  return (1.0 - fv) * top + fv * bottom;
}

void CodecConfig::validate() const {
  if (strides.empty()) throw Error(ErrorCode::InvalidConfig, "codec: at least one resolution required");
  for (std::size_t i = 0; i < strides.size(); ++i) {
    if (!(strides[i] > 0.0)) throw Error(ErrorCode::InvalidConfig, "codec: strides must be positive");
    if (i > 0 && !(strides[i] < strides[i - 1])) {
      throw Error(ErrorCode::InvalidConfig, "codec: strides must be strictly decreasing (coarse to fine)");
    }
  }
  if (!(base_sigma > 0.0) || !(reference_extent > 0.0) || !(sigma_min > 0.0) || sigma_max < sigma_min) {
    throw Error(ErrorCode::InvalidConfig, "codec: invalid kernel parameters");
  }
  if (offset_radius < 0) throw Error(ErrorCode::InvalidConfig, "codec: offset_radius must be >= 0");
  if (!(render_cutoff > 0.0)) throw Error(ErrorCode::InvalidConfig, "codec: render_cutoff must be positive");
}

namespace {

struct CellRange {
  int c0, c1, r0, r1;  // inclusive
};

CellRange cells_within(const Grid2D& grid, Point center, double radius_px) {
  if (!std::isfinite(radius_px)) return {0, grid.width - 1, 0, grid.height - 1};
  auto lo = [&](double p, int n) {
    return std::clamp(static_cast<int>(std::floor((p - radius_px) / grid.stride - 0.5)), 0, n - 1);
  };
  auto hi = [&](double p, int n) {
    return std::clamp(static_cast<int>(std::ceil((p + radius_px) / grid.stride - 0.5)), 0, n - 1);
  };
  return {lo(center.x, grid.width), hi(center.x, grid.width), lo(center.y, grid.height), hi(center.y, grid.height)};
}

double gaussian(Point a, Point b, double sigma) {
  const double dx = a.x - b.x;
  const double dy = a.y - b.y;
  return std::exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma));
}

int nearest_cell(double p, double stride, int n) {
  return std::clamp(static_cast<int>(std::floor(p / stride)), 0, n - 1);
}

std::vector<float> person_signature(const CodecConfig& cfg, std::uint64_t key) {
  Rng rng(mix_seed(cfg.feature_seed, key));
  std::uniform_real_distribution<double> uni(-1.0, 1.0);
  std::vector<float> sig(cfg.feature_channels);
  for (float& s : sig) s = static_cast<float>(uni(rng));
  return sig;
}

double person_area(const Pose& pose, std::span<const double> areas, std::size_t i) {
  if (!areas.empty()) return areas[i];
  try {
    return bbox_from_pose(pose).area();
  } catch (const Error&) {
    return 1.0;
  }
}

// Offsets written around one center; cells go to whichever person's center
// Gaussian is strongest there.
void write_offsets(ResolutionMaps& res, Grid2D& owner, std::size_t center, const Pose& pose, Point c,
                   double sigma_px, int radius) {
  const int cc = nearest_cell(c.x, res.stride, res.width);
  const int cr = nearest_cell(c.y, res.stride, res.height);
  auto& field = res.offset_fields[center];
  for (int r = std::max(0, cr - radius); r <= std::min(res.height - 1, cr + radius); ++r) {
    for (int col = std::max(0, cc - radius); col <= std::min(res.width - 1, cc + radius); ++col) {
      if ((r - cr) * (r - cr) + (col - cc) * (col - cc) > radius * radius) continue;
      const Point pos = owner.cell_center(col, r);
      // Strictly positive so the first writer always claims an untouched cell.
      const float strength = static_cast<float>(gaussian(pos, c, sigma_px)) + 1e-30f;
      if (strength <= owner.at(col, r)) continue;
      owner.at(col, r) = strength;
      for (std::size_t k = 0; k < pose.size(); ++k) {
        const Keypoint& kp = pose.keypoints[k];
        field[2 * k].at(col, r) = kp.labeled() ? static_cast<float>(kp.x - pos.x) : 0.0f;
        field[2 * k + 1].at(col, r) = kp.labeled() ? static_cast<float>(kp.y - pos.y) : 0.0f;
      }
    }
  }
}

}  // namespace

void render_gaussian_peak(Grid2D& grid, Point center, double sigma, double cutoff) {
  if (!(sigma > 0.0) || !std::isfinite(sigma)) throw Error(ErrorCode::InvalidKernel, "sigma must be positive");
  const double radius = cutoff * sigma;
  const CellRange cr = cells_within(grid, center, radius);
  const double r2 = radius * radius;
  for (int r = cr.r0; r <= cr.r1; ++r) {
    for (int c = cr.c0; c <= cr.c1; ++c) {
      const Point pos = grid.cell_center(c, r);
      const double dx = pos.x - center.x;
      const double dy = pos.y - center.y;
      const double d2 = dx * dx + dy * dy;
      if (d2 > r2) continue;
      const float g = static_cast<float>(std::exp(-d2 / (2.0 * sigma * sigma)));
      float& cell = grid.at(c, r);
      cell = std::max(cell, g);
    }
  }
}

double kernel_sigma_cells(double area, const CodecConfig& cfg) {
  const double raw = cfg.base_sigma * std::sqrt(std::max(area, 0.0)) / cfg.reference_extent;
  return std::clamp(raw, cfg.sigma_min, cfg.sigma_max);
}

SceneMaps encode_scene(std::span<const Pose> poses, ImageDims dims, const CodecConfig& cfg,
                       std::span<const double> areas) {
  cfg.validate();
  if (!areas.empty() && areas.size() != poses.size()) {
    throw Error(ErrorCode::ShapeError, "areas must align with poses");
  }
  const std::size_t n = poses.empty() ? kCocoKeypoints : poses.front().size();
  for (const Pose& p : poses) {
    if (p.size() != n) throw Error(ErrorCode::ShapeError, "all poses must have the same keypoint count");
  }

  SceneMaps maps;
  maps.num_keypoints = n;
  maps.image = dims;

  std::vector<std::vector<float>> signatures;
  std::vector<std::array<std::optional<Point>, kNumCenters>> centers;
  signatures.reserve(poses.size());
  for (std::size_t i = 0; i < poses.size(); ++i) {
    const Pose& p = poses[i];
    signatures.push_back(person_signature(cfg, p.id ? static_cast<std::uint64_t>(*p.id) : i));
    centers.push_back({try_head_center(p), try_body_center(p)});
    if (!centers.back()[0] && !centers.back()[1]) {
      maps.skipped_persons.push_back(i);
      log::warn("encode: person ", i, " has no derivable center; skipped");
    }
  }

  for (double stride : cfg.strides) {
    ResolutionMaps res;
    res.stride = stride;
    res.width = static_cast<int>(std::ceil(dims.width / stride));
    res.height = static_cast<int>(std::ceil(dims.height / stride));
    const Grid2D blank = res.blank();
    res.keypoint_heatmaps.assign(n, blank);
    for (std::size_t c = 0; c < kNumCenters; ++c) {
      res.center_heatmaps[c] = blank;
      res.offset_fields[c].assign(2 * n, blank);
    }
    res.feature_maps.assign(cfg.feature_channels, blank);
    std::array<Grid2D, kNumCenters> owner{blank, blank};
    // Signatures are blended with weights occupancy / sigma^2, so a small
    // person standing over a large one keeps its own appearance; the blend
    // is then scaled by the strongest occupancy to fade into background.
    Grid2D weight_sum = blank;
    Grid2D coverage = blank;
    Grid2D occupancy = blank;

    for (std::size_t i = 0; i < poses.size(); ++i) {
      const Pose& p = poses[i];
      const double area = person_area(p, areas, i);
      const double sigma_px = kernel_sigma_cells(area, cfg) * stride;

      for (std::size_t k = 0; k < n; ++k) {
        if (p.keypoints[k].labeled()) {
          render_gaussian_peak(res.keypoint_heatmaps[k], p.keypoints[k].point(), sigma_px, cfg.render_cutoff);
        }
      }
      for (std::size_t c = 0; c < kNumCenters; ++c) {
        if (!centers[i][c]) continue;
        render_gaussian_peak(res.center_heatmaps[c], *centers[i][c], sigma_px, cfg.render_cutoff);
        write_offsets(res, owner[c], c, p, *centers[i][c], sigma_px, cfg.offset_radius);
      }

      if (cfg.feature_channels == 0) continue;
      const double occ_sigma = std::max(cfg.occupancy_scale * std::sqrt(std::max(area, 1.0)), 0.5 * stride);
      std::fill(occupancy.values.begin(), occupancy.values.end(), 0.0f);
      for (const Keypoint& kp : p.keypoints) {
        if (kp.labeled()) render_gaussian_peak(occupancy, kp.point(), occ_sigma, 3.0);
      }
      const double density = 1.0 / (occ_sigma * occ_sigma);
      for (std::size_t idx = 0; idx < occupancy.values.size(); ++idx) {
        const float occ = occupancy.values[idx];
        if (occ == 0.0f) continue;
        const float w = static_cast<float>(occ * density);
        weight_sum.values[idx] += w;
        coverage.values[idx] = std::max(coverage.values[idx], occ);
        for (std::size_t ch = 0; ch < cfg.feature_channels; ++ch) {
          res.feature_maps[ch].values[idx] += w * signatures[i][ch];
        }
      }
    }
    for (std::size_t idx = 0; idx < weight_sum.values.size(); ++idx) {
      if (weight_sum.values[idx] == 0.0f) continue;
      const float scale = coverage.values[idx] / weight_sum.values[idx];
      for (auto& fm : res.feature_maps) fm.values[idx] *= scale;
    }
    maps.resolutions.push_back(std::move(res));
  }
  return maps;
}

std::vector<Peak> extract_peaks(const Grid2D& grid, double threshold, int window, std::size_t channel) {
  if (window < 1 || window % 2 == 0) throw Error(ErrorCode::InvalidConfig, "peak window must be odd and >= 1");
  const int half = window / 2;
  std::vector<Peak> peaks;
  for (int r = 0; r < grid.height; ++r) {
    for (int c = 0; c < grid.width; ++c) {
      const float v = grid.at(c, r);
      if (v < threshold) continue;
      bool is_peak = true;
      for (int dr = -half; dr <= half && is_peak; ++dr) {
        for (int dc = -half; dc <= half; ++dc) {
          if (dr == 0 && dc == 0) continue;
          const int rr = r + dr;
          const int cc = c + dc;
          if (rr < 0 || cc < 0 || rr >= grid.height || cc >= grid.width) continue;
          const float u = grid.at(cc, rr);
          // A neighbor earlier in row-major order wins ties.
          const bool earlier = dr < 0 || (dr == 0 && dc < 0);
          if (u > v || (u == v && earlier)) {
            is_peak = false;
            break;
          }
        }
      }
      if (!is_peak) continue;
      const Point pos = grid.cell_center(c, r);
      peaks.push_back({pos.x, pos.y, static_cast<double>(v), channel});
    }
  }
  std::stable_sort(peaks.begin(), peaks.end(), [](const Peak& a, const Peak& b) { return a.score > b.score; });
  return peaks;
}

Pose decode_candidate(const SceneMaps& maps, std::size_t resolution_index, const Peak& peak) {
  if (resolution_index >= maps.resolutions.size()) {
    throw Error(ErrorCode::OutOfBounds, "resolution index " + std::to_string(resolution_index));
  }
  if (peak.channel >= kNumCenters) throw Error(ErrorCode::OutOfBounds, "center channel out of range");
  const ResolutionMaps& res = maps.resolutions[resolution_index];
  const Point at{peak.x, peak.y};
  const auto& field = res.offset_fields[peak.channel];
  if (field.empty() || !field.front().contains(at)) {
    throw Error(ErrorCode::OutOfBounds, "peak outside grid bounds");
  }
  Pose pose(maps.num_keypoints);
  for (std::size_t k = 0; k < maps.num_keypoints; ++k) {
    pose.keypoints[k] = {at.x + field[2 * k].sample(at), at.y + field[2 * k + 1].sample(at), 2};
  }
  pose.score = std::clamp(peak.score, 0.0, 1.0);
  return pose;
}

}  // namespace posekit
