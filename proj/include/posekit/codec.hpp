#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "posekit/core.hpp"

namespace posekit {

struct ImageDims {
  int width = 256;
  int height = 256;

  friend bool operator==(const ImageDims&, const ImageDims&) = default;
};

/// One channel of a map stack. Cell (col, row) covers the pixel square
/// [col*stride, (col+1)*stride) x [row*stride, (row+1)*stride); its
/// position is the center of that square.
struct Grid2D {
  int width = 0;
  int height = 0;
  double stride = 1.0;
  std::vector<float> values;

  Grid2D() = default;
  Grid2D(int width, int height, double stride, float fill = 0.0f);

  float& at(int col, int row) { return values[static_cast<std::size_t>(row) * width + col]; }
  float at(int col, int row) const { return values[static_cast<std::size_t>(row) * width + col]; }

  Point cell_center(int col, int row) const { return {(col + 0.5) * stride, (row + 0.5) * stride}; }
  bool contains(Point p) const;
  bool same_shape(const Grid2D& other) const {
    return width == other.width && height == other.height && stride == other.stride;
  }

  /// Bilinear read at pixel position p with border clamping.
  double sample(Point p) const;

  friend bool operator==(const Grid2D&, const Grid2D&) = default;
};

/// Every map of one resolution. All grids share width/height/stride.
struct ResolutionMaps {
  double stride = 1.0;
  int width = 0;
  int height = 0;
  std::vector<Grid2D> keypoint_heatmaps;               // N
  std::array<Grid2D, kNumCenters> center_heatmaps;     // head, body
  std::array<std::vector<Grid2D>, kNumCenters> offset_fields;  // 2N each: (dx, dy) per keypoint
  std::vector<Grid2D> feature_maps;                    // C

  Grid2D blank() const { return Grid2D(width, height, stride); }
  friend bool operator==(const ResolutionMaps&, const ResolutionMaps&) = default;
};

struct SceneMaps {
  std::size_t num_keypoints = kCocoKeypoints;
  ImageDims image;
  std::vector<ResolutionMaps> resolutions;  // coarse -> fine
  std::vector<std::size_t> skipped_persons;  // encode log: persons without any derivable center

  std::size_t num_feature_channels() const {
    return resolutions.empty() ? 0 : resolutions.front().feature_maps.size();
  }
  friend bool operator==(const SceneMaps&, const SceneMaps&) = default;
};

struct CodecConfig {
  std::vector<double> strides{4.0, 2.0, 1.0};
  double base_sigma = 2.0;          // cells
  double reference_extent = 96.0;   // pixels
  double sigma_min = 0.75;          // cells
  double sigma_max = 8.0;           // cells
  int offset_radius = 2;            // cells
  std::size_t feature_channels = 8;
  std::uint64_t feature_seed = 0;
  double occupancy_scale = 0.15;    // occupancy kernel, fraction of sqrt(area)
  double render_cutoff = 6.0;       // Gaussians are written out to this many sigmas

  void validate() const;
};

struct Peak {
  double x = 0.0;
  double y = 0.0;
  double score = 0.0;
  std::size_t channel = 0;
};

/// Max-composites exp(-|pos(c) - center|^2 / (2 sigma^2)) into every cell
/// within `cutoff` sigmas of the center (all cells when cutoff is infinite).
void render_gaussian_peak(Grid2D& grid, Point center, double sigma,
                          double cutoff = std::numeric_limits<double>::infinity());

/// Kernel size in cells for a person of the given box area.
double kernel_sigma_cells(double area, const CodecConfig& cfg);

/// Renders the multi-resolution ground-truth maps of a scene. `areas`
/// overrides the per-person box area used for kernel sizes when non-empty.
SceneMaps encode_scene(std::span<const Pose> poses, ImageDims dims, const CodecConfig& cfg,
                       std::span<const double> areas = {});

/// Strict window maxima with value >= threshold, ties going to the lower
/// row-major index, sorted by descending score.
std::vector<Peak> extract_peaks(const Grid2D& grid, double threshold, int window = 3, std::size_t channel = 0);

/// Pose read from the offset field of `peak.channel` at the peak.
Pose decode_candidate(const SceneMaps& maps, std::size_t resolution_index, const Peak& peak);

}  // namespace posekit
