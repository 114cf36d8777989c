#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "posekit/codec.hpp"
#include "posekit/decoder.hpp"
#include "posekit/eval.hpp"
#include "posekit/nets.hpp"
#include "posekit/synth.hpp"

namespace posekit::io {

using Json = nlohmann::json;
namespace fs = std::filesystem;

/// PTF tensor: one JSON header line {"shape":[...],"dtype":"f32","order":"row-major"},
/// a single '\n', then prod(shape) little-endian float32 values.
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<float> data;
};

std::string encode_ptf(const Tensor& t);
Tensor decode_ptf(std::string_view bytes);
void write_ptf(const fs::path& path, const Tensor& t);
Tensor read_ptf(const fs::path& path);

/// {"num_keypoints": N, "poses": [{"keypoints": [x,y,v,...], "score": s, "id": ...}]}
Json poses_to_json(std::span<const Pose> poses);
std::vector<Pose> poses_from_json(const Json& j);

/// Pose JSON with "source", "resolution" and "peak_score" on each pose.
Json candidates_to_json(const CandidateSet& candidates);
CandidateSet candidates_from_json(const Json& j);

/// COCO keypoint results: [{"image_id", "category_id", "keypoints", "score"}, ...],
/// grouped by image id in ascending order.
std::vector<std::pair<std::int64_t, std::vector<Pose>>> coco_results_from_json(const Json& j);

Json groups_to_json(std::span<const PoseGroup> groups);

/// Directory with poses.json and scene.json (dims, seed, areas, classes, config echo).
void write_scene(const fs::path& dir, const Scene& scene, const Json& config_echo = Json::object());
Scene read_scene(const fs::path& dir);

/// Directory with manifest.json and one PTF per channel group and resolution.
void write_scene_maps(const fs::path& dir, const SceneMaps& maps);
SceneMaps read_scene_maps(const fs::path& dir);

/// Directory with manifest.json (layer dims, activations, seed, kind) and
/// one weight and bias PTF per layer.
void write_mlp(const fs::path& dir, const Mlp& net, const std::string& kind);
Mlp read_mlp(const fs::path& dir, std::string* kind = nullptr);

Json report_to_json(const EvalReport& report);
/// One row per PR point: curve,threshold,recall,precision.
std::string report_pr_csv(const EvalReport& report);

void write_text(const fs::path& path, const std::string& text);
std::string read_text(const fs::path& path);
Json read_json(const fs::path& path);
void write_json(const fs::path& path, const Json& j);

}  // namespace posekit::io
