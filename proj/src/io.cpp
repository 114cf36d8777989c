#include "posekit/io.hpp"

#include <bit>
#include <map>
#include <cstring>
#include <fstream>
#include <sstream>

namespace posekit::io {

namespace {

std::uint32_t to_little(std::uint32_t v) {
  if constexpr (std::endian::native == std::endian::little) return v;
  return ((v & 0xffu) << 24) | ((v & 0xff00u) << 8) | ((v >> 8) & 0xff00u) | (v >> 24);
}

std::size_t product(const std::vector<std::size_t>& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

std::string_view source_name(CenterKind k) { return to_string(k); }

CenterKind source_from(const std::string& s) {
  if (s == "head") return CenterKind::Head;
  if (s == "body") return CenterKind::Body;
  throw Error(ErrorCode::ParseError, "unknown candidate source '" + s + "'");
}

Json per_scale_json(const PerScale& v) {
  Json j = Json::object();
  for (ScaleClass s : kAllScaleClasses) {
    const auto& x = v[static_cast<std::size_t>(s)];
    j[std::string(to_string(s))] = x ? Json(*x) : Json(nullptr);
  }
  return j;
}

Json counts_json(const std::array<std::size_t, kNumScales>& c) {
  Json j = Json::object();
  for (ScaleClass s : kAllScaleClasses) j[std::string(to_string(s))] = c[static_cast<std::size_t>(s)];
  return j;
}

Json pr_json(const std::vector<PrPoint>& pts) {
  Json j = Json::array();
  for (const PrPoint& p : pts) j.push_back({p.recall, p.precision});
  return j;
}

// Flattens grids of identical shape into one tensor [count, H, W].
Tensor stack(const std::vector<Grid2D>& grids, int width, int height) {
  Tensor t;
  t.shape = {grids.size(), static_cast<std::size_t>(height), static_cast<std::size_t>(width)};
  t.data.reserve(product(t.shape));
  for (const Grid2D& g : grids) t.data.insert(t.data.end(), g.values.begin(), g.values.end());
  return t;
}

std::vector<Grid2D> unstack(const Tensor& t, std::size_t leading, int width, int height, double stride) {
  const std::size_t plane = static_cast<std::size_t>(width) * static_cast<std::size_t>(height);
  if (t.data.size() != leading * plane) throw Error(ErrorCode::ParseError, "tensor size does not match manifest");
  std::vector<Grid2D> out;
  for (std::size_t i = 0; i < leading; ++i) {
    Grid2D g(width, height, stride);
    std::copy_n(t.data.begin() + static_cast<std::ptrdiff_t>(i * plane), plane, g.values.begin());
    out.push_back(std::move(g));
  }
  return out;
}

}  // namespace

std::string encode_ptf(const Tensor& t) {
  if (product(t.shape) != t.data.size()) throw Error(ErrorCode::ShapeError, "PTF shape does not match data size");
  Json header = {{"shape", t.shape}, {"dtype", "f32"}, {"order", "row-major"}};
  std::string out = header.dump();
  out.push_back('\n');
  const std::size_t offset = out.size();
  out.resize(offset + 4 * t.data.size());
  for (std::size_t i = 0; i < t.data.size(); ++i) {
    const std::uint32_t bits = to_little(std::bit_cast<std::uint32_t>(t.data[i]));
    std::memcpy(out.data() + offset + 4 * i, &bits, 4);
  }
  return out;
}

Tensor decode_ptf(std::string_view bytes) {
  const auto nl = bytes.find('\n');
  if (nl == std::string_view::npos) throw Error(ErrorCode::ParseError, "PTF: missing header line");
  Json header;
  try {
    header = Json::parse(bytes.substr(0, nl));
  } catch (const Json::exception& e) {
    throw Error(ErrorCode::ParseError, std::string("PTF header: ") + e.what());
  }
  if (header.value("dtype", "") != "f32" || header.value("order", "") != "row-major" || !header.contains("shape")) {
    throw Error(ErrorCode::ParseError, "PTF: unsupported header");
  }
  Tensor t;
  t.shape = header.at("shape").get<std::vector<std::size_t>>();
  const std::size_t n = product(t.shape);
  const std::string_view payload = bytes.substr(nl + 1);
  if (payload.size() != 4 * n) throw Error(ErrorCode::ParseError, "PTF: payload size does not match shape");
  t.data.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::uint32_t bits = 0;
    std::memcpy(&bits, payload.data() + 4 * i, 4);
    t.data[i] = std::bit_cast<float>(to_little(bits));
  }
  return t;
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  os.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!os) throw Error(ErrorCode::IoError, "write failed: " + path.string());
}

std::string read_text(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error(ErrorCode::IoError, "cannot read " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

Json read_json(const fs::path& path) {
  try {
    return Json::parse(read_text(path));
  } catch (const Json::exception& e) {
    throw Error(ErrorCode::ParseError, path.string() + ": " + e.what());
  }
}

void write_json(const fs::path& path, const Json& j) { write_text(path, j.dump(2) + "\n"); }

void write_ptf(const fs::path& path, const Tensor& t) { write_text(path, encode_ptf(t)); }

Tensor read_ptf(const fs::path& path) { return decode_ptf(read_text(path)); }

Json poses_to_json(std::span<const Pose> poses) {
  Json list = Json::array();
  std::size_t n = poses.empty() ? kCocoKeypoints : poses.front().size();
  for (const Pose& p : poses) {
    Json flat = Json::array();
    for (const Keypoint& k : p.keypoints) {
      flat.push_back(k.x);
      flat.push_back(k.y);
      flat.push_back(k.v);
    }
    Json jp = {{"keypoints", std::move(flat)}, {"score", p.score}};
    if (p.id) jp["id"] = *p.id;
    list.push_back(std::move(jp));
  }
  return {{"num_keypoints", n}, {"poses", std::move(list)}};
}

std::vector<Pose> poses_from_json(const Json& j) {
  try {
    const auto n = j.at("num_keypoints").get<std::size_t>();
    std::vector<Pose> out;
    for (const Json& jp : j.at("poses")) {
      const auto flat = jp.at("keypoints").get<std::vector<double>>();
      if (flat.size() != 3 * n) throw Error(ErrorCode::ParseError, "keypoints must hold 3 * num_keypoints values");
      Pose p(n);
      for (std::size_t k = 0; k < n; ++k) {
        p.keypoints[k] = {flat[3 * k], flat[3 * k + 1], static_cast<int>(flat[3 * k + 2])};
      }
      p.score = jp.value("score", 1.0);
      if (jp.contains("id") && !jp.at("id").is_null()) p.id = jp.at("id").get<std::int64_t>();
      out.push_back(std::move(p));
    }
    return out;
  } catch (const Json::exception& e) {
    throw Error(ErrorCode::ParseError, std::string("pose JSON: ") + e.what());
  }
}

Json candidates_to_json(const CandidateSet& candidates) {
  std::vector<Pose> poses;
  for (const Candidate& c : candidates) poses.push_back(c.pose);
  Json j = poses_to_json(poses);
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    j["poses"][i]["source"] = source_name(candidates[i].source);
    j["poses"][i]["resolution"] = candidates[i].resolution;
    j["poses"][i]["peak_score"] = candidates[i].peak_score;
  }
  return j;
}

CandidateSet candidates_from_json(const Json& j) {
  const auto poses = poses_from_json(j);
  CandidateSet out;
  try {
    for (std::size_t i = 0; i < poses.size(); ++i) {
      const Json& jp = j.at("poses").at(i);
      out.push_back({poses[i], source_from(jp.at("source").get<std::string>()), jp.at("resolution").get<std::size_t>(),
                     jp.value("peak_score", poses[i].score)});
    }
  } catch (const Json::exception& e) {
    throw Error(ErrorCode::ParseError, std::string("candidate JSON: ") + e.what());
  }
  return out;
}

std::vector<std::pair<std::int64_t, std::vector<Pose>>> coco_results_from_json(const Json& j) {
  std::map<std::int64_t, std::vector<Pose>> by_image;
  try {
    for (const Json& r : j) {
      const auto flat = r.at("keypoints").get<std::vector<double>>();
      if (flat.size() % 3 != 0) throw Error(ErrorCode::ParseError, "COCO keypoints must be x,y,v triples");
      Pose p(flat.size() / 3);
      for (std::size_t k = 0; k < p.size(); ++k) {
        // COCO results carry a keypoint score in the third slot; every
        // detected keypoint counts as labeled.
        p.keypoints[k] = {flat[3 * k], flat[3 * k + 1], 2};
      }
      p.score = r.at("score").get<double>();
      by_image[r.at("image_id").get<std::int64_t>()].push_back(std::move(p));
    }
  } catch (const Json::exception& e) {
    throw Error(ErrorCode::ParseError, std::string("COCO results: ") + e.what());
  }
  return {by_image.begin(), by_image.end()};
}

Json groups_to_json(std::span<const PoseGroup> groups) {
  Json j = Json::array();
  for (const PoseGroup& g : groups) j.push_back({{"members", g.member_indices}, {"representative", g.representative}});
  return j;
}

void write_scene(const fs::path& dir, const Scene& scene, const Json& config_echo) {
  fs::create_directories(dir);
  write_json(dir / "poses.json", poses_to_json(scene.gt_poses));
  Json classes = Json::array();
  for (ScaleClass c : scene.classes) classes.push_back(to_string(c));
  write_json(dir / "scene.json", {{"image", {{"width", scene.image.width}, {"height", scene.image.height}}},
                                  {"seed", scene.seed},
                                  {"areas", scene.areas},
                                  {"scale_classes", classes},
                                  {"config", config_echo}});
}

Scene read_scene(const fs::path& dir) {
  Scene s;
  s.gt_poses = poses_from_json(read_json(dir / "poses.json"));
  const Json m = read_json(dir / "scene.json");
  try {
    s.image = {m.at("image").at("width").get<int>(), m.at("image").at("height").get<int>()};
    s.seed = m.at("seed").get<std::uint64_t>();
    s.areas = m.at("areas").get<std::vector<double>>();
    for (const Json& c : m.at("scale_classes")) {
      const auto name = c.get<std::string>();
      s.classes.push_back(name == "small" ? ScaleClass::Small : name == "medium" ? ScaleClass::Medium : ScaleClass::Large);
    }
  } catch (const Json::exception& e) {
    throw Error(ErrorCode::ParseError, std::string("scene.json: ") + e.what());
  }
  if (s.areas.size() != s.gt_poses.size() || s.classes.size() != s.gt_poses.size()) {
    throw Error(ErrorCode::ParseError, "scene.json does not align with poses.json");
  }
  return s;
}

void write_scene_maps(const fs::path& dir, const SceneMaps& maps) {
  fs::create_directories(dir);
  Json resolutions = Json::array();
  for (std::size_t r = 0; r < maps.resolutions.size(); ++r) {
    const ResolutionMaps& res = maps.resolutions[r];
    const std::string prefix = "r" + std::to_string(r) + "_";
    std::vector<Grid2D> centers(res.center_heatmaps.begin(), res.center_heatmaps.end());
    std::vector<Grid2D> offsets;
    for (const auto& field : res.offset_fields) offsets.insert(offsets.end(), field.begin(), field.end());
    Tensor off = stack(offsets, res.width, res.height);
    off.shape = {kNumCenters, 2 * maps.num_keypoints, static_cast<std::size_t>(res.height),
                 static_cast<std::size_t>(res.width)};
    write_ptf(dir / (prefix + "keypoints.ptf"), stack(res.keypoint_heatmaps, res.width, res.height));
    write_ptf(dir / (prefix + "centers.ptf"), stack(centers, res.width, res.height));
    write_ptf(dir / (prefix + "offsets.ptf"), off);
    write_ptf(dir / (prefix + "features.ptf"), stack(res.feature_maps, res.width, res.height));
    resolutions.push_back({{"stride", res.stride},
                           {"width", res.width},
                           {"height", res.height},
                           {"keypoint_heatmaps", prefix + "keypoints.ptf"},
                           {"center_heatmaps", prefix + "centers.ptf"},
                           {"offset_fields", prefix + "offsets.ptf"},
                           {"feature_maps", prefix + "features.ptf"}});
  }
  write_json(dir / "manifest.json", {{"num_keypoints", maps.num_keypoints},
                                     {"image", {{"width", maps.image.width}, {"height", maps.image.height}}},
                                     {"feature_channels", maps.num_feature_channels()},
                                     {"skipped_persons", maps.skipped_persons},
                                     {"resolutions", resolutions}});
}

SceneMaps read_scene_maps(const fs::path& dir) {
  const Json m = read_json(dir / "manifest.json");
  SceneMaps maps;
  try {
    maps.num_keypoints = m.at("num_keypoints").get<std::size_t>();
    maps.image = {m.at("image").at("width").get<int>(), m.at("image").at("height").get<int>()};
    maps.skipped_persons = m.value("skipped_persons", std::vector<std::size_t>{});
    const auto channels = m.at("feature_channels").get<std::size_t>();
    for (const Json& jr : m.at("resolutions")) {
      ResolutionMaps res;
      res.stride = jr.at("stride").get<double>();
      res.width = jr.at("width").get<int>();
      res.height = jr.at("height").get<int>();
      const std::size_t n = maps.num_keypoints;
      res.keypoint_heatmaps =
          unstack(read_ptf(dir / jr.at("keypoint_heatmaps").get<std::string>()), n, res.width, res.height, res.stride);
      auto centers =
          unstack(read_ptf(dir / jr.at("center_heatmaps").get<std::string>()), kNumCenters, res.width, res.height,
                  res.stride);
      for (std::size_t c = 0; c < kNumCenters; ++c) res.center_heatmaps[c] = std::move(centers[c]);
      auto offsets = unstack(read_ptf(dir / jr.at("offset_fields").get<std::string>()), kNumCenters * 2 * n, res.width,
                             res.height, res.stride);
      for (std::size_t c = 0; c < kNumCenters; ++c) {
        res.offset_fields[c].assign(std::make_move_iterator(offsets.begin() + static_cast<std::ptrdiff_t>(c * 2 * n)),
                                    std::make_move_iterator(offsets.begin() + static_cast<std::ptrdiff_t>((c + 1) * 2 * n)));
      }
      res.feature_maps =
          unstack(read_ptf(dir / jr.at("feature_maps").get<std::string>()), channels, res.width, res.height, res.stride);
      maps.resolutions.push_back(std::move(res));
    }
  } catch (const Json::exception& e) {
    throw Error(ErrorCode::ParseError, std::string("maps manifest: ") + e.what());
  }
  return maps;
}

void write_mlp(const fs::path& dir, const Mlp& net, const std::string& kind) {
  fs::create_directories(dir);
  Json layers = Json::array();
  for (std::size_t l = 0; l < net.layers().size(); ++l) {
    const Mlp::Layer& layer = net.layers()[l];
    const std::string w = "layer" + std::to_string(l) + "_weight.ptf";
    const std::string b = "layer" + std::to_string(l) + "_bias.ptf";
    write_ptf(dir / w, {{layer.out, layer.in}, layer.weight});
    write_ptf(dir / b, {{layer.out}, layer.bias});
    const bool last = l + 1 == net.layers().size();
    layers.push_back({{"in", layer.in},
                      {"out", layer.out},
                      {"activation", last ? std::string(to_string(net.output_activation())) : "relu"},
                      {"weight", w},
                      {"bias", b}});
  }
  write_json(dir / "manifest.json", {{"kind", kind},
                                     {"layer_dims", net.layer_dims()},
                                     {"output_activation", to_string(net.output_activation())},
                                     {"seed", net.seed()},
                                     {"layers", layers}});
}

Mlp read_mlp(const fs::path& dir, std::string* kind) {
  if (!fs::exists(dir / "manifest.json")) throw Error(ErrorCode::ModelMissing, "no model at " + dir.string());
  const Json m = read_json(dir / "manifest.json");
  try {
    std::vector<Mlp::Layer> layers;
    for (const Json& jl : m.at("layers")) {
      Mlp::Layer layer;
      layer.in = jl.at("in").get<std::size_t>();
      layer.out = jl.at("out").get<std::size_t>();
      layer.weight = read_ptf(dir / jl.at("weight").get<std::string>()).data;
      layer.bias = read_ptf(dir / jl.at("bias").get<std::string>()).data;
      layers.push_back(std::move(layer));
    }
    if (kind) *kind = m.value("kind", "");
    const auto act = m.at("output_activation").get<std::string>();
    return Mlp(std::move(layers), act == "sigmoid" ? OutputActivation::Sigmoid : OutputActivation::Identity,
               m.value("seed", std::uint64_t{0}));
  } catch (const Json::exception& e) {
    throw Error(ErrorCode::ParseError, std::string("model manifest: ") + e.what());
  }
}

Json report_to_json(const EvalReport& report) {
  const KeypointReport& k = report.keypoints;
  const BoxReport& b = report.boxes;
  Json j = {{"keypoints",
             {{"ap", k.ap},
              {"ap50", k.ap50},
              {"ap75", k.ap75},
              {"per_scale", per_scale_json(k.per_scale)},
              {"gt_counts", counts_json(k.gt_counts)},
              {"num_gt", k.num_gt},
              {"num_detections", k.num_detections},
              {"pr_points", pr_json(k.pr_points)},
              {"warnings", k.warnings}}},
            {"boxes",
             {{"bbp", b.bbp},
              {"bbr", b.bbr},
              {"per_scale_bbp", per_scale_json(b.per_scale_bbp)},
              {"per_scale_bbr", per_scale_json(b.per_scale_bbr)},
              {"gt_counts", counts_json(b.gt_counts)},
              {"num_gt", b.num_gt},
              {"pr_points", pr_json(b.pr_points)},
              {"warnings", b.warnings}}}};
  if (report.ap_complete) j["ap_complete"] = *report.ap_complete;
  if (report.ap_incomplete) j["ap_incomplete"] = *report.ap_incomplete;
  return j;
}

std::string report_pr_csv(const EvalReport& report) {
  std::ostringstream os;
  os.precision(17);
  os << "curve,threshold,recall,precision\n";
  for (const PrPoint& p : report.keypoints.pr_points) os << "keypoint_oks,0.5," << p.recall << ',' << p.precision << '\n';
  for (const PrPoint& p : report.boxes.pr_points) os << "box_iou,0.5," << p.recall << ',' << p.precision << '\n';
  return os.str();
}

}  // namespace posekit::io
