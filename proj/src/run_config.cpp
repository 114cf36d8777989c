#include <set>
#include <string>

#include "posekit/pipeline.hpp"

namespace posekit {

namespace {

using Json = nlohmann::json;

// Reads known keys out of one JSON object and rejects the rest.
class Section {
 public:
  Section(const Json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw Error(ErrorCode::InvalidConfig, path_ + ": expected an object");
  }

  template <typename T>
  void read(const char* key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const Json::exception& e) {
      throw Error(ErrorCode::InvalidConfig, path_ + "." + key + ": " + e.what());
    }
  }

  template <typename F>
  void nested(const char* key, F&& f) {
    seen_.insert(key);
    if (j_.contains(key)) f(Section(j_.at(key), path_ + "." + key));
  }

  void finish() const {
    for (const auto& [key, _] : j_.items()) {
      if (!seen_.contains(key)) throw Error(ErrorCode::InvalidConfig, "unknown config key '" + path_ + "." + key + "'");
    }
  }

 private:
  const Json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

void read_noise(Section s, NoiseConfig& n) {
  s.read("heatmap_sigma_noise", n.heatmap_sigma_noise);
  s.read("offset_noise_px", n.offset_noise_px);
  s.read("spurious_peak_rate", n.spurious_peak_rate);
  s.finish();
}

Json noise_json(const NoiseConfig& n) {
  return {{"heatmap_sigma_noise", n.heatmap_sigma_noise},
          {"offset_noise_px", n.offset_noise_px},
          {"spurious_peak_rate", n.spurious_peak_rate}};
}

void read_train(Section s, TrainConfig& t) {
  s.read("learning_rate", t.learning_rate);
  s.read("epochs", t.epochs);
  s.read("batch_size", t.batch_size);
  s.read("seed", t.seed);
  s.read("weight_init_scale", t.weight_init_scale);
  s.read("hidden", t.hidden);
  s.read("weight_decay", t.weight_decay);
  s.finish();
}

Json train_json(const TrainConfig& t) {
  return {{"learning_rate", t.learning_rate}, {"epochs", t.epochs},   {"batch_size", t.batch_size},
          {"seed", t.seed},                   {"weight_init_scale", t.weight_init_scale}, {"hidden", t.hidden},
          {"weight_decay", t.weight_decay}};
}

std::string centers_name(CenterMode m) {
  switch (m) {
    case CenterMode::Dual: return "dual";
    case CenterMode::Head: return "head";
    case CenterMode::Body: return "body";
  }
  return "dual";
}

CenterMode parse_centers(const std::string& s) {
  if (s == "dual") return CenterMode::Dual;
  if (s == "head") return CenterMode::Head;
  if (s == "body") return CenterMode::Body;
  throw Error(ErrorCode::InvalidConfig, "centers must be dual|head|body, got '" + s + "'");
}

GroupingMode parse_grouping(const std::string& s) {
  if (s == "similarity") return GroupingMode::Similarity;
  if (s == "nms") return GroupingMode::Nms;
  throw Error(ErrorCode::InvalidConfig, "grouping must be similarity|nms, got '" + s + "'");
}

ConfidenceMode parse_confidence(const std::string& s) {
  if (s == "learned") return ConfidenceMode::Learned;
  if (s == "center-score") return ConfidenceMode::CenterScore;
  throw Error(ErrorCode::InvalidConfig, "confidence must be learned|center-score, got '" + s + "'");
}

bool parse_on_off(const Json& j) {
  if (j.is_boolean()) return j.get<bool>();
  const auto s = j.get<std::string>();
  if (s == "on") return true;
  if (s == "off") return false;
  throw Error(ErrorCode::InvalidConfig, "refine must be on|off, got '" + s + "'");
}

}  // namespace

std::string RunConfig::models_dir() const { return models.empty() ? out + "/models" : models; }

void RunConfig::validate() const {
  synth.validate();
  codec.validate();
  if (scenes == 0) throw Error(ErrorCode::InvalidConfig, "scenes must be >= 1");
  if (jobs == 0) throw Error(ErrorCode::InvalidConfig, "jobs must be >= 1");
  if (!(drop_gt >= 0.0 && drop_gt < 1.0)) throw Error(ErrorCode::InvalidConfig, "drop_gt must lie in [0, 1)");
  if (!(decoder.peak_threshold > 0.0 && decoder.peak_threshold < 1.0)) {
    throw Error(ErrorCode::InvalidConfig, "decoder.peak_threshold must lie in (0, 1)");
  }
  if (decoder.peak_window < 1 || decoder.peak_window % 2 == 0) {
    throw Error(ErrorCode::InvalidConfig, "decoder.peak_window must be odd");
  }
  if (!(grouping_params.tau > 0.0) || !(grouping_params.sigma_scale > 0.0)) {
    throw Error(ErrorCode::InvalidConfig, "grouping tau and sigma_scale must be positive");
  }
}

RunConfig run_config_from_json(const Json& j, RunConfig cfg) {
  Section root(j, "config");
  root.read("seed", cfg.seed);
  root.read("scenes", cfg.scenes);
  root.read("jobs", cfg.jobs);
  root.read("out", cfg.out);
  root.read("models", cfg.models);
  std::string s;
  if (j.contains("grouping")) { root.read("grouping", s); cfg.grouping = parse_grouping(s); } else root.read("grouping", s);
  if (j.contains("centers")) { root.read("centers", s); cfg.centers = parse_centers(s); } else root.read("centers", s);
  if (j.contains("confidence")) { root.read("confidence", s); cfg.confidence = parse_confidence(s); } else root.read("confidence", s);
  Json refine;
  root.read("refine", refine);
  if (j.contains("refine")) cfg.refine = parse_on_off(refine);
  root.read("drop_gt", cfg.drop_gt);
  root.read("train", cfg.train);
  root.read("write_artifacts", cfg.write_artifacts);

  root.nested("synth", [&](Section sec) {
    SynthConfig& sc = cfg.synth;
    sec.nested("image", [&](Section im) {
      im.read("width", sc.image.width);
      im.read("height", sc.image.height);
      im.finish();
    });
    sec.read("persons_min", sc.persons_min);
    sec.read("persons_max", sc.persons_max);
    sec.read("scale_mix", sc.scale_mix);
    sec.read("template_jitter", sc.template_jitter);
    sec.read("visibility_dropout", sc.visibility_dropout);
    sec.read("occluded_fraction", sc.occluded_fraction);
    sec.read("min_separation", sc.min_separation);
    sec.read("min_extent", sc.min_extent);
    sec.read("max_extent", sc.max_extent);
    sec.read("max_retries", sc.max_retries);
    sec.read("max_layouts", sc.max_layouts);
    sec.nested("noise", [&](Section n) { read_noise(std::move(n), sc.noise); });
    sec.finish();
  });
  root.nested("codec", [&](Section sec) {
    CodecConfig& c = cfg.codec;
    sec.read("strides", c.strides);
    sec.read("base_sigma", c.base_sigma);
    sec.read("reference_extent", c.reference_extent);
    sec.read("sigma_min", c.sigma_min);
    sec.read("sigma_max", c.sigma_max);
    sec.read("offset_radius", c.offset_radius);
    sec.read("feature_channels", c.feature_channels);
    sec.read("feature_seed", c.feature_seed);
    sec.read("occupancy_scale", c.occupancy_scale);
    sec.read("render_cutoff", c.render_cutoff);
    sec.finish();
  });
  root.nested("decoder", [&](Section sec) {
    sec.read("peak_threshold", cfg.decoder.peak_threshold);
    sec.read("peak_window", cfg.decoder.peak_window);
    sec.finish();
  });
  root.nested("grouping_params", [&](Section sec) {
    sec.read("sigma_scale", cfg.grouping_params.sigma_scale);
    sec.read("min_sigma", cfg.grouping_params.min_sigma);
    sec.read("tau", cfg.grouping_params.tau);
    sec.finish();
  });
  root.nested("data", [&](Section sec) {
    DatasetConfig& d = cfg.data;
    sec.read("scenes", d.scenes);
    sec.read("seed_offset", d.seed_offset);
    sec.nested("noise", [&](Section n) { read_noise(std::move(n), d.noise); });
    sec.read("perturb_px", d.perturb_px);
    sec.read("perturbations_per_person", d.perturbations_per_person);
    sec.read("refinement_perturbations", d.refinement_perturbations);
    sec.read("confidence_max_relative", d.confidence_max_relative);
    sec.read("embedding_dim", d.embedding_dim);
    sec.finish();
  });
  root.nested("confidence_train", [&](Section sec) { read_train(std::move(sec), cfg.confidence_train); });
  root.nested("similarity_train", [&](Section sec) { read_train(std::move(sec), cfg.similarity_train); });
  root.nested("refinement_train", [&](Section sec) { read_train(std::move(sec), cfg.refinement_train); });
  root.finish();
  cfg.decoder.centers = cfg.centers;
  cfg.validate();
  return cfg;
}

Json run_config_to_json(const RunConfig& cfg) {
  const SynthConfig& sc = cfg.synth;
  const CodecConfig& c = cfg.codec;
  const DatasetConfig& d = cfg.data;
  return {
      {"seed", cfg.seed},
      {"scenes", cfg.scenes},
      {"jobs", cfg.jobs},
      {"out", cfg.out},
      {"models", cfg.models_dir()},
      {"grouping", cfg.grouping == GroupingMode::Similarity ? "similarity" : "nms"},
      {"centers", centers_name(cfg.centers)},
      {"confidence", cfg.confidence == ConfidenceMode::Learned ? "learned" : "center-score"},
      {"refine", cfg.refine ? "on" : "off"},
      {"drop_gt", cfg.drop_gt},
      {"train", cfg.train},
      {"write_artifacts", cfg.write_artifacts},
      {"synth",
       {{"image", {{"width", sc.image.width}, {"height", sc.image.height}}},
        {"persons_min", sc.persons_min},
        {"persons_max", sc.persons_max},
        {"scale_mix", sc.scale_mix},
        {"template_jitter", sc.template_jitter},
        {"visibility_dropout", sc.visibility_dropout},
        {"occluded_fraction", sc.occluded_fraction},
        {"min_separation", sc.min_separation},
        {"min_extent", sc.min_extent},
        {"max_extent", sc.max_extent},
        {"max_retries", sc.max_retries},
        {"max_layouts", sc.max_layouts},
        {"noise", noise_json(sc.noise)}}},
      {"codec",
       {{"strides", c.strides},
        {"base_sigma", c.base_sigma},
        {"reference_extent", c.reference_extent},
        {"sigma_min", c.sigma_min},
        {"sigma_max", c.sigma_max},
        {"offset_radius", c.offset_radius},
        {"feature_channels", c.feature_channels},
        {"feature_seed", c.feature_seed},
        {"occupancy_scale", c.occupancy_scale},
        {"render_cutoff", c.render_cutoff}}},
      {"decoder", {{"peak_threshold", cfg.decoder.peak_threshold}, {"peak_window", cfg.decoder.peak_window}}},
      {"grouping_params",
       {{"sigma_scale", cfg.grouping_params.sigma_scale},
        {"min_sigma", cfg.grouping_params.min_sigma},
        {"tau", cfg.grouping_params.tau}}},
      {"data",
       {{"scenes", d.scenes},
        {"seed_offset", d.seed_offset},
        {"noise", noise_json(d.noise)},
        {"perturb_px", d.perturb_px},
        {"perturbations_per_person", d.perturbations_per_person},
        {"refinement_perturbations", d.refinement_perturbations},
        {"confidence_max_relative", d.confidence_max_relative},
        {"embedding_dim", d.embedding_dim}}},
      {"confidence_train", train_json(cfg.confidence_train)},
      {"similarity_train", train_json(cfg.similarity_train)},
      {"refinement_train", train_json(cfg.refinement_train)},
  };
}

}  // namespace posekit
