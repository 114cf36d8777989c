#include "posekit/eval.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "posekit/log.hpp"
#include "posekit/rng.hpp"

namespace posekit {

namespace {

std::optional<BoundingBox> try_box(const Pose& p) {
  try {
    return bbox_from_pose(p);
  } catch (const Error&) {
    return std::nullopt;
  }
}

std::optional<ScaleClass> try_scale(std::optional<BoundingBox> box) {
  if (!box || !box->valid()) return std::nullopt;
  return scale_class(box->area());
}

std::vector<double> scores_of(std::span<const Pose> dets) {
  std::vector<double> s(dets.size());
  std::transform(dets.begin(), dets.end(), s.begin(), [](const Pose& p) { return p.score; });
  return s;
}

// One image's matches for every detection, tagged with the image index.
std::vector<DetectionMatch> tag_image(MatchResult m, std::size_t image) {
  for (DetectionMatch& d : m.detections) d.image = image;
  return std::move(m.detections);
}

// Keeps matches that belong to scale subset `s`: matched to a gt of that
// class, or unmatched with the detection's own box in that class.
std::vector<DetectionMatch> restrict_to_scale(std::span<const DetectionMatch> all, ScaleClass s,
                                              const std::vector<std::vector<std::optional<ScaleClass>>>& gt_class,
                                              const std::vector<std::vector<std::optional<ScaleClass>>>& det_class) {
  std::vector<DetectionMatch> out;
  for (const DetectionMatch& d : all) {
    const std::optional<ScaleClass> c =
        d.matched_gt ? gt_class[d.image][*d.matched_gt] : det_class[d.image][d.det_index];
    if (c && *c == s) out.push_back(d);
  }
  return out;
}

}  // namespace

MatchResult match_greedy(std::span<const double> scores, const std::vector<std::vector<double>>& similarity,
                         std::size_t num_gt, double threshold) {
  if (similarity.size() != scores.size()) throw Error(ErrorCode::ShapeError, "similarity rows must match detections");
  MatchResult result;
  result.gt_matched.assign(num_gt, false);
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  for (std::size_t d : order) {
    if (similarity[d].size() != num_gt) throw Error(ErrorCode::ShapeError, "similarity columns must match gts");
    DetectionMatch m;
    m.det_index = d;
    m.score = scores[d];
    std::optional<std::size_t> best;
    for (std::size_t g = 0; g < num_gt; ++g) {
      if (result.gt_matched[g]) continue;
      if (!best || similarity[d][g] > similarity[d][*best]) best = g;
    }
    if (best) {
      m.value = similarity[d][*best];
      if (m.value >= threshold) {
        m.matched_gt = best;
        m.is_tp = true;
        result.gt_matched[*best] = true;
      }
    }
    result.detections.push_back(m);
  }
  return result;
}

MatchResult match_detections(std::span<const Pose> dets, std::span<const GroundTruth> gts, double threshold,
                             MatchMetric metric, const OksConstants& consts) {
  std::vector<std::vector<double>> sim(dets.size(), std::vector<double>(gts.size(), 0.0));
  if (metric == MatchMetric::Oks) {
    for (std::size_t d = 0; d < dets.size(); ++d) {
      for (std::size_t g = 0; g < gts.size(); ++g) sim[d][g] = compute_oks(dets[d], gts[g].pose, gts[g].area, consts);
    }
  } else {
    std::vector<std::optional<BoundingBox>> gb(gts.size());
    for (std::size_t g = 0; g < gts.size(); ++g) gb[g] = try_box(gts[g].pose);
    for (std::size_t d = 0; d < dets.size(); ++d) {
      const auto db = try_box(dets[d]);
      if (!db) continue;
      for (std::size_t g = 0; g < gts.size(); ++g) {
        if (gb[g]) sim[d][g] = iou(*db, *gb[g]);
      }
    }
  }
  return match_greedy(scores_of(dets), sim, gts.size(), threshold);
}

ApResult average_precision(std::span<const DetectionMatch> matches, std::size_t num_gt) {
  ApResult result;
  std::vector<std::size_t> order(matches.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return matches[a].score > matches[b].score; });
  if (num_gt == 0) {
    result.warning = !matches.empty();
    if (result.warning) log::warn("average_precision: detections without ground truth; AP defined as 0");
    return result;
  }
  std::size_t tp = 0;
  for (std::size_t i = 0; i < order.size(); ++i) {
    if (matches[order[i]].is_tp) ++tp;
    result.pr_points.push_back({static_cast<double>(tp) / static_cast<double>(num_gt),
                                static_cast<double>(tp) / static_cast<double>(i + 1)});
  }
  // Precision envelope: best precision at this recall or beyond.
  std::vector<double> envelope(result.pr_points.size());
  double running = 0.0;
  for (std::size_t i = result.pr_points.size(); i-- > 0;) {
    running = std::max(running, result.pr_points[i].precision);
    envelope[i] = running;
  }
  double sum = 0.0;
  std::size_t cursor = 0;
  for (int t = 0; t <= 100; ++t) {
    const double threshold = t / 100.0;
    while (cursor < result.pr_points.size() && result.pr_points[cursor].recall < threshold) ++cursor;
    if (cursor == result.pr_points.size()) break;
    sum += envelope[cursor];
  }
  result.ap = sum / 101.0;
  return result;
}

std::array<double, 10> oks_thresholds() {
  std::array<double, 10> t{};
  for (int i = 0; i < 10; ++i) t[i] = 0.5 + 0.05 * i;
  return t;
}

KeypointReport evaluate_keypoints(std::span<const ImageEval> images, const OksConstants& consts) {
  KeypointReport report;
  std::vector<std::vector<std::optional<ScaleClass>>> gt_class(images.size());
  std::vector<std::vector<std::optional<ScaleClass>>> det_class(images.size());
  std::vector<std::vector<std::vector<double>>> oks(images.size());
  for (std::size_t i = 0; i < images.size(); ++i) {
    const ImageEval& img = images[i];
    for (const GroundTruth& g : img.ground_truths) {
      const ScaleClass c = scale_class(g.area);
      gt_class[i].push_back(c);
      ++report.gt_counts[static_cast<std::size_t>(c)];
    }
    for (const Pose& d : img.detections) det_class[i].push_back(try_scale(try_box(d)));
    oks[i].assign(img.detections.size(), std::vector<double>(img.ground_truths.size()));
    for (std::size_t d = 0; d < img.detections.size(); ++d) {
      for (std::size_t g = 0; g < img.ground_truths.size(); ++g) {
        oks[i][d][g] = compute_oks(img.detections[d], img.ground_truths[g].pose, img.ground_truths[g].area, consts);
      }
    }
    report.num_gt += img.ground_truths.size();
    report.num_detections += img.detections.size();
  }

  std::array<double, kNumScales> scale_sum{};
  for (double t : oks_thresholds()) {
    std::vector<DetectionMatch> all;
    for (std::size_t i = 0; i < images.size(); ++i) {
      auto m = tag_image(match_greedy(scores_of(images[i].detections), oks[i], images[i].ground_truths.size(), t), i);
      all.insert(all.end(), m.begin(), m.end());
    }
    const ApResult ap = average_precision(all, report.num_gt);
    report.ap += ap.ap;
    if (std::abs(t - 0.5) < 1e-9) {
      report.ap50 = ap.ap;
      report.pr_points = ap.pr_points;
    }
    if (std::abs(t - 0.75) < 1e-9) report.ap75 = ap.ap;
    for (ScaleClass s : kAllScaleClasses) {
      const auto idx = static_cast<std::size_t>(s);
      if (report.gt_counts[idx] == 0) continue;
      scale_sum[idx] += average_precision(restrict_to_scale(all, s, gt_class, det_class), report.gt_counts[idx]).ap;
    }
  }
  report.ap /= 10.0;
  if (report.num_gt == 0 && report.num_detections > 0) report.warnings.push_back("no ground truth; AP defined as 0");
  for (ScaleClass s : kAllScaleClasses) {
    const auto idx = static_cast<std::size_t>(s);
    if (report.gt_counts[idx] > 0) report.per_scale[idx] = scale_sum[idx] / 10.0;
  }
  return report;
}

BoxReport evaluate_boxes(std::span<const ImageEval> images) {
  BoxReport report;
  std::vector<std::vector<std::optional<ScaleClass>>> gt_class(images.size());
  std::vector<std::vector<std::optional<ScaleClass>>> det_class(images.size());
  std::vector<DetectionMatch> all;
  std::array<std::size_t, kNumScales> matched_per_scale{};
  std::size_t matched = 0;
  for (std::size_t i = 0; i < images.size(); ++i) {
    std::vector<BoundingBox> gboxes;
    for (std::size_t g = 0; g < images[i].ground_truths.size(); ++g) {
      if (auto b = try_box(images[i].ground_truths[g].pose)) {
        gboxes.push_back(*b);
        const ScaleClass c = scale_class(b->area());
        gt_class[i].push_back(c);
        ++report.gt_counts[static_cast<std::size_t>(c)];
      } else {
        report.warnings.push_back("image " + std::to_string(i) + " gt " + std::to_string(g) + ": degenerate, skipped");
      }
    }
    std::vector<BoundingBox> dboxes;
    std::vector<double> scores;
    std::vector<std::size_t> det_ids;
    for (std::size_t d = 0; d < images[i].detections.size(); ++d) {
      if (auto b = try_box(images[i].detections[d])) {
        dboxes.push_back(*b);
        scores.push_back(images[i].detections[d].score);
        det_ids.push_back(d);
        det_class[i].push_back(scale_class(b->area()));
      } else {
        report.warnings.push_back("image " + std::to_string(i) + " det " + std::to_string(d) +
                                  ": degenerate, skipped");
      }
    }
    std::vector<std::vector<double>> sim(dboxes.size(), std::vector<double>(gboxes.size()));
    for (std::size_t d = 0; d < dboxes.size(); ++d) {
      for (std::size_t g = 0; g < gboxes.size(); ++g) sim[d][g] = iou(dboxes[d], gboxes[g]);
    }
    auto m = tag_image(match_greedy(scores, sim, gboxes.size(), 0.5), i);
    for (const DetectionMatch& d : m) {
      if (!d.matched_gt) continue;
      ++matched;
      ++matched_per_scale[static_cast<std::size_t>(*gt_class[i][*d.matched_gt])];
    }
    all.insert(all.end(), m.begin(), m.end());
    report.num_gt += gboxes.size();
  }
  for (const auto& w : report.warnings) log::warn("evaluate_boxes: ", w);

  const ApResult ap = average_precision(all, report.num_gt);
  report.bbp = ap.ap;
  report.pr_points = ap.pr_points;
  report.bbr = report.num_gt == 0 ? 0.0 : static_cast<double>(matched) / static_cast<double>(report.num_gt);
  for (ScaleClass s : kAllScaleClasses) {
    const auto idx = static_cast<std::size_t>(s);
    if (report.gt_counts[idx] == 0) continue;
    report.per_scale_bbp[idx] = average_precision(restrict_to_scale(all, s, gt_class, det_class), report.gt_counts[idx]).ap;
    report.per_scale_bbr[idx] =
        static_cast<double>(matched_per_scale[idx]) / static_cast<double>(report.gt_counts[idx]);
  }
  return report;
}

EvalReport evaluate(std::span<const ImageEval> images, const OksConstants& consts) {
  EvalReport r;
  r.keypoints = evaluate_keypoints(images, consts);
  r.boxes = evaluate_boxes(images);
  return r;
}

MissingGtResult simulate_missing_gt(std::span<const ImageEval> images, const DropSpec& drop, std::uint64_t seed,
                                    const OksConstants& consts) {
  std::vector<std::pair<std::size_t, std::size_t>> all;
  for (std::size_t i = 0; i < images.size(); ++i) {
    for (std::size_t g = 0; g < images[i].ground_truths.size(); ++g) all.emplace_back(i, g);
  }
  MissingGtResult result;
  if (!drop.indices.empty()) {
    std::set<std::pair<std::size_t, std::size_t>> unique(drop.indices.begin(), drop.indices.end());
    for (const auto& [i, g] : unique) {
      if (i >= images.size() || g >= images[i].ground_truths.size()) {
        throw Error(ErrorCode::InvalidDrop, "drop index out of range");
      }
    }
    result.dropped.assign(unique.begin(), unique.end());
  } else {
    if (!(drop.fraction >= 0.0) || !(drop.fraction < 1.0)) {
      throw Error(ErrorCode::InvalidDrop, "drop fraction must lie in [0, 1)");
    }
    Rng rng(mix_seed(seed, 0xd409));
    std::vector<std::pair<std::size_t, std::size_t>> shuffled = all;
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    const auto count = static_cast<std::size_t>(std::llround(drop.fraction * static_cast<double>(all.size())));
    result.dropped.assign(shuffled.begin(), shuffled.begin() + static_cast<std::ptrdiff_t>(count));
  }
  if (!all.empty() && result.dropped.size() == all.size()) {
    throw Error(ErrorCode::InvalidDrop, "dropping every ground truth leaves nothing to evaluate");
  }

  const std::set<std::pair<std::size_t, std::size_t>> dropped(result.dropped.begin(), result.dropped.end());
  std::vector<ImageEval> reduced(images.begin(), images.end());
  for (std::size_t i = 0; i < images.size(); ++i) {
    reduced[i].ground_truths.clear();
    for (std::size_t g = 0; g < images[i].ground_truths.size(); ++g) {
      if (!dropped.contains({i, g})) reduced[i].ground_truths.push_back(images[i].ground_truths[g]);
    }
  }
  result.ap_complete = evaluate_keypoints(images, consts).ap;
  result.ap_incomplete = dropped.empty() ? result.ap_complete : evaluate_keypoints(reduced, consts).ap;
  return result;
}

}  // namespace posekit
