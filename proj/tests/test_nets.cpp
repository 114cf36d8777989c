#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "gradcheck.hpp"
#include "posekit/nets.hpp"
#include "posekit/synth.hpp"
#include "test_util.hpp"

using namespace posekit;
using posekit::testing::gradient_check_shape;
using posekit::testing::point_pose;
using posekit::testing::random_pose;

namespace {

SceneMaps blank_maps(double fill, std::vector<double> strides = {4.0, 2.0, 1.0}) {
  CodecConfig cfg;
  cfg.strides = std::move(strides);
  SceneMaps maps = encode_scene(std::vector<Pose>{}, {64, 64}, cfg);
  for (auto& res : maps.resolutions)
    for (auto& fm : res.feature_maps) std::fill(fm.values.begin(), fm.values.end(), static_cast<float>(fill));
  return maps;
}

std::vector<double> random_vec(std::mt19937_64& rng, std::size_t n, double scale = 1.0) {
  std::uniform_real_distribution<double> u(-scale, scale);
  std::vector<double> v(n);
  for (double& x : v) x = u(rng);
  return v;
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  return std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
}

}  // namespace

// ---- feature sampling

TEST(SampleFeatures, ConstantMapsReadConstant) {
  const SceneMaps maps = blank_maps(0.37);
  std::mt19937_64 rng(1);
  const Pose p = random_pose(rng, 32, 32, 50);
  const SampledFeature f = sample_features(maps, p);
  ASSERT_EQ(f.values.size(), sampled_feature_dim(maps));
  ASSERT_EQ(f.values.size(), 3u * 17u * 8u + 17u);
  for (std::size_t i = 0; i + kCocoKeypoints < f.values.size(); ++i) EXPECT_NEAR(f.values[i], 0.37, 1e-7);
  for (std::size_t i = f.values.size() - kCocoKeypoints; i < f.values.size(); ++i) EXPECT_EQ(f.values[i], 0.0);
}

TEST(SampleFeatures, CellCenterReadsStoredValueInOrder) {
  SceneMaps maps = blank_maps(0.0, {2.0});
  auto& res = maps.resolutions[0];
  for (std::size_t ch = 0; ch < res.feature_maps.size(); ++ch) res.feature_maps[ch].at(5, 7) = 1.0f + ch;
  res.keypoint_heatmaps[3].at(5, 7) = 0.5f;
  Pose p = point_pose(0.0, 0.0);
  p.keypoints[3] = {11.0, 15.0, 2};  // center of cell (5, 7)
  const SampledFeature f = sample_features(maps, p);
  const std::size_t c = res.feature_maps.size();
  for (std::size_t ch = 0; ch < c; ++ch) EXPECT_DOUBLE_EQ(f.values[3 * c + ch], 1.0 + ch);
  EXPECT_DOUBLE_EQ(f.values[kCocoKeypoints * c + 3], 0.5);
}

TEST(SampleFeatures, OffCellMatchesBilinearOracle) {
  SceneMaps maps = blank_maps(0.0, {2.0});
  Grid2D& fm = maps.resolutions[0].feature_maps[0];
  std::mt19937_64 rng(2);
  for (float& v : fm.values) v = static_cast<float>(random_vec(rng, 1)[0]);
  std::uniform_real_distribution<double> u(1.0, 62.0);
  for (int trial = 0; trial < 100; ++trial) {
    Pose p = point_pose(0.0, 0.0);
    const double x = u(rng), y = u(rng);
    p.keypoints[0] = {x, y, 2};
    const double gx = x / 2.0 - 0.5, gy = y / 2.0 - 0.5;
    const int c0 = static_cast<int>(std::floor(gx)), r0 = static_cast<int>(std::floor(gy));
    const double fx = gx - c0, fy = gy - r0;
    const double expect = (1 - fx) * (1 - fy) * fm.at(c0, r0) + fx * (1 - fy) * fm.at(c0 + 1, r0) +
                          (1 - fx) * fy * fm.at(c0, r0 + 1) + fx * fy * fm.at(c0 + 1, r0 + 1);
    EXPECT_NEAR(sample_features(maps, p).values[0], expect, 1e-12);
  }
}

TEST(SampleFeatures, LinearInFeatureValues) {
  std::mt19937_64 rng(3);
  SceneMaps a = blank_maps(0.0), b = blank_maps(0.0), sum = blank_maps(0.0);
  for (std::size_t r = 0; r < a.resolutions.size(); ++r)
    for (std::size_t ch = 0; ch < a.resolutions[r].feature_maps.size(); ++ch)
      for (std::size_t i = 0; i < a.resolutions[r].feature_maps[ch].values.size(); ++i) {
        const float va = static_cast<float>(random_vec(rng, 1)[0]);
        const float vb = static_cast<float>(random_vec(rng, 1)[0]);
        a.resolutions[r].feature_maps[ch].values[i] = va;
        b.resolutions[r].feature_maps[ch].values[i] = vb;
        sum.resolutions[r].feature_maps[ch].values[i] = 2.0f * va + vb;
      }
  const Pose p = random_pose(rng, 32, 32, 40);
  const auto fa = sample_features(a, p).values, fb = sample_features(b, p).values, fs = sample_features(sum, p).values;
  for (std::size_t i = 0; i < fs.size(); ++i) EXPECT_NEAR(fs[i], 2.0 * fa[i] + fb[i], 1e-5);
}

// ---- forward

TEST(MlpForward, ZeroWeightsGiveLastBias) {
  Mlp net({3, 4, 2}, OutputActivation::Identity, 1);
  for (auto& l : net.layers()) std::fill(l.weight.begin(), l.weight.end(), 0.0f);
  net.layers()[0].bias = {0.5f, 1.0f, 1.5f, 2.0f};
  net.layers()[1].bias = {-0.25f, 3.0f};
  const auto y = net.forward(std::vector<double>{1.0, -2.0, 3.0});
  EXPECT_DOUBLE_EQ(y[0], -0.25);
  EXPECT_DOUBLE_EQ(y[1], 3.0);
}

TEST(MlpForward, IdentityLayer) {
  Mlp::Layer l{3, 3, {1, 0, 0, 0, 1, 0, 0, 0, 1}, {0, 0, 0}};
  const Mlp net({l}, OutputActivation::Identity, 0);
  const std::vector<double> x{0.25, -7.0, 3.5};
  EXPECT_EQ(net.forward(x), x);
}

TEST(MlpForward, MatchesNaiveMatmul) {
  std::mt19937_64 rng(4);
  Mlp net({5, 7, 6, 3}, OutputActivation::Sigmoid, 9);
  for (auto& l : net.layers())
    for (float& b : l.bias) b = static_cast<float>(random_vec(rng, 1)[0]);
  for (int trial = 0; trial < 20; ++trial) {
    const std::vector<double> x = random_vec(rng, 5, 2.0);
    std::vector<double> a = x;
    for (std::size_t li = 0; li < net.layers().size(); ++li) {
      const auto& l = net.layers()[li];
      std::vector<double> z(l.out);
      for (std::size_t o = 0; o < l.out; ++o) {
        z[o] = l.bias[o];
        for (std::size_t i = 0; i < l.in; ++i) z[o] += double(l.weight[o * l.in + i]) * a[i];
        z[o] = li + 1 < net.layers().size() ? std::max(0.0, z[o]) : 1.0 / (1.0 + std::exp(-z[o]));
      }
      a = z;
    }
    const auto y = net.forward(x);
    ASSERT_EQ(y.size(), a.size());
    for (std::size_t o = 0; o < y.size(); ++o) EXPECT_NEAR(y[o], a[o], 1e-12);
  }
}

TEST(MlpForward, ShapeErrorAndSigmoidRange) {
  Mlp net({4, 8, 1}, OutputActivation::Sigmoid, 5, 5.0);
  try {
    net.forward(std::vector<double>{1.0, 2.0});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ShapeError);
  }
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    const double y = net.forward(random_vec(rng, 4, 10.0))[0];
    EXPECT_GT(y, 0.0);
    EXPECT_LT(y, 1.0);
  }
}

// ---- backward

TEST(MlpBackward, TwoLayerFiniteDifferences) {
  const auto r = gradient_check_shape({6, 5, 3}, OutputActivation::Identity, 21);
  EXPECT_LT(r.max_rel_error, 1e-4);
  EXPECT_GT(r.checked, 0u);
  const auto s = gradient_check_shape({6, 5, 1}, OutputActivation::Sigmoid, 22);
  EXPECT_LT(s.max_rel_error, 1e-4);
}

TEST(MlpBackward, DeeperNetsFiniteDifferences) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    EXPECT_LT(gradient_check_shape({12, 16, 8, 4}, OutputActivation::Identity, seed).max_rel_error, 1e-4);
    EXPECT_LT(gradient_check_shape({12, 16, 8, 1}, OutputActivation::Sigmoid, seed).max_rel_error, 1e-4);
  }
}

TEST(MlpBackward, ZeroLossGradGivesZeroGradients) {
  Mlp net({4, 6, 2}, OutputActivation::Identity, 3);
  std::mt19937_64 rng(6);
  const auto g = net.backward(random_vec(rng, 4), std::vector<double>{0.0, 0.0});
  EXPECT_EQ(g.max_abs(), 0.0);
}

TEST(MlpBackward, LinearSquaredLossClosedForm) {
  std::mt19937_64 rng(7);
  Mlp net({4, 3}, OutputActivation::Identity, 8);
  for (float& b : net.layers()[0].bias) b = static_cast<float>(random_vec(rng, 1)[0]);
  const auto x = random_vec(rng, 4), target = random_vec(rng, 3);
  const auto y = net.forward(x);
  std::vector<double> lg(3);
  for (std::size_t o = 0; o < 3; ++o) lg[o] = 2.0 * (y[o] - target[o]);
  const auto g = net.backward(x, lg);
  for (std::size_t o = 0; o < 3; ++o) {
    EXPECT_NEAR(g.bias[0][o], lg[o], 1e-12);
    for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(g.weight[0][o * 4 + i], lg[o] * x[i], 1e-12);
  }
}

TEST(MlpBackward, ShapeError) {
  Mlp net({3, 2}, OutputActivation::Identity, 1);
  EXPECT_THROW(net.backward(std::vector<double>{1, 2, 3}, std::vector<double>{1.0}), Error);
}

TEST(CosineLoss, GradientsMatchFiniteDifferences) {
  std::mt19937_64 rng(8);
  for (int label : {1, -1}) {
    for (int trial = 0; trial < 20; ++trial) {
      auto a = random_vec(rng, 6), b = random_vec(rng, 6);
      if (label < 0) b = a, b[0] += 0.3;  // keep the hinge active
      const CosineLoss l = cosine_embedding_loss(a, b, label);
      for (std::size_t i = 0; i < a.size(); ++i) {
        const double h = 1e-6;
        auto ap = a, am = a;
        ap[i] += h, am[i] -= h;
        const double num = (cosine_embedding_loss(ap, b, label).loss - cosine_embedding_loss(am, b, label).loss) / (2 * h);
        EXPECT_NEAR(l.grad_a[i], num, 1e-6);
      }
    }
  }
  const std::vector<double> v{1.0, 2.0};
  EXPECT_NEAR(cosine_embedding_loss(v, v, 1).loss, 0.0, 1e-12);
  EXPECT_DOUBLE_EQ(cosine_embedding_loss(v, std::vector<double>{-2.0, 1.0}, -1).loss, 0.0);
}

// ---- training

TEST(TrainConfidence, FitsConstantTarget) {
  std::mt19937_64 rng(9);
  std::vector<ConfidenceSample> data;
  for (int i = 0; i < 200; ++i) data.push_back({random_vec(rng, 10), 0.7});
  TrainConfig cfg;
  cfg.epochs = 30;
  cfg.learning_rate = 0.5;
  const TrainResult r = train_confidence(data, cfg);
  for (const auto& s : data) EXPECT_NEAR(predict_confidence(r.net, s.input), 0.7, 0.05);
  EXPECT_LT(r.epoch_loss.back(), r.epoch_loss.front());
}

TEST(TrainConfidence, LossDescendsAndIsDeterministic) {
  std::mt19937_64 rng(10);
  std::vector<ConfidenceSample> data;
  for (int i = 0; i < 400; ++i) {
    auto x = random_vec(rng, 8);
    data.push_back({x, 1.0 / (1.0 + std::exp(-(2.0 * x[0] - x[1] + 0.5 * x[2] * x[3])))});
  }
  TrainConfig cfg;
  cfg.epochs = 40;
  cfg.learning_rate = 0.2;
  const TrainResult a = train_confidence(data, cfg);
  EXPECT_LT(a.epoch_loss.back(), 0.25 * a.epoch_loss.front());
  for (std::size_t e = 2; e < a.epoch_loss.size(); ++e) EXPECT_LE(a.epoch_loss[e], 1.05 * a.epoch_loss[e - 1]);
  const TrainResult b = train_confidence(data, cfg);
  EXPECT_TRUE(a.net == b.net);
  EXPECT_EQ(a.epoch_loss, b.epoch_loss);
}

TEST(Training, RejectsEmptyAndBadConfigs) {
  auto code = [](auto&& f) {
    try {
      f();
    } catch (const Error& e) {
      return e.code();
    }
    return ErrorCode::UsageError;
  };
  EXPECT_EQ(code([] { train_confidence({}, TrainConfig{}); }), ErrorCode::EmptyDataset);
  EXPECT_EQ(code([] { train_similarity({}, TrainConfig{}); }), ErrorCode::EmptyDataset);
  EXPECT_EQ(code([] { train_refinement({}, TrainConfig{}); }), ErrorCode::EmptyDataset);
  TrainConfig bad;
  bad.learning_rate = 0.0;
  const std::vector<ConfidenceSample> one{{{1.0}, 0.5}};
  EXPECT_EQ(code([&] { train_confidence(one, bad); }), ErrorCode::InvalidConfig);
}

TEST(TrainSimilarity, SeparatesClustersAndOutputsUnitNorm) {
  std::mt19937_64 rng(11);
  const std::size_t dim = 12;
  const auto sig_a = random_vec(rng, dim), sig_b = random_vec(rng, dim);
  std::normal_distribution<double> noise(0.0, 0.15);
  auto draw = [&](const std::vector<double>& s) {
    auto v = s;
    for (double& x : v) x += noise(rng);
    return v;
  };
  std::vector<SimilarityPair> pairs;
  for (int i = 0; i < 300; ++i) {
    pairs.push_back({draw(sig_a), draw(sig_a), 1});
    pairs.push_back({draw(sig_b), draw(sig_b), 1});
    pairs.push_back({draw(sig_a), draw(sig_b), -1});
  }
  TrainConfig cfg;
  cfg.epochs = 20;
  cfg.learning_rate = 0.1;
  cfg.hidden = {16};
  const TrainResult r = train_similarity(pairs, cfg, 8);
  double intra = 0.0, inter = 0.0;
  const int n = 100;
  for (int i = 0; i < n; ++i) {
    const PoseFeature a1 = embed(r.net, draw(sig_a)), a2 = embed(r.net, draw(sig_a));
    const PoseFeature b1 = embed(r.net, draw(sig_b));
    EXPECT_NEAR(a1.norm(), 1.0, 1e-6);
    intra += dot(a1.values, a2.values);
    inter += dot(a1.values, b1.values);
  }
  EXPECT_GT(intra / n, inter / n + 0.3);

  std::mt19937_64 rng2(12);
  for (int i = 0; i < 50; ++i) EXPECT_NEAR(embed(r.net, random_vec(rng2, dim, 5.0)).norm(), 1.0, 1e-6);
}

TEST(TrainSimilarity, IdenticalPositivePairsLossVanishes) {
  std::mt19937_64 rng(13);
  std::vector<SimilarityPair> pairs;
  for (int i = 0; i < 50; ++i) {
    const auto x = random_vec(rng, 6);
    pairs.push_back({x, x, 1});
  }
  TrainConfig cfg;
  cfg.epochs = 5;
  const TrainResult r = train_similarity(pairs, cfg, 4);
  for (double l : r.epoch_loss) EXPECT_NEAR(l, 0.0, 1e-9);
}

TEST(TrainRefinement, ZeroResidualsGiveZeroOutput) {
  std::mt19937_64 rng(14);
  std::vector<RefinementSample> data;
  for (int i = 0; i < 200; ++i) {
    data.push_back({random_vec(rng, 10), std::vector<double>(4, 0.0), std::vector<double>(4, 1.0), 3.0});
  }
  TrainConfig cfg;
  cfg.epochs = 150;
  cfg.learning_rate = 0.1;
  const TrainResult r = train_refinement(data, cfg);
  for (const auto& s : data) {
    const auto d = predict_residual(r.net, s.input, s.scale);
    EXPECT_LT(std::hypot(d[0], d[1]), 0.1);
    EXPECT_LT(std::hypot(d[2], d[3]), 0.1);
  }
}

TEST(TrainRefinement, LearnsLinearResidualMap) {
  std::mt19937_64 rng(15);
  std::vector<RefinementSample> train, held;
  for (int i = 0; i < 600; ++i) {
    const auto x = random_vec(rng, 6);
    const std::vector<double> res{2.0 * x[0], -x[1] + x[2], 0.5 * x[3], x[4]};
    (i < 500 ? train : held).push_back({x, res, {1, 1, 1, 1}, 1.0});
  }
  TrainConfig cfg;
  cfg.epochs = 60;
  cfg.learning_rate = 0.05;
  cfg.hidden = {32};
  const TrainResult r = train_refinement(train, cfg);
  double before = 0.0, after = 0.0;
  for (const auto& s : held) {
    const auto d = predict_residual(r.net, s.input, 1.0);
    for (std::size_t k = 0; k < 4; k += 2) {
      before += std::hypot(s.residual[k], s.residual[k + 1]);
      after += std::hypot(s.residual[k] - d[k], s.residual[k + 1] - d[k + 1]);
    }
  }
  EXPECT_LT(after, 0.5 * before);
}

TEST(RefinementLoss, GradientClosedForm) {
  const std::vector<double> p{1.0, -2.0, 0.5}, t{0.25, 1.0, 0.5};
  EXPECT_EQ(refinement_loss_grad(p, t), (std::vector<double>{1.5, -6.0, 0.0}));
  EXPECT_EQ(refinement_loss_grad(p, t, std::vector<double>{1.0, 0.0, 1.0}), (std::vector<double>{1.5, 0.0, 0.0}));
  EXPECT_THROW(refinement_loss_grad(p, std::vector<double>{1.0}), Error);
}

// ---- applying residuals

TEST(ApplyRefinement, Examples) {
  Pose p = point_pose(0, 0);
  p.keypoints[0] = {12.0, 7.0, 1};
  p.score = 0.4;
  std::vector<double> delta(2 * kCocoKeypoints, 0.0);
  EXPECT_EQ(apply_refinement(p, delta), p);
  delta[0] = -2.0, delta[1] = 3.0;
  const Pose q = apply_refinement(p, delta);
  EXPECT_EQ(q.keypoints[0], (Keypoint{10.0, 10.0, 1}));
  EXPECT_DOUBLE_EQ(q.score, 0.4);
  try {
    apply_refinement(p, std::vector<double>{1.0});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ShapeError);
  }
}

TEST(ApplyRefinement, ElementwiseOracle) {
  std::mt19937_64 rng(16);
  for (int trial = 0; trial < 50; ++trial) {
    const Pose p = random_pose(rng, 50, 50, 40, 0.3);
    const auto d = random_vec(rng, 2 * kCocoKeypoints, 5.0);
    const Pose q = apply_refinement(p, d);
    for (std::size_t k = 0; k < p.size(); ++k) {
      EXPECT_DOUBLE_EQ(q.keypoints[k].x, p.keypoints[k].x + d[2 * k]);
      EXPECT_DOUBLE_EQ(q.keypoints[k].y, p.keypoints[k].y + d[2 * k + 1]);
      EXPECT_EQ(q.keypoints[k].v, p.keypoints[k].v);
    }
  }
}

// ---- heatmap readout and gated refinement

TEST(HeatmapReadout, RecoversSubCellPeak) {
  Pose gt = point_pose(0, 0);
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> u(60.0, 190.0);
  for (auto& k : gt.keypoints) k = {u(rng), u(rng), 2};
  const SceneMaps maps = encode_scene(std::vector<Pose>{gt}, {256, 256}, CodecConfig{}, std::vector<double>{90.0 * 90.0});
  Pose probe = gt;
  for (auto& k : probe.keypoints) k.x += 1.5, k.y -= 1.0;
  const auto h = heatmap_readout(maps, probe);
  ASSERT_EQ(h.size(), maps.resolutions.size() * kCocoKeypoints * kReadoutPerKeypoint);
  const double unit = residual_unit(probe);
  const std::size_t finest = maps.resolutions.size() - 1;
  for (std::size_t k = 0; k < kCocoKeypoints; ++k) {
    const double* q = &h[(finest * kCocoKeypoints + k) * kReadoutPerKeypoint];
    EXPECT_NEAR(q[2] * unit, -1.5, 0.05);
    EXPECT_NEAR(q[3] * unit, 1.0, 0.05);
  }
  const auto dist = peak_distances(maps, probe);
  for (double d : dist) EXPECT_NEAR(d, std::hypot(1.5, 1.0), 0.05);
}

TEST(RefinePose, NeverMovesExactKeypoints) {
  SynthConfig sc;
  sc.seed = 18;
  const Scene scene = generate_scene(sc);
  const SceneMaps maps = encode_scene(scene, CodecConfig{});
  const Pose& gt = scene.gt_poses[0];
  const std::size_t in = refinement_input(maps, gt).size();
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const Mlp net({in, 2 * kCocoKeypoints}, OutputActivation::Identity, seed, 3.0);
    const Pose refined = refine_pose(maps, gt, net);
    for (std::size_t k = 0; k < gt.size(); ++k) {
      if (!gt.keypoints[k].labeled()) continue;
      EXPECT_EQ(refined.keypoints[k], gt.keypoints[k]);
    }
  }
}
