#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "posekit/codec.hpp"
#include "posekit/grouping.hpp"

namespace posekit {

enum class OutputActivation { Identity, Sigmoid };
std::string_view to_string(OutputActivation a);

/// Fully connected network: ReLU on hidden layers, `output` on the last.
/// Parameters are stored as 32-bit floats; arithmetic runs in double.
class Mlp {
 public:
  struct Layer {
    std::size_t in = 0;
    std::size_t out = 0;
    std::vector<float> weight;  // out x in, row-major
    std::vector<float> bias;    // out

    friend bool operator==(const Layer&, const Layer&) = default;
  };

  /// Activations kept by forward() for the backward pass.
  struct Trace {
    std::vector<std::vector<double>> inputs;  // input of each layer
    std::vector<std::vector<double>> pre;     // affine output of each layer
    std::vector<double> output;
  };

  struct Gradients {
    std::vector<std::vector<double>> weight;
    std::vector<std::vector<double>> bias;

    void clear();
    void accumulate(const Gradients& other);
    double max_abs() const;
  };

  Mlp() = default;
  /// Weights uniform in [-s, s], s = init_scale / sqrt(fan_in); biases zero.
  Mlp(std::vector<std::size_t> layer_dims, OutputActivation output, std::uint64_t seed, double init_scale = 1.0);
  Mlp(std::vector<Layer> layers, OutputActivation output, std::uint64_t seed);

  std::size_t input_dim() const { return layers_.empty() ? 0 : layers_.front().in; }
  std::size_t output_dim() const { return layers_.empty() ? 0 : layers_.back().out; }
  std::vector<std::size_t> layer_dims() const;
  OutputActivation output_activation() const { return output_; }
  std::uint64_t seed() const { return seed_; }

  std::vector<Layer>& layers() { return layers_; }
  const std::vector<Layer>& layers() const { return layers_; }

  std::vector<double> forward(std::span<const double> x) const;
  std::vector<double> forward(std::span<const double> x, Trace& trace) const;

  /// Reverse-mode gradients of a loss whose derivative with respect to the
  /// network output is `loss_grad`.
  Gradients backward(const Trace& trace, std::span<const double> loss_grad) const;
  Gradients backward(std::span<const double> x, std::span<const double> loss_grad) const;

  Gradients zero_gradients() const;
  /// params -= step * grads
  void apply(const Gradients& grads, double step);
  /// Multiplies every weight (not bias) by `factor`; used for L2 decay.
  void scale_weights(double factor);

  friend bool operator==(const Mlp& a, const Mlp& b) {
    return a.output_ == b.output_ && a.layers_ == b.layers_;
  }

 private:
  std::vector<Layer> layers_;
  OutputActivation output_ = OutputActivation::Identity;
  std::uint64_t seed_ = 0;
};

/// Cross-scale sample of one pose: feature-map reads ordered
/// (resolution, keypoint, channel), then one heatmap value per keypoint
/// from the finest resolution.
struct SampledFeature {
  std::vector<double> values;
};

SampledFeature sample_features(const SceneMaps& maps, const Pose& pose);
std::size_t sampled_feature_dim(const SceneMaps& maps);
std::size_t sampled_feature_dim(std::size_t resolutions, std::size_t channels, std::size_t keypoints);

/// Per resolution and keypoint: the heatmap value at the keypoint, the value
/// of the nearest local maximum, and that maximum's sub-cell position
/// relative to the keypoint in residual units.
inline constexpr std::size_t kReadoutPerKeypoint = 4;
std::vector<double> heatmap_readout(const SceneMaps& maps, const Pose& pose);

/// Reference frame used to normalize pose coordinates for refinement.
struct PoseFrame {
  Point origin;
  double scale = 1.0;
};
PoseFrame pose_frame(const Pose& pose);

/// Unit of refinement targets and heatmap-readout offsets: a small
/// fraction of the frame scale, so typical residuals are of order one.
inline constexpr double kResidualFraction = 0.05;
double residual_unit(const Pose& pose);

/// SampledFeature, frame-normalized coordinates, log scale and the heatmap
/// readout, concatenated.
std::vector<double> refinement_input(const SceneMaps& maps, const Pose& pose);

struct TrainConfig {
  double learning_rate = 0.05;
  std::size_t epochs = 40;
  std::size_t batch_size = 32;
  std::uint64_t seed = 7;
  double weight_init_scale = 1.0;
  std::vector<std::size_t> hidden{64, 32};
  double weight_decay = 0.0;  // L2 coefficient on weights
};

struct TrainResult {
  Mlp net;
  std::vector<double> epoch_loss;  // mean training loss per epoch, before update 0 at index 0
};

struct ConfidenceSample {
  std::vector<double> input;
  double target = 0.0;  // OKS against the closest ground truth
};

struct SimilarityPair {
  std::vector<double> a;
  std::vector<double> b;
  int label = 1;  // +1 same person, -1 different persons
};

struct RefinementSample {
  std::vector<double> input;
  std::vector<double> residual;  // ground truth minus prediction, pixels, 2N
  std::vector<double> mask;      // 1 where the ground-truth keypoint is labeled, 2N
  double scale = 1.0;            // regression target is residual / scale
};

/// Minimizes mean (target - MLP(x))^2 with a sigmoid head.
TrainResult train_confidence(std::span<const ConfidenceSample> data, const TrainConfig& cfg);

/// Embedding head trained with the cosine-embedding loss:
/// 1 - cos for positives, max(0, cos - margin) for negatives.
TrainResult train_similarity(std::span<const SimilarityPair> pairs, const TrainConfig& cfg,
                             std::size_t embedding_dim = 32, double margin = 0.0);

/// Minimizes the masked squared residual error |P_delta - (P_gt - P)|^2.
TrainResult train_refinement(std::span<const RefinementSample> data, const TrainConfig& cfg);

/// Loss of one pair and its gradients with respect to both raw embeddings.
struct CosineLoss {
  double loss = 0.0;
  std::vector<double> grad_a;
  std::vector<double> grad_b;
};
CosineLoss cosine_embedding_loss(std::span<const double> ea, std::span<const double> eb, int label,
                                 double margin = 0.0);

/// d/dP_delta of |P_delta - target|^2 (masked coordinates contribute zero).
std::vector<double> refinement_loss_grad(std::span<const double> p_delta, std::span<const double> target,
                                         std::span<const double> mask = {});

double predict_confidence(const Mlp& net, std::span<const double> input);
PoseFeature embed(const Mlp& net, std::span<const double> input);
/// Residual in pixels for a pose with the given frame scale.
std::vector<double> predict_residual(const Mlp& net, std::span<const double> input, double scale);

/// Adds p_delta (x0, y0, x1, y1, ...) to the keypoints; everything else is kept.
Pose apply_refinement(const Pose& p, std::span<const double> p_delta);

/// Per keypoint: pixel distance to the sub-cell heatmap peak found by the
/// readout, minimized over resolutions; infinity where no peak is in reach.
std::vector<double> peak_distances(const SceneMaps& maps, const Pose& pose);

/// P + P_delta, keeping each moved keypoint only if it ends closer to its
/// heatmap peak than it started. Exact keypoints are therefore never moved.
Pose refine_pose(const SceneMaps& maps, const Pose& p, const Mlp& net);

}  // namespace posekit
