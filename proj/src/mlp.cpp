#include <algorithm>
#include <cmath>
#include <random>
#include <string>

#include "posekit/nets.hpp"
#include "posekit/rng.hpp"

namespace posekit {

namespace {
constexpr double kSigmoidFloor = 1e-12;
}  // namespace

std::string_view to_string(OutputActivation a) {
  return a == OutputActivation::Sigmoid ? "sigmoid" : "identity";
}

void Mlp::Gradients::clear() {
  for (auto& w : weight) std::fill(w.begin(), w.end(), 0.0);
  for (auto& b : bias) std::fill(b.begin(), b.end(), 0.0);
}

void Mlp::Gradients::accumulate(const Gradients& other) {
  for (std::size_t l = 0; l < weight.size(); ++l) {
    for (std::size_t i = 0; i < weight[l].size(); ++i) weight[l][i] += other.weight[l][i];
    for (std::size_t i = 0; i < bias[l].size(); ++i) bias[l][i] += other.bias[l][i];
  }
}

double Mlp::Gradients::max_abs() const {
  double m = 0.0;
  for (const auto& w : weight) for (double v : w) m = std::max(m, std::abs(v));
  for (const auto& b : bias) for (double v : b) m = std::max(m, std::abs(v));
  return m;
}

Mlp::Mlp(std::vector<std::size_t> dims, OutputActivation output, std::uint64_t seed, double init_scale)
    : output_(output), seed_(seed) {
  if (dims.size() < 2) throw Error(ErrorCode::ShapeError, "an MLP needs at least input and output dims");
  Rng rng(seed);
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    if (dims[l] == 0 || dims[l + 1] == 0) throw Error(ErrorCode::ShapeError, "layer dims must be positive");
    Layer layer;
    layer.in = dims[l];
    layer.out = dims[l + 1];
    const double s = init_scale / std::sqrt(static_cast<double>(layer.in));
    std::uniform_real_distribution<double> uni(-s, s);
    layer.weight.resize(layer.in * layer.out);
    for (float& w : layer.weight) w = static_cast<float>(uni(rng));
    layer.bias.assign(layer.out, 0.0f);
    layers_.push_back(std::move(layer));
  }
}

Mlp::Mlp(std::vector<Layer> layers, OutputActivation output, std::uint64_t seed)
    : layers_(std::move(layers)), output_(output), seed_(seed) {
  if (layers_.empty()) throw Error(ErrorCode::ShapeError, "an MLP needs at least one layer");
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const Layer& layer = layers_[l];
    if (layer.weight.size() != layer.in * layer.out || layer.bias.size() != layer.out) {
      throw Error(ErrorCode::ShapeError, "layer " + std::to_string(l) + " parameter sizes are inconsistent");
    }
    if (l > 0 && layers_[l - 1].out != layer.in) {
      throw Error(ErrorCode::ShapeError, "layer " + std::to_string(l) + " input does not match previous output");
    }
  }
}

std::vector<std::size_t> Mlp::layer_dims() const {
  std::vector<std::size_t> dims;
  if (layers_.empty()) return dims;
  dims.push_back(layers_.front().in);
  for (const Layer& l : layers_) dims.push_back(l.out);
  return dims;
}

std::vector<double> Mlp::forward(std::span<const double> x) const {
  Trace trace;
  return forward(x, trace);
}

std::vector<double> Mlp::forward(std::span<const double> x, Trace& trace) const {
  if (x.size() != input_dim()) {
    throw Error(ErrorCode::ShapeError,
                "input has " + std::to_string(x.size()) + " values, network expects " + std::to_string(input_dim()));
  }
  trace.inputs.resize(layers_.size());
  trace.pre.resize(layers_.size());
  std::vector<double> a(x.begin(), x.end());
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const Layer& layer = layers_[l];
    std::vector<double> z(layer.out);
    for (std::size_t o = 0; o < layer.out; ++o) {
      const float* row = layer.weight.data() + o * layer.in;
      double acc = layer.bias[o];
      for (std::size_t i = 0; i < layer.in; ++i) acc += static_cast<double>(row[i]) * a[i];
      z[o] = acc;
    }
    trace.inputs[l] = std::move(a);
    const bool last = l + 1 == layers_.size();
    a.resize(layer.out);
    for (std::size_t o = 0; o < layer.out; ++o) {
      if (!last) {
        a[o] = z[o] > 0.0 ? z[o] : 0.0;
      } else if (output_ == OutputActivation::Sigmoid) {
        // Kept strictly inside (0, 1); plain double sigmoid saturates past |z| ~ 37.
        a[o] = std::clamp(1.0 / (1.0 + std::exp(-z[o])), kSigmoidFloor, 1.0 - kSigmoidFloor);
      } else {
        a[o] = z[o];
      }
    }
    trace.pre[l] = std::move(z);
  }
  trace.output = a;
  return a;
}

Mlp::Gradients Mlp::zero_gradients() const {
  Gradients g;
  for (const Layer& l : layers_) {
    g.weight.emplace_back(l.weight.size(), 0.0);
    g.bias.emplace_back(l.bias.size(), 0.0);
  }
  return g;
}

Mlp::Gradients Mlp::backward(const Trace& trace, std::span<const double> loss_grad) const {
  if (loss_grad.size() != output_dim() || trace.pre.size() != layers_.size()) {
    throw Error(ErrorCode::ShapeError, "loss gradient does not match the network output");
  }
  Gradients g = zero_gradients();
  // delta = dLoss/dz for the current layer
  std::vector<double> delta(loss_grad.begin(), loss_grad.end());
  if (output_ == OutputActivation::Sigmoid) {
    for (std::size_t o = 0; o < delta.size(); ++o) {
      const double s = trace.output[o];
      delta[o] *= s * (1.0 - s);
    }
  }
  for (std::size_t l = layers_.size(); l-- > 0;) {
    const Layer& layer = layers_[l];
    const std::vector<double>& in = trace.inputs[l];
    auto& gw = g.weight[l];
    for (std::size_t o = 0; o < layer.out; ++o) {
      g.bias[l][o] = delta[o];
      if (delta[o] == 0.0) continue;
      double* row = gw.data() + o * layer.in;
      for (std::size_t i = 0; i < layer.in; ++i) row[i] = delta[o] * in[i];
    }
    if (l == 0) break;
    std::vector<double> prev(layer.in, 0.0);
    for (std::size_t o = 0; o < layer.out; ++o) {
      if (delta[o] == 0.0) continue;
      const float* row = layer.weight.data() + o * layer.in;
      for (std::size_t i = 0; i < layer.in; ++i) prev[i] += static_cast<double>(row[i]) * delta[o];
    }
    const std::vector<double>& z = trace.pre[l - 1];
    for (std::size_t i = 0; i < prev.size(); ++i) {
      if (z[i] <= 0.0) prev[i] = 0.0;
    }
    delta = std::move(prev);
  }
  return g;
}

Mlp::Gradients Mlp::backward(std::span<const double> x, std::span<const double> loss_grad) const {
  Trace trace;
  forward(x, trace);
  return backward(trace, loss_grad);
}

void Mlp::apply(const Gradients& grads, double step) {
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    Layer& layer = layers_[l];
    for (std::size_t i = 0; i < layer.weight.size(); ++i) {
      layer.weight[i] = static_cast<float>(layer.weight[i] - step * grads.weight[l][i]);
    }
    for (std::size_t i = 0; i < layer.bias.size(); ++i) {
      layer.bias[i] = static_cast<float>(layer.bias[i] - step * grads.bias[l][i]);
    }
  }
}

void Mlp::scale_weights(double factor) {
  for (Layer& layer : layers_) {
    for (float& w : layer.weight) w = static_cast<float>(w * factor);
  }
}

}  // namespace posekit
