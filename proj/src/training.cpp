#include <algorithm>
#include <cmath>
#include <numeric>

#include "posekit/log.hpp"
#include "posekit/nets.hpp"
#include "posekit/rng.hpp"

namespace posekit {

namespace {

std::vector<std::size_t> dims_for(std::size_t in, const std::vector<std::size_t>& hidden, std::size_t out) {
  std::vector<std::size_t> dims{in};
  dims.insert(dims.end(), hidden.begin(), hidden.end());
  dims.push_back(out);
  return dims;
}

void check_config(const TrainConfig& cfg) {
  if (!(cfg.learning_rate > 0.0) || cfg.epochs < 1 || cfg.batch_size < 1 || cfg.weight_decay < 0.0) {
    throw Error(ErrorCode::InvalidConfig, "training needs learning_rate > 0, epochs >= 1, batch_size >= 1");
  }
}

// Mini-batch gradient descent. `step(net, i, grads)` returns the loss of
// sample i and adds its parameter gradients into grads.
template <typename SampleStep>
TrainResult descend(Mlp net, std::size_t n, const TrainConfig& cfg, SampleStep&& step) {
  TrainResult result;
  Mlp::Gradients scratch = net.zero_gradients();
  double initial = 0.0;
  for (std::size_t i = 0; i < n; ++i) initial += step(net, i, scratch);
  result.epoch_loss.push_back(initial / static_cast<double>(n));

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(mix_seed(cfg.seed, 0x5eed));
  Mlp::Gradients batch = net.zero_gradients();
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double total = 0.0;
    for (std::size_t start = 0; start < n; start += cfg.batch_size) {
      const std::size_t end = std::min(n, start + cfg.batch_size);
      batch.clear();
      for (std::size_t j = start; j < end; ++j) total += step(net, order[j], batch);
      net.apply(batch, cfg.learning_rate / static_cast<double>(end - start));
      if (cfg.weight_decay > 0.0) net.scale_weights(1.0 - cfg.learning_rate * cfg.weight_decay);
    }
    result.epoch_loss.push_back(total / static_cast<double>(n));
    log::debug("epoch ", epoch + 1, "/", cfg.epochs, " loss ", result.epoch_loss.back());
  }
  result.net = std::move(net);
  return result;
}

}  // namespace

TrainResult train_confidence(std::span<const ConfidenceSample> data, const TrainConfig& cfg) {
  if (data.empty()) throw Error(ErrorCode::EmptyDataset, "confidence dataset is empty");
  check_config(cfg);
  const std::size_t in = data.front().input.size();
  Mlp net(dims_for(in, cfg.hidden, 1), OutputActivation::Sigmoid, cfg.seed, cfg.weight_init_scale);
  return descend(std::move(net), data.size(), cfg, [&](const Mlp& m, std::size_t i, Mlp::Gradients& g) {
    Mlp::Trace trace;
    const double y = m.forward(data[i].input, trace)[0];
    const double err = y - data[i].target;
    const double grad = 2.0 * err;
    g.accumulate(m.backward(trace, std::span<const double>(&grad, 1)));
    return err * err;
  });
}

CosineLoss cosine_embedding_loss(std::span<const double> ea, std::span<const double> eb, int label, double margin) {
  if (ea.size() != eb.size()) throw Error(ErrorCode::ShapeError, "embedding sizes differ");
  constexpr double eps = 1e-12;
  double na = 0.0;
  double nb = 0.0;
  double dot = 0.0;
  for (std::size_t i = 0; i < ea.size(); ++i) {
    na += ea[i] * ea[i];
    nb += eb[i] * eb[i];
    dot += ea[i] * eb[i];
  }
  na = std::sqrt(na) + eps;
  nb = std::sqrt(nb) + eps;
  const double c = dot / (na * nb);
  CosineLoss out;
  double dl_dc = 0.0;
  if (label > 0) {
    out.loss = 1.0 - c;
    dl_dc = -1.0;
  } else if (c > margin) {
    out.loss = c - margin;
    dl_dc = 1.0;
  }
  out.grad_a.resize(ea.size());
  out.grad_b.resize(eb.size());
  for (std::size_t i = 0; i < ea.size(); ++i) {
    const double u = ea[i] / na;
    const double w = eb[i] / nb;
    out.grad_a[i] = dl_dc * (w - c * u) / na;
    out.grad_b[i] = dl_dc * (u - c * w) / nb;
  }
  return out;
}

TrainResult train_similarity(std::span<const SimilarityPair> pairs, const TrainConfig& cfg, std::size_t embedding_dim,
                             double margin) {
  if (pairs.empty()) throw Error(ErrorCode::EmptyDataset, "similarity dataset is empty");
  check_config(cfg);
  const std::size_t in = pairs.front().a.size();
  Mlp net(dims_for(in, cfg.hidden, embedding_dim), OutputActivation::Identity, cfg.seed, cfg.weight_init_scale);
  return descend(std::move(net), pairs.size(), cfg, [&](const Mlp& m, std::size_t i, Mlp::Gradients& g) {
    Mlp::Trace ta;
    Mlp::Trace tb;
    const auto ea = m.forward(pairs[i].a, ta);
    const auto eb = m.forward(pairs[i].b, tb);
    const CosineLoss l = cosine_embedding_loss(ea, eb, pairs[i].label, margin);
    if (l.loss > 0.0) {
      g.accumulate(m.backward(ta, l.grad_a));
      g.accumulate(m.backward(tb, l.grad_b));
    }
    return l.loss;
  });
}

std::vector<double> refinement_loss_grad(std::span<const double> p_delta, std::span<const double> target,
                                         std::span<const double> mask) {
  if (p_delta.size() != target.size() || (!mask.empty() && mask.size() != target.size())) {
    throw Error(ErrorCode::ShapeError, "refinement output, target and mask sizes differ");
  }
  std::vector<double> g(p_delta.size());
  for (std::size_t i = 0; i < g.size(); ++i) {
    g[i] = 2.0 * (p_delta[i] - target[i]) * (mask.empty() ? 1.0 : mask[i]);
  }
  return g;
}

TrainResult train_refinement(std::span<const RefinementSample> data, const TrainConfig& cfg) {
  if (data.empty()) throw Error(ErrorCode::EmptyDataset, "refinement dataset is empty");
  check_config(cfg);
  const std::size_t in = data.front().input.size();
  const std::size_t out = data.front().residual.size();
  Mlp net(dims_for(in, cfg.hidden, out), OutputActivation::Identity, cfg.seed, cfg.weight_init_scale);
  return descend(std::move(net), data.size(), cfg, [&](const Mlp& m, std::size_t i, Mlp::Gradients& g) {
    const RefinementSample& s = data[i];
    if (s.residual.size() != out || s.mask.size() != out || !(s.scale > 0.0)) {
      throw Error(ErrorCode::ShapeError, "refinement sample " + std::to_string(i) + " is malformed");
    }
    Mlp::Trace trace;
    const auto y = m.forward(s.input, trace);
    std::vector<double> target(out);
    for (std::size_t k = 0; k < out; ++k) target[k] = s.residual[k] / s.scale;
    const auto grad = refinement_loss_grad(y, target, s.mask);
    double loss = 0.0;
    for (std::size_t k = 0; k < out; ++k) loss += s.mask[k] * (y[k] - target[k]) * (y[k] - target[k]);
    g.accumulate(m.backward(trace, grad));
    return loss;
  });
}

double predict_confidence(const Mlp& net, std::span<const double> input) {
  return net.forward(input).at(0);
}

PoseFeature embed(const Mlp& net, std::span<const double> input) {
  return PoseFeature::normalized(net.forward(input));
}

std::vector<double> predict_residual(const Mlp& net, std::span<const double> input, double scale) {
  auto y = net.forward(input);
  for (double& v : y) v *= scale;
  return y;
}

}  // namespace posekit
