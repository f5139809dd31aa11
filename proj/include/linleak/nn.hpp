#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "linleak/rng.hpp"
#include "linleak/tensor.hpp"

namespace linleak {

enum class Activation { kIdentity, kRelu };

// ReLU with the 0-input subgradient fixed to 0, so activation masks are
// a pure function of the sign of the pre-activation.
inline double activate(Activation a, double x) {
  return a == Activation::kRelu ? (x > 0.0 ? x : 0.0) : x;
}

inline double activate_grad(Activation a, double pre) {
  return a == Activation::kRelu ? (pre > 0.0 ? 1.0 : 0.0) : 1.0;
}

/// Fully connected layer: y = act(x W^T + b). weight is out x in,
/// bias is 1 x out.
struct DenseLayer {
  Tensor weight;
  Tensor bias;
  Activation act = Activation::kIdentity;

  std::size_t in_dim() const { return weight.cols; }
  std::size_t out_dim() const { return weight.rows; }
};

struct Model {
  std::vector<DenseLayer> layers;

  std::size_t input_dim() const { return layers.front().in_dim(); }
  std::size_t output_dim() const { return layers.back().out_dim(); }
};

inline void require_valid(const Model& m, const char* where) {
  if (m.layers.empty()) throw std::invalid_argument(std::string(where) + ": empty model");
  for (std::size_t l = 0; l < m.layers.size(); ++l) {
    const DenseLayer& lay = m.layers[l];
    if (lay.weight.rows == 0 || lay.weight.cols == 0)
      throw std::invalid_argument(std::string(where) + ": layer " + std::to_string(l) +
                                  " has empty weight");
    if (lay.bias.rows != 1 || lay.bias.cols != lay.weight.rows)
      throw std::invalid_argument(std::string(where) + ": layer " + std::to_string(l) +
                                  " bias shape " + lay.bias.shape_str());
    if (l > 0 && m.layers[l - 1].out_dim() != lay.in_dim())
      throw std::invalid_argument(std::string(where) + ": layer " + std::to_string(l) +
                                  " expects " + std::to_string(lay.in_dim()) +
                                  " inputs, previous layer emits " +
                                  std::to_string(m.layers[l - 1].out_dim()));
  }
}

/// MLP with He-scaled normal weights and zero biases. widths lists every
/// layer width including input; acts has one entry per weight layer.
inline Model make_mlp(const std::vector<std::size_t>& widths,
                      const std::vector<Activation>& acts, Rng& rng) {
  if (widths.size() < 2 || acts.size() != widths.size() - 1)
    throw std::invalid_argument("make_mlp: need n+1 widths for n activations");
  Model m;
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    DenseLayer lay;
    lay.weight = Tensor(widths[l + 1], widths[l]);
    lay.bias = Tensor(1, widths[l + 1]);
    lay.act = acts[l];
    double s = std::sqrt(2.0 / static_cast<double>(widths[l]));
    for (double& w : lay.weight.data) w = rng.normal(0.0, s);
    m.layers.push_back(std::move(lay));
  }
  return m;
}

/// Classification head: relu hidden layers with He init, identity final
/// layer with a small init (sigma = 0.02 / fan_in). The small final
/// layer keeps initial logits well below softmax saturation even when
/// the incoming features are large and strongly correlated; saturation
/// would push per-sample gradients toward the empty-bin epsilon and
/// mask occupied bins, and the gradients a large head feeds back into
/// the stem would dominate multi-step local training.
inline Model make_head(const std::vector<std::size_t>& widths, Rng& rng) {
  if (widths.size() < 2) throw std::invalid_argument("make_head: need at least 2 widths");
  Model m;
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    const bool final_layer = l + 2 == widths.size();
    DenseLayer lay;
    lay.weight = Tensor(widths[l + 1], widths[l]);
    lay.bias = Tensor(1, widths[l + 1]);
    lay.act = final_layer ? Activation::kIdentity : Activation::kRelu;
    double s = final_layer ? 0.02 / static_cast<double>(widths[l])
                           : std::sqrt(2.0 / static_cast<double>(widths[l]));
    for (double& w : lay.weight.data) w = rng.normal(0.0, s);
    m.layers.push_back(std::move(lay));
  }
  return m;
}

/// Per-layer parameter gradients, shaped exactly like the model. Also
/// reused as the carrier for parameter snapshots and aggregation payloads,
/// since those share the per-layer (weight, bias) structure.
struct GradientSet {
  struct LayerGrad {
    Tensor weight;
    Tensor bias;
  };
  std::vector<LayerGrad> layers;

  void add_scaled(const GradientSet& o, double c) {
    if (layers.size() != o.layers.size())
      throw std::invalid_argument("GradientSet::add_scaled: layer count mismatch");
    for (std::size_t l = 0; l < layers.size(); ++l) {
      layers[l].weight.add_scaled(o.layers[l].weight, c);
      layers[l].bias.add_scaled(o.layers[l].bias, c);
    }
  }

  void scale(double c) {
    for (auto& l : layers) {
      l.weight.scale(c);
      l.bias.scale(c);
    }
  }

  double max_abs() const {
    double m = 0.0;
    for (const auto& l : layers)
      m = std::max(m, std::max(l.weight.max_abs(), l.bias.max_abs()));
    return m;
  }

  double l2_norm() const {
    double s = 0.0;
    for (const auto& l : layers) {
      for (double v : l.weight.data) s += v * v;
      for (double v : l.bias.data) s += v * v;
    }
    return std::sqrt(s);
  }

  bool all_finite() const {
    for (const auto& l : layers)
      if (!l.weight.all_finite() || !l.bias.all_finite()) return false;
    return true;
  }

  bool same_shape(const GradientSet& o) const {
    if (layers.size() != o.layers.size()) return false;
    for (std::size_t l = 0; l < layers.size(); ++l)
      if (!layers[l].weight.same_shape(o.layers[l].weight) ||
          !layers[l].bias.same_shape(o.layers[l].bias))
        return false;
    return true;
  }
};

inline GradientSet zero_like(const Model& m) {
  GradientSet g;
  for (const auto& lay : m.layers)
    g.layers.push_back({Tensor::zeros(lay.weight.rows, lay.weight.cols),
                        Tensor::zeros(lay.bias.rows, lay.bias.cols)});
  return g;
}

/// Snapshot of the model parameters in GradientSet shape.
inline GradientSet parameters_of(const Model& m) {
  GradientSet g;
  for (const auto& lay : m.layers) g.layers.push_back({lay.weight, lay.bias});
  return g;
}

inline double max_abs_diff(const GradientSet& a, const GradientSet& b) {
  if (a.layers.size() != b.layers.size())
    throw std::invalid_argument("max_abs_diff: layer count mismatch");
  double m = 0.0;
  for (std::size_t l = 0; l < a.layers.size(); ++l) {
    m = std::max(m, max_abs_diff(a.layers[l].weight, b.layers[l].weight));
    m = std::max(m, max_abs_diff(a.layers[l].bias, b.layers[l].bias));
  }
  return m;
}

/// Cached activations from one forward pass. pre[l] and post[l] are the
/// pre- and post-activation batches of layer l; the trace is only valid
/// for the exact (model, input) pair it was produced from.
struct ForwardTrace {
  Tensor input;
  std::vector<Tensor> pre;
  std::vector<Tensor> post;

  const Tensor& output() const { return post.back(); }
};

inline ForwardTrace forward(const Model& m, const Tensor& batch) {
  require_valid(m, "forward");
  if (batch.cols != m.input_dim())
    throw std::invalid_argument("forward: batch is " + batch.shape_str() +
                                ", model expects " + std::to_string(m.input_dim()) +
                                " columns");
  if (batch.rows == 0) throw std::invalid_argument("forward: empty batch");
  ForwardTrace t;
  t.input = batch;
  const Tensor* x = &t.input;
  for (const DenseLayer& lay : m.layers) {
    Tensor pre(batch.rows, lay.out_dim());
    for (std::size_t s = 0; s < batch.rows; ++s)
      for (std::size_t o = 0; o < lay.out_dim(); ++o) {
        double acc = lay.bias.data[o];
        for (std::size_t i = 0; i < lay.in_dim(); ++i)
          acc += (*x)(s, i) * lay.weight(o, i);
        pre(s, o) = acc;
      }
    Tensor post = pre;
    if (lay.act == Activation::kRelu)
      for (double& v : post.data) v = v > 0.0 ? v : 0.0;
    t.pre.push_back(std::move(pre));
    t.post.push_back(std::move(post));
    x = &t.post.back();
  }
  return t;
}

struct BackwardResult {
  GradientSet grads;
  Tensor input_grad;
};

/// Reverse pass over a cached trace. loss_grad holds dL/d(output), one
/// row per sample; parameter gradients come back summed over the batch
/// in ascending sample order (callers own any 1/m normalisation, the
/// loss functions below already fold it into loss_grad).
inline BackwardResult backward(const Model& m, const ForwardTrace& t,
                               const Tensor& loss_grad) {
  require_valid(m, "backward");
  if (t.pre.size() != m.layers.size() || t.post.size() != m.layers.size())
    throw std::invalid_argument("backward: trace has " + std::to_string(t.pre.size()) +
                                " layers, model has " + std::to_string(m.layers.size()));
  for (std::size_t l = 0; l < m.layers.size(); ++l)
    if (t.pre[l].cols != m.layers[l].out_dim() || t.pre[l].rows != t.input.rows)
      throw std::invalid_argument("backward: stale trace at layer " + std::to_string(l) +
                                  " (" + t.pre[l].shape_str() + ")");
  if (loss_grad.rows != t.input.rows || loss_grad.cols != m.output_dim())
    throw std::invalid_argument("backward: loss_grad is " + loss_grad.shape_str() +
                                ", expected " + std::to_string(t.input.rows) + "x" +
                                std::to_string(m.output_dim()));

  const std::size_t n = t.input.rows;
  BackwardResult r;
  r.grads = zero_like(m);
  Tensor delta = loss_grad;
  for (std::size_t li = m.layers.size(); li-- > 0;) {
    const DenseLayer& lay = m.layers[li];
    // delta <- dL/d(pre[li])
    for (std::size_t s = 0; s < n; ++s)
      for (std::size_t o = 0; o < lay.out_dim(); ++o)
        delta(s, o) *= activate_grad(lay.act, t.pre[li](s, o));

    const Tensor& below = li == 0 ? t.input : t.post[li - 1];
    Tensor& gw = r.grads.layers[li].weight;
    Tensor& gb = r.grads.layers[li].bias;
    for (std::size_t o = 0; o < lay.out_dim(); ++o) {
      for (std::size_t i = 0; i < lay.in_dim(); ++i) {
        double acc = 0.0;
        for (std::size_t s = 0; s < n; ++s) acc += delta(s, o) * below(s, i);
        gw(o, i) = acc;
      }
      double accb = 0.0;
      for (std::size_t s = 0; s < n; ++s) accb += delta(s, o);
      gb.data[o] = accb;
    }

    Tensor prev(n, lay.in_dim());
    for (std::size_t s = 0; s < n; ++s)
      for (std::size_t i = 0; i < lay.in_dim(); ++i) {
        double acc = 0.0;
        for (std::size_t o = 0; o < lay.out_dim(); ++o)
          acc += delta(s, o) * lay.weight(o, i);
        prev(s, i) = acc;
      }
    delta = std::move(prev);
  }
  r.input_grad = std::move(delta);
  return r;
}

struct LossResult {
  double value = 0.0;
  Tensor grad;  // dL/d(pred), one row per sample, 1/m already applied
};

/// Mean softmax cross-entropy over the batch, computed through
/// log-sum-exp so saturated logits stay finite.
inline LossResult loss_softmax_ce(const Tensor& logits, const std::vector<int>& labels) {
  if (labels.size() != logits.rows)
    throw std::invalid_argument("loss_softmax_ce: " + std::to_string(labels.size()) +
                                " labels for " + std::to_string(logits.rows) + " rows");
  if (logits.rows == 0) throw std::invalid_argument("loss_softmax_ce: empty batch");
  const std::size_t n = logits.rows, c = logits.cols;
  LossResult r;
  r.grad = Tensor(n, c);
  double total = 0.0;
  for (std::size_t s = 0; s < n; ++s) {
    int y = labels[s];
    if (y < 0 || static_cast<std::size_t>(y) >= c)
      throw std::invalid_argument("loss_softmax_ce: label " + std::to_string(y) +
                                  " out of range for " + std::to_string(c) + " classes");
    double mx = logits(s, 0);
    for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, logits(s, j));
    double sum = 0.0;
    for (std::size_t j = 0; j < c; ++j) sum += std::exp(logits(s, j) - mx);
    double lse = mx + std::log(sum);
    total += lse - logits(s, static_cast<std::size_t>(y));
    for (std::size_t j = 0; j < c; ++j) {
      double p = std::exp(logits(s, j) - lse);
      r.grad(s, j) = (p - (static_cast<std::size_t>(y) == j ? 1.0 : 0.0)) /
                     static_cast<double>(n);
    }
  }
  r.value = total / static_cast<double>(n);
  return r;
}

/// Mean squared error, averaged over every entry of the batch.
inline LossResult loss_mse(const Tensor& pred, const Tensor& target) {
  pred.require_same_shape(target, "loss_mse");
  if (pred.rows == 0) throw std::invalid_argument("loss_mse: empty batch");
  LossResult r;
  r.grad = Tensor(pred.rows, pred.cols);
  double total = 0.0;
  const double inv = 1.0 / static_cast<double>(pred.size());
  for (std::size_t i = 0; i < pred.data.size(); ++i) {
    double d = pred.data[i] - target.data[i];
    total += d * d;
    r.grad.data[i] = 2.0 * d * inv;
  }
  r.value = total * inv;
  return r;
}

/// In-place SGD update theta <- theta - lr * g. Rejects non-finite
/// gradients instead of silently corrupting the model.
inline void sgd_step(Model& m, const GradientSet& g, double lr) {
  if (g.layers.size() != m.layers.size())
    throw std::invalid_argument("sgd_step: gradient layer count mismatch");
  if (!g.all_finite()) throw std::invalid_argument("sgd_step: non-finite gradient");
  for (std::size_t l = 0; l < m.layers.size(); ++l) {
    if (!g.layers[l].weight.same_shape(m.layers[l].weight) ||
        !g.layers[l].bias.same_shape(m.layers[l].bias))
      throw std::invalid_argument("sgd_step: shape mismatch at layer " + std::to_string(l));
    m.layers[l].weight.add_scaled(g.layers[l].weight, -lr);
    m.layers[l].bias.add_scaled(g.layers[l].bias, -lr);
  }
}

}  // namespace linleak
