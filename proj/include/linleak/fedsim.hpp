#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "linleak/nn.hpp"
#include "linleak/rng.hpp"
#include "linleak/tensor.hpp"

namespace linleak {

enum class FedMode { kSgd, kAvg };

struct DpConfig {
  bool enabled = false;
  double clip = 1.0;   // per-sample l2 bound C
  double sigma = 0.0;  // noise multiplier; stddev is sigma * clip
};

struct ClientState {
  std::size_t id = 0;
  Tensor data;
  std::vector<int> labels;
  std::size_t local_iters = 1;  // fedavg only
  double local_lr = 0.1;        // fedavg only
  double weight = 1.0;          // relative aggregation weight, server-normalized
};

/// Normalized aggregation weights for a client roster, in roster order.
inline std::vector<double> normalized_weights(const std::vector<ClientState>& clients) {
  if (clients.empty()) throw std::invalid_argument("normalized_weights: no clients");
  double total = 0.0;
  for (const auto& c : clients) {
    if (!(c.weight > 0.0))
      throw std::invalid_argument("normalized_weights: weights must be > 0");
    total += c.weight;
  }
  std::vector<double> w;
  w.reserve(clients.size());
  for (const auto& c : clients) w.push_back(c.weight / total);
  return w;
}

enum class UpdateKind { kGradient, kParameters };

struct ClientUpdate {
  UpdateKind kind = UpdateKind::kGradient;
  GradientSet payload;
  std::size_t sample_count = 0;
};

/// Clip each per-sample gradient to l2 norm <= clip (min(1, C/||g||)
/// scaling over all parameters jointly), sum them in ascending sample
/// order, then add N(0, (sigma*clip)^2) noise per coordinate. Returns
/// the noisy sum; the caller owns the 1/m normalisation.
inline GradientSet dp_clip_and_noise(const std::vector<GradientSet>& per_sample,
                                     const DpConfig& dp, Rng& rng) {
  if (per_sample.empty())
    throw std::invalid_argument("dp_clip_and_noise: no per-sample gradients");
  if (!(dp.clip > 0.0)) throw std::invalid_argument("dp_clip_and_noise: clip must be > 0");
  if (dp.sigma < 0.0) throw std::invalid_argument("dp_clip_and_noise: sigma must be >= 0");

  GradientSet acc = per_sample.front();
  acc.scale(0.0);
  for (const auto& g : per_sample) {
    if (!g.same_shape(acc)) throw std::invalid_argument("dp_clip_and_noise: shape mismatch");
    if (!g.all_finite()) throw std::invalid_argument("dp_clip_and_noise: non-finite gradient");
    double norm = g.l2_norm();
    double scale = norm > dp.clip ? dp.clip / norm : 1.0;
    acc.add_scaled(g, scale);
  }
  if (dp.sigma > 0.0) {
    const double stddev = dp.sigma * dp.clip;
    for (auto& layer : acc.layers) {
      for (double& v : layer.weight.data) v += rng.normal(0.0, stddev);
      for (double& v : layer.bias.data) v += rng.normal(0.0, stddev);
    }
  }
  return acc;
}

namespace detail {

// Per-sample gradients of the mean batch loss, rescaled to sum basis
// (each entry is the gradient of that sample's own loss).
inline std::vector<GradientSet> per_sample_gradients(const Model& m, const Tensor& data,
                                                     const std::vector<int>& labels) {
  std::vector<GradientSet> out;
  out.reserve(data.rows);
  for (std::size_t s = 0; s < data.rows; ++s) {
    Tensor row = data.row(s);
    auto t = forward(m, row);
    auto loss = loss_softmax_ce(t.output(), {labels[s]});
    out.push_back(backward(m, t, loss.grad).grads);
  }
  return out;
}

inline GradientSet batch_gradient(const Model& m, const Tensor& data,
                                  const std::vector<int>& labels) {
  auto t = forward(m, data);
  auto loss = loss_softmax_ce(t.output(), labels);
  return backward(m, t, loss.grad).grads;
}

}  // namespace detail

/// One client's contribution for the round. kSgd sends the gradient of
/// its mean batch loss on the broadcast parameters; kAvg runs local_iters
/// full-batch SGD steps and sends the resulting parameters. With dp
/// enabled, every gradient (the payload in kSgd, each local step in
/// kAvg) is the clipped noisy per-sample sum divided by the batch size.
inline ClientUpdate client_round(const Model& broadcast, const ClientState& client,
                                 FedMode mode, const DpConfig& dp, Rng& noise_rng) {
  require_valid(broadcast, "client_round");
  if (client.data.rows == 0) throw std::invalid_argument("client_round: empty client batch");
  if (client.labels.size() != client.data.rows)
    throw std::invalid_argument("client_round: " + std::to_string(client.labels.size()) +
                                " labels for " + std::to_string(client.data.rows) +
                                " samples");
  if (!client.data.all_finite())
    throw std::invalid_argument("client_round: non-finite client data");

  const double inv_m = 1.0 / static_cast<double>(client.data.rows);
  auto mean_gradient = [&](const Model& m) {
    if (!dp.enabled) return detail::batch_gradient(m, client.data, client.labels);
    auto per_sample = detail::per_sample_gradients(m, client.data, client.labels);
    GradientSet g = dp_clip_and_noise(per_sample, dp, noise_rng);
    g.scale(inv_m);
    return g;
  };

  ClientUpdate up;
  up.sample_count = client.data.rows;
  if (mode == FedMode::kSgd) {
    up.kind = UpdateKind::kGradient;
    up.payload = mean_gradient(broadcast);
    return up;
  }

  if (client.local_iters == 0)
    throw std::invalid_argument("client_round: fedavg needs local_iters >= 1");
  Model local = broadcast;
  for (std::size_t it = 0; it < client.local_iters; ++it)
    sgd_step(local, mean_gradient(local), client.local_lr);
  up.kind = UpdateKind::kParameters;
  up.payload = parameters_of(local);
  return up;
}

/// The pairwise mask for clients (i, j), i < j, regenerable by anyone
/// holding the round generator: stream child(i * n + j), coordinates
/// uniform in [-bound, bound] in layer declaration order.
inline GradientSet pair_mask(const GradientSet& shape_like, const Rng& round_rng,
                             std::size_t i, std::size_t j, std::size_t n, double bound) {
  Rng rng = round_rng.child(i * n + j);
  GradientSet mask = shape_like;
  for (auto& layer : mask.layers) {
    for (double& v : layer.weight.data) v = rng.uniform(-bound, bound);
    for (double& v : layer.bias.data) v = rng.uniform(-bound, bound);
  }
  return mask;
}

struct SecureAggregationResult {
  std::vector<ClientUpdate> masked;  // payloads with masks applied
  GradientSet aggregate;             // plain ascending sum of the masked payloads
  double mask_bound = 0.0;
};

/// Functional model of pairwise additive masking: client i ships
/// delta_i + sum_{j>i} s_ij - sum_{j<i} s_ji. Every s_ij enters one
/// payload with + and one with -, so the mask multiset sums to zero and
/// the aggregate of the masked payloads equals the aggregate of the raw
/// ones up to floating-point cancellation noise. Masks are uniform in
/// [-B, B] with B = bound_factor * max |delta|, which makes any single
/// masked payload statistically useless to the server.
inline SecureAggregationResult secure_aggregate(const std::vector<ClientUpdate>& updates,
                                                const Rng& round_rng,
                                                double bound_factor = 1e3) {
  const std::size_t n = updates.size();
  if (n < 2)
    throw std::invalid_argument("secure_aggregate: need at least 2 clients, got " +
                                std::to_string(n));
  if (!(bound_factor > 0.0))
    throw std::invalid_argument("secure_aggregate: bound_factor must be > 0");
  for (std::size_t i = 1; i < n; ++i) {
    if (!updates[i].payload.same_shape(updates[0].payload))
      throw std::invalid_argument("secure_aggregate: payload shape mismatch at client " +
                                  std::to_string(i));
    if (updates[i].kind != updates[0].kind)
      throw std::invalid_argument("secure_aggregate: mixed update kinds");
  }

  double max_abs = 0.0;
  for (const auto& u : updates) max_abs = std::max(max_abs, u.payload.max_abs());
  SecureAggregationResult res;
  res.mask_bound = bound_factor * (max_abs > 0.0 ? max_abs : 1.0);

  res.masked = updates;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      GradientSet s = pair_mask(updates[0].payload, round_rng, i, j, n, res.mask_bound);
      res.masked[i].payload.add_scaled(s, 1.0);
      res.masked[j].payload.add_scaled(s, -1.0);
    }
  res.aggregate = res.masked[0].payload;
  for (std::size_t i = 1; i < n; ++i) res.aggregate.add_scaled(res.masked[i].payload, 1.0);
  return res;
}

/// Weighted sum of payloads in ascending client order. Weights default
/// to 1/n when omitted.
inline GradientSet server_aggregate(const std::vector<ClientUpdate>& updates,
                                    std::vector<double> weights = {}) {
  if (updates.empty()) throw std::invalid_argument("server_aggregate: no updates");
  if (weights.empty())
    weights.assign(updates.size(), 1.0 / static_cast<double>(updates.size()));
  if (weights.size() != updates.size())
    throw std::invalid_argument("server_aggregate: " + std::to_string(weights.size()) +
                                " weights for " + std::to_string(updates.size()) +
                                " updates");
  GradientSet agg = updates[0].payload;
  agg.scale(weights[0]);
  for (std::size_t i = 1; i < updates.size(); ++i) {
    if (!updates[i].payload.same_shape(agg))
      throw std::invalid_argument("server_aggregate: shape mismatch at client " +
                                  std::to_string(i));
    agg.add_scaled(updates[i].payload, weights[i]);
  }
  return agg;
}

/// FedAVG gradient approximation: broadcast parameters minus aggregated
/// parameters. With one local step this equals local_lr times the
/// aggregated gradient exactly, and the leak's ratio recovery is scale
/// invariant, so the lr never needs to be known.
inline GradientSet approx_aggregated_gradient(const Model& broadcast,
                                              const GradientSet& aggregated_params) {
  GradientSet diff = parameters_of(broadcast);
  if (!diff.same_shape(aggregated_params))
    throw std::invalid_argument("approx_aggregated_gradient: shape mismatch");
  diff.add_scaled(aggregated_params, -1.0);
  return diff;
}

/// Server-side application of a round: gradient aggregates take one SGD
/// step at the global lr, parameter aggregates replace the model (the
/// lr is ignored for those, the clients already applied theirs).
inline void apply_aggregate(Model& m, const GradientSet& agg, UpdateKind kind,
                            double global_lr) {
  if (kind == UpdateKind::kGradient) {
    sgd_step(m, agg, global_lr);
    return;
  }
  if (!parameters_of(m).same_shape(agg))
    throw std::invalid_argument("apply_aggregate: shape mismatch");
  for (std::size_t l = 0; l < m.layers.size(); ++l) {
    m.layers[l].weight = agg.layers[l].weight;
    m.layers[l].bias = agg.layers[l].bias;
  }
}

/// Same difference restricted to layers [first_layer, first_layer + layer_count).
inline GradientSet approx_aggregated_gradient(const Model& broadcast,
                                              const GradientSet& aggregated_params,
                                              std::size_t first_layer,
                                              std::size_t layer_count) {
  GradientSet full = approx_aggregated_gradient(broadcast, aggregated_params);
  if (first_layer + layer_count > full.layers.size())
    throw std::invalid_argument("approx_aggregated_gradient: layer range out of bounds");
  GradientSet out;
  out.layers.assign(full.layers.begin() + static_cast<std::ptrdiff_t>(first_layer),
                    full.layers.begin() + static_cast<std::ptrdiff_t>(first_layer + layer_count));
  return out;
}

}  // namespace linleak
