#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <tuple>
#include <vector>

#include "linleak/autoencoder.hpp"
#include "linleak/dataset.hpp"
#include "linleak/fedsim.hpp"
#include "linleak/leakage.hpp"
#include "linleak/nn.hpp"
#include "linleak/rng.hpp"
#include "linleak/tensor.hpp"

namespace linleak {

enum class MatchPolicy { kGreedy, kNearest };

struct AttackPlan {
  std::vector<std::size_t> encoder_hidden{64};
  std::size_t latent_dim = 16;  // d, also the surrogate bottleneck
  std::size_t leak_width = 128; // k, bin count
  std::size_t leak_out = 32;    // o, second leak layer width
  std::vector<std::size_t> head_hidden{};
  std::size_t num_classes = 4;

  AeMode ae_mode = AeMode::kPlain;
  double beta = 1e-3;
  TrainConfig surrogate{};  // surrogate.seed is overridden by seed
  double w2_row_value = 1.0;
  double head_logit_std = 0.0;  // > 0: rescale the head to this aux logit spread
  double latent_scale = 1.0;    // latent basis rescale applied to the surrogate

  FedMode mode = FedMode::kSgd;
  DpConfig dp{};
  std::size_t clients = 4;
  std::size_t local_iters = 1;  // fedavg only
  double local_lr = 0.1;        // fedavg only
  bool use_secure_aggregation = true;

  double th_db = 18.0;
  MatchPolicy match_policy = MatchPolicy::kGreedy;
  std::uint64_t seed = 1;
};

struct PreparedAttack {
  AutoencoderPair surrogate;
  AdversarialModel adv;
  EmpiricalCdf cdf;  // auxiliary brightness distribution behind the thresholds
  TrainResult surrogate_training;
};

/// Assembly half of the offline phase, reusing an already trained
/// surrogate: fit the brightness CDF on the auxiliary set, craft the
/// leak module, and top with the benign random head. Useful on its own
/// when one surrogate serves several leak or head parameterisations.
inline PreparedAttack prepare_with_surrogate(const AttackPlan& plan,
                                             const Tensor& aux_images,
                                             AutoencoderPair surrogate,
                                             TrainResult training = {}) {
  if (aux_images.rows < 2)
    throw std::invalid_argument("prepare: auxiliary set needs at least 2 samples");

  PreparedAttack out;
  out.surrogate = std::move(surrogate);
  out.surrogate_training = std::move(training);
  // A larger latent basis leaves bin recovery untouched (ratios cancel)
  // but shrinks the weight-row noise term of the recovered coordinates
  // relative to their magnitude, which matters once updates are clipped
  // and noised. Thresholds follow automatically through the cdf below.
  rescale_latent(out.surrogate, plan.latent_scale);

  Tensor aux_lsr = encode(out.surrogate, aux_images);
  out.cdf = fit_cdf(brightness_rows(aux_lsr));
  LeakPair pair = craft_leak_pair(out.cdf, plan.leak_width, plan.latent_dim,
                                  plan.leak_out, plan.w2_row_value);

  std::vector<std::size_t> head_widths{plan.leak_out};
  for (auto h : plan.head_hidden) head_widths.push_back(h);
  head_widths.push_back(plan.num_classes);
  Rng head_rng(plan.seed, 12);
  Model head = make_head(head_widths, head_rng);

  out.adv = assemble_adversarial_model(mu_encoder(out.surrogate), pair, head);

  // Optional hardening for clipped-and-noised client updates: per-sample
  // clipping divides the leak-layer signal by the whole gradient norm, so
  // the head must neither dominate that norm nor saturate the softmax.
  // Rescaling the head's first layer until the aux-set logits have the
  // requested spread pins both effects, and stays deterministic because
  // it only reads the auxiliary set.
  if (plan.head_logit_std > 0.0) {
    Tensor logits = forward(out.adv.model, aux_images).output();
    double m1 = 0.0, m2 = 0.0;
    for (double v : logits.data) {
      m1 += v;
      m2 += v * v;
    }
    m1 /= static_cast<double>(logits.data.size());
    double sd = std::sqrt(
        std::max(m2 / static_cast<double>(logits.data.size()) - m1 * m1, 1e-24));
    DenseLayer& first = out.adv.model.layers[out.adv.leak_index + 2];
    const double scale = plan.head_logit_std / sd;
    for (double& v : first.weight.data) v *= scale;
    for (double& v : first.bias.data) v *= scale;
  }
  return out;
}

/// Offline phase: train the surrogate autoencoder on the auxiliary set,
/// place the crafted pair behind its encoder, and top with a benign
/// random head. The resulting model is what the server broadcasts; no
/// client data is touched here.
inline PreparedAttack prepare(const AttackPlan& plan, const Tensor& aux_images) {
  if (aux_images.rows < 2)
    throw std::invalid_argument("prepare: auxiliary set needs at least 2 samples");

  Rng init_rng(plan.seed, 11);
  AutoencoderPair surrogate =
      make_autoencoder(aux_images.cols, plan.encoder_hidden, plan.latent_dim,
                       plan.ae_mode, init_rng, plan.beta);
  TrainConfig cfg = plan.surrogate;
  cfg.seed = plan.seed;
  TrainResult training = train_autoencoder(surrogate, aux_images, cfg);
  // The attack decodes LSRs, which live on the deterministic mu path; a
  // vae decoder learned against sampled latents gives up sharpness
  // there, so refit it on the mu path before crafting.
  if (plan.ae_mode == AeMode::kVae) {
    TrainConfig refit = cfg;
    refit.epochs = std::max<std::size_t>(1, cfg.epochs / 4);
    refit_decoder(surrogate, aux_images, refit);
  }
  return prepare_with_surrogate(plan, aux_images, std::move(surrogate),
                                std::move(training));
}

struct RoundResult {
  GradientSet aggregate;  // weighted combination, all the server ever sees
  UpdateKind kind = UpdateKind::kGradient;
  std::size_t total_samples = 0;
};

/// One federated round against the broadcast model. Client i's dp noise
/// stream is round_rng.child(i); the masking streams hang off
/// round_rng.child(1000000007), so replaying with the same generator
/// reproduces the round bitwise. Secure aggregation needs equal client
/// weights (unequal weights would not cancel the masks) and at least two
/// clients; a single client falls back to the plain path.
inline RoundResult execute_round(const Model& broadcast,
                                 const std::vector<ClientState>& clients, FedMode mode,
                                 const DpConfig& dp, const Rng& round_rng,
                                 bool secure = true) {
  if (clients.empty()) throw std::invalid_argument("execute_round: no clients");

  std::vector<ClientUpdate> updates;
  updates.reserve(clients.size());
  for (std::size_t i = 0; i < clients.size(); ++i) {
    Rng noise = round_rng.child(i);
    updates.push_back(client_round(broadcast, clients[i], mode, dp, noise));
  }
  std::vector<double> weights = normalized_weights(clients);

  RoundResult res;
  res.kind = updates[0].kind;
  for (const auto& u : updates) res.total_samples += u.sample_count;

  if (secure && clients.size() >= 2) {
    for (double w : weights)
      if (std::abs(w - weights[0]) > 1e-12)
        throw std::invalid_argument(
            "execute_round: secure aggregation requires equal client weights");
    auto sa = secure_aggregate(updates, round_rng.child(1000000007ull));
    res.aggregate = server_aggregate(sa.masked, weights);
  } else {
    res.aggregate = server_aggregate(updates, weights);
  }
  return res;
}

struct Reconstruction {
  Tensor images;                  // one row per recovered bin, values in [0, 1]
  std::vector<std::size_t> bins;  // source bin of each row, ascending
  RecoveredBins details;
  double seconds = 0.0;  // recovery + decoding only
};

/// Online phase: turn the aggregate back into images. Parameter-kind
/// aggregates are first converted to gradient scale via the broadcast
/// difference; the ratio recovery is insensitive to the leftover lr
/// factor. An aggregate that lights no bins yields an empty batch, not
/// an error.
inline Reconstruction reconstruct(const AdversarialModel& adv,
                                  const AutoencoderPair& surrogate,
                                  const RoundResult& round) {
  if (adv.leak_index >= round.aggregate.layers.size() && round.kind == UpdateKind::kGradient)
    throw std::invalid_argument("reconstruct: aggregate has no leak layer");

  GradientSet grads = round.kind == UpdateKind::kParameters
                          ? approx_aggregated_gradient(adv.model, round.aggregate)
                          : round.aggregate;
  const auto& leak = grads.layers.at(adv.leak_index);
  if (leak.weight.rows != adv.k || leak.weight.cols != adv.d)
    throw std::invalid_argument("reconstruct: leak layer shape mismatch");

  Reconstruction rec;
  auto t0 = std::chrono::steady_clock::now();
  rec.details = recover_lsrs(leak.weight, leak.bias);
  rec.bins = rec.details.recovered_indices();
  if (rec.bins.empty()) {
    rec.images = Tensor::zeros(0, surrogate.input_dim());
  } else {
    Tensor lsrs(rec.bins.size(), adv.d);
    for (std::size_t r = 0; r < rec.bins.size(); ++r)
      for (std::size_t j = 0; j < adv.d; ++j)
        lsrs(r, j) = rec.details.bins[rec.bins[r]].lsr[j];
    rec.images = decode(surrogate, lsrs);
  }
  auto t1 = std::chrono::steady_clock::now();
  rec.seconds = std::chrono::duration<double>(t1 - t0).count();
  return rec;
}

/// Peak signal-to-noise ratio in dB between two equally shaped batches
/// or single images, capped at 300 dB when the MSE underflows.
inline double psnr(const Tensor& a, const Tensor& b, double max_i = 1.0) {
  a.require_same_shape(b, "psnr");
  if (!(max_i > 0.0)) throw std::invalid_argument("psnr: max_i must be > 0");
  if (a.size() == 0) throw std::invalid_argument("psnr: empty images");
  double mse = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    double diff = a.data[i] - b.data[i];
    mse += diff * diff;
  }
  mse /= static_cast<double>(a.data.size());
  if (mse < 1e-15) return 300.0;
  return 20.0 * std::log10(max_i / std::sqrt(mse));
}

struct MatchReport {
  struct Match {
    std::size_t original = 0;
    std::size_t bin = 0;
    double psnr_db = 0.0;
  };
  std::vector<Match> matches;           // ordered by original index
  double rate = 0.0;                    // matched pairs >= threshold, over originals
  double mean_psnr_success = 0.0;       // over counted pairs only; 0 when none
  std::vector<double> per_sample_psnr;  // one entry per original
  double threshold_db = 0.0;
};

/// Pair reconstructions with originals and score the round. kGreedy
/// walks all candidate pairs by descending psnr (ties: lower original,
/// then lower bin) taking each original and each bin at most once, so a
/// collided reconstruction cannot be credited twice. kNearest lets every
/// original claim its best bin independently, as an upper-bound
/// sensitivity variant. Unmatched originals get their best available
/// psnr in per_sample_psnr but never count toward the rate.
inline MatchReport match_and_rate(const Tensor& originals, const Tensor& recovered,
                                  const std::vector<std::size_t>& bins, double th,
                                  MatchPolicy policy = MatchPolicy::kGreedy) {
  if (originals.rows == 0) throw std::invalid_argument("match_and_rate: no originals");
  if (!(th > 0.0)) throw std::invalid_argument("match_and_rate: threshold must be > 0");
  if (recovered.rows != bins.size())
    throw std::invalid_argument("match_and_rate: " + std::to_string(recovered.rows) +
                                " rows for " + std::to_string(bins.size()) + " bins");
  if (recovered.rows > 0 && recovered.cols != originals.cols)
    throw std::invalid_argument("match_and_rate: dimension mismatch");

  const std::size_t m = originals.rows;
  const std::size_t r = recovered.rows;
  MatchReport rep;
  rep.threshold_db = th;
  rep.per_sample_psnr.assign(m, 0.0);
  if (r == 0) return rep;

  Tensor scores(m, r);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < r; ++j)
      scores(i, j) = psnr(originals.row(i), recovered.row(j));

  if (policy == MatchPolicy::kNearest) {
    for (std::size_t i = 0; i < m; ++i) {
      std::size_t best = 0;
      for (std::size_t j = 1; j < r; ++j)
        if (scores(i, j) > scores(i, best)) best = j;
      rep.matches.push_back({i, bins[best], scores(i, best)});
      rep.per_sample_psnr[i] = scores(i, best);
    }
  } else {
    struct Cand {
      double p;
      std::size_t i, j;
    };
    std::vector<Cand> cands;
    cands.reserve(m * r);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < r; ++j) cands.push_back({scores(i, j), i, j});
    std::sort(cands.begin(), cands.end(), [&](const Cand& a, const Cand& b) {
      if (a.p != b.p) return a.p > b.p;
      if (a.i != b.i) return a.i < b.i;
      return bins[a.j] < bins[b.j];
    });
    std::vector<bool> used_i(m, false), used_j(r, false);
    for (const auto& c : cands) {
      if (used_i[c.i] || used_j[c.j]) continue;
      used_i[c.i] = true;
      used_j[c.j] = true;
      rep.matches.push_back({c.i, bins[c.j], c.p});
      rep.per_sample_psnr[c.i] = c.p;
    }
    std::sort(rep.matches.begin(), rep.matches.end(),
              [](const auto& a, const auto& b) { return a.original < b.original; });
    for (std::size_t i = 0; i < m; ++i)
      if (!used_i[i])
        for (std::size_t j = 0; j < r; ++j)
          rep.per_sample_psnr[i] = std::max(rep.per_sample_psnr[i], scores(i, j));
  }

  std::size_t hits = 0;
  double sum = 0.0;
  for (const auto& mt : rep.matches)
    if (mt.psnr_db >= th) {
      ++hits;
      sum += mt.psnr_db;
    }
  rep.rate = static_cast<double>(hits) / static_cast<double>(m);
  rep.mean_psnr_success = hits > 0 ? sum / static_cast<double>(hits) : 0.0;
  return rep;
}

/// Split a target batch evenly across the plan's clients, preserving
/// sample order. The batch size must divide evenly so that uniform
/// aggregation weights reproduce the pooled-batch mean gradient.
inline std::vector<ClientState> partition_clients(const Tensor& images,
                                                  const std::vector<int>& labels,
                                                  const AttackPlan& plan) {
  if (plan.clients == 0) throw std::invalid_argument("partition_clients: zero clients");
  if (images.rows == 0) throw std::invalid_argument("partition_clients: empty batch");
  if (labels.size() != images.rows)
    throw std::invalid_argument("partition_clients: label count mismatch");
  if (images.rows % plan.clients != 0)
    throw std::invalid_argument("partition_clients: batch of " +
                                std::to_string(images.rows) + " does not split over " +
                                std::to_string(plan.clients) + " clients");
  const std::size_t per = images.rows / plan.clients;
  std::vector<ClientState> out;
  for (std::size_t c = 0; c < plan.clients; ++c) {
    ClientState cs;
    cs.id = c;
    cs.data = Tensor::zeros(per, images.cols);
    for (std::size_t s = 0; s < per; ++s) {
      for (std::size_t j = 0; j < images.cols; ++j)
        cs.data(s, j) = images(c * per + s, j);
      cs.labels.push_back(labels[c * per + s]);
    }
    cs.local_iters = plan.local_iters;
    cs.local_lr = plan.local_lr;
    out.push_back(std::move(cs));
  }
  return out;
}

struct TrialBatch {
  Tensor images;
  std::vector<int> labels;
};

/// All randomness of one experiment cell hangs off this stream: child 0
/// draws the target batch, child 1 drives the round. The derivation is
/// part of the reproducibility contract between single attack runs and
/// experiment sweeps.
inline Rng trial_generator(std::uint64_t plan_seed, std::size_t m, std::size_t trial) {
  return Rng(plan_seed, 500).child(m).child(trial);
}

/// Draw m pool samples without replacement for one trial.
inline TrialBatch draw_trial_batch(const Dataset& pool, std::size_t m,
                                   const Rng& trial_rng) {
  if (m == 0 || m > pool.size())
    throw std::invalid_argument("draw_trial_batch: batch size " + std::to_string(m) +
                                " not drawable from a pool of " +
                                std::to_string(pool.size()));
  std::vector<std::size_t> idx(pool.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  Rng pick = trial_rng.child(0);
  pick.shuffle(idx);
  TrialBatch b{Tensor::zeros(m, pool.dim()), std::vector<int>(m)};
  for (std::size_t s = 0; s < m; ++s) {
    for (std::size_t j = 0; j < pool.dim(); ++j) b.images(s, j) = pool.images(idx[s], j);
    b.labels[s] = pool.labels[idx[s]];
  }
  return b;
}

struct ExperimentRow {
  std::size_t m = 0;
  std::size_t trial = 0;
  double rate = 0.0;
  double mean_psnr_success = 0.0;
  double seconds = 0.0;
  std::size_t recovered_bins = 0;
  std::size_t singly_occupied = 0;
};

struct ExperimentSummary {
  std::size_t m = 0;
  double mean_rate = 0.0;
  double std_rate = 0.0;
  double mean_psnr_success = 0.0;
  double mean_seconds = 0.0;
};

struct ExperimentTable {
  std::vector<ExperimentRow> rows;
  std::vector<ExperimentSummary> summary;
};

/// Batch-size sweep: for every (m, trial) draw a fresh target batch
/// from the pool without replacement, run one round, reconstruct, and
/// score. Trial generators derive from the plan seed alone, so the
/// whole table is a pure function of (prepared attack, pool, sizes,
/// trials).
inline ExperimentTable run_experiment(const PreparedAttack& prep, const AttackPlan& plan,
                                      const Dataset& pool,
                                      const std::vector<std::size_t>& batch_sizes,
                                      std::size_t trials) {
  if (batch_sizes.empty()) throw std::invalid_argument("run_experiment: no batch sizes");
  if (trials == 0) throw std::invalid_argument("run_experiment: zero trials");
  for (std::size_t m : batch_sizes) {
    if (m == 0 || m > pool.size())
      throw std::invalid_argument("run_experiment: batch size " + std::to_string(m) +
                                  " not drawable from a pool of " +
                                  std::to_string(pool.size()));
  }

  ExperimentTable table;
  for (std::size_t m : batch_sizes) {
    std::vector<double> rates;
    double psnr_sum = 0.0, sec_sum = 0.0;
    for (std::size_t t = 0; t < trials; ++t) {
      Rng trial_rng = trial_generator(plan.seed, m, t);
      TrialBatch batch = draw_trial_batch(pool, m, trial_rng);

      auto clients = partition_clients(batch.images, batch.labels, plan);
      auto round = execute_round(prep.adv.model, clients, plan.mode, plan.dp,
                                 trial_rng.child(1), plan.use_secure_aggregation);
      auto rec = reconstruct(prep.adv, prep.surrogate, round);
      auto rep = match_and_rate(batch.images, rec.images, rec.bins, plan.th_db,
                                plan.match_policy);

      auto occ = bin_occupancy(brightness_rows(encode(prep.surrogate, batch.images)),
                               leak_thresholds(prep.adv));

      ExperimentRow row;
      row.m = m;
      row.trial = t;
      row.rate = rep.rate;
      row.mean_psnr_success = rep.mean_psnr_success;
      row.seconds = rec.seconds;
      row.recovered_bins = rec.bins.size();
      row.singly_occupied = occ.singly_occupied();
      table.rows.push_back(row);

      rates.push_back(rep.rate);
      psnr_sum += rep.mean_psnr_success;
      sec_sum += rec.seconds;
    }
    ExperimentSummary s;
    s.m = m;
    double mean = 0.0;
    for (double v : rates) mean += v;
    mean /= static_cast<double>(rates.size());
    double var = 0.0;
    for (double v : rates) var += (v - mean) * (v - mean);
    s.mean_rate = mean;
    s.std_rate = rates.size() > 1
                     ? std::sqrt(var / static_cast<double>(rates.size() - 1))
                     : 0.0;
    s.mean_psnr_success = psnr_sum / static_cast<double>(trials);
    s.mean_seconds = sec_sum / static_cast<double>(trials);
    table.summary.push_back(s);
  }
  return table;
}

}  // namespace linleak
