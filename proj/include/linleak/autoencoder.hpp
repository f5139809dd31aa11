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

enum class AeMode { kPlain, kVae };

/// Surrogate generative pair trained on the auxiliary set. In vae mode
/// the encoder's final layer emits 2d values, mu followed by logvar;
/// encode() always returns the d-dimensional mu, which is what the leak
/// bins and the decoder consume at attack time.
struct AutoencoderPair {
  Model encoder;
  Model decoder;
  AeMode mode = AeMode::kPlain;
  double beta = 0.0;
  std::size_t latent_dim = 0;

  std::size_t input_dim() const { return encoder.input_dim(); }
};

/// hidden lists the intermediate widths of the encoder; the decoder
/// mirrors them. All hidden layers are relu, both final layers identity.
inline AutoencoderPair make_autoencoder(std::size_t input_dim,
                                        const std::vector<std::size_t>& hidden,
                                        std::size_t latent_dim, AeMode mode, Rng& rng,
                                        double beta = 1e-3) {
  if (input_dim == 0 || latent_dim == 0)
    throw std::invalid_argument("make_autoencoder: zero dimension");
  AutoencoderPair p;
  p.mode = mode;
  p.beta = mode == AeMode::kVae ? beta : 0.0;
  p.latent_dim = latent_dim;

  std::vector<std::size_t> enc_w{input_dim};
  for (auto h : hidden) enc_w.push_back(h);
  enc_w.push_back(mode == AeMode::kVae ? 2 * latent_dim : latent_dim);
  std::vector<Activation> enc_a(enc_w.size() - 1, Activation::kRelu);
  enc_a.back() = Activation::kIdentity;
  p.encoder = make_mlp(enc_w, enc_a, rng);
  if (mode == AeMode::kVae) {
    // The logvar head starts small and strongly negative (sigma0 = e^-5),
    // so early steps are near-deterministic. Starting at sigma ~ 1 makes
    // exp(logvar/2) blow up on wide-range inputs, and sigma decays too
    // slowly for the beta = 0 limit to match the plain autoencoder.
    DenseLayer& last = p.encoder.layers.back();
    for (std::size_t i = latent_dim; i < 2 * latent_dim; ++i) {
      for (std::size_t j = 0; j < last.weight.cols; ++j) last.weight(i, j) *= 0.1;
      last.bias.data[i] = -10.0;
    }
  }

  std::vector<std::size_t> dec_w{latent_dim};
  for (auto it = hidden.rbegin(); it != hidden.rend(); ++it) dec_w.push_back(*it);
  dec_w.push_back(input_dim);
  std::vector<Activation> dec_a(dec_w.size() - 1, Activation::kRelu);
  dec_a.back() = Activation::kIdentity;
  p.decoder = make_mlp(dec_w, dec_a, rng);
  return p;
}

/// Latent representation of a batch (mu in vae mode). Deterministic:
/// encoding never samples.
inline Tensor encode(const AutoencoderPair& p, const Tensor& batch) {
  auto t = forward(p.encoder, batch);
  if (p.mode == AeMode::kPlain) return t.output();
  const Tensor& full = t.output();
  Tensor mu(full.rows, p.latent_dim);
  for (std::size_t s = 0; s < full.rows; ++s)
    for (std::size_t j = 0; j < p.latent_dim; ++j) mu(s, j) = full(s, j);
  return mu;
}

/// Decode latent rows back to inputs, clamped to the image range [0, 1].
inline Tensor decode(const AutoencoderPair& p, const Tensor& lsrs) {
  if (lsrs.cols != p.latent_dim)
    throw std::invalid_argument("decode: got " + std::to_string(lsrs.cols) +
                                " dims, latent_dim is " + std::to_string(p.latent_dim));
  auto t = forward(p.decoder, lsrs);
  Tensor out = t.output();
  for (double& v : out.data) v = v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v);
  return out;
}

/// Change the latent basis to alpha * z without changing the
/// encode-decode map: the mu rows of the encoder's last layer pick up
/// the factor, the decoder's first layer absorbs its inverse. Logvar
/// rows stay untouched; this is applied after training, where only the
/// deterministic mu path matters.
inline void rescale_latent(AutoencoderPair& p, double alpha) {
  if (alpha <= 0.0) throw std::invalid_argument("rescale_latent: alpha must be positive");
  if (alpha == 1.0) return;
  DenseLayer& last = p.encoder.layers.back();
  for (std::size_t i = 0; i < p.latent_dim; ++i) {
    for (std::size_t j = 0; j < last.weight.cols; ++j) last.weight(i, j) *= alpha;
    last.bias.data[i] *= alpha;
  }
  DenseLayer& first = p.decoder.layers.front();
  for (double& w : first.weight.data) w /= alpha;
}

/// Gaussian KL against the standard normal prior, summed over latent
/// dimensions and averaged over the batch:
///   KL = -1/2 sum(1 + logvar - mu^2 - exp(logvar)) / batch
inline double kl_divergence(const Tensor& mu, const Tensor& logvar) {
  mu.require_same_shape(logvar, "kl_divergence");
  if (mu.rows == 0) throw std::invalid_argument("kl_divergence: empty batch");
  double acc = 0.0;
  for (std::size_t i = 0; i < mu.data.size(); ++i)
    acc += 1.0 + logvar.data[i] - mu.data[i] * mu.data[i] - std::exp(logvar.data[i]);
  return -0.5 * acc / static_cast<double>(mu.rows);
}

struct AeStepResult {
  double loss = 0.0;   // total objective for the batch
  double recon = 0.0;  // mse part
  double kl = 0.0;     // kl part (before beta)
  GradientSet enc_grads;
  GradientSet dec_grads;
};

/// One loss/gradient evaluation of the plain autoencoder on a batch.
/// Pure function of (pair, batch); train_autoencoder folds sgd around it.
inline AeStepResult plain_step_eval(const AutoencoderPair& p, const Tensor& batch) {
  AeStepResult r;
  auto te = forward(p.encoder, batch);
  auto td = forward(p.decoder, te.output());
  auto loss = loss_mse(td.output(), batch);
  r.loss = r.recon = loss.value;
  auto bd = backward(p.decoder, td, loss.grad);
  r.dec_grads = std::move(bd.grads);
  auto be = backward(p.encoder, te, bd.input_grad);
  r.enc_grads = std::move(be.grads);
  return r;
}

/// One loss/gradient evaluation of the vae objective with an explicit
/// noise tensor eps (batch x d), so the whole step is a deterministic
/// function of its inputs:
///   z = mu + exp(logvar / 2) * eps,  L = mse(dec(z), x) + beta_eff * KL
inline AeStepResult vae_step_eval(const AutoencoderPair& p, const Tensor& batch,
                                  const Tensor& eps, double beta_eff) {
  const std::size_t n = batch.rows, d = p.latent_dim;
  if (eps.rows != n || eps.cols != d)
    throw std::invalid_argument("vae_step_eval: eps is " + eps.shape_str());

  auto te = forward(p.encoder, batch);
  const Tensor& mulv = te.output();
  Tensor mu(n, d), logvar(n, d), z(n, d);
  for (std::size_t s = 0; s < n; ++s)
    for (std::size_t j = 0; j < d; ++j) {
      mu(s, j) = mulv(s, j);
      logvar(s, j) = mulv(s, j + d);
      z(s, j) = mu(s, j) + std::exp(0.5 * logvar(s, j)) * eps(s, j);
    }

  auto td = forward(p.decoder, z);
  auto loss = loss_mse(td.output(), batch);
  AeStepResult r;
  r.recon = loss.value;
  r.kl = kl_divergence(mu, logvar);
  r.loss = r.recon + beta_eff * r.kl;

  auto bd = backward(p.decoder, td, loss.grad);
  r.dec_grads = std::move(bd.grads);

  // Chain into the encoder output: d/dmu = dz + beta * mu / n,
  // d/dlogvar = dz * eps * exp(logvar/2) / 2 + beta * (exp(logvar) - 1) / (2n).
  const Tensor& dz = bd.input_grad;
  const double inv_n = 1.0 / static_cast<double>(n);
  Tensor enc_out_grad(n, 2 * d);
  for (std::size_t s = 0; s < n; ++s)
    for (std::size_t j = 0; j < d; ++j) {
      enc_out_grad(s, j) = dz(s, j) + beta_eff * mu(s, j) * inv_n;
      enc_out_grad(s, j + d) =
          dz(s, j) * eps(s, j) * 0.5 * std::exp(0.5 * logvar(s, j)) +
          beta_eff * 0.5 * (std::exp(logvar(s, j)) - 1.0) * inv_n;
    }
  auto be = backward(p.encoder, te, enc_out_grad);
  r.enc_grads = std::move(be.grads);
  return r;
}

struct TrainConfig {
  std::size_t epochs = 200;
  std::size_t batch_size = 32;
  double lr = 0.05;
  std::uint64_t seed = 1;
};

struct TrainResult {
  std::vector<double> epoch_loss;  // mean total objective per epoch
  double final_loss() const { return epoch_loss.back(); }
};

/// Minibatch SGD over the pair. Sample order and vae noise come from
/// dedicated streams of cfg.seed, so two runs with equal inputs produce
/// bitwise identical pairs. The beta weight ramps linearly over the
/// first 20% of epochs, which keeps early training focused on
/// reconstruction before the prior starts pulling latents to N(0, 1).
inline TrainResult train_autoencoder(AutoencoderPair& p, const Tensor& data,
                                     const TrainConfig& cfg) {
  if (data.rows == 0) throw std::invalid_argument("train_autoencoder: empty dataset");
  if (data.cols != p.input_dim())
    throw std::invalid_argument("train_autoencoder: data has " +
                                std::to_string(data.cols) + " columns, pair expects " +
                                std::to_string(p.input_dim()));
  if (!data.all_finite())
    throw std::invalid_argument("train_autoencoder: non-finite input");
  if (cfg.epochs == 0 || cfg.batch_size == 0)
    throw std::invalid_argument("train_autoencoder: epochs and batch_size must be >= 1");

  Rng shuffle_rng(cfg.seed, 101);
  Rng eps_rng(cfg.seed, 102);
  const std::size_t n = data.rows;
  const std::size_t warm =
      std::max<std::size_t>(1, static_cast<std::size_t>(0.2 * cfg.epochs));

  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;

  TrainResult res;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    shuffle_rng.shuffle(order);
    double beta_eff =
        p.mode == AeMode::kVae
            ? p.beta * std::min(1.0, static_cast<double>(epoch + 1) / warm)
            : 0.0;
    double epoch_acc = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < n; start += cfg.batch_size) {
      std::size_t stop = std::min(n, start + cfg.batch_size);
      Tensor batch(stop - start, data.cols);
      for (std::size_t s = start; s < stop; ++s)
        for (std::size_t j = 0; j < data.cols; ++j)
          batch(s - start, j) = data(order[s], j);

      AeStepResult step;
      if (p.mode == AeMode::kPlain) {
        step = plain_step_eval(p, batch);
      } else {
        Tensor eps(batch.rows, p.latent_dim);
        for (double& v : eps.data) v = eps_rng.normal();
        step = vae_step_eval(p, batch, eps, beta_eff);
      }
      if (!std::isfinite(step.loss))
        throw std::runtime_error("train_autoencoder: diverged at epoch " +
                                 std::to_string(epoch));
      sgd_step(p.encoder, step.enc_grads, cfg.lr);
      sgd_step(p.decoder, step.dec_grads, cfg.lr);
      epoch_acc += step.loss;
      ++batches;
    }
    res.epoch_loss.push_back(epoch_acc / static_cast<double>(batches));
  }
  return res;
}

/// Decoder-only refit on the deterministic latent path: minimise
/// mse(dec(encode(x)), x) with the encoder frozen. A vae decoder is
/// trained against sampled latents; any consumer that decodes mu
/// directly gets its sharpness back from this pass without touching the
/// encoder (and hence without touching the latent distribution).
inline TrainResult refit_decoder(AutoencoderPair& p, const Tensor& data,
                                 const TrainConfig& cfg) {
  if (data.rows == 0) throw std::invalid_argument("refit_decoder: empty dataset");
  if (cfg.epochs == 0 || cfg.batch_size == 0)
    throw std::invalid_argument("refit_decoder: epochs and batch_size must be >= 1");

  const Tensor lsrs = encode(p, data);
  Rng shuffle_rng(cfg.seed, 103);
  const std::size_t n = data.rows;
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;

  TrainResult res;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    shuffle_rng.shuffle(order);
    double epoch_acc = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < n; start += cfg.batch_size) {
      std::size_t stop = std::min(n, start + cfg.batch_size);
      Tensor zb(stop - start, lsrs.cols), xb(stop - start, data.cols);
      for (std::size_t s = start; s < stop; ++s) {
        for (std::size_t j = 0; j < lsrs.cols; ++j) zb(s - start, j) = lsrs(order[s], j);
        for (std::size_t j = 0; j < data.cols; ++j) xb(s - start, j) = data(order[s], j);
      }
      auto td = forward(p.decoder, zb);
      auto loss = loss_mse(td.output(), xb);
      if (!std::isfinite(loss.value))
        throw std::runtime_error("refit_decoder: diverged at epoch " +
                                 std::to_string(epoch));
      sgd_step(p.decoder, backward(p.decoder, td, loss.grad).grads, cfg.lr);
      epoch_acc += loss.value;
      ++batches;
    }
    res.epoch_loss.push_back(epoch_acc / static_cast<double>(batches));
  }
  return res;
}

/// Encoder truncated to the mu rows, shaped like a plain encoder ending
/// at d units. This is the architecture clients see in vae mode: the
/// logvar half never ships in the global model.
inline Model mu_encoder(const AutoencoderPair& p) {
  if (p.mode == AeMode::kPlain) return p.encoder;
  Model enc = p.encoder;
  DenseLayer& last = enc.layers.back();
  Tensor w(p.latent_dim, last.weight.cols);
  Tensor b(1, p.latent_dim);
  for (std::size_t i = 0; i < p.latent_dim; ++i) {
    for (std::size_t j = 0; j < last.weight.cols; ++j) w(i, j) = last.weight(i, j);
    b.data[i] = last.bias.data[i];
  }
  last.weight = std::move(w);
  last.bias = std::move(b);
  return enc;
}

}  // namespace linleak
