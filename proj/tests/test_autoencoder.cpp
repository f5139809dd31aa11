#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <vector>

#include "linleak/autoencoder.hpp"
#include "linleak/checkpoint.hpp"
#include "linleak/nn.hpp"
#include "linleak/rng.hpp"
#include "support.hpp"

using namespace linleak;

namespace {

// Low-rank factor data with small noise: learnable by a narrow bottleneck.
Tensor factor_data(std::size_t n, std::size_t dim, std::size_t rank, std::uint64_t seed) {
  Rng rng(seed, 0);
  Tensor basis(rank, dim);
  for (double& v : basis.data) v = rng.normal(0.0, 1.0);
  Tensor x(n, dim);
  for (std::size_t s = 0; s < n; ++s) {
    std::vector<double> coef(rank);
    for (auto& c : coef) c = rng.normal();
    for (std::size_t j = 0; j < dim; ++j) {
      double acc = 0.0;
      for (std::size_t r = 0; r < rank; ++r) acc += coef[r] * basis(r, j);
      x(s, j) = acc + rng.normal(0.0, 0.05);
    }
  }
  return x;
}

// Same idea bounded to [0, 1]: the range every image dataset in the
// library lives in, and the range the vae objective is stable on.
Tensor bounded_factor_data(std::size_t n, std::size_t dim, std::size_t rank,
                           std::uint64_t seed) {
  Rng rng(seed, 1);
  Tensor basis(rank, dim);
  for (double& v : basis.data) v = rng.uniform01() / static_cast<double>(rank);
  Tensor x(n, dim);
  for (std::size_t s = 0; s < n; ++s) {
    std::vector<double> coef(rank);
    for (auto& c : coef) c = rng.uniform(0.2, 1.0);
    for (std::size_t j = 0; j < dim; ++j) {
      double acc = rng.normal(0.0, 0.02);
      for (std::size_t r = 0; r < rank; ++r) acc += coef[r] * basis(r, j);
      x(s, j) = std::min(1.0, std::max(0.0, acc));
    }
  }
  return x;
}

double variance_baseline(const Tensor& x) {
  // MSE of the best constant predictor (column means).
  std::vector<double> mean(x.cols, 0.0);
  for (std::size_t s = 0; s < x.rows; ++s)
    for (std::size_t j = 0; j < x.cols; ++j) mean[j] += x(s, j);
  for (auto& m : mean) m /= static_cast<double>(x.rows);
  double acc = 0.0;
  for (std::size_t s = 0; s < x.rows; ++s)
    for (std::size_t j = 0; j < x.cols; ++j) {
      double d = x(s, j) - mean[j];
      acc += d * d;
    }
  return acc / static_cast<double>(x.rows * x.cols);
}

}  // namespace

TEST_CASE("make_autoencoder: widths for plain and vae modes") {
  Rng rng(1, 0);
  auto plain = make_autoencoder(32, {24}, 8, AeMode::kPlain, rng);
  CHECK(plain.encoder.input_dim() == 32);
  CHECK(plain.encoder.output_dim() == 8);
  CHECK(plain.decoder.input_dim() == 8);
  CHECK(plain.decoder.output_dim() == 32);
  CHECK(plain.beta == 0.0);

  auto vae = make_autoencoder(32, {24}, 8, AeMode::kVae, rng, 1e-3);
  CHECK(vae.encoder.output_dim() == 16);  // mu ++ logvar
  CHECK(vae.decoder.input_dim() == 8);
  CHECK(vae.beta == 1e-3);

  CHECK_THROWS_AS(make_autoencoder(0, {}, 4, AeMode::kPlain, rng), std::invalid_argument);
}

TEST_CASE("plain_step_eval gradients match finite differences") {
  Rng rng(2, 0);
  auto p = make_autoencoder(6, {5}, 3, AeMode::kPlain, rng);
  Tensor batch(4, 6);
  for (double& v : batch.data) v = rng.uniform01();

  auto step = plain_step_eval(p, batch);
  auto fd_enc = oracle::fd_gradients(p.encoder, [&](const Model& enc) {
    AutoencoderPair q = p;
    q.encoder = enc;
    return plain_step_eval(q, batch).loss;
  });
  auto fd_dec = oracle::fd_gradients(p.decoder, [&](const Model& dec) {
    AutoencoderPair q = p;
    q.decoder = dec;
    return plain_step_eval(q, batch).loss;
  });
  CHECK(oracle::max_rel_diff(step.enc_grads, fd_enc) < 1e-4);
  CHECK(oracle::max_rel_diff(step.dec_grads, fd_dec) < 1e-4);
}

TEST_CASE("vae_step_eval gradients match finite differences with fixed noise") {
  Rng rng(3, 0);
  auto p = make_autoencoder(6, {5}, 3, AeMode::kVae, rng, 0.7);
  Tensor batch(4, 6);
  for (double& v : batch.data) v = rng.uniform01();
  Tensor eps(4, 3);
  for (double& v : eps.data) v = rng.normal();
  const double beta_eff = 0.7;

  auto step = vae_step_eval(p, batch, eps, beta_eff);
  CHECK(step.loss == Catch::Approx(step.recon + beta_eff * step.kl).margin(1e-15));

  auto fd_enc = oracle::fd_gradients(p.encoder, [&](const Model& enc) {
    AutoencoderPair q = p;
    q.encoder = enc;
    return vae_step_eval(q, batch, eps, beta_eff).loss;
  });
  auto fd_dec = oracle::fd_gradients(p.decoder, [&](const Model& dec) {
    AutoencoderPair q = p;
    q.decoder = dec;
    return vae_step_eval(q, batch, eps, beta_eff).loss;
  });
  CHECK(oracle::max_rel_diff(step.enc_grads, fd_enc) < 1e-4);
  CHECK(oracle::max_rel_diff(step.dec_grads, fd_dec) < 1e-4);

  CHECK_THROWS_AS(vae_step_eval(p, batch, Tensor(4, 2), beta_eff), std::invalid_argument);
}

TEST_CASE("kl_divergence: closed-form spot checks") {
  CHECK(kl_divergence(Tensor(2, 3), Tensor(2, 3)) == 0.0);

  Tensor mu(1, 1), lv(1, 1);
  mu.data[0] = 1.0;
  CHECK(kl_divergence(mu, lv) == Catch::Approx(0.5).margin(1e-15));

  mu.data[0] = 0.0;
  lv.data[0] = std::log(2.0);
  CHECK(kl_divergence(mu, lv) ==
        Catch::Approx(-0.5 * (1.0 + std::log(2.0) - 2.0)).margin(1e-15));

  CHECK_THROWS_AS(kl_divergence(Tensor(1, 2), Tensor(1, 3)), std::invalid_argument);
}

TEST_CASE("training overfits a single sample to near-zero loss") {
  Rng rng(4, 0);
  auto p = make_autoencoder(8, {10}, 8, AeMode::kPlain, rng);
  Tensor one(1, 8);
  for (double& v : one.data) v = rng.uniform01();

  TrainConfig cfg;
  cfg.epochs = 400;
  cfg.batch_size = 1;
  cfg.lr = 0.05;
  cfg.seed = 5;
  auto res = train_autoencoder(p, one, cfg);
  CHECK(res.final_loss() < 1e-3);
  CHECK(res.epoch_loss.front() > res.final_loss());
}

TEST_CASE("training beats the mean-image baseline on factor data") {
  Tensor data = factor_data(200, 32, 4, 6);
  double baseline = variance_baseline(data);

  Rng rng(7, 0);
  auto p = make_autoencoder(32, {24}, 8, AeMode::kPlain, rng);
  TrainConfig cfg;
  cfg.epochs = 60;
  cfg.batch_size = 16;
  cfg.lr = 0.02;
  cfg.seed = 8;
  auto res = train_autoencoder(p, data, cfg);
  CHECK(res.final_loss() < baseline);
}

TEST_CASE("vae with beta 0 behaves like the plain autoencoder") {
  Tensor data = bounded_factor_data(200, 24, 4, 9);

  Rng r1(10, 0);
  auto plain = make_autoencoder(24, {20}, 6, AeMode::kPlain, r1);
  Rng r2(10, 0);
  auto vae = make_autoencoder(24, {20}, 6, AeMode::kVae, r2, 0.0);

  TrainConfig cfg;
  cfg.epochs = 120;
  cfg.batch_size = 16;
  cfg.lr = 0.02;
  cfg.seed = 11;
  double mse_plain = train_autoencoder(plain, data, cfg).final_loss();
  double mse_vae = train_autoencoder(vae, data, cfg).final_loss();
  CHECK(std::abs(mse_vae - mse_plain) <= 0.1 * mse_plain);
}

TEST_CASE("encode is deterministic and returns mu only in vae mode") {
  Rng rng(12, 0);
  auto p = make_autoencoder(10, {8}, 4, AeMode::kVae, rng);
  Tensor x(3, 10);
  for (double& v : x.data) v = rng.uniform01();

  Tensor z1 = encode(p, x), z2 = encode(p, x);
  CHECK(z1.cols == 4);
  CHECK(max_abs_diff(z1, z2) == 0.0);

  // duplicated rows encode identically
  Tensor dup(2, 10);
  for (std::size_t j = 0; j < 10; ++j) dup(0, j) = dup(1, j) = x(0, j);
  Tensor zd = encode(p, dup);
  for (std::size_t j = 0; j < 4; ++j) CHECK(zd(0, j) == zd(1, j));

  // mu equals the full encoder output's first d columns
  auto full = forward(p.encoder, x);
  for (std::size_t s = 0; s < 3; ++s)
    for (std::size_t j = 0; j < 4; ++j) CHECK(z1(s, j) == full.output()(s, j));
}

TEST_CASE("mu_encoder reproduces encode() exactly and keeps the benign shape") {
  Rng rng(13, 0);
  auto p = make_autoencoder(10, {8}, 4, AeMode::kVae, rng);
  Model enc = mu_encoder(p);
  CHECK(enc.output_dim() == 4);

  Tensor x(5, 10);
  for (double& v : x.data) v = rng.normal();
  CHECK(max_abs_diff(forward(enc, x).output(), encode(p, x)) == 0.0);

  auto plain = make_autoencoder(10, {8}, 4, AeMode::kPlain, rng);
  Model enc_plain = mu_encoder(plain);
  CHECK(enc_plain.output_dim() == 4);
}

TEST_CASE("decode clamps to the image range and is deterministic") {
  Rng rng(14, 0);
  auto p = make_autoencoder(6, {}, 3, AeMode::kPlain, rng);
  // force saturation through a huge decoder bias
  for (double& b : p.decoder.layers.back().bias.data) b = 50.0;
  Tensor z(2, 3, 0.1);
  Tensor out = decode(p, z);
  for (double v : out.data) CHECK(v == 1.0);

  for (double& b : p.decoder.layers.back().bias.data) b = -50.0;
  out = decode(p, z);
  for (double v : out.data) CHECK(v == 0.0);

  Tensor zero(1, 3);
  CHECK(max_abs_diff(decode(p, zero), decode(p, zero)) == 0.0);
  CHECK_THROWS_AS(decode(p, Tensor(1, 4)), std::invalid_argument);
}

TEST_CASE("training is bitwise deterministic for a fixed seed") {
  Tensor data = bounded_factor_data(64, 12, 3, 15);
  auto run = [&]() {
    Rng rng(16, 0);
    auto p = make_autoencoder(12, {10}, 4, AeMode::kVae, rng, 1e-3);
    TrainConfig cfg;
    cfg.epochs = 20;
    cfg.batch_size = 8;
    cfg.lr = 0.02;
    cfg.seed = 17;
    train_autoencoder(p, data, cfg);
    return p;
  };
  auto a = run(), b = run();
  CHECK(max_abs_diff(parameters_of(a.encoder), parameters_of(b.encoder)) == 0.0);
  CHECK(max_abs_diff(parameters_of(a.decoder), parameters_of(b.decoder)) == 0.0);
}

TEST_CASE("training rejects bad input and reports divergence") {
  Rng rng(18, 0);
  auto p = make_autoencoder(6, {4}, 2, AeMode::kPlain, rng);
  TrainConfig cfg;
  CHECK_THROWS_AS(train_autoencoder(p, Tensor(0, 6), cfg), std::invalid_argument);
  CHECK_THROWS_AS(train_autoencoder(p, Tensor(3, 5), cfg), std::invalid_argument);

  Tensor bad(3, 6, 1.0);
  bad.data[0] = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(train_autoencoder(p, bad, cfg), std::invalid_argument);

  Tensor data(8, 6, 0.5);
  cfg.lr = 1e9;
  cfg.epochs = 50;
  CHECK_THROWS_AS(train_autoencoder(p, data, cfg), std::runtime_error);
}

TEST_CASE("LLAE checkpoint round-trips bitwise") {
  Rng rng(19, 0);
  auto p = make_autoencoder(14, {10}, 5, AeMode::kVae, rng, 2.5e-3);
  Tensor data = bounded_factor_data(32, 14, 3, 20);
  TrainConfig cfg;
  cfg.epochs = 5;
  cfg.batch_size = 8;
  cfg.seed = 21;
  train_autoencoder(p, data, cfg);

  const std::string path = "tmp_roundtrip.llae";
  save_autoencoder(path, p);
  auto q = load_autoencoder(path);
  CHECK(q.mode == p.mode);
  CHECK(q.beta == p.beta);
  CHECK(q.latent_dim == p.latent_dim);
  CHECK(max_abs_diff(parameters_of(q.encoder), parameters_of(p.encoder)) == 0.0);
  CHECK(max_abs_diff(parameters_of(q.decoder), parameters_of(p.decoder)) == 0.0);
  for (std::size_t l = 0; l < p.encoder.layers.size(); ++l)
    CHECK(q.encoder.layers[l].act == p.encoder.layers[l].act);
  std::remove(path.c_str());
}

TEST_CASE("LLGM checkpoint round-trips the adversarial model") {
  Rng rng(22, 0);
  const std::size_t d = 5, k = 12, o = 4;
  std::vector<double> aux(100);
  for (auto& b : aux) b = rng.normal();
  auto pair = craft_leak_pair(fit_cdf(aux), k, d, o);
  Model enc = make_mlp({9, 7, d}, {Activation::kRelu, Activation::kIdentity}, rng);
  Model head = make_head({o, 3}, rng);
  auto adv = assemble_adversarial_model(enc, pair, head);

  const std::string path = "tmp_roundtrip.llgm";
  save_adversarial_model(path, adv);
  auto back = load_adversarial_model(path);
  CHECK(back.leak_index == adv.leak_index);
  CHECK(back.k == adv.k);
  CHECK(back.d == adv.d);
  CHECK(back.o == adv.o);
  CHECK(max_abs_diff(parameters_of(back.model), parameters_of(adv.model)) == 0.0);
  std::remove(path.c_str());
}

TEST_CASE("checkpoint loader rejects bad magic, version, and truncation") {
  const std::string bad = "tmp_bad.llae";
  {
    std::ofstream os(bad, std::ios::binary);
    os << "NOPE this is not a checkpoint";
  }
  CHECK_THROWS_AS(load_autoencoder(bad), std::runtime_error);
  std::remove(bad.c_str());

  Rng rng(23, 0);
  auto p = make_autoencoder(6, {4}, 2, AeMode::kPlain, rng);
  const std::string path = "tmp_trunc.llae";
  save_autoencoder(path, p);
  std::ifstream is(path, std::ios::binary);
  std::vector<char> bytes((std::istreambuf_iterator<char>(is)),
                          std::istreambuf_iterator<char>());
  is.close();
  {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    os.write(bytes.data(), static_cast<std::streamsize>(bytes.size() / 2));
  }
  CHECK_THROWS_AS(load_autoencoder(path), std::runtime_error);

  {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    std::vector<char> v = bytes;
    v[4] = 9;  // version
    os.write(v.data(), static_cast<std::streamsize>(v.size()));
  }
  CHECK_THROWS_AS(load_autoencoder(path), std::runtime_error);
  std::remove(path.c_str());

  CHECK_THROWS_AS(load_autoencoder("no_such_file.llae"), std::runtime_error);
}
