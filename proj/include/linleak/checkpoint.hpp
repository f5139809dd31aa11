#pragma once

// Binary checkpoints. Both formats are little-endian with f64 parameter
// blobs written in layer declaration order, so a save/load round trip is
// bitwise exact.
//
//   LLAE v1: magic "LLAE", u16 version, u8 mode, u8 pad, f64 beta,
//            u32 latent_dim, u32 enc_layers, u32 dec_layers,
//            per layer: u32 out, u32 in, u8 activation, u8 pad[3],
//            then per layer (encoder first): f64 weight[out*in], f64 bias[out].
//   LLGM v1: magic "LLGM", u16 version, u16 pad, u32 leak_index,
//            u32 k, u32 d, u32 o, u32 layers, same per-layer encoding.

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "linleak/autoencoder.hpp"
#include "linleak/leakage.hpp"
#include "linleak/nn.hpp"

namespace linleak {

static_assert(std::endian::native == std::endian::little,
              "checkpoint format assumes a little-endian host");

namespace detail {

inline void put_bytes(std::ostream& os, const void* p, std::size_t n) {
  os.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}

template <typename T>
void put(std::ostream& os, T v) {
  put_bytes(os, &v, sizeof(T));
}

inline void get_bytes(std::istream& is, void* p, std::size_t n, const char* what) {
  is.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(is.gcount()) != n)
    throw std::runtime_error(std::string("checkpoint: truncated while reading ") + what);
}

template <typename T>
T get(std::istream& is, const char* what) {
  T v;
  get_bytes(is, &v, sizeof(T), what);
  return v;
}

inline void put_layer_header(std::ostream& os, const DenseLayer& l) {
  put<std::uint32_t>(os, static_cast<std::uint32_t>(l.out_dim()));
  put<std::uint32_t>(os, static_cast<std::uint32_t>(l.in_dim()));
  put<std::uint8_t>(os, l.act == Activation::kRelu ? 1 : 0);
  put<std::uint8_t>(os, 0);
  put<std::uint8_t>(os, 0);
  put<std::uint8_t>(os, 0);
}

inline DenseLayer get_layer_header(std::istream& is) {
  DenseLayer l;
  auto out = get<std::uint32_t>(is, "layer header");
  auto in = get<std::uint32_t>(is, "layer header");
  auto act = get<std::uint8_t>(is, "layer header");
  get<std::uint8_t>(is, "layer header");
  get<std::uint8_t>(is, "layer header");
  get<std::uint8_t>(is, "layer header");
  if (out == 0 || in == 0) throw std::runtime_error("checkpoint: zero layer dimension");
  if (act > 1) throw std::runtime_error("checkpoint: unknown activation code");
  l.weight = Tensor(out, in);
  l.bias = Tensor(1, out);
  l.act = act == 1 ? Activation::kRelu : Activation::kIdentity;
  return l;
}

inline void put_layer_blob(std::ostream& os, const DenseLayer& l) {
  put_bytes(os, l.weight.data.data(), l.weight.data.size() * sizeof(double));
  put_bytes(os, l.bias.data.data(), l.bias.data.size() * sizeof(double));
}

inline void get_layer_blob(std::istream& is, DenseLayer& l) {
  get_bytes(is, l.weight.data.data(), l.weight.data.size() * sizeof(double), "weights");
  get_bytes(is, l.bias.data.data(), l.bias.data.size() * sizeof(double), "bias");
}

inline std::ofstream open_out(const std::string& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("checkpoint: cannot write " + path);
  return os;
}

inline std::ifstream open_in(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("checkpoint: cannot read " + path);
  return is;
}

inline void check_magic(std::istream& is, const char expect[4], const std::string& path) {
  char m[4];
  get_bytes(is, m, 4, "magic");
  if (std::memcmp(m, expect, 4) != 0)
    throw std::runtime_error("checkpoint: " + path + " is not a " +
                             std::string(expect, 4) + " file");
}

}  // namespace detail

inline void save_autoencoder(const std::string& path, const AutoencoderPair& p) {
  auto os = detail::open_out(path);
  detail::put_bytes(os, "LLAE", 4);
  detail::put<std::uint16_t>(os, 1);
  detail::put<std::uint8_t>(os, p.mode == AeMode::kVae ? 1 : 0);
  detail::put<std::uint8_t>(os, 0);
  detail::put<double>(os, p.beta);
  detail::put<std::uint32_t>(os, static_cast<std::uint32_t>(p.latent_dim));
  detail::put<std::uint32_t>(os, static_cast<std::uint32_t>(p.encoder.layers.size()));
  detail::put<std::uint32_t>(os, static_cast<std::uint32_t>(p.decoder.layers.size()));
  for (const auto& l : p.encoder.layers) detail::put_layer_header(os, l);
  for (const auto& l : p.decoder.layers) detail::put_layer_header(os, l);
  for (const auto& l : p.encoder.layers) detail::put_layer_blob(os, l);
  for (const auto& l : p.decoder.layers) detail::put_layer_blob(os, l);
  if (!os) throw std::runtime_error("checkpoint: write failed for " + path);
}

inline AutoencoderPair load_autoencoder(const std::string& path) {
  auto is = detail::open_in(path);
  detail::check_magic(is, "LLAE", path);
  auto version = detail::get<std::uint16_t>(is, "version");
  if (version != 1)
    throw std::runtime_error("checkpoint: unsupported LLAE version " +
                             std::to_string(version));
  AutoencoderPair p;
  auto mode = detail::get<std::uint8_t>(is, "mode");
  if (mode > 1) throw std::runtime_error("checkpoint: unknown autoencoder mode");
  p.mode = mode == 1 ? AeMode::kVae : AeMode::kPlain;
  detail::get<std::uint8_t>(is, "pad");
  p.beta = detail::get<double>(is, "beta");
  p.latent_dim = detail::get<std::uint32_t>(is, "latent_dim");
  auto n_enc = detail::get<std::uint32_t>(is, "enc layer count");
  auto n_dec = detail::get<std::uint32_t>(is, "dec layer count");
  if (n_enc == 0 || n_dec == 0) throw std::runtime_error("checkpoint: empty model");
  for (std::uint32_t i = 0; i < n_enc; ++i)
    p.encoder.layers.push_back(detail::get_layer_header(is));
  for (std::uint32_t i = 0; i < n_dec; ++i)
    p.decoder.layers.push_back(detail::get_layer_header(is));
  for (auto& l : p.encoder.layers) detail::get_layer_blob(is, l);
  for (auto& l : p.decoder.layers) detail::get_layer_blob(is, l);
  require_valid(p.encoder, "load_autoencoder(encoder)");
  require_valid(p.decoder, "load_autoencoder(decoder)");
  return p;
}

inline void save_adversarial_model(const std::string& path, const AdversarialModel& m) {
  auto os = detail::open_out(path);
  detail::put_bytes(os, "LLGM", 4);
  detail::put<std::uint16_t>(os, 1);
  detail::put<std::uint16_t>(os, 0);
  detail::put<std::uint32_t>(os, static_cast<std::uint32_t>(m.leak_index));
  detail::put<std::uint32_t>(os, static_cast<std::uint32_t>(m.k));
  detail::put<std::uint32_t>(os, static_cast<std::uint32_t>(m.d));
  detail::put<std::uint32_t>(os, static_cast<std::uint32_t>(m.o));
  detail::put<std::uint32_t>(os, static_cast<std::uint32_t>(m.model.layers.size()));
  for (const auto& l : m.model.layers) detail::put_layer_header(os, l);
  for (const auto& l : m.model.layers) detail::put_layer_blob(os, l);
  if (!os) throw std::runtime_error("checkpoint: write failed for " + path);
}

inline AdversarialModel load_adversarial_model(const std::string& path) {
  auto is = detail::open_in(path);
  detail::check_magic(is, "LLGM", path);
  auto version = detail::get<std::uint16_t>(is, "version");
  if (version != 1)
    throw std::runtime_error("checkpoint: unsupported LLGM version " +
                             std::to_string(version));
  detail::get<std::uint16_t>(is, "pad");
  AdversarialModel m;
  m.leak_index = detail::get<std::uint32_t>(is, "leak_index");
  m.k = detail::get<std::uint32_t>(is, "k");
  m.d = detail::get<std::uint32_t>(is, "d");
  m.o = detail::get<std::uint32_t>(is, "o");
  auto n = detail::get<std::uint32_t>(is, "layer count");
  if (n == 0) throw std::runtime_error("checkpoint: empty model");
  for (std::uint32_t i = 0; i < n; ++i)
    m.model.layers.push_back(detail::get_layer_header(is));
  for (auto& l : m.model.layers) detail::get_layer_blob(is, l);
  require_valid(m.model, "load_adversarial_model");
  if (m.leak_index + 1 >= m.model.layers.size())
    throw std::runtime_error("checkpoint: leak_index out of range");
  return m;
}

}  // namespace linleak
