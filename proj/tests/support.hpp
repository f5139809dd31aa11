#pragma once

// Shared oracles for the test suite. Everything here is written as the
// dumbest possible re-computation of the quantity under test, on purpose:
// these functions are the reference the library must agree with.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

#include "linleak/nn.hpp"
#include "linleak/tensor.hpp"

namespace oracle {

// Write a big-endian u8 image/label pair for ingestion tests.
inline void write_idx(const std::string& images_path, const std::string& labels_path,
                      const std::vector<std::vector<unsigned char>>& images,
                      const std::vector<unsigned char>& labels, std::uint32_t rows,
                      std::uint32_t cols) {
  auto be = [](std::ofstream& os, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v >> 24),
                          static_cast<unsigned char>(v >> 16),
                          static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v)};
    os.write(reinterpret_cast<char*>(b), 4);
  };
  std::ofstream imgs(images_path, std::ios::binary | std::ios::trunc);
  be(imgs, 2051);
  be(imgs, static_cast<std::uint32_t>(images.size()));
  be(imgs, rows);
  be(imgs, cols);
  for (const auto& im : images)
    imgs.write(reinterpret_cast<const char*>(im.data()),
               static_cast<std::streamsize>(im.size()));
  std::ofstream labs(labels_path, std::ios::binary | std::ios::trunc);
  be(labs, 2049);
  be(labs, static_cast<std::uint32_t>(labels.size()));
  labs.write(reinterpret_cast<const char*>(labels.data()),
             static_cast<std::streamsize>(labels.size()));
}

// Straight-line MLP forward, no caching, different loop nesting than the
// library kernel.
inline linleak::Tensor naive_forward(const linleak::Model& m, const linleak::Tensor& x) {
  linleak::Tensor cur = x;
  for (const auto& lay : m.layers) {
    linleak::Tensor next(cur.rows, lay.out_dim());
    for (std::size_t s = 0; s < cur.rows; ++s) {
      std::vector<double> row(lay.out_dim());
      for (std::size_t o = 0; o < lay.out_dim(); ++o) {
        double acc = 0.0;
        for (std::size_t i = lay.in_dim(); i-- > 0;) acc += lay.weight(o, i) * cur(s, i);
        row[o] = acc + lay.bias.data[o];
      }
      for (std::size_t o = 0; o < lay.out_dim(); ++o)
        next(s, o) = linleak::activate(lay.act, row[o]);
    }
    cur = std::move(next);
  }
  return cur;
}

// Central finite differences over every parameter of the model.
// loss must be a pure function of the model.
inline linleak::GradientSet fd_gradients(const linleak::Model& model,
                                         const std::function<double(const linleak::Model&)>& loss,
                                         double step = 1e-5) {
  linleak::Model m = model;
  linleak::GradientSet g = linleak::zero_like(m);
  for (std::size_t l = 0; l < m.layers.size(); ++l) {
    auto probe = [&](double& param, double& out) {
      const double orig = param;
      param = orig + step;
      const double up = loss(m);
      param = orig - step;
      const double down = loss(m);
      param = orig;
      out = (up - down) / (2.0 * step);
    };
    for (std::size_t i = 0; i < m.layers[l].weight.data.size(); ++i)
      probe(m.layers[l].weight.data[i], g.layers[l].weight.data[i]);
    for (std::size_t i = 0; i < m.layers[l].bias.data.size(); ++i)
      probe(m.layers[l].bias.data[i], g.layers[l].bias.data[i]);
  }
  return g;
}

// Largest relative disagreement between two gradient sets.
inline double max_rel_diff(const linleak::GradientSet& a, const linleak::GradientSet& b,
                           double floor = 1e-8) {
  double worst = 0.0;
  for (std::size_t l = 0; l < a.layers.size(); ++l) {
    auto scan = [&](const std::vector<double>& x, const std::vector<double>& y) {
      for (std::size_t i = 0; i < x.size(); ++i) {
        double denom = std::max({std::abs(x[i]), std::abs(y[i]), floor});
        worst = std::max(worst, std::abs(x[i] - y[i]) / denom);
      }
    };
    scan(a.layers[l].weight.data, b.layers[l].weight.data);
    scan(a.layers[l].bias.data, b.layers[l].bias.data);
  }
  return worst;
}

inline double pearson(const std::vector<double>& x, const std::vector<double>& y) {
  const std::size_t n = x.size();
  double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

// Two-pass PSNR recomputation.
inline double naive_psnr(const std::vector<double>& a, const std::vector<double>& b,
                         double max_i = 1.0) {
  double mse = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) mse += (a[i] - b[i]) * (a[i] - b[i]);
  mse /= static_cast<double>(a.size());
  if (mse < 1e-15) return 300.0;
  return 20.0 * std::log10(max_i / std::sqrt(mse));
}

// Exhaustive one-to-one assignment between originals and candidates that
// maximises the number of pairs with psnr >= th. Exponential, only for
// tiny instances.
inline std::size_t best_assignment_hits(const std::vector<std::vector<double>>& psnr,
                                        double th) {
  const std::size_t m = psnr.size();
  if (m == 0) return 0;
  const std::size_t r = psnr[0].size();
  std::vector<bool> used(r, false);
  std::function<std::size_t(std::size_t)> go = [&](std::size_t i) -> std::size_t {
    if (i == m) return 0;
    std::size_t best = go(i + 1);  // leave original i unmatched
    for (std::size_t j = 0; j < r; ++j) {
      if (used[j]) continue;
      used[j] = true;
      std::size_t sub = go(i + 1) + (psnr[i][j] >= th ? 1 : 0);
      used[j] = false;
      best = std::max(best, sub);
    }
    return best;
  };
  return go(0);
}

}  // namespace oracle
