#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "linleak/rng.hpp"
#include "linleak/tensor.hpp"

namespace linleak {

/// Labelled image collection. Pixels are flattened row-major
/// (height, width, channels interleaved) and always live in [0, 1].
struct Dataset {
  std::size_t height = 0, width = 0, channels = 1;
  Tensor images;  // n x (height * width * channels)
  std::vector<int> labels;
  std::size_t num_classes = 0;

  std::size_t size() const { return images.rows; }
  std::size_t dim() const { return images.cols; }
};

namespace detail {

// smoothstep on [0, 1]; the soft edge profile of every synthetic shape
inline double smooth01(double x) {
  x = std::clamp(x, 0.0, 1.0);
  return x * x * (3.0 - 2.0 * x);
}

// signed edge -> [0, 1] with soft width w
inline double soft_edge(double inside, double w) { return smooth01(inside / w + 0.5); }

struct ShapeParams {
  double cx, cy;  // jittered center in [-1, 1] coords
  double scale;   // size multiplier around 1
};

// One template value at normalized coords (u, v) in [-1, 1]^2.
// Shapes are intentionally low-frequency: soft edges keep two samples of
// the same class within a small jitter close in pixel space.
inline double shape_value(int kind, double u, double v, const ShapeParams& p) {
  const double w = 0.30;  // edge softness in normalized units
  double x = u - p.cx, y = v - p.cy;
  double r = std::sqrt(x * x + y * y);
  switch (kind) {
    case 0:  // small disc
      return soft_edge(0.205 * p.scale - r, w);
    case 1: {  // two discs on the diagonal
      double r1 = std::hypot(x - 0.42 * p.scale, y - 0.42 * p.scale);
      double r2 = std::hypot(x + 0.42 * p.scale, y + 0.42 * p.scale);
      return std::max(soft_edge(0.26 * p.scale - r1, w), soft_edge(0.26 * p.scale - r2, w));
    }
    case 2: {  // cross
      double hbar = soft_edge(0.18 * p.scale - std::abs(y), w) *
                    soft_edge(0.80 * p.scale - std::abs(x), w);
      double vbar = soft_edge(0.18 * p.scale - std::abs(x), w) *
                    soft_edge(0.80 * p.scale - std::abs(y), w);
      return std::max(hbar, vbar);
    }
    case 3:  // big disc
      return soft_edge(0.80 * p.scale - r, w);
    case 4:  // vertical bar
      return soft_edge(0.22 * p.scale - std::abs(x), w);
    case 5:  // horizontal bar
      return soft_edge(0.22 * p.scale - std::abs(y), w);
    case 6:  // ring
      return soft_edge(0.16 * p.scale - std::abs(r - 0.55 * p.scale), w);
    case 7:  // diagonal stripe
      return soft_edge(0.26 * p.scale - std::abs(x - y) * 0.7071067811865476, w);
    case 8:  // filled square
      return soft_edge(0.62 * p.scale - std::abs(x), w) *
             soft_edge(0.62 * p.scale - std::abs(y), w);
    default: {  // frame
      double outer = soft_edge(0.72 * p.scale - std::abs(x), w) *
                     soft_edge(0.72 * p.scale - std::abs(y), w);
      double inner = soft_edge(0.34 * p.scale - std::abs(x), w) *
                     soft_edge(0.34 * p.scale - std::abs(y), w);
      return std::max(0.0, outer - inner);
    }
  }
}

// The first four kinds step up in canvas coverage by roughly 2x each, so
// a 4-class dataset has disjoint per-class brightness bands: any two
// samples that collide in one brightness bin are then same-class and
// nearly identical, which keeps blended bins decodable. Later kinds
// (classes 5..10) interleave between the bands.
inline int class_shape_kind(int cls) {
  static const int order[10] = {0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
  return order[cls % 10];
}

}  // namespace detail

/// Synthetic grayscale corpus: per class one soft-edged shape family,
/// randomized in position (small jitter), scale, and intensity. The
/// jitter is kept narrow so that samples of one class stay close to
/// each other (pairwise PSNR well above 20 dB) while different classes
/// stay far apart; blends of colliding same-class samples then still
/// resemble each member. Same seed, same arguments: bitwise identical
/// dataset.
inline Dataset synth_shapes(std::size_t n, std::size_t size, std::size_t classes,
                            std::uint64_t seed) {
  if (n == 0 || size < 8) throw std::invalid_argument("synth_shapes: need n >= 1, size >= 8");
  if (classes == 0 || classes > 10)
    throw std::invalid_argument("synth_shapes: classes must be in 1..10");

  Dataset ds;
  ds.height = ds.width = size;
  ds.channels = 1;
  ds.num_classes = classes;
  ds.images = Tensor(n, size * size);
  ds.labels.resize(n);

  Rng rng(seed, 9001);
  for (std::size_t s = 0; s < n; ++s) {
    int cls = static_cast<int>(s % classes);
    ds.labels[s] = cls;
    detail::ShapeParams p;
    p.cx = rng.uniform(-0.04, 0.04);
    p.cy = rng.uniform(-0.04, 0.04);
    p.scale = rng.uniform(0.98, 1.02);
    double intensity = rng.uniform(0.72, 0.78);
    double bg = rng.uniform(0.0, 0.008);
    int kind = detail::class_shape_kind(cls);

    for (std::size_t py = 0; py < size; ++py)
      for (std::size_t px = 0; px < size; ++px) {
        double u = (2.0 * px + 1.0) / static_cast<double>(size) - 1.0;
        double v = (2.0 * py + 1.0) / static_cast<double>(size) - 1.0;
        double t = detail::shape_value(kind, u, v, p);
        ds.images(s, py * size + px) = std::clamp(bg + intensity * t, 0.0, 1.0);
      }
  }
  return ds;
}

/// Restrict to the listed classes (cap samples per class if cap > 0) and
/// remap the labels to 0..classes-1 in the order given.
inline Dataset filter_classes(const Dataset& ds, const std::vector<int>& classes,
                              std::size_t per_class_cap = 0) {
  if (classes.empty()) throw std::invalid_argument("filter_classes: empty class list");
  std::vector<int> remap(ds.num_classes, -1);
  for (std::size_t i = 0; i < classes.size(); ++i) {
    int c = classes[i];
    if (c < 0 || static_cast<std::size_t>(c) >= ds.num_classes)
      throw std::invalid_argument("filter_classes: class " + std::to_string(c) +
                                  " not present (dataset has " +
                                  std::to_string(ds.num_classes) + ")");
    if (remap[c] != -1)
      throw std::invalid_argument("filter_classes: duplicate class " + std::to_string(c));
    remap[c] = static_cast<int>(i);
  }

  std::vector<std::size_t> taken(classes.size(), 0);
  std::vector<std::size_t> keep;
  for (std::size_t s = 0; s < ds.size(); ++s) {
    int m = remap[ds.labels[s]];
    if (m < 0) continue;
    if (per_class_cap > 0 && taken[m] >= per_class_cap) continue;
    ++taken[m];
    keep.push_back(s);
  }
  if (keep.empty()) throw std::invalid_argument("filter_classes: no samples survived");

  Dataset out;
  out.height = ds.height;
  out.width = ds.width;
  out.channels = ds.channels;
  out.num_classes = classes.size();
  out.images = Tensor(keep.size(), ds.dim());
  out.labels.resize(keep.size());
  for (std::size_t i = 0; i < keep.size(); ++i) {
    for (std::size_t j = 0; j < ds.dim(); ++j) out.images(i, j) = ds.images(keep[i], j);
    out.labels[i] = remap[ds.labels[keep[i]]];
  }
  return out;
}

}  // namespace linleak
