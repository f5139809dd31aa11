#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "linleak/nn.hpp"
#include "linleak/tensor.hpp"

namespace linleak {

/// Brightness of a feature vector: the plain mean of its entries. The
/// leak layer bins samples by this scalar, so everything downstream
/// (thresholds, occupancy, recovery) is phrased in terms of it.
inline double brightness(const std::vector<double>& v) {
  if (v.empty()) throw std::invalid_argument("brightness: empty vector");
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

/// Brightness of every row of a batch.
inline std::vector<double> brightness_rows(const Tensor& batch) {
  if (batch.rows == 0 || batch.cols == 0)
    throw std::invalid_argument("brightness_rows: empty batch");
  std::vector<double> out(batch.rows);
  for (std::size_t s = 0; s < batch.rows; ++s) {
    double acc = 0.0;
    for (std::size_t j = 0; j < batch.cols; ++j) acc += batch(s, j);
    out[s] = acc / static_cast<double>(batch.cols);
  }
  return out;
}

/// Empirical distribution of a scalar feature, kept as the sorted sample
/// list. inverse() linearly interpolates between order statistics.
struct EmpiricalCdf {
  std::vector<double> samples;  // ascending, duplicates kept

  double inverse(double q) const {
    if (q < 0.0 || q > 1.0)
      throw std::invalid_argument("EmpiricalCdf::inverse: q = " + std::to_string(q));
    const std::size_t n = samples.size();
    double pos = q * static_cast<double>(n - 1);
    std::size_t lo = static_cast<std::size_t>(pos);
    if (lo >= n - 1) return samples[n - 1];
    double frac = pos - static_cast<double>(lo);
    return samples[lo] + frac * (samples[lo + 1] - samples[lo]);
  }

  bool degenerate() const { return samples.front() == samples.back(); }
};

inline EmpiricalCdf fit_cdf(std::vector<double> values) {
  if (values.size() < 2)
    throw std::invalid_argument("fit_cdf: need at least 2 samples, got " +
                                std::to_string(values.size()));
  for (double v : values)
    if (!std::isfinite(v)) throw std::invalid_argument("fit_cdf: non-finite sample");
  std::sort(values.begin(), values.end());
  return EmpiricalCdf{std::move(values)};
}

/// The two crafted layers the attacker plants at the front of the MLP
/// trunk. Every row of w1 is the uniform averaging row (1/d, ..., 1/d),
/// so unit i pre-activates to brightness(x) - h_i; the thresholds h are
/// equal-probability quantiles of the auxiliary brightness distribution,
/// which spreads a target batch uniformly over the k bins. w2 is a
/// constant matrix, making dL/dy identical across active units of one
/// sample; that is what turns weight/bias gradient differences into
/// per-bin feature averages.
struct LeakPair {
  Tensor w1;  // k x d, all entries 1/d
  Tensor b1;  // 1 x k, entry i is -h_{i+1}
  Tensor w2;  // o x k, all entries w2_row_value
  Tensor b2;  // 1 x o, zero
  std::vector<double> thresholds;  // h_1 <= ... <= h_k

  std::size_t k() const { return w1.rows; }
  std::size_t d() const { return w1.cols; }
  std::size_t o() const { return w2.rows; }
};

/// Quantile positions are i/(k+1), i = 1..k, i.e. the open grid that
/// leaves mass below h_1 and above h_k; the band below h_1 is a
/// dead zone whose samples activate nothing.
inline LeakPair craft_leak_pair(const EmpiricalCdf& cdf, std::size_t k, std::size_t d,
                                std::size_t o, double w2_row_value = 1.0) {
  if (k == 0 || d == 0 || o == 0)
    throw std::invalid_argument("craft_leak_pair: zero dimension");
  if (cdf.samples.size() < 2)
    throw std::invalid_argument("craft_leak_pair: cdf has too few samples");
  if (cdf.degenerate())
    throw std::invalid_argument(
        "craft_leak_pair: degenerate brightness distribution (all samples equal)");
  if (!(w2_row_value > 0.0))
    throw std::invalid_argument(
        "craft_leak_pair: w2_row_value must be positive to pass the relu trunk");

  LeakPair p;
  p.w1 = Tensor(k, d, 1.0 / static_cast<double>(d));
  p.b1 = Tensor(1, k);
  p.thresholds.resize(k);
  for (std::size_t i = 0; i < k; ++i) {
    double h = cdf.inverse(static_cast<double>(i + 1) / static_cast<double>(k + 1));
    p.thresholds[i] = h;
    p.b1.data[i] = -h;
  }
  for (std::size_t i = 1; i < k; ++i)
    if (p.thresholds[i] < p.thresholds[i - 1])
      throw std::logic_error("craft_leak_pair: thresholds not monotone");
  p.w2 = Tensor(o, k, w2_row_value);
  p.b2 = Tensor(1, o);
  return p;
}

struct RecoveredBins {
  struct Bin {
    bool recovered = false;
    std::vector<double> lsr;  // length d when recovered
  };
  std::vector<Bin> bins;      // one per unit, index = bin
  double epsilon_empty = 0.0;

  std::size_t recovered_count() const {
    std::size_t n = 0;
    for (const auto& b : bins) n += b.recovered ? 1 : 0;
    return n;
  }

  std::vector<std::size_t> recovered_indices() const {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < bins.size(); ++i)
      if (bins[i].recovered) idx.push_back(i);
    return idx;
  }
};

/// Inverts the leak: bin r's feature average is the ratio of adjacent
/// gradient differences,
///
///   lsr_r = (grad_w1(r) - grad_w1(r+1)) / (grad_b1(r) - grad_b1(r+1)),
///
/// with the out-of-range terms at r = k taken as zero. The denominator
/// of an empty bin is exactly zero in noiseless arithmetic (identical
/// sample subsets summed in identical order), so the empty test uses a
/// relative epsilon of 1e-9 * max(1, max |grad_b1|).
inline RecoveredBins recover_lsrs(const Tensor& grad_w1, const Tensor& grad_b1) {
  const std::size_t k = grad_w1.rows, d = grad_w1.cols;
  if (grad_b1.size() != k)
    throw std::invalid_argument("recover_lsrs: grad_b1 has " +
                                std::to_string(grad_b1.size()) + " entries for k = " +
                                std::to_string(k));
  if (!grad_w1.all_finite() || !grad_b1.all_finite())
    throw std::invalid_argument("recover_lsrs: non-finite gradient");

  RecoveredBins out;
  out.bins.resize(k);
  out.epsilon_empty = 1e-9 * std::max(1.0, grad_b1.max_abs());
  for (std::size_t r = 0; r < k; ++r) {
    double db = grad_b1.data[r] - (r + 1 < k ? grad_b1.data[r + 1] : 0.0);
    if (std::abs(db) <= out.epsilon_empty) continue;
    auto& bin = out.bins[r];
    bin.recovered = true;
    bin.lsr.resize(d);
    for (std::size_t j = 0; j < d; ++j) {
      double dw = grad_w1(r, j) - (r + 1 < k ? grad_w1(r + 1, j) : 0.0);
      bin.lsr[j] = dw / db;
      if (!std::isfinite(bin.lsr[j]))
        throw std::invalid_argument("recover_lsrs: non-finite ratio in bin " +
                                    std::to_string(r));
    }
  }
  return out;
}

/// Ground-truth bin occupancy for a brightness list: bin r holds the
/// samples with thresholds[r] < b <= thresholds[r+1] (last bin open
/// above), and b <= thresholds[0] lands in the below-range bucket.
struct BinOccupancy {
  std::vector<std::size_t> counts;
  std::size_t below_range = 0;

  std::size_t singly_occupied() const {
    std::size_t n = 0;
    for (std::size_t c : counts) n += c == 1 ? 1 : 0;
    return n;
  }
};

inline BinOccupancy bin_occupancy(const std::vector<double>& brightness_values,
                                  const std::vector<double>& thresholds) {
  if (thresholds.empty()) throw std::invalid_argument("bin_occupancy: no thresholds");
  for (std::size_t i = 1; i < thresholds.size(); ++i)
    if (thresholds[i] < thresholds[i - 1])
      throw std::invalid_argument("bin_occupancy: thresholds not sorted at " +
                                  std::to_string(i));
  BinOccupancy occ;
  occ.counts.assign(thresholds.size(), 0);
  for (double b : brightness_values) {
    if (b <= thresholds[0]) {
      ++occ.below_range;
      continue;
    }
    // largest r with thresholds[r] < b
    std::size_t r =
        static_cast<std::size_t>(std::lower_bound(thresholds.begin(), thresholds.end(), b) -
                                 thresholds.begin()) -
        1;
    ++occ.counts[r];
  }
  return occ;
}

/// Full malicious global model: benign-looking encoder, the crafted
/// pair, then the benign head. Clients cannot tell it from an honest
/// initialisation by architecture alone.
struct AdversarialModel {
  Model model;
  std::size_t leak_index = 0;  // position of w1/b1 within model.layers
  std::size_t k = 0, d = 0, o = 0;
};

inline AdversarialModel assemble_adversarial_model(const Model& encoder,
                                                   const LeakPair& pair,
                                                   const Model& head) {
  require_valid(encoder, "assemble_adversarial_model(encoder)");
  require_valid(head, "assemble_adversarial_model(head)");
  if (encoder.output_dim() != pair.d())
    throw std::invalid_argument("assemble_adversarial_model: encoder emits " +
                                std::to_string(encoder.output_dim()) +
                                ", leak pair expects d = " + std::to_string(pair.d()));
  if (head.input_dim() != pair.o())
    throw std::invalid_argument("assemble_adversarial_model: head expects " +
                                std::to_string(head.input_dim()) +
                                ", leak pair emits o = " + std::to_string(pair.o()));

  AdversarialModel adv;
  adv.model = encoder;
  adv.model.layers.push_back({pair.w1, pair.b1, Activation::kRelu});
  adv.model.layers.push_back({pair.w2, pair.b2, Activation::kRelu});
  for (const auto& lay : head.layers) adv.model.layers.push_back(lay);
  adv.leak_index = encoder.layers.size();
  adv.k = pair.k();
  adv.d = pair.d();
  adv.o = pair.o();
  require_valid(adv.model, "assemble_adversarial_model(result)");
  return adv;
}

/// Bin thresholds read back from the assembled model (b1 stores their
/// negatives).
inline std::vector<double> leak_thresholds(const AdversarialModel& adv) {
  if (adv.leak_index >= adv.model.layers.size())
    throw std::invalid_argument("leak_thresholds: leak index out of range");
  const Tensor& b1 = adv.model.layers[adv.leak_index].bias;
  std::vector<double> h(b1.data.size());
  for (std::size_t i = 0; i < h.size(); ++i) h[i] = -b1.data[i];
  return h;
}

}  // namespace linleak
