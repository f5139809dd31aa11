#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace linleak {

/// Dense row-major matrix of doubles. Rank is always 2; vectors are
/// represented as 1xN or Nx1 as the context requires. All arithmetic in
/// the library runs in 64-bit floats with fixed ascending-index loops,
/// which keeps every result bitwise reproducible across runs.
struct Tensor {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Tensor() = default;
  Tensor(std::size_t r, std::size_t c, double fill = 0.0)
      : rows(r), cols(c), data(r * c, fill) {}

  static Tensor zeros(std::size_t r, std::size_t c) { return Tensor(r, c, 0.0); }

  static Tensor from_rows(std::size_t r, std::size_t c, std::vector<double> values) {
    if (values.size() != r * c)
      throw std::invalid_argument("Tensor::from_rows: " + std::to_string(values.size()) +
                                  " values for " + std::to_string(r) + "x" + std::to_string(c));
    Tensor t;
    t.rows = r;
    t.cols = c;
    t.data = std::move(values);
    return t;
  }

  std::size_t size() const { return data.size(); }

  double& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }

  bool same_shape(const Tensor& o) const { return rows == o.rows && cols == o.cols; }

  std::string shape_str() const {
    return std::to_string(rows) + "x" + std::to_string(cols);
  }

  /// Copy of row i as a 1xC tensor.
  Tensor row(std::size_t i) const {
    Tensor r(1, cols);
    for (std::size_t j = 0; j < cols; ++j) r.data[j] = (*this)(i, j);
    return r;
  }

  void add_scaled(const Tensor& o, double c) {
    require_same_shape(o, "add_scaled");
    for (std::size_t i = 0; i < data.size(); ++i) data[i] += c * o.data[i];
  }

  void scale(double c) {
    for (double& v : data) v *= c;
  }

  double max_abs() const {
    double m = 0.0;
    for (double v : data) m = std::max(m, std::abs(v));
    return m;
  }

  double l2_norm() const {
    double s = 0.0;
    for (double v : data) s += v * v;
    return std::sqrt(s);
  }

  bool all_finite() const {
    for (double v : data)
      if (!std::isfinite(v)) return false;
    return true;
  }

  void require_same_shape(const Tensor& o, const char* where) const {
    if (!same_shape(o))
      throw std::invalid_argument(std::string(where) + ": shape mismatch " + shape_str() +
                                  " vs " + o.shape_str());
  }
};

inline double max_abs_diff(const Tensor& a, const Tensor& b) {
  a.require_same_shape(b, "max_abs_diff");
  double m = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i)
    m = std::max(m, std::abs(a.data[i] - b.data[i]));
  return m;
}

}  // namespace linleak
