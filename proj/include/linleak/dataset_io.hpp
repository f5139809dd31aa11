#pragma once

// External dataset ingestion: the big-endian u8 image/label container
// (magic 2051/2049) and a label,pixel,... CSV form.

#include <cstdint>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "linleak/dataset.hpp"

namespace linleak {

namespace detail {

inline std::uint32_t read_be_u32(std::istream& is, const char* what) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  if (is.gcount() != 4)
    throw std::runtime_error(std::string("idx: truncated while reading ") + what);
  return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) |
         (std::uint32_t(b[2]) << 8) | std::uint32_t(b[3]);
}

}  // namespace detail

/// Load a u8 image file (magic 2051) plus its label file (magic 2049).
/// Pixels scale to [0, 1] by /255; counts must agree.
inline Dataset load_idx(const std::string& images_path, const std::string& labels_path) {
  std::ifstream imgs(images_path, std::ios::binary);
  if (!imgs) throw std::runtime_error("idx: cannot open " + images_path);
  if (detail::read_be_u32(imgs, "image magic") != 2051u)
    throw std::runtime_error("idx: " + images_path + " has wrong image magic");
  const std::uint32_t n = detail::read_be_u32(imgs, "image count");
  const std::uint32_t rows = detail::read_be_u32(imgs, "rows");
  const std::uint32_t cols = detail::read_be_u32(imgs, "cols");
  if (n == 0 || rows == 0 || cols == 0)
    throw std::runtime_error("idx: empty image container " + images_path);

  std::vector<unsigned char> pixels(static_cast<std::size_t>(n) * rows * cols);
  imgs.read(reinterpret_cast<char*>(pixels.data()),
            static_cast<std::streamsize>(pixels.size()));
  if (static_cast<std::size_t>(imgs.gcount()) != pixels.size())
    throw std::runtime_error("idx: truncated pixel data in " + images_path);

  std::ifstream labs(labels_path, std::ios::binary);
  if (!labs) throw std::runtime_error("idx: cannot open " + labels_path);
  if (detail::read_be_u32(labs, "label magic") != 2049u)
    throw std::runtime_error("idx: " + labels_path + " has wrong label magic");
  const std::uint32_t ln = detail::read_be_u32(labs, "label count");
  if (ln != n)
    throw std::runtime_error("idx: " + std::to_string(n) + " images but " +
                             std::to_string(ln) + " labels");
  std::vector<unsigned char> raw_labels(ln);
  labs.read(reinterpret_cast<char*>(raw_labels.data()), ln);
  if (static_cast<std::size_t>(labs.gcount()) != raw_labels.size())
    throw std::runtime_error("idx: truncated label data in " + labels_path);

  Dataset ds;
  ds.height = rows;
  ds.width = cols;
  ds.channels = 1;
  ds.images = Tensor(n, static_cast<std::size_t>(rows) * cols);
  ds.labels.resize(n);
  int max_label = 0;
  for (std::uint32_t s = 0; s < n; ++s) {
    for (std::size_t j = 0; j < static_cast<std::size_t>(rows) * cols; ++j)
      ds.images(s, j) = pixels[static_cast<std::size_t>(s) * rows * cols + j] / 255.0;
    ds.labels[s] = raw_labels[s];
    max_label = std::max(max_label, ds.labels[s]);
  }
  ds.num_classes = static_cast<std::size_t>(max_label) + 1;
  return ds;
}

/// CSV rows of label,pixel,pixel,... with the geometry supplied by the
/// caller. Pixel scale is auto-detected: any value above 1 means the
/// file is 0..255.
inline Dataset load_csv(const std::string& path, std::size_t height, std::size_t width,
                        std::size_t channels) {
  if (height == 0 || width == 0 || channels == 0)
    throw std::invalid_argument("load_csv: zero geometry");
  std::ifstream is(path);
  if (!is) throw std::runtime_error("csv: cannot open " + path);

  const std::size_t dim = height * width * channels;
  std::vector<std::vector<double>> rows;
  std::vector<int> labels;
  std::string line;
  std::size_t lineno = 0;
  double max_value = 0.0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::vector<double> vals;
    while (std::getline(ss, cell, ',')) {
      try {
        std::size_t used = 0;
        double v = std::stod(cell, &used);
        while (used < cell.size() && (cell[used] == ' ' || cell[used] == '\r')) ++used;
        if (used != cell.size()) throw std::invalid_argument(cell);
        vals.push_back(v);
      } catch (const std::exception&) {
        throw std::runtime_error("csv: non-numeric value '" + cell + "' at line " +
                                 std::to_string(lineno));
      }
    }
    if (vals.size() != dim + 1)
      throw std::runtime_error("csv: line " + std::to_string(lineno) + " has " +
                               std::to_string(vals.size()) + " fields, expected " +
                               std::to_string(dim + 1));
    double lab = vals[0];
    if (lab < 0 || lab != std::floor(lab))
      throw std::runtime_error("csv: bad label at line " + std::to_string(lineno));
    labels.push_back(static_cast<int>(lab));
    vals.erase(vals.begin());
    for (double v : vals) max_value = std::max(max_value, v);
    rows.push_back(std::move(vals));
  }
  if (rows.empty()) throw std::runtime_error("csv: no data rows in " + path);

  const double scale = max_value > 1.0 ? 1.0 / 255.0 : 1.0;
  Dataset ds;
  ds.height = height;
  ds.width = width;
  ds.channels = channels;
  ds.images = Tensor(rows.size(), dim);
  ds.labels = labels;
  int max_label = 0;
  for (std::size_t s = 0; s < rows.size(); ++s) {
    for (std::size_t j = 0; j < dim; ++j) {
      double v = rows[s][j] * scale;
      if (v < 0.0 || v > 1.0)
        throw std::runtime_error("csv: pixel out of range at line " + std::to_string(s + 1));
      ds.images(s, j) = v;
    }
    max_label = std::max(max_label, ds.labels[s]);
  }
  ds.num_classes = static_cast<std::size_t>(max_label) + 1;
  return ds;
}

}  // namespace linleak
