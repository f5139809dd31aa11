#pragma once

// Binary PGM (P5) / PPM (P6) writing and reading, plus a grid montage.
// Values map [0, 1] -> 0..255 with round-to-nearest.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "linleak/tensor.hpp"

namespace linleak {

struct Image {
  std::size_t height = 0, width = 0, channels = 1;
  std::vector<double> pixels;  // row-major, channels interleaved, [0, 1]
};

/// Write one image: channels == 1 emits P5, channels == 3 emits P6.
inline void write_image(const std::string& path, const Image& img) {
  if (img.channels != 1 && img.channels != 3)
    throw std::invalid_argument("write_image: " + std::to_string(img.channels) +
                                " channels (want 1 or 3)");
  if (img.pixels.size() != img.height * img.width * img.channels)
    throw std::invalid_argument("write_image: pixel count mismatch");
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("write_image: cannot write " + path);
  os << (img.channels == 1 ? "P5" : "P6") << "\n"
     << img.width << " " << img.height << "\n255\n";
  std::vector<unsigned char> bytes(img.pixels.size());
  for (std::size_t i = 0; i < img.pixels.size(); ++i) {
    double v = std::clamp(img.pixels[i], 0.0, 1.0);
    bytes[i] = static_cast<unsigned char>(std::lround(v * 255.0));
  }
  os.write(reinterpret_cast<const char*>(bytes.data()),
           static_cast<std::streamsize>(bytes.size()));
  if (!os) throw std::runtime_error("write_image: write failed for " + path);
}

inline Image read_image(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("read_image: cannot open " + path);
  std::string magic;
  is >> magic;
  if (magic != "P5" && magic != "P6")
    throw std::runtime_error("read_image: " + path + " is not P5/P6");
  auto next_token = [&]() {
    std::string tok;
    // headers may carry # comments between tokens
    while (is >> tok) {
      if (tok[0] != '#') return tok;
      std::string rest;
      std::getline(is, rest);
    }
    throw std::runtime_error("read_image: truncated header in " + path);
  };
  std::size_t w = std::stoul(next_token());
  std::size_t h = std::stoul(next_token());
  std::size_t maxval = std::stoul(next_token());
  if (maxval != 255)
    throw std::runtime_error("read_image: unsupported maxval " + std::to_string(maxval));
  is.get();  // single whitespace after maxval

  Image img;
  img.height = h;
  img.width = w;
  img.channels = magic == "P5" ? 1 : 3;
  std::vector<unsigned char> bytes(h * w * img.channels);
  is.read(reinterpret_cast<char*>(bytes.data()),
          static_cast<std::streamsize>(bytes.size()));
  if (static_cast<std::size_t>(is.gcount()) != bytes.size())
    throw std::runtime_error("read_image: truncated pixel data in " + path);
  img.pixels.resize(bytes.size());
  for (std::size_t i = 0; i < bytes.size(); ++i) img.pixels[i] = bytes[i] / 255.0;
  return img;
}

inline Image image_from_row(const Tensor& batch, std::size_t row, std::size_t height,
                            std::size_t width, std::size_t channels) {
  if (batch.cols != height * width * channels)
    throw std::invalid_argument("image_from_row: geometry " + std::to_string(height) +
                                "x" + std::to_string(width) + "x" +
                                std::to_string(channels) + " does not match " +
                                std::to_string(batch.cols) + " values");
  Image img;
  img.height = height;
  img.width = width;
  img.channels = channels;
  img.pixels.resize(batch.cols);
  for (std::size_t j = 0; j < batch.cols; ++j) img.pixels[j] = batch(row, j);
  return img;
}

/// Tile every row of a batch into a grid, row-major, with 1-px mid-gray
/// separators. cols defaults to ceil(sqrt(n)).
inline Image montage(const Tensor& batch, std::size_t height, std::size_t width,
                     std::size_t channels, std::size_t cols = 0) {
  if (batch.rows == 0) throw std::invalid_argument("montage: empty batch");
  if (batch.cols != height * width * channels)
    throw std::invalid_argument("montage: geometry mismatch");
  const std::size_t n = batch.rows;
  if (cols == 0)
    cols = static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(n))));
  const std::size_t rows = (n + cols - 1) / cols;

  Image out;
  out.height = rows * height + rows - 1;
  out.width = cols * width + cols - 1;
  out.channels = channels;
  out.pixels.assign(out.height * out.width * channels, 0.5);

  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t gr = i / cols, gc = i % cols;
    const std::size_t oy = gr * (height + 1), ox = gc * (width + 1);
    for (std::size_t y = 0; y < height; ++y)
      for (std::size_t x = 0; x < width; ++x)
        for (std::size_t ch = 0; ch < channels; ++ch)
          out.pixels[((oy + y) * out.width + (ox + x)) * channels + ch] =
              batch(i, (y * width + x) * channels + ch);
  }
  // unused cells stay mid-gray
  return out;
}

}  // namespace linleak
