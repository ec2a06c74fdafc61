#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "dscloc/scalar.hpp"

namespace dscloc {

/// Row-major interleaved image. Color images hold values in [0, 1].
template <class T>
struct Image {
  int width = 0;
  int height = 0;
  int channels = 1;
  std::vector<T> data;

  Image() = default;
  Image(int w, int h, int c, T fill = T(0.0)) : width(w), height(h), channels(c), data(std::size_t(w) * h * c, fill) {
    if (w <= 0 || h <= 0 || c <= 0) throw std::invalid_argument("image dimensions must be positive");
  }

  std::size_t index(int x, int y, int c = 0) const { return (std::size_t(y) * width + x) * channels + c; }
  T& at(int x, int y, int c = 0) { return data[index(x, y, c)]; }
  const T& at(int x, int y, int c = 0) const { return data[index(x, y, c)]; }
  std::size_t pixel_count() const { return std::size_t(width) * height; }

  bool same_shape(int w, int h) const { return width == w && height == h; }
  template <class U>
  bool same_shape(const Image<U>& o) const {
    return width == o.width && height == o.height;
  }
};

using ImageBuffer = Image<double>;

/// Dense per-pixel depth, strictly positive where valid.
template <class T>
using DepthMap = Image<T>;

struct ValidMask {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> valid;

  ValidMask() = default;
  ValidMask(int w, int h, bool fill) : width(w), height(h), valid(std::size_t(w) * h, fill ? 1 : 0) {}

  bool at(int x, int y) const { return valid[std::size_t(y) * width + x] != 0; }
  std::size_t count() const {
    std::size_t n = 0;
    for (auto v : valid) n += v;
    return n;
  }
};

template <class T>
Image<double> value_of(const Image<T>& img) {
  Image<double> out;
  out.width = img.width;
  out.height = img.height;
  out.channels = img.channels;
  out.data.resize(img.data.size());
  for (std::size_t i = 0; i < img.data.size(); ++i) out.data[i] = value_of(img.data[i]);
  return out;
}

}  // namespace dscloc
