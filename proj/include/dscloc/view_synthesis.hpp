#pragma once

// Depth-induced pixel mapping between two views and bilinear resampling of the
// source image into the target view.

#include <cmath>
#include <type_traits>
#include <utility>
#include <vector>

#include "dscloc/geometry.hpp"
#include "dscloc/image.hpp"

namespace dscloc {

/// Transformed points at or behind this camera-frame depth are rejected.
inline constexpr double kMinProjectedDepth = 1e-6;

template <class T>
struct PixelMap {
  int width = 0;
  int height = 0;
  std::vector<T> u;
  std::vector<T> v;

  PixelMap() = default;
  PixelMap(int w, int h) : width(w), height(h), u(std::size_t(w) * h, T(0.0)), v(std::size_t(w) * h, T(0.0)) {}
};

namespace detail {

// depth * (R_row . ray) + t_k
template <class D, class R>
Product<D, R> affine_row(const D& depth, const R& r0, const R& r1, const R& r2, const R& tk, const Vec3<double>& ray) {
  if constexpr (std::same_as<D, ad::Var> || std::same_as<R, ad::Var>) {
    const ad::Var d(depth), a(r0), b(r1), c(r2), t(tk);
    const double dot_r = value_of(a) * ray[0] + value_of(b) * ray[1] + value_of(c) * ray[2];
    const double dv = value_of(d);
    return ad::fused<5>(ad::Op::kAffine, dv * dot_r + value_of(t), {&d, &a, &b, &c, &t},
                        {dot_r, dv * ray[0], dv * ray[1], dv * ray[2], 1.0});
  } else {
    return depth * (r0 * ray[0] + r1 * ray[1] + r2 * ray[2]) + tk;
  }
}

// f * x / z + c
template <class T>
T project(const T& x, const T& z, double f, double c) {
  if constexpr (std::same_as<T, ad::Var>) {
    const double inv = 1.0 / z.value();
    const double q = x.value() * inv;
    return ad::fused<2>(ad::Op::kProject, f * q + c, {&x, &z}, {f * inv, -f * q * inv});
  } else {
    return f * x / z + c;
  }
}

}  // namespace detail

/// For every target pixel p: x_s = R (D_t(p) K_t^-1 [p; 1]) + t, projected with
/// K_s. A pixel is valid when x_s lies in front of the source camera and its
/// full bilinear footprint lies inside the source image.
template <class D, class R>
std::pair<PixelMap<Product<D, R>>, ValidMask> pixel_map(const DepthMap<D>& depth, const RelativeTransform<R>& transform,
                                                        const Intrinsics& K_t, const Intrinsics& K_s, int source_width,
                                                        int source_height) {
  using T = Product<D, R>;
  PixelMap<T> map(depth.width, depth.height);
  ValidMask mask(depth.width, depth.height, false);
  const auto& Rm = transform.rotation;
  const auto& t = transform.translation;
  const double max_u = source_width - 1.0;
  const double max_v = source_height - 1.0;
  for (int y = 0; y < depth.height; ++y) {
    for (int x = 0; x < depth.width; ++x) {
      const std::size_t i = std::size_t(y) * depth.width + x;
      const D& d = depth.data[i];
      if (!(value_of(d) > 0.0)) throw std::invalid_argument("pixel_map: depth must be strictly positive");
      const Vec3<double> ray = K_t.ray(x, y);
      const T zs = detail::affine_row(d, Rm(2, 0), Rm(2, 1), Rm(2, 2), t[2], ray);
      if (!(value_of(zs) > kMinProjectedDepth)) continue;
      const T xs = detail::affine_row(d, Rm(0, 0), Rm(0, 1), Rm(0, 2), t[0], ray);
      const T ys = detail::affine_row(d, Rm(1, 0), Rm(1, 1), Rm(1, 2), t[1], ray);
      const T u = detail::project(xs, zs, K_s.fx, K_s.cx);
      const T v = detail::project(ys, zs, K_s.fy, K_s.cy);
      const double uv = value_of(u), vv = value_of(v);
      if (uv >= 0.0 && uv <= max_u && vv >= 0.0 && vv <= max_v) {
        map.u[i] = u;
        map.v[i] = v;
        mask.valid[i] = 1;
      }
    }
  }
  return {std::move(map), std::move(mask)};
}

namespace detail {

struct BilinearCell {
  int x0, y0;
  double fx, fy;  // fractional offsets in [0, 1]
};

// The upper neighbor is clamped so a coordinate on the last row/column keeps
// an in-bounds footprint; the derivative used is the right-derivative.
inline BilinearCell bilinear_cell(double u, double v, int width, int height) {
  int x0 = static_cast<int>(std::floor(u));
  int y0 = static_cast<int>(std::floor(v));
  x0 = std::min(std::max(x0, 0), width - 2);
  y0 = std::min(std::max(y0, 0), height - 2);
  return {x0, y0, u - x0, v - y0};
}

}  // namespace detail

/// Bilinear interpolation of the four neighbors; masked-out pixels are 0.
template <class TI, class TC>
Image<Product<TI, TC>> bilinear_sample(const Image<TI>& image, const PixelMap<TC>& coords, const ValidMask& mask) {
  using T = Product<TI, TC>;
  if (image.width < 2 || image.height < 2) throw std::invalid_argument("bilinear_sample: image smaller than 2x2");
  Image<T> out(coords.width, coords.height, image.channels, T(0.0));
  for (int y = 0; y < coords.height; ++y) {
    for (int x = 0; x < coords.width; ++x) {
      const std::size_t i = std::size_t(y) * coords.width + x;
      if (!mask.valid[i]) continue;
      const TC& u = coords.u[i];
      const TC& v = coords.v[i];
      const auto cell = detail::bilinear_cell(value_of(u), value_of(v), image.width, image.height);
      for (int c = 0; c < image.channels; ++c) {
        const TI& i00 = image.at(cell.x0, cell.y0, c);
        const TI& i10 = image.at(cell.x0 + 1, cell.y0, c);
        const TI& i01 = image.at(cell.x0, cell.y0 + 1, c);
        const TI& i11 = image.at(cell.x0 + 1, cell.y0 + 1, c);
        if constexpr (std::same_as<TI, double>) {
          const double top = i00 + cell.fx * (i10 - i00);
          const double bottom = i01 + cell.fx * (i11 - i01);
          const double value = top + cell.fy * (bottom - top);
          if constexpr (std::same_as<TC, ad::Var>) {
            const double du = (1.0 - cell.fy) * (i10 - i00) + cell.fy * (i11 - i01);
            const double dv = bottom - top;
            out.at(x, y, c) = ad::fused<2>(ad::Op::kBilinear, value, {&u, &v}, {du, dv});
          } else {
            out.at(x, y, c) = value;
          }
        } else {
          const TC fx = u - double(cell.x0);
          const TC fy = v - double(cell.y0);
          const T top = i00 + fx * (i10 - i00);
          const T bottom = i01 + fx * (i11 - i01);
          out.at(x, y, c) = top + fy * (bottom - top);
        }
      }
    }
  }
  return out;
}

template <class T>
struct Synthesis {
  Image<T> image;
  ValidMask mask;
};

/// Target view rendered by resampling the source image through the target depth.
template <class D, class R>
Synthesis<Product<D, R>> synthesize(const ImageBuffer& source, const DepthMap<D>& target_depth,
                                    const RelativeTransform<R>& transform, const Intrinsics& K_t,
                                    const Intrinsics& K_s) {
  auto [map, mask] = pixel_map(target_depth, transform, K_t, K_s, source.width, source.height);
  auto image = bilinear_sample(source, map, mask);
  return {std::move(image), std::move(mask)};
}

}  // namespace dscloc
