#pragma once

// Photometric re-projection, edge-aware depth smoothness and pose coordinate
// losses, their weighted total, and loop-closed frame pair scheduling.

#include <array>
#include <cmath>
#include <optional>
#include <span>
#include <stdexcept>
#include <type_traits>
#include <vector>

#include "dscloc/geometry.hpp"
#include "dscloc/image.hpp"

namespace dscloc {

struct LossWeights {
  double alpha = 0.85;  // SSIM share of the photometric term
  double w_s = 0.001;   // smoothness
  double w_c = 0.03;    // pose coordinate

  void validate() const {
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw std::invalid_argument("alpha must lie in [0, 1]");
    if (!(w_s >= 0.0) || !(w_c >= 0.0)) throw std::invalid_argument("loss weights must be non-negative");
  }
};

inline constexpr double kSsimC1 = 0.01 * 0.01;
inline constexpr double kSsimC2 = 0.03 * 0.03;

namespace detail {

inline int reflect(int i, int n) {
  if (i < 0) return -i;
  if (i >= n) return 2 * n - 2 - i;
  return i;
}

// Local statistics over a 3x3 box window with reflective padding. With a
// mask, only window pixels inside the mask enter the statistics, so pixels
// zeroed by view synthesis never leak into the similarity of valid ones.
template <class TA, class TB>
class SsimEvaluator {
 public:
  using T = Product<TA, TB>;

  SsimEvaluator(const Image<TA>& a, const Image<TB>& b, const ValidMask* mask = nullptr) : a_(a), b_(b), mask_(mask) {
    if (!a.same_shape(b) || a.channels != b.channels) throw std::invalid_argument("ssim: image dimensions differ");
    if (mask && !a.same_shape(mask->width, mask->height)) throw std::invalid_argument("ssim: mask dimensions differ");
  }

  T at(int x, int y, int c) const {
    std::array<std::size_t, 9> idx;
    std::size_t n = 0;
    for (int dy = -1; dy <= 1; ++dy) {
      for (int dx = -1; dx <= 1; ++dx) {
        const int xr = reflect(x + dx, a_.width), yr = reflect(y + dy, a_.height);
        if (mask_ && !mask_->at(xr, yr)) continue;
        idx[n++] = a_.index(xr, yr, c);
      }
    }
    if (n == 0) throw std::invalid_argument("ssim: empty window");
    if constexpr (std::same_as<TA, double> && std::same_as<TB, ad::Var>) {
      return fused(idx, n);
    } else {
      return generic(idx, n);
    }
  }

 private:
  T generic(const std::array<std::size_t, 9>& idx, std::size_t n) const {
    std::array<TA, 9> as, aas;
    std::array<TB, 9> bs, bbs;
    std::array<T, 9> abs_;
    for (std::size_t k = 0; k < n; ++k) {
      as[k] = a_.data[idx[k]];
      bs[k] = b_.data[idx[k]];
      aas[k] = as[k] * as[k];
      bbs[k] = bs[k] * bs[k];
      abs_[k] = as[k] * bs[k];
    }
    const std::array<double, 9> w = weights(n);
    auto mean = [&](const auto& xs) {
      using U = typename std::decay_t<decltype(xs)>::value_type;
      return lin_comb(std::span<const U>(xs.data(), n), std::span<const double>(w.data(), n));
    };
    const TA mu_a = mean(as);
    const TB mu_b = mean(bs);
    const TA sigma_a = mean(aas) - mu_a * mu_a;
    const TB sigma_b = mean(bbs) - mu_b * mu_b;
    const T sigma_ab = mean(abs_) - mu_a * mu_b;
    const T num = (2.0 * mu_a * mu_b + kSsimC1) * (2.0 * sigma_ab + kSsimC2);
    const T den = (mu_a * mu_a + mu_b * mu_b + kSsimC1) * (sigma_a + sigma_b + kSsimC2);
    return num / den;
  }

  // One tape node with analytic partials for the differentiable b window.
  ad::Var fused(const std::array<std::size_t, 9>& idx, std::size_t n) const {
    const double inv = 1.0 / static_cast<double>(n);
    double ma = 0, mb = 0, saa = 0, sbb = 0, sab = 0;
    std::array<double, 9> av{}, bv{};
    for (std::size_t k = 0; k < n; ++k) {
      av[k] = a_.data[idx[k]];
      bv[k] = b_.data[idx[k]].value();
      ma += av[k];
      mb += bv[k];
      saa += av[k] * av[k];
      sbb += bv[k] * bv[k];
      sab += av[k] * bv[k];
    }
    ma *= inv;
    mb *= inv;
    const double va = saa * inv - ma * ma, vb = sbb * inv - mb * mb, cab = sab * inv - ma * mb;
    const double A1 = 2.0 * ma * mb + kSsimC1, A2 = 2.0 * cab + kSsimC2;
    const double B1 = ma * ma + mb * mb + kSsimC1, B2 = va + vb + kSsimC2;
    const double D = B1 * B2;
    const double S = A1 * A2 / D;
    std::array<const ad::Var*, 9> parents;
    std::array<double, 9> partial{};
    for (std::size_t k = 0; k < 9; ++k) {
      parents[k] = &b_.data[idx[std::min(k, n - 1)]];
      if (k >= n) continue;
      const double dA1 = 2.0 * ma * inv, dA2 = 2.0 * (av[k] - ma) * inv;
      const double dB1 = 2.0 * mb * inv, dB2 = 2.0 * (bv[k] - mb) * inv;
      partial[k] = (dA1 * A2 + A1 * dA2 - S * (dB1 * B2 + B1 * dB2)) / D;
    }
    return ad::fused<9>(ad::Op::kSsim, S, parents, partial);
  }

  static std::array<double, 9> weights(std::size_t n) {
    std::array<double, 9> w{};
    for (std::size_t k = 0; k < n; ++k) w[k] = 1.0 / static_cast<double>(n);
    return w;
  }

  const Image<TA>& a_;
  const Image<TB>& b_;
  const ValidMask* mask_;
};

}  // namespace detail

/// Per-pixel, per-channel structural similarity.
template <class TA, class TB>
Image<Product<TA, TB>> ssim_map(const Image<TA>& a, const Image<TB>& b) {
  const detail::SsimEvaluator<TA, TB> ssim(a, b);
  Image<Product<TA, TB>> out(a.width, a.height, a.channels);
  for (int y = 0; y < a.height; ++y)
    for (int x = 0; x < a.width; ++x)
      for (int c = 0; c < a.channels; ++c) out.at(x, y, c) = ssim.at(x, y, c);
  return out;
}

/// (1/|V|) Σ_{p∈V} [α (1 − SSIM(p))/2 + (1 − α) Σ_c |I_t − Î_t|], with SSIM(p)
/// the channel mean over window statistics restricted to V. Returns nullopt for
/// an empty valid set.
template <class T>
std::optional<T> photometric_loss(const ImageBuffer& target, const Image<T>& synthesized, const ValidMask& valid,
                                  double alpha) {
  if (!target.same_shape(synthesized) || target.channels != synthesized.channels ||
      !target.same_shape(valid.width, valid.height))
    throw std::invalid_argument("photometric_loss: dimension mismatch");
  const std::size_t n_valid = valid.count();
  if (n_valid == 0) return std::nullopt;
  const detail::SsimEvaluator<double, T> ssim(target, synthesized, &valid);
  const int C = target.channels;
  const double inv_v = 1.0 / static_cast<double>(n_valid);
  std::vector<T> terms;
  std::vector<double> weights;
  terms.reserve(n_valid * 2 * C);
  weights.reserve(n_valid * 2 * C);
  for (int y = 0; y < target.height; ++y) {
    for (int x = 0; x < target.width; ++x) {
      if (!valid.at(x, y)) continue;
      for (int c = 0; c < C; ++c) {
        terms.push_back(ssim.at(x, y, c));
        weights.push_back(-alpha / (2.0 * C) * inv_v);
        terms.push_back(abs(target.at(x, y, c) - synthesized.at(x, y, c)));
        weights.push_back((1.0 - alpha) * inv_v);
      }
    }
  }
  return T(alpha / 2.0) + lin_comb(std::span<const T>(terms), std::span<const double>(weights));
}

/// Mean over horizontal forward differences plus mean over vertical ones of
/// (e^{−|∇I|} ∇D)², |∇I| averaged over channels.
template <class T>
T smoothness_loss(const DepthMap<T>& depth, const ImageBuffer& image) {
  if (!depth.same_shape(image)) throw std::invalid_argument("smoothness_loss: dimension mismatch");
  const int W = depth.width, H = depth.height, C = image.channels;
  auto edge_weight = [&](int x0, int y0, int x1, int y1) {
    double g = 0.0;
    for (int c = 0; c < C; ++c) g += std::abs(image.at(x1, y1, c) - image.at(x0, y0, c));
    const double w = std::exp(-g / C);
    return w * w;
  };
  std::vector<T> terms;
  std::vector<double> weights;
  auto add_direction = [&](int dx, int dy) {
    const std::size_t count = std::size_t(W - dx) * (H - dy);
    if (count == 0) return;
    for (int y = 0; y + dy < H; ++y) {
      for (int x = 0; x + dx < W; ++x) {
        const T g = depth.at(x + dx, y + dy) - depth.at(x, y);
        terms.push_back(g * g);
        weights.push_back(edge_weight(x, y, x + dx, y + dy) / static_cast<double>(count));
      }
    }
  };
  add_direction(1, 0);
  add_direction(0, 1);
  return lin_comb(std::span<const T>(terms), std::span<const double>(weights));
}

/// (1/n_S) Σ_p ‖P − P(p)‖₂ over the 6-vectors.
template <class T>
T pose_coordinate_loss(std::span<const Pose<T>> pixel_poses, const Pose<T>& mean) {
  if (pixel_poses.empty()) throw std::invalid_argument("pose_coordinate_loss: empty pose list");
  const auto m = mean.vector6();
  std::vector<T> norms;
  norms.reserve(pixel_poses.size());
  for (const auto& p : pixel_poses) {
    const auto x = p.vector6();
    std::array<T, 6> d;
    for (int k = 0; k < 6; ++k) d[k] = m[k] - x[k];
    norms.push_back(norm(std::span<const T>(d)));
  }
  const std::vector<double> w(norms.size(), 1.0 / static_cast<double>(norms.size()));
  return lin_comb(std::span<const T>(norms), std::span<const double>(w));
}

/// L = L_p + w_s L_s + w_c L_c.
template <class T>
T total_loss(const T& photometric, const T& smoothness, const T& pose_coordinate, const LossWeights& weights) {
  if (!std::isfinite(value_of(photometric)) || !std::isfinite(value_of(smoothness)) ||
      !std::isfinite(value_of(pose_coordinate)))
    throw std::domain_error("total_loss: non-finite loss component");
  return photometric + weights.w_s * smoothness + weights.w_c * pose_coordinate;
}

struct FramePair {
  int target = 0;
  int source = 0;
  bool operator==(const FramePair&) const = default;
};

/// Every ordered pair (t, s), t ≠ s, of the given frames: n(n − 1) pairs.
inline std::vector<FramePair> lcvs_pairs(std::span<const int> frames) {
  if (frames.size() < 2) throw std::invalid_argument("lcvs_pairs: need at least two frames");
  for (std::size_t i = 0; i < frames.size(); ++i)
    for (std::size_t j = i + 1; j < frames.size(); ++j)
      if (frames[i] == frames[j]) throw std::invalid_argument("lcvs_pairs: frame indices must be distinct");
  std::vector<FramePair> pairs;
  for (int t : frames)
    for (int s : frames)
      if (t != s) pairs.push_back({t, s});
  return pairs;
}

/// Two-pair schedule for a frame triple: the outer frames synthesized from the
/// middle one, (1→2) and (3→2). Used as the non-loop-closed reference.
inline std::vector<FramePair> chain_pairs(std::span<const int, 3> frames) {
  return {{frames[0], frames[1]}, {frames[2], frames[1]}};
}

}  // namespace dscloc
