#pragma once

// Scalar helpers shared by the double and ad::Var instantiations of the
// templated geometry and loss code. Unqualified calls inside namespace dscloc
// resolve to these for double and to the ad:: overloads through ADL.

#include <cmath>
#include <numbers>
#include <span>

#include "dscloc/ad.hpp"

namespace dscloc {

using std::abs;
using std::atan2;
using std::cos;
using std::exp;
using std::log;
using std::sin;
using std::sqrt;

using ad::value_of;

inline constexpr double kPi = std::numbers::pi;

inline double value_of(double x) { return x; }
inline double square(double x) { return x * x; }
inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

inline double lin_comb(std::span<const double> xs, std::span<const double> w) {
  double s = 0.0;
  for (std::size_t k = 0; k < xs.size(); ++k) s += w[k] * xs[k];
  return s;
}

inline double norm(std::span<const double> xs) {
  double s = 0.0;
  for (double x : xs) s += x * x;
  return std::sqrt(s);
}

template <class T>
concept Scalar = std::same_as<T, double> || std::same_as<T, ad::Var>;

}  // namespace dscloc
