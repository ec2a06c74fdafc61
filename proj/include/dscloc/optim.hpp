#pragma once

// Parameter storage, tape-based gradient evaluation, a central finite
// difference checker and the Adam optimizer.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <map>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "dscloc/ad.hpp"
#include "dscloc/geometry.hpp"

namespace dscloc {

struct Slice {
  std::size_t offset = 0;
  std::size_t size = 0;
};

/// Flat parameter vector with named, disjoint, covering slices.
class ParamStore {
 public:
  Slice add(const std::string& name, std::size_t size, double fill = 0.0) {
    if (slices_.count(name) != 0) throw std::invalid_argument("ParamStore: duplicate slice '" + name + "'");
    const Slice s{values_.size(), size};
    values_.resize(values_.size() + size, fill);
    slices_.emplace(name, s);
    order_.push_back(name);
    return s;
  }

  const Slice& slice(const std::string& name) const {
    auto it = slices_.find(name);
    if (it == slices_.end()) throw std::out_of_range("ParamStore: no slice '" + name + "'");
    return it->second;
  }
  bool has(const std::string& name) const { return slices_.count(name) != 0; }

  std::span<double> view(const std::string& name) {
    const Slice& s = slice(name);
    return {values_.data() + s.offset, s.size};
  }
  std::span<const double> view(const std::string& name) const {
    const Slice& s = slice(name);
    return {values_.data() + s.offset, s.size};
  }

  std::vector<double>& values() { return values_; }
  const std::vector<double>& values() const { return values_; }
  std::size_t size() const { return values_.size(); }
  const std::vector<std::string>& names() const { return order_; }

  bool all_finite() const {
    return std::all_of(values_.begin(), values_.end(), [](double x) { return std::isfinite(x); });
  }

 private:
  std::vector<double> values_;
  std::map<std::string, Slice> slices_;
  std::vector<std::string> order_;
};

struct ValueAndGradient {
  double value = 0.0;
  std::vector<double> gradient;
};

using LossFunction = std::function<ad::Var(std::span<const ad::Var>)>;

/// Records `loss_fn` on a fresh tape with one leaf per parameter and
/// back-propagates. Throws ad::NonFiniteError naming the offending primitive.
/// The tape and adjoint buffer are reused per thread to keep their capacity.
inline ValueAndGradient evaluate_with_gradient(const LossFunction& loss_fn, std::span<const double> params) {
  thread_local ad::Tape tape;
  thread_local std::vector<double> adj;
  if (ad::Tape::active() == &tape) throw std::logic_error("evaluate_with_gradient: nested call");
  tape.clear();
  ad::ScopedTape scope(tape);
  std::vector<ad::Var> x;
  x.reserve(params.size());
  for (double p : params) x.push_back(ad::Var::leaf(p));
  const ad::Var y = loss_fn(x);
  ValueAndGradient out;
  out.value = y.value();
  out.gradient.assign(params.size(), 0.0);
  if (y.is_constant()) return out;
  tape.adjoints(y.index(), adj);
  for (std::size_t i = 0; i < params.size(); ++i) out.gradient[i] = adj[x[i].index()];
  return out;
}

// ---------------------------------------------------------------------------
// Finite difference checker
// ---------------------------------------------------------------------------

struct FdCheckReport {
  std::size_t checked = 0;
  std::size_t skipped = 0;  // non-smooth neighborhoods
  double max_rel_error = 0.0;
  double median_rel_error = 0.0;
  std::size_t worst_index = 0;

  bool passed(double tolerance) const { return checked > 0 && max_rel_error < tolerance; }
};

struct FdCheckOptions {
  std::size_t sample_count = 100;
  double h = 1e-5;  // relative step: h * max(1, |x|)
  /// Absolute floor in the relative-error denominator.
  double abs_floor = 1e-8;
  std::uint64_t seed = 7;
};

/// Compares the tape gradient against (f(x+h) − f(x−h)) / 2h on sampled
/// coordinates. A coordinate is skipped when the central difference at h and
/// at h/4 disagree, which marks a kink (bilinear cell edge, |x| at 0) within h.
inline FdCheckReport finite_difference_check(const LossFunction& loss_fn, std::span<const double> params,
                                             const FdCheckOptions& options = {},
                                             const std::function<double(std::span<const double>)>& value_fn = {}) {
  const ValueAndGradient vg = evaluate_with_gradient(loss_fn, params);
  auto f = [&](std::span<const double> x) {
    if (value_fn) return value_fn(x);
    return evaluate_with_gradient(loss_fn, x).value;
  };
  std::vector<std::size_t> coords(params.size());
  for (std::size_t i = 0; i < coords.size(); ++i) coords[i] = i;
  std::mt19937_64 rng(options.seed);
  std::shuffle(coords.begin(), coords.end(), rng);
  if (coords.size() > options.sample_count) coords.resize(options.sample_count);
  std::sort(coords.begin(), coords.end());

  FdCheckReport report;
  std::vector<double> errors;
  std::vector<double> x(params.begin(), params.end());
  auto central = [&](std::size_t i, double h) {
    const double x0 = x[i];
    x[i] = x0 + h;
    const double fp = f(x);
    x[i] = x0 - h;
    const double fm = f(x);
    x[i] = x0;
    return (fp - fm) / (2.0 * h);
  };
  for (std::size_t i : coords) {
    const double h = options.h * std::max(1.0, std::abs(x[i]));
    const double wide = central(i, h);
    const double narrow = central(i, 0.25 * h);
    const double scale = std::max({std::abs(wide), std::abs(vg.gradient[i]), options.abs_floor});
    if (std::abs(wide - narrow) > 1e-5 * scale) {
      ++report.skipped;
      continue;
    }
    const double err = std::abs(wide - vg.gradient[i]) / scale;
    errors.push_back(err);
    if (err > report.max_rel_error) {
      report.max_rel_error = err;
      report.worst_index = i;
    }
  }
  report.checked = errors.size();
  if (!errors.empty()) report.median_rel_error = median_of(errors);
  return report;
}

// ---------------------------------------------------------------------------
// Adam
// ---------------------------------------------------------------------------

struct AdamState {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::uint64_t step = 0;
  std::vector<double> m;
  std::vector<double> v;

  AdamState() = default;
  AdamState(std::size_t n, double lr) : learning_rate(lr), m(n, 0.0), v(n, 0.0) {}
};

/// Bias-corrected Adam update. Rejects non-finite gradients before touching
/// the state.
inline void adam_step(AdamState& state, std::span<double> params, std::span<const double> grad) {
  if (params.size() != grad.size() || state.m.size() != params.size() || state.v.size() != params.size())
    throw std::invalid_argument("adam_step: size mismatch");
  for (double g : grad)
    if (!std::isfinite(g)) throw std::domain_error("adam_step: non-finite gradient");
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * grad[i];
    state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * grad[i] * grad[i];
    const double m_hat = state.m[i] / c1;
    const double v_hat = state.v[i] / c2;
    params[i] -= state.learning_rate * m_hat / (std::sqrt(v_hat) + state.epsilon);
  }
}

}  // namespace dscloc
