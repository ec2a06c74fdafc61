#pragma once

// Reverse-mode automatic differentiation on a flat Wengert tape.
//
// Every differentiable primitive appends one node holding its value and the
// partial derivatives with respect to its parents. Constants never touch the
// tape. The tape in use is selected per thread with ScopedTape, so independent
// loss terms can be recorded on separate tapes by separate workers.

#include <array>
#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace dscloc::ad {

enum class Op : std::uint8_t {
  kLeaf,
  kAdd,
  kSub,
  kMul,
  kDiv,
  kNeg,
  kSin,
  kCos,
  kSqrt,
  kExp,
  kLog,
  kAbs,
  kAtan2,
  kSigmoid,
  kLinComb,
  kNorm,
  kBilinear,
  kAffine,
  kProject,
  kSsim,
  kLogitDepth,
};

inline const char* op_name(Op op) {
  switch (op) {
    case Op::kLeaf: return "leaf";
    case Op::kAdd: return "add";
    case Op::kSub: return "sub";
    case Op::kMul: return "mul";
    case Op::kDiv: return "div";
    case Op::kNeg: return "neg";
    case Op::kSin: return "sin";
    case Op::kCos: return "cos";
    case Op::kSqrt: return "sqrt";
    case Op::kExp: return "exp";
    case Op::kLog: return "log";
    case Op::kAbs: return "abs";
    case Op::kAtan2: return "atan2";
    case Op::kSigmoid: return "sigmoid";
    case Op::kLinComb: return "lin_comb";
    case Op::kNorm: return "norm";
    case Op::kBilinear: return "bilinear_sample";
    case Op::kAffine: return "affine";
    case Op::kProject: return "project";
    case Op::kSsim: return "ssim";
    case Op::kLogitDepth: return "logit_depth";
  }
  return "unknown";
}

/// Raised when a primitive produces a non-finite value or partial derivative.
class NonFiniteError : public std::runtime_error {
 public:
  explicit NonFiniteError(Op op)
      : std::runtime_error(std::string("non-finite intermediate in primitive '") +
                           op_name(op) + "'"),
        op_(op) {}
  Op op() const { return op_; }

 private:
  Op op_;
};

using Index = std::uint32_t;
inline constexpr Index kNoIndex = std::numeric_limits<Index>::max();

class Tape {
 public:
  Tape() { begin_.push_back(0); }

  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Index leaf() {
    ops_.push_back(Op::kLeaf);
    begin_.push_back(static_cast<Index>(parents_.size()));
    return static_cast<Index>(ops_.size() - 1);
  }

  // Parents with kNoIndex are constants and are dropped.
  Index push(Op op, double value, std::initializer_list<std::pair<Index, double>> edges) {
    check(op, value);
    for (const auto& [parent, partial] : edges) {
      if (parent == kNoIndex) continue;
      check(op, partial);
      parents_.push_back(parent);
      partials_.push_back(partial);
    }
    return close(op);
  }

  Index push(Op op, double value, std::span<const Index> parents, std::span<const double> partials) {
    check(op, value);
    for (std::size_t k = 0; k < parents.size(); ++k) {
      if (parents[k] == kNoIndex) continue;
      check(op, partials[k]);
      parents_.push_back(parents[k]);
      partials_.push_back(partials[k]);
    }
    return close(op);
  }

  std::size_t size() const { return ops_.size(); }
  std::size_t edge_count() const { return parents_.size(); }
  Op op(Index i) const { return ops_[i]; }

  /// Adjoints of every node with respect to `output`.
  std::vector<double> adjoints(Index output) const {
    std::vector<double> adj;
    adjoints(output, adj);
    return adj;
  }

  /// As above, reusing the caller's buffer.
  void adjoints(Index output, std::vector<double>& adj) const {
    adj.assign(ops_.size(), 0.0);
    if (output == kNoIndex) return;
    adj[output] = 1.0;
    for (Index i = output + 1; i-- > 0;) {
      const double a = adj[i];
      if (a == 0.0) continue;
      for (Index k = begin_[i]; k < begin_[i + 1]; ++k) adj[parents_[k]] += partials_[k] * a;
    }
  }

  void clear() {
    ops_.clear();
    parents_.clear();
    partials_.clear();
    begin_.assign(1, 0);
  }

  static Tape*& active() {
    thread_local Tape* tape = nullptr;
    return tape;
  }

 private:
  static void check(Op op, double x) {
    if (!std::isfinite(x)) throw NonFiniteError(op);
  }

  Index close(Op op) {
    ops_.push_back(op);
    begin_.push_back(static_cast<Index>(parents_.size()));
    return static_cast<Index>(ops_.size() - 1);
  }

  std::vector<Op> ops_;
  std::vector<Index> begin_;
  std::vector<Index> parents_;
  std::vector<double> partials_;
};

/// Makes `tape` the active tape of the calling thread for the scope lifetime.
class ScopedTape {
 public:
  explicit ScopedTape(Tape& tape) : previous_(Tape::active()) { Tape::active() = &tape; }
  ~ScopedTape() { Tape::active() = previous_; }
  ScopedTape(const ScopedTape&) = delete;
  ScopedTape& operator=(const ScopedTape&) = delete;

 private:
  Tape* previous_;
};

class Var {
 public:
  Var() = default;
  Var(double value) : value_(value) {}  // NOLINT: constants convert implicitly

  static Var on_tape(double value, Index index) {
    Var v(value);
    v.index_ = index;
    return v;
  }

  /// New independent variable on the active tape.
  static Var leaf(double value) {
    Tape* tape = Tape::active();
    if (tape == nullptr) throw std::logic_error("ad::Var::leaf without an active tape");
    return on_tape(value, tape->leaf());
  }

  double value() const { return value_; }
  Index index() const { return index_; }
  bool is_constant() const { return index_ == kNoIndex; }

  Var& operator+=(const Var& o);
  Var& operator-=(const Var& o);
  Var& operator*=(const Var& o);
  Var& operator/=(const Var& o);

 private:
  double value_ = 0.0;
  Index index_ = kNoIndex;
};

namespace detail {

inline Var make_unary(Op op, double value, const Var& a, double da) {
  if (a.is_constant()) return Var(value);
  return Var::on_tape(value, Tape::active()->push(op, value, {{a.index(), da}}));
}

inline Var make_binary(Op op, double value, const Var& a, double da, const Var& b, double db) {
  if (a.is_constant() && b.is_constant()) return Var(value);
  return Var::on_tape(value, Tape::active()->push(op, value, {{a.index(), da}, {b.index(), db}}));
}

}  // namespace detail

inline double value_of(const Var& x) { return x.value(); }

inline Var operator+(const Var& a, const Var& b) {
  return detail::make_binary(Op::kAdd, a.value() + b.value(), a, 1.0, b, 1.0);
}
inline Var operator-(const Var& a, const Var& b) {
  return detail::make_binary(Op::kSub, a.value() - b.value(), a, 1.0, b, -1.0);
}
inline Var operator*(const Var& a, const Var& b) {
  return detail::make_binary(Op::kMul, a.value() * b.value(), a, b.value(), b, a.value());
}
inline Var operator/(const Var& a, const Var& b) {
  const double inv = 1.0 / b.value();
  const double q = a.value() * inv;
  return detail::make_binary(Op::kDiv, q, a, inv, b, -q * inv);
}
inline Var operator-(const Var& a) { return detail::make_unary(Op::kNeg, -a.value(), a, -1.0); }
inline Var operator+(const Var& a) { return a; }

inline Var& Var::operator+=(const Var& o) { return *this = *this + o; }
inline Var& Var::operator-=(const Var& o) { return *this = *this - o; }
inline Var& Var::operator*=(const Var& o) { return *this = *this * o; }
inline Var& Var::operator/=(const Var& o) { return *this = *this / o; }

inline bool operator<(const Var& a, const Var& b) { return a.value() < b.value(); }
inline bool operator>(const Var& a, const Var& b) { return a.value() > b.value(); }
inline bool operator<=(const Var& a, const Var& b) { return a.value() <= b.value(); }
inline bool operator>=(const Var& a, const Var& b) { return a.value() >= b.value(); }

inline Var sin(const Var& a) { return detail::make_unary(Op::kSin, std::sin(a.value()), a, std::cos(a.value())); }
inline Var cos(const Var& a) { return detail::make_unary(Op::kCos, std::cos(a.value()), a, -std::sin(a.value())); }
inline Var sqrt(const Var& a) {
  const double r = std::sqrt(a.value());
  return detail::make_unary(Op::kSqrt, r, a, 0.5 / r);
}
inline Var exp(const Var& a) {
  const double e = std::exp(a.value());
  return detail::make_unary(Op::kExp, e, a, e);
}
inline Var log(const Var& a) { return detail::make_unary(Op::kLog, std::log(a.value()), a, 1.0 / a.value()); }
// Right-derivative at the kink.
inline Var abs(const Var& a) {
  return detail::make_unary(Op::kAbs, std::abs(a.value()), a, a.value() >= 0.0 ? 1.0 : -1.0);
}
inline Var atan2(const Var& y, const Var& x) {
  const double r2 = y.value() * y.value() + x.value() * x.value();
  return detail::make_binary(Op::kAtan2, std::atan2(y.value(), x.value()), y, x.value() / r2, x,
                             -y.value() / r2);
}
inline Var sigmoid(const Var& a) {
  const double s = 1.0 / (1.0 + std::exp(-a.value()));
  return detail::make_unary(Op::kSigmoid, s, a, s * (1.0 - s));
}
inline Var square(const Var& a) { return a * a; }

/// Σ w_k x_k as a single node.
inline Var lin_comb(std::span<const Var> xs, std::span<const double> w) {
  double value = 0.0;
  bool any = false;
  for (std::size_t k = 0; k < xs.size(); ++k) {
    value += w[k] * xs[k].value();
    any = any || !xs[k].is_constant();
  }
  if (!any) return Var(value);
  thread_local std::vector<Index> idx;
  idx.resize(xs.size());
  for (std::size_t k = 0; k < xs.size(); ++k) idx[k] = xs[k].index();
  return Var::on_tape(value, Tape::active()->push(Op::kLinComb, value, idx, w));
}

/// One node with N parents and caller-supplied partial derivatives.
template <std::size_t N>
Var fused(Op op, double value, const std::array<const Var*, N>& in, const std::array<double, N>& partial) {
  bool any = false;
  std::array<Index, N> idx;
  for (std::size_t k = 0; k < N; ++k) {
    idx[k] = in[k]->index();
    any = any || !in[k]->is_constant();
  }
  if (!any) return Var(value);
  return Var::on_tape(value, Tape::active()->push(op, value, idx, partial));
}

/// Euclidean norm; the subgradient at the origin is taken as zero.
inline Var norm(std::span<const Var> xs) {
  double s = 0.0;
  bool any = false;
  for (const Var& x : xs) {
    s += x.value() * x.value();
    any = any || !x.is_constant();
  }
  const double n = std::sqrt(s);
  if (!any) return Var(n);
  thread_local std::vector<Index> idx;
  thread_local std::vector<double> partial;
  idx.resize(xs.size());
  partial.resize(xs.size());
  for (std::size_t k = 0; k < xs.size(); ++k) {
    idx[k] = xs[k].index();
    partial[k] = n > 0.0 ? xs[k].value() / n : 0.0;
  }
  return Var::on_tape(n, Tape::active()->push(Op::kNorm, n, idx, partial));
}

}  // namespace dscloc::ad
