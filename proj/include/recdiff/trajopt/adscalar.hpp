#pragma once

#include <cmath>
#include <vector>

#include "recdiff/core/errors.hpp"

namespace recdiff {

// Arena reverse-mode autodiff on scalars, sized for objective gradients with
// tens of thousands of elementary operations. Records up to two parents with
// local partials per node; constants stay off the tape entirely. One tape is
// active at a time (per thread); gradient evaluation owns setup and teardown.
class ATape {
 public:
  struct Rec {
    double w1, w2;
    int p1, p2;
  };

  int leaf() {
    recs_.push_back({0.0, 0.0, -1, -1});
    return static_cast<int>(recs_.size()) - 1;
  }
  int unary(int p, double w) {
    recs_.push_back({w, 0.0, p, -1});
    return static_cast<int>(recs_.size()) - 1;
  }
  int binary(int p1, double w1, int p2, double w2) {
    recs_.push_back({w1, w2, p1, p2});
    return static_cast<int>(recs_.size()) - 1;
  }

  void clear() { recs_.clear(); }
  size_t size() const { return recs_.size(); }
  void reserve(size_t n) { recs_.reserve(n); }

  // Adjoints of every node given unit adjoint at root.
  void backward(int root, std::vector<double>& adj) const {
    adj.assign(recs_.size(), 0.0);
    if (root < 0) return;
    adj[static_cast<size_t>(root)] = 1.0;
    for (int i = root; i >= 0; --i) {
      const double a = adj[static_cast<size_t>(i)];
      if (a == 0.0) continue;
      const Rec& r = recs_[static_cast<size_t>(i)];
      if (r.p1 >= 0) adj[static_cast<size_t>(r.p1)] += r.w1 * a;
      if (r.p2 >= 0) adj[static_cast<size_t>(r.p2)] += r.w2 * a;
    }
  }

 private:
  std::vector<Rec> recs_;
};

namespace detail {
inline ATape*& active_atape() {
  thread_local ATape* t = nullptr;
  return t;
}
}  // namespace detail

// Value plus tape node index; index -1 marks a constant (not recorded).
struct AD {
  double v = 0.0;
  int i = -1;

  AD() = default;
  AD(double c) : v(c) {}  // NOLINT: implicit constants are the point
  AD(double value, int idx) : v(value), i(idx) {}

  static AD make_leaf(double value) {
    ATape* t = detail::active_atape();
    if (!t) throw ContractError("AD leaf created with no active tape");
    return AD(value, t->leaf());
  }
};

namespace detail {
inline AD lift_unary(double v, const AD& x, double dx) {
  if (x.i < 0) return AD(v);
  return AD(v, active_atape()->unary(x.i, dx));
}
inline AD lift_binary(double v, const AD& a, double da, const AD& b, double db) {
  if (a.i < 0 && b.i < 0) return AD(v);
  if (b.i < 0) return AD(v, active_atape()->unary(a.i, da));
  if (a.i < 0) return AD(v, active_atape()->unary(b.i, db));
  return AD(v, active_atape()->binary(a.i, da, b.i, db));
}
}  // namespace detail

inline AD operator+(const AD& a, const AD& b) {
  return detail::lift_binary(a.v + b.v, a, 1.0, b, 1.0);
}
inline AD operator-(const AD& a, const AD& b) {
  return detail::lift_binary(a.v - b.v, a, 1.0, b, -1.0);
}
inline AD operator*(const AD& a, const AD& b) {
  return detail::lift_binary(a.v * b.v, a, b.v, b, a.v);
}
inline AD operator/(const AD& a, const AD& b) {
  const double inv = 1.0 / b.v;
  return detail::lift_binary(a.v * inv, a, inv, b, -a.v * inv * inv);
}
inline AD operator-(const AD& a) { return detail::lift_unary(-a.v, a, -1.0); }
inline AD& operator+=(AD& a, const AD& b) { return a = a + b; }
inline AD& operator-=(AD& a, const AD& b) { return a = a - b; }
inline AD& operator*=(AD& a, const AD& b) { return a = a * b; }

inline bool operator<(const AD& a, const AD& b) { return a.v < b.v; }
inline bool operator>(const AD& a, const AD& b) { return a.v > b.v; }
inline bool operator<=(const AD& a, const AD& b) { return a.v <= b.v; }
inline bool operator>=(const AD& a, const AD& b) { return a.v >= b.v; }

inline AD sin(const AD& x) { return detail::lift_unary(std::sin(x.v), x, std::cos(x.v)); }
inline AD cos(const AD& x) { return detail::lift_unary(std::cos(x.v), x, -std::sin(x.v)); }
inline AD tanh(const AD& x) {
  const double t = std::tanh(x.v);
  return detail::lift_unary(t, x, 1.0 - t * t);
}
inline AD exp(const AD& x) {
  const double e = std::exp(x.v);
  return detail::lift_unary(e, x, e);
}
inline AD sqrt(const AD& x) {
  const double s = std::sqrt(x.v);
  return detail::lift_unary(s, x, 0.5 / s);
}
inline AD sq(const AD& x) { return x * x; }
inline double sq(double x) { return x * x; }

// One-sided hinge used by the augmented-Lagrangian penalty; C1 in the value
// it feeds (the square of a hinge), subgradient 0 on the inactive side.
inline AD relu(const AD& x) { return x.v > 0.0 ? x : AD(0.0); }
inline double relu(double x) { return x > 0.0 ? x : 0.0; }

inline double value_of(double x) { return x; }
inline double value_of(const AD& x) { return x.v; }

// Gradient of a scalar-valued callable f(span of AD/double) at x. F must be
// callable as f(const std::vector<T>&) -> T for T in {AD}. Returns f(x) and
// fills g (resized to x.size()).
template <class F>
double grad_eval(F&& f, const std::vector<double>& x, std::vector<double>& g) {
  thread_local ATape tape;
  thread_local std::vector<double> adj;
  ATape*& slot = detail::active_atape();
  if (slot != nullptr) throw ContractError("nested AD gradient evaluation");
  slot = &tape;
  tape.clear();
  std::vector<AD> ax;
  ax.reserve(x.size());
  for (double v : x) ax.push_back(AD::make_leaf(v));
  double fv = 0.0;
  try {
    const AD out = f(ax);
    fv = out.v;
    tape.backward(out.i, adj);
  } catch (...) {
    slot = nullptr;
    throw;
  }
  slot = nullptr;
  g.resize(x.size());
  for (size_t j = 0; j < x.size(); ++j)
    g[j] = ax[j].i >= 0 && ax[j].i < static_cast<int>(adj.size())
               ? adj[static_cast<size_t>(ax[j].i)]
               : 0.0;
  return fv;
}

}  // namespace recdiff
