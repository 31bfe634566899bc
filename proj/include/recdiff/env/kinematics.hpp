#pragma once

#include <cmath>
#include <optional>
#include <vector>

#include "recdiff/env/world.hpp"

namespace recdiff {

// Two-link planar arm, shoulder angle absolute, elbow angle relative:
//   tip = base + l1*(cos a, sin a) + l2*(cos(a+b), sin(a+b)).
inline Vec2 fk_finger(const WorldConfig& w, int i, double a, double b) {
  const double l1 = w.l1[static_cast<size_t>(i)], l2 = w.l2[static_cast<size_t>(i)];
  return {w.base[static_cast<size_t>(i)][0] + l1 * std::cos(a) + l2 * std::cos(a + b),
          w.base[static_cast<size_t>(i)][1] + l1 * std::sin(a) + l2 * std::sin(a + b)};
}

inline std::vector<Vec2> fk(const WorldConfig& w, const std::vector<double>& q) {
  std::vector<Vec2> tips(static_cast<size_t>(w.n_f));
  for (int i = 0; i < w.n_f; ++i)
    tips[static_cast<size_t>(i)] =
        fk_finger(w, i, q[static_cast<size_t>(2 * i)], q[static_cast<size_t>(2 * i + 1)]);
  return tips;
}

// d tip / d (a, b), columns indexed by joint.
struct Jac2 {
  double m[2][2];
};

inline Jac2 jacobian_finger(const WorldConfig& w, int i, double a, double b) {
  const double l1 = w.l1[static_cast<size_t>(i)], l2 = w.l2[static_cast<size_t>(i)];
  const double s1 = std::sin(a), c1 = std::cos(a);
  const double s12 = std::sin(a + b), c12 = std::cos(a + b);
  Jac2 J;
  J.m[0][0] = -l1 * s1 - l2 * s12;
  J.m[0][1] = -l2 * s12;
  J.m[1][0] = l1 * c1 + l2 * c12;
  J.m[1][1] = l2 * c12;
  return J;
}

inline std::vector<Jac2> jacobian(const WorldConfig& w, const std::vector<double>& q) {
  std::vector<Jac2> out(static_cast<size_t>(w.n_f));
  for (int i = 0; i < w.n_f; ++i)
    out[static_cast<size_t>(i)] =
        jacobian_finger(w, i, q[static_cast<size_t>(2 * i)], q[static_cast<size_t>(2 * i + 1)]);
  return out;
}

// Closed-form two-link inverse kinematics. Of the two elbow branches, returns
// the one whose elbow angle is closest to elbow_hint (for continuity across
// steps). Unreachable targets give nullopt.
inline std::optional<std::array<double, 2>> ik_finger(const WorldConfig& w, int i,
                                                      const Vec2& target, double elbow_hint) {
  const double l1 = w.l1[static_cast<size_t>(i)], l2 = w.l2[static_cast<size_t>(i)];
  const Vec2 rel = target - w.base[static_cast<size_t>(i)];
  const double d2 = dot(rel, rel);
  const double cb = (d2 - l1 * l1 - l2 * l2) / (2.0 * l1 * l2);
  if (cb < -1.0 - 1e-12 || cb > 1.0 + 1e-12) return std::nullopt;
  const double cbc = std::max(-1.0, std::min(1.0, cb));
  const double b_mag = std::acos(cbc);
  std::array<double, 2> best{};
  double best_gap = -1.0;
  for (double b : {b_mag, -b_mag}) {
    const double k1 = l1 + l2 * std::cos(b), k2 = l2 * std::sin(b);
    const double a = std::atan2(rel[1], rel[0]) - std::atan2(k2, k1);
    const double gap = std::abs(std::remainder(b - elbow_hint, 2.0 * M_PI));
    if (best_gap < 0.0 || gap < best_gap) {
      best_gap = gap;
      best = {std::remainder(a, 2.0 * M_PI), b};
    }
  }
  return best;
}

}  // namespace recdiff
