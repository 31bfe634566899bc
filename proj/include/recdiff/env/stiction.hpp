#pragma once

#include <cmath>

#include "recdiff/core/errors.hpp"

namespace recdiff {

// Valve resistance as a function of its rotation this step: viscous drag plus
// a smoothed breakaway term,
//   tau(dtheta) = kappa*dtheta + tau_s*tanh(dtheta/width).
// The tanh replaces the hard sign so the law is differentiable; above the
// smoothing scale (|dtheta| >~ 20*width) it matches the hard breakaway form
// kappa*dtheta + sign(dtheta)*tau_s to machine precision. The environment and
// the trajectory optimizer share this one function, so rotations realized by
// the simulator satisfy the planner's torque-balance constraint exactly.
// Templated on the scalar so reverse-mode derivative types flow through.
template <class T>
T stiction_torque(const T& dtheta, double kappa, double tau_s, double width) {
  using std::tanh;
  return kappa * dtheta + tau_s * tanh(dtheta / width);
}

// Inverse map: the rotation produced by a net applied torque. The law is
// strictly increasing and odd, so the root is unique; bisection plus Newton
// polish. Exactly zero torque gives exactly zero rotation.
inline double solve_dtheta(double tau_net, double kappa, double tau_s, double width) {
  if (tau_net == 0.0) return 0.0;
  if (!(kappa > 0.0) || !(width > 0.0)) throw ParameterError("stiction parameters");
  const double sgn = tau_net > 0.0 ? 1.0 : -1.0;
  const double mag = std::abs(tau_net);
  double lo = 0.0, hi = mag / kappa;  // tau(hi) >= kappa*hi = mag
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    const double t = stiction_torque(mid, kappa, tau_s, width);
    if (t < mag)
      lo = mid;
    else
      hi = mid;
    if (hi - lo < 1e-15 * (1.0 + hi)) break;
  }
  double x = 0.5 * (lo + hi);
  for (int it = 0; it < 4; ++it) {  // Newton polish
    const double th = std::tanh(x / width);
    const double f = kappa * x + tau_s * th - mag;
    const double df = kappa + tau_s * (1.0 - th * th) / width;
    x -= f / df;
    if (x < 0.0) x = 0.0;
  }
  return sgn * x;
}

}  // namespace recdiff
