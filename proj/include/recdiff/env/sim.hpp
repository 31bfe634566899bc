#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <utility>
#include <vector>

#include "recdiff/core/rng.hpp"
#include "recdiff/env/kinematics.hpp"
#include "recdiff/env/stiction.hpp"
#include "recdiff/env/world.hpp"

namespace recdiff {

// Quasi-static contact simulator. Each step resolves, in order:
//   1. action noise on the commanded joint deltas (drawn for every finger so
//      the rng stream layout does not depend on contact state),
//   2. the perturbation kick,
//   3. free motion with clamping for non-sticking fingers, with radial
//      projection of penetrating fingertips and capture of force-loaded
//      approaches inside grip_capture,
//   4. net rim torque from in-contact fingers whose force lies inside the
//      friction cone (cone violators slip and transmit nothing),
//   5. the valve rotation from the shared stiction law,
//   6. sticking fingers dragged so their contact point rotates by exactly
//      dtheta (commanded deltas and noise do not move a sticking finger; if
//      the dragged point leaves the reachable workspace the finger is demoted
//      to slip and holds its pose).
// All inputs are clamped rather than rejected; events carry the diagnostics.
class Env {
 public:
  WorldConfig w;

  explicit Env(WorldConfig cfg) : w(std::move(cfg)) { w.validate(); }

  // Signed distance of a point to the valve rim circle; the normal points
  // radially away from the center. At the exact center the distance is -R_v
  // and the normal is fixed to +x.
  std::pair<double, Vec2> sdf(const Vec2& p) const {
    const Vec2 d = p - w.valve_center;
    const double n = norm(d);
    if (n < 1e-12) return {-w.R_v, Vec2{1.0, 0.0}};
    return {n - w.R_v, (1.0 / n) * d};
  }

  ContactInfo contact_info_at(const Vec2& tip) const {
    ContactInfo c;
    c.tip = tip;
    const auto [d, nrm] = sdf(tip);
    c.sd = d;
    c.normal = nrm;
    c.cpoint = w.valve_center + w.R_v * nrm;
    c.in_contact = std::abs(d) <= w.contact_tol;
    return c;
  }

  std::vector<ContactInfo> contacts(const State& s) const {
    std::vector<ContactInfo> out;
    out.reserve(static_cast<size_t>(w.n_f));
    for (const Vec2& tip : fk(w, s.q)) out.push_back(contact_info_at(tip));
    return out;
  }

  // Compressive (into-rim) and counterclockwise-tangential force components
  // at a contact with outward normal nrm.
  static double normal_into_rim(const Vec2& f, const Vec2& nrm) { return -dot(f, nrm); }
  static double tangential(const Vec2& f, const Vec2& nrm) { return dot(f, perp(nrm)); }
  bool in_cone(const Vec2& f, const Vec2& nrm) const {
    const double fn = normal_into_rim(f, nrm);
    return fn > 0.0 && std::abs(tangential(f, nrm)) <= w.mu * fn + 1e-12;
  }

  // With probability p_kick, a torque of magnitude uniform in (0, kick_max]
  // and uniformly random sign; otherwise zero. The state argument is unused
  // in this planar analogue (kicks act on the valve axis directly) but kept
  // for interface parity with wrench-at-surface-point protocols.
  double apply_kick(const State&, Rng& rng) const {
    if (!rng.bernoulli(w.p_kick)) return 0.0;
    const double mag = w.kick_max * (1.0 - rng.uniform());  // (0, kick_max]
    return rng.bernoulli(0.5) ? mag : -mag;
  }

  struct StepResult {
    State s;
    StepEvents ev;
  };

  StepResult step(const State& s, const Action& u, Rng& rng) const {
    const int nf = w.n_f;
    StepResult out;
    out.ev.finger.resize(static_cast<size_t>(nf));
    State next = s;

    // 1. noise (always 2 draws per finger), 2. kick
    std::vector<double> nu(static_cast<size_t>(2 * nf));
    for (auto& v : nu) v = w.sigma_act * rng.gaussian();
    out.ev.kick = apply_kick(s, rng);

    const std::vector<Vec2> tips0 = fk(w, s.q);
    std::vector<ContactInfo> ci0(static_cast<size_t>(nf));
    for (int i = 0; i < nf; ++i) ci0[static_cast<size_t>(i)] = contact_info_at(tips0[static_cast<size_t>(i)]);

    // Classify against the pre-step contact state.
    std::vector<bool> stick(static_cast<size_t>(nf), false);
    for (int i = 0; i < nf; ++i) {
      const auto ii = static_cast<size_t>(i);
      const Vec2& f = u.f[ii];
      if (!ci0[ii].in_contact) continue;
      const double fn = normal_into_rim(f, ci0[ii].normal);
      if (fn <= 0.0) continue;  // releasing: free motion, no event
      if (in_cone(f, ci0[ii].normal)) {
        stick[ii] = true;
      } else {
        out.ev.finger[ii].slip = true;
      }
    }

    // 3. free motion for non-sticking fingers
    std::vector<bool> captured(static_cast<size_t>(nf), false);
    std::vector<Vec2> cap_normal(static_cast<size_t>(nf));
    for (int i = 0; i < nf; ++i) {
      const auto ii = static_cast<size_t>(i);
      if (stick[ii]) continue;
      double a = s.q[2 * ii] + u.dq[2 * ii] + nu[2 * ii];
      double b = s.q[2 * ii + 1] + u.dq[2 * ii + 1] + nu[2 * ii + 1];
      clamp_joints(i, a, b);
      const Vec2 tip = fk_finger(w, i, a, b);
      const auto [d, nrm] = sdf(tip);
      if (d < 0.0) {
        // Radial projection back onto the rim.
        if (!move_to_rim_point(i, nrm, a, b)) scale_back(i, s.q[2 * ii], s.q[2 * ii + 1], a, b);
        out.ev.finger[ii].projected = true;
      } else if (d <= w.grip_capture && normal_into_rim(u.f[ii], nrm) > 0.0) {
        // Force-loaded approach close to the rim: snap into contact.
        if (move_to_rim_point(i, nrm, a, b)) {
          captured[ii] = true;
          cap_normal[ii] = nrm;
          out.ev.finger[ii].captured = true;
        }
      }
      next.q[2 * ii] = a;
      next.q[2 * ii + 1] = b;
    }

    // 4. net torque from sticking and freshly captured cone-satisfying fingers
    double tau = out.ev.kick;
    for (int i = 0; i < nf; ++i) {
      const auto ii = static_cast<size_t>(i);
      if (stick[ii]) {
        tau += w.R_v * tangential(u.f[ii], ci0[ii].normal);
      } else if (captured[ii]) {
        if (in_cone(u.f[ii], cap_normal[ii]))
          tau += w.R_v * tangential(u.f[ii], cap_normal[ii]);
        else
          out.ev.finger[ii].slip = true;
      }
    }
    out.ev.tau_net = tau;

    // 5. valve rotation
    const double dtheta = solve_dtheta(tau, w.kappa, w.tau_s, w.w_stic);
    out.ev.dtheta = dtheta;
    next.theta = s.theta + dtheta;

    // 6. drag sticking fingers with the rim
    for (int i = 0; i < nf; ++i) {
      const auto ii = static_cast<size_t>(i);
      if (!stick[ii]) continue;
      const Vec2 target =
          w.valve_center + rotate(tips0[ii] - w.valve_center, dtheta);
      double a = s.q[2 * ii], b = s.q[2 * ii + 1];
      if (dtheta == 0.0 || move_exact(i, target, a, b)) {
        next.q[2 * ii] = a;
        next.q[2 * ii + 1] = b;
        out.ev.finger[ii].stick = true;
      } else {
        // Dragged point unreachable: hold pose, report slip.
        next.q[2 * ii] = s.q[2 * ii];
        next.q[2 * ii + 1] = s.q[2 * ii + 1];
        out.ev.finger[ii].slip = true;
      }
    }

    for (int i = 0; i < 2 * nf; ++i) {
      const auto ii = static_cast<size_t>(i);
      out.ev.finger[static_cast<size_t>(i / 2)].dq_realized[i % 2] = next.q[ii] - s.q[ii];
    }
    out.s = std::move(next);
    return out;
  }

  // Joint configuration gripping the rim at the given angular positions, with
  // per-finger elbow hints selecting the IK branch. Throws if unreachable.
  State grip_state(const std::vector<double>& rim_angles,
                   const std::vector<double>& elbow_hints = {}) const {
    if (static_cast<int>(rim_angles.size()) != w.n_f)
      throw ParameterError("grip_state needs one rim angle per finger");
    State s = State::zeros(w);
    for (int i = 0; i < w.n_f; ++i) {
      const auto ii = static_cast<size_t>(i);
      const Vec2 target = w.valve_center + Vec2{w.R_v * std::cos(rim_angles[ii]),
                                                w.R_v * std::sin(rim_angles[ii])};
      const double hint = ii < elbow_hints.size() ? elbow_hints[ii] : (i == 0 ? -1.0 : 1.0);
      const auto q = ik_finger(w, i, target, hint);
      if (!q) throw ParameterError("grip point unreachable");
      s.q[2 * ii] = (*q)[0];
      s.q[2 * ii + 1] = (*q)[1];
    }
    return s;
  }

 private:
  void clamp_joints(int i, double& a, double& b) const {
    const auto ii = static_cast<size_t>(i);
    a = std::clamp(a, w.q_min[2 * ii], w.q_max[2 * ii]);
    b = std::clamp(b, w.q_min[2 * ii + 1], w.q_max[2 * ii + 1]);
  }

  bool within_limits(int i, double a, double b) const {
    const auto ii = static_cast<size_t>(i);
    return a >= w.q_min[2 * ii] && a <= w.q_max[2 * ii] && b >= w.q_min[2 * ii + 1] &&
           b <= w.q_max[2 * ii + 1];
  }

  // IK to the rim point in direction nrm; keeps the current elbow branch.
  bool move_to_rim_point(int i, const Vec2& nrm, double& a, double& b) const {
    return move_exact(i, w.valve_center + w.R_v * nrm, a, b);
  }

  bool move_exact(int i, const Vec2& target, double& a, double& b) const {
    const auto q = ik_finger(w, i, target, b);
    if (!q || !within_limits(i, (*q)[0], (*q)[1])) return false;
    a = (*q)[0];
    b = (*q)[1];
    return true;
  }

  // Largest fraction of the commanded motion that keeps the fingertip outside
  // the rim; fallback when exact projection is unreachable.
  void scale_back(int i, double a0, double b0, double& a, double& b) const {
    double lo = 0.0, hi = 1.0;
    const double da = a - a0, db = b - b0;
    for (int it = 0; it < 60; ++it) {
      const double mid = 0.5 * (lo + hi);
      const Vec2 tip = fk_finger(w, i, a0 + mid * da, b0 + mid * db);
      if (sdf(tip).first >= 0.0)
        lo = mid;
      else
        hi = mid;
    }
    a = a0 + lo * da;
    b = b0 + lo * db;
  }
};

}  // namespace recdiff
