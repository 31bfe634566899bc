#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "recdiff/core/errors.hpp"
#include "recdiff/env/kinematics.hpp"
#include "recdiff/env/stiction.hpp"
#include "recdiff/env/world.hpp"
#include "recdiff/trajopt/adscalar.hpp"

namespace recdiff {

// ---------------------------------------------------------------------------
// Contact-mode assignment: one flag per finger over the whole horizon.
// 1 = gripping (maintains rim contact, transmits force), 0 = resetting
// (breaks contact, travels free, re-lands at the end of the horizon).
// ---------------------------------------------------------------------------
struct ContactMode {
  std::vector<int> c;

  int n_fingers() const { return static_cast<int>(c.size()); }
  bool is_contact(int i) const { return c[static_cast<size_t>(i)] == 1; }

  void validate() const {
    if (c.empty()) throw ParameterError("contact mode is empty");
    bool any = false;
    for (int v : c) {
      if (v != 0 && v != 1) throw ParameterError("contact mode flags must be 0 or 1");
      if (v == 1) any = true;
    }
    if (!any)
      throw ParameterError(
          "contact mode assigns every finger to reset; at least one finger "
          "must hold the rim");
  }
};

struct CostWeights {
  double w_goal = 10.0;
  double w_reach = 5.0;
  double w_smooth = 0.1;
};

// Residual bookkeeping: every constraint row carries (family, finger, step,
// coord) so tests and callers can reason about which rows a mode assignment
// activates. finger is -1 for object-level rows. Rows are stacked in
// deterministic order: family ascending (enum order below), then finger,
// then step, then coordinate.
enum class ResidualFam : int {
  kContactDist = 0,       // eq: gripping tip stays on the rim surface
  kRolling = 1,           // eq: gripping tip tracks the rim material point
  kCompliance = 2,        // eq: J^T f = k_c dq for gripping fingers
  kBalance = 3,           // eq: stiction torque balance for the valve
  kTerminalContact = 4,   // eq: resetting tip lands on the rim at the horizon
  kResetConsistency = 5,  // eq: resetting joints integrate their commands
  kResetZeroForce = 6,    // eq: resetting fingers exert no force
  kCone = 7,              // ineq: |f_t| <= mu f_n
  kMinForce = 8,          // ineq: normal force floor for gripping fingers
  kClearance = 9,         // ineq: resetting tip keeps a clearance margin
  kPlacement = 10,        // ineq: landing point within the target patch
  kBoundQ = 11,           // ineq: joint box bounds
  kBoundU = 12,           // ineq: action box bounds
};

inline const char* residual_fam_name(ResidualFam f) {
  switch (f) {
    case ResidualFam::kContactDist: return "contact_dist";
    case ResidualFam::kRolling: return "rolling";
    case ResidualFam::kCompliance: return "compliance";
    case ResidualFam::kBalance: return "balance";
    case ResidualFam::kTerminalContact: return "terminal_contact";
    case ResidualFam::kResetConsistency: return "reset_consistency";
    case ResidualFam::kResetZeroForce: return "reset_zero_force";
    case ResidualFam::kCone: return "cone";
    case ResidualFam::kMinForce: return "min_force";
    case ResidualFam::kClearance: return "clearance";
    case ResidualFam::kPlacement: return "placement";
    case ResidualFam::kBoundQ: return "bound_q";
    case ResidualFam::kBoundU: return "bound_u";
  }
  return "?";
}

struct Residual {
  ResidualFam fam;
  int finger;  // -1 for object-level rows
  int t;
  int coord;  // disambiguates multi-row families (x/y, joint index, ...)
  double value;
};

struct CostBreakdown {
  double goal = 0.0;
  double reach = 0.0;
  double smooth = 0.0;
  double total() const { return goal + reach + smooth; }
};

// ---------------------------------------------------------------------------
// Problem: fixed initial state, goal state (valve angle target plus landing
// targets for resetting fingers taken from the goal fingertip positions),
// horizon, and a mode assignment that selects which constraint families bind.
//
// Decision vector layout: x = [s_1 .. s_H | u_0 .. u_{H-1}], states d_s wide
// ([q, theta]) and actions d_u wide (per finger [dq_a, dq_b, f_x, f_y]).
// s_0 is pinned to the start state and is not a decision variable.
// ---------------------------------------------------------------------------
struct TrajOptProblem {
  WorldConfig world;
  ContactMode mode;
  State s0;
  State goal;
  std::vector<Vec2> target_tip;  // landing target per finger (from goal.q)
  int H = 8;
  CostWeights weights;

  int dim() const { return H * (world.d_s() + world.d_u()); }
  int state_off(int t) const {  // t in [1, H]
    return (t - 1) * world.d_s();
  }
  int action_off(int t) const {  // t in [0, H-1]
    return H * world.d_s() + t * world.d_u();
  }

  void validate() const {
    world.validate();
    mode.validate();
    if (mode.n_fingers() != world.n_f)
      throw DimensionError("contact mode arity does not match finger count");
    if (H < 1) throw ParameterError("horizon must be at least 1");
    if (static_cast<int>(s0.q.size()) != 2 * world.n_f ||
        static_cast<int>(goal.q.size()) != 2 * world.n_f)
      throw DimensionError("state arity does not match finger count");
    if (static_cast<int>(target_tip.size()) != world.n_f)
      throw DimensionError("landing target count does not match finger count");
  }
};

inline TrajOptProblem build_problem(const ContactMode& mode, const State& s0,
                                    const State& goal, int H,
                                    const WorldConfig& world,
                                    const CostWeights& weights = {}) {
  TrajOptProblem p;
  p.world = world;
  p.mode = mode;
  p.s0 = s0;
  p.goal = goal;
  p.target_tip = fk(world, goal.q);
  p.H = H;
  p.weights = weights;
  p.validate();
  return p;
}

namespace detail {

// Minimal templated planar geometry so the same constraint code evaluates on
// plain doubles (reporting, oracles) and on reverse-mode scalars (solver
// gradients). The double instantiation mirrors env kinematics term for term.
template <class T>
struct TV2 {
  T x, y;
};

template <class T>
struct FingerFrame {
  TV2<T> tip;
  T j[2][2];  // d tip / d (a, b)
};

template <class T>
FingerFrame<T> finger_frame(const WorldConfig& w, int i, const T& a, const T& b) {
  using std::cos;
  using std::sin;
  const auto ii = static_cast<size_t>(i);
  const double l1 = w.l1[ii], l2 = w.l2[ii];
  const T s1 = sin(a), c1 = cos(a);
  const T ab = a + b;
  const T s12 = sin(ab), c12 = cos(ab);
  FingerFrame<T> f;
  f.tip.x = w.base[ii][0] + l1 * c1 + l2 * c12;
  f.tip.y = w.base[ii][1] + l1 * s1 + l2 * s12;
  f.j[0][0] = T(0.0) - l1 * s1 - l2 * s12;
  f.j[0][1] = T(0.0) - l2 * s12;
  f.j[1][0] = l1 * c1 + l2 * c12;
  f.j[1][1] = l2 * c12;
  return f;
}

template <class T>
T rim_distance(const WorldConfig& w, const TV2<T>& p) {
  using std::sqrt;
  const T dx = p.x - w.valve_center[0];
  const T dy = p.y - w.valve_center[1];
  return sqrt(dx * dx + dy * dy) - w.R_v;
}

// Outward unit normal at p (undefined at the exact center; valid trajectories
// keep fingertips near the rim, far from it).
template <class T>
TV2<T> rim_normal(const WorldConfig& w, const TV2<T>& p) {
  using std::sqrt;
  const T dx = p.x - w.valve_center[0];
  const T dy = p.y - w.valve_center[1];
  const T r = sqrt(dx * dx + dy * dy);
  return {dx / r, dy / r};
}

template <class T>
TV2<T> rotate_about_center(const WorldConfig& w, const TV2<T>& p, const T& ang) {
  using std::cos;
  using std::sin;
  const T c = cos(ang), s = sin(ang);
  const T rx = p.x - w.valve_center[0];
  const T ry = p.y - w.valve_center[1];
  return {w.valve_center[0] + c * rx - s * ry, w.valve_center[1] + s * rx + c * ry};
}

// Accessors into the decision vector with s_0 folded in as constants.
template <class T>
struct XView {
  const TrajOptProblem* p;
  const std::vector<T>* x;

  T q(int t, int j) const {  // t in [0, H], j global joint index
    if (t == 0) return T(p->s0.q[static_cast<size_t>(j)]);
    return (*x)[static_cast<size_t>(p->state_off(t) + j)];
  }
  T theta(int t) const {
    if (t == 0) return T(p->s0.theta);
    return (*x)[static_cast<size_t>(p->state_off(t) + p->world.d_s() - 1)];
  }
  T dq(int t, int i, int j) const {  // action t, finger i, joint j in {0,1}
    return (*x)[static_cast<size_t>(p->action_off(t) + 4 * i + j)];
  }
  T force(int t, int i, int j) const {  // j: 0 = x, 1 = y
    return (*x)[static_cast<size_t>(p->action_off(t) + 4 * i + 2 + j)];
  }
};

// Core constraint walk. EmitEq / EmitIneq receive (family, finger, step,
// coord, value); equality rows want value == 0, inequality rows value <= 0.
// The emission order here *is* the documented stacking order.
template <class T, class EmitEq, class EmitIneq>
void walk_constraints(const TrajOptProblem& p, const XView<T>& xv, EmitEq&& eq,
                      EmitIneq&& ineq) {
  const WorldConfig& w = p.world;
  const int H = p.H;
  const int nf = w.n_f;

  // kContactDist: gripping tip stays on the rim at every decided state.
  for (int i = 0; i < nf; ++i) {
    if (!p.mode.is_contact(i)) continue;
    for (int t = 1; t <= H; ++t) {
      const auto fr = finger_frame(w, i, xv.q(t, 2 * i), xv.q(t, 2 * i + 1));
      eq(ResidualFam::kContactDist, i, t, 0, rim_distance(w, fr.tip));
    }
  }

  // kRolling: gripping tip tracks the rim material point it rests on.
  for (int i = 0; i < nf; ++i) {
    if (!p.mode.is_contact(i)) continue;
    for (int t = 0; t < H; ++t) {
      const auto cur = finger_frame(w, i, xv.q(t, 2 * i), xv.q(t, 2 * i + 1));
      const auto nxt =
          finger_frame(w, i, xv.q(t + 1, 2 * i), xv.q(t + 1, 2 * i + 1));
      const T dth = xv.theta(t + 1) - xv.theta(t);
      const auto want = rotate_about_center(w, cur.tip, dth);
      eq(ResidualFam::kRolling, i, t, 0, nxt.tip.x - want.x);
      eq(ResidualFam::kRolling, i, t, 1, nxt.tip.y - want.y);
    }
  }

  // kCompliance: commanded joint step matches the compliant response to the
  // commanded force, J^T f = k_c dq, at the pre-step configuration.
  for (int i = 0; i < nf; ++i) {
    if (!p.mode.is_contact(i)) continue;
    for (int t = 0; t < H; ++t) {
      const auto fr = finger_frame(w, i, xv.q(t, 2 * i), xv.q(t, 2 * i + 1));
      const T fx = xv.force(t, i, 0), fy = xv.force(t, i, 1);
      const T jtf0 = fr.j[0][0] * fx + fr.j[1][0] * fy;
      const T jtf1 = fr.j[0][1] * fx + fr.j[1][1] * fy;
      eq(ResidualFam::kCompliance, i, t, 0, jtf0 - w.k_c * xv.dq(t, i, 0));
      eq(ResidualFam::kCompliance, i, t, 1, jtf1 - w.k_c * xv.dq(t, i, 1));
    }
  }

  // kBalance: valve-level stiction torque balance per step. Tangential force
  // components of gripping fingers act at the rim radius. The row is keyed to
  // the object (finger -1): it exists for every step regardless of the mode,
  // while its value depends on which fingers grip.
  for (int t = 0; t < H; ++t) {
    T tau = T(0.0);
    for (int i = 0; i < nf; ++i) {
      if (!p.mode.is_contact(i)) continue;
      const auto fr = finger_frame(w, i, xv.q(t, 2 * i), xv.q(t, 2 * i + 1));
      const auto n = rim_normal(w, fr.tip);
      // tangent = perp(normal); f_t = f . tangent
      const T ft = xv.force(t, i, 1) * n.x - xv.force(t, i, 0) * n.y;
      tau += w.R_v * ft;
    }
    const T dth = xv.theta(t + 1) - xv.theta(t);
    eq(ResidualFam::kBalance, -1, t, 0,
       stiction_torque(dth, w.kappa, w.tau_s, w.w_stic) - tau);
  }

  // kTerminalContact: resetting tip back on the rim at the horizon.
  for (int i = 0; i < nf; ++i) {
    if (p.mode.is_contact(i)) continue;
    const auto fr = finger_frame(w, i, xv.q(H, 2 * i), xv.q(H, 2 * i + 1));
    eq(ResidualFam::kTerminalContact, i, H, 0, rim_distance(w, fr.tip));
  }

  // kResetConsistency: resetting joints integrate their commanded steps.
  for (int i = 0; i < nf; ++i) {
    if (p.mode.is_contact(i)) continue;
    for (int t = 0; t < H; ++t) {
      for (int j = 0; j < 2; ++j) {
        eq(ResidualFam::kResetConsistency, i, t, j,
           xv.q(t + 1, 2 * i + j) - xv.q(t, 2 * i + j) - xv.dq(t, i, j));
      }
    }
  }

  // kResetZeroForce: resetting fingers command no force.
  for (int i = 0; i < nf; ++i) {
    if (p.mode.is_contact(i)) continue;
    for (int t = 0; t < H; ++t) {
      eq(ResidualFam::kResetZeroForce, i, t, 0, xv.force(t, i, 0));
      eq(ResidualFam::kResetZeroForce, i, t, 1, xv.force(t, i, 1));
    }
  }

  // kCone: gripping forces stay inside the friction cone (two half-planes),
  // evaluated at the pre-step contact geometry where the push is applied.
  for (int i = 0; i < nf; ++i) {
    if (!p.mode.is_contact(i)) continue;
    for (int t = 0; t < H; ++t) {
      const auto fr = finger_frame(w, i, xv.q(t, 2 * i), xv.q(t, 2 * i + 1));
      const auto n = rim_normal(w, fr.tip);
      const T fx = xv.force(t, i, 0), fy = xv.force(t, i, 1);
      const T fn = T(0.0) - (fx * n.x + fy * n.y);  // pressing into the rim
      const T ft = fy * n.x - fx * n.y;
      ineq(ResidualFam::kCone, i, t, 0, ft - w.mu * fn);
      ineq(ResidualFam::kCone, i, t, 1, T(0.0) - ft - w.mu * fn);
    }
  }

  // kMinForce: gripping fingers keep a minimum press into the rim.
  for (int i = 0; i < nf; ++i) {
    if (!p.mode.is_contact(i)) continue;
    for (int t = 0; t < H; ++t) {
      const auto fr = finger_frame(w, i, xv.q(t, 2 * i), xv.q(t, 2 * i + 1));
      const auto n = rim_normal(w, fr.tip);
      const T fn =
          T(0.0) - (xv.force(t, i, 0) * n.x + xv.force(t, i, 1) * n.y);
      ineq(ResidualFam::kMinForce, i, t, 0, T(w.f_min) - fn);
    }
  }

  // kClearance: resetting tip keeps a standoff from the rim while traveling
  // (interior steps only; the horizon step re-establishes contact).
  for (int i = 0; i < nf; ++i) {
    if (p.mode.is_contact(i)) continue;
    for (int t = 1; t < H; ++t) {
      const auto fr = finger_frame(w, i, xv.q(t, 2 * i), xv.q(t, 2 * i + 1));
      ineq(ResidualFam::kClearance, i, t, 0,
           T(w.delta) - rim_distance(w, fr.tip));
    }
  }

  // kPlacement: landing point within the target patch.
  for (int i = 0; i < nf; ++i) {
    if (p.mode.is_contact(i)) continue;
    const auto fr = finger_frame(w, i, xv.q(H, 2 * i), xv.q(H, 2 * i + 1));
    const T ex = fr.tip.x - p.target_tip[static_cast<size_t>(i)][0];
    const T ey = fr.tip.y - p.target_tip[static_cast<size_t>(i)][1];
    ineq(ResidualFam::kPlacement, i, H, 0,
         ex * ex + ey * ey - w.r_patch * w.r_patch);
  }

  // kBoundQ: joint box bounds on every decided state.
  for (int i = 0; i < nf; ++i) {
    for (int t = 1; t <= H; ++t) {
      for (int j = 0; j < 2; ++j) {
        const int gj = 2 * i + j;
        const T qv = xv.q(t, gj);
        ineq(ResidualFam::kBoundQ, i, t, 2 * j,
             qv - w.q_max[static_cast<size_t>(gj)]);
        ineq(ResidualFam::kBoundQ, i, t, 2 * j + 1,
             T(w.q_min[static_cast<size_t>(gj)]) - qv);
      }
    }
  }

  // kBoundU: action box bounds.
  for (int i = 0; i < nf; ++i) {
    for (int t = 0; t < H; ++t) {
      for (int j = 0; j < 2; ++j) {
        const T d = xv.dq(t, i, j);
        ineq(ResidualFam::kBoundU, i, t, 4 * j, d - w.dq_max);
        ineq(ResidualFam::kBoundU, i, t, 4 * j + 1, T(0.0) - d - w.dq_max);
      }
      for (int j = 0; j < 2; ++j) {
        const T f = xv.force(t, i, j);
        ineq(ResidualFam::kBoundU, i, t, 4 * j + 2, f - w.f_max);
        ineq(ResidualFam::kBoundU, i, t, 4 * j + 3, T(0.0) - f - w.f_max);
      }
    }
  }
}

template <class T>
void walk_costs(const TrajOptProblem& p, const XView<T>& xv, T& goal, T& reach,
                T& smooth) {
  const WorldConfig& w = p.world;
  goal = T(0.0);
  reach = T(0.0);
  smooth = T(0.0);
  for (int t = 1; t <= p.H; ++t) {
    const T e = xv.theta(t) - T(p.goal.theta);
    goal += e * e;
  }
  for (int i = 0; i < w.n_f; ++i) {
    if (p.mode.is_contact(i)) continue;
    const auto fr = finger_frame(w, i, xv.q(p.H, 2 * i), xv.q(p.H, 2 * i + 1));
    const T ex = fr.tip.x - p.target_tip[static_cast<size_t>(i)][0];
    const T ey = fr.tip.y - p.target_tip[static_cast<size_t>(i)][1];
    reach += ex * ex + ey * ey;
  }
  for (int t = 0; t + 1 < p.H; ++t) {
    for (int j = 0; j < w.d_u(); ++j) {
      const size_t a = static_cast<size_t>(p.action_off(t) + j);
      const size_t b = static_cast<size_t>(p.action_off(t + 1) + j);
      const T d = (*xv.x)[b] - (*xv.x)[a];
      smooth += d * d;
    }
  }
  goal *= T(p.weights.w_goal);
  reach *= T(p.weights.w_reach);
  smooth *= T(p.weights.w_smooth);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Public evaluation entry points (double precision).
// ---------------------------------------------------------------------------

// Pack / unpack between the decision vector and (states, actions) sequences.
// states holds s_1..s_H; actions holds u_0..u_{H-1}. Double precision
// throughout (no float round-trip).
inline std::vector<double> pack_decision(const TrajOptProblem& p,
                                         const std::vector<State>& states,
                                         const std::vector<Action>& actions) {
  if (static_cast<int>(states.size()) != p.H)
    throw DimensionError("expected H states (s_1..s_H)");
  if (static_cast<int>(actions.size()) != p.H)
    throw DimensionError("expected H actions (u_0..u_{H-1})");
  std::vector<double> x(static_cast<size_t>(p.dim()), 0.0);
  const int nq = 2 * p.world.n_f;
  for (int t = 1; t <= p.H; ++t) {
    const State& s = states[static_cast<size_t>(t - 1)];
    if (static_cast<int>(s.q.size()) != nq) throw DimensionError("state arity");
    for (int j = 0; j < nq; ++j)
      x[static_cast<size_t>(p.state_off(t) + j)] = s.q[static_cast<size_t>(j)];
    x[static_cast<size_t>(p.state_off(t) + nq)] = s.theta;
  }
  for (int t = 0; t < p.H; ++t) {
    const Action& u = actions[static_cast<size_t>(t)];
    if (static_cast<int>(u.f.size()) != p.world.n_f)
      throw DimensionError("action arity");
    for (int i = 0; i < p.world.n_f; ++i) {
      const size_t off = static_cast<size_t>(p.action_off(t) + 4 * i);
      x[off + 0] = u.dq[static_cast<size_t>(2 * i)];
      x[off + 1] = u.dq[static_cast<size_t>(2 * i + 1)];
      x[off + 2] = u.f[static_cast<size_t>(i)][0];
      x[off + 3] = u.f[static_cast<size_t>(i)][1];
    }
  }
  return x;
}

inline void unpack_decision(const TrajOptProblem& p, const std::vector<double>& x,
                            std::vector<State>& states,
                            std::vector<Action>& actions) {
  if (static_cast<int>(x.size()) != p.dim())
    throw DimensionError("decision vector length mismatch");
  states.assign(static_cast<size_t>(p.H), State::zeros(p.world));
  actions.assign(static_cast<size_t>(p.H), Action::zeros(p.world));
  const int nq = 2 * p.world.n_f;
  for (int t = 1; t <= p.H; ++t) {
    State& s = states[static_cast<size_t>(t - 1)];
    for (int j = 0; j < nq; ++j)
      s.q[static_cast<size_t>(j)] = x[static_cast<size_t>(p.state_off(t) + j)];
    s.theta = x[static_cast<size_t>(p.state_off(t) + nq)];
  }
  for (int t = 0; t < p.H; ++t) {
    Action& u = actions[static_cast<size_t>(t)];
    for (int i = 0; i < p.world.n_f; ++i) {
      const size_t off = static_cast<size_t>(p.action_off(t) + 4 * i);
      u.dq[static_cast<size_t>(2 * i)] = x[off + 0];
      u.dq[static_cast<size_t>(2 * i + 1)] = x[off + 1];
      u.f[static_cast<size_t>(i)] = {x[off + 2], x[off + 3]};
    }
  }
}

struct ConstraintEval {
  std::vector<Residual> eq;    // values: signed equality residuals
  std::vector<Residual> ineq;  // values: raw g (feasible iff g <= 0)

  double h_inf() const {
    double m = 0.0;
    for (const auto& r : eq) m = std::max(m, std::abs(r.value));
    return m;
  }
  double g_plus_max() const {
    double m = 0.0;
    for (const auto& r : ineq) m = std::max(m, r.value);
    return std::max(m, 0.0);
  }
  // Stacked inequality violations, clamped at zero (reported form).
  std::vector<double> g_plus() const {
    std::vector<double> out;
    out.reserve(ineq.size());
    for (const auto& r : ineq) out.push_back(std::max(0.0, r.value));
    return out;
  }
};

inline ConstraintEval eval_constraints(const TrajOptProblem& p,
                                       const std::vector<double>& x) {
  if (static_cast<int>(x.size()) != p.dim())
    throw DimensionError("decision vector length mismatch");
  ConstraintEval out;
  detail::XView<double> xv{&p, &x};
  detail::walk_constraints<double>(
      p, xv,
      [&](ResidualFam f, int i, int t, int c, double v) {
        out.eq.push_back({f, i, t, c, v});
      },
      [&](ResidualFam f, int i, int t, int c, double v) {
        out.ineq.push_back({f, i, t, c, v});
      });
  return out;
}

inline CostBreakdown eval_costs(const TrajOptProblem& p,
                                const std::vector<double>& x) {
  if (static_cast<int>(x.size()) != p.dim())
    throw DimensionError("decision vector length mismatch");
  detail::XView<double> xv{&p, &x};
  double g, r, s;
  detail::walk_costs<double>(p, xv, g, r, s);
  return {g, r, s};
}

// Row counts per family for a given mode — the closed-form tally that the
// constraint walk must reproduce.
struct RowTally {
  int eq = 0;
  int ineq = 0;
};

inline RowTally expected_rows(const TrajOptProblem& p) {
  const int H = p.H;
  int nc = 0, nr = 0;
  for (int i = 0; i < p.world.n_f; ++i) (p.mode.is_contact(i) ? nc : nr) += 1;
  RowTally t;
  t.eq = nc * (H + 2 * H + 2 * H)    // contact dist + rolling + compliance
         + H                          // balance (object row)
         + nr * (1 + 2 * H + 2 * H);  // terminal + consistency + zero force
  t.ineq = nc * (2 * H + H)            // cone + min force
           + nr * ((H - 1) + 1)        // clearance + placement
           + p.world.n_f * 4 * H       // q bounds
           + p.world.n_f * 8 * H;      // u bounds
  return t;
}

}  // namespace recdiff
