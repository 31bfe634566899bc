#pragma once

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <utility>
#include <vector>

#include "recdiff/core/errors.hpp"
#include "recdiff/trajopt/problem.hpp"

namespace recdiff {

struct SolverConfig {
  int inner_iters = 80;     // quasi-Newton steps per outer iteration
  int lbfgs_mem = 8;        // curvature pairs kept
  double rho0 = 10.0;       // initial penalty weight
  double rho_max = 1e6;     // penalty growth cap
  double rho_grow = 2.0;    // growth factor when infeasibility stalls
  double tol_h = 1e-3;      // equality feasibility (inf norm)
  double tol_g = 1e-6;      // inequality violation (max over rows)
  double tol_step = 1e-6;   // last inner step size for convergence
  double armijo_c1 = 1e-4;
  int armijo_max = 40;
  double grad_tol = 1e-10;  // inner stationarity (relative)
};

struct FamilyResidual {
  ResidualFam fam;
  double value;  // max |h| for equality families, max g_+ for inequality ones
};

struct Solution {
  std::vector<double> x;
  std::vector<State> states;    // s_1 .. s_H
  std::vector<Action> actions;  // u_0 .. u_{H-1}
  bool converged = false;
  int outer_used = 0;
  double h_inf = 0.0;
  double g_plus = 0.0;
  CostBreakdown costs;
  std::vector<FamilyResidual> family_residuals;
  // Running best equality infeasibility after each outer iteration;
  // nonincreasing by construction.
  std::vector<double> best_h_trace;
};

namespace detail {

// Augmented Lagrangian (PHR form) over the constraint walk. Multipliers are
// indexed by emission order, which is deterministic for a fixed problem.
class ALFunction {
 public:
  ALFunction(const TrajOptProblem& p, double rho0) : p_(p), rho_(rho0) {
    const ConstraintEval ce = eval_constraints(p, std::vector<double>(
                                                      static_cast<size_t>(p.dim()), 0.0));
    lam_.assign(ce.eq.size(), 0.0);
    mu_.assign(ce.ineq.size(), 0.0);
  }

  template <class T>
  T eval(const std::vector<T>& x) const {
    XView<T> xv{&p_, &x};
    T goal, reach, smooth;
    walk_costs(p_, xv, goal, reach, smooth);
    T L = goal + reach + smooth;
    size_t ie = 0, ii = 0;
    walk_constraints(
        p_, xv,
        [&](ResidualFam, int, int, int, const T& h) {
          L += lam_[ie] * h + (0.5 * rho_) * h * h;
          ++ie;
        },
        [&](ResidualFam, int, int, int, const T& g) {
          const T m = relu(mu_[ii] / rho_ + g);
          L += (0.5 * rho_) * m * m - mu_[ii] * mu_[ii] / (2.0 * rho_);
          ++ii;
        });
    return L;
  }

  double value(const std::vector<double>& x) const { return eval<double>(x); }
  double gradient(const std::vector<double>& x, std::vector<double>& g) const {
    return grad_eval([this](const std::vector<AD>& ax) { return eval<AD>(ax); },
                     x, g);
  }

  void update_multipliers(const ConstraintEval& ce) {
    for (size_t j = 0; j < lam_.size(); ++j) lam_[j] += rho_ * ce.eq[j].value;
    for (size_t j = 0; j < mu_.size(); ++j)
      mu_[j] = std::max(0.0, mu_[j] + rho_ * ce.ineq[j].value);
  }
  void grow_penalty(double factor, double cap) {
    rho_ = std::min(rho_ * factor, cap);
  }
  double rho() const { return rho_; }

 private:
  const TrajOptProblem& p_;
  double rho_;
  std::vector<double> lam_, mu_;
};

inline double inf_norm(const std::vector<double>& v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

// Minimize f from x in place with L-BFGS + Armijo backtracking; f exposes
// value(x) and gradient(x, g). Returns the inf norm of the last accepted
// step (0 if no step was accepted).
template <class Fn>
double lbfgs_minimize(const Fn& f, std::vector<double>& x,
                      const SolverConfig& cfg) {
  const size_t n = x.size();
  std::vector<double> g(n), gnew(n), d(n), xnew(n);
  double fx = f.gradient(x, g);
  if (!std::isfinite(fx)) throw InitializationError("objective not finite at start of inner loop");

  std::deque<std::pair<std::vector<double>, std::vector<double>>> hist;  // (s, y)
  double last_step = 0.0;

  for (int it = 0; it < cfg.inner_iters; ++it) {
    if (inf_norm(g) <= cfg.grad_tol * (1.0 + std::abs(fx))) {
      last_step = 0.0;  // stationary: the minimizer would not move further
      break;
    }

    // Two-loop recursion for d = -H g.
    d = g;
    std::vector<double> alpha(hist.size());
    for (size_t k = hist.size(); k-- > 0;) {
      const auto& [s, y] = hist[k];
      double sy = 0.0, sd = 0.0;
      for (size_t j = 0; j < n; ++j) {
        sy += s[j] * y[j];
        sd += s[j] * d[j];
      }
      alpha[k] = sd / sy;
      for (size_t j = 0; j < n; ++j) d[j] -= alpha[k] * y[j];
    }
    if (!hist.empty()) {
      const auto& [s, y] = hist.back();
      double sy = 0.0, yy = 0.0;
      for (size_t j = 0; j < n; ++j) {
        sy += s[j] * y[j];
        yy += y[j] * y[j];
      }
      const double gamma = sy / yy;
      for (size_t j = 0; j < n; ++j) d[j] *= gamma;
    }
    for (size_t k = 0; k < hist.size(); ++k) {
      const auto& [s, y] = hist[k];
      double yd = 0.0, sy = 0.0;
      for (size_t j = 0; j < n; ++j) {
        yd += y[j] * d[j];
        sy += s[j] * y[j];
      }
      const double beta = yd / sy;
      for (size_t j = 0; j < n; ++j) d[j] += (alpha[k] - beta) * s[j];
    }
    for (size_t j = 0; j < n; ++j) d[j] = -d[j];

    double gd = 0.0;
    for (size_t j = 0; j < n; ++j) gd += g[j] * d[j];
    if (!(gd < 0.0)) {  // not a descent direction: restart from steepest descent
      hist.clear();
      for (size_t j = 0; j < n; ++j) d[j] = -g[j];
      gd = 0.0;
      for (size_t j = 0; j < n; ++j) gd += g[j] * d[j];
      if (!(gd < 0.0)) {
        last_step = 0.0;  // zero gradient: stationary
        break;
      }
    }

    // Armijo backtracking.
    double step = 1.0;
    bool accepted = false;
    double ftrial = 0.0;
    for (int ls = 0; ls < cfg.armijo_max; ++ls) {
      for (size_t j = 0; j < n; ++j) xnew[j] = x[j] + step * d[j];
      ftrial = f.value(xnew);
      if (std::isfinite(ftrial) && ftrial <= fx + cfg.armijo_c1 * step * gd) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) break;

    const double fnew = f.gradient(xnew, gnew);
    std::vector<double> s(n), y(n);
    double sy = 0.0, ss = 0.0, yy2 = 0.0;
    for (size_t j = 0; j < n; ++j) {
      s[j] = xnew[j] - x[j];
      y[j] = gnew[j] - g[j];
      sy += s[j] * y[j];
      ss += s[j] * s[j];
      yy2 += y[j] * y[j];
    }
    if (sy > 1e-12 * std::sqrt(ss) * std::sqrt(yy2)) {
      hist.emplace_back(std::move(s), std::move(y));
      if (static_cast<int>(hist.size()) > cfg.lbfgs_mem) hist.pop_front();
    }
    last_step = 0.0;
    for (size_t j = 0; j < n; ++j)
      last_step = std::max(last_step, std::abs(xnew[j] - x[j]));
    x = xnew;
    g = gnew;
    fx = fnew;
  }
  return last_step;
}

inline std::vector<FamilyResidual> family_summary(const ConstraintEval& ce) {
  std::vector<FamilyResidual> out;
  auto bump = [&](ResidualFam fam, double v) {
    for (auto& fr : out) {
      if (fr.fam == fam) {
        fr.value = std::max(fr.value, v);
        return;
      }
    }
    out.push_back({fam, v});
  };
  for (const auto& r : ce.eq) bump(r.fam, std::abs(r.value));
  for (const auto& r : ce.ineq) bump(r.fam, std::max(0.0, r.value));
  return out;
}

}  // namespace detail

// Solve the mode-conditioned trajectory optimization with an augmented
// Lagrangian outer loop. budget is the number of outer iterations. The
// returned iterate is the best one seen: among iterates meeting the
// feasibility tolerances the one with lowest cost, otherwise the one with
// least infeasibility.
inline Solution solve(const TrajOptProblem& p, const std::vector<double>& x_init,
                      int budget, const SolverConfig& cfg = {}) {
  p.validate();
  if (static_cast<int>(x_init.size()) != p.dim())
    throw DimensionError("initial decision vector length mismatch");
  if (budget < 1) throw ParameterError("solver budget must be at least one iteration");

  detail::ALFunction L(p, cfg.rho0);
  if (!std::isfinite(L.value(x_init)))
    throw InitializationError("objective not finite at the initial trajectory");

  std::vector<double> x = x_init;

  Solution best;
  best.x = x;
  bool best_feasible = false;
  double best_cost = std::numeric_limits<double>::infinity();
  double best_viol = std::numeric_limits<double>::infinity();
  double best_h_seen = std::numeric_limits<double>::infinity();
  double prev_viol = std::numeric_limits<double>::infinity();

  Solution out;
  out.best_h_trace.clear();
  bool converged = false;
  int outer = 0;

  auto consider = [&](const std::vector<double>& xc, const ConstraintEval& ce,
                      const CostBreakdown& cb) {
    const double h = ce.h_inf();
    const double gp = ce.g_plus_max();
    const double viol = std::max(h, gp);
    const bool feas = h <= cfg.tol_h && gp <= cfg.tol_g;
    best_h_seen = std::min(best_h_seen, h);
    const bool better = best_feasible
                            ? (feas && cb.total() < best_cost)
                            : (feas || viol < best_viol);
    if (better) {
      best.x = xc;
      best.h_inf = h;
      best.g_plus = gp;
      best.costs = cb;
      best.family_residuals = detail::family_summary(ce);
      best_feasible = best_feasible || feas;
      best_cost = cb.total();
      best_viol = viol;
    }
  };

  {
    const ConstraintEval ce0 = eval_constraints(p, x);
    consider(x, ce0, eval_costs(p, x));
  }

  for (outer = 1; outer <= budget; ++outer) {
    const double step = detail::lbfgs_minimize(L, x, cfg);

    const ConstraintEval ce = eval_constraints(p, x);
    const CostBreakdown cb = eval_costs(p, x);
    consider(x, ce, cb);
    out.best_h_trace.push_back(best_h_seen);

    const double h = ce.h_inf();
    const double gp = ce.g_plus_max();
    if (h <= cfg.tol_h && gp <= cfg.tol_g && step <= cfg.tol_step) {
      converged = true;
      break;
    }

    L.update_multipliers(ce);
    const double viol = std::max(h, gp);
    if (viol > 0.5 * prev_viol) L.grow_penalty(cfg.rho_grow, cfg.rho_max);
    prev_viol = viol;
  }

  out.x = best.x;
  out.converged = converged;
  out.outer_used = std::min(outer, budget);
  out.h_inf = best.h_inf;
  out.g_plus = best.g_plus;
  out.costs = best.costs;
  out.family_residuals = best.family_residuals;
  unpack_decision(p, out.x, out.states, out.actions);
  return out;
}

// Convenience initializer: hold the start state over the horizon with zero
// actions. Generally infeasible (the minimum-force floor is violated) but a
// well-defined, finite starting point.
inline std::vector<double> hold_init(const TrajOptProblem& p) {
  std::vector<State> states(static_cast<size_t>(p.H), p.s0);
  std::vector<Action> actions(static_cast<size_t>(p.H), Action::zeros(p.world));
  return pack_decision(p, states, actions);
}

// Structured warm start: the valve angle ramps linearly to the goal, gripping
// fingertips are dragged with the ramp (per-step inverse kinematics), and
// commanded forces put the torque balance exactly at the ramp rate with a
// friction-cone margin. For all-contact modes this start satisfies the
// equality families to numerical precision, so the solver only descends cost
// along the feasible manifold. Resetting fingers hold their pose with zero
// action; their families start violated and are left to the solver.
inline std::vector<double> rolling_init(const TrajOptProblem& p) {
  const WorldConfig& w = p.world;
  int n_c = 0;
  for (int i = 0; i < w.n_f; ++i) n_c += p.mode.is_contact(i) ? 1 : 0;
  const double dth = (p.goal.theta - p.s0.theta) / p.H;
  const double ft =
      stiction_torque(dth, w.kappa, w.tau_s, w.w_stic) / (n_c * w.R_v);
  double press = std::max(2.0 * w.f_min, 1.5 * std::abs(ft) / w.mu);
  press = std::min(press, 0.8 * w.f_max);

  std::vector<State> states;
  std::vector<Action> actions;
  State cur = p.s0;
  for (int t = 0; t < p.H; ++t) {
    Action u = Action::zeros(w);
    State nxt = cur;
    nxt.theta = cur.theta + dth;
    for (int i = 0; i < w.n_f; ++i) {
      const auto ii = static_cast<size_t>(i);
      if (!p.mode.is_contact(i)) continue;
      const Vec2 tip = fk_finger(w, i, cur.q[2 * ii], cur.q[2 * ii + 1]);
      const Vec2 d = tip - w.valve_center;
      const Vec2 n = (1.0 / norm(d)) * d;
      const Vec2 tan = perp(n);
      const Vec2 f{-press * n[0] + ft * tan[0], -press * n[1] + ft * tan[1]};
      u.f[ii] = f;
      const Jac2 J = jacobian_finger(w, i, cur.q[2 * ii], cur.q[2 * ii + 1]);
      u.dq[2 * ii] = (J.m[0][0] * f[0] + J.m[1][0] * f[1]) / w.k_c;
      u.dq[2 * ii + 1] = (J.m[0][1] * f[0] + J.m[1][1] * f[1]) / w.k_c;
      const Vec2 target = w.valve_center + rotate(tip - w.valve_center, dth);
      const auto q = ik_finger(w, i, target, cur.q[2 * ii + 1]);
      if (q) {
        nxt.q[2 * ii] = (*q)[0];
        nxt.q[2 * ii + 1] = (*q)[1];
      }
    }
    actions.push_back(u);
    states.push_back(nxt);
    cur = nxt;
  }
  return pack_decision(p, states, actions);
}

}  // namespace recdiff
