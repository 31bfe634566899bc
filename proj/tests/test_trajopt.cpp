#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <map>
#include <set>
#include <tuple>
#include <vector>

#include "recdiff/core/rng.hpp"
#include "recdiff/env/sim.hpp"
#include "recdiff/trajopt/adscalar.hpp"
#include "recdiff/trajopt/oracle.hpp"
#include "recdiff/trajopt/problem.hpp"
#include "recdiff/trajopt/solver.hpp"

using namespace recdiff;

namespace {

constexpr double kPi = 3.14159265358979323846;

Env make_env() {
  WorldConfig w;
  w.sigma_act = 0.0;
  w.p_kick = 0.0;
  return Env(w);
}

State grip(const Env& env) { return env.grip_state({kPi, 0.0}); }

// Key identifying a constraint row independent of its value.
using RowKey = std::tuple<int, int, int, int>;  // fam, finger, t, coord

RowKey key_of(const Residual& r) {
  return {static_cast<int>(r.fam), r.finger, r.t, r.coord};
}

std::map<RowKey, double> row_map(const std::vector<Residual>& rows) {
  std::map<RowKey, double> m;
  for (const auto& r : rows) m[key_of(r)] = r.value;
  return m;
}

// Random but dimension-correct decision vector.
std::vector<double> random_x(const TrajOptProblem& p, Rng& rng, double scale) {
  std::vector<double> x(static_cast<size_t>(p.dim()));
  for (auto& v : x) v = scale * rng.uniform(-1.0, 1.0);
  return x;
}

// Gripping force with the given press (into the rim) and tangential parts.
Vec2 contact_force(const Vec2& n, double press, double tangential) {
  const Vec2 t = perp(n);
  return {-press * n[0] + tangential * t[0], -press * n[1] + tangential * t[1]};
}

// Bare cost objective: with w_goal = w_reach = 0 this reduces to the
// smoothness term, a convex quadratic in the actions alone.
struct SmoothOnly {
  const TrajOptProblem* p;
  template <class T>
  T eval(const std::vector<T>& x) const {
    detail::XView<T> xv{p, &x};
    T jg, jr, js;
    detail::walk_costs(*p, xv, jg, jr, js);
    return jg + jr + js;
  }
  double value(const std::vector<double>& x) const { return eval<double>(x); }
  double gradient(const std::vector<double>& x, std::vector<double>& g) const {
    return grad_eval([this](const std::vector<AD>& ax) { return eval<AD>(ax); },
                     x, g);
  }
};

// Roll an all-contact command sequence through the noiseless simulator and
// pack the realized trajectory with the commanded actions.
std::vector<double> rollout_pack(const Env& env, const TrajOptProblem& p,
                                 double press, double tangential) {
  Rng rng(0);
  std::vector<State> states;
  std::vector<Action> actions;
  State s = p.s0;
  for (int t = 0; t < p.H; ++t) {
    Action u = Action::zeros(env.w);
    const auto cs = env.contacts(s);
    for (int i = 0; i < env.w.n_f; ++i) {
      const auto ii = static_cast<size_t>(i);
      u.f[ii] = contact_force(cs[ii].normal, press, tangential);
      const Jac2 J = jacobian_finger(env.w, i, s.q[2 * ii], s.q[2 * ii + 1]);
      u.dq[2 * ii] = (J.m[0][0] * u.f[ii][0] + J.m[1][0] * u.f[ii][1]) / env.w.k_c;
      u.dq[2 * ii + 1] = (J.m[0][1] * u.f[ii][0] + J.m[1][1] * u.f[ii][1]) / env.w.k_c;
    }
    s = env.step(s, u, rng).s;
    states.push_back(s);
    actions.push_back(u);
  }
  return pack_decision(p, states, actions);
}

}  // namespace

TEST_CASE("reverse-mode gradients match finite differences") {
  auto f = [](const auto& x) {
    using std::exp;
    using std::sin;
    using std::sqrt;
    using std::tanh;
    auto inv = x[1] * x[2] / (1.0 + x[0] * x[0]);
    auto hinge = relu(x[1] - 0.3);
    return sin(x[0]) * x[1] + tanh(x[2] / 3.0) * x[0] - inv +
           sqrt(1.0 + x[2] * x[2]) + exp(x[0] * 0.1) + hinge * hinge;
  };
  const std::vector<double> x0 = {0.7, -0.4, 1.3};
  std::vector<double> g;
  const double fx = grad_eval([&](const std::vector<AD>& ax) { return f(ax); }, x0, g);
  CHECK(fx == Catch::Approx(f(x0)).margin(1e-12));
  const double h = 1e-6;
  for (size_t j = 0; j < x0.size(); ++j) {
    auto xp = x0, xm = x0;
    xp[j] += h;
    xm[j] -= h;
    const double fd = (f(xp) - f(xm)) / (2.0 * h);
    CHECK(g[j] == Catch::Approx(fd).margin(1e-7));
  }

  SECTION("constants stay off the tape") {
    std::vector<double> g2;
    grad_eval(
        [](const std::vector<AD>& ax) {
          AD c = 3.0;        // constant, no node
          return ax[0] * c;  // gradient 3
        },
        {2.0}, g2);
    CHECK(g2[0] == 3.0);
  }

  SECTION("nested gradient evaluation is rejected") {
    std::vector<double> g3;
    CHECK_THROWS_AS(grad_eval(
                        [&](const std::vector<AD>& ax) {
                          std::vector<double> gi;
                          grad_eval([](const std::vector<AD>& b) { return b[0]; },
                                    {1.0}, gi);
                          return ax[0];
                        },
                        {1.0}, g3),
                    ContractError);
  }
}

TEST_CASE("problem assembly follows the contact mode") {
  const Env env = make_env();
  const State s0 = grip(env);
  State goal = s0;
  goal.theta = 0.3;

  SECTION("an all-reset mode is rejected") {
    CHECK_THROWS_AS(build_problem(ContactMode{{0, 0}}, s0, goal, 4, env.w),
                    ParameterError);
    CHECK_THROWS_AS(build_problem(ContactMode{{2, 1}}, s0, goal, 4, env.w),
                    ParameterError);
  }

  SECTION("all-ones mode has no reset rows and zero reach cost") {
    const auto p = build_problem(ContactMode{{1, 1}}, s0, goal, 4, env.w);
    Rng rng(3);
    const auto x = random_x(p, rng, 0.5);
    const auto ce = eval_constraints(p, x);
    for (const auto& r : ce.eq) {
      CHECK(r.fam != ResidualFam::kTerminalContact);
      CHECK(r.fam != ResidualFam::kResetConsistency);
      CHECK(r.fam != ResidualFam::kResetZeroForce);
    }
    for (const auto& r : ce.ineq) {
      CHECK(r.fam != ResidualFam::kClearance);
      CHECK(r.fam != ResidualFam::kPlacement);
    }
    CHECK(eval_costs(p, x).reach == 0.0);
  }

  SECTION("a mixed mode assigns the families per finger") {
    const auto p = build_problem(ContactMode{{0, 1}}, s0, goal, 3, env.w);
    Rng rng(4);
    const auto ce = eval_constraints(p, random_x(p, rng, 0.5));
    const std::set<ResidualFam> contact_fams = {
        ResidualFam::kContactDist, ResidualFam::kRolling, ResidualFam::kCompliance,
        ResidualFam::kCone, ResidualFam::kMinForce};
    const std::set<ResidualFam> reset_fams = {
        ResidualFam::kTerminalContact, ResidualFam::kResetConsistency,
        ResidualFam::kResetZeroForce, ResidualFam::kClearance,
        ResidualFam::kPlacement};
    auto check_rows = [&](const std::vector<Residual>& rows) {
      for (const auto& r : rows) {
        if (r.fam == ResidualFam::kBoundQ || r.fam == ResidualFam::kBoundU) continue;
        if (r.finger == 0) CHECK(reset_fams.count(r.fam) == 1);
        if (r.finger == 1) CHECK(contact_fams.count(r.fam) == 1);
      }
    };
    check_rows(ce.eq);
    check_rows(ce.ineq);
  }

  SECTION("row counts match the combinatorial tally") {
    // Independent tally: per gripping finger H + 2H + 2H equality rows and
    // 2H + H inequality rows; per resetting finger 1 + 2H + 2H equality rows
    // and (H-1) + 1 inequality rows; the torque balance adds H object rows;
    // bounds add 4H + 8H rows per finger.
    Rng rng(5);
    const std::vector<ContactMode> modes = {{{1, 1}}, {{1, 0}}, {{0, 1}}, {{1, 1}}, {{0, 1}}};
    for (size_t trial = 0; trial < modes.size(); ++trial) {
      const int H = 1 + rng.uniform_int(5);
      const auto p = build_problem(modes[trial], s0, goal, H, env.w);
      int nc = 0, nr = 0;
      for (int v : modes[trial].c) (v == 1 ? nc : nr) += 1;
      const int want_eq = nc * 5 * H + H + nr * (4 * H + 1);
      const int want_ineq = nc * 3 * H + nr * H + 2 * 12 * H;
      const auto ce = eval_constraints(p, std::vector<double>(
                                              static_cast<size_t>(p.dim()), 0.1));
      CHECK(static_cast<int>(ce.eq.size()) == want_eq);
      CHECK(static_cast<int>(ce.ineq.size()) == want_ineq);
      const RowTally tally = expected_rows(p);
      CHECK(tally.eq == want_eq);
      CHECK(tally.ineq == want_ineq);
    }
  }

  SECTION("toggling one finger swaps exactly its family rows") {
    const int H = 3;
    const auto p_base = build_problem(ContactMode{{1, 1}}, s0, goal, H, env.w);
    const auto p_flip = build_problem(ContactMode{{1, 0}}, s0, goal, H, env.w);
    Rng rng(6);
    const auto x = random_x(p_base, rng, 0.4);
    const auto ce_base = eval_constraints(p_base, x);
    const auto ce_flip = eval_constraints(p_flip, x);

    auto split = [](const std::vector<Residual>& rows, int finger) {
      std::map<RowKey, double> mine, others;
      for (const auto& r : rows) (r.finger == finger ? mine : others)[key_of(r)] = r.value;
      return std::make_pair(mine, others);
    };

    for (int pass = 0; pass < 2; ++pass) {
      const auto& base_rows = pass == 0 ? ce_base.eq : ce_base.ineq;
      const auto& flip_rows = pass == 0 ? ce_flip.eq : ce_flip.ineq;
      const auto [base_f1, base_rest] = split(base_rows, 1);
      const auto [flip_f1, flip_rest] = split(flip_rows, 1);

      // Finger 1's row keys are disjoint between the two modes (its whole
      // family set swaps), except the bound rows which are mode-independent.
      for (const auto& [k, v] : base_f1) {
        const auto fam = static_cast<ResidualFam>(std::get<0>(k));
        if (fam == ResidualFam::kBoundQ || fam == ResidualFam::kBoundU) {
          REQUIRE(flip_f1.count(k) == 1);
          CHECK(flip_f1.at(k) == v);
        } else {
          CHECK(flip_f1.count(k) == 0);
        }
      }
      // Rows not keyed to finger 1 are identical in both modes except the
      // object-level balance rows, whose keys persist but whose values change
      // with the gripping set.
      REQUIRE(base_rest.size() == flip_rest.size());
      for (const auto& [k, v] : base_rest) {
        REQUIRE(flip_rest.count(k) == 1);
        if (std::get<0>(k) == static_cast<int>(ResidualFam::kBalance)) continue;
        CHECK(flip_rest.at(k) == v);
      }
    }
  }
}

TEST_CASE("cost evaluation matches a direct recomputation") {
  const Env env = make_env();
  const State s0 = grip(env);
  State goal = s0;
  goal.theta = 0.4;
  const auto p = build_problem(ContactMode{{0, 1}}, s0, goal, 4, env.w);
  Rng rng(7);
  const auto x = random_x(p, rng, 0.6);

  std::vector<State> states;
  std::vector<Action> actions;
  unpack_decision(p, x, states, actions);

  double jg = 0.0;
  for (const auto& s : states) jg += (s.theta - goal.theta) * (s.theta - goal.theta);
  jg *= p.weights.w_goal;

  const Vec2 tipH = fk_finger(env.w, 0, states.back().q[0], states.back().q[1]);
  const Vec2 target = fk_finger(env.w, 0, goal.q[0], goal.q[1]);
  const double jr = p.weights.w_reach * dot(tipH - target, tipH - target);

  double js = 0.0;
  for (size_t t = 0; t + 1 < actions.size(); ++t) {
    const auto a = actions[t].to_flat(), b = actions[t + 1].to_flat();
    for (size_t j = 0; j < a.size(); ++j) {
      const double d = static_cast<double>(b[j]) - static_cast<double>(a[j]);
      js += d * d;
    }
  }
  js *= p.weights.w_smooth;

  const CostBreakdown cb = eval_costs(p, x);
  CHECK(cb.goal == Catch::Approx(jg).margin(1e-9));
  CHECK(cb.reach == Catch::Approx(jr).margin(1e-9));
  // The recomputation rounds actions through float; allow for that.
  CHECK(cb.smooth == Catch::Approx(js).margin(1e-5));
  CHECK(cb.total() == Catch::Approx(jg + jr + cb.smooth).margin(1e-9));

  SECTION("costs are linear in the weights") {
    CostWeights wts;
    wts.w_goal = 3.5;
    wts.w_reach = 2.0;
    wts.w_smooth = 0.25;
    const auto p2 = build_problem(ContactMode{{0, 1}}, s0, goal, 4, env.w, wts);
    const CostBreakdown cb2 = eval_costs(p2, x);
    CHECK(cb2.goal == Catch::Approx(cb.goal * 3.5 / p.weights.w_goal).margin(1e-9));
    CHECK(cb2.reach == Catch::Approx(cb.reach * 2.0 / p.weights.w_reach).margin(1e-9));
    CHECK(cb2.smooth == Catch::Approx(cb.smooth * 0.25 / p.weights.w_smooth).margin(1e-9));
  }

  SECTION("costs vanish at the goal") {
    std::vector<State> gs(static_cast<size_t>(p.H), goal);
    std::vector<Action> ga(static_cast<size_t>(p.H), Action::zeros(env.w));
    const auto xg = pack_decision(p, gs, ga);
    const CostBreakdown at_goal = eval_costs(p, xg);
    CHECK(at_goal.goal == Catch::Approx(0.0).margin(1e-18));
    CHECK(at_goal.reach == Catch::Approx(0.0).margin(1e-18));
    CHECK(at_goal.smooth == 0.0);
  }
}

TEST_CASE("hand-computed residual rows") {
  const Env env = make_env();
  const WorldConfig& w = env.w;
  const State s0 = grip(env);
  State goal = s0;
  goal.theta = 0.2;

  SECTION("friction cone and force floor at the start state") {
    const auto p = build_problem(ContactMode{{1, 1}}, s0, goal, 1, w);
    std::vector<State> states = {s0};
    std::vector<Action> actions = {Action::zeros(w)};
    actions[0].f[0] = {1.5, 0.3};  // at normal (-1, 0): fn = 1.5, ft = -0.3
    const auto x = pack_decision(p, states, actions);
    const auto rows = row_map(eval_constraints(p, x).ineq);
    CHECK(rows.at({static_cast<int>(ResidualFam::kCone), 0, 0, 0}) ==
          Catch::Approx(-0.3 - 0.5 * 1.5).margin(1e-9));
    CHECK(rows.at({static_cast<int>(ResidualFam::kCone), 0, 0, 1}) ==
          Catch::Approx(0.3 - 0.5 * 1.5).margin(1e-9));
    CHECK(rows.at({static_cast<int>(ResidualFam::kMinForce), 0, 0, 0}) ==
          Catch::Approx(0.5 - 1.5).margin(1e-9));
  }

  SECTION("torque balance at the breakaway example") {
    const auto p = build_problem(ContactMode{{1, 1}}, s0, goal, 1, w);
    const auto cs = env.contacts(s0);
    std::vector<State> states = {s0};
    states[0].theta = s0.theta + 0.16;  // (2 R_v f_t - tau_s) / kappa at f_t = 0.5
    std::vector<Action> actions = {Action::zeros(w)};
    actions[0].f[0] = contact_force(cs[0].normal, 1.5, 0.5);
    actions[0].f[1] = contact_force(cs[1].normal, 1.5, 0.5);
    const auto x = pack_decision(p, states, actions);
    const auto rows = row_map(eval_constraints(p, x).eq);
    CHECK(std::abs(rows.at({static_cast<int>(ResidualFam::kBalance), -1, 0, 0})) <= 1e-12);
  }

  SECTION("clearance for a resetting finger") {
    const auto p = build_problem(ContactMode{{0, 1}}, s0, goal, 2, w);
    std::vector<State> states(2, s0);
    std::vector<Action> actions(2, Action::zeros(w));
    const Vec2 lifted = w.valve_center + Vec2{-(w.R_v + 0.003), 0.0};
    const auto q = ik_finger(w, 0, lifted, s0.q[1]);
    REQUIRE(q.has_value());
    states[0].q[0] = (*q)[0];
    states[0].q[1] = (*q)[1];
    const auto x = pack_decision(p, states, actions);
    const auto rows = row_map(eval_constraints(p, x).ineq);
    CHECK(rows.at({static_cast<int>(ResidualFam::kClearance), 0, 1, 0}) ==
          Catch::Approx(w.delta - 0.003).margin(1e-9));
  }

  SECTION("compliance and reset consistency") {
    const auto p = build_problem(ContactMode{{0, 1}}, s0, goal, 1, w);
    std::vector<State> states = {s0};
    states[0].q[0] += 0.07;  // finger 0 moves; commanded step is 0.02
    std::vector<Action> actions = {Action::zeros(w)};
    actions[0].dq[0] = 0.02;
    actions[0].f[1] = contact_force(env.contacts(s0)[1].normal, 1.2, 0.1);
    const Jac2 J = jacobian_finger(w, 1, s0.q[2], s0.q[3]);
    actions[0].dq[2] =
        (J.m[0][0] * actions[0].f[1][0] + J.m[1][0] * actions[0].f[1][1]) / w.k_c;
    actions[0].dq[3] =
        (J.m[0][1] * actions[0].f[1][0] + J.m[1][1] * actions[0].f[1][1]) / w.k_c;
    const auto x = pack_decision(p, states, actions);
    const auto rows = row_map(eval_constraints(p, x).eq);
    CHECK(rows.at({static_cast<int>(ResidualFam::kResetConsistency), 0, 0, 0}) ==
          Catch::Approx(0.07 - 0.02).margin(1e-12));
    CHECK(rows.at({static_cast<int>(ResidualFam::kResetConsistency), 0, 0, 1}) ==
          Catch::Approx(0.0).margin(1e-12));
    CHECK(std::abs(rows.at({static_cast<int>(ResidualFam::kCompliance), 1, 0, 0})) <= 1e-12);
    CHECK(std::abs(rows.at({static_cast<int>(ResidualFam::kCompliance), 1, 0, 1})) <= 1e-12);
  }
}

TEST_CASE("equality rows vanish on a noiseless simulator rollout") {
  const Env env = make_env();
  const State s0 = grip(env);
  State goal = s0;
  goal.theta = 0.5;
  const auto p = build_problem(ContactMode{{1, 1}}, s0, goal, 3, env.w);
  const auto x = rollout_pack(env, p, 1.5, 0.4);
  const auto ce = eval_constraints(p, x);
  // The simulator and the constraint stack share the contact and stiction
  // laws, so realized all-contact rollouts sit on the equality manifold to
  // numerical precision — far inside the solver's 1e-3 acceptance band.
  CHECK(ce.h_inf() <= 1e-9);
  CHECK(ce.g_plus_max() <= 1e-6);
}

TEST_CASE("augmented-lagrangian gradient matches finite differences") {
  const Env env = make_env();
  const State s0 = grip(env);
  State goal = s0;
  goal.theta = 0.3;
  const auto p = build_problem(ContactMode{{1, 0}}, s0, goal, 2, env.w);

  detail::ALFunction L(p, 10.0);
  Rng rng(9);
  auto x = rolling_init(p);
  for (auto& v : x) v += 0.05 * rng.uniform(-1.0, 1.0);
  L.update_multipliers(eval_constraints(p, x));  // nonzero lam and mu

  std::vector<double> g;
  const double fx = L.gradient(x, g);
  CHECK(fx == Catch::Approx(L.value(x)).margin(1e-10));
  const double h = 1e-6;
  double num = 0.0, den = 0.0;
  for (size_t j = 0; j < x.size(); ++j) {
    auto xp = x, xm = x;
    xp[j] += h;
    xm[j] -= h;
    const double fd = (L.value(xp) - L.value(xm)) / (2.0 * h);
    num += (g[j] - fd) * (g[j] - fd);
    den += fd * fd;
  }
  const double rel = std::sqrt(num) / std::max(1.0, std::sqrt(den));
  CHECK(rel <= 1e-3);  // acceptance tolerance
  CHECK(rel <= 1e-6);  // expected mechanism precision
}

TEST_CASE("the inner minimizer solves a convex quadratic") {
  // f(x) = 0.5 x^T A x - b^T x with A = M^T M + I.
  const size_t n = 6;
  Rng rng(10);
  std::vector<std::vector<double>> M(n, std::vector<double>(n));
  for (auto& row : M)
    for (auto& v : row) v = rng.uniform(-1.0, 1.0);
  std::vector<std::vector<double>> A(n, std::vector<double>(n, 0.0));
  for (size_t i = 0; i < n; ++i)
    for (size_t j = 0; j < n; ++j) {
      for (size_t k = 0; k < n; ++k) A[i][j] += M[k][i] * M[k][j];
      if (i == j) A[i][j] += 1.0;
    }
  std::vector<double> b(n);
  for (auto& v : b) v = rng.uniform(-1.0, 1.0);

  struct Quad {
    const std::vector<std::vector<double>>* A;
    const std::vector<double>* b;
    double value(const std::vector<double>& x) const {
      double f = 0.0;
      for (size_t i = 0; i < x.size(); ++i) {
        double Ax = 0.0;
        for (size_t j = 0; j < x.size(); ++j) Ax += (*A)[i][j] * x[j];
        f += 0.5 * x[i] * Ax - (*b)[i] * x[i];
      }
      return f;
    }
    double gradient(const std::vector<double>& x, std::vector<double>& g) const {
      g.assign(x.size(), 0.0);
      for (size_t i = 0; i < x.size(); ++i) {
        for (size_t j = 0; j < x.size(); ++j) g[i] += (*A)[i][j] * x[j];
        g[i] -= (*b)[i];
      }
      return value(x);
    }
  } quad{&A, &b};

  // Reference solution by Gaussian elimination.
  std::vector<std::vector<double>> Aug = A;
  std::vector<double> rhs = b;
  for (size_t c = 0; c < n; ++c) {
    size_t piv = c;
    for (size_t r = c + 1; r < n; ++r)
      if (std::abs(Aug[r][c]) > std::abs(Aug[piv][c])) piv = r;
    std::swap(Aug[c], Aug[piv]);
    std::swap(rhs[c], rhs[piv]);
    for (size_t r = c + 1; r < n; ++r) {
      const double m = Aug[r][c] / Aug[c][c];
      for (size_t k = c; k < n; ++k) Aug[r][k] -= m * Aug[c][k];
      rhs[r] -= m * rhs[c];
    }
  }
  std::vector<double> xstar(n);
  for (size_t r = n; r-- > 0;) {
    double v = rhs[r];
    for (size_t k = r + 1; k < n; ++k) v -= Aug[r][k] * xstar[k];
    xstar[r] = v / Aug[r][r];
  }

  std::vector<double> x(n, 0.0);
  SolverConfig cfg;
  cfg.inner_iters = 200;
  detail::lbfgs_minimize(quad, x, cfg);
  for (size_t i = 0; i < n; ++i) CHECK(x[i] == Catch::Approx(xstar[i]).margin(1e-6));
}

TEST_CASE("the solver converges on an all-contact instance") {
  const Env env = make_env();
  const State s0 = grip(env);
  State goal = s0;
  goal.theta = s0.theta + 0.25;
  const auto p = build_problem(ContactMode{{1, 1}}, s0, goal, 3, env.w);

  const auto x0 = rolling_init(p);
  const double cost0 = eval_costs(p, x0).total();
  const Solution sol = solve(p, x0, 20);

  CHECK(sol.converged);
  CHECK(sol.h_inf <= 1e-3);
  CHECK(sol.g_plus <= 1e-6);
  CHECK(sol.costs.total() <= cost0 + 1e-9);
  const double thH = sol.states.back().theta;
  CHECK(std::abs(thH - goal.theta) < 0.25);
  REQUIRE_FALSE(sol.family_residuals.empty());
  for (size_t k = 1; k < sol.best_h_trace.size(); ++k)
    CHECK(sol.best_h_trace[k] <= sol.best_h_trace[k - 1] + 1e-15);
}

TEST_CASE("a feasible optimum is a solver fixed point") {
  const Env env = make_env();
  const WorldConfig& w = env.w;
  const State s0 = grip(env);
  const State goal = s0;  // already at the goal angle
  const auto p = build_problem(ContactMode{{1, 1}}, s0, goal, 3, w);

  // Hold the grip with the minimum press and zero tangential force: all
  // equality rows are exactly zero, the force floor sits exactly on its
  // boundary, and every cost term is at its unconstrained minimum.
  std::vector<State> states(static_cast<size_t>(p.H), s0);
  std::vector<Action> actions;
  const auto cs = env.contacts(s0);
  Action u = Action::zeros(w);
  for (int i = 0; i < w.n_f; ++i) {
    const auto ii = static_cast<size_t>(i);
    u.f[ii] = contact_force(cs[ii].normal, w.f_min, 0.0);
    const Jac2 J = jacobian_finger(w, i, s0.q[2 * ii], s0.q[2 * ii + 1]);
    u.dq[2 * ii] = (J.m[0][0] * u.f[ii][0] + J.m[1][0] * u.f[ii][1]) / w.k_c;
    u.dq[2 * ii + 1] = (J.m[0][1] * u.f[ii][0] + J.m[1][1] * u.f[ii][1]) / w.k_c;
  }
  actions.assign(static_cast<size_t>(p.H), u);
  const auto xstar = pack_decision(p, states, actions);

  const Solution sol = solve(p, xstar, 10);
  CHECK(sol.converged);
  CHECK(sol.outer_used <= 2);
  for (size_t j = 0; j < xstar.size(); ++j)
    CHECK(sol.x[j] == Catch::Approx(xstar[j]).margin(1e-9));
}

TEST_CASE("the solver handles a finger reset") {
  const Env env = make_env();
  const State s0 = grip(env);
  State goal = s0;  // finger 0 relands on its original patch
  goal.theta = s0.theta + 0.15;
  const auto p = build_problem(ContactMode{{0, 1}}, s0, goal, 3, env.w);

  const Solution sol = solve(p, rolling_init(p), 40);
  CHECK(sol.converged);
  CHECK(sol.h_inf <= 1e-3);
  CHECK(sol.g_plus <= 1e-6);

  // The resetting fingertip clears the rim mid-trajectory and relands.
  const auto ce = eval_constraints(p, sol.x);
  for (const auto& r : ce.ineq)
    if (r.fam == ResidualFam::kClearance) CHECK(r.value <= 1e-6);
  for (const auto& r : ce.eq)
    if (r.fam == ResidualFam::kTerminalContact) CHECK(std::abs(r.value) <= 1e-3);
}

TEST_CASE("solver input validation") {
  const Env env = make_env();
  const State s0 = grip(env);
  State goal = s0;
  goal.theta = 0.2;
  const auto p = build_problem(ContactMode{{1, 1}}, s0, goal, 2, env.w);
  CHECK_THROWS_AS(solve(p, std::vector<double>(3, 0.0), 5), DimensionError);
  CHECK_THROWS_AS(solve(p, hold_init(p), 0), ParameterError);
  auto bad = hold_init(p);
  bad[0] = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(solve(p, bad, 5), InitializationError);
}

TEST_CASE("the brute-force oracle bounds the solver on tiny instances") {
  const Env env = make_env();
  const State s0 = grip(env);
  State goal = s0;
  goal.theta = s0.theta + 0.2;
  const auto p = build_problem(ContactMode{{1, 1}}, s0, goal, 2, env.w);

  const OracleResult o5 = brute_force_oracle(p, 5);
  REQUIRE(o5.feasible);
  {
    const auto ce = eval_constraints(p, o5.x);
    CHECK(ce.h_inf() <= 1e-2);
    CHECK(ce.g_plus_max() <= 1e-5);
  }

  SECTION("solver result is within the acceptance factor of the oracle") {
    const Solution sol = solve(p, rolling_init(p), 20);
    REQUIRE(sol.converged);
    CHECK(sol.costs.total() <= 1.1 * o5.cost + 1e-9);
  }

  SECTION("nested grids only improve") {
    const OracleResult o3 = brute_force_oracle(p, 3);
    REQUIRE(o3.feasible);
    CHECK(o5.cost <= o3.cost + 1e-12);
  }

  SECTION("a single-cell grid cannot grip") {
    const OracleResult o1 = brute_force_oracle(p, 1);
    CHECK_FALSE(o1.feasible);  // zero force fails the minimum-force floor
  }

  SECTION("preconditions are enforced") {
    CHECK_THROWS_AS(brute_force_oracle(p, 6), ParameterError);
    CHECK_THROWS_AS(brute_force_oracle(p, 0), ParameterError);
    const auto p4 = build_problem(ContactMode{{1, 1}}, s0, goal, 4, env.w);
    CHECK_THROWS_AS(brute_force_oracle(p4, 3), ParameterError);
    const auto p3 = build_problem(ContactMode{{1, 1}}, s0, goal, 3, env.w);
    CHECK_THROWS_AS(brute_force_oracle(p3, 5), ParameterError);  // 5^12 rollouts
  }
}

TEST_CASE("the oracle solves a reset instance") {
  const Env env = make_env();
  const State s0 = grip(env);
  State goal = s0;  // finger 0 must lift off and return to its patch
  goal.theta = s0.theta + 0.15;
  const auto p = build_problem(ContactMode{{0, 1}}, s0, goal, 2, env.w);
  const OracleResult o = brute_force_oracle(p, 5);
  REQUIRE(o.feasible);
  const auto ce = eval_constraints(p, o.x);
  CHECK(ce.h_inf() <= 1e-2);
  CHECK(ce.g_plus_max() <= 1e-5);
  // The winning candidate really lifts the resetting fingertip.
  const Vec2 mid = fk_finger(env.w, 0, o.states[0].q[0], o.states[0].q[1]);
  CHECK(norm(mid - env.w.valve_center) - env.w.R_v >= env.w.delta - 1e-5);
}

TEST_CASE("a smoothness-only objective settles on a constant action sequence") {
  const Env env = make_env();
  const State s0 = grip(env);
  State goal = s0;
  goal.theta = s0.theta - 0.3;
  auto p = build_problem(ContactMode{{1, 1}}, s0, goal, 4, env.w);
  p.weights = {0.0, 0.0, 0.1};  // drop goal and reach terms

  Rng rng(41);
  std::vector<double> x = random_x(p, rng, 0.5);
  SolverConfig cfg;
  cfg.inner_iters = 400;
  const double step = detail::lbfgs_minimize(SmoothOnly{&p}, x, cfg);
  CHECK(step <= 1e-6);

  std::vector<State> states;
  std::vector<Action> actions;
  unpack_decision(p, x, states, actions);
  const auto u0 = actions.front().to_flat();
  for (const auto& a : actions) {
    const auto ut = a.to_flat();
    REQUIRE(ut.size() == u0.size());
    for (size_t j = 0; j < ut.size(); ++j)
      CHECK(std::abs(static_cast<double>(ut[j]) - static_cast<double>(u0[j])) <=
            1e-4);
  }
}
