#pragma once

#include <array>
#include <cmath>
#include <vector>

#include "recdiff/core/errors.hpp"

namespace recdiff {

using Vec2 = std::array<double, 2>;

inline Vec2 operator+(const Vec2& a, const Vec2& b) { return {a[0] + b[0], a[1] + b[1]}; }
inline Vec2 operator-(const Vec2& a, const Vec2& b) { return {a[0] - b[0], a[1] - b[1]}; }
inline Vec2 operator*(double s, const Vec2& a) { return {s * a[0], s * a[1]}; }
inline double dot(const Vec2& a, const Vec2& b) { return a[0] * b[0] + a[1] * b[1]; }
inline double norm(const Vec2& a) { return std::sqrt(dot(a, a)); }
// +90 degree rotation: the counterclockwise tangent direction for a radial normal.
inline Vec2 perp(const Vec2& a) { return {-a[1], a[0]}; }
inline Vec2 rotate(const Vec2& a, double ang) {
  const double c = std::cos(ang), s = std::sin(ang);
  return {c * a[0] - s * a[1], s * a[0] + c * a[1]};
}

// Planar valve world: n_f two-link fingers around a disc of radius R_v whose
// only degree of freedom is its rotation angle. Lengths in meters, angles in
// radians, forces in newtons, torques in newton-meters.
struct WorldConfig {
  int n_f = 2;
  std::vector<Vec2> base = {{-0.18, 0.0}, {0.18, 0.0}};
  std::vector<double> l1 = {0.10, 0.10};
  std::vector<double> l2 = {0.10, 0.10};
  std::vector<double> q_min, q_max;  // length 2*n_f, defaulted in ctor
  double dq_max = 0.15;              // per-joint action bound (rad)
  double f_max = 3.0;                // per-component force bound (N)

  Vec2 valve_center = {0.0, 0.0};
  double R_v = 0.10;     // valve radius (m)
  double mu = 0.5;       // Coulomb friction coefficient
  double tau_s = 0.02;   // static breakaway torque (N m)
  double kappa = 0.5;    // viscous constant (N m per rad per step)
  double f_min = 0.5;    // minimum normal force for contact fingers (N)
  double delta = 0.01;   // reset clearance threshold (m)
  double r_patch = 0.02; // contact-patch radius for terminal placement (m)
  double k_c = 10.0;     // commanded-displacement compliance (N m / rad)

  double sigma_act = 0.03;  // action noise on commanded joint deltas (rad)
  double p_kick = 1.0 / 3.0;
  double kick_max = 0.04;   // kick torque magnitude upper bound (N m)

  double contact_tol = 1e-3;   // |signed distance| for the in-contact flag (m)
  double grip_capture = 0.01;  // capture radius for force-loaded approaches (m)
  double w_stic = 2e-3;        // stiction smoothing width (rad)

  WorldConfig() {
    q_min.assign(4, -3.0);
    q_max.assign(4, 3.0);
  }

  int d_s() const { return 2 * n_f + 1; }
  int d_u() const { return 4 * n_f; }

  void validate() const {
    if (n_f < 1) throw ParameterError("world needs at least one finger");
    if (static_cast<int>(base.size()) != n_f || static_cast<int>(l1.size()) != n_f ||
        static_cast<int>(l2.size()) != n_f)
      throw ParameterError("per-finger arrays must have length n_f");
    if (static_cast<int>(q_min.size()) != 2 * n_f || static_cast<int>(q_max.size()) != 2 * n_f)
      throw ParameterError("joint limit arrays must have length 2*n_f");
    for (int j = 0; j < 2 * n_f; ++j)
      if (!(q_min[j] < q_max[j])) throw ParameterError("q_min must be below q_max");
    if (!(R_v > 0.0)) throw ParameterError("valve radius must be positive");
    if (!(mu > 0.0)) throw ParameterError("friction coefficient must be positive");
    if (!(delta > 0.0)) throw ParameterError("reset clearance must be positive");
    if (!(r_patch > 0.0)) throw ParameterError("contact-patch radius must be positive");
    if (!(tau_s >= 0.0 && kappa > 0.0)) throw ParameterError("valve dynamics parameters");
    if (!(dq_max > 0.0 && f_max > 0.0)) throw ParameterError("action bounds must be positive");
    if (!(p_kick >= 0.0 && p_kick <= 1.0)) throw ParameterError("p_kick must be in [0,1]");
    if (!(contact_tol > 0.0 && grip_capture >= 0.0 && w_stic > 0.0))
      throw ParameterError("contact model parameters");
  }
};

// Robot joints plus the (unwrapped) valve angle.
struct State {
  std::vector<double> q;  // 2*n_f
  double theta = 0.0;

  static State zeros(const WorldConfig& w) {
    State s;
    s.q.assign(static_cast<size_t>(2 * w.n_f), 0.0);
    return s;
  }

  // Flat layout: [q_0 .. q_{2n_f-1}, theta].
  std::vector<float> to_flat() const {
    std::vector<float> v(q.size() + 1);
    for (size_t i = 0; i < q.size(); ++i) v[i] = static_cast<float>(q[i]);
    v.back() = static_cast<float>(theta);
    return v;
  }
  static State from_flat(const WorldConfig& w, const float* v) {
    State s = zeros(w);
    for (size_t i = 0; i < s.q.size(); ++i) s.q[i] = v[i];
    s.theta = v[s.q.size()];
    return s;
  }
};

// Per-finger joint deltas and planar force.
struct Action {
  std::vector<double> dq;          // 2*n_f
  std::vector<Vec2> f;             // n_f

  static Action zeros(const WorldConfig& w) {
    Action a;
    a.dq.assign(static_cast<size_t>(2 * w.n_f), 0.0);
    a.f.assign(static_cast<size_t>(w.n_f), Vec2{0.0, 0.0});
    return a;
  }

  // Flat layout per finger i: [dq_{2i}, dq_{2i+1}, f_i_x, f_i_y].
  std::vector<float> to_flat() const {
    std::vector<float> v;
    v.reserve(4 * f.size());
    for (size_t i = 0; i < f.size(); ++i) {
      v.push_back(static_cast<float>(dq[2 * i]));
      v.push_back(static_cast<float>(dq[2 * i + 1]));
      v.push_back(static_cast<float>(f[i][0]));
      v.push_back(static_cast<float>(f[i][1]));
    }
    return v;
  }
  static Action from_flat(const WorldConfig& w, const float* v) {
    Action a = zeros(w);
    for (int i = 0; i < w.n_f; ++i) {
      a.dq[static_cast<size_t>(2 * i)] = v[4 * i];
      a.dq[static_cast<size_t>(2 * i + 1)] = v[4 * i + 1];
      a.f[static_cast<size_t>(i)] = {v[4 * i + 2], v[4 * i + 3]};
    }
    return a;
  }
};

struct ContactInfo {
  Vec2 tip{};
  double sd = 0.0;   // signed distance of the fingertip to the rim circle
  Vec2 normal{};     // unit radial, pointing away from the valve center
  Vec2 cpoint{};     // closest point on the rim
  bool in_contact = false;
};

struct FingerEvents {
  bool stick = false;      // dragged with the rim this step
  bool slip = false;       // in contact but force outside the friction cone
  bool projected = false;  // penetration corrected back to the rim
  bool captured = false;   // force-loaded approach snapped onto the rim
  double dq_realized[2] = {0.0, 0.0};
};

struct StepEvents {
  double kick = 0.0;     // perturbation torque injected this step (N m)
  double tau_net = 0.0;  // total torque on the valve including the kick
  double dtheta = 0.0;   // realized valve rotation
  std::vector<FingerEvents> finger;
};

}  // namespace recdiff
