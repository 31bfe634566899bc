#pragma once

#include <cmath>
#include <cstring>
#include <utility>
#include <vector>

#include "recdiff/core/array.hpp"
#include "recdiff/core/errors.hpp"

namespace recdiff {

// State/action sequence over horizon H. Flat layout (fixed): states s_0..s_H
// back to back, then actions u_0..u_{H-1}; total (H+1)*d_s + H*d_u.
struct Trajectory {
  int H = 0, d_s = 0, d_u = 0;
  std::vector<float> flat;

  static Trajectory zeros(int H, int d_s, int d_u) {
    Trajectory t;
    t.H = H;
    t.d_s = d_s;
    t.d_u = d_u;
    t.flat.assign(static_cast<size_t>(t.flat_len()), 0.0f);
    return t;
  }

  int flat_len() const { return (H + 1) * d_s + H * d_u; }

  float* state(int t) { return flat.data() + static_cast<size_t>(t) * d_s; }
  const float* state(int t) const { return flat.data() + static_cast<size_t>(t) * d_s; }
  float* action(int t) {
    return flat.data() + static_cast<size_t>(H + 1) * d_s + static_cast<size_t>(t) * d_u;
  }
  const float* action(int t) const {
    return flat.data() + static_cast<size_t>(H + 1) * d_s + static_cast<size_t>(t) * d_u;
  }

  bool dims_match(const Trajectory& o) const {
    return H == o.H && d_s == o.d_s && d_u == o.d_u;
  }
};

// Channel index of a flat coordinate: state dims map to channels [0, d_s),
// action dims to [d_s, d_s + d_u). The temporal grid is [d_s + d_u x H + 1]
// with column t = [s_t ; u_t] and the u column at t = H structurally zero.
struct TrajLayout {
  int H, d_s, d_u;

  int flat_len() const { return (H + 1) * d_s + H * d_u; }
  int channels() const { return d_s + d_u; }
  int length() const { return H + 1; }

  int channel_of(int flat_idx) const {
    const int ns = (H + 1) * d_s;
    if (flat_idx < ns) return flat_idx % d_s;
    return d_s + (flat_idx - ns) % d_u;
  }

  // flat index of state coordinate j at time t
  int state_index(int t, int j) const { return t * d_s + j; }
  // flat index of action coordinate j at time t
  int action_index(int t, int j) const { return (H + 1) * d_s + t * d_u + j; }

  Array to_grid(const std::vector<float>& flat) const {
    Array g = Array::zeros({channels(), length()});
    for (int t = 0; t <= H; ++t) {
      for (int j = 0; j < d_s; ++j) g(j, t) = flat[static_cast<size_t>(state_index(t, j))];
      if (t < H)
        for (int j = 0; j < d_u; ++j)
          g(d_s + j, t) = flat[static_cast<size_t>(action_index(t, j))];
    }
    return g;
  }

  void from_grid(const Array& g, std::vector<float>& flat) const {
    flat.assign(static_cast<size_t>(flat_len()), 0.0f);
    for (int t = 0; t <= H; ++t) {
      for (int j = 0; j < d_s; ++j) flat[static_cast<size_t>(state_index(t, j))] = g(j, t);
      if (t < H)
        for (int j = 0; j < d_u; ++j)
          flat[static_cast<size_t>(action_index(t, j))] = g(d_s + j, t);
    }
  }

  // 1 on cells carrying data, 0 on the structurally-zero u column at t = H.
  Array valid_mask() const {
    Array m = Array::full({channels(), length()}, 1.0f);
    for (int j = 0; j < d_u; ++j) m(d_s + j, H) = 0.0f;
    return m;
  }
};

// Per-channel affine normalization fitted on a training corpus. Channels with
// zero variance get std 1 so normalize/denormalize stays a bijection.
struct Normalizer {
  std::vector<float> mean, stdev;

  static Normalizer fit(const std::vector<Trajectory>& corpus) {
    if (corpus.empty()) throw ParameterError("normalizer fit needs a nonempty corpus");
    const TrajLayout lay{corpus[0].H, corpus[0].d_s, corpus[0].d_u};
    const int C = lay.channels();
    std::vector<double> s1(C, 0.0), s2(C, 0.0);
    std::vector<long long> n(C, 0);
    for (const auto& tr : corpus)
      for (int i = 0; i < lay.flat_len(); ++i) {
        const int c = lay.channel_of(i);
        const double v = tr.flat[static_cast<size_t>(i)];
        s1[c] += v;
        s2[c] += v * v;
        ++n[c];
      }
    Normalizer nz;
    nz.mean.resize(C);
    nz.stdev.resize(C);
    for (int c = 0; c < C; ++c) {
      const double m = s1[c] / static_cast<double>(n[c]);
      const double var = std::max(0.0, s2[c] / static_cast<double>(n[c]) - m * m);
      nz.mean[c] = static_cast<float>(m);
      nz.stdev[c] = var > 1e-12 ? static_cast<float>(std::sqrt(var)) : 1.0f;
    }
    return nz;
  }

  static Normalizer identity(int channels) {
    Normalizer nz;
    nz.mean.assign(static_cast<size_t>(channels), 0.0f);
    nz.stdev.assign(static_cast<size_t>(channels), 1.0f);
    return nz;
  }

  int channels() const { return static_cast<int>(mean.size()); }

  void normalize_flat(const TrajLayout& lay, std::vector<float>& flat) const {
    for (int i = 0; i < lay.flat_len(); ++i) {
      const int c = lay.channel_of(i);
      flat[static_cast<size_t>(i)] = (flat[static_cast<size_t>(i)] - mean[c]) / stdev[c];
    }
  }
  void denormalize_flat(const TrajLayout& lay, std::vector<float>& flat) const {
    for (int i = 0; i < lay.flat_len(); ++i) {
      const int c = lay.channel_of(i);
      flat[static_cast<size_t>(i)] = flat[static_cast<size_t>(i)] * stdev[c] + mean[c];
    }
  }

  Trajectory normalize(const Trajectory& t) const {
    Trajectory out = t;
    normalize_flat(TrajLayout{t.H, t.d_s, t.d_u}, out.flat);
    return out;
  }
  Trajectory denormalize(const Trajectory& t) const {
    Trajectory out = t;
    denormalize_flat(TrajLayout{t.H, t.d_s, t.d_u}, out.flat);
    return out;
  }
};

// In-painting pins: (flat index, value) pairs overwritten after every reverse
// step, carried in both normalized and raw units. Raw values are re-applied
// after denormalization so conditioning survives the affine round trip
// bit-exactly.
struct Conditioning {
  std::vector<std::pair<int, float>> pins_normalized;
  std::vector<std::pair<int, float>> pins_raw;

  bool empty() const { return pins_normalized.empty(); }

  // Pin the full initial state s_0 (raw units).
  static Conditioning initial_state(const TrajLayout& lay, const Normalizer& nz,
                                    const std::vector<float>& s0_raw) {
    if (static_cast<int>(s0_raw.size()) != lay.d_s)
      throw DimensionError("conditioning state dim");
    Conditioning c;
    for (int j = 0; j < lay.d_s; ++j) {
      const int idx = lay.state_index(0, j);
      const int ch = lay.channel_of(idx);
      c.pins_raw.emplace_back(idx, s0_raw[static_cast<size_t>(j)]);
      c.pins_normalized.emplace_back(
          idx, (s0_raw[static_cast<size_t>(j)] - nz.mean[ch]) / nz.stdev[ch]);
    }
    return c;
  }

  void check_bounds(int flat_len) const {
    for (const auto& [i, v] : pins_normalized)
      if (i < 0 || i >= flat_len) throw DimensionError("conditioning index out of bounds");
  }

  void apply_normalized(std::vector<float>& x) const {
    for (const auto& [i, v] : pins_normalized) x[static_cast<size_t>(i)] = v;
  }
  void apply_raw(std::vector<float>& x) const {
    for (const auto& [i, v] : pins_raw) x[static_cast<size_t>(i)] = v;
  }
};

}  // namespace recdiff
