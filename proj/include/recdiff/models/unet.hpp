#pragma once

#include <map>
#include <string>
#include <vector>

#include "recdiff/core/errors.hpp"
#include "recdiff/core/params.hpp"
#include "recdiff/core/rng.hpp"
#include "recdiff/core/tape.hpp"
#include "recdiff/models/embedding.hpp"

namespace recdiff {

struct TemporalUNetSpec {
  int in_channels = 13;
  int base_width = 32;
  std::vector<int> mults = {1, 2};
  int kernel = 5;
  int emb_dim = 32;

  int levels() const { return static_cast<int>(mults.size()); }
  int width(int l) const { return base_width * mults[static_cast<size_t>(l)]; }
  int bottleneck_dim() const { return width(levels() - 1); }

  // Sequence length after zero-padding on the right so every pooling stage
  // sees an even length.
  int padded_len(int L) const {
    const int div = 1 << (levels() - 1);
    return ((L + div - 1) / div) * div;
  }

  void validate() const {
    if (in_channels < 1 || base_width < 1 || emb_dim < 2 || emb_dim % 2 != 0)
      throw ParameterError("bad temporal U-Net spec");
    if (mults.empty()) throw ParameterError("U-Net needs at least one level");
    if (kernel < 1 || kernel % 2 == 0) throw ParameterError("kernel must be odd");
  }
};

// Temporal U-Net over [channels x length] grids with a shared sinusoidal
// diffusion-step embedding. Each block is conv -> +bias -> +time projection
// (broadcast over columns) -> SiLU; one block per encoder/decoder level keeps
// the default configuration under the 1e5 parameter budget. Skip connections
// concatenate encoder features channel-wise before each decoder block, and
// the bottleneck feature is the column mean of the deepest level (exposed for
// the contact-mode head).
template <class T>
class TemporalUNet {
 public:
  TemporalUNetSpec spec;

  using V = typename Tape<T>::V;

  void build(ParamStore<T>& ps, Rng& rng, const std::string& prefix = "unet.") {
    spec.validate();
    auto addp = [&](const std::string& name, std::vector<int> shape, int fan) {
      pos_[name] = ps.count();
      init_uniform(ps.add(prefix + name, std::move(shape)), fan, rng);
    };
    addp("temb.w", {spec.emb_dim, spec.emb_dim}, spec.emb_dim);
    addp("temb.b", {spec.emb_dim}, spec.emb_dim);
    int cin = spec.in_channels;
    for (int l = 0; l < spec.levels(); ++l) {
      add_block(addp, "enc" + std::to_string(l), cin, spec.width(l));
      cin = spec.width(l);
    }
    for (int l = spec.levels() - 2; l >= 0; --l) {
      const int cat = spec.width(l + 1) + spec.width(l);
      add_block(addp, "dec" + std::to_string(l), cat, spec.width(l));
    }
    addp("out.w", {spec.in_channels, spec.width(0), 1}, spec.width(0));
    addp("out.b", {spec.in_channels}, spec.width(0));
  }

  struct Out {
    V eps;    // [in_channels x padded length]
    V bneck;  // [bottleneck_dim]
  };

  // x: [in_channels x Lp] with Lp = padded_len(L); k: diffusion step.
  Out forward(Tape<T>& t, const std::vector<V>& vs, V x, int k) const {
    const auto& xv = t.val(x);
    if (xv.rank() != 2 || xv.dim(0) != spec.in_channels ||
        xv.dim(1) % (1 << (spec.levels() - 1)) != 0)
      throw DimensionError("U-Net input grid shape");
    auto P = [&](const std::string& n) { return vs.at(pos_.at(n)); };
    auto emb = t.constant(sinusoidal_embed<T>(k, spec.emb_dim));
    auto temb = t.silu(t.add(t.reshape(t.matmul(t.reshape(emb, {1, spec.emb_dim}), P("temb.w")),
                                       {spec.emb_dim}),
                             P("temb.b")));

    std::vector<V> skips;
    V h = x;
    for (int l = 0; l < spec.levels(); ++l) {
      if (l > 0) h = t.avgpool2(h);
      h = block(t, P, "enc" + std::to_string(l), h, temb);
      skips.push_back(h);
    }
    Out out;
    out.bneck = t.mean_cols(h);
    for (int l = spec.levels() - 2; l >= 0; --l) {
      h = t.upsample2(h);
      h = t.concat_rows(h, skips[static_cast<size_t>(l)]);
      h = block(t, P, "dec" + std::to_string(l), h, temb);
    }
    out.eps = t.add_colvec(t.conv1d(h, P("out.w")), P("out.b"));
    return out;
  }

 private:
  std::map<std::string, size_t> pos_;

  template <class AddFn>
  void add_block(AddFn&& addp, const std::string& b, int cin, int cout) {
    addp(b + ".c.w", {cout, cin, spec.kernel}, cin * spec.kernel);
    addp(b + ".c.b", {cout}, cin * spec.kernel);
    addp(b + ".t.w", {spec.emb_dim, cout}, spec.emb_dim);
    addp(b + ".t.b", {cout}, spec.emb_dim);
  }

  template <class PFn>
  V block(Tape<T>& t, PFn&& P, const std::string& b, V h, V temb) const {
    auto tp = t.add(t.reshape(t.matmul(t.reshape(temb, {1, spec.emb_dim}), P(b + ".t.w")),
                              {t.val(P(b + ".t.b")).dim(0)}),
                    P(b + ".t.b"));
    auto y = t.add_colvec(t.conv1d(h, P(b + ".c.w")), P(b + ".c.b"));
    return t.silu(t.add_colvec(y, tp));
  }
};

}  // namespace recdiff
