#pragma once

#include <map>
#include <string>
#include <vector>

#include "recdiff/core/errors.hpp"
#include "recdiff/core/params.hpp"
#include "recdiff/core/rng.hpp"
#include "recdiff/core/tape.hpp"
#include "recdiff/diffusion/process.hpp"
#include "recdiff/diffusion/schedule.hpp"
#include "recdiff/diffusion/trajectory.hpp"
#include "recdiff/models/embedding.hpp"
#include "recdiff/models/unet.hpp"

namespace recdiff {

struct CFGConfig {
  double w = 1.0;
  double p_drop = 0.25;

  void validate() const {
    if (p_drop < 0.0 || p_drop > 1.0) throw ParameterError("p_drop must be in [0,1]");
  }
};

struct ContactHeadSpec {
  int hidden = 64;
};

// Denoiser over flat vectors [trajectory | contact modes]. With n_f = 0 this
// is the task model (U-Net only); with n_f > 0 the joint recovery model whose
// mode channel is predicted by an MLP head reading the U-Net bottleneck, with
// classifier-free guidance between the bottleneck and a learned null
// embedding. Invalid grid cells (the u slot at t = H, plus padding columns)
// are structural zeros at every forward pass and excluded from the loss.
template <class T>
class DiffusionModelT {
 public:
  TrajLayout lay{};
  int n_f = 0;
  NoiseSchedule sched;
  Normalizer nz;
  TemporalUNetSpec uspec;
  ContactHeadSpec hspec;
  CFGConfig cfg;
  ParamStore<T> params;
  Adam<T> opt;

  using V = typename Tape<T>::V;

  static DiffusionModelT make_task(const TrajLayout& lay, const NoiseSchedule& sched,
                                   const Normalizer& nz, const TemporalUNetSpec& uspec,
                                   Rng& rng, double lr = 1e-3) {
    DiffusionModelT m;
    m.lay = lay;
    m.sched = sched;
    m.nz = nz;
    m.uspec = uspec;
    m.uspec.in_channels = lay.channels();
    m.opt = Adam<T>(lr);
    m.net_.spec = m.uspec;
    m.net_.build(m.params, rng);
    return m;
  }

  static DiffusionModelT make_joint(const TrajLayout& lay, int n_f, const NoiseSchedule& sched,
                                    const Normalizer& nz, const TemporalUNetSpec& uspec,
                                    const ContactHeadSpec& hspec, const CFGConfig& cfg, Rng& rng,
                                    double lr = 1e-3) {
    cfg.validate();
    DiffusionModelT m = make_task(lay, sched, nz, uspec, rng, lr);
    m.n_f = n_f;
    m.hspec = hspec;
    m.cfg = cfg;
    const int in = n_f + m.uspec.emb_dim + m.uspec.bottleneck_dim();
    auto addp = [&](const std::string& name, std::vector<int> shape, int fan) {
      m.hpos_[name] = m.params.count();
      init_uniform(m.params.add("head." + name, std::move(shape)), fan, rng);
    };
    addp("h1.w", {in, hspec.hidden}, in);
    addp("h1.b", {hspec.hidden}, in);
    addp("h2.w", {hspec.hidden, hspec.hidden}, hspec.hidden);
    addp("h2.b", {hspec.hidden}, hspec.hidden);
    addp("h3.w", {hspec.hidden, n_f}, hspec.hidden);
    addp("h3.b", {n_f}, hspec.hidden);
    addp("null_emb", {m.uspec.bottleneck_dim()}, m.uspec.bottleneck_dim());
    return m;
  }

  bool has_head() const { return n_f > 0; }
  int flat_len() const { return lay.flat_len() + n_f; }
  const NoiseSchedule& schedule() const { return sched; }
  const Normalizer& normalizer() const { return nz; }
  const TrajLayout& layout() const { return lay; }
  long long param_count() const { return params.total(); }

  // ---- inference ----

  // Trajectory-channel prediction plus bottleneck features. The conditioning
  // itself rides in the in-painted content of x_flat; no separate input.
  struct UNetEval {
    std::vector<float> eps_tau;
    std::vector<float> bneck;
  };
  UNetEval unet_forward(const std::vector<float>& x_flat, int k) const {
    sched.check_step(k);
    Tape<T> t;
    t.recording = false;
    auto vs = params.attach(t);
    auto out = run_unet(t, vs, x_flat, k);
    UNetEval ev;
    ev.eps_tau = grid_to_flat_valid(t.val(out.eps));
    ev.bneck.assign(t.val(out.bneck).data.begin(), t.val(out.bneck).data.end());
    return ev;
  }

  // Contact-mode prediction; when dropped, the learned null embedding stands
  // in for the bottleneck (the unconditional branch).
  std::vector<float> contact_head_forward(const std::vector<float>& c_k, int k,
                                          const std::vector<float>& bneck, bool dropped) const {
    if (!has_head()) throw ContractError("model has no contact head");
    if (static_cast<int>(c_k.size()) != n_f) throw DimensionError("contact mode dim");
    if (static_cast<int>(bneck.size()) != uspec.bottleneck_dim())
      throw DimensionError("bottleneck dim");
    Tape<T> t;
    t.recording = false;
    auto vs = params.attach(t);
    Arr<T> bn = Arr<T>::zeros({uspec.bottleneck_dim()});
    for (size_t i = 0; i < bneck.size(); ++i) bn.data[i] = static_cast<T>(bneck[i]);
    auto out = run_head(t, vs, c_k, k, t.constant(bn), dropped);
    std::vector<float> ec(static_cast<size_t>(n_f));
    for (int i = 0; i < n_f; ++i) ec[static_cast<size_t>(i)] = static_cast<float>(t.val(out)(0, i));
    return ec;
  }

  // Joint eps over [trajectory | modes]; the mode part is the CFG blend of
  // the conditional (bottleneck) and unconditional (null) head branches.
  std::vector<float> eps(const std::vector<float>& x, int k, const Conditioning&) const {
    if (static_cast<int>(x.size()) != flat_len()) throw DimensionError("eps input length");
    sched.check_step(k);
    Tape<T> t;
    t.recording = false;
    auto vs = params.attach(t);
    auto out = run_unet(t, vs, x, k);
    std::vector<float> e = grid_to_flat_valid(t.val(out.eps));
    if (has_head()) {
      std::vector<float> ck(x.end() - n_f, x.end());
      auto condb = run_head(t, vs, ck, k, out.bneck, false);
      auto uncb = run_head(t, vs, ck, k, out.bneck, true);
      std::vector<float> ec(static_cast<size_t>(n_f)), eu(static_cast<size_t>(n_f));
      for (int i = 0; i < n_f; ++i) {
        ec[static_cast<size_t>(i)] = static_cast<float>(t.val(condb)(0, i));
        eu[static_cast<size_t>(i)] = static_cast<float>(t.val(uncb)(0, i));
      }
      const std::vector<float> blend = cfg_combine(ec, eu, cfg.w);
      e.insert(e.end(), blend.begin(), blend.end());
    }
    return e;
  }

  // ---- training ----

  struct FixedItem {
    std::vector<float> x0;  // normalized flat, modes appended for joint models
    int k = 0;
    std::vector<float> z;
    bool dropped = false;
  };

  // One optimizer step on per-element MSE between predicted and true noise at
  // uniformly sampled k. Conditioning values (if any) are in-painted into x0
  // before noising. Raises on non-finite loss.
  float train_step(const std::vector<const std::vector<float>*>& batch, Rng& rng,
                   const std::vector<const Conditioning*>* conds = nullptr) {
    std::vector<FixedItem> items(batch.size());
    for (size_t i = 0; i < batch.size(); ++i) {
      items[i].x0 = *batch[i];
      if (conds && (*conds)[i]) (*conds)[i]->apply_normalized(items[i].x0);
      items[i].k = rng.uniform_int(sched.T_D);
      items[i].z.resize(items[i].x0.size());
      for (auto& v : items[i].z) v = rng.gaussian_f();
      items[i].dropped = has_head() && rng.bernoulli(cfg.p_drop);
    }
    params.zero_grad();
    const double loss = loss_batch(items, true);
    if (!std::isfinite(loss)) throw TrainingDivergenceError("non-finite training loss");
    opt.step(params);
    return static_cast<float>(loss);
  }

  // Shared by train_step (record=true) and the finite-difference audit
  // (record=false re-evaluation from current params).
  double loss_batch(const std::vector<FixedItem>& items, bool record) {
    Tape<T> t;
    t.recording = record;
    auto vs = params.attach(t);
    V total{};
    bool first = true;
    long long count = 0;
    for (const auto& it : items) {
      if (static_cast<int>(it.x0.size()) != flat_len())
        throw DimensionError("training item length");
      const std::vector<float> xk = forward_noise(it.x0, it.k, it.z, sched);
      auto out = run_unet(t, vs, xk, it.k);
      Arr<T> ztau = pad_grid(lay.to_grid(std::vector<float>(
          it.z.begin(), it.z.begin() + lay.flat_len())));
      auto diff = t.mul_mask(t.sub(out.eps, t.constant(std::move(ztau))), padded_mask());
      V item_loss = t.sum_sq(diff);
      count += lay.flat_len();
      if (has_head()) {
        std::vector<float> ck(xk.end() - n_f, xk.end());
        auto ec = run_head(t, vs, ck, it.k, out.bneck, it.dropped);
        Arr<T> zc = Arr<T>::zeros({1, n_f});
        for (int i = 0; i < n_f; ++i)
          zc(0, i) = static_cast<T>(it.z[it.z.size() - static_cast<size_t>(n_f) + i]);
        item_loss = t.add(item_loss, t.sum_sq(t.sub(ec, t.constant(std::move(zc)))));
        count += n_f;
      }
      total = first ? item_loss : t.add(total, item_loss);
      first = false;
    }
    auto loss = t.scale(total, static_cast<T>(1.0 / static_cast<double>(count)));
    const double lv = static_cast<double>(t.val(loss)(0));
    if (record) {
      t.backward(loss);
      params.pull_grads(t, vs);
    }
    return lv;
  }

  // ---- sampling wrappers ----

  // Denormalized conditioned samples; conditioned coordinates are re-applied
  // in raw units after denormalization, so they match bit-exactly.
  std::vector<Trajectory> sample(const Conditioning& cond, int nsamples, Rng& rng) const {
    auto flats = sample_flats(*this, cond, nsamples, rng);
    std::vector<Trajectory> out;
    out.reserve(flats.size());
    for (auto& f : flats) out.push_back(to_trajectory(f, cond));
    return out;
  }

  struct JointSample {
    Trajectory traj;
    std::vector<float> mode_raw;
    std::vector<int> mode;
  };
  JointSample to_joint_sample(const std::vector<float>& flat, const Conditioning& cond) const {
    JointSample js;
    js.traj = to_trajectory(flat, cond);
    js.mode_raw.assign(flat.end() - n_f, flat.end());
    js.mode = mode_round(js.mode_raw);
    return js;
  }

  Trajectory to_trajectory(const std::vector<float>& flat, const Conditioning& cond) const {
    Trajectory tr = Trajectory::zeros(lay.H, lay.d_s, lay.d_u);
    std::copy(flat.begin(), flat.begin() + lay.flat_len(), tr.flat.begin());
    nz.denormalize_flat(lay, tr.flat);
    cond.apply_raw(tr.flat);
    return tr;
  }

  std::vector<float> normalized_flat(const Trajectory& tr) const {
    std::vector<float> f = tr.flat;
    nz.normalize_flat(lay, f);
    return f;
  }

 private:
  TemporalUNet<T> net_;
  std::map<std::string, size_t> hpos_;

  Arr<T> pad_grid(const Array& g) const {
    const int C = g.dim(0), L = g.dim(1), Lp = uspec.padded_len(L);
    Arr<T> out = Arr<T>::zeros({C, Lp});
    for (int c = 0; c < C; ++c)
      for (int l = 0; l < L; ++l) out(c, l) = static_cast<T>(g(c, l));
    return out;
  }

  Arr<T> padded_mask() const {
    const Array m = lay.valid_mask();
    return pad_grid(m);
  }

  typename TemporalUNet<T>::Out run_unet(Tape<T>& t, const std::vector<V>& vs,
                                         const std::vector<float>& x_flat, int k) const {
    const std::vector<float> tau(x_flat.begin(), x_flat.begin() + lay.flat_len());
    auto xin = t.constant(pad_grid(lay.to_grid(tau)));
    return net_.forward(t, vs, xin, k);
  }

  V run_head(Tape<T>& t, const std::vector<V>& vs, const std::vector<float>& c_k, int k,
             V bneck, bool dropped) const {
    auto H = [&](const std::string& n) { return vs[hpos_.at(n)]; };
    Arr<T> ck = Arr<T>::zeros({n_f});
    for (int i = 0; i < n_f; ++i) ck(i) = static_cast<T>(c_k[static_cast<size_t>(i)]);
    auto cke = t.constant(std::move(ck));
    auto emb = t.constant(sinusoidal_embed<T>(k, uspec.emb_dim));
    V ctx = dropped ? H("null_emb") : bneck;
    auto in = t.reshape(t.concat1d(t.concat1d(cke, emb), ctx),
                        {1, n_f + uspec.emb_dim + uspec.bottleneck_dim()});
    auto h1 = t.silu(t.add_rowvec(t.matmul(in, H("h1.w")), H("h1.b")));
    auto h2 = t.silu(t.add_rowvec(t.matmul(h1, H("h2.w")), H("h2.b")));
    return t.add_rowvec(t.matmul(h2, H("h3.w")), H("h3.b"));  // [1 x n_f]
  }

  std::vector<float> grid_to_flat_valid(const Arr<T>& grid) const {
    std::vector<float> flat(static_cast<size_t>(lay.flat_len()));
    for (int t = 0; t <= lay.H; ++t) {
      for (int j = 0; j < lay.d_s; ++j)
        flat[static_cast<size_t>(lay.state_index(t, j))] = static_cast<float>(grid(j, t));
      if (t < lay.H)
        for (int j = 0; j < lay.d_u; ++j)
          flat[static_cast<size_t>(lay.action_index(t, j))] =
              static_cast<float>(grid(lay.d_s + j, t));
    }
    return flat;
  }
};

using DiffusionModel = DiffusionModelT<float>;

}  // namespace recdiff
