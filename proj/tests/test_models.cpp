#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "recdiff/core/fdcheck.hpp"
#include "recdiff/core/rng.hpp"
#include "recdiff/diffusion/schedule.hpp"
#include "recdiff/diffusion/trajectory.hpp"
#include "recdiff/models/embedding.hpp"
#include "recdiff/models/model.hpp"
#include "recdiff/models/unet.hpp"

using namespace recdiff;

namespace {

// Small configuration shared by the behavioral tests: fast to run, same code
// paths as the defaults.
TemporalUNetSpec tiny_spec(int channels) {
  TemporalUNetSpec s;
  s.in_channels = channels;
  s.base_width = 8;
  s.mults = {1, 2};
  s.kernel = 3;
  s.emb_dim = 8;
  return s;
}

std::vector<float> random_flat(int n, Rng& rng) {
  std::vector<float> x(static_cast<size_t>(n));
  for (auto& v : x) v = rng.gaussian_f();
  return x;
}

template <class T>
DiffusionModelT<T> tiny_task_model(const TrajLayout& lay, unsigned seed = 3) {
  Rng rng(seed);
  return DiffusionModelT<T>::make_task(lay, default_schedule(), Normalizer::identity(lay.channels()),
                                       tiny_spec(lay.channels()), rng);
}

template <class T>
DiffusionModelT<T> tiny_joint_model(const TrajLayout& lay, int n_f, unsigned seed = 3) {
  Rng rng(seed);
  TemporalUNetSpec us = tiny_spec(lay.channels());
  us.base_width = 4;
  us.emb_dim = 4;
  ContactHeadSpec hs;
  hs.hidden = 8;
  CFGConfig cfg;
  return DiffusionModelT<T>::make_joint(lay, n_f, default_schedule(),
                                        Normalizer::identity(lay.channels()), us, hs, cfg, rng);
}

}  // namespace

TEST_CASE("sinusoidal embedding has the promised structure") {
  SECTION("k=0 gives zero sines and unit cosines") {
    const auto e = sinusoidal_embed<double>(0, 16);
    for (int i = 0; i < 8; ++i) {
      REQUIRE(e(i) == 0.0);
      REQUIRE(e(8 + i) == 1.0);
    }
  }

  SECTION("squared norm is dim/2 for every step") {
    for (int k : {0, 1, 5, 49, 999}) {
      const auto e = sinusoidal_embed<double>(k, 32);
      double n2 = 0.0;
      for (double v : e.data) n2 += v * v;
      CHECK(n2 == Catch::Approx(16.0).epsilon(1e-12));
    }
  }

  SECTION("distinct steps embed elementwise distinctly") {
    const auto a = sinusoidal_embed<double>(5, 32);
    const auto b = sinusoidal_embed<double>(10, 32);
    for (size_t i = 0; i < a.data.size(); ++i) CHECK(a.data[i] != b.data[i]);
  }

  SECTION("frequencies span 1 down to 1e-4 geometrically") {
    // sin(k*w) for small argument ~ k*w: the last sine coordinate at k=1
    // is about 1e-4, the first is sin(1).
    const auto e = sinusoidal_embed<double>(1, 32);
    CHECK(e(0) == Catch::Approx(std::sin(1.0)));
    CHECK(e(15) == Catch::Approx(1e-4).epsilon(1e-6));
  }

  SECTION("odd dimension is rejected") {
    CHECK_THROWS_AS(sinusoidal_embed<double>(3, 7), ParameterError);
    CHECK_THROWS_AS(sinusoidal_embed<double>(3, 0), ParameterError);
  }
}

TEST_CASE("classifier-free guidance blend identities") {
  const std::vector<float> a = {0.2f, -0.4f, 1.1f};
  const std::vector<float> b = {0.1f, 0.3f, -0.2f};

  SECTION("w=0 returns the conditional branch exactly") {
    CHECK(cfg_combine(a, b, 0.0) == a);
  }

  SECTION("equal branches return that value for any w, bit-exactly") {
    for (double w : {-1.0, 0.0, 0.7, 1.0, 3.5}) CHECK(cfg_combine(a, a, w) == a);
  }

  SECTION("hand arithmetic at w=1") {
    const auto out = cfg_combine(std::vector<float>{0.2f}, std::vector<float>{0.1f}, 1.0);
    CHECK(out[0] == Catch::Approx(0.3f));
  }

  SECTION("array overload agrees and checks shapes") {
    Arr<double> x = Arr<double>::zeros({2, 2});
    Arr<double> y = Arr<double>::zeros({2, 2});
    x.data = {0.2, -0.4, 1.1, 0.0};
    y.data = {0.1, 0.3, -0.2, 0.5};
    const auto out = cfg_combine(x, y, 1.0);
    CHECK(out.data[0] == Catch::Approx(0.3));
    CHECK(out.data[3] == Catch::Approx(-0.5));
    Arr<double> bad = Arr<double>::zeros({4});
    CHECK_THROWS_AS(cfg_combine(x, bad, 1.0), DimensionError);
    CHECK_THROWS_AS(cfg_combine(a, std::vector<float>{1.0f}, 1.0), DimensionError);
  }
}

TEST_CASE("mode rounding thresholds at zero with ties to one") {
  CHECK(mode_round({-0.9f, 0.8f}) == std::vector<int>{0, 1});
  CHECK(mode_round({0.0f}) == std::vector<int>{1});
  CHECK(mode_round({-1e-7f, 1e-7f, -2.0f, 2.0f}) == std::vector<int>{0, 1, 0, 1});
  CHECK(mode_round({}) == std::vector<int>{});
  CHECK(mode_encode(1) == 1.0f);
  CHECK(mode_encode(0) == -1.0f);
}

TEST_CASE("U-Net output matches input shape across horizons") {
  for (int H : {8, 12, 16}) {
    const TrajLayout lay{H, 9, 4};
    auto m = tiny_task_model<float>(lay);
    Rng rng(7);
    const auto x = random_flat(m.flat_len(), rng);
    const auto ev = m.unet_forward(x, 5);
    REQUIRE(static_cast<int>(ev.eps_tau.size()) == lay.flat_len());
    REQUIRE(static_cast<int>(ev.bneck.size()) == m.uspec.bottleneck_dim());
    for (float v : ev.eps_tau) REQUIRE(std::isfinite(v));
  }
}

TEST_CASE("U-Net consumes the step embedding") {
  const TrajLayout lay{8, 9, 4};
  auto m = tiny_task_model<float>(lay);
  Rng rng(7);
  const auto x = random_flat(m.flat_len(), rng);
  const auto e1 = m.unet_forward(x, 3).eps_tau;
  const auto e2 = m.unet_forward(x, 30).eps_tau;
  float maxdiff = 0.0f;
  for (size_t i = 0; i < e1.size(); ++i) maxdiff = std::max(maxdiff, std::abs(e1[i] - e2[i]));
  CHECK(maxdiff > 1e-6f);
}

TEST_CASE("forward passes are deterministic") {
  const TrajLayout lay{6, 3, 2};
  auto m = tiny_joint_model<float>(lay, 2);
  Rng rng(9);
  const auto x = random_flat(m.flat_len(), rng);
  const Conditioning none{};
  CHECK(m.eps(x, 7, none) == m.eps(x, 7, none));
  const auto ev = m.unet_forward(x, 7);
  CHECK(m.contact_head_forward({0.3f, -0.8f}, 7, ev.bneck, false) ==
        m.contact_head_forward({0.3f, -0.8f}, 7, ev.bneck, false));
}

TEST_CASE("contact head branches on the dropped flag") {
  const TrajLayout lay{6, 3, 2};
  auto m = tiny_joint_model<float>(lay, 2);
  Rng rng(11);
  const auto x1 = random_flat(m.flat_len(), rng);
  const auto x2 = random_flat(m.flat_len(), rng);
  const auto b1 = m.unet_forward(x1, 4).bneck;
  const auto b2 = m.unet_forward(x2, 4).bneck;
  REQUIRE(b1 != b2);
  const std::vector<float> ck = {0.5f, -0.5f};

  SECTION("dropped branch ignores the bottleneck entirely") {
    const auto u1 = m.contact_head_forward(ck, 4, b1, true);
    const auto u2 = m.contact_head_forward(ck, 4, b2, true);
    CHECK(u1 == u2);
  }

  SECTION("conditional branch distinguishes bottlenecks") {
    const auto c1 = m.contact_head_forward(ck, 4, b1, false);
    const auto c2 = m.contact_head_forward(ck, 4, b2, false);
    CHECK(c1 != c2);
  }

  SECTION("dimension mismatches are rejected") {
    CHECK_THROWS_AS(m.contact_head_forward({0.1f}, 4, b1, false), DimensionError);
    CHECK_THROWS_AS(m.contact_head_forward(ck, 4, {0.1f, 0.2f}, false), DimensionError);
  }

  SECTION("a trajectory-only model has no head") {
    auto task = tiny_task_model<float>(lay);
    CHECK_THROWS_AS(task.contact_head_forward(ck, 4, b1, false), ContractError);
  }
}

TEST_CASE("joint eps is the guided blend of the two head branches") {
  const TrajLayout lay{6, 3, 2};
  auto m = tiny_joint_model<float>(lay, 2);
  Rng rng(13);
  const auto x = random_flat(m.flat_len(), rng);
  const int k = 9;
  const Conditioning none{};
  const auto full = m.eps(x, k, none);
  REQUIRE(static_cast<int>(full.size()) == m.flat_len());

  // Rebuild the same answer from the public surface pieces.
  const auto ev = m.unet_forward(std::vector<float>(x.begin(), x.begin() + lay.flat_len()), k);
  for (int i = 0; i < lay.flat_len(); ++i)
    REQUIRE(full[static_cast<size_t>(i)] == ev.eps_tau[static_cast<size_t>(i)]);
  const std::vector<float> ck(x.end() - 2, x.end());
  const auto ec = m.contact_head_forward(ck, k, ev.bneck, false);
  const auto eu = m.contact_head_forward(ck, k, ev.bneck, true);
  const auto blend = cfg_combine(ec, eu, m.cfg.w);
  CHECK(full[full.size() - 2] == blend[0]);
  CHECK(full[full.size() - 1] == blend[1]);
}

TEST_CASE("default configuration stays under the parameter budget") {
  const TrajLayout lay{8, 9, 4};
  Rng rng(1);
  TemporalUNetSpec us;  // defaults: base 32, mults {1,2}, kernel 5, emb 32
  auto task = DiffusionModel::make_task(lay, default_schedule(),
                                        Normalizer::identity(lay.channels()), us, rng);
  CHECK(task.param_count() < 100000);
  CHECK(task.param_count() > 1000);

  Rng rng2(2);
  auto joint = DiffusionModel::make_joint(lay, 2, default_schedule(),
                                          Normalizer::identity(lay.channels()), us,
                                          ContactHeadSpec{}, CFGConfig{}, rng2);
  CHECK(joint.param_count() < 100000);
  CHECK(joint.param_count() > task.param_count());
}

TEST_CASE("training loss semantics on degenerate models") {
  const TrajLayout lay{8, 9, 4};
  auto m = tiny_task_model<float>(lay);
  // Zero every parameter: the network output is identically zero.
  m.params.set_flat(std::vector<float>(static_cast<size_t>(m.param_count()), 0.0f));

  SECTION("zero noise and zero output give exactly zero loss") {
    std::vector<DiffusionModel::FixedItem> items(2);
    Rng rng(5);
    for (auto& it : items) {
      it.x0 = random_flat(m.flat_len(), rng);
      it.k = 10;
      it.z.assign(it.x0.size(), 0.0f);
    }
    CHECK(m.loss_batch(items, false) == 0.0);
  }

  SECTION("unit-Gaussian noise gives per-element MSE near one") {
    std::vector<DiffusionModel::FixedItem> items(32);
    Rng rng(6);
    for (auto& it : items) {
      it.x0 = random_flat(m.flat_len(), rng);
      it.k = rng.uniform_int(m.sched.T_D);
      it.z = random_flat(m.flat_len(), rng);
    }
    const double loss = m.loss_batch(items, false);
    CHECK(loss == Catch::Approx(1.0).margin(0.05));
  }
}

TEST_CASE("gradients pass the finite-difference audit") {
  // float64 instantiation of the full training graph, tiny widths.
  const TrajLayout lay{4, 3, 2};

  SECTION("trajectory-only model") {
    Rng rng(17);
    TemporalUNetSpec us = tiny_spec(lay.channels());
    us.base_width = 4;
    us.emb_dim = 4;
    auto m = DiffusionModelT<double>::make_task(lay, default_schedule(),
                                                Normalizer::identity(lay.channels()), us, rng);
    std::vector<DiffusionModelT<double>::FixedItem> items(2);
    for (auto& it : items) {
      it.x0 = random_flat(m.flat_len(), rng);
      it.k = 6 + static_cast<int>(&it - items.data()) * 37;
      it.z = random_flat(m.flat_len(), rng);
    }
    m.params.zero_grad();
    m.loss_batch(items, true);
    const double err =
        finite_diff_check(m.params, [&] { return m.loss_batch(items, false); }, 1e-4);
    CHECK(err <= 1e-3);
  }

  SECTION("joint model including head, null embedding and dropout branch") {
    auto m = tiny_joint_model<double>(lay, 2, 19);
    Rng rng(23);
    std::vector<DiffusionModelT<double>::FixedItem> items(3);
    int i = 0;
    for (auto& it : items) {
      it.x0 = random_flat(m.flat_len(), rng);
      it.k = 5 + 20 * i;
      it.z = random_flat(m.flat_len(), rng);
      it.dropped = (i++ == 1);  // exercise both branches in one batch
    }
    m.params.zero_grad();
    m.loss_batch(items, true);
    const double err =
        finite_diff_check(m.params, [&] { return m.loss_batch(items, false); }, 1e-4);
    CHECK(err <= 1e-3);
  }
}

TEST_CASE("training runs at both dropout extremes") {
  const TrajLayout lay{6, 3, 2};
  Rng data_rng(29);
  std::vector<std::vector<float>> corpus;
  // Joint-model flats carry the trajectory plus one mode coordinate per finger.
  for (int i = 0; i < 8; ++i) corpus.push_back(random_flat(lay.flat_len() + 2, data_rng));
  for (double pd : {0.0, 1.0}) {
    auto m = tiny_joint_model<float>(lay, 2);
    m.cfg.p_drop = pd;
    Rng rng(31);
    for (int step = 0; step < 3; ++step) {
      std::vector<const std::vector<float>*> batch;
      for (const auto& c : corpus) batch.push_back(&c);
      const float loss = m.train_step(batch, rng);
      REQUIRE(std::isfinite(loss));
    }
  }
}

TEST_CASE("training on a coherent corpus drives the loss down") {
  // Smooth synthetic trajectories; loss averaged over consecutive 100-step
  // blocks must fall monotonically across 500 steps.
  const TrajLayout lay{6, 3, 2};
  Rng gen(41);
  std::vector<std::vector<float>> corpus;
  for (int i = 0; i < 64; ++i) {
    Trajectory tr = Trajectory::zeros(lay.H, lay.d_s, lay.d_u);
    const float a = gen.gaussian_f(), b = 0.3f * gen.gaussian_f(), c = 0.05f * gen.gaussian_f();
    for (int t = 0; t <= lay.H; ++t)
      for (int j = 0; j < lay.d_s; ++j) {
        const auto tf = static_cast<float>(t);
        tr.state(t)[j] = a + b * tf + c * tf * tf + 0.1f * static_cast<float>(j) * b;
      }
    for (int t = 0; t < lay.H; ++t)
      for (int j = 0; j < lay.d_u; ++j) tr.action(t)[j] = b + 0.05f * gen.gaussian_f();
    corpus.push_back(tr.flat);
  }
  auto m = tiny_task_model<float>(lay, 43);
  // Small enough step that 500 iterations stay inside the descending regime.
  m.opt = Adam<float>(3e-4);
  Rng rng(47);
  std::vector<double> losses;
  for (int step = 0; step < 500; ++step) {
    std::vector<const std::vector<float>*> batch;
    for (int j = 0; j < 8; ++j)
      batch.push_back(&corpus[static_cast<size_t>(rng.uniform_int(64))]);
    losses.push_back(m.train_step(batch, rng));
  }
  std::vector<double> blocks;
  for (int b = 0; b < 5; ++b) {
    double s = 0.0;
    for (int i = 0; i < 100; ++i) s += losses[static_cast<size_t>(b * 100 + i)];
    blocks.push_back(s / 100.0);
  }
  for (size_t b = 1; b < blocks.size(); ++b) CHECK(blocks[b] < blocks[b - 1]);
  CHECK(blocks.back() < 0.8 * blocks.front());
}

TEST_CASE("sampling pins the conditioned initial state exactly") {
  const TrajLayout lay{6, 3, 2};
  // Non-trivial normalizer so the raw/normalized distinction matters.
  Rng gen(53);
  std::vector<Trajectory> fitcorp;
  for (int i = 0; i < 16; ++i) {
    Trajectory tr = Trajectory::zeros(lay.H, lay.d_s, lay.d_u);
    for (auto& v : tr.flat) v = 2.0f + 0.7f * gen.gaussian_f();
    fitcorp.push_back(tr);
  }
  const Normalizer nz = Normalizer::fit(fitcorp);
  Rng rng(3);
  auto m = DiffusionModel::make_task(lay, default_schedule(), nz, tiny_spec(lay.channels()), rng);

  const std::vector<float> s0 = {1.9f, 2.3f, 2.05f};
  const Conditioning cond = Conditioning::initial_state(lay, nz, s0);
  Rng srng(61);
  const auto trajs = m.sample(cond, 3, srng);
  REQUIRE(trajs.size() == 3);
  for (const auto& tr : trajs) {
    for (int j = 0; j < lay.d_s; ++j) REQUIRE(tr.state(0)[j] == s0[static_cast<size_t>(j)]);
    for (float v : tr.flat) REQUIRE(std::isfinite(v));
  }
  // Independent chains differ away from the pins.
  CHECK(trajs[0].flat != trajs[1].flat);
}

TEST_CASE("joint samples carry rounded modes alongside the trajectory") {
  const TrajLayout lay{6, 3, 2};
  auto m = tiny_joint_model<float>(lay, 2);
  std::vector<float> flat(static_cast<size_t>(m.flat_len()), 0.5f);
  flat[flat.size() - 2] = -0.9f;
  flat[flat.size() - 1] = 0.8f;
  const Conditioning none{};
  const auto js = m.to_joint_sample(flat, none);
  CHECK(js.mode == std::vector<int>{0, 1});
  CHECK(js.mode_raw == std::vector<float>{-0.9f, 0.8f});
  REQUIRE(js.traj.flat.size() == static_cast<size_t>(lay.flat_len()));
}
