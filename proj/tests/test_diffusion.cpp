#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <vector>

#include "recdiff/core/rng.hpp"
#include "recdiff/diffusion/process.hpp"
#include "recdiff/diffusion/schedule.hpp"
#include "recdiff/diffusion/trajectory.hpp"

using namespace recdiff;

namespace {

// Predicts zero noise everywhere; isolates the ancestral update arithmetic.
struct ZeroModel {
  NoiseSchedule s = default_schedule();
  int n = 4;
  const NoiseSchedule& schedule() const { return s; }
  int flat_len() const { return n; }
  std::vector<float> eps(const std::vector<float>& x, int, const Conditioning&) const {
    return std::vector<float>(x.size(), 0.0f);
  }
};

// For a point corpus {tau0}, the corrupting noise is recoverable from x_k:
// z = (x_k - sqrt(ab) tau0) / sqrt(1 - ab). Predicting it exactly makes the
// forward-posterior and model reverse means coincide.
struct ExactEpsModel {
  NoiseSchedule s;
  std::vector<float> tau0;
  const NoiseSchedule& schedule() const { return s; }
  int flat_len() const { return static_cast<int>(tau0.size()); }
  std::vector<float> eps(const std::vector<float>& x, int k, const Conditioning&) const {
    const double a = std::sqrt(s.alpha_bar[k]), b = std::sqrt(1.0 - s.alpha_bar[k]);
    std::vector<float> e(x.size());
    for (size_t i = 0; i < x.size(); ++i)
      e[i] = static_cast<float>((x[i] - a * tau0[i]) / b);
    return e;
  }
};

// Exact prediction plus a constant offset; the KL it induces has a closed
// form independent of the noise draws (they cancel in mu_q - mu_theta).
struct BiasedModel {
  ExactEpsModel inner;
  float bias = 0.0f;
  const NoiseSchedule& schedule() const { return inner.s; }
  int flat_len() const { return inner.flat_len(); }
  std::vector<float> eps(const std::vector<float>& x, int k, const Conditioning& c) const {
    std::vector<float> e = inner.eps(x, k, c);
    for (auto& v : e) v += bias;
    return e;
  }
};

// Minimum-MSE noise predictor for x0 ~ N(mu, sig2 I): the posterior mean of z
// given x_k, available in closed form because everything is Gaussian. Acts as
// a "perfectly trained" model for sampler and likelihood mechanics.
struct GaussianOptimalModel {
  NoiseSchedule s = default_schedule();
  int n = 6;
  double mu = 0.0, sig2 = 1.0;
  const NoiseSchedule& schedule() const { return s; }
  int flat_len() const { return n; }
  std::vector<float> eps(const std::vector<float>& x, int k, const Conditioning&) const {
    const double ab = s.alpha_bar[k];
    const double denom = ab * sig2 + (1.0 - ab);
    const double c = std::sqrt(1.0 - ab) / denom;
    const double m = std::sqrt(ab) * mu;
    std::vector<float> e(x.size());
    for (size_t i = 0; i < x.size(); ++i) e[i] = static_cast<float>(c * (x[i] - m));
    return e;
  }
};

std::vector<float> random_flat(int n, Rng& rng, float scale = 1.0f) {
  std::vector<float> x(static_cast<size_t>(n));
  for (auto& v : x) v = scale * rng.gaussian_f();
  return x;
}

double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

double sd_of(const std::vector<double>& v) {
  const double m = mean_of(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

}  // namespace

TEST_CASE("linear schedule satisfies its structural invariants") {
  const NoiseSchedule s = NoiseSchedule::linear(40, 1e-4, 0.3);
  REQUIRE(s.T_D == 40);
  REQUIRE(s.beta.size() == 40);
  CHECK(s.beta[0] == Catch::Approx(1e-4));
  CHECK(s.beta[39] == Catch::Approx(0.3));
  double prod = 1.0;
  for (int k = 0; k < s.T_D; ++k) {
    CHECK(s.beta[k] > 0.0);
    CHECK(s.beta[k] < 1.0);
    if (k > 0) CHECK(s.beta[k] >= s.beta[k - 1]);
    CHECK(s.alpha[k] == Catch::Approx(1.0 - s.beta[k]));
    prod *= 1.0 - s.beta[k];
    CHECK(s.alpha_bar[k] == Catch::Approx(prod).epsilon(1e-12));
    if (k > 0) CHECK(s.alpha_bar[k] < s.alpha_bar[k - 1]);
  }
  CHECK(s.alpha_bar[0] == Catch::Approx(1.0 - 1e-4));

  // Posterior variance recomputed independently at a few steps.
  for (int k : {1, 17, 39}) {
    const double expect = s.beta[k] * (1.0 - s.alpha_bar[k - 1]) / (1.0 - s.alpha_bar[k]);
    CHECK(s.sigma2[k] == Catch::Approx(expect).epsilon(1e-12));
    CHECK(s.sigma2[k] > 0.0);
    CHECK(s.sigma2[k] < s.beta[k]);  // strictly below the upper DDPM choice
  }
}

TEST_CASE("default schedule ends in effectively pure noise") {
  const NoiseSchedule s = default_schedule();
  CHECK(std::sqrt(s.alpha_bar[s.T_D - 1]) < 0.05);
  CHECK(s.alpha_bar[0] > 0.99);
}

TEST_CASE("schedule construction rejects malformed parameters") {
  CHECK_THROWS_AS(NoiseSchedule::linear(1, 1e-4, 0.2), ParameterError);
  CHECK_THROWS_AS(NoiseSchedule::linear(10, 0.0, 0.2), ParameterError);
  CHECK_THROWS_AS(NoiseSchedule::linear(10, 1e-4, 1.0), ParameterError);
  CHECK_THROWS_AS(NoiseSchedule::linear(10, 0.2, 0.1), ParameterError);
  const NoiseSchedule s = NoiseSchedule::linear(10, 1e-4, 0.2);
  CHECK_THROWS_AS(s.check_step(-1), StepError);
  CHECK_THROWS_AS(s.check_step(10), StepError);
  CHECK_NOTHROW(s.check_step(0));
  CHECK_NOTHROW(s.check_step(9));
}

TEST_CASE("forward noising follows the closed form") {
  const NoiseSchedule s = default_schedule();
  Rng rng(11);
  const std::vector<float> x0 = random_flat(8, rng);

  SECTION("zero noise scales by sqrt(alpha_bar)") {
    const std::vector<float> z(8, 0.0f);
    for (int k : {0, 7, 50, s.T_D - 1}) {
      const auto xk = forward_noise(x0, k, z, s);
      const float a = static_cast<float>(std::sqrt(s.alpha_bar[k]));
      for (size_t i = 0; i < x0.size(); ++i) REQUIRE(xk[i] == a * x0[i]);
    }
  }

  SECTION("k=0 barely perturbs the input") {
    const std::vector<float> z(8, 0.5f);
    const auto xk = forward_noise(x0, 0, z, s);
    for (size_t i = 0; i < x0.size(); ++i)
      CHECK(std::abs(xk[i] - x0[i]) < 1e-2);
  }

  SECTION("rejects out-of-range steps and mismatched noise") {
    const std::vector<float> z(8, 0.0f);
    CHECK_THROWS_AS(forward_noise(x0, -1, z, s), StepError);
    CHECK_THROWS_AS(forward_noise(x0, s.T_D, z, s), StepError);
    CHECK_THROWS_AS(forward_noise(x0, 3, std::vector<float>(7, 0.0f), s), DimensionError);
  }
}

TEST_CASE("forward noising matches the analytic variance") {
  // x0 ~ N(0.3, 0.49) i.i.d. per coordinate; the corrupted marginal variance
  // is alpha_bar*var(x0) + (1 - alpha_bar) = 1 - alpha_bar*(1 - var(x0)).
  const NoiseSchedule s = default_schedule();
  const int k = 40;
  const double var0 = 0.49;
  const double analytic = 1.0 - s.alpha_bar[k] * (1.0 - var0);
  Rng rng(202);
  const int draws = 10000, dim = 8;
  double s1 = 0.0, s2 = 0.0;
  long long n = 0;
  for (int d = 0; d < draws; ++d) {
    std::vector<float> x0(dim), z(dim);
    for (auto& v : x0) v = 0.3f + 0.7f * rng.gaussian_f();
    for (auto& v : z) v = rng.gaussian_f();
    const auto xk = forward_noise(x0, k, z, s);
    for (float v : xk) {
      s1 += v;
      s2 += static_cast<double>(v) * v;
      ++n;
    }
  }
  const double m = s1 / static_cast<double>(n);
  const double var = s2 / static_cast<double>(n) - m * m;
  CHECK(std::abs(var - analytic) / analytic < 0.05);
}

TEST_CASE("reverse step reduces to the documented formulas") {
  ZeroModel model;
  const NoiseSchedule& s = model.s;
  Rng rng(5);
  const std::vector<float> x = random_flat(model.n, rng);
  static const Conditioning none{};

  SECTION("eps=0 at k=1 gives x / sqrt(alpha)") {
    Rng r2(9);
    const auto out = reverse_step(model, x, 1, none, r2);
    const float inv = static_cast<float>(1.0 / std::sqrt(s.alpha[1]));
    for (size_t i = 0; i < x.size(); ++i) REQUIRE(out[i] == inv * x[i]);
  }

  SECTION("k=1 is deterministic regardless of rng state") {
    Rng a(1), b(999);
    a.gaussian_f();  // desynchronize
    const auto o1 = reverse_step(model, x, 1, none, a);
    const auto o2 = reverse_step(model, x, 1, none, b);
    REQUIRE(o1 == o2);
  }

  SECTION("k>1 replays the mean-plus-noise form exactly") {
    const int k = 12;
    Rng draw(77);
    const auto out = reverse_step(model, x, k, none, draw);
    Rng replay(77);
    const float inv = static_cast<float>(1.0 / std::sqrt(s.alpha[k]));
    const float sig = static_cast<float>(std::sqrt(s.sigma2[k]));
    for (size_t i = 0; i < x.size(); ++i) {
      const float expect = inv * x[i] + sig * replay.gaussian_f();
      REQUIRE(out[i] == expect);
    }
  }

  SECTION("step bounds are enforced") {
    CHECK_THROWS_AS(reverse_step(model, x, 0, none, rng), StepError);
    CHECK_THROWS_AS(reverse_step(model, x, s.T_D, none, rng), StepError);
  }

  SECTION("in-painted coordinates are bit-equal to the pins after every step") {
    Conditioning cond;
    cond.pins_normalized = {{0, 0.37f}, {3, -1.25f}};
    cond.pins_raw = cond.pins_normalized;
    std::vector<float> cur = x;
    for (int k = s.T_D - 1; k >= 1; --k) {
      cur = reverse_step(model, cur, k, cond, rng);
      REQUIRE(cur[0] == 0.37f);
      REQUIRE(cur[3] == -1.25f);
    }
  }
}

TEST_CASE("reverse chain on a known Gaussian matches its moments") {
  // The closed-form optimal predictor stands in for a perfectly trained
  // model, so this isolates the sampler itself. The fixed posterior reverse
  // variance slightly undershoots (a few percent at the default schedule);
  // the 10% tolerance covers the method, not just Monte-Carlo error.
  GaussianOptimalModel model;
  model.mu = 2.0;
  model.sig2 = 1.0;
  Rng rng(31);
  static const Conditioning none{};
  const int nsamp = 4000;
  double s1 = 0.0, s2 = 0.0;
  long long n = 0;
  for (int i = 0; i < nsamp; ++i) {
    const auto x = sample_chain(model, none, 0, rng);
    for (float v : x) {
      s1 += v;
      s2 += static_cast<double>(v) * v;
      ++n;
    }
  }
  const double mean = s1 / static_cast<double>(n);
  const double var = s2 / static_cast<double>(n) - mean * mean;
  CHECK(std::abs(mean - model.mu) / model.mu < 0.10);
  CHECK(std::abs(var - model.sig2) / model.sig2 < 0.10);
}

TEST_CASE("conditioned sampling pins coordinates and stays stochastic") {
  GaussianOptimalModel model;
  Rng rng(8);
  Conditioning cond;
  cond.pins_normalized = {{2, 0.37f}};
  cond.pins_raw = {{2, 0.37f}};

  const auto flats = sample_flats(model, cond, 4, rng);
  REQUIRE(flats.size() == 4);
  for (const auto& f : flats) REQUIRE(f[2] == 0.37f);
  // Unpinned coordinates differ between independent chains.
  bool any_diff = false;
  for (size_t i = 0; i < flats[0].size(); ++i)
    if (i != 2 && flats[0][i] != flats[1][i]) any_diff = true;
  CHECK(any_diff);

  SECTION("releasing the pins early leaves the coordinate free") {
    Rng r2(8);
    const auto x = sample_chain(model, cond, 3, r2);
    CHECK(x[2] != 0.37f);
  }

  SECTION("out-of-bounds pins and bad counts are rejected") {
    Conditioning bad;
    bad.pins_normalized = {{model.n, 1.0f}};
    Rng r3(1);
    CHECK_THROWS_AS(sample_chain(model, bad, 1, r3), DimensionError);
    CHECK_THROWS_AS(sample_flats(model, cond, 0, r3), ParameterError);
  }
}

TEST_CASE("likelihood is zero for an exact predictor and positive under bias") {
  const NoiseSchedule s = default_schedule();
  Rng rng(21);
  ExactEpsModel exact{s, random_flat(10, rng)};
  const std::vector<int> K = {5, 10, 15};

  SECTION("matched means give (numerically) zero divergence") {
    Rng r(3);
    const double L = kl_likelihood(exact, exact.tau0, K, 4, r);
    CHECK(L >= 0.0);
    CHECK(L < 1e-6);
  }

  SECTION("a constant prediction bias matches the closed-form divergence") {
    BiasedModel biased{exact, 0.25f};
    Rng r(3);
    const double L = kl_likelihood(biased, exact.tau0, K, 4, r);
    // mu_q - mu_theta = bias * beta_k / (sqrt(alpha_k) sqrt(1-alpha_bar_k))
    // per coordinate, independent of the noise draw.
    double expect = 0.0;
    for (int k : K) {
      const double d = 0.25 * s.beta[k] / (std::sqrt(s.alpha[k]) * std::sqrt(1.0 - s.alpha_bar[k]));
      expect += 10.0 * d * d / (2.0 * s.sigma2[k]);
    }
    expect /= static_cast<double>(K.size());
    CHECK(L == Catch::Approx(expect).epsilon(1e-3));
    CHECK(L > 0.0);
  }

  SECTION("bigger bias, bigger divergence") {
    Rng r1(3), r2(3);
    BiasedModel small{exact, 0.1f}, big{exact, 0.5f};
    CHECK(kl_likelihood(small, exact.tau0, K, 4, r1) <
          kl_likelihood(big, exact.tau0, K, 4, r2));
  }

  SECTION("parameter validation") {
    Rng r(3);
    CHECK_THROWS_AS(kl_likelihood(exact, exact.tau0, {}, 4, r), ParameterError);
    CHECK_THROWS_AS(kl_likelihood(exact, exact.tau0, {5}, 0, r), ParameterError);
    CHECK_THROWS_AS(kl_likelihood(exact, exact.tau0, {0}, 4, r), StepError);
    CHECK_THROWS_AS(kl_likelihood(exact, exact.tau0, {s.T_D}, 4, r), StepError);
  }
}

TEST_CASE("likelihood estimate is order-invariant over K") {
  GaussianOptimalModel model;
  Rng rng(40);
  const std::vector<float> tau = random_flat(model.n, rng);
  Rng r1(123), r2(123);
  const double a = kl_likelihood(model, tau, {5, 10, 15}, 4, r1);
  const double b = kl_likelihood(model, tau, {15, 5, 10}, 4, r2);
  CHECK(a == Catch::Approx(b).epsilon(1e-12));
}

TEST_CASE("likelihood standard error shrinks like 1/sqrt(N_noise)") {
  GaussianOptimalModel model;
  Rng rng(50);
  const std::vector<float> tau = random_flat(model.n, rng, 1.3f);
  const std::vector<int> K = {5, 10, 15};
  const int reps = 200;
  std::vector<double> l1, l16;
  Rng r(7);
  for (int i = 0; i < reps; ++i) l1.push_back(kl_likelihood(model, tau, K, 1, r));
  for (int i = 0; i < reps; ++i) l16.push_back(kl_likelihood(model, tau, K, 16, r));
  const double ratio = sd_of(l16) / sd_of(l1);
  // Expected 1/4; allow generous Monte-Carlo slack around it.
  CHECK(ratio > 0.12);
  CHECK(ratio < 0.45);
  // Both estimate the same expectation.
  CHECK(mean_of(l1) == Catch::Approx(mean_of(l16)).margin(3.0 * sd_of(l1) / std::sqrt(200.0)));
}

TEST_CASE("trajectory grid layout round-trips and masks the unused slot") {
  const TrajLayout lay{8, 9, 4};
  REQUIRE(lay.flat_len() == 9 * 9 + 8 * 4);
  Rng rng(2);
  std::vector<float> flat = random_flat(lay.flat_len(), rng);
  const Array g = lay.to_grid(flat);
  REQUIRE(g.dim(0) == 13);
  REQUIRE(g.dim(1) == 9);
  // Action slot of the final column is structurally zero.
  for (int j = 0; j < lay.d_u; ++j) CHECK(g(lay.d_s + j, lay.H) == 0.0f);
  std::vector<float> back(flat.size(), -99.0f);
  lay.from_grid(g, back);
  REQUIRE(back == flat);

  const Array m = lay.valid_mask();
  int valid = 0;
  for (float v : m.data) {
    REQUIRE((v == 0.0f || v == 1.0f));
    valid += v == 1.0f ? 1 : 0;
  }
  CHECK(valid == lay.flat_len());
  for (int j = 0; j < lay.d_u; ++j) CHECK(m(lay.d_s + j, lay.H) == 0.0f);

  // Index maps cover [0, flat_len) exactly once.
  std::vector<int> seen(static_cast<size_t>(lay.flat_len()), 0);
  for (int t = 0; t <= lay.H; ++t)
    for (int j = 0; j < lay.d_s; ++j) seen[static_cast<size_t>(lay.state_index(t, j))]++;
  for (int t = 0; t < lay.H; ++t)
    for (int j = 0; j < lay.d_u; ++j) seen[static_cast<size_t>(lay.action_index(t, j))]++;
  CHECK(std::all_of(seen.begin(), seen.end(), [](int c) { return c == 1; }));
}

TEST_CASE("normalizer is a per-channel bijection with unit statistics") {
  const TrajLayout lay{6, 3, 2};
  Rng rng(13);
  std::vector<Trajectory> corpus;
  for (int i = 0; i < 32; ++i) {
    Trajectory tr = Trajectory::zeros(lay.H, lay.d_s, lay.d_u);
    for (int j = 0; j < lay.flat_len(); ++j) {
      const int c = lay.channel_of(j);
      // Distinct affine families per channel; channel 2 is constant.
      const float base = c == 2 ? 4.2f : static_cast<float>(c) * 2.0f - 1.0f;
      const float spread = c == 2 ? 0.0f : 0.5f + 0.3f * static_cast<float>(c);
      tr.flat[static_cast<size_t>(j)] = base + spread * rng.gaussian_f();
    }
    corpus.push_back(tr);
  }
  const Normalizer nz = Normalizer::fit(corpus);
  REQUIRE(nz.channels() == lay.channels());
  CHECK(nz.stdev[2] == 1.0f);  // zero-variance channel stays a bijection
  CHECK(nz.mean[2] == Catch::Approx(4.2f));
  for (int c = 0; c < lay.channels(); ++c) CHECK(nz.stdev[c] > 0.0f);

  SECTION("normalize then denormalize is the identity to 1e-6") {
    const Trajectory& tr = corpus[7];
    const Trajectory back = nz.denormalize(nz.normalize(tr));
    for (int j = 0; j < lay.flat_len(); ++j)
      CHECK(back.flat[static_cast<size_t>(j)] ==
            Catch::Approx(tr.flat[static_cast<size_t>(j)]).margin(1e-6));
  }

  SECTION("normalized corpus has near-zero mean and unit spread per channel") {
    std::vector<double> s1(static_cast<size_t>(lay.channels()), 0.0);
    std::vector<double> s2(static_cast<size_t>(lay.channels()), 0.0);
    std::vector<long long> n(static_cast<size_t>(lay.channels()), 0);
    for (const auto& tr : corpus) {
      const Trajectory nt = nz.normalize(tr);
      for (int j = 0; j < lay.flat_len(); ++j) {
        const auto c = static_cast<size_t>(lay.channel_of(j));
        const double v = nt.flat[static_cast<size_t>(j)];
        s1[c] += v;
        s2[c] += v * v;
        ++n[c];
      }
    }
    for (int c = 0; c < lay.channels(); ++c) {
      if (c == 2) continue;  // constant channel normalizes to exactly zero
      const auto cc = static_cast<size_t>(c);
      const double m = s1[cc] / static_cast<double>(n[cc]);
      const double var = s2[cc] / static_cast<double>(n[cc]) - m * m;
      CHECK(std::abs(m) < 1e-4);
      CHECK(var == Catch::Approx(1.0).epsilon(1e-3));
    }
  }

  SECTION("fitting an empty corpus is an error") {
    CHECK_THROWS_AS(Normalizer::fit({}), ParameterError);
  }
}

TEST_CASE("initial-state conditioning carries exact raw values") {
  const TrajLayout lay{5, 4, 2};
  Rng rng(17);
  std::vector<Trajectory> corpus;
  for (int i = 0; i < 16; ++i) {
    Trajectory tr = Trajectory::zeros(lay.H, lay.d_s, lay.d_u);
    for (auto& v : tr.flat) v = 1.5f + 0.8f * rng.gaussian_f();
    corpus.push_back(tr);
  }
  const Normalizer nz = Normalizer::fit(corpus);
  const std::vector<float> s0 = {0.9f, -0.2f, 0.4f, 1.7f};
  const Conditioning cond = Conditioning::initial_state(lay, nz, s0);
  REQUIRE(cond.pins_raw.size() == 4);
  cond.check_bounds(lay.flat_len());

  // Raw application is bit-exact; normalized application round-trips through
  // the channel affine map to within float arithmetic.
  std::vector<float> flat(static_cast<size_t>(lay.flat_len()), 0.0f);
  cond.apply_raw(flat);
  for (int j = 0; j < lay.d_s; ++j)
    REQUIRE(flat[static_cast<size_t>(lay.state_index(0, j))] == s0[static_cast<size_t>(j)]);

  std::vector<float> nflat(static_cast<size_t>(lay.flat_len()), 0.0f);
  cond.apply_normalized(nflat);
  nz.denormalize_flat(lay, nflat);
  for (int j = 0; j < lay.d_s; ++j)
    CHECK(nflat[static_cast<size_t>(lay.state_index(0, j))] ==
          Catch::Approx(s0[static_cast<size_t>(j)]).margin(1e-5));

  SECTION("wrong state dimension is rejected") {
    CHECK_THROWS_AS(Conditioning::initial_state(lay, nz, {1.0f, 2.0f}), DimensionError);
  }
  SECTION("out-of-range pin index is rejected") {
    Conditioning bad;
    bad.pins_normalized = {{-1, 0.0f}};
    CHECK_THROWS_AS(bad.check_bounds(lay.flat_len()), DimensionError);
  }
}
