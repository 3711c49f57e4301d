#include <cmath>

#include <doctest.h>

#include "diffusion.hpp"
#include "support.hpp"

using namespace unlasting;
using namespace unlasting::diffusion;

namespace {

// Independent schedule: product of (1 - beta) with beta linear in t.
std::vector<double> scalar_alpha_bar(std::size_t T) {
  std::vector<double> a(T + 1, 1.0);
  for (std::size_t t = 1; t <= T; ++t) {
    const double beta = T == 1 ? 1e-4 : 1e-4 + (0.02 - 1e-4) * double(t - 1) / double(T - 1);
    a[t] = a[t - 1] * (1.0 - beta);
  }
  return a;
}

// Posterior mean for data ~ N(m, s^2): the exact x0 predictor of that distribution.
DenoiserFn gaussian_oracle(const DiffusionSchedule& sched, double m, double s) {
  return [&sched, m, s](const Vector& x, std::size_t t) {
    const double a = sched.alpha_bar[static_cast<Eigen::Index>(t)];
    const double gain = std::sqrt(a) * s * s / (a * s * s + 1.0 - a);
    return Vector((m + gain * (x.array() - std::sqrt(a) * m)).matrix());
  };
}

// Exact x0 predictor for an equal mixture of N(lo, s^2) and N(hi, s^2), per coordinate.
DenoiserFn mixture_oracle(const DiffusionSchedule& sched, double lo, double hi, double s) {
  return [&sched, lo, hi, s](const Vector& x, std::size_t t) {
    const double a = sched.alpha_bar[static_cast<Eigen::Index>(t)];
    const double var = a * s * s + 1.0 - a, gain = std::sqrt(a) * s * s / var;
    Vector out(x.size());
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      const double dl = x[i] - std::sqrt(a) * lo, dh = x[i] - std::sqrt(a) * hi;
      const double w_hi = 1.0 / (1.0 + std::exp((dh * dh - dl * dl) / (2.0 * var)));
      out[i] = (1.0 - w_hi) * (lo + gain * dl) + w_hi * (hi + gain * dh);
    }
    return out;
  };
}

double mae(const Vector& a, const Vector& b) { return (a - b).cwiseAbs().mean(); }

}  // namespace

TEST_SUITE("diffusion") {
  TEST_CASE("schedule endpoints and monotonicity") {
    const auto s1 = make_schedule(1);
    CHECK(s1.alpha_bar[0] == 1.0);
    CHECK(s1.alpha_bar[1] == doctest::Approx(1.0 - 1e-4).epsilon(1e-15));
    const auto s = make_schedule(500);
    const auto ref = scalar_alpha_bar(500);
    CHECK(s.alpha_bar[0] == 1.0);
    for (std::size_t t = 1; t <= 500; ++t) {
      CHECK(s.alpha_bar[t] < s.alpha_bar[t - 1]);
      CHECK(std::abs(s.alpha_bar[t] - ref[t]) <= 1e-15);
    }
    CHECK(s.alpha_bar[500] > 0.0);
    CHECK(s.alpha_bar[500] < 1e-2);
    CHECK_THROWS_AS(make_schedule(0), Error);
  }

  TEST_CASE("forward noise examples") {
    DiffusionSchedule s{2, Vector(3)};
    s.alpha_bar << 1.0, 0.25, 0.1;
    const Vector one = Vector::Ones(1);
    CHECK(forward_noise(one, 0, one, s)[0] == 1.0);
    CHECK(forward_noise(one, 1, one, s)[0] == doctest::Approx(0.5 + std::sqrt(0.75)).epsilon(1e-15));
    CHECK(forward_noise(one, 1, one, s)[0] == doctest::Approx(1.3660).epsilon(1e-4));
    CHECK(forward_noise(one, 1, Vector::Zero(1), s)[0] == 0.5);
    CHECK_THROWS_AS(forward_noise(one, 3, one, s), Error);
  }

  TEST_CASE("ddim step examples") {
    DiffusionSchedule s{2, Vector(3)};
    s.alpha_bar << 1.0, 0.64, 0.25;
    Vector x_t(1), x0(1);
    x_t << 1.366;
    x0 << 1.0;
    x_t[0] = 0.5 + std::sqrt(0.75);
    CHECK(ddim_step(x_t, x0, 2, 1, s, 0.0)[0] == doctest::Approx(1.4).epsilon(1e-14));
    CHECK(ddim_step(x_t, x0, 2, 2, s, 0.0)[0] == doctest::Approx(x_t[0]).epsilon(1e-15));
    try {
      ddim_step(x0, x0, 0, 1, s, 0.0);
      FAIL("expected step-range error");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::step_range);
    }
    CHECK_THROWS_AS(ddim_step(x_t, x0, 2, 1, s, -0.1), Error);
    CHECK_THROWS_AS(ddim_step(x_t, x0, 2, 1, s, 0.7), Error);  // eta^2 > 1 - abar_s
    Rng rng(1);
    CHECK_NOTHROW(ddim_step(x_t, x0, 2, 1, s, 0.3, &rng));
  }

  TEST_CASE("ddim substitution identity with exact prediction") {
    const auto s = make_schedule(100);
    Rng rng(2);
    for (int rep = 0; rep < 20; ++rep) {
      const Vector x0 = standard_normal_vector(rng, 5);
      const Vector eps = standard_normal_vector(rng, 5);
      const auto t = 1 + uniform_index(rng, 100);
      const auto target = uniform_index(rng, 101);
      const Vector x_t = forward_noise(x0, t, eps, s);
      CHECK((implied_noise(x_t, x0, t, s) - eps).cwiseAbs().maxCoeff() <= 1e-12);
      const Vector x_s = ddim_step(x_t, x0, t, target, s, 0.0);
      CHECK((x_s - forward_noise(x0, target, eps, s)).cwiseAbs().maxCoeff() <= 1e-12);
    }
  }

  TEST_CASE("ddim step is invertible with a consistent prediction") {
    const auto s = make_schedule(500);
    Rng rng(3);
    for (int rep = 0; rep < 50; ++rep) {
      const Vector x_t = standard_normal_vector(rng, 6);
      const Vector x0_hat = standard_normal_vector(rng, 6);
      const auto t = 1 + uniform_index(rng, 500);
      const auto u = 1 + uniform_index(rng, 500);
      const Vector x_u = ddim_step(x_t, x0_hat, t, u, s, 0.0);
      CHECK((ddim_step(x_u, x0_hat, u, t, s, 0.0) - x_t).cwiseAbs().maxCoeff() <= 1e-9);
    }
  }

  TEST_CASE("substep grid spans both ends evenly") {
    const auto g = substep_grid(500, 50);
    REQUIRE(g.size() == 51);
    CHECK(g.front() == 0);
    CHECK(g.back() == 500);
    for (std::size_t k = 0; k < g.size(); ++k) CHECK(g[k] == 10 * k);
    const auto odd = substep_grid(10, 3);
    CHECK(odd == std::vector<std::size_t>{0, 3, 7, 10});
    CHECK_THROWS_AS(substep_grid(10, 0), Error);
    CHECK_THROWS_AS(substep_grid(10, 11), Error);
  }

  TEST_CASE("encode with a constant oracle ends at scaled input") {
    const auto s = make_schedule(500);
    Vector x(3);
    x << 0.2, 0.7, 1.0;
    const DenoiserFn constant = [&x](const Vector&, std::size_t) { return x; };
    const Vector latent = ode_encode(constant, x, {50, 0.0}, s);
    CHECK((latent - std::sqrt(s.alpha_bar[500]) * x).cwiseAbs().maxCoeff() <= 1e-12);
  }

  TEST_CASE("encode matches a scalar unrolling of the recursion") {
    const auto sched = make_schedule(200);
    const auto abar = scalar_alpha_bar(200);
    auto f = [](double x, std::size_t t) { return 0.8 * std::tanh(x) + 0.05 + 1e-3 * double(t); };
    const DenoiserFn model = [&f](const Vector& x, std::size_t t) {
      Vector out(x.size());
      for (Eigen::Index i = 0; i < x.size(); ++i) out[i] = f(x[i], t);
      return out;
    };
    Rng rng(4);
    for (std::size_t steps : {1u, 7u, 20u, 200u})
      for (std::size_t iters : {0u, 3u, 10u}) {
        const Vector x = standard_normal_vector(rng, 4);
        const Vector latent = ode_encode(model, x, {steps, 0.0, iters}, sched);
        std::vector<std::size_t> grid;
        for (std::size_t k = 0; k <= steps; ++k) grid.push_back(std::size_t(std::llround(double(k) * 200.0 / double(steps))));
        for (Eigen::Index i = 0; i < x.size(); ++i) {
          const double root = std::sqrt(abar[grid[1]]);
          double state = root * x[i];
          for (std::size_t it = 0; it < iters; ++it) state += root * (x[i] - f(state, grid[1]));
          for (std::size_t k = 1; k < steps; ++k) {
            const double a = abar[grid[k]], b = abar[grid[k + 1]];
            const double x0 = f(state, grid[k]);
            const double eps = (state - std::sqrt(a) * x0) / std::sqrt(1 - a);
            state = std::sqrt(b) * x0 + std::sqrt(1 - b) * eps;
          }
          CHECK(std::abs(latent[i] - state) <= 1e-12 * std::max(1.0, std::abs(state)));
        }
      }
  }

  TEST_CASE("single-substep decode returns the prediction at T") {
    const auto s = make_schedule(50);
    const DenoiserFn model = [](const Vector& x, std::size_t t) { return Vector(x * 0.5 + Vector::Constant(x.size(), double(t))); };
    Vector latent(2);
    latent << 1.0, -2.0;
    const Vector out = ode_decode(model, latent, {1, 0.0}, s);
    CHECK((out - model(latent, 50)).cwiseAbs().maxCoeff() == 0.0);
  }

  TEST_CASE("encode and decode are deterministic and require eta zero") {
    const auto s = make_schedule(100);
    const auto model = gaussian_oracle(s, 0.4, 0.2);
    Rng rng(5);
    const Vector x = standard_normal_vector(rng, 8);
    const Vector l1 = ode_encode(model, x, {20, 0.0}, s);
    const Vector l2 = ode_encode(model, x, {20, 0.0}, s);
    CHECK(l1 == l2);
    CHECK(ode_decode(model, l1, {20, 0.0}, s) == ode_decode(model, l2, {20, 0.0}, s));
    CHECK_THROWS_AS(ode_encode(model, x, {20, 0.5}, s), Error);
    CHECK_THROWS_AS(ode_decode(model, x, {20, 0.5}, s), Error);
  }

  TEST_CASE("round trip through the Gaussian posterior-mean denoiser") {
    const auto s = make_schedule(500);
    Rng rng(6);
    for (int rep = 0; rep < 5; ++rep) {
      const double m = uniform01(rng), sd = 0.1 + 0.3 * uniform01(rng);
      const auto model = gaussian_oracle(s, m, sd);
      Vector x(40);
      for (Eigen::Index i = 0; i < 40; ++i) x[i] = m + sd * standard_normal(rng);
      const double e50 = mae(ode_decode(model, ode_encode(model, x, {50, 0.0}, s), {50, 0.0}, s), x);
      const double e500 = mae(ode_decode(model, ode_encode(model, x, {500, 0.0}, s), {500, 0.0}, s), x);
      INFO("e50=" << e50 << " e500=" << e500);
      CHECK(e50 <= 0.05);
      CHECK(e500 <= 0.005);
      CHECK(e500 < e50);
    }
  }

  TEST_CASE("decoding noise with the exact mixture denoiser reproduces both modes") {
    const auto s = make_schedule(500);
    const auto model = mixture_oracle(s, 0.2, 0.8, 0.05);
    Rng rng(7);
    const Vector out = ode_decode(model, standard_normal_vector(rng, 4000), {50, 0.0}, s);
    const auto near = [&](double c) { return ((out.array() - c).abs() < 0.15).cast<double>().mean(); };
    INFO("low " << near(0.2) << " high " << near(0.8));
    CHECK(near(0.2) == doctest::Approx(0.5).epsilon(0.1));
    CHECK(near(0.8) == doctest::Approx(0.5).epsilon(0.1));
    CHECK(near(0.5) < 0.02);
  }
}
