#include "diffusion.hpp"

#include <cmath>
#include <string>

namespace unlasting::diffusion {

DiffusionSchedule make_schedule(std::size_t T) {
  require(T >= 1, ErrorCode::argument, "make_schedule: T must be >= 1");
  constexpr double beta_start = 1e-4;
  constexpr double beta_end = 0.02;
  DiffusionSchedule s;
  s.T = T;
  s.alpha_bar.resize(static_cast<Eigen::Index>(T + 1));
  s.alpha_bar[0] = 1.0;
  for (std::size_t t = 1; t <= T; ++t) {
    const double frac = T == 1 ? 0.0 : static_cast<double>(t - 1) / static_cast<double>(T - 1);
    const double beta = beta_start + (beta_end - beta_start) * frac;
    s.alpha_bar[static_cast<Eigen::Index>(t)] = s.alpha_bar[static_cast<Eigen::Index>(t - 1)] * (1.0 - beta);
  }
  return s;
}

namespace {

double abar(const DiffusionSchedule& sched, std::size_t t) {
  require(t <= sched.T, ErrorCode::argument,
          "diffusion step " + std::to_string(t) + " outside [0, " + std::to_string(sched.T) + "]");
  return sched.alpha_bar[static_cast<Eigen::Index>(t)];
}

}  // namespace

Vector forward_noise(const Vector& x0, std::size_t t, const Vector& eps, const DiffusionSchedule& sched) {
  require(x0.size() == eps.size(), ErrorCode::argument, "forward_noise: noise length mismatch");
  const double a = abar(sched, t);
  return std::sqrt(a) * x0 + std::sqrt(1.0 - a) * eps;
}

Vector implied_noise(const Vector& x_t, const Vector& x0_hat, std::size_t t, const DiffusionSchedule& sched) {
  require(x_t.size() == x0_hat.size(), ErrorCode::argument, "ddim: state and prediction lengths differ");
  const double a = abar(sched, t);
  require(t >= 1 && a < 1.0, ErrorCode::step_range, "ddim: cannot recover noise at step 0");
  return (x_t - std::sqrt(a) * x0_hat) / std::sqrt(1.0 - a);
}

Vector ddim_step(const Vector& x_t, const Vector& x0_hat, std::size_t t, std::size_t s,
                 const DiffusionSchedule& sched, double eta, Rng* rng) {
  require(eta >= 0.0 && std::isfinite(eta), ErrorCode::argument, "ddim_step: eta must be >= 0");
  const Vector eps_hat = implied_noise(x_t, x0_hat, t, sched);
  const double a_s = abar(sched, s);
  const double keep = 1.0 - a_s - eta * eta;
  require(keep >= 0.0, ErrorCode::argument, "ddim_step: eta too large for target step");
  Vector out = std::sqrt(a_s) * x0_hat + std::sqrt(keep) * eps_hat;
  if (eta > 0.0) {
    require(rng != nullptr, ErrorCode::argument, "ddim_step: eta > 0 needs an rng");
    out += eta * standard_normal_vector(*rng, x_t.size());
  }
  return out;
}

std::vector<std::size_t> substep_grid(std::size_t T, std::size_t num_steps) {
  require(num_steps >= 1 && num_steps <= T, ErrorCode::argument, "substep count must be in [1, T]");
  std::vector<std::size_t> grid(num_steps + 1);
  for (std::size_t k = 0; k <= num_steps; ++k) {
    grid[k] = static_cast<std::size_t>(
        std::llround(static_cast<double>(k) * static_cast<double>(T) / static_cast<double>(num_steps)));
  }
  return grid;
}

Vector ode_encode(const DenoiserFn& model, const Vector& x, const SamplerConfig& cfg, const DiffusionSchedule& sched) {
  require(cfg.eta == 0.0, ErrorCode::argument, "ode_encode requires eta = 0");
  const auto grid = substep_grid(sched.T, cfg.num_steps);
  const double root = std::sqrt(abar(sched, grid[1]));
  Vector state = root * x;
  for (std::size_t i = 0; i < cfg.inversion_iters; ++i) {
    const Vector x0_hat = model(state, grid[1]);
    require(x0_hat.size() == state.size(), ErrorCode::argument, "denoiser output length mismatch");
    state += root * (x - x0_hat);
  }
  for (std::size_t k = 1; k + 1 < grid.size(); ++k) {
    const Vector x0_hat = model(state, grid[k]);
    require(x0_hat.size() == state.size(), ErrorCode::argument, "denoiser output length mismatch");
    state = ddim_step(state, x0_hat, grid[k], grid[k + 1], sched, 0.0);
  }
  return state;
}

Vector ode_decode(const DenoiserFn& model, const Vector& x_latent, const SamplerConfig& cfg,
                  const DiffusionSchedule& sched) {
  require(cfg.eta == 0.0, ErrorCode::argument, "ode_decode requires eta = 0");
  const auto grid = substep_grid(sched.T, cfg.num_steps);
  Vector state = x_latent;
  for (std::size_t k = grid.size() - 1; k >= 1; --k) {
    const Vector x0_hat = model(state, grid[k]);
    require(x0_hat.size() == state.size(), ErrorCode::argument, "denoiser output length mismatch");
    if (k == 1) return x0_hat;  // landing on step 0 returns the prediction itself
    state = ddim_step(state, x0_hat, grid[k], grid[k - 1], sched, 0.0);
  }
  return state;
}

}  // namespace unlasting::diffusion
