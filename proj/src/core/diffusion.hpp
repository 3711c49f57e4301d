#pragma once

#include <cstddef>
#include <functional>
#include <vector>

#include <Eigen/Dense>

#include "error.hpp"
#include "rng.hpp"

namespace unlasting::diffusion {

using Vector = Eigen::VectorXd;

struct DiffusionSchedule {
  std::size_t T = 0;
  Vector alpha_bar;  // length T + 1, alpha_bar[0] = 1
};

// Linear beta from 1e-4 to 0.02 over steps 1..T.
DiffusionSchedule make_schedule(std::size_t T);

Vector forward_noise(const Vector& x0, std::size_t t, const Vector& eps, const DiffusionSchedule& sched);

// Noise implied by an x0 prediction at step t (t >= 1).
Vector implied_noise(const Vector& x_t, const Vector& x0_hat, std::size_t t, const DiffusionSchedule& sched);

// One DDIM move from step t to step s given an x0 prediction made at t. `rng` is only used when eta > 0.
Vector ddim_step(const Vector& x_t, const Vector& x0_hat, std::size_t t, std::size_t s,
                 const DiffusionSchedule& sched, double eta, Rng* rng = nullptr);

struct SamplerConfig {
  std::size_t num_steps = 50;
  double eta = 0.0;
  // Fixed-point refinements of the first encode move (0 keeps the plain sqrt(abar) scaling).
  std::size_t inversion_iters = 10;
};

// num_steps + 1 evenly spaced steps from 0 to T, both ends included.
std::vector<std::size_t> substep_grid(std::size_t T, std::size_t num_steps);

// x0 prediction for a noisy state at step t, conditioning bound inside.
using DenoiserFn = std::function<Vector(const Vector& x_t, std::size_t t)>;

// Deterministic inversion 0 -> T. The first move starts from clean data, where no noise is
// implied; the state at the first substep is found by iterating z += sqrt(abar) (x - model(z))
// so that decoding's final projection lands back on x.
Vector ode_encode(const DenoiserFn& model, const Vector& x, const SamplerConfig& cfg, const DiffusionSchedule& sched);

// Deterministic generation T -> 0.
Vector ode_decode(const DenoiserFn& model, const Vector& x_latent, const SamplerConfig& cfg,
                  const DiffusionSchedule& sched);

}  // namespace unlasting::diffusion
