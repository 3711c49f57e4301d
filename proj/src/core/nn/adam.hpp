#pragma once

#include <cstdint>
#include <vector>

#include "nn/tape.hpp"

namespace unlasting::nn {

struct AdamState {
  std::vector<Matrix> first_moment;
  std::vector<Matrix> second_moment;
  std::uint64_t step_count = 0;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps_adam = 1e-8;

  static AdamState for_params(const ParameterSet& ps, double lr);
};

// Bias-corrected Adam. Throws numeric before touching anything if a gradient is non-finite.
void adam_step(ParameterSet& params, const Gradients& grads, AdamState& state);

}  // namespace unlasting::nn
