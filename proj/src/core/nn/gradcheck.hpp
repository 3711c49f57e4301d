#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>

#include "nn/tape.hpp"

namespace unlasting::nn {

// Evaluates the loss at the current parameter values. When `grads` is non-null it must also
// accumulate the analytic gradient into it.
using LossFn = std::function<double(const ParameterSet& params, Gradients* grads)>;

struct GradCheckOptions {
  std::size_t coordinates = 200;
  double step = 1e-5;
  double floor = 1e-6;  // denominator floor for relative error
  std::uint64_t seed = 0;
  // Replace coordinates whose +step and -step evaluations sit on different sides of a kink.
  bool skip_kinks = true;
  // Applied to the analytic gradient before comparison (fault injection in tests).
  std::function<void(Gradients&)> corrupt;
};

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  std::size_t skipped_kinks = 0;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

// Central differences on a random subsample of scalars (all of them if fewer exist). A difference
// taken across a nonsmooth point measures neither one-sided slope, so such coordinates are
// replaced by further random ones when `skip_kinks` is set.
// Parameters are restored exactly afterwards.
GradCheckResult grad_check(const LossFn& loss, ParameterSet& params, const GradCheckOptions& opts = {});

}  // namespace unlasting::nn
