#include "nn/adam.hpp"

#include <cmath>

namespace unlasting::nn {

AdamState AdamState::for_params(const ParameterSet& ps, double lr) {
  require(lr > 0.0 && std::isfinite(lr), ErrorCode::argument, "adam: learning rate must be positive");
  AdamState s;
  s.lr = lr;
  for (std::size_t i = 0; i < ps.size(); ++i) {
    s.first_moment.push_back(Matrix::Zero(ps.value(i).rows(), ps.value(i).cols()));
    s.second_moment.push_back(Matrix::Zero(ps.value(i).rows(), ps.value(i).cols()));
  }
  return s;
}

void adam_step(ParameterSet& params, const Gradients& grads, AdamState& state) {
  require(grads.size() == params.size() && state.first_moment.size() == params.size() &&
              state.second_moment.size() == params.size(),
          ErrorCode::argument, "adam_step: parameter, gradient and state counts differ");
  for (std::size_t i = 0; i < params.size(); ++i) {
    require(grads[i].rows() == params.value(i).rows() && grads[i].cols() == params.value(i).cols(),
            ErrorCode::argument, "adam_step: gradient shape mismatch for " + params.name(i));
  }
  require(grads.all_finite(), ErrorCode::numeric, "adam_step: non-finite gradient");

  ++state.step_count;
  const double t = static_cast<double>(state.step_count);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    Matrix& m = state.first_moment[i];
    Matrix& v = state.second_moment[i];
    m = state.beta1 * m + (1.0 - state.beta1) * grads[i];
    v = state.beta2 * v + (1.0 - state.beta2) * grads[i].cwiseProduct(grads[i]);
    params.value(i).array() -=
        state.lr * (m.array() / c1) / ((v.array() / c2).sqrt() + state.eps_adam);
  }
}

}  // namespace unlasting::nn
