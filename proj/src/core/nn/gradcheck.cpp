#include "nn/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "rng.hpp"

namespace unlasting::nn {

GradCheckResult grad_check(const LossFn& loss, ParameterSet& params, const GradCheckOptions& opts) {
  require(opts.step > 0.0, ErrorCode::argument, "grad_check: step must be positive");
  Gradients analytic(params);
  (void)loss(params, &analytic);
  if (opts.corrupt) opts.corrupt(analytic);

  const std::size_t total = params.scalar_count();
  std::vector<std::size_t> order(total);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(opts.seed);

  auto evaluate = [&](double value, double& p, std::uint64_t& signature) {
    p = value;
    KinkProbe probe;
    const double l = loss(params, nullptr);
    signature = probe.signature();
    return l;
  };

  GradCheckResult result;
  for (std::size_t k = 0; k < total && result.checked < opts.coordinates; ++k) {
    std::swap(order[k], order[k + uniform_index(rng, total - k)]);
    const std::size_t idx = order[k];
    double& p = params.scalar(idx);
    const double saved = p;
    std::uint64_t sig_up = 0, sig_down = 0;
    const double up = evaluate(saved + opts.step, p, sig_up);
    const double down = evaluate(saved - opts.step, p, sig_down);
    p = saved;
    if (opts.skip_kinks && sig_up != sig_down) {
      ++result.skipped_kinks;
      continue;
    }
    const double numeric = (up - down) / (2.0 * opts.step);
    const double a = analytic.scalar(idx);
    const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), opts.floor});
    ++result.checked;
    if (rel > result.max_rel_error || !std::isfinite(rel)) {
      result.max_rel_error = std::isfinite(rel) ? rel : std::numeric_limits<double>::infinity();
      result.worst_index = idx;
      result.worst_analytic = a;
      result.worst_numeric = numeric;
    }
  }
  return result;
}

}  // namespace unlasting::nn
