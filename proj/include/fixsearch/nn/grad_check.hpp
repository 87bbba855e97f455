#ifndef FIXSEARCH_NN_GRAD_CHECK_HPP
#define FIXSEARCH_NN_GRAD_CHECK_HPP

#include <functional>
#include <string>
#include <vector>

#include "fixsearch/nn/tensor.hpp"

namespace fixsearch::nn {

struct GradCheckReport {
  double max_rel_err = 0.0;
  std::size_t checked = 0;
  bool pass = false;
  std::string worst;  // "input[i] coord k: analytic a vs numeric n"
};

/// Compares analytic gradients of a scalar-valued function against central
/// finite differences on a random subsample of input coordinates.
///
/// fn must be pure (re-runnable on the same inputs). Every input tensor is
/// treated as differentiable. Relative error uses max(|a|,|n|,1e-6) in the
/// denominator so near-zero gradients compare absolutely.
inline GradCheckReport grad_check(const std::function<Tensor(const std::vector<Tensor>&)>& fn,
                                  std::vector<Tensor> inputs, std::size_t samples = 100,
                                  double h = 1e-5, double tolerance = 1e-4,
                                  std::uint64_t seed = 0) {
  for (auto& t : inputs) {
    t.set_requires_grad(true);
    t.zero_grad();
  }
  Tensor loss = fn(inputs);
  if (loss.numel() != 1) throw UsageError("grad_check: fn must return a scalar");
  loss.backward();
  std::vector<std::vector<double>> analytic;
  analytic.reserve(inputs.size());
  for (auto& t : inputs) analytic.push_back(t.grad());

  std::int64_t total_coords = 0;
  for (const auto& t : inputs) total_coords += t.numel();
  samples = std::min<std::size_t>(samples, static_cast<std::size_t>(total_coords));

  Rng rng(seed);
  GradCheckReport report;
  report.checked = samples;
  for (std::size_t s = 0; s < samples; ++s) {
    std::int64_t flat = static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(total_coords)));
    std::size_t which = 0;
    while (flat >= inputs[which].numel()) {
      flat -= inputs[which].numel();
      ++which;
    }
    auto& vals = inputs[which].values();
    const std::size_t k = static_cast<std::size_t>(flat);
    const double saved = vals[k];

    double plus, minus;
    {
      NoGradGuard guard;
      vals[k] = saved + h;
      plus = fn(inputs).item();
      vals[k] = saved - h;
      minus = fn(inputs).item();
      vals[k] = saved;
    }
    const double numeric = (plus - minus) / (2.0 * h);
    const double a = analytic[which][k];
    const double denom = std::max({std::abs(a), std::abs(numeric), 1e-6});
    const double rel = std::abs(a - numeric) / denom;
    if (rel > report.max_rel_err) {
      report.max_rel_err = rel;
      report.worst = "input[" + std::to_string(which) + "] coord " + std::to_string(k) +
                     ": analytic " + format_double(a) + " vs numeric " + format_double(numeric);
    }
  }
  report.pass = report.max_rel_err < tolerance;
  return report;
}

}  // namespace fixsearch::nn

#endif  // FIXSEARCH_NN_GRAD_CHECK_HPP
