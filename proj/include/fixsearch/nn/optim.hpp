#ifndef FIXSEARCH_NN_OPTIM_HPP
#define FIXSEARCH_NN_OPTIM_HPP

#include <cmath>
#include <vector>

#include "fixsearch/nn/tensor.hpp"

namespace fixsearch::nn {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Standard Adam with bias correction. Moment buffers are owned here, one pair
/// per parameter, and the update is fully deterministic.
class Adam {
 public:
  Adam(std::vector<Tensor> params, AdamConfig cfg = {}) : cfg_(cfg), params_(std::move(params)) {
    m_.resize(params_.size());
    v_.resize(params_.size());
    for (std::size_t i = 0; i < params_.size(); ++i) {
      if (!params_[i].requires_grad())
        throw UsageError("Adam: parameter " + std::to_string(i) + " does not require grad");
      m_[i].assign(params_[i].values().size(), 0.0);
      v_[i].assign(params_[i].values().size(), 0.0);
    }
  }

  std::int64_t step_count() const { return t_; }
  const AdamConfig& config() const { return cfg_; }

  void step() {
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (std::size_t i = 0; i < params_.size(); ++i) {
      auto& p = params_[i];
      if (!p.has_grad())
        throw UsageError("Adam: parameter " + std::to_string(i) + " has no gradient");
      auto& vals = p.values();
      const auto& g = p.grad();
      auto& m = m_[i];
      auto& v = v_[i];
      for (std::size_t k = 0; k < vals.size(); ++k) {
        m[k] = cfg_.beta1 * m[k] + (1.0 - cfg_.beta1) * g[k];
        v[k] = cfg_.beta2 * v[k] + (1.0 - cfg_.beta2) * g[k] * g[k];
        const double m_hat = m[k] / bc1;
        const double v_hat = v[k] / bc2;
        vals[k] -= cfg_.lr * m_hat / (std::sqrt(v_hat) + cfg_.epsilon);
      }
    }
  }

  void zero_grad() {
    for (auto& p : params_) p.zero_grad();
  }

 private:
  AdamConfig cfg_;
  std::vector<Tensor> params_;
  std::vector<std::vector<double>> m_, v_;
  std::int64_t t_ = 0;
};

}  // namespace fixsearch::nn

#endif  // FIXSEARCH_NN_OPTIM_HPP
