#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

namespace criticsmc {

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Adam over a flat parameter vector with the standard bias correction. With
/// learning_rate == 0 the parameters are bit-identical after any number of
/// steps (moments still update, so a later nonzero rate resumes warm).
class AdamOptimizer {
 public:
  AdamOptimizer(std::size_t n, AdamConfig cfg = {})
      : cfg_(cfg), m_(n, 0.0), v_(n, 0.0) {
    if (!(cfg.learning_rate >= 0.0) || !(cfg.beta1 >= 0.0 && cfg.beta1 < 1.0) ||
        !(cfg.beta2 >= 0.0 && cfg.beta2 < 1.0) || !(cfg.epsilon > 0.0)) {
      throw std::invalid_argument("AdamOptimizer: invalid configuration");
    }
  }

  std::size_t size() const { return m_.size(); }
  std::size_t steps_taken() const { return t_; }

  void step(std::span<double> params, std::span<const double> grads) {
    if (params.size() != m_.size() || grads.size() != m_.size()) {
      throw std::invalid_argument("AdamOptimizer::step: size mismatch");
    }
    ++t_;
    const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    const double scale = cfg_.learning_rate / c1;
    for (std::size_t i = 0; i < m_.size(); ++i) {
      const double g = grads[i];
      m_[i] = cfg_.beta1 * m_[i] + (1.0 - cfg_.beta1) * g;
      v_[i] = cfg_.beta2 * v_[i] + (1.0 - cfg_.beta2) * g * g;
      params[i] -= scale * m_[i] / (std::sqrt(v_[i] / c2) + cfg_.epsilon);
    }
  }

 private:
  AdamConfig cfg_;
  std::vector<double> m_, v_;
  std::size_t t_ = 0;
};

}  // namespace criticsmc
