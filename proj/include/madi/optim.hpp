#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "madi/tensor.hpp"

namespace madi {

// Warmup-then-decay schedule: base_lr * min(step^-1/2, step * warmup^-3/2).
inline double noam_lr(std::size_t step, double base_lr,
                      std::size_t warmup_steps) {
  if (step == 0) throw std::invalid_argument("noam_lr: step must be >= 1");
  if (base_lr <= 0.0 || warmup_steps == 0)
    throw std::invalid_argument("noam_lr: bad hyperparameters");
  double s = static_cast<double>(step);
  double w = static_cast<double>(warmup_steps);
  return base_lr * std::min(1.0 / std::sqrt(s), s / (w * std::sqrt(w)));
}

struct AdamConfig {
  double base_lr = 1.0;
  std::size_t warmup_steps = 500;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// Adam with bias correction, learning rate driven by noam_lr.
class AdamOptimizer {
 public:
  AdamOptimizer(std::vector<Tensor> params, AdamConfig cfg = {})
      : params_(std::move(params)), cfg_(cfg) {
    for (const auto& p : params_) {
      m_.emplace_back(p.size(), 0.0);
      v_.emplace_back(p.size(), 0.0);
    }
  }

  std::size_t step_count() const { return step_; }
  double current_lr() const {
    return step_ == 0 ? 0.0 : noam_lr(step_, cfg_.base_lr, cfg_.warmup_steps);
  }

  // Applies one update from the grads currently held by the parameters,
  // then clears them.
  void step() {
    ++step_;
    double lr = noam_lr(step_, cfg_.base_lr, cfg_.warmup_steps);
    double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_));
    double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_));
    for (std::size_t k = 0; k < params_.size(); ++k) {
      auto& p = params_[k].values();
      if (!params_[k].node()->grad.empty() &&
          params_[k].node()->grad.size() != p.size())
        throw std::invalid_argument("adam_step: grad/param shape mismatch");
      auto& g = params_[k].grad();
      for (std::size_t i = 0; i < p.size(); ++i) {
        m_[k][i] = cfg_.beta1 * m_[k][i] + (1.0 - cfg_.beta1) * g[i];
        v_[k][i] = cfg_.beta2 * v_[k][i] + (1.0 - cfg_.beta2) * g[i] * g[i];
        double mhat = m_[k][i] / bc1;
        double vhat = v_[k][i] / bc2;
        p[i] -= lr * mhat / (std::sqrt(vhat) + cfg_.epsilon);
      }
    }
    zero_grad();
  }

  void zero_grad() {
    for (auto& p : params_) p.zero_grad();
  }

 private:
  std::vector<Tensor> params_;
  AdamConfig cfg_;
  std::vector<std::vector<double>> m_, v_;
  std::size_t step_ = 0;
};

}  // namespace madi
