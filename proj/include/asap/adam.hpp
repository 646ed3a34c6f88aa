#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "asap/tensor.hpp"

namespace asap {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// Bias-corrected Adam:
//   m <- b1 m + (1-b1) g,  v <- b2 v + (1-b2) g^2
//   p <- p - lr * (m / (1-b1^t)) / (sqrt(v / (1-b2^t)) + eps)
// A tensor whose gradient has always been zero is never moved.
class Adam {
 public:
  Adam() = default;
  Adam(AdamConfig config, std::span<const ConstTensorRef> shapes);

  void step(std::span<const TensorRef> params, std::span<const ConstTensorRef> grads,
            double learning_rate);

  const AdamConfig& config() const { return config_; }
  std::int64_t steps() const { return steps_; }
  std::vector<Matrix>& first_moments() { return m_; }
  std::vector<Matrix>& second_moments() { return v_; }
  const std::vector<Matrix>& first_moments() const { return m_; }
  const std::vector<Matrix>& second_moments() const { return v_; }
  void set_steps(std::int64_t steps) { steps_ = steps; }

 private:
  AdamConfig config_;
  std::int64_t steps_ = 0;
  std::vector<Matrix> m_;
  std::vector<Matrix> v_;
};

}  // namespace asap
