#pragma once

#include <cstdint>
#include <vector>

#include "ldyn/autograd.hpp"

namespace ldyn {

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// Adaptive-moment optimizer with bias correction.
//
// A parameter tensor whose gradient is identically zero is left untouched
// and its moments are not decayed, so zero gradients are always the
// identity on parameters.
template <class T>
class Adam {
 public:
  Adam(std::vector<Var<T>> params, AdamConfig config = {});

  /// Applies one update from the accumulated gradients. Throws NumericError
  /// without modifying anything when any gradient is non-finite.
  void step();
  void zero_grad();

  std::uint64_t step_count() const { return steps_; }
  const AdamConfig& config() const { return config_; }
  const std::vector<Tensor<T>>& first_moments() const { return m_; }
  const std::vector<Tensor<T>>& second_moments() const { return v_; }

 private:
  std::vector<Var<T>> params_;
  AdamConfig config_;
  std::vector<Tensor<T>> m_;
  std::vector<Tensor<T>> v_;
  std::vector<std::uint64_t> updates_;  // per-tensor update count for bias correction
  std::uint64_t steps_ = 0;
};

extern template class Adam<float>;
extern template class Adam<double>;

}  // namespace ldyn
