#pragma once

#include <vector>

#include "ldyn/autograd.hpp"

namespace ldyn {

struct LossConfig {
  double eps1 = 1e-4;  // inside the square root of the batch variance
  double eps2 = 1e-4;  // added to the standard deviation before the reciprocal
  double w_var = 1.0;
  double w_inv = 25.0;
  double w_cov = 1.0;
  double w_xcov = 1.0;

  void validate() const;
};

/// Per-species weights for the weighted MSE; non-negative with positive sum.
struct WmseWeights {
  std::vector<double> w;

  static WmseWeights uniform(std::size_t channels) { return {std::vector<double>(channels, 1.0)}; }
  void validate() const;
};

/// Mean over (step, feature) of 1 / (sqrt(unbiased batch variance + eps1) + eps2).
/// embeddings: [N × steps × D], N ≥ 2.
template <class T>
Var<T> variance_loss(const Var<T>& embeddings, double eps1, double eps2);

/// (1 / (steps·N)) Σ ‖target − predicted‖², both [N × steps × D].
template <class T>
Var<T> invariance_loss(const Var<T>& target, const Var<T>& predicted);

/// (1/steps) Σ_steps Σ_{i<j} C_ij², with C the centred feature covariance
/// XᵀX/(N−1) of each step. embeddings: [N × steps × D].
template <class T>
Var<T> covariance_loss(const Var<T>& embeddings);

/// (1/D) ‖(z − z̄)ᵀ(s − s̄)/(N−1)‖²_F with z, s both [N × D].
template <class T>
Var<T> cross_covariance_loss(const Var<T>& z, const Var<T>& s);

template <class T>
struct LossTerms {
  Var<T> variance;
  Var<T> invariance;
  Var<T> covariance;
  Var<T> cross_covariance;
  Var<T> total;
};

/// Weighted sum of the four terms. Terms with zero weight are still
/// evaluated so the breakdown is always complete.
template <class T>
LossTerms<T> composite_loss(const Var<T>& target_embeddings, const Var<T>& predicted_embeddings,
                            const Var<T>& latent_inputs, const Var<T>& latent_states, const LossConfig& cfg);

/// Per-channel MSE of x vs x̃, both [T × K].
std::vector<double> per_channel_mse(const Tensor<float>& actual, const Tensor<float>& predicted);
std::vector<double> per_channel_mse(const Tensor<double>& actual, const Tensor<double>& predicted);

/// Σ_k w_k·MSE_k / Σ_k w_k.
double wmse(const Tensor<float>& actual, const Tensor<float>& predicted, const WmseWeights& weights);
double wmse(const Tensor<double>& actual, const Tensor<double>& predicted, const WmseWeights& weights);

/// Differentiable weighted MSE used as a training objective; both [T × K].
template <class T>
Var<T> wmse_loss(const Var<T>& predicted, const Var<T>& target, const WmseWeights& weights);

}  // namespace ldyn
