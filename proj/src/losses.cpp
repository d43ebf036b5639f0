#include "ldyn/losses.hpp"

#include <cmath>

namespace ldyn {

void LossConfig::validate() const {
  if (!(eps1 > 0.0) || !(eps2 > 0.0)) throw ContractError("loss slack eps1 and eps2 must be positive");
  if (w_var < 0.0 || w_cov < 0.0 || w_xcov < 0.0) throw ContractError("loss weights must be non-negative");
  if (!(w_inv > 0.0)) throw ContractError("invariance weight must be positive");
}

void WmseWeights::validate() const {
  double total = 0.0;
  for (double v : w) {
    if (!(v >= 0.0)) throw ContractError("WMSE weights must be non-negative");
    total += v;
  }
  if (!(total > 0.0)) throw ContractError("WMSE weights must have a positive sum");
}

namespace {

template <class T>
void require_batch3(const Var<T>& x, const char* op) {
  if (x.value().rank() != 3) {
    throw DimensionError(std::string(op) + " expects [N x steps x D], got " + to_string(x.shape()));
  }
  if (x.dim(0) < 2) throw ContractError(std::string(op) + " needs a batch of at least 2 samples");
}

// [N × steps × D] -> [N × steps·D] so each step is a column block.
template <class T>
Var<T> flatten_steps(const Var<T>& x) {
  return reshape(x, Shape{x.dim(0), x.dim(1) * x.dim(2)});
}

template <class T>
Var<T> strict_upper_mask(std::size_t d) {
  Tensor<T> mask(Shape{d, d});
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = i + 1; j < d; ++j) mask.at(i, j) = T(1);
  return Var<T>(std::move(mask));
}

}  // namespace

template <class T>
Var<T> variance_loss(const Var<T>& embeddings, double eps1, double eps2) {
  require_batch3(embeddings, "variance_loss");
  const std::size_t n = embeddings.dim(0);
  const Var<T> centred = center_columns(flatten_steps(embeddings));
  const Var<T> var = scale(sum_rows(square(centred)), T(1) / static_cast<T>(n - 1));
  const Var<T> sigma = ldyn::sqrt(add_scalar(var, static_cast<T>(eps1)));
  return mean(reciprocal(add_scalar(sigma, static_cast<T>(eps2))));
}

template <class T>
Var<T> invariance_loss(const Var<T>& target, const Var<T>& predicted) {
  if (target.shape() != predicted.shape()) {
    throw DimensionError("invariance_loss: shape mismatch " + to_string(target.shape()) + " vs " +
                         to_string(predicted.shape()));
  }
  if (target.value().rank() != 3) {
    throw DimensionError("invariance_loss expects [N x steps x D], got " + to_string(target.shape()));
  }
  const auto denom = static_cast<T>(target.dim(0) * target.dim(1));
  return scale(sum(square(sub(target, predicted))), T(1) / denom);
}

template <class T>
Var<T> covariance_loss(const Var<T>& embeddings) {
  require_batch3(embeddings, "covariance_loss");
  const std::size_t n = embeddings.dim(0);
  const std::size_t steps = embeddings.dim(1);
  const std::size_t d = embeddings.dim(2);
  const Var<T> flat = flatten_steps(embeddings);
  const Var<T> mask = strict_upper_mask<T>(d);
  std::vector<Var<T>> per_step;
  for (std::size_t k = 0; k < steps; ++k) {
    const Var<T> x = center_columns(slice_cols(flat, k * d, (k + 1) * d));
    const Var<T> cov = scale(matmul(transpose(x), x), T(1) / static_cast<T>(n - 1));
    per_step.push_back(sum(mul(square(cov), mask)));
  }
  Var<T> total = per_step.front();
  for (std::size_t k = 1; k < per_step.size(); ++k) total = add(total, per_step[k]);
  return scale(total, T(1) / static_cast<T>(steps));
}

template <class T>
Var<T> cross_covariance_loss(const Var<T>& z, const Var<T>& s) {
  if (z.shape() != s.shape() || z.value().rank() != 2) {
    throw DimensionError("cross_covariance_loss expects equal [N x D] operands, got " + to_string(z.shape()) +
                         " and " + to_string(s.shape()));
  }
  const std::size_t n = z.dim(0);
  if (n < 2) throw ContractError("cross_covariance_loss needs a batch of at least 2 samples");
  const Var<T> cross = scale(matmul(transpose(center_columns(z)), center_columns(s)), T(1) / static_cast<T>(n - 1));
  return scale(sum(square(cross)), T(1) / static_cast<T>(z.dim(1)));
}

template <class T>
LossTerms<T> composite_loss(const Var<T>& target_embeddings, const Var<T>& predicted_embeddings,
                            const Var<T>& latent_inputs, const Var<T>& latent_states, const LossConfig& cfg) {
  cfg.validate();
  if (target_embeddings.value().rank() != 3 || target_embeddings.dim(1) < 2) {
    throw DimensionError("composite_loss expects target embeddings [N x T_f x D] with T_f >= 2, got " +
                         to_string(target_embeddings.shape()));
  }
  const std::size_t n = target_embeddings.dim(0);
  const std::size_t tf = target_embeddings.dim(1);
  const std::size_t d = target_embeddings.dim(2);
  if (predicted_embeddings.shape() != Shape{n, tf - 1, d}) {
    throw DimensionError("composite_loss: predictions " + to_string(predicted_embeddings.shape()) +
                         " do not cover the T_f-1 transitions of " + to_string(target_embeddings.shape()));
  }
  // The first T_f-1 target entries are the states the rollout predicts.
  const Var<T> matched =
      reshape(slice_cols(reshape(target_embeddings, Shape{n, tf * d}), 0, (tf - 1) * d), Shape{n, tf - 1, d});

  LossTerms<T> terms;
  terms.variance = variance_loss(target_embeddings, cfg.eps1, cfg.eps2);
  terms.invariance = invariance_loss(matched, predicted_embeddings);
  terms.covariance = covariance_loss(target_embeddings);
  terms.cross_covariance = cross_covariance_loss(latent_inputs, latent_states);
  terms.total = add(add(scale(terms.variance, static_cast<T>(cfg.w_var)),
                        scale(terms.invariance, static_cast<T>(cfg.w_inv))),
                    add(scale(terms.covariance, static_cast<T>(cfg.w_cov)),
                        scale(terms.cross_covariance, static_cast<T>(cfg.w_xcov))));
  return terms;
}

namespace {

template <class T>
std::vector<double> channel_mse(const Tensor<T>& actual, const Tensor<T>& predicted) {
  if (actual.shape() != predicted.shape() || actual.rank() != 2) {
    throw DimensionError("MSE expects equal [T x K] operands, got " + to_string(actual.shape()) + " and " +
                         to_string(predicted.shape()));
  }
  const std::size_t rows = actual.dim(0);
  const std::size_t cols = actual.dim(1);
  std::vector<double> out(cols, 0.0);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) {
      const double diff = static_cast<double>(actual.at(r, c)) - static_cast<double>(predicted.at(r, c));
      out[c] += diff * diff;
    }
  for (auto& v : out) v /= static_cast<double>(rows);
  return out;
}

double weighted(const std::vector<double>& mse, const WmseWeights& weights) {
  weights.validate();
  if (weights.w.size() != mse.size()) {
    throw DimensionError("WMSE has " + std::to_string(weights.w.size()) + " weights for " +
                         std::to_string(mse.size()) + " channels");
  }
  double num = 0.0;
  double den = 0.0;
  for (std::size_t k = 0; k < mse.size(); ++k) {
    num += weights.w[k] * mse[k];
    den += weights.w[k];
  }
  return num / den;
}

}  // namespace

std::vector<double> per_channel_mse(const Tensor<float>& a, const Tensor<float>& p) { return channel_mse(a, p); }
std::vector<double> per_channel_mse(const Tensor<double>& a, const Tensor<double>& p) { return channel_mse(a, p); }

double wmse(const Tensor<float>& a, const Tensor<float>& p, const WmseWeights& w) {
  return weighted(channel_mse(a, p), w);
}
double wmse(const Tensor<double>& a, const Tensor<double>& p, const WmseWeights& w) {
  return weighted(channel_mse(a, p), w);
}

template <class T>
Var<T> wmse_loss(const Var<T>& predicted, const Var<T>& target, const WmseWeights& weights) {
  weights.validate();
  if (predicted.shape() != target.shape() || predicted.value().rank() != 2) {
    throw DimensionError("wmse_loss expects equal [T x K] operands, got " + to_string(predicted.shape()) +
                         " and " + to_string(target.shape()));
  }
  const std::size_t rows = predicted.dim(0);
  const std::size_t cols = predicted.dim(1);
  if (weights.w.size() != cols) throw DimensionError("wmse_loss weight count does not match channel count");
  double total = 0.0;
  for (double v : weights.w) total += v;
  Tensor<T> row_weights(Shape{1, cols});
  for (std::size_t k = 0; k < cols; ++k) row_weights[k] = static_cast<T>(weights.w[k] / (total * rows));
  const Var<T> per_channel = sum_rows(square(sub(predicted, target)));
  return sum(mul(per_channel, Var<T>(std::move(row_weights))));
}

#define LDYN_INSTANTIATE(T)                                                                             \
  template Var<T> variance_loss<T>(const Var<T>&, double, double);                                      \
  template Var<T> invariance_loss<T>(const Var<T>&, const Var<T>&);                                     \
  template Var<T> covariance_loss<T>(const Var<T>&);                                                    \
  template Var<T> cross_covariance_loss<T>(const Var<T>&, const Var<T>&);                               \
  template LossTerms<T> composite_loss<T>(const Var<T>&, const Var<T>&, const Var<T>&, const Var<T>&,   \
                                          const LossConfig&);                                           \
  template Var<T> wmse_loss<T>(const Var<T>&, const Var<T>&, const WmseWeights&);

LDYN_INSTANTIATE(float)
LDYN_INSTANTIATE(double)

#undef LDYN_INSTANTIATE

}  // namespace ldyn
