#include "ldyn/optimizer.hpp"

#include <cmath>

namespace ldyn {

template <class T>
Adam<T>::Adam(std::vector<Var<T>> params, AdamConfig config) : params_(std::move(params)), config_(config) {
  if (!(config_.learning_rate > 0.0) || config_.beta1 < 0.0 || config_.beta1 >= 1.0 || config_.beta2 < 0.0 ||
      config_.beta2 >= 1.0 || !(config_.epsilon > 0.0)) {
    throw ContractError("invalid Adam hyper-parameters");
  }
  for (const auto& p : params_) {
    if (!p.defined() || !p.requires_grad()) throw ContractError("Adam parameters must be leaves requiring grad");
    m_.emplace_back(p.shape());
    v_.emplace_back(p.shape());
  }
  updates_.assign(params_.size(), 0);
}

template <class T>
void Adam<T>::step() {
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (params_[i].has_grad() && !params_[i].node()->grad.all_finite()) {
      throw NumericError("non-finite gradient for parameter tensor " + std::to_string(i) + "; step rejected");
    }
  }
  ++steps_;
  const double b1 = config_.beta1;
  const double b2 = config_.beta2;
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto& p = params_[i];
    if (!p.has_grad()) continue;
    const auto g = p.node()->grad.data();
    bool any = false;
    for (T v : g) {
      if (v != T(0)) {
        any = true;
        break;
      }
    }
    if (!any) continue;
    const auto t = static_cast<double>(++updates_[i]);
    const double c1 = 1.0 - std::pow(b1, t);
    const double c2 = 1.0 - std::pow(b2, t);
    auto w = p.mutable_value().data();
    auto m = m_[i].data();
    auto v = v_[i].data();
    for (std::size_t k = 0; k < w.size(); ++k) {
      m[k] = static_cast<T>(b1 * m[k] + (1.0 - b1) * g[k]);
      v[k] = static_cast<T>(b2 * v[k] + (1.0 - b2) * g[k] * g[k]);
      const double mhat = m[k] / c1;
      const double vhat = v[k] / c2;
      w[k] = static_cast<T>(w[k] - config_.learning_rate * mhat / (std::sqrt(vhat) + config_.epsilon));
    }
  }
}

template <class T>
void Adam<T>::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

template class Adam<float>;
template class Adam<double>;

}  // namespace ldyn
