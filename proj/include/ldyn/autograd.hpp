#pragma once

// Tape-based reverse-mode differentiation over Tensor values. Only the
// operations the models and losses in this project need are provided.

#include <functional>
#include <memory>
#include <vector>

#include "ldyn/tensor.hpp"

namespace ldyn {

namespace detail {

template <class T>
struct Node {
  Tensor<T> value;
  Tensor<T> grad;  // empty until the first accumulation
  bool requires_grad = false;
  bool leaf = true;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;

  Tensor<T>& ensure_grad() {
    if (grad.empty()) grad = Tensor<T>(value.shape(), T(0));
    return grad;
  }
};

}  // namespace detail

/// Disables graph recording on the current thread while alive.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

  static bool recording();

 private:
  bool previous_;
};

/// A tensor value participating in the tape. Copies share the same node.
template <class T>
class Var {
 public:
  Var() = default;
  explicit Var(Tensor<T> value, bool requires_grad = false);

  const Tensor<T>& value() const { return node_->value; }
  /// Mutable access for in-place parameter updates on leaves.
  Tensor<T>& mutable_value() { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  std::size_t dim(std::size_t axis) const { return node_->value.dim(axis); }

  bool defined() const { return static_cast<bool>(node_); }
  bool requires_grad() const { return node_ && node_->requires_grad; }
  bool has_grad() const { return node_ && !node_->grad.empty(); }

  /// Accumulated gradient; zeros when nothing has been accumulated.
  Tensor<T> grad() const;
  void zero_grad();

  /// Scalar value of a one-element variable.
  T item() const;

  detail::Node<T>* node() const { return node_.get(); }

  static Var from_node(std::shared_ptr<detail::Node<T>> node) {
    Var v;
    v.node_ = std::move(node);
    return v;
  }
  const std::shared_ptr<detail::Node<T>>& shared_node() const { return node_; }

 private:
  std::shared_ptr<detail::Node<T>> node_;
};

/// Accumulates d(loss)/d(leaf) into every reachable leaf requiring grad.
/// Intermediate gradients are reset on each call; leaf gradients accumulate.
template <class T>
void backward(const Var<T>& loss);

// Matrix ops (rank-2 operands).
template <class T>
Var<T> matmul(const Var<T>& a, const Var<T>& b);
/// x·Wᵀ + b with x [m×in], W [out×in], b [out]; b may be undefined.
template <class T>
Var<T> linear(const Var<T>& x, const Var<T>& weight, const Var<T>& bias);
template <class T>
Var<T> transpose(const Var<T>& a);

// Elementwise ops on equal shapes.
template <class T>
Var<T> add(const Var<T>& a, const Var<T>& b);
template <class T>
Var<T> sub(const Var<T>& a, const Var<T>& b);
template <class T>
Var<T> mul(const Var<T>& a, const Var<T>& b);

/// x [m×n] plus a row vector r with n elements, broadcast over rows.
template <class T>
Var<T> add_row(const Var<T>& x, const Var<T>& row);

template <class T>
Var<T> scale(const Var<T>& x, T factor);
template <class T>
Var<T> add_scalar(const Var<T>& x, T offset);
template <class T>
Var<T> leaky_relu(const Var<T>& x, T slope);
template <class T>
Var<T> sigmoid(const Var<T>& x);
template <class T>
Var<T> tanh(const Var<T>& x);
template <class T>
Var<T> square(const Var<T>& x);
template <class T>
Var<T> sqrt(const Var<T>& x);
template <class T>
Var<T> reciprocal(const Var<T>& x);

// Reductions.
template <class T>
Var<T> sum(const Var<T>& x);
template <class T>
Var<T> mean(const Var<T>& x);
/// Column sums of x [m×n] -> [1×n].
template <class T>
Var<T> sum_rows(const Var<T>& x);

// Structural ops.
template <class T>
Var<T> reshape(const Var<T>& x, Shape shape);
template <class T>
Var<T> concat_cols(const std::vector<Var<T>>& parts);
template <class T>
Var<T> concat_rows(const std::vector<Var<T>>& parts);
template <class T>
Var<T> slice_cols(const Var<T>& x, std::size_t begin, std::size_t end);
template <class T>
Var<T> slice_rows(const Var<T>& x, std::size_t begin, std::size_t end);

/// Subtracts per-column batch means from x [N×D].
template <class T>
Var<T> center_columns(const Var<T>& x);

}  // namespace ldyn
