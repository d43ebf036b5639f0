#include "ldyn/autograd.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <unordered_set>

namespace ldyn {

namespace {

thread_local bool g_recording = true;

template <class T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using MapMat = Eigen::Map<RowMat<T>>;
template <class T>
using ConstMapMat = Eigen::Map<const RowMat<T>>;

template <class T>
ConstMapMat<T> as_mat(const Tensor<T>& t) {
  return ConstMapMat<T>(t.data().data(), static_cast<Eigen::Index>(t.dim(0)),
                        static_cast<Eigen::Index>(t.dim(1)));
}

template <class T>
MapMat<T> as_mat(Tensor<T>& t) {
  return MapMat<T>(t.data().data(), static_cast<Eigen::Index>(t.dim(0)), static_cast<Eigen::Index>(t.dim(1)));
}

template <class T>
void require_rank2(const Var<T>& v, const char* op) {
  if (v.value().rank() != 2) {
    throw DimensionError(std::string(op) + " expects a rank-2 operand, got " + to_string(v.shape()));
  }
}

template <class T>
void require_same_shape(const Var<T>& a, const Var<T>& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + to_string(a.shape()) + " vs " +
                         to_string(b.shape()));
  }
}

template <class T>
using Parents = std::vector<std::shared_ptr<detail::Node<T>>>;

// Wraps an op result; records the backward closure only when some parent
// needs a gradient and recording is enabled.
template <class T>
Var<T> make_result(Tensor<T> value, Parents<T> parents, std::function<void(detail::Node<T>&)> fn) {
  auto node = std::make_shared<detail::Node<T>>();
  node->value = std::move(value);
  node->leaf = false;
  const bool needs = g_recording && std::any_of(parents.begin(), parents.end(),
                                                [](const auto& p) { return p && p->requires_grad; });
  if (needs) {
    node->requires_grad = true;
    node->parents = std::move(parents);
    node->backward_fn = std::move(fn);
  }
  return Var<T>::from_node(std::move(node));
}

template <class T>
void accumulate(detail::Node<T>& target, const Tensor<T>& delta) {
  if (!target.requires_grad) return;
  auto& g = target.ensure_grad();
  auto gd = g.data();
  auto dd = delta.data();
  for (std::size_t i = 0; i < gd.size(); ++i) gd[i] += dd[i];
}

template <class T, class F>
Var<T> unary(const Var<T>& x, F&& forward, std::function<T(T in, T out)> derivative) {
  Tensor<T> out(x.shape());
  auto xd = x.value().data();
  auto od = out.data();
  for (std::size_t i = 0; i < xd.size(); ++i) od[i] = forward(xd[i]);
  auto px = x.shared_node();
  return make_result<T>(std::move(out), {px}, [px, derivative](detail::Node<T>& self) {
    if (!px->requires_grad) return;
    auto& g = px->ensure_grad();
    auto gd = g.data();
    auto in = px->value.data();
    auto outv = self.value.data();
    auto up = self.grad.data();
    for (std::size_t i = 0; i < gd.size(); ++i) gd[i] += up[i] * derivative(in[i], outv[i]);
  });
}

}  // namespace

NoGradGuard::NoGradGuard() : previous_(g_recording) { g_recording = false; }
NoGradGuard::~NoGradGuard() { g_recording = previous_; }
bool NoGradGuard::recording() { return g_recording; }

template <class T>
Var<T>::Var(Tensor<T> value, bool requires_grad) : node_(std::make_shared<detail::Node<T>>()) {
  node_->value = std::move(value);
  node_->requires_grad = requires_grad;
  node_->leaf = true;
}

template <class T>
Tensor<T> Var<T>::grad() const {
  if (!node_) throw ContractError("grad() on an undefined variable");
  if (node_->grad.empty()) return Tensor<T>(node_->value.shape(), T(0));
  return node_->grad;
}

template <class T>
void Var<T>::zero_grad() {
  if (node_) node_->grad = Tensor<T>();
}

template <class T>
T Var<T>::item() const {
  if (!node_ || node_->value.size() != 1) {
    throw ContractError("item() requires a one-element variable");
  }
  return node_->value[0];
}

template <class T>
void backward(const Var<T>& loss) {
  if (!loss.defined() || loss.value().size() != 1) {
    throw ContractError("backward() requires a scalar loss, got shape " +
                        (loss.defined() ? to_string(loss.shape()) : std::string("<undefined>")));
  }
  using NodeT = detail::Node<T>;
  std::vector<NodeT*> order;
  std::unordered_set<NodeT*> visited;
  std::vector<std::pair<NodeT*, std::size_t>> stack;
  stack.emplace_back(loss.node(), 0);
  visited.insert(loss.node());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      NodeT* parent = node->parents[next++].get();
      if (parent && parent->requires_grad && visited.insert(parent).second) stack.emplace_back(parent, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  for (NodeT* node : order) {
    if (!node->leaf) node->grad = Tensor<T>();
  }
  if (!loss.requires_grad()) return;
  loss.node()->ensure_grad()[0] += T(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    NodeT* node = *it;
    if (node->backward_fn && !node->grad.empty()) node->backward_fn(*node);
  }
}

template <class T>
Var<T> matmul(const Var<T>& a, const Var<T>& b) {
  require_rank2(a, "matmul");
  require_rank2(b, "matmul");
  if (a.dim(1) != b.dim(0)) {
    throw DimensionError("matmul: inner dimensions differ, " + to_string(a.shape()) + " x " + to_string(b.shape()));
  }
  Tensor<T> out(Shape{a.dim(0), b.dim(1)});
  as_mat(out).noalias() = as_mat(a.value()) * as_mat(b.value());
  auto pa = a.shared_node();
  auto pb = b.shared_node();
  return make_result<T>(std::move(out), {pa, pb}, [pa, pb](detail::Node<T>& self) {
    auto up = as_mat(self.grad);
    if (pa->requires_grad) as_mat(pa->ensure_grad()).noalias() += up * as_mat(pb->value).transpose();
    if (pb->requires_grad) as_mat(pb->ensure_grad()).noalias() += as_mat(pa->value).transpose() * up;
  });
}

template <class T>
Var<T> linear(const Var<T>& x, const Var<T>& weight, const Var<T>& bias) {
  require_rank2(x, "linear");
  require_rank2(weight, "linear");
  if (x.dim(1) != weight.dim(1)) {
    throw DimensionError("linear: input " + to_string(x.shape()) + " does not match weight " +
                         to_string(weight.shape()));
  }
  const std::size_t out_dim = weight.dim(0);
  if (bias.defined() && bias.value().size() != out_dim) {
    throw DimensionError("linear: bias " + to_string(bias.shape()) + " does not match weight " +
                         to_string(weight.shape()));
  }
  Tensor<T> out(Shape{x.dim(0), out_dim});
  auto om = as_mat(out);
  om.noalias() = as_mat(x.value()) * as_mat(weight.value()).transpose();
  if (bias.defined()) {
    Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>> b(bias.value().data().data(),
                                                            static_cast<Eigen::Index>(out_dim));
    om.rowwise() += b;
  }
  auto px = x.shared_node();
  auto pw = weight.shared_node();
  auto pb = bias.defined() ? bias.shared_node() : nullptr;
  return make_result<T>(std::move(out), {px, pw, pb}, [px, pw, pb](detail::Node<T>& self) {
    auto up = as_mat(self.grad);
    if (px->requires_grad) as_mat(px->ensure_grad()).noalias() += up * as_mat(pw->value);
    if (pw->requires_grad) as_mat(pw->ensure_grad()).noalias() += up.transpose() * as_mat(px->value);
    if (pb && pb->requires_grad) {
      auto& g = pb->ensure_grad();
      Eigen::Map<Eigen::Matrix<T, 1, Eigen::Dynamic>> gb(g.data().data(), static_cast<Eigen::Index>(g.size()));
      gb += up.colwise().sum();
    }
  });
}

template <class T>
Var<T> transpose(const Var<T>& a) {
  require_rank2(a, "transpose");
  Tensor<T> out(Shape{a.dim(1), a.dim(0)});
  as_mat(out) = as_mat(a.value()).transpose();
  auto pa = a.shared_node();
  return make_result<T>(std::move(out), {pa}, [pa](detail::Node<T>& self) {
    if (pa->requires_grad) as_mat(pa->ensure_grad()) += as_mat(self.grad).transpose();
  });
}

template <class T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  require_same_shape(a, b, "add");
  Tensor<T> out = a.value();
  auto od = out.data();
  auto bd = b.value().data();
  for (std::size_t i = 0; i < od.size(); ++i) od[i] += bd[i];
  auto pa = a.shared_node();
  auto pb = b.shared_node();
  return make_result<T>(std::move(out), {pa, pb}, [pa, pb](detail::Node<T>& self) {
    accumulate(*pa, self.grad);
    accumulate(*pb, self.grad);
  });
}

template <class T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
  require_same_shape(a, b, "sub");
  Tensor<T> out = a.value();
  auto od = out.data();
  auto bd = b.value().data();
  for (std::size_t i = 0; i < od.size(); ++i) od[i] -= bd[i];
  auto pa = a.shared_node();
  auto pb = b.shared_node();
  return make_result<T>(std::move(out), {pa, pb}, [pa, pb](detail::Node<T>& self) {
    accumulate(*pa, self.grad);
    if (pb->requires_grad) {
      auto gd = pb->ensure_grad().data();
      auto up = self.grad.data();
      for (std::size_t i = 0; i < gd.size(); ++i) gd[i] -= up[i];
    }
  });
}

template <class T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  require_same_shape(a, b, "mul");
  Tensor<T> out = a.value();
  auto od = out.data();
  auto bd = b.value().data();
  for (std::size_t i = 0; i < od.size(); ++i) od[i] *= bd[i];
  auto pa = a.shared_node();
  auto pb = b.shared_node();
  return make_result<T>(std::move(out), {pa, pb}, [pa, pb](detail::Node<T>& self) {
    auto up = self.grad.data();
    if (pa->requires_grad) {
      auto gd = pa->ensure_grad().data();
      auto other = pb->value.data();
      for (std::size_t i = 0; i < gd.size(); ++i) gd[i] += up[i] * other[i];
    }
    if (pb->requires_grad) {
      auto gd = pb->ensure_grad().data();
      auto other = pa->value.data();
      for (std::size_t i = 0; i < gd.size(); ++i) gd[i] += up[i] * other[i];
    }
  });
}

template <class T>
Var<T> add_row(const Var<T>& x, const Var<T>& row) {
  require_rank2(x, "add_row");
  const std::size_t rows = x.dim(0);
  const std::size_t cols = x.dim(1);
  if (row.value().size() != cols) {
    throw DimensionError("add_row: row " + to_string(row.shape()) + " does not broadcast over " +
                         to_string(x.shape()));
  }
  Tensor<T> out = x.value();
  auto rd = row.value().data();
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) out.at(r, c) += rd[c];
  auto px = x.shared_node();
  auto pr = row.shared_node();
  return make_result<T>(std::move(out), {px, pr}, [px, pr, rows, cols](detail::Node<T>& self) {
    accumulate(*px, self.grad);
    if (pr->requires_grad) {
      auto gd = pr->ensure_grad().data();
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) gd[c] += self.grad.at(r, c);
    }
  });
}

template <class T>
Var<T> scale(const Var<T>& x, T factor) {
  return unary<T>(x, [factor](T v) { return v * factor; }, [factor](T, T) { return factor; });
}

template <class T>
Var<T> add_scalar(const Var<T>& x, T offset) {
  return unary<T>(x, [offset](T v) { return v + offset; }, [](T, T) { return T(1); });
}

template <class T>
Var<T> leaky_relu(const Var<T>& x, T slope) {
  return unary<T>(
      x, [slope](T v) { return v > T(0) ? v : slope * v; }, [slope](T in, T) { return in > T(0) ? T(1) : slope; });
}

template <class T>
Var<T> sigmoid(const Var<T>& x) {
  return unary<T>(
      x,
      [](T v) {
        if (v >= T(0)) return T(1) / (T(1) + std::exp(-v));
        const T e = std::exp(v);
        return e / (T(1) + e);
      },
      [](T, T out) { return out * (T(1) - out); });
}

template <class T>
Var<T> tanh(const Var<T>& x) {
  return unary<T>(x, [](T v) { return std::tanh(v); }, [](T, T out) { return T(1) - out * out; });
}

template <class T>
Var<T> square(const Var<T>& x) {
  return unary<T>(x, [](T v) { return v * v; }, [](T in, T) { return T(2) * in; });
}

template <class T>
Var<T> sqrt(const Var<T>& x) {
  return unary<T>(x, [](T v) { return std::sqrt(v); }, [](T, T out) { return T(0.5) / out; });
}

template <class T>
Var<T> reciprocal(const Var<T>& x) {
  return unary<T>(x, [](T v) { return T(1) / v; }, [](T, T out) { return -out * out; });
}

template <class T>
Var<T> sum(const Var<T>& x) {
  T total = T(0);
  for (T v : x.value().data()) total += v;
  auto px = x.shared_node();
  return make_result<T>(Tensor<T>::scalar(total), {px}, [px](detail::Node<T>& self) {
    if (!px->requires_grad) return;
    const T up = self.grad[0];
    for (auto& g : px->ensure_grad().data()) g += up;
  });
}

template <class T>
Var<T> mean(const Var<T>& x) {
  return scale(sum(x), T(1) / static_cast<T>(x.value().size()));
}

template <class T>
Var<T> sum_rows(const Var<T>& x) {
  require_rank2(x, "sum_rows");
  const std::size_t rows = x.dim(0);
  const std::size_t cols = x.dim(1);
  Tensor<T> out(Shape{1, cols});
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) out[c] += x.value().at(r, c);
  auto px = x.shared_node();
  return make_result<T>(std::move(out), {px}, [px, rows, cols](detail::Node<T>& self) {
    if (!px->requires_grad) return;
    auto& g = px->ensure_grad();
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < cols; ++c) g.at(r, c) += self.grad[c];
  });
}

template <class T>
Var<T> reshape(const Var<T>& x, Shape shape) {
  Tensor<T> out = x.value().reshaped(std::move(shape));
  auto px = x.shared_node();
  return make_result<T>(std::move(out), {px}, [px](detail::Node<T>& self) {
    if (!px->requires_grad) return;
    auto gd = px->ensure_grad().data();
    auto up = self.grad.data();
    for (std::size_t i = 0; i < gd.size(); ++i) gd[i] += up[i];
  });
}

template <class T>
Var<T> concat_cols(const std::vector<Var<T>>& parts) {
  if (parts.empty()) throw DimensionError("concat_cols: no operands");
  const std::size_t rows = parts.front().dim(0);
  std::size_t cols = 0;
  std::vector<std::size_t> widths;
  for (const auto& p : parts) {
    require_rank2(p, "concat_cols");
    if (p.dim(0) != rows) {
      throw DimensionError("concat_cols: row counts differ, " + to_string(parts.front().shape()) + " vs " +
                           to_string(p.shape()));
    }
    widths.push_back(p.dim(1));
    cols += p.dim(1);
  }
  Tensor<T> out(Shape{rows, cols});
  Parents<T> parents;
  std::size_t offset = 0;
  for (const auto& p : parts) {
    for (std::size_t r = 0; r < rows; ++r)
      std::copy_n(&p.value().at(r, 0), p.dim(1), &out.at(r, offset));
    offset += p.dim(1);
    parents.push_back(p.shared_node());
  }
  auto captured = parents;
  return make_result<T>(std::move(out), std::move(parents),
                        [captured, widths, rows](detail::Node<T>& self) {
                          std::size_t off = 0;
                          for (std::size_t i = 0; i < captured.size(); ++i) {
                            auto& node = *captured[i];
                            if (node.requires_grad) {
                              auto& g = node.ensure_grad();
                              for (std::size_t r = 0; r < rows; ++r)
                                for (std::size_t c = 0; c < widths[i]; ++c) g.at(r, c) += self.grad.at(r, off + c);
                            }
                            off += widths[i];
                          }
                        });
}

template <class T>
Var<T> concat_rows(const std::vector<Var<T>>& parts) {
  if (parts.empty()) throw DimensionError("concat_rows: no operands");
  const std::size_t cols = parts.front().dim(1);
  std::vector<T> data;
  Parents<T> parents;
  std::vector<std::size_t> sizes;
  for (const auto& p : parts) {
    require_rank2(p, "concat_rows");
    if (p.dim(1) != cols) {
      throw DimensionError("concat_rows: column counts differ, " + to_string(parts.front().shape()) + " vs " +
                           to_string(p.shape()));
    }
    data.insert(data.end(), p.value().data().begin(), p.value().data().end());
    sizes.push_back(p.value().size());
    parents.push_back(p.shared_node());
  }
  const std::size_t rows = data.size() / cols;
  auto captured = parents;
  return make_result<T>(Tensor<T>(Shape{rows, cols}, std::move(data)), std::move(parents),
                        [captured, sizes](detail::Node<T>& self) {
                          std::size_t off = 0;
                          auto up = self.grad.data();
                          for (std::size_t i = 0; i < captured.size(); ++i) {
                            auto& node = *captured[i];
                            if (node.requires_grad) {
                              auto gd = node.ensure_grad().data();
                              for (std::size_t k = 0; k < sizes[i]; ++k) gd[k] += up[off + k];
                            }
                            off += sizes[i];
                          }
                        });
}

template <class T>
Var<T> slice_cols(const Var<T>& x, std::size_t begin, std::size_t end) {
  require_rank2(x, "slice_cols");
  const std::size_t rows = x.dim(0);
  if (begin >= end || end > x.dim(1)) {
    throw DimensionError("slice_cols: range [" + std::to_string(begin) + "," + std::to_string(end) +
                         ") invalid for " + to_string(x.shape()));
  }
  const std::size_t width = end - begin;
  Tensor<T> out(Shape{rows, width});
  for (std::size_t r = 0; r < rows; ++r) std::copy_n(&x.value().at(r, begin), width, &out.at(r, 0));
  auto px = x.shared_node();
  return make_result<T>(std::move(out), {px}, [px, rows, begin, width](detail::Node<T>& self) {
    if (!px->requires_grad) return;
    auto& g = px->ensure_grad();
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < width; ++c) g.at(r, begin + c) += self.grad.at(r, c);
  });
}

template <class T>
Var<T> slice_rows(const Var<T>& x, std::size_t begin, std::size_t end) {
  require_rank2(x, "slice_rows");
  Tensor<T> out = x.value().rows(begin, end);
  const std::size_t offset = begin * x.dim(1);
  auto px = x.shared_node();
  return make_result<T>(std::move(out), {px}, [px, offset](detail::Node<T>& self) {
    if (!px->requires_grad) return;
    auto gd = px->ensure_grad().data();
    auto up = self.grad.data();
    for (std::size_t i = 0; i < up.size(); ++i) gd[offset + i] += up[i];
  });
}

template <class T>
Var<T> center_columns(const Var<T>& x) {
  require_rank2(x, "center_columns");
  const T inv_n = T(1) / static_cast<T>(x.dim(0));
  return add_row(x, scale(sum_rows(x), -inv_n));
}

#define LDYN_INSTANTIATE(T)                                                              \
  template class Var<T>;                                                                 \
  template void backward<T>(const Var<T>&);                                              \
  template Var<T> matmul<T>(const Var<T>&, const Var<T>&);                               \
  template Var<T> linear<T>(const Var<T>&, const Var<T>&, const Var<T>&);                \
  template Var<T> transpose<T>(const Var<T>&);                                           \
  template Var<T> add<T>(const Var<T>&, const Var<T>&);                                  \
  template Var<T> sub<T>(const Var<T>&, const Var<T>&);                                  \
  template Var<T> mul<T>(const Var<T>&, const Var<T>&);                                  \
  template Var<T> add_row<T>(const Var<T>&, const Var<T>&);                              \
  template Var<T> scale<T>(const Var<T>&, T);                                            \
  template Var<T> add_scalar<T>(const Var<T>&, T);                                       \
  template Var<T> leaky_relu<T>(const Var<T>&, T);                                       \
  template Var<T> sigmoid<T>(const Var<T>&);                                             \
  template Var<T> tanh<T>(const Var<T>&);                                                \
  template Var<T> square<T>(const Var<T>&);                                              \
  template Var<T> sqrt<T>(const Var<T>&);                                                \
  template Var<T> reciprocal<T>(const Var<T>&);                                          \
  template Var<T> sum<T>(const Var<T>&);                                                 \
  template Var<T> mean<T>(const Var<T>&);                                                \
  template Var<T> sum_rows<T>(const Var<T>&);                                            \
  template Var<T> reshape<T>(const Var<T>&, Shape);                                      \
  template Var<T> concat_cols<T>(const std::vector<Var<T>>&);                            \
  template Var<T> concat_rows<T>(const std::vector<Var<T>>&);                            \
  template Var<T> slice_cols<T>(const Var<T>&, std::size_t, std::size_t);                \
  template Var<T> slice_rows<T>(const Var<T>&, std::size_t, std::size_t);                \
  template Var<T> center_columns<T>(const Var<T>&);

LDYN_INSTANTIATE(float)
LDYN_INSTANTIATE(double)

#undef LDYN_INSTANTIATE

}  // namespace ldyn
