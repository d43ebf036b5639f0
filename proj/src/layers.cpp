#include "ldyn/layers.hpp"

#include <cmath>

#include "ldyn/rng.hpp"

namespace ldyn {

std::string to_string(Activation a) {
  switch (a) {
    case Activation::LeakyRelu: return "leaky_relu";
    case Activation::Tanh: return "tanh";
    case Activation::Identity: return "identity";
  }
  return "?";
}

Activation activation_from_string(const std::string& name) {
  if (name == "leaky_relu") return Activation::LeakyRelu;
  if (name == "tanh") return Activation::Tanh;
  if (name == "identity") return Activation::Identity;
  throw FormatError("unknown activation '" + name + "'");
}

void MlpSpec::validate() const {
  if (input_dim == 0 || output_dim == 0) throw ContractError("MLP input and output dims must be positive");
  for (auto h : hidden_dims) {
    if (h == 0) throw ContractError("MLP hidden widths must be positive");
  }
}

std::vector<std::size_t> MlpSpec::widths() const {
  std::vector<std::size_t> w{input_dim};
  w.insert(w.end(), hidden_dims.begin(), hidden_dims.end());
  w.push_back(output_dim);
  return w;
}

void LstmSpec::validate() const {
  if (input_dim == 0 || hidden_width == 0 || depth == 0 || output_dim == 0 || timesteps == 0) {
    throw ContractError("LSTM spec fields must all be positive");
  }
}

namespace {

template <class T>
Var<T> uniform_param(Shape shape, double bound, Rng& rng) {
  Tensor<T> t(std::move(shape));
  for (auto& v : t.data()) v = static_cast<T>(rng.uniform(-bound, bound));
  return Var<T>(std::move(t), true);
}

template <class T>
Var<T> activate(const Var<T>& x, Activation a) {
  switch (a) {
    case Activation::LeakyRelu: return leaky_relu(x, static_cast<T>(kLeakySlope));
    case Activation::Tanh: return ldyn::tanh(x);
    case Activation::Identity: return x;
  }
  return x;
}

template <class T>
Var<T> copy_param(const Var<T>& v) {
  return Var<T>(v.value(), v.requires_grad());
}

}  // namespace

template <class T>
Mlp<T>::Mlp(MlpSpec spec, std::uint64_t seed) : spec_(std::move(spec)) {
  spec_.validate();
  Rng rng(seed);
  const auto w = spec_.widths();
  for (std::size_t i = 0; i + 1 < w.size(); ++i) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(w[i]));
    DenseLayer<T> layer;
    layer.weight = uniform_param<T>(Shape{w[i + 1], w[i]}, bound, rng);
    layer.bias = uniform_param<T>(Shape{w[i + 1]}, bound, rng);
    layers_.push_back(std::move(layer));
  }
}

template <class T>
Mlp<T>::Mlp(MlpSpec spec, std::vector<DenseLayer<T>> layers) : spec_(std::move(spec)), layers_(std::move(layers)) {
  spec_.validate();
  const auto w = spec_.widths();
  if (layers_.size() + 1 != w.size()) {
    throw DimensionError("MLP spec expects " + std::to_string(w.size() - 1) + " layers, got " +
                         std::to_string(layers_.size()));
  }
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const Shape expected_w{w[i + 1], w[i]};
    if (layers_[i].weight.shape() != expected_w || layers_[i].bias.shape() != Shape{w[i + 1]}) {
      throw DimensionError("MLP layer " + std::to_string(i) + " has weight " + to_string(layers_[i].weight.shape()) +
                           ", expected " + to_string(expected_w));
    }
  }
}

template <class T>
Mlp<T> Mlp<T>::zeros(MlpSpec spec) {
  spec.validate();
  const auto w = spec.widths();
  std::vector<DenseLayer<T>> layers;
  for (std::size_t i = 0; i + 1 < w.size(); ++i) {
    layers.push_back({Var<T>(Tensor<T>(Shape{w[i + 1], w[i]}), true), Var<T>(Tensor<T>(Shape{w[i + 1]}), true)});
  }
  return Mlp(std::move(spec), std::move(layers));
}

template <class T>
Var<T> Mlp<T>::forward(const Var<T>& x) const {
  if (x.value().rank() != 2 || x.dim(1) != spec_.input_dim) {
    throw DimensionError("MLP expects [batch x " + std::to_string(spec_.input_dim) + "] input, got " +
                         to_string(x.shape()));
  }
  Var<T> h = x;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    h = linear(h, layers_[i].weight, layers_[i].bias);
    if (i + 1 < layers_.size()) h = activate(h, spec_.activation);
    if (!h.value().all_finite()) {
      throw NumericError("non-finite activation in MLP layer " + std::to_string(i));
    }
  }
  return h;
}

template <class T>
Tensor<T> Mlp<T>::forward(const Tensor<T>& x) const {
  NoGradGuard guard;
  return forward(Var<T>(x)).value();
}

template <class T>
std::vector<Var<T>> Mlp<T>::parameters() const {
  std::vector<Var<T>> out;
  for (const auto& l : layers_) {
    out.push_back(l.weight);
    out.push_back(l.bias);
  }
  return out;
}

template <class T>
std::size_t Mlp<T>::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : parameters()) n += p.value().size();
  return n;
}

template <class T>
Mlp<T> Mlp<T>::clone() const {
  std::vector<DenseLayer<T>> layers;
  for (const auto& l : layers_) layers.push_back({copy_param(l.weight), copy_param(l.bias)});
  return Mlp(spec_, std::move(layers));
}

template <class T>
Lstm<T>::Lstm(LstmSpec spec, std::uint64_t seed) : spec_(spec) {
  spec_.validate();
  Rng rng(seed);
  const std::size_t h = spec_.hidden_width;
  const double bound = 1.0 / std::sqrt(static_cast<double>(h));
  for (std::size_t l = 0; l < spec_.depth; ++l) {
    const std::size_t in = l == 0 ? spec_.input_dim : h;
    LstmLayer<T> layer;
    layer.w_input = uniform_param<T>(Shape{4 * h, in}, bound, rng);
    layer.w_hidden = uniform_param<T>(Shape{4 * h, h}, bound, rng);
    layer.bias = uniform_param<T>(Shape{4 * h}, bound, rng);
    layers_.push_back(std::move(layer));
  }
  head_.weight = uniform_param<T>(Shape{spec_.output_dim, h}, bound, rng);
  head_.bias = uniform_param<T>(Shape{spec_.output_dim}, bound, rng);
}

template <class T>
Lstm<T>::Lstm(LstmSpec spec, std::vector<LstmLayer<T>> layers, DenseLayer<T> head)
    : spec_(spec), layers_(std::move(layers)), head_(std::move(head)) {
  spec_.validate();
  const std::size_t h = spec_.hidden_width;
  if (layers_.size() != spec_.depth) throw DimensionError("LSTM layer count does not match depth");
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const std::size_t in = l == 0 ? spec_.input_dim : h;
    if (layers_[l].w_input.shape() != Shape{4 * h, in} || layers_[l].w_hidden.shape() != Shape{4 * h, h} ||
        layers_[l].bias.shape() != Shape{4 * h}) {
      throw DimensionError("LSTM layer " + std::to_string(l) + " parameter shapes do not match spec");
    }
  }
  if (head_.weight.shape() != Shape{spec_.output_dim, h} || head_.bias.shape() != Shape{spec_.output_dim}) {
    throw DimensionError("LSTM head shape does not match spec");
  }
}

template <class T>
Lstm<T> Lstm<T>::zeros(LstmSpec spec) {
  spec.validate();
  const std::size_t h = spec.hidden_width;
  std::vector<LstmLayer<T>> layers;
  for (std::size_t l = 0; l < spec.depth; ++l) {
    const std::size_t in = l == 0 ? spec.input_dim : h;
    layers.push_back({Var<T>(Tensor<T>(Shape{4 * h, in}), true), Var<T>(Tensor<T>(Shape{4 * h, h}), true),
                      Var<T>(Tensor<T>(Shape{4 * h}), true)});
  }
  DenseLayer<T> head{Var<T>(Tensor<T>(Shape{spec.output_dim, h}), true),
                     Var<T>(Tensor<T>(Shape{spec.output_dim}), true)};
  return Lstm(spec, std::move(layers), std::move(head));
}

template <class T>
Var<T> Lstm<T>::forward(const Var<T>& seq, std::vector<Tensor<T>>* hidden_trace) const {
  const auto& s = seq.shape();
  if (s.size() != 3 || s[2] != spec_.input_dim) {
    throw DimensionError("LSTM expects [batch x timesteps x " + std::to_string(spec_.input_dim) + "] input, got " +
                         to_string(s));
  }
  if (s[1] != spec_.timesteps) {
    throw DimensionError("LSTM expects " + std::to_string(spec_.timesteps) + " timesteps, got " +
                         std::to_string(s[1]));
  }
  const std::size_t batch = s[0];
  const std::size_t width = spec_.hidden_width;
  const Var<T> flat = reshape(seq, Shape{batch, s[1] * s[2]});

  std::vector<Var<T>> inputs;
  for (std::size_t t = 0; t < spec_.timesteps; ++t) {
    inputs.push_back(slice_cols(flat, t * spec_.input_dim, (t + 1) * spec_.input_dim));
  }
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const auto& layer = layers_[l];
    Var<T> h(Tensor<T>(Shape{batch, width}));
    Var<T> c(Tensor<T>(Shape{batch, width}));
    std::vector<Var<T>> outputs;
    for (std::size_t t = 0; t < spec_.timesteps; ++t) {
      const Var<T> gates = add(linear(inputs[t], layer.w_input, layer.bias), linear(h, layer.w_hidden, Var<T>()));
      const Var<T> i = sigmoid(slice_cols(gates, 0, width));
      const Var<T> f = sigmoid(slice_cols(gates, width, 2 * width));
      const Var<T> g = ldyn::tanh(slice_cols(gates, 2 * width, 3 * width));
      const Var<T> o = sigmoid(slice_cols(gates, 3 * width, 4 * width));
      c = add(mul(f, c), mul(i, g));
      h = mul(o, ldyn::tanh(c));
      outputs.push_back(h);
      if (hidden_trace && l + 1 == layers_.size()) hidden_trace->push_back(h.value());
    }
    inputs = std::move(outputs);
  }
  Var<T> out = linear(inputs.back(), head_.weight, head_.bias);
  if (!out.value().all_finite()) throw NumericError("non-finite LSTM output");
  return out;
}

template <class T>
Tensor<T> Lstm<T>::forward(const Tensor<T>& seq) const {
  NoGradGuard guard;
  return forward(Var<T>(seq)).value();
}

template <class T>
std::vector<Var<T>> Lstm<T>::parameters() const {
  std::vector<Var<T>> out;
  for (const auto& l : layers_) {
    out.push_back(l.w_input);
    out.push_back(l.w_hidden);
    out.push_back(l.bias);
  }
  out.push_back(head_.weight);
  out.push_back(head_.bias);
  return out;
}

template <class T>
std::size_t Lstm<T>::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : parameters()) n += p.value().size();
  return n;
}

template class Mlp<float>;
template class Mlp<double>;
template class Lstm<float>;
template class Lstm<double>;

}  // namespace ldyn
