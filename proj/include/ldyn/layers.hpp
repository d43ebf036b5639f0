#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "ldyn/autograd.hpp"

namespace ldyn {

enum class Activation { LeakyRelu, Tanh, Identity };

inline constexpr double kLeakySlope = 0.01;

std::string to_string(Activation a);
Activation activation_from_string(const std::string& name);

struct MlpSpec {
  std::size_t input_dim = 1;
  std::vector<std::size_t> hidden_dims;
  std::size_t output_dim = 1;
  Activation activation = Activation::LeakyRelu;

  void validate() const;
  /// Layer widths including input and output.
  std::vector<std::size_t> widths() const;
  bool operator==(const MlpSpec&) const = default;
};

/// One affine map y = x·Wᵀ + b with W stored [out × in].
template <class T>
struct DenseLayer {
  Var<T> weight;
  Var<T> bias;
};

// Multilayer perceptron: activation after every hidden layer, linear output.
template <class T>
class Mlp {
 public:
  Mlp() = default;
  /// Fan-in scaled uniform initialisation U(-1/sqrt(in), 1/sqrt(in)).
  Mlp(MlpSpec spec, std::uint64_t seed);
  Mlp(MlpSpec spec, std::vector<DenseLayer<T>> layers);

  static Mlp zeros(MlpSpec spec);

  const MlpSpec& spec() const { return spec_; }
  const std::vector<DenseLayer<T>>& layers() const { return layers_; }
  std::vector<DenseLayer<T>>& layers() { return layers_; }

  /// x [batch × input_dim] -> [batch × output_dim]. Throws NumericError
  /// naming the first layer whose activations are non-finite.
  Var<T> forward(const Var<T>& x) const;
  Tensor<T> forward(const Tensor<T>& x) const;

  std::vector<Var<T>> parameters() const;
  std::size_t parameter_count() const;

  /// Deep copy with independent parameter storage.
  Mlp clone() const;

 private:
  MlpSpec spec_;
  std::vector<DenseLayer<T>> layers_;
};

struct LstmSpec {
  std::size_t input_dim = 3;
  std::size_t hidden_width = 512;
  std::size_t depth = 3;
  std::size_t output_dim = 4;
  std::size_t timesteps = 10;

  void validate() const;
  bool operator==(const LstmSpec&) const = default;
};

template <class T>
struct LstmLayer {
  Var<T> w_input;   // [4H × in], gate blocks ordered input, forget, cell, output
  Var<T> w_hidden;  // [4H × H]
  Var<T> bias;      // [4H]
};

// Stacked LSTM with a linear head on the last layer's final hidden state.
template <class T>
class Lstm {
 public:
  Lstm() = default;
  Lstm(LstmSpec spec, std::uint64_t seed);
  Lstm(LstmSpec spec, std::vector<LstmLayer<T>> layers, DenseLayer<T> head);

  static Lstm zeros(LstmSpec spec);

  const LstmSpec& spec() const { return spec_; }
  const std::vector<LstmLayer<T>>& layers() const { return layers_; }
  const DenseLayer<T>& head() const { return head_; }

  /// seq [batch × timesteps × input_dim] -> [batch × output_dim].
  /// When `hidden_trace` is given it receives the last layer's hidden
  /// state after every timestep.
  Var<T> forward(const Var<T>& seq, std::vector<Tensor<T>>* hidden_trace = nullptr) const;
  Tensor<T> forward(const Tensor<T>& seq) const;

  std::vector<Var<T>> parameters() const;
  std::size_t parameter_count() const;

 private:
  LstmSpec spec_;
  std::vector<LstmLayer<T>> layers_;
  DenseLayer<T> head_;
};

extern template class Mlp<float>;
extern template class Mlp<double>;
extern template class Lstm<float>;
extern template class Lstm<double>;

}  // namespace ldyn
