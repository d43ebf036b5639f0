#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "ldyn/error.hpp"

namespace ldyn {

using Shape = std::vector<std::size_t>;

enum class DType { Real32, Real64 };

std::string to_string(const Shape& shape);
std::size_t element_count(const Shape& shape);

template <class T>
constexpr DType dtype_of();
template <>
constexpr DType dtype_of<float>() { return DType::Real32; }
template <>
constexpr DType dtype_of<double>() { return DType::Real64; }

// Dense row-major array. Extents are strictly positive.
template <class T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  explicit Tensor(Shape shape, T fill = T(0));
  Tensor(Shape shape, std::vector<T> data);

  static Tensor scalar(T value) { return Tensor(Shape{1}, value); }
  static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<T> data) {
    return Tensor(Shape{rows, cols}, std::move(data));
  }

  static constexpr DType dtype() { return dtype_of<T>(); }

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  std::span<T> data() { return data_; }
  std::span<const T> data() const { return data_; }
  const std::vector<T>& values() const { return data_; }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  T& at(std::size_t r, std::size_t c) { return data_[r * shape_[1] + c]; }
  const T& at(std::size_t r, std::size_t c) const { return data_[r * shape_[1] + c]; }
  T& at(std::size_t i, std::size_t j, std::size_t k) {
    return data_[(i * shape_[1] + j) * shape_[2] + k];
  }
  const T& at(std::size_t i, std::size_t j, std::size_t k) const {
    return data_[(i * shape_[1] + j) * shape_[2] + k];
  }

  /// Same values under a new shape with equal element count.
  Tensor reshaped(Shape shape) const;

  /// Rows [begin, end) of a rank-2 tensor.
  Tensor rows(std::size_t begin, std::size_t end) const;

  bool all_finite() const;
  void fill(T value);

  template <class U>
  Tensor<U> cast() const {
    std::vector<U> out(data_.begin(), data_.end());
    return Tensor<U>(shape_, std::move(out));
  }

  bool operator==(const Tensor& other) const = default;

 private:
  Shape shape_;
  std::vector<T> data_;
};

extern template class Tensor<float>;
extern template class Tensor<double>;

}  // namespace ldyn
