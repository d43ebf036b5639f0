#include "ldyn/tensor.hpp"

#include <algorithm>
#include <cmath>

namespace ldyn {

std::string to_string(const Shape& shape) {
  std::string out = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += "x";
    out += std::to_string(shape[i]);
  }
  return out + "]";
}

std::size_t element_count(const Shape& shape) {
  if (shape.empty()) return 0;
  std::size_t n = 1;
  for (auto extent : shape) n *= extent;
  return n;
}

namespace {

void check_extents(const Shape& shape) {
  if (shape.empty()) throw DimensionError("tensor shape must have at least one axis");
  for (auto extent : shape) {
    if (extent == 0) throw DimensionError("tensor extents must be positive, got " + to_string(shape));
  }
}

}  // namespace

template <class T>
Tensor<T>::Tensor(Shape shape, T fill) : shape_(std::move(shape)) {
  check_extents(shape_);
  data_.assign(element_count(shape_), fill);
}

template <class T>
Tensor<T>::Tensor(Shape shape, std::vector<T> data) : shape_(std::move(shape)), data_(std::move(data)) {
  check_extents(shape_);
  if (element_count(shape_) != data_.size()) {
    throw DimensionError("shape " + to_string(shape_) + " needs " + std::to_string(element_count(shape_)) +
                         " values, got " + std::to_string(data_.size()));
  }
}

template <class T>
std::size_t Tensor<T>::dim(std::size_t axis) const {
  if (axis >= shape_.size()) {
    throw DimensionError("axis " + std::to_string(axis) + " out of range for shape " + to_string(shape_));
  }
  return shape_[axis];
}

template <class T>
Tensor<T> Tensor<T>::reshaped(Shape shape) const {
  if (element_count(shape) != data_.size()) {
    throw DimensionError("cannot reshape " + to_string(shape_) + " to " + to_string(shape));
  }
  return Tensor(std::move(shape), data_);
}

template <class T>
Tensor<T> Tensor<T>::rows(std::size_t begin, std::size_t end) const {
  if (rank() != 2 || begin >= end || end > shape_[0]) {
    throw DimensionError("row range [" + std::to_string(begin) + "," + std::to_string(end) + ") invalid for " +
                         to_string(shape_));
  }
  const std::size_t cols = shape_[1];
  std::vector<T> out(data_.begin() + static_cast<std::ptrdiff_t>(begin * cols),
                     data_.begin() + static_cast<std::ptrdiff_t>(end * cols));
  return Tensor(Shape{end - begin, cols}, std::move(out));
}

template <class T>
bool Tensor<T>::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](T v) { return std::isfinite(v); });
}

template <class T>
void Tensor<T>::fill(T value) {
  std::fill(data_.begin(), data_.end(), value);
}

template class Tensor<float>;
template class Tensor<double>;

}  // namespace ldyn
