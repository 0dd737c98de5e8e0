#pragma once

#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace weaknet {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

std::string shape_string(const Shape& shape);

/// Dense row-major tensor. Rank is dynamic; the engine uses rank 1, 2 and 4.
template <class T>
class BasicTensor {
 public:
  using value_type = T;

  BasicTensor() = default;
  explicit BasicTensor(Shape shape, T fill = T{})
      : shape_(std::move(shape)), values_(shape_size(shape_), fill) {}
  BasicTensor(Shape shape, std::vector<T> values)
      : shape_(std::move(shape)), values_(std::move(values)) {
    if (shape_size(shape_) != values_.size()) {
      throw std::invalid_argument("tensor: " + shape_string(shape_) +
                                  " does not match " +
                                  std::to_string(values_.size()) + " values");
    }
  }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  std::size_t size() const noexcept { return values_.size(); }
  bool empty() const noexcept { return values_.empty(); }

  T* data() noexcept { return values_.data(); }
  const T* data() const noexcept { return values_.data(); }
  std::span<T> values() noexcept { return values_; }
  std::span<const T> values() const noexcept { return values_; }
  std::vector<T>& storage() noexcept { return values_; }
  const std::vector<T>& storage() const noexcept { return values_; }

  T& operator[](std::size_t i) noexcept { return values_[i]; }
  const T& operator[](std::size_t i) const noexcept { return values_[i]; }

  // 4-D accessor in (n, c, h, w) order.
  T& at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) noexcept {
    return values_[((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
  }
  const T& at(std::size_t n, std::size_t c, std::size_t h,
              std::size_t w) const noexcept {
    return values_[((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
  }

  void reshape(Shape shape) {
    if (shape_size(shape) != values_.size()) {
      throw std::invalid_argument("reshape: " + shape_string(shape_) + " -> " +
                                  shape_string(shape));
    }
    shape_ = std::move(shape);
  }

  void fill(T value) { std::fill(values_.begin(), values_.end(), value); }

  template <class U>
  BasicTensor<U> cast() const {
    return BasicTensor<U>(shape_, std::vector<U>(values_.begin(), values_.end()));
  }

  friend bool operator==(const BasicTensor&, const BasicTensor&) = default;

 private:
  Shape shape_;
  std::vector<T> values_;
};

using Tensor = BasicTensor<float>;
using TensorD = BasicTensor<double>;

inline std::string shape_string(const Shape& shape) {
  std::string out = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(shape[i]);
  }
  return out + "]";
}

}  // namespace weaknet
