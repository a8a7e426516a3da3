#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "wrnlab/errors.hpp"

namespace wrnlab {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_string(const Shape& shape);

// Dense row-major array. The element type is double for every test and bound
// computation; float is available for training throughput.
template <typename T>
class BasicTensor {
 public:
  using value_type = T;

  BasicTensor() = default;

  explicit BasicTensor(Shape shape, T fill = T{0})
      : shape_(std::move(shape)), data_(shape_numel(shape_), fill) {
    check_shape();
  }

  BasicTensor(Shape shape, std::vector<T> data) : shape_(std::move(shape)), data_(std::move(data)) {
    check_shape();
    if (data_.size() != shape_numel(shape_)) {
      throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                       " does not match shape " + shape_string(shape_));
    }
  }

  static BasicTensor zeros(Shape shape) { return BasicTensor(std::move(shape), T{0}); }
  static BasicTensor zeros_like(const BasicTensor& other) { return BasicTensor(other.shape_, T{0}); }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t dim(std::size_t i) const { return shape_.at(i); }
  std::size_t numel() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  std::span<T> data() noexcept { return data_; }
  std::span<const T> data() const noexcept { return data_; }
  T* raw() noexcept { return data_.data(); }
  const T* raw() const noexcept { return data_.data(); }
  const std::vector<T>& values() const noexcept { return data_; }

  T& operator[](std::size_t i) noexcept { return data_[i]; }
  const T& operator[](std::size_t i) const noexcept { return data_[i]; }

  // NCHW element access.
  T& at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) {
    return data_[((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
  }
  const T& at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const {
    return data_[((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
  }

  bool all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](T v) { return std::isfinite(v); });
  }

  BasicTensor reshaped(Shape shape) const {
    if (shape_numel(shape) != numel()) {
      throw ShapeError("cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
    }
    return BasicTensor(std::move(shape), data_);
  }

  void fill(T value) { std::fill(data_.begin(), data_.end(), value); }

  template <typename U>
  BasicTensor<U> cast() const {
    std::vector<U> out(data_.begin(), data_.end());
    return BasicTensor<U>(shape_, std::move(out));
  }

  // Rows [begin, end) along the leading axis.
  BasicTensor slice_rows(std::size_t begin, std::size_t end) const {
    if (rank() == 0 || begin > end || end > shape_[0]) {
      throw ShapeError("slice_rows out of range for shape " + shape_string(shape_));
    }
    const std::size_t row = numel() / shape_[0];
    Shape s = shape_;
    s[0] = end - begin;
    return BasicTensor(std::move(s), std::vector<T>(data_.begin() + static_cast<std::ptrdiff_t>(begin * row),
                                                    data_.begin() + static_cast<std::ptrdiff_t>(end * row)));
  }

  friend bool operator==(const BasicTensor& a, const BasicTensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  void check_shape() const {
    for (std::size_t d : shape_) {
      if (d == 0) throw ShapeError("tensor dimensions must be positive, got " + shape_string(shape_));
    }
  }

  Shape shape_;
  std::vector<T> data_;
};

using Tensor = BasicTensor<double>;
using TensorF = BasicTensor<float>;

// Stack equally shaped tensors along a new leading axis.
template <typename T>
BasicTensor<T> stack_rows(const std::vector<BasicTensor<T>>& rows) {
  if (rows.empty()) throw ShapeError("stack_rows of empty list");
  Shape s{rows.size()};
  s.insert(s.end(), rows.front().shape().begin(), rows.front().shape().end());
  std::vector<T> data;
  data.reserve(shape_numel(s));
  for (const auto& r : rows) {
    if (r.shape() != rows.front().shape()) throw ShapeError("stack_rows shape mismatch");
    data.insert(data.end(), r.data().begin(), r.data().end());
  }
  return BasicTensor<T>(std::move(s), std::move(data));
}

template <typename T>
T max_abs_diff(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  if (a.shape() != b.shape()) throw ShapeError("max_abs_diff shape mismatch");
  T m{0};
  for (std::size_t i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace wrnlab
