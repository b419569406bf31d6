#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "vesselgen/error.hpp"

namespace vesselgen {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

inline std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

/// Dense row-major n-dimensional array. Values are fixed at construction;
/// producing a different array means constructing a new tensor.
template <typename Real>
class BasicTensor {
 public:
  using value_type = Real;

  BasicTensor() : shape_{1}, values_(1, Real(0)) {}

  BasicTensor(Shape shape, std::vector<Real> values)
      : shape_(std::move(shape)), values_(std::move(values)) {
    for (auto d : shape_) {
      if (d == 0) throw ShapeError("tensor dimension must be positive, got " + shape_string(shape_));
    }
    if (shape_.empty()) shape_ = {1};
    if (shape_size(shape_) != values_.size()) {
      throw ShapeError("tensor shape " + shape_string(shape_) + " holds " +
                       std::to_string(shape_size(shape_)) + " values, got " +
                       std::to_string(values_.size()));
    }
  }

  static BasicTensor full(Shape shape, Real v) {
    auto n = shape_size(shape);
    return BasicTensor(std::move(shape), std::vector<Real>(n, v));
  }
  static BasicTensor zeros(Shape shape) { return full(std::move(shape), Real(0)); }
  static BasicTensor ones(Shape shape) { return full(std::move(shape), Real(1)); }
  static BasicTensor scalar(Real v) { return BasicTensor({1}, {v}); }

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t i) const { return shape_.at(i); }
  std::size_t size() const { return values_.size(); }
  bool is_scalar() const { return values_.size() == 1; }

  std::span<const Real> values() const { return values_; }
  const Real* data() const { return values_.data(); }
  Real operator[](std::size_t i) const { return values_[i]; }
  Real item() const {
    if (!is_scalar()) throw ShapeError("item() on non-scalar tensor " + shape_string(shape_));
    return values_[0];
  }

  /// NCHW accessor.
  Real at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const {
    return values_[((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
  }

  bool all_finite() const {
    for (auto v : values_) {
      if (!std::isfinite(v)) return false;
    }
    return true;
  }

  /// Moves the storage out, leaving this tensor unusable.
  std::vector<Real> release() && { return std::move(values_); }

  template <typename Other>
  BasicTensor<Other> cast() const {
    return BasicTensor<Other>(shape_, std::vector<Other>(values_.begin(), values_.end()));
  }

  friend bool operator==(const BasicTensor&, const BasicTensor&) = default;

 private:
  Shape shape_;
  std::vector<Real> values_;
};

using Tensor = BasicTensor<float>;

}  // namespace vesselgen
