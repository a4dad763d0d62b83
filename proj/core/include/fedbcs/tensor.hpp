#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include "fedbcs/numerics.hpp"

namespace fedbcs {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_string(const Shape& shape);

/// Dense row-major array of reals. Value type: copies are deep.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape);
  Tensor(Shape shape, std::vector<Real> data);

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }
  static Tensor full(Shape shape, Real value);
  static Tensor scalar(Real value) { return Tensor({1}, {value}); }
  static Tensor vector(std::vector<Real> values);

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t extent(std::size_t axis) const { return shape_.at(axis); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }
  bool is_scalar() const { return data_.size() == 1; }

  std::span<const Real> data() const { return data_; }
  std::span<Real> data() { return data_; }
  const std::vector<Real>& values() const { return data_; }

  Real operator[](std::size_t i) const { return data_[i]; }
  Real& operator[](std::size_t i) { return data_[i]; }

  // [C,H,W] accessors.
  Real at(std::size_t c, std::size_t h, std::size_t w) const {
    return data_[(c * shape_[1] + h) * shape_[2] + w];
  }
  Real& at(std::size_t c, std::size_t h, std::size_t w) {
    return data_[(c * shape_[1] + h) * shape_[2] + w];
  }

  Real item() const;

  Tensor reshaped(Shape shape) const;

  void fill(Real value);
  Tensor& operator+=(const Tensor& other);
  Tensor& operator-=(const Tensor& other);
  Tensor& operator*=(Real factor);
  // this += factor * other
  void add_scaled(const Tensor& other, Real factor);

  Real sum() const;
  Real dot(const Tensor& other) const;
  Real norm() const;
  Real max_abs() const;
  bool all_finite() const;

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  Shape shape_;
  std::vector<Real> data_;
};

Tensor operator+(Tensor a, const Tensor& b);
Tensor operator-(Tensor a, const Tensor& b);
Tensor operator*(Tensor a, Real factor);

/// max_i |a_i - b_i|; shapes must match.
Real max_abs_diff(const Tensor& a, const Tensor& b);

void require_same_shape(const Tensor& a, const Tensor& b, const char* op);

/// Throws NumericalError naming `where` if checked mode is on and `t`
/// holds a NaN or Inf.
void check_finite(const Tensor& t, const char* where);

}  // namespace fedbcs
