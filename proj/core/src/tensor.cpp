#include "fedbcs/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <sstream>

#include "fedbcs/errors.hpp"

namespace fedbcs {

namespace {
std::atomic<bool> g_checked_mode{true};
}  // namespace

bool checked_mode() { return g_checked_mode.load(std::memory_order_relaxed); }
void set_checked_mode(bool enabled) {
  g_checked_mode.store(enabled, std::memory_order_relaxed);
}

std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

Tensor::Tensor(Shape shape) : shape_(std::move(shape)) {
  for (auto e : shape_) {
    if (e == 0) throw DimensionError("tensor extents must be positive, got " + shape_string(shape_));
  }
  data_.assign(shape_numel(shape_), Real{0});
}

Tensor::Tensor(Shape shape, std::vector<Real> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  for (auto e : shape_) {
    if (e == 0) throw DimensionError("tensor extents must be positive, got " + shape_string(shape_));
  }
  if (data_.size() != shape_numel(shape_)) {
    throw DimensionError("tensor data length " + std::to_string(data_.size()) +
                         " does not match shape " + shape_string(shape_));
  }
}

Tensor Tensor::full(Shape shape, Real value) {
  Tensor t(std::move(shape));
  t.fill(value);
  return t;
}

Tensor Tensor::vector(std::vector<Real> values) {
  Shape shape{values.size()};
  return Tensor(std::move(shape), std::move(values));
}

Real Tensor::item() const {
  if (data_.size() != 1) {
    throw ContractError("item() on tensor of shape " + shape_string(shape_));
  }
  return data_[0];
}

Tensor Tensor::reshaped(Shape shape) const {
  if (shape_numel(shape) != data_.size()) {
    throw DimensionError("cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
  }
  return Tensor(std::move(shape), data_);
}

void Tensor::fill(Real value) { std::fill(data_.begin(), data_.end(), value); }

Tensor& Tensor::operator+=(const Tensor& other) {
  require_same_shape(*this, other, "operator+=");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
  return *this;
}

Tensor& Tensor::operator-=(const Tensor& other) {
  require_same_shape(*this, other, "operator-=");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= other.data_[i];
  return *this;
}

Tensor& Tensor::operator*=(Real factor) {
  for (auto& v : data_) v *= factor;
  return *this;
}

void Tensor::add_scaled(const Tensor& other, Real factor) {
  require_same_shape(*this, other, "add_scaled");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += factor * other.data_[i];
}

Real Tensor::sum() const {
  Real s = 0;
  for (auto v : data_) s += v;
  return s;
}

Real Tensor::dot(const Tensor& other) const {
  if (other.size() != size()) {
    throw DimensionError("dot of sizes " + std::to_string(size()) + " and " +
                         std::to_string(other.size()));
  }
  Real s = 0;
  for (std::size_t i = 0; i < data_.size(); ++i) s += data_[i] * other.data_[i];
  return s;
}

Real Tensor::norm() const { return std::sqrt(dot(*this)); }

Real Tensor::max_abs() const {
  Real m = 0;
  for (auto v : data_) m = std::max(m, std::abs(v));
  return m;
}

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](Real v) { return std::isfinite(v); });
}

Tensor operator+(Tensor a, const Tensor& b) { return a += b; }
Tensor operator-(Tensor a, const Tensor& b) { return a -= b; }
Tensor operator*(Tensor a, Real factor) { return a *= factor; }

Real max_abs_diff(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "max_abs_diff");
  Real m = 0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) +
                         " vs " + shape_string(b.shape()));
  }
}

void check_finite(const Tensor& t, const char* where) {
  if (checked_mode() && !t.all_finite()) {
    throw NumericalError(std::string("non-finite value produced by ") + where);
  }
}

}  // namespace fedbcs
