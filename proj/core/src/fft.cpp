#include "fedbcs/fft.hpp"

#include <cmath>
#include <numbers>
#include <utility>
#include <vector>

#include "fedbcs/errors.hpp"

namespace fedbcs::fft {

bool is_power_of_two(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

namespace {

// exp(-2 pi i k / n) for k < n / 2, each entry evaluated directly so the
// error stays O(eps log n). Cached per thread for the last few sizes.
const std::vector<Complex>& twiddles(std::size_t n) {
  thread_local std::vector<std::pair<std::size_t, std::vector<Complex>>> cache;
  for (const auto& [size, table] : cache) {
    if (size == n) return table;
  }
  std::vector<Complex> table(n / 2);
  for (std::size_t k = 0; k < n / 2; ++k) {
    const Real angle = -2 * std::numbers::pi_v<Real> * static_cast<Real>(k) / static_cast<Real>(n);
    table[k] = Complex(std::cos(angle), std::sin(angle));
  }
  cache.emplace_back(n, std::move(table));
  return cache.back().second;
}

// Plain complex product; std::complex operator* goes through the
// Annex G NaN/Inf recovery path.
inline Complex mul(Complex a, Complex b) {
  return {a.real() * b.real() - a.imag() * b.imag(), a.real() * b.imag() + a.imag() * b.real()};
}

void radix2(Complex* data, std::size_t n, std::size_t stride, Direction dir) {
  // Bit-reversal permutation.
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(data[i * stride], data[j * stride]);
  }
  const auto& table = twiddles(n);
  const bool inverse = dir == Direction::kInverse;
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const std::size_t half = len / 2;
    const std::size_t step = n / len;
    for (std::size_t k = 0; k < half; ++k) {
      const Complex w = inverse ? std::conj(table[k * step]) : table[k * step];
      for (std::size_t start = 0; start < n; start += len) {
        Complex& a = data[(start + k) * stride];
        Complex& b = data[(start + k + half) * stride];
        const Complex t = mul(w, b);
        b = a - t;
        a += t;
      }
    }
  }
}

void direct(Complex* data, std::size_t n, std::size_t stride, Direction dir) {
  std::vector<Complex> in(n);
  for (std::size_t i = 0; i < n; ++i) in[i] = data[i * stride];
  const Real sign = dir == Direction::kForward ? Real{-1} : Real{1};
  for (std::size_t k = 0; k < n; ++k) {
    Complex acc{0, 0};
    for (std::size_t t = 0; t < n; ++t) {
      const std::size_t phase = (k * t) % n;
      const Real angle = sign * 2 * std::numbers::pi_v<Real> * static_cast<Real>(phase) / static_cast<Real>(n);
      acc += in[t] * Complex(std::cos(angle), std::sin(angle));
    }
    data[k * stride] = acc;
  }
}

}  // namespace

void transform_1d(Complex* data, std::size_t n, std::size_t stride, Direction dir) {
  if (n <= 1) return;
  if (is_power_of_two(n)) {
    radix2(data, n, stride, dir);
  } else {
    direct(data, n, stride, dir);
  }
}

void transform_2d(std::span<Complex> data, std::size_t rows, std::size_t cols, Direction dir) {
  if (data.size() != rows * cols) throw DimensionError("fft::transform_2d: buffer size mismatch");
  for (std::size_t r = 0; r < rows; ++r) transform_1d(data.data() + r * cols, cols, 1, dir);
  std::vector<Complex> column(rows);
  for (std::size_t c = 0; c < cols; ++c) {
    for (std::size_t r = 0; r < rows; ++r) column[r] = data[r * cols + c];
    transform_1d(column.data(), rows, 1, dir);
    for (std::size_t r = 0; r < rows; ++r) data[r * cols + c] = column[r];
  }
}

}  // namespace fedbcs::fft
