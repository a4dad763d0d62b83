#pragma once

#include <complex>
#include <cstddef>
#include <span>

#include "fedbcs/numerics.hpp"

namespace fedbcs::fft {

using Complex = std::complex<Real>;

/// kForward uses exp(-i...), kInverse exp(+i...). Neither direction
/// normalizes; callers apply scaling.
enum class Direction { kForward, kInverse };

bool is_power_of_two(std::size_t n);

/// In-place 1-D transform over `n` elements spaced `stride` apart.
/// Radix-2 for power-of-two n, direct O(n^2) DFT otherwise.
void transform_1d(Complex* data, std::size_t n, std::size_t stride, Direction dir);

/// In-place 2-D transform of a row-major rows x cols grid.
void transform_2d(std::span<Complex> data, std::size_t rows, std::size_t cols, Direction dir);

}  // namespace fedbcs::fft
