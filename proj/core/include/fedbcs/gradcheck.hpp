#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "fedbcs/autodiff.hpp"

namespace fedbcs {

/// Builds a fragment on `tape`, reading the checked parameters through
/// tape.parameter(). The output may have any shape.
using Fragment = std::function<Var(Tape&)>;

/// Rounding allowance of a central difference, in units of
/// eps * sum|f_i r_i| / step for output f and projection r.
inline constexpr Real kGradCheckRoundoff = Real(1e3);

struct GradCheckResult {
  Real max_relative_error = 0;
  std::string worst_parameter;
};

/// Central-difference gradient check. A non-scalar fragment output is
/// reduced to a scalar by a fixed random projection drawn from `seed`.
/// Error per parameter tensor is the largest |analytic - numeric| beyond the
/// rounding allowance, divided by the tensor's largest gradient magnitude;
/// the result is the maximum over parameters. The allowance keeps
/// parameters whose true gradient is zero (a bias feeding a normalization)
/// from reporting rounding noise. An element also matches when the
/// analytic value agrees with either one-sided difference, which is the
/// correct slope when a kink (ReLU, max-pool switch) lies between the
/// probe points.
/// Parameter values are restored before returning.
GradCheckResult finite_diff_check(std::span<Parameter* const> params, const Fragment& fragment,
                                  std::uint64_t seed, Real step);


struct GradCheckEntry {
  std::string name;
  GradCheckResult result;
  Real tolerance = 0;
  Real step = 0;
  bool passed() const { return result.max_relative_error < tolerance; }
};

/// Central-difference checks of every differentiable op, the composite
/// FFT -> gate -> IFFT path, the embedding path through a small network
/// and all losses, on random inputs drawn from `seed`. The whole-network
/// entries use `network_step`: a weight perturbation moves every activation
/// of the network, so a smaller step keeps it from crossing several ReLU or
/// max-pool kinks at once.
std::vector<GradCheckEntry> gradcheck_suite(std::uint64_t seed, Real step = Real(1e-4),
                                            Real tolerance = Real(1e-3), Real network_step = Real(1e-5));

}  // namespace fedbcs
