#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "fedbcs/numerics.hpp"

namespace fedbcs {

/// Constants of the convergence analysis. The estimated ones
/// (smoothness, grad_variance, prototype_bound) are empirical, not
/// certificates.
struct TheoryParams {
  Real smoothness = 0;       // L_sm
  Real grad_variance = 0;    // sigma^2
  Real prototype_bound = 0;  // G
  Real tau = Real(0.4);
  Real lambda_c = 0;
  std::size_t local_steps = 1;  // E
  Real learning_rate = 0;       // eta
  Real initial_gap = 0;         // Delta = F_0 - F*
  Real target_eps = 0;          // epsilon
};

/// eta - L_sm eta^2 / 2
Real descent_coefficient(Real learning_rate, Real smoothness);

struct LrBound {
  Real eta_max = 0;
  /// Set when lambda_c E G / tau exceeds the gradient-norm sum, which
  /// forces eta_max to 0.
  bool lambda_too_large = false;
  std::string diagnostic;
};

/// 2 (S - lambda_c E G / tau) / (L_sm (S + E sigma^2)) with S the summed
/// squared gradient norms over the round's local steps. Clamped at 0 with
/// a diagnostic when the numerator is negative.
LrBound lr_upper_bound(const TheoryParams& theory, Real grad_norm_sum);

/// Per-round lambda bound: tau S / (E G).
Real lambda_upper_bound(const TheoryParams& theory, Real grad_norm_sum);
/// Asymptotic lambda bound: tau eps / G.
Real lambda_upper_bound_eps(const TheoryParams& theory);
/// eta bound of the round-count estimate: 2 (eps - lambda_c G / tau) / (L_sm (eps + sigma^2)).
Real lr_upper_bound_eps(const TheoryParams& theory);

/// ceil(2 Delta / (E eps (2 eta - L eta^2) - E eta (L eta sigma^2 + 2 lambda_c G / tau))).
/// RegimeError naming the violated inequality outside the valid region.
std::size_t rounds_to_epsilon(const TheoryParams& theory);

/// Per-round quantities recorded by the federation monitor at the global
/// iterate of each round.
struct TheoryObservation {
  std::size_t round = 0;
  Real objective = 0;        // F_t = sum_m w_m F_m(Theta_t)
  Real grad_sq_norm = 0;     // ||grad F(Theta_t)||^2, full batch
  std::vector<Real> params;  // flattened Theta_t
  std::vector<Real> gradient;
  Real minibatch_variance = 0;  // max over local epochs and clients
  Real prototype_norm_max = 0;  // max uploaded prototype norm this round
};
using TheoryTrace = std::vector<TheoryObservation>;

/// Fills smoothness, grad_variance and prototype_bound from `trace`; the
/// remaining fields are copied from `base`. At least two observations.
TheoryParams estimate_theory_params(const TheoryTrace& trace, const TheoryParams& base);

/// Squared-gradient sum over one round's local steps, approximated by
/// E ||grad F(Theta_t)||^2.
Real round_grad_norm_sum(const TheoryObservation& obs, std::size_t local_steps);

struct DescentReport {
  std::vector<bool> satisfied;  // one per consecutive round pair
  Real fraction = 0;
};

/// Checks F_{t+1} <= F_t - alpha(eta) S_t + L eta^2 E sigma^2 / 2 +
/// lambda_c E eta G / tau for every consecutive pair in `trace`.
DescentReport descent_check(const TheoryTrace& trace, const TheoryParams& theory);

}  // namespace fedbcs
