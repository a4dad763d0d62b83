#include "fedbcs/theory.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "fedbcs/errors.hpp"

namespace fedbcs {

Real descent_coefficient(Real learning_rate, Real smoothness) {
  return learning_rate - smoothness * learning_rate * learning_rate / 2;
}

namespace {

Real steps(const TheoryParams& t) { return static_cast<Real>(t.local_steps); }

void require_positive(Real v, const char* name) {
  if (!(v > 0)) throw RegimeError(std::string(name) + " must be positive");
}

}  // namespace

LrBound lr_upper_bound(const TheoryParams& t, Real grad_norm_sum) {
  require_positive(t.tau, "tau");
  const Real E = steps(t);
  const Real denom = t.smoothness * (grad_norm_sum + E * t.grad_variance);
  if (!(denom > 0)) throw RegimeError("lr bound: L_sm (S + E sigma^2) must be positive");
  const Real num = 2 * (grad_norm_sum - t.lambda_c * E * t.prototype_bound / t.tau);
  LrBound out;
  if (num <= 0) {
    out.lambda_too_large = true;
    std::ostringstream msg;
    msg << "lambda_c too large: lambda_c < tau S / (E G) = " << lambda_upper_bound(t, grad_norm_sum)
        << " is violated (lambda_c = " << t.lambda_c << ")";
    out.diagnostic = msg.str();
    return out;
  }
  out.eta_max = num / denom;
  return out;
}

Real lambda_upper_bound(const TheoryParams& t, Real grad_norm_sum) {
  require_positive(t.prototype_bound, "G");
  return t.tau * grad_norm_sum / (steps(t) * t.prototype_bound);
}

Real lambda_upper_bound_eps(const TheoryParams& t) {
  require_positive(t.prototype_bound, "G");
  return t.tau * t.target_eps / t.prototype_bound;
}

Real lr_upper_bound_eps(const TheoryParams& t) {
  require_positive(t.smoothness, "L_sm");
  require_positive(t.tau, "tau");
  return 2 * (t.target_eps - t.lambda_c * t.prototype_bound / t.tau) /
         (t.smoothness * (t.target_eps + t.grad_variance));
}

std::size_t rounds_to_epsilon(const TheoryParams& t) {
  require_positive(t.target_eps, "epsilon");
  require_positive(t.learning_rate, "eta");
  require_positive(t.tau, "tau");
  if (t.local_steps == 0) throw RegimeError("E must be positive");
  if (t.initial_gap < 0) throw RegimeError("Delta must be nonnegative");
  if (t.prototype_bound > 0) {
    if (!(t.lambda_c < lambda_upper_bound_eps(t))) {
      std::ostringstream msg;
      msg << "regime violated: lambda_c < tau*eps/G fails (" << t.lambda_c << " >= " << lambda_upper_bound_eps(t)
          << ")";
      throw RegimeError(msg.str());
    }
  }
  const Real eta_bound = lr_upper_bound_eps(t);
  if (!(t.learning_rate < eta_bound)) {
    std::ostringstream msg;
    msg << "regime violated: eta < 2(eps - lambda_c*G/tau)/(L_sm(eps + sigma^2)) fails (" << t.learning_rate
        << " >= " << eta_bound << ")";
    throw RegimeError(msg.str());
  }
  const Real E = steps(t), eta = t.learning_rate, L = t.smoothness;
  const Real denom = E * t.target_eps * (2 * eta - L * eta * eta) -
                     E * eta * (L * eta * t.grad_variance + 2 * t.lambda_c * t.prototype_bound / t.tau);
  if (!(denom > 0)) throw RegimeError("regime violated: rate denominator is not positive");
  return static_cast<std::size_t>(std::ceil(2 * t.initial_gap / denom));
}

TheoryParams estimate_theory_params(const TheoryTrace& trace, const TheoryParams& base) {
  if (trace.size() < 2) throw EstimationError("theory estimate: need at least two recorded rounds");
  TheoryParams out = base;
  out.smoothness = 0;
  out.grad_variance = 0;
  out.prototype_bound = 0;
  for (std::size_t i = 0; i < trace.size(); ++i) {
    out.grad_variance = std::max(out.grad_variance, trace[i].minibatch_variance);
    out.prototype_bound = std::max(out.prototype_bound, trace[i].prototype_norm_max);
    for (std::size_t j = i + 1; j < trace.size(); ++j) {
      const auto& a = trace[i];
      const auto& b = trace[j];
      if (a.params.size() != b.params.size() || a.gradient.size() != b.gradient.size()) {
        throw EstimationError("theory estimate: parameter dimension changed between rounds");
      }
      Real dp = 0, dg = 0;
      for (std::size_t k = 0; k < a.params.size(); ++k) dp += (a.params[k] - b.params[k]) * (a.params[k] - b.params[k]);
      for (std::size_t k = 0; k < a.gradient.size(); ++k) {
        dg += (a.gradient[k] - b.gradient[k]) * (a.gradient[k] - b.gradient[k]);
      }
      if (dp > 0) out.smoothness = std::max(out.smoothness, std::sqrt(dg / dp));
    }
  }
  return out;
}

Real round_grad_norm_sum(const TheoryObservation& obs, std::size_t local_steps) {
  return static_cast<Real>(local_steps) * obs.grad_sq_norm;
}

DescentReport descent_check(const TheoryTrace& trace, const TheoryParams& t) {
  DescentReport r;
  if (trace.size() < 2) return r;
  require_positive(t.tau, "tau");
  const Real E = steps(t), eta = t.learning_rate;
  const Real alpha = descent_coefficient(eta, t.smoothness);
  std::size_t ok = 0;
  for (std::size_t i = 0; i + 1 < trace.size(); ++i) {
    const Real S = round_grad_norm_sum(trace[i], t.local_steps);
    const Real rhs = trace[i].objective - alpha * S + t.smoothness * eta * eta * E * t.grad_variance / 2 +
                     t.lambda_c * E * eta * t.prototype_bound / t.tau;
    const bool holds = trace[i + 1].objective <= rhs;
    r.satisfied.push_back(holds);
    ok += holds ? 1 : 0;
  }
  r.fraction = static_cast<Real>(ok) / static_cast<Real>(r.satisfied.size());
  return r;
}

}  // namespace fedbcs
