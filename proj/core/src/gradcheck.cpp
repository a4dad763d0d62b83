#include "fedbcs/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "fedbcs/errors.hpp"
#include "fedbcs/ops.hpp"

namespace fedbcs {

namespace {

Tensor projection_for(const Shape& shape, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  Tensor r(shape);
  for (std::size_t i = 0; i < r.size(); ++i) r[i] = static_cast<Real>(dist(rng));
  return r;
}

struct Projection {
  Real value = 0;
  Real magnitude = 0;  // sum |out_i * r_i|, the scale of the rounding error
};

Projection projected(const Fragment& fragment, const Tensor& projection) {
  Tape tape;
  const Tensor& out = fragment(tape).value();
  Projection p;
  for (std::size_t i = 0; i < out.size(); ++i) {
    p.value += out[i] * projection[i];
    p.magnitude += std::abs(out[i] * projection[i]);
  }
  return p;
}

}  // namespace

GradCheckResult finite_diff_check(std::span<Parameter* const> params, const Fragment& fragment,
                                  std::uint64_t seed, Real step) {
  if (!(step > 0)) throw ContractError("finite_diff_check: step must be positive");
  GradCheckResult result;
  if (params.empty()) return result;

  for (Parameter* p : params) p->zero_grad();

  Tensor projection;
  {
    Tape tape;
    Var out = fragment(tape);
    projection = out.value().size() == 1 ? Tensor::full(out.shape(), Real{1}) : projection_for(out.shape(), seed);
    Var weights = tape.constant(projection);
    Var scalar = ops::sum(ops::mul(out, weights));
    tape.backward(scalar);
  }

  const auto [base, base_mag] = projected(fragment, projection);
  for (Parameter* p : params) {
    Real excess = 0;
    Real scale = 0;
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      const Real original = p->value[i];
      p->value[i] = original + step;
      const auto [plus, plus_mag] = projected(fragment, projection);
      p->value[i] = original - step;
      const auto [minus, minus_mag] = projected(fragment, projection);
      p->value[i] = original;
      const Real numeric = (plus - minus) / (2 * step);
      const Real noise = kGradCheckRoundoff * std::numeric_limits<Real>::epsilon() *
                         std::max({plus_mag, minus_mag, base_mag}) / step;
      // Across a kink the analytic value is one of the one-sided slopes.
      const Real a = p->gradient[i];
      const Real miss = std::min({std::abs(a - numeric), std::abs(a - (plus - base) / step),
                                  std::abs(a - (base - minus) / step)});
      excess = std::max(excess, miss - noise);
      scale = std::max({scale, std::abs(numeric), std::abs(p->gradient[i])});
    }
    const Real err = std::max(Real{0}, excess) / std::max(scale, std::numeric_limits<Real>::min());
    if (result.worst_parameter.empty() || err > result.max_relative_error) {
      result.max_relative_error = err;
      result.worst_parameter = p->id;
    }
  }
  for (Parameter* p : params) p->zero_grad();
  return result;
}

}  // namespace fedbcs
