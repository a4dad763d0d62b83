#pragma once

#include <span>
#include <vector>

#include "fedbcs/autodiff.hpp"

namespace fedbcs::ops {

/// Cross-correlation of input[C_in,H,W] with weight[C_out,C_in,k,k] plus
/// bias[C_out]. k must be odd.
Var conv2d(Var input, Var weight, Var bias, std::size_t stride = 1, std::size_t padding = 0);

Var relu(Var x);
Var leaky_relu(Var x, Real slope = Real(0.01));
Var sigmoid(Var x);

/// weight[out,in] * x[in] + bias[out].
Var linear(Var x, Var weight, Var bias);

/// [C,H,W] -> [C]
Var global_avg_pool(Var x);
/// [C,H,W] -> [C,2H,2W]
Var nearest_upsample2x(Var x);
/// [C,H,W] -> [C,H/2,W/2]; H and W must be even. Ties go to the first
/// element in row-major window order.
Var maxpool2x(Var x);

inline constexpr Real kInstanceNormEps = Real(1e-5);
/// Per-channel (x - mean) / sqrt(var + eps) over the spatial extent. Works
/// on any rank >= 2 tensor: axis 0 is the channel, the rest is reduced.
Var instance_norm(Var x, Real eps = kInstanceNormEps);

/// Concatenation along axis 0; trailing extents must agree.
Var concat_channels(Var a, Var b);
/// Rows [begin, begin + count) along axis 0.
Var slice_channels(Var x, std::size_t begin, std::size_t count);

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var x, Real factor);
/// Elementwise sum of same-shape inputs.
Var add_n(std::span<const Var> xs);
/// Sum of all elements -> shape [1].
Var sum(Var x);
/// Mean of scalar ([1]) inputs -> [1]. At least one input.
Var mean_scalars(std::span<const Var> xs);
/// gate[0] * a + gate[1] * b with gate of shape [2].
Var gated_mix(Var a, Var b, Var gate);

}  // namespace fedbcs::ops
