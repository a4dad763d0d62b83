#include "fedbcs/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>

#include "fedbcs/errors.hpp"

namespace fedbcs::ops {

namespace {

using RowMatrix = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixMap = Eigen::Map<RowMatrix>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;

void require_rank(const Tensor& t, std::size_t rank, const char* op) {
  if (t.rank() != rank) {
    throw DimensionError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                         shape_string(t.shape()));
  }
}

struct ConvGeometry {
  std::size_t c_in, h, w, c_out, k, stride, pad, h_out, w_out;
  std::size_t rows() const { return c_in * k * k; }
  std::size_t cols() const { return h_out * w_out; }
};

// cols[(ci*k + ky)*k + kx][oy*w_out + ox]
// Per-thread scratch reused across calls; the im2col matrices are the
// largest temporaries in training.
std::vector<Real>& scratch(std::size_t slot, std::size_t size) {
  thread_local std::vector<Real> buffers[2];
  auto& b = buffers[slot];
  if (b.size() < size) b.resize(size);
  return b;
}

// Writes every entry of the (c_in k k) x (h_out w_out) matrix, padding
// included.
const Real* im2col(std::span<const Real> in, const ConvGeometry& g) {
  Real* cols = scratch(0, g.rows() * g.cols()).data();
  for (std::size_t ci = 0; ci < g.c_in; ++ci) {
    for (std::size_t ky = 0; ky < g.k; ++ky) {
      for (std::size_t kx = 0; kx < g.k; ++kx) {
        Real* row = cols + ((ci * g.k + ky) * g.k + kx) * g.cols();
        for (std::size_t oy = 0; oy < g.h_out; ++oy) {
          Real* dst = row + oy * g.w_out;
          const auto iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) - static_cast<std::ptrdiff_t>(g.pad);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.h)) {
            std::fill(dst, dst + g.w_out, Real{0});
            continue;
          }
          const Real* src = in.data() + (ci * g.h + static_cast<std::size_t>(iy)) * g.w;
          for (std::size_t ox = 0; ox < g.w_out; ++ox) {
            const auto ix = static_cast<std::ptrdiff_t>(ox * g.stride + kx) - static_cast<std::ptrdiff_t>(g.pad);
            dst[ox] = ix >= 0 && ix < static_cast<std::ptrdiff_t>(g.w) ? src[ix] : Real{0};
          }
        }
      }
    }
  }
  return cols;
}

void col2im_add(const Real* cols, const ConvGeometry& g, std::span<Real> out) {
  for (std::size_t ci = 0; ci < g.c_in; ++ci) {
    for (std::size_t ky = 0; ky < g.k; ++ky) {
      for (std::size_t kx = 0; kx < g.k; ++kx) {
        const Real* row = cols + ((ci * g.k + ky) * g.k + kx) * g.cols();
        for (std::size_t oy = 0; oy < g.h_out; ++oy) {
          const auto iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) - static_cast<std::ptrdiff_t>(g.pad);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.h)) continue;
          Real* dst = out.data() + (ci * g.h + static_cast<std::size_t>(iy)) * g.w;
          const Real* src = row + oy * g.w_out;
          for (std::size_t ox = 0; ox < g.w_out; ++ox) {
            const auto ix = static_cast<std::ptrdiff_t>(ox * g.stride + kx) - static_cast<std::ptrdiff_t>(g.pad);
            if (ix >= 0 && ix < static_cast<std::ptrdiff_t>(g.w)) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

template <typename F>
Var unary(Var x, F f, const char* name, auto derivative) {
  const Tensor& in = x.value();
  Tensor out(in.shape());
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = f(in[i]);
  return x.tape().record(
      std::move(out), {x},
      [x, derivative](Tape& tape, const Tensor& g) {
        const Tensor& in = x.value();
        Tensor gx(in.shape());
        for (std::size_t i = 0; i < in.size(); ++i) gx[i] = g[i] * derivative(in[i]);
        tape.accumulate(x, gx);
      },
      name);
}

}  // namespace

Var conv2d(Var input, Var weight, Var bias, std::size_t stride, std::size_t padding) {
  const Tensor& x = input.value();
  const Tensor& w = weight.value();
  const Tensor& b = bias.value();
  require_rank(x, 3, "conv2d input");
  require_rank(w, 4, "conv2d weight");
  require_rank(b, 1, "conv2d bias");
  if (stride == 0) throw DimensionError("conv2d: stride must be positive");
  const std::size_t k = w.extent(2);
  if (w.extent(3) != k || k % 2 == 0) throw DimensionError("conv2d: kernel must be square with odd size");
  if (w.extent(1) != x.extent(0)) {
    throw DimensionError("conv2d: weight expects " + std::to_string(w.extent(1)) + " input channels, got " +
                         std::to_string(x.extent(0)));
  }
  if (b.extent(0) != w.extent(0)) throw DimensionError("conv2d: bias length does not match output channels");
  const std::size_t h_pad = x.extent(1) + 2 * padding;
  const std::size_t w_pad = x.extent(2) + 2 * padding;
  if (h_pad < k || w_pad < k || (h_pad - k) % stride != 0 || (w_pad - k) % stride != 0) {
    throw DimensionError("conv2d: output extent not integral for input " + shape_string(x.shape()));
  }
  const ConvGeometry g{x.extent(0), x.extent(1), x.extent(2), w.extent(0), k, stride, padding,
                       (h_pad - k) / stride + 1, (w_pad - k) / stride + 1};

  const auto cols = im2col(x.data(), g);
  Tensor out({g.c_out, g.h_out, g.w_out});
  {
    ConstMatrixMap wm(w.data().data(), static_cast<Eigen::Index>(g.c_out), static_cast<Eigen::Index>(g.rows()));
    ConstMatrixMap cm(cols, static_cast<Eigen::Index>(g.rows()), static_cast<Eigen::Index>(g.cols()));
    MatrixMap om(out.data().data(), static_cast<Eigen::Index>(g.c_out), static_cast<Eigen::Index>(g.cols()));
    om.noalias() = wm * cm;
    for (std::size_t co = 0; co < g.c_out; ++co) om.row(static_cast<Eigen::Index>(co)).array() += b[co];
  }

  return input.tape().record(
      std::move(out), {input, weight, bias},
      [input, weight, bias, g](Tape& tape, const Tensor& gout) {
        const auto rows = static_cast<Eigen::Index>(g.rows());
        const auto ncols = static_cast<Eigen::Index>(g.cols());
        const auto cout = static_cast<Eigen::Index>(g.c_out);
        ConstMatrixMap gm(gout.data().data(), cout, ncols);
        if (tape.requires_grad(weight) || tape.requires_grad(input)) {
          const auto cols = im2col(input.value().data(), g);
          if (tape.requires_grad(weight)) {
            ConstMatrixMap cm(cols, rows, ncols);
            Tensor& gw = tape.grad_buffer(weight);
            MatrixMap gwm(gw.data().data(), cout, rows);
            gwm.noalias() += gm * cm.transpose();
          }
        }
        if (tape.requires_grad(bias)) {
          Tensor& gb = tape.grad_buffer(bias);
          for (Eigen::Index co = 0; co < cout; ++co) gb[static_cast<std::size_t>(co)] += gm.row(co).sum();
        }
        if (tape.requires_grad(input)) {
          ConstMatrixMap wm(weight.value().data().data(), cout, rows);
          Real* gcols = scratch(1, g.rows() * g.cols()).data();
          MatrixMap gcm(gcols, rows, ncols);
          gcm.noalias() = wm.transpose() * gm;
          Tensor& gi = tape.grad_buffer(input);
          col2im_add(gcols, g, gi.data());
        }
      },
      "conv2d");
}

Var relu(Var x) {
  return unary(
      x, [](Real v) { return v > 0 ? v : Real{0}; }, "relu",
      [](Real v) { return v > 0 ? Real{1} : Real{0}; });
}

Var leaky_relu(Var x, Real slope) {
  return unary(
      x, [slope](Real v) { return v > 0 ? v : slope * v; }, "leaky_relu",
      [slope](Real v) { return v > 0 ? Real{1} : slope; });
}

Var sigmoid(Var x) {
  const Tensor& in = x.value();
  Tensor out(in.shape());
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = Real{1} / (Real{1} + std::exp(-in[i]));
  Tensor saved = out;
  return x.tape().record(
      std::move(out), {x},
      [x, saved = std::move(saved)](Tape& tape, const Tensor& g) {
        Tensor gx(saved.shape());
        for (std::size_t i = 0; i < saved.size(); ++i) gx[i] = g[i] * saved[i] * (Real{1} - saved[i]);
        tape.accumulate(x, gx);
      },
      "sigmoid");
}

Var linear(Var x, Var weight, Var bias) {
  const Tensor& xv = x.value();
  const Tensor& w = weight.value();
  const Tensor& b = bias.value();
  require_rank(xv, 1, "linear input");
  require_rank(w, 2, "linear weight");
  require_rank(b, 1, "linear bias");
  if (w.extent(1) != xv.extent(0) || w.extent(0) != b.extent(0)) {
    throw DimensionError("linear: weight " + shape_string(w.shape()) + " incompatible with input " +
                         shape_string(xv.shape()) + " / bias " + shape_string(b.shape()));
  }
  const std::size_t n_out = w.extent(0);
  const std::size_t n_in = w.extent(1);
  Tensor out({n_out});
  for (std::size_t o = 0; o < n_out; ++o) {
    Real s = b[o];
    for (std::size_t i = 0; i < n_in; ++i) s += w[o * n_in + i] * xv[i];
    out[o] = s;
  }
  return x.tape().record(
      std::move(out), {x, weight, bias},
      [x, weight, bias, n_out, n_in](Tape& tape, const Tensor& g) {
        if (tape.requires_grad(weight)) {
          Tensor& gw = tape.grad_buffer(weight);
          const Tensor& xv = x.value();
          for (std::size_t o = 0; o < n_out; ++o)
            for (std::size_t i = 0; i < n_in; ++i) gw[o * n_in + i] += g[o] * xv[i];
        }
        if (tape.requires_grad(bias)) tape.accumulate(bias, g);
        if (tape.requires_grad(x)) {
          const Tensor& w = weight.value();
          Tensor& gx = tape.grad_buffer(x);
          for (std::size_t o = 0; o < n_out; ++o)
            for (std::size_t i = 0; i < n_in; ++i) gx[i] += g[o] * w[o * n_in + i];
        }
      },
      "linear");
}

Var global_avg_pool(Var x) {
  const Tensor& in = x.value();
  require_rank(in, 3, "global_avg_pool");
  const std::size_t c = in.extent(0);
  const std::size_t plane = in.extent(1) * in.extent(2);
  Tensor out({c});
  for (std::size_t ch = 0; ch < c; ++ch) {
    Real s = 0;
    for (std::size_t i = 0; i < plane; ++i) s += in[ch * plane + i];
    out[ch] = s / static_cast<Real>(plane);
  }
  return x.tape().record(
      std::move(out), {x},
      [x, c, plane](Tape& tape, const Tensor& g) {
        Tensor& gx = tape.grad_buffer(x);
        const Real inv = Real{1} / static_cast<Real>(plane);
        for (std::size_t ch = 0; ch < c; ++ch)
          for (std::size_t i = 0; i < plane; ++i) gx[ch * plane + i] += g[ch] * inv;
      },
      "global_avg_pool");
}

Var nearest_upsample2x(Var x) {
  const Tensor& in = x.value();
  require_rank(in, 3, "nearest_upsample2x");
  const std::size_t c = in.extent(0), h = in.extent(1), w = in.extent(2);
  Tensor out({c, 2 * h, 2 * w});
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t y = 0; y < 2 * h; ++y)
      for (std::size_t xx = 0; xx < 2 * w; ++xx) out.at(ch, y, xx) = in.at(ch, y / 2, xx / 2);
  return x.tape().record(
      std::move(out), {x},
      [x, c, h, w](Tape& tape, const Tensor& g) {
        Tensor& gx = tape.grad_buffer(x);
        for (std::size_t ch = 0; ch < c; ++ch)
          for (std::size_t y = 0; y < 2 * h; ++y)
            for (std::size_t xx = 0; xx < 2 * w; ++xx) gx.at(ch, y / 2, xx / 2) += g.at(ch, y, xx);
      },
      "nearest_upsample2x");
}

Var maxpool2x(Var x) {
  const Tensor& in = x.value();
  require_rank(in, 3, "maxpool2x");
  const std::size_t c = in.extent(0), h = in.extent(1), w = in.extent(2);
  if (h % 2 != 0 || w % 2 != 0) throw DimensionError("maxpool2x: spatial extents must be even, got " + shape_string(in.shape()));
  Tensor out({c, h / 2, w / 2});
  std::vector<std::size_t> argmax(out.size());
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t y = 0; y < h / 2; ++y) {
      for (std::size_t xx = 0; xx < w / 2; ++xx) {
        std::size_t best = (ch * h + 2 * y) * w + 2 * xx;
        for (std::size_t dy = 0; dy < 2; ++dy)
          for (std::size_t dx = 0; dx < 2; ++dx) {
            const std::size_t idx = (ch * h + 2 * y + dy) * w + 2 * xx + dx;
            if (in[idx] > in[best]) best = idx;
          }
        const std::size_t o = (ch * (h / 2) + y) * (w / 2) + xx;
        out[o] = in[best];
        argmax[o] = best;
      }
    }
  }
  return x.tape().record(
      std::move(out), {x},
      [x, argmax = std::move(argmax)](Tape& tape, const Tensor& g) {
        Tensor& gx = tape.grad_buffer(x);
        for (std::size_t o = 0; o < argmax.size(); ++o) gx[argmax[o]] += g[o];
      },
      "maxpool2x");
}

Var instance_norm(Var x, Real eps) {
  const Tensor& in = x.value();
  if (in.rank() < 2) throw DimensionError("instance_norm: need rank >= 2, got " + shape_string(in.shape()));
  const std::size_t c = in.extent(0);
  const std::size_t plane = in.size() / c;
  Tensor out(in.shape());
  std::vector<Real> inv_std(c);
  for (std::size_t ch = 0; ch < c; ++ch) {
    const Real* p = in.data().data() + ch * plane;
    Real mean = 0;
    for (std::size_t i = 0; i < plane; ++i) mean += p[i];
    mean /= static_cast<Real>(plane);
    Real var = 0;
    for (std::size_t i = 0; i < plane; ++i) var += (p[i] - mean) * (p[i] - mean);
    var /= static_cast<Real>(plane);
    inv_std[ch] = Real{1} / std::sqrt(var + eps);
    for (std::size_t i = 0; i < plane; ++i) out[ch * plane + i] = (p[i] - mean) * inv_std[ch];
  }
  Tensor normalized = out;
  return x.tape().record(
      std::move(out), {x},
      [x, c, plane, inv_std = std::move(inv_std), y = std::move(normalized)](Tape& tape, const Tensor& g) {
        Tensor& gx = tape.grad_buffer(x);
        const Real n = static_cast<Real>(plane);
        for (std::size_t ch = 0; ch < c; ++ch) {
          const std::size_t off = ch * plane;
          Real mean_g = 0, mean_gy = 0;
          for (std::size_t i = 0; i < plane; ++i) {
            mean_g += g[off + i];
            mean_gy += g[off + i] * y[off + i];
          }
          mean_g /= n;
          mean_gy /= n;
          for (std::size_t i = 0; i < plane; ++i)
            gx[off + i] += inv_std[ch] * (g[off + i] - mean_g - y[off + i] * mean_gy);
        }
      },
      "instance_norm");
}

Var concat_channels(Var a, Var b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.rank() != bv.rank() || av.rank() == 0) throw DimensionError("concat_channels: rank mismatch");
  for (std::size_t i = 1; i < av.rank(); ++i) {
    if (av.extent(i) != bv.extent(i)) {
      throw DimensionError("concat_channels: trailing extents differ " + shape_string(av.shape()) + " vs " +
                           shape_string(bv.shape()));
    }
  }
  Shape shape = av.shape();
  shape[0] += bv.extent(0);
  std::vector<Real> data;
  data.reserve(av.size() + bv.size());
  data.insert(data.end(), av.data().begin(), av.data().end());
  data.insert(data.end(), bv.data().begin(), bv.data().end());
  const std::size_t split = av.size();
  return a.tape().record(
      Tensor(std::move(shape), std::move(data)), {a, b},
      [a, b, split](Tape& tape, const Tensor& g) {
        if (tape.requires_grad(a)) {
          Tensor& ga = tape.grad_buffer(a);
          for (std::size_t i = 0; i < split; ++i) ga[i] += g[i];
        }
        if (tape.requires_grad(b)) {
          Tensor& gb = tape.grad_buffer(b);
          for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += g[split + i];
        }
      },
      "concat_channels");
}

Var slice_channels(Var x, std::size_t begin, std::size_t count) {
  const Tensor& in = x.value();
  if (in.rank() == 0 || count == 0 || begin + count > in.extent(0)) {
    throw DimensionError("slice_channels: range out of bounds for " + shape_string(in.shape()));
  }
  const std::size_t row = in.size() / in.extent(0);
  Shape shape = in.shape();
  shape[0] = count;
  std::vector<Real> data(in.data().begin() + static_cast<std::ptrdiff_t>(begin * row),
                         in.data().begin() + static_cast<std::ptrdiff_t>((begin + count) * row));
  return x.tape().record(
      Tensor(std::move(shape), std::move(data)), {x},
      [x, offset = begin * row](Tape& tape, const Tensor& g) {
        Tensor& gx = tape.grad_buffer(x);
        for (std::size_t i = 0; i < g.size(); ++i) gx[offset + i] += g[i];
      },
      "slice_channels");
}

Var add(Var a, Var b) {
  require_same_shape(a.value(), b.value(), "add");
  return a.tape().record(
      a.value() + b.value(), {a, b},
      [a, b](Tape& tape, const Tensor& g) {
        tape.accumulate(a, g);
        tape.accumulate(b, g);
      },
      "add");
}

Var sub(Var a, Var b) {
  require_same_shape(a.value(), b.value(), "sub");
  return a.tape().record(
      a.value() - b.value(), {a, b},
      [a, b](Tape& tape, const Tensor& g) {
        tape.accumulate(a, g);
        if (tape.requires_grad(b)) tape.accumulate(b, g * Real{-1});
      },
      "sub");
}

Var mul(Var a, Var b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  require_same_shape(av, bv, "mul");
  Tensor out(av.shape());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = av[i] * bv[i];
  return a.tape().record(
      std::move(out), {a, b},
      [a, b](Tape& tape, const Tensor& g) {
        if (tape.requires_grad(a)) {
          Tensor& ga = tape.grad_buffer(a);
          const Tensor& bv = b.value();
          for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i];
        }
        if (tape.requires_grad(b)) {
          Tensor& gb = tape.grad_buffer(b);
          const Tensor& av = a.value();
          for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
        }
      },
      "mul");
}

Var scale(Var x, Real factor) {
  return x.tape().record(
      x.value() * factor, {x},
      [x, factor](Tape& tape, const Tensor& g) { tape.accumulate(x, g * factor); }, "scale");
}

Var add_n(std::span<const Var> xs) {
  if (xs.empty()) throw ContractError("add_n: no inputs");
  Tensor out = xs[0].value();
  for (std::size_t i = 1; i < xs.size(); ++i) out += xs[i].value();
  std::vector<Var> inputs(xs.begin(), xs.end());
  return xs[0].tape().record(
      std::move(out), inputs,
      [inputs](Tape& tape, const Tensor& g) {
        for (const Var& v : inputs) tape.accumulate(v, g);
      },
      "add_n");
}

Var sum(Var x) {
  return x.tape().record(
      Tensor::scalar(x.value().sum()), {x},
      [x](Tape& tape, const Tensor& g) {
        Tensor& gx = tape.grad_buffer(x);
        for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g[0];
      },
      "sum");
}

Var mean_scalars(std::span<const Var> xs) {
  if (xs.empty()) throw ContractError("mean_scalars: no inputs");
  for (const Var& v : xs) {
    if (v.value().size() != 1) throw DimensionError("mean_scalars: inputs must be scalars");
  }
  return scale(add_n(xs), Real{1} / static_cast<Real>(xs.size()));
}

Var gated_mix(Var a, Var b, Var gate) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  const Tensor& gv = gate.value();
  require_same_shape(av, bv, "gated_mix");
  if (gv.size() != 2) throw DimensionError("gated_mix: gate must have two entries");
  Tensor out(av.shape());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = gv[0] * av[i] + gv[1] * bv[i];
  return a.tape().record(
      std::move(out), {a, b, gate},
      [a, b, gate](Tape& tape, const Tensor& g) {
        const Tensor& gv = gate.value();
        if (tape.requires_grad(a)) tape.accumulate(a, g * gv[0]);
        if (tape.requires_grad(b)) tape.accumulate(b, g * gv[1]);
        if (tape.requires_grad(gate)) {
          Tensor gg({2});
          gg[0] = g.dot(a.value());
          gg[1] = g.dot(b.value());
          tape.accumulate(gate, gg);
        }
      },
      "gated_mix");
}

}  // namespace fedbcs::ops
