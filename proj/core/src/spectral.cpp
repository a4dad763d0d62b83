#include "fedbcs/spectral.hpp"

#include <cmath>
#include <numbers>
#include <vector>

#include "fedbcs/errors.hpp"
#include "fedbcs/fft.hpp"
#include "fedbcs/ops.hpp"

namespace fedbcs::spectral {

namespace {

using fft::Complex;

constexpr Real kImagResidueLimit = Real(1e-6);

void require_map(const Tensor& t, const char* op) {
  if (t.rank() != 3) throw DimensionError(std::string(op) + ": expected [C,H,W], got " + shape_string(t.shape()));
}

void require_complex(const Tensor& t, const char* op) {
  if (t.rank() != 4 || t.extent(3) != 2) {
    throw DimensionError(std::string(op) + ": expected [C,H,W,2], got " + shape_string(t.shape()));
  }
}

std::size_t mirror(std::size_t i, std::size_t n) { return (n - i) % n; }

// Real [C,H,W] -> per-channel transform -> interleaved [C,H,W,2]. Two
// channels share one complex transform (a + i b) and are separated by
// conjugate symmetry.
Tensor transform_real(const Tensor& z, fft::Direction dir, Real factor) {
  const std::size_t c = z.extent(0), h = z.extent(1), w = z.extent(2), n = h * w;
  Tensor out({c, h, w, 2});
  std::vector<Complex> buf(n);
  for (std::size_t ch = 0; ch < c; ch += 2) {
    const bool pair = ch + 1 < c;
    for (std::size_t i = 0; i < n; ++i) buf[i] = Complex(z[ch * n + i], pair ? z[(ch + 1) * n + i] : Real{0});
    fft::transform_2d(buf, h, w, dir);
    const Real half = factor / 2;
    for (std::size_t r = 0; r < h; ++r) {
      for (std::size_t q = 0; q < w; ++q) {
        const std::size_t i = r * w + q;
        const Complex zk = buf[i];
        const Complex zm = std::conj(buf[mirror(r, h) * w + mirror(q, w)]);
        // a_k = (Z_k + conj Z_-k) / 2, b_k = (Z_k - conj Z_-k) / 2i.
        out[2 * (ch * n + i)] = (zk.real() + zm.real()) * half;
        out[2 * (ch * n + i) + 1] = (zk.imag() + zm.imag()) * half;
        if (pair) {
          out[2 * ((ch + 1) * n + i)] = (zk.imag() - zm.imag()) * half;
          out[2 * ((ch + 1) * n + i) + 1] = (zm.real() - zk.real()) * half;
        }
      }
    }
  }
  return out;
}

// Interleaved [C,H,W,2] -> per-channel transform -> real part [C,H,W].
// The real part of a transform is the transform of the Hermitian part of
// the input, which is real; two channels share one complex transform.
Tensor transform_to_real(const Tensor& s, fft::Direction dir, Real factor) {
  const std::size_t c = s.extent(0), h = s.extent(1), w = s.extent(2), n = h * w;
  Tensor out({c, h, w});
  std::vector<Complex> buf(n);
  auto hermitian = [&](std::size_t ch, std::size_t r, std::size_t q) {
    const std::size_t i = ch * n + r * w + q;
    const std::size_t m = ch * n + mirror(r, h) * w + mirror(q, w);
    return Complex((s[2 * i] + s[2 * m]) / 2, (s[2 * i + 1] - s[2 * m + 1]) / 2);
  };
  for (std::size_t ch = 0; ch < c; ch += 2) {
    const bool pair = ch + 1 < c;
    for (std::size_t r = 0; r < h; ++r) {
      for (std::size_t q = 0; q < w; ++q) {
        const Complex a = hermitian(ch, r, q);
        const Complex b = pair ? hermitian(ch + 1, r, q) : Complex{};
        buf[r * w + q] = Complex(a.real() - b.imag(), a.imag() + b.real());
      }
    }
    fft::transform_2d(buf, h, w, dir);
    for (std::size_t i = 0; i < n; ++i) {
      out[ch * n + i] = buf[i].real() * factor;
      if (pair) out[(ch + 1) * n + i] = buf[i].imag() * factor;
    }
  }
  return out;
}

// Largest |imag| of the unnormalized inverse transform of `s`. The
// imaginary part comes from the anti-Hermitian component A, and
// max |imag| <= sum |A|; the exact value is only computed when that bound
// exceeds `limit`.
Real imaginary_residue(const Tensor& s, Real limit) {
  const std::size_t c = s.extent(0), h = s.extent(1), w = s.extent(2), n = h * w;
  Real worst = 0;
  std::vector<Complex> buf(n);
  for (std::size_t ch = 0; ch < c; ++ch) {
    Real bound = 0;
    for (std::size_t r = 0; r < h; ++r) {
      for (std::size_t q = 0; q < w; ++q) {
        const std::size_t i = ch * n + r * w + q;
        const std::size_t m = ch * n + mirror(r, h) * w + mirror(q, w);
        bound += std::hypot(s[2 * i] - s[2 * m], s[2 * i + 1] + s[2 * m + 1]) / 2;
      }
    }
    if (bound <= limit) {
      worst = std::max(worst, bound);
      continue;
    }
    for (std::size_t i = 0; i < n; ++i) buf[i] = Complex(s[2 * (ch * n + i)], s[2 * (ch * n + i) + 1]);
    fft::transform_2d(buf, h, w, fft::Direction::kInverse);
    for (const auto& v : buf) worst = std::max(worst, std::abs(v.imag()));
  }
  return worst;
}

}  // namespace

Var dft2(Var z) {
  const Tensor& zv = z.value();
  require_map(zv, "dft2");
  const Real inv_n = Real{1} / static_cast<Real>(zv.extent(1) * zv.extent(2));
  Tensor out = transform_real(zv, fft::Direction::kForward, inv_n);
  return z.tape().record(
      std::move(out), {z},
      [z, inv_n](Tape& tape, const Tensor& g) {
        // Adjoint of the scaled forward DFT: Re(sum G e^{+i theta}) / (HW).
        tape.accumulate(z, transform_to_real(g, fft::Direction::kInverse, inv_n));
      },
      "dft2");
}

Var idft2_real(Var spectrum) {
  const Tensor& sv = spectrum.value();
  require_complex(sv, "idft2_real");
  Tensor out = transform_to_real(sv, fft::Direction::kInverse, Real{1});
  if (Real residue = 0; checked_mode() && (residue = imaginary_residue(sv, kImagResidueLimit)) > kImagResidueLimit) {
    throw SpectralConsistencyError("ifft2: spectrum is not conjugate-symmetric (imaginary residue " +
                                   std::to_string(residue) + ")");
  }
  return spectrum.tape().record(
      std::move(out), {spectrum},
      [spectrum](Tape& tape, const Tensor& g) {
        // d out / d (re, im) = (cos theta, -sin theta): a forward DFT of g.
        tape.accumulate(spectrum, transform_real(g, fft::Direction::kForward, Real{1}));
      },
      "idft2_real");
}

Var complex_abs(Var spectrum) {
  const Tensor& sv = spectrum.value();
  require_complex(sv, "complex_abs");
  Tensor out({sv.extent(0), sv.extent(1), sv.extent(2)});
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::sqrt(sv[2 * i] * sv[2 * i] + sv[2 * i + 1] * sv[2 * i + 1]);
  Tensor saved = out;
  return spectrum.tape().record(
      std::move(out), {spectrum},
      [spectrum, amp = std::move(saved)](Tape& tape, const Tensor& g) {
        const Tensor& sv = spectrum.value();
        Tensor& gs = tape.grad_buffer(spectrum);
        for (std::size_t i = 0; i < amp.size(); ++i) {
          if (amp[i] <= 0) continue;
          gs[2 * i] += g[i] * sv[2 * i] / amp[i];
          gs[2 * i + 1] += g[i] * sv[2 * i + 1] / amp[i];
        }
      },
      "complex_abs");
}

Var complex_arg(Var spectrum) {
  const Tensor& sv = spectrum.value();
  require_complex(sv, "complex_arg");
  Tensor out({sv.extent(0), sv.extent(1), sv.extent(2)});
  for (std::size_t i = 0; i < out.size(); ++i) {
    Real a = std::atan2(sv[2 * i + 1], sv[2 * i]);
    // atan2 yields -pi for (-0, negative); keep the range (-pi, pi].
    if (a <= -std::numbers::pi_v<Real>) a = std::numbers::pi_v<Real>;
    out[i] = a;
  }
  return spectrum.tape().record(
      std::move(out), {spectrum},
      [spectrum](Tape& tape, const Tensor& g) {
        const Tensor& sv = spectrum.value();
        Tensor& gs = tape.grad_buffer(spectrum);
        for (std::size_t i = 0; i < g.size(); ++i) {
          const Real re = sv[2 * i], im = sv[2 * i + 1];
          const Real mag2 = re * re + im * im;
          if (!(mag2 > 0)) continue;
          gs[2 * i] += g[i] * (-im / mag2);
          gs[2 * i + 1] += g[i] * (re / mag2);
        }
      },
      "complex_arg");
}

Var polar(Var amplitude, Var phase) {
  const Tensor& a = amplitude.value();
  const Tensor& p = phase.value();
  require_map(a, "polar");
  require_same_shape(a, p, "polar");
  Tensor out({a.extent(0), a.extent(1), a.extent(2), 2});
  for (std::size_t i = 0; i < a.size(); ++i) {
    out[2 * i] = a[i] * std::cos(p[i]);
    out[2 * i + 1] = a[i] * std::sin(p[i]);
  }
  return amplitude.tape().record(
      std::move(out), {amplitude, phase},
      [amplitude, phase](Tape& tape, const Tensor& g) {
        const Tensor& a = amplitude.value();
        const Tensor& p = phase.value();
        if (tape.requires_grad(amplitude)) {
          Tensor& ga = tape.grad_buffer(amplitude);
          for (std::size_t i = 0; i < a.size(); ++i)
            ga[i] += g[2 * i] * std::cos(p[i]) + g[2 * i + 1] * std::sin(p[i]);
        }
        if (tape.requires_grad(phase)) {
          Tensor& gp = tape.grad_buffer(phase);
          for (std::size_t i = 0; i < a.size(); ++i)
            gp[i] += a[i] * (-g[2 * i] * std::sin(p[i]) + g[2 * i + 1] * std::cos(p[i]));
        }
      },
      "polar");
}

Var unit_phasor(Var spectrum) {
  const Tensor& sv = spectrum.value();
  require_complex(sv, "unit_phasor");
  Tensor out(sv.shape());
  for (std::size_t i = 0; i < sv.size() / 2; ++i) {
    const Real re = sv[2 * i], im = sv[2 * i + 1];
    const Real mag = std::sqrt(re * re + im * im);
    out[2 * i] = mag > 0 ? re / mag : Real{1};
    out[2 * i + 1] = mag > 0 ? im / mag : Real{0};
  }
  return spectrum.tape().record(
      std::move(out), {spectrum},
      [spectrum](Tape& tape, const Tensor& g) {
        // d(z/|z|) projects the incoming gradient onto the tangent direction.
        const Tensor& sv = spectrum.value();
        Tensor& gs = tape.grad_buffer(spectrum);
        for (std::size_t i = 0; i < sv.size() / 2; ++i) {
          const Real re = sv[2 * i], im = sv[2 * i + 1];
          const Real mag2 = re * re + im * im;
          if (!(mag2 > 0)) continue;
          const Real mag = std::sqrt(mag2);
          const Real tangential = (g[2 * i] * -im + g[2 * i + 1] * re) / (mag2 * mag);
          gs[2 * i] += -im * tangential;
          gs[2 * i + 1] += re * tangential;
        }
      },
      "unit_phasor");
}

Var modulate(Var amplitude, Var phasor) {
  const Tensor& a = amplitude.value();
  const Tensor& u = phasor.value();
  require_map(a, "modulate");
  require_complex(u, "modulate");
  if (u.extent(0) != a.extent(0) || u.extent(1) != a.extent(1) || u.extent(2) != a.extent(2)) {
    throw DimensionError("modulate: amplitude " + shape_string(a.shape()) + " vs phasor " + shape_string(u.shape()));
  }
  Tensor out(u.shape());
  for (std::size_t i = 0; i < a.size(); ++i) {
    out[2 * i] = a[i] * u[2 * i];
    out[2 * i + 1] = a[i] * u[2 * i + 1];
  }
  return amplitude.tape().record(
      std::move(out), {amplitude, phasor},
      [amplitude, phasor](Tape& tape, const Tensor& g) {
        const Tensor& a = amplitude.value();
        const Tensor& u = phasor.value();
        if (tape.requires_grad(amplitude)) {
          Tensor& ga = tape.grad_buffer(amplitude);
          for (std::size_t i = 0; i < a.size(); ++i) ga[i] += g[2 * i] * u[2 * i] + g[2 * i + 1] * u[2 * i + 1];
        }
        if (tape.requires_grad(phasor)) {
          Tensor& gu = tape.grad_buffer(phasor);
          for (std::size_t i = 0; i < a.size(); ++i) {
            gu[2 * i] += a[i] * g[2 * i];
            gu[2 * i + 1] += a[i] * g[2 * i + 1];
          }
        }
      },
      "modulate");
}

Spectrum fft2(Var z) {
  const Tensor& zv = z.value();
  require_map(zv, "fft2");
  if (zv.extent(1) < 2 || zv.extent(2) < 2) {
    throw DimensionError("fft2: spatial extents must be >= 2, got " + shape_string(zv.shape()));
  }
  Var complex_spectrum = dft2(z);
  return Spectrum{complex_abs(complex_spectrum), complex_arg(complex_spectrum)};
}

Var ifft2(const Spectrum& s) { return idft2_real(polar(s.amplitude, s.phase)); }

Var amplitude_instance_norm(Var amplitude) { return ops::instance_norm(amplitude, ops::kInstanceNormEps); }

Var style_gate(Var amplitude_norm, Var amplitude, const StyleGate& gate) {
  const std::size_t channels = amplitude.value().extent(0);
  const Tensor& w = gate.weight.value();
  if (w.rank() != 2 || w.extent(0) != 2 || w.extent(1) != 2 * channels) {
    throw DimensionError("style_gate: weight must be [2, " + std::to_string(2 * channels) + "], got " +
                         shape_string(w.shape()));
  }
  Var pooled = ops::concat_channels(ops::global_avg_pool(amplitude_norm), ops::global_avg_pool(amplitude));
  return ops::sigmoid(ops::linear(pooled, gate.weight, gate.bias));
}

Var recompose(const Spectrum& s, Var amplitude_norm, Var lambdas) {
  Var mixed = ops::relu(ops::gated_mix(amplitude_norm, s.amplitude, lambdas));
  return ifft2(Spectrum{mixed, s.phase});
}

Var fsr_forward(Var z, const StyleGate& gate) {
  const Tensor& zv = z.value();
  require_map(zv, "fsr_forward");
  if (zv.extent(1) < 2 || zv.extent(2) < 2) {
    throw DimensionError("fsr_forward: spatial extents must be >= 2, got " + shape_string(zv.shape()));
  }
  // Same map as recompose(fft2(z), ...), with the phase carried as a unit
  // phasor instead of an angle.
  Var spectrum = dft2(z);
  Var amplitude = complex_abs(spectrum);
  Var amplitude_norm = amplitude_instance_norm(amplitude);
  Var lambdas = style_gate(amplitude_norm, amplitude, gate);
  Var mixed = ops::relu(ops::gated_mix(amplitude_norm, amplitude, lambdas));
  return idft2_real(modulate(mixed, unit_phasor(spectrum)));
}

}  // namespace fedbcs::spectral
