#pragma once

#include "fedbcs/autodiff.hpp"

namespace fedbcs::spectral {

/// Amplitude and phase of a [C,H,W] map, both [C,H,W]. Phase in (-pi, pi].
struct Spectrum {
  Var amplitude;
  Var phase;
};

/// Per-channel 2-D DFT scaled by 1/(HW), as interleaved (re, im) pairs:
/// [C,H,W] -> [C,H,W,2].
Var dft2(Var z);

/// Real part of the unnormalized inverse DFT: [C,H,W,2] -> [C,H,W]. In
/// checked mode the discarded imaginary residue must stay below 1e-6,
/// otherwise SpectralConsistencyError.
Var idft2_real(Var spectrum);

Var complex_abs(Var spectrum);
Var complex_arg(Var spectrum);
/// (amplitude, phase) -> [C,H,W,2].
Var polar(Var amplitude, Var phase);

/// z / |z| per frequency, (1, 0) where z = 0: [C,H,W,2] -> [C,H,W,2].
/// Equals polar(1, complex_arg(z)) without the trigonometry.
Var unit_phasor(Var spectrum);
/// amplitude [C,H,W] times phasor [C,H,W,2].
Var modulate(Var amplitude, Var phasor);

/// H, W >= 2.
Spectrum fft2(Var z);
Var ifft2(const Spectrum& s);

/// Per-channel zero-mean, unit-variance normalization over the frequency
/// grid (eps = 1e-5).
Var amplitude_instance_norm(Var amplitude);

/// Learnable style gate: weight [2, 2C], bias [2].
struct StyleGate {
  Var weight;
  Var bias;
};

/// sigmoid(W [GAP(chi_norm); GAP(chi)] + b) -> [2] = (lambda_norm, lambda_org).
Var style_gate(Var amplitude_norm, Var amplitude, const StyleGate& gate);

/// ifft2 of (max(0, lambda_norm * chi_norm + lambda_org * chi), phase).
/// `lambdas` has shape [2].
Var recompose(const Spectrum& s, Var amplitude_norm, Var lambdas);

/// Full recalibration: fft2 -> amplitude norm -> gate -> recompose.
Var fsr_forward(Var z, const StyleGate& gate);

}  // namespace fedbcs::spectral
