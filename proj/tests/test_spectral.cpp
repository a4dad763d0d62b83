#include <gtest/gtest.h>

#include <cmath>
#include <complex>
#include <numbers>
#include <random>
#include <vector>

#include "fedbcs/errors.hpp"
#include "fedbcs/fft.hpp"
#include "fedbcs/numerics.hpp"
#include "fedbcs/ops.hpp"
#include "fedbcs/spectral.hpp"
#include "test_util.hpp"

namespace fedbcs {
namespace {

using testing::random_tensor;
using Complex = std::complex<Real>;

// Direct O((HW)^2) DFT of every channel, scaled by 1/(HW).
std::vector<Complex> naive_dft(const Tensor& z) {
  const std::size_t c = z.extent(0), h = z.extent(1), w = z.extent(2);
  std::vector<Complex> out(c * h * w);
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t u = 0; u < h; ++u)
      for (std::size_t v = 0; v < w; ++v) {
        Complex acc = 0;
        for (std::size_t y = 0; y < h; ++y)
          for (std::size_t x = 0; x < w; ++x) {
            const Real angle = -2 * std::numbers::pi * (static_cast<Real>(u * y) / h + static_cast<Real>(v * x) / w);
            acc += z.at(ch, y, x) * Complex(std::cos(angle), std::sin(angle));
          }
        out[(ch * h + u) * w + v] = acc / static_cast<Real>(h * w);
      }
  return out;
}

Complex entry(const Tensor& spec, std::size_t i) { return {spec[2 * i], spec[2 * i + 1]}; }

Tensor fsr_with_lambdas(const Tensor& z, Real lambda_norm, Real lambda_org) {
  Tape t;
  const auto s = spectral::fft2(t.constant(z));
  return spectral::recompose(s, spectral::amplitude_instance_norm(s.amplitude),
                             t.constant(Tensor::vector({lambda_norm, lambda_org})))
      .value();
}

TEST(Dft, MatchesDirectOracleOnSmallSizes) {
  std::mt19937_64 rng(1);
  for (std::size_t h = 1; h <= 8; ++h)
    for (std::size_t w = 1; w <= 8; ++w) {
      const Tensor z = random_tensor({2, h, w}, rng);
      Tape t;
      const Tensor spec = spectral::dft2(t.constant(z)).value();
      const auto oracle = naive_dft(z);
      for (std::size_t i = 0; i < oracle.size(); ++i) {
        ASSERT_LT(std::abs(entry(spec, i) - oracle[i]), 1e-9) << h << "x" << w << " at " << i;
      }
    }
}

TEST(Dft, OddChannelCountMatchesOracle) {
  std::mt19937_64 rng(2);
  const Tensor z = random_tensor({3, 4, 4}, rng);
  Tape t;
  const Tensor spec = spectral::dft2(t.constant(z)).value();
  const auto oracle = naive_dft(z);
  for (std::size_t i = 0; i < oracle.size(); ++i) EXPECT_LT(std::abs(entry(spec, i) - oracle[i]), 1e-9);
}

TEST(Dft, ConstantInputHasOnlyDcTerm) {
  Tape t;
  const Tensor spec = spectral::dft2(t.constant(Tensor::full({1, 4, 4}, 3))).value();
  EXPECT_NEAR(spec[0], 3, 1e-12);
  for (std::size_t i = 1; i < 16; ++i) EXPECT_LT(std::abs(entry(spec, i)), 1e-12);
}

TEST(Dft, RealInputIsConjugateSymmetric) {
  std::mt19937_64 rng(3);
  const std::size_t h = 6, w = 8;
  Tape t;
  const Tensor spec = spectral::dft2(t.constant(random_tensor({2, h, w}, rng))).value();
  for (std::size_t c = 0; c < 2; ++c)
    for (std::size_t u = 0; u < h; ++u)
      for (std::size_t v = 0; v < w; ++v) {
        const Complex a = entry(spec, (c * h + u) * w + v);
        const Complex b = entry(spec, (c * h + (h - u) % h) * w + (w - v) % w);
        EXPECT_LT(std::abs(a - std::conj(b)), 1e-12);
      }
}

TEST(Fft, RoundTripAcrossSizes) {
  std::mt19937_64 rng(4);
  for (std::size_t h : {2u, 3u, 4u, 7u, 8u, 16u, 32u})
    for (std::size_t w : {2u, 5u, 8u, 16u, 64u}) {
      const Tensor z = random_tensor({3, h, w}, rng);
      Tape t;
      EXPECT_LT(max_abs_diff(spectral::ifft2(spectral::fft2(t.constant(z))).value(), z), 1e-9) << h << "x" << w;
    }
}

TEST(Fft, ParsevalHolds) {
  std::mt19937_64 rng(5);
  for (std::size_t n : {4u, 6u, 8u, 16u, 64u}) {
    const Tensor z = random_tensor({2, n, n}, rng);
    Tape t;
    const Tensor spec = spectral::dft2(t.constant(z)).value();
    Real spatial = 0, freq = 0;
    for (Real v : z.data()) spatial += v * v;
    for (Real v : spec.data()) freq += v * v;
    // Forward scaling 1/(HW): sum |Z|^2 = sum |z|^2 / (HW).
    EXPECT_NEAR(freq * static_cast<Real>(n * n), spatial, 1e-9 * std::max<Real>(1, spatial));
  }
}

TEST(Fft, TransformIsLinear) {
  std::mt19937_64 rng(6);
  const Tensor a = random_tensor({1, 8, 8}, rng), b = random_tensor({1, 8, 8}, rng);
  Tape t;
  const Tensor fa = spectral::dft2(t.constant(a)).value();
  const Tensor fb = spectral::dft2(t.constant(b)).value();
  const Tensor fab = spectral::dft2(t.constant(a * 2 + b)).value();
  EXPECT_LT(max_abs_diff(fab, fa * 2 + fb), 1e-12);
}

TEST(Fft, OneDimensionalMatchesDirectSum) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<Real> dist(-1, 1);
  for (std::size_t n : {1u, 2u, 3u, 5u, 8u, 12u, 16u}) {
    std::vector<Complex> x(n);
    for (auto& v : x) v = {dist(rng), dist(rng)};
    auto y = x;
    fft::transform_1d(y.data(), n, 1, fft::Direction::kForward);
    for (std::size_t k = 0; k < n; ++k) {
      Complex acc = 0;
      for (std::size_t j = 0; j < n; ++j) acc += x[j] * std::polar<Real>(1, -2 * std::numbers::pi * k * j / n);
      EXPECT_LT(std::abs(acc - y[k]), 1e-12);
    }
    fft::transform_1d(y.data(), n, 1, fft::Direction::kInverse);
    for (std::size_t j = 0; j < n; ++j) EXPECT_LT(std::abs(y[j] / static_cast<Real>(n) - x[j]), 1e-12);
  }
}

TEST(Fft, TooSmallInputIsDimensionError) {
  Tape t;
  EXPECT_THROW(spectral::fft2(t.constant(Tensor::zeros({1, 1, 4}))), DimensionError);
  EXPECT_THROW(spectral::dft2(t.constant(Tensor::zeros({4, 4}))), DimensionError);
}

TEST(Spectrum, AmplitudeIsNonNegativeAndPhaseInRange) {
  std::mt19937_64 rng(8);
  Tape t;
  const auto s = spectral::fft2(t.constant(random_tensor({2, 8, 8}, rng)));
  for (Real a : s.amplitude.value().data()) EXPECT_GE(a, 0);
  for (Real p : s.phase.value().data()) {
    EXPECT_GT(p, -std::numbers::pi - 1e-12);
    EXPECT_LE(p, std::numbers::pi + 1e-12);
  }
}

TEST(Spectrum, UnitPhasorMatchesPolarOfArgument) {
  std::mt19937_64 rng(9);
  Tape t;
  Var spec = spectral::dft2(t.constant(random_tensor({2, 4, 6}, rng)));
  const Tensor a = spectral::unit_phasor(spec).value();
  const Tensor b = spectral::polar(t.constant(Tensor::full({2, 4, 6}, 1)), spectral::complex_arg(spec)).value();
  EXPECT_LT(max_abs_diff(a, b), 1e-12);
}

TEST(Spectrum, AmplitudeSwapTransfersStyleKeepsContent) {
  std::mt19937_64 rng(10);
  const Tensor a = random_tensor({1, 8, 8}, rng), b = random_tensor({1, 8, 8}, rng);
  Tape t;
  const auto sa = spectral::fft2(t.constant(a));
  const auto sb = spectral::fft2(t.constant(b));
  const Tensor swapped = spectral::ifft2(spectral::Spectrum{sb.amplitude, sa.phase}).value();
  Tape t2;
  const auto s = spectral::fft2(t2.constant(swapped));
  EXPECT_LT(max_abs_diff(s.amplitude.value(), sb.amplitude.value()), 1e-6);
  // Phase only matters where the amplitude is not negligible.
  const Tensor& amp = s.amplitude.value();
  for (std::size_t i = 0; i < amp.size(); ++i) {
    if (amp[i] < 1e-6) continue;
    const Real d = std::remainder(s.phase.value()[i] - sa.phase.value()[i], 2 * std::numbers::pi);
    EXPECT_LT(std::abs(d), 1e-6);
  }
}

TEST(Spectrum, CheckedInverseRejectsNonHermitianSpectrum) {
  Tape t;
  Tensor spec = Tensor::zeros({1, 4, 4, 2});
  spec[3] = 1;  // imaginary DC term
  {
    CheckedModeScope on(true);
    EXPECT_THROW(spectral::idft2_real(t.constant(spec)), SpectralConsistencyError);
  }
  CheckedModeScope off(false);
  EXPECT_NO_THROW(spectral::idft2_real(t.constant(spec)));
}

TEST(AmplitudeNorm, ZeroMeanUnitVariancePerChannel) {
  std::mt19937_64 rng(11);
  Tape t;
  const Tensor n = spectral::amplitude_instance_norm(t.constant(random_tensor({2, 8, 8}, rng, 0, 50))).value();
  for (std::size_t c = 0; c < 2; ++c) {
    Real mean = 0, sq = 0;
    for (std::size_t i = 0; i < 64; ++i) mean += n[c * 64 + i];
    mean /= 64;
    for (std::size_t i = 0; i < 64; ++i) sq += (n[c * 64 + i] - mean) * (n[c * 64 + i] - mean);
    EXPECT_LT(std::abs(mean), 1e-9);
    EXPECT_NEAR(sq / 64, 1, 1e-6);
  }
}

TEST(StyleGate, ZeroGateGivesHalfAndHalf) {
  std::mt19937_64 rng(12);
  Tape t;
  Var amp = t.constant(random_tensor({3, 4, 4}, rng, 0, 1));
  const Tensor l = spectral::style_gate(amp, amp,
                                        spectral::StyleGate{t.constant(Tensor::zeros({2, 6})),
                                                            t.constant(Tensor::zeros({2}))})
                       .value();
  EXPECT_EQ(l, Tensor::vector({0.5, 0.5}));
}

TEST(StyleGate, SaturatesToZeroAndOne) {
  Tape t;
  Var amp = t.constant(Tensor::full({1, 4, 4}, 1));
  const Tensor l = spectral::style_gate(amp, amp,
                                        spectral::StyleGate{t.constant(Tensor::zeros({2, 2})),
                                                            t.constant(Tensor::vector({-50, 50}))})
                       .value();
  EXPECT_LT(l[0], 1e-20);
  EXPECT_GE(l[1], 1 - 1e-15);
}

TEST(StyleGate, WrongShapeIsDimensionError) {
  Tape t;
  Var amp = t.constant(Tensor::full({2, 4, 4}, 1));
  EXPECT_THROW(spectral::style_gate(amp, amp,
                                    spectral::StyleGate{t.constant(Tensor::zeros({2, 2})),
                                                        t.constant(Tensor::zeros({2}))}),
               DimensionError);
}

TEST(Fsr, IdentityLambdasReturnInput) {
  std::mt19937_64 rng(13);
  for (std::size_t n : {4u, 8u, 16u}) {
    const Tensor z = random_tensor({4, n, n}, rng);
    EXPECT_LT(max_abs_diff(fsr_with_lambdas(z, 0, 1), z), 1e-9);
  }
}

TEST(Fsr, NormalizedAmplitudeShrinksStyleShift) {
  std::mt19937_64 rng(14);
  const Tensor content = random_tensor({2, 8, 8}, rng);
  // Same content, style shifted by amplitude scaling. Amplitudes are large
  // enough that the normalization epsilon is negligible.
  const Tensor a = content * 100, b = content * 600;
  const Real before = (a - b).norm();
  const Real after = (fsr_with_lambdas(a, 1, 0) - fsr_with_lambdas(b, 1, 0)).norm();
  EXPECT_LT(after, before);
  EXPECT_LT(after, 1e-6 * before);
}

TEST(Fsr, PreservesPhase) {
  std::mt19937_64 rng(15);
  const Tensor z = random_tensor({2, 8, 8}, rng);
  const Tensor out = fsr_with_lambdas(z, 0.7, 0.6);
  Tape t;
  const auto before = spectral::fft2(t.constant(z));
  const auto after = spectral::fft2(t.constant(out));
  const Tensor& amp = after.amplitude.value();
  for (std::size_t i = 0; i < amp.size(); ++i) {
    if (amp[i] < 1e-9) continue;  // clamped to zero there
    const Real d = std::remainder(after.phase.value()[i] - before.phase.value()[i], 2 * std::numbers::pi);
    EXPECT_LT(std::abs(d), 1e-8);
  }
}

TEST(Fsr, FusedForwardMatchesComposedPath) {
  std::mt19937_64 rng(16);
  const Tensor z = random_tensor({4, 8, 8}, rng);
  const Tensor w = random_tensor({2, 8}, rng), b = random_tensor({2}, rng);
  Tape t;
  Var zv = t.constant(z);
  const spectral::StyleGate gate{t.constant(w), t.constant(b)};
  const Tensor fused = spectral::fsr_forward(zv, gate).value();
  const auto s = spectral::fft2(zv);
  Var norm = spectral::amplitude_instance_norm(s.amplitude);
  const Tensor composed = spectral::recompose(s, norm, spectral::style_gate(norm, s.amplitude, gate)).value();
  EXPECT_LT(max_abs_diff(fused, composed), 1e-12);
}

TEST(Fsr, OutputIsRealAndFinite) {
  std::mt19937_64 rng(17);
  CheckedModeScope on(true);
  Tape t;
  const Tensor out = spectral::fsr_forward(t.constant(random_tensor({3, 16, 16}, rng)),
                                           spectral::StyleGate{t.constant(random_tensor({2, 6}, rng)),
                                                               t.constant(random_tensor({2}, rng))})
                         .value();
  EXPECT_TRUE(out.all_finite());
  EXPECT_EQ(out.shape(), (Shape{3, 16, 16}));
}

}  // namespace
}  // namespace fedbcs
