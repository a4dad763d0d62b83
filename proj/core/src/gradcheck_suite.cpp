#include <deque>
#include <random>

#include "fedbcs/gradcheck.hpp"
#include "fedbcs/losses.hpp"
#include "fedbcs/ops.hpp"
#include "fedbcs/prototypes.hpp"
#include "fedbcs/segnet.hpp"
#include "fedbcs/spectral.hpp"

namespace fedbcs {

namespace {

class Suite {
 public:
  Suite(std::uint64_t seed, Real step, Real tolerance) : rng_(seed), seed_(seed), step_(step), tol_(tolerance) {}

  Parameter& param(const std::string& id, Shape shape, Real lo = -1, Real hi = 1) {
    Tensor t(std::move(shape));
    std::uniform_real_distribution<double> dist(lo, hi);
    for (auto& v : t.data()) v = static_cast<Real>(dist(rng_));
    return store_.emplace_back(id, std::move(t));
  }

  LabelMap labels(std::size_t h, std::size_t w, std::size_t classes) {
    LabelMap l(h, w);
    std::uniform_int_distribution<int> dist(0, static_cast<int>(classes) - 1);
    for (auto& v : l.values) v = static_cast<std::uint8_t>(dist(rng_));
    return l;
  }

  void check(const std::string& name, std::vector<Parameter*> params, const Fragment& f, Real step = 0) {
    GradCheckEntry e;
    e.name = name;
    e.tolerance = tol_;
    e.step = step > 0 ? step : step_;
    e.result = finite_diff_check(params, f, seed_ + entries_.size(), e.step);
    entries_.push_back(std::move(e));
  }

  std::mt19937_64& rng() { return rng_; }
  std::vector<GradCheckEntry> take() { return std::move(entries_); }

 private:
  std::mt19937_64 rng_;
  std::uint64_t seed_;
  Real step_;
  Real tol_;
  std::deque<Parameter> store_;
  std::vector<GradCheckEntry> entries_;
};

}  // namespace

std::vector<GradCheckEntry> gradcheck_suite(std::uint64_t seed, Real step, Real tolerance, Real network_step) {
  Suite s(seed, step, tolerance);
  using namespace ops;

  {
    auto& x = s.param("x", {2, 5, 5});
    auto& w = s.param("w", {3, 2, 3, 3});
    auto& b = s.param("b", {3});
    s.check("conv2d", {&x, &w, &b}, [&](Tape& t) { return conv2d(t.parameter(x), t.parameter(w), t.parameter(b), 1, 1); });
    s.check("conv2d_stride2", {&x, &w, &b},
            [&](Tape& t) { return conv2d(t.parameter(x), t.parameter(w), t.parameter(b), 2, 0); });
  }
  {
    auto& x = s.param("x", {2, 4, 4});
    s.check("relu", {&x}, [&](Tape& t) { return relu(t.parameter(x)); });
    s.check("leaky_relu", {&x}, [&](Tape& t) { return leaky_relu(t.parameter(x)); });
    s.check("sigmoid", {&x}, [&](Tape& t) { return sigmoid(t.parameter(x)); });
    s.check("global_avg_pool", {&x}, [&](Tape& t) { return global_avg_pool(t.parameter(x)); });
    s.check("nearest_upsample2x", {&x}, [&](Tape& t) { return nearest_upsample2x(t.parameter(x)); });
    s.check("maxpool2x", {&x}, [&](Tape& t) { return maxpool2x(t.parameter(x)); });
    s.check("instance_norm", {&x}, [&](Tape& t) { return instance_norm(t.parameter(x)); });
    s.check("slice_channels", {&x}, [&](Tape& t) { return slice_channels(t.parameter(x), 1, 1); });
    s.check("scale", {&x}, [&](Tape& t) { return scale(t.parameter(x), Real(-2.5)); });
    s.check("sum", {&x}, [&](Tape& t) { return sum(t.parameter(x)); });
  }
  {
    auto& a = s.param("a", {2, 3, 3});
    auto& b = s.param("b", {2, 3, 3});
    auto& c = s.param("c", {1, 3, 3});
    auto& g = s.param("g", {2});
    s.check("add", {&a, &b}, [&](Tape& t) { return add(t.parameter(a), t.parameter(b)); });
    s.check("sub", {&a, &b}, [&](Tape& t) { return sub(t.parameter(a), t.parameter(b)); });
    s.check("mul", {&a, &b}, [&](Tape& t) { return mul(t.parameter(a), t.parameter(b)); });
    s.check("concat_channels", {&a, &c}, [&](Tape& t) { return concat_channels(t.parameter(a), t.parameter(c)); });
    s.check("add_n", {&a, &b}, [&](Tape& t) {
      const Var xs[] = {t.parameter(a), t.parameter(b), t.parameter(a)};
      return add_n(xs);
    });
    s.check("gated_mix", {&a, &b, &g},
            [&](Tape& t) { return gated_mix(t.parameter(a), t.parameter(b), t.parameter(g)); });
  }
  {
    auto& x = s.param("x", {5});
    auto& w = s.param("w", {3, 5});
    auto& b = s.param("b", {3});
    s.check("linear", {&x, &w, &b}, [&](Tape& t) { return linear(t.parameter(x), t.parameter(w), t.parameter(b)); });
    auto& p = s.param("p", {1});
    auto& q = s.param("q", {1});
    s.check("mean_scalars", {&p, &q}, [&](Tape& t) {
      const Var xs[] = {t.parameter(p), t.parameter(q)};
      return mean_scalars(xs);
    });
  }
  {
    auto& z = s.param("z", {2, 4, 6});
    s.check("dft2", {&z}, [&](Tape& t) { return spectral::dft2(t.parameter(z)); });
    auto& z3 = s.param("z3", {3, 4, 4});
    s.check("dft2_odd_channels", {&z3}, [&](Tape& t) { return spectral::dft2(t.parameter(z3)); });
    s.check("fft2_amplitude", {&z}, [&](Tape& t) { return spectral::fft2(t.parameter(z)).amplitude; });
    s.check("fft2_phase", {&z}, [&](Tape& t) { return spectral::fft2(t.parameter(z)).phase; });
    s.check("fft_roundtrip", {&z}, [&](Tape& t) { return spectral::ifft2(spectral::fft2(t.parameter(z))); });
    auto& spec = s.param("spectrum", {2, 4, 4, 2});
    s.check("complex_abs", {&spec}, [&](Tape& t) { return spectral::complex_abs(t.parameter(spec)); });
    s.check("complex_arg", {&spec}, [&](Tape& t) { return spectral::complex_arg(t.parameter(spec)); });
    {
      // Perturbing one coefficient breaks conjugate symmetry on purpose.
      CheckedModeScope unchecked(false);
      s.check("idft2_real", {&spec}, [&](Tape& t) { return spectral::idft2_real(t.parameter(spec)); });
    }
    auto& amp = s.param("amplitude", {2, 4, 4}, Real(0.1), Real(2));
    auto& phase = s.param("phase", {2, 4, 4}, Real(-3), Real(3));
    s.check("polar", {&amp, &phase}, [&](Tape& t) { return spectral::polar(t.parameter(amp), t.parameter(phase)); });
    s.check("unit_phasor", {&spec}, [&](Tape& t) { return spectral::unit_phasor(t.parameter(spec)); });
    auto& phasor = s.param("phasor", {2, 4, 4, 2});
    s.check("modulate", {&amp, &phasor},
            [&](Tape& t) { return spectral::modulate(t.parameter(amp), t.parameter(phasor)); });
    s.check("amplitude_instance_norm", {&amp},
            [&](Tape& t) { return spectral::amplitude_instance_norm(t.parameter(amp)); });
    auto& gw = s.param("gate.weight", {2, 4});
    auto& gb = s.param("gate.bias", {2});
    s.check("style_gate", {&amp, &gw, &gb}, [&](Tape& t) {
      Var a = t.parameter(amp);
      return spectral::style_gate(spectral::amplitude_instance_norm(a), a,
                                  spectral::StyleGate{t.parameter(gw), t.parameter(gb)});
    });
    auto& fz = s.param("feature", {2, 8, 8});
    s.check("recompose", {&fz, &gw, &gb}, [&](Tape& t) {
      const auto spectrum = spectral::fft2(t.parameter(fz));
      Var norm = spectral::amplitude_instance_norm(spectrum.amplitude);
      Var lambdas = spectral::style_gate(norm, spectrum.amplitude, spectral::StyleGate{t.parameter(gw), t.parameter(gb)});
      return spectral::recompose(spectrum, norm, lambdas);
    });
    s.check("fsr_forward", {&fz, &gw, &gb}, [&](Tape& t) {
      return spectral::fsr_forward(t.parameter(fz), spectral::StyleGate{t.parameter(gw), t.parameter(gb)});
    });
  }
  {
    auto& f = s.param("feature", {3, 4, 4});
    const LabelMap labels = s.labels(8, 8, 2);
    s.check("class_masked_mean", {&f}, [&](Tape& t) { return *class_masked_mean(t.parameter(f), labels, 1); });
    auto& p1 = s.param("p1", {3});
    auto& p2 = s.param("p2", {2});
    auto& w = s.param("fusion.weight", {4, 5});
    auto& b = s.param("fusion.bias", {4});
    s.check("fuse", {&p1, &p2, &w, &b}, [&](Tape& t) {
      return fuse(hierarchical_concat(t.parameter(p1), t.parameter(p2)), t.parameter(w), t.parameter(b));
    });
  }
  {
    SegNetConfig cfg;
    cfg.level_channels = {2, 3, 4};
    cfg.fused_dim = 4;
    SegNet net(cfg);
    net.init_parameters(seed);
    std::normal_distribution<double> small(0.0, 0.3);
    for (auto& [id, p] : net.parameters()) {
      if (id.find(".fsr.gate.") != std::string::npos) {
        for (auto& v : p.value.data()) v = static_cast<Real>(small(s.rng()));
      }
    }
    auto& image = s.param("image", {1, 8, 8}, 0, 1);
    LabelMap labels(8, 8);
    for (std::size_t y = 2; y < 7; ++y)
      for (std::size_t x = 1; x < 6; ++x) labels.at(y, x) = 1;
    std::vector<Parameter*> params;
    for (auto& [id, p] : net.parameters()) params.push_back(&p);
    s.check("segnet_embedding", params, [&](Tape& t) {
      auto bound = net.bind(t, true);
      auto out = net.forward(bound, image.value);
      auto emb = embed_sample(net, bound, out.taps, labels);
      const Var parts[] = {*emb.at(0).encoder, *emb.at(1).encoder, *emb.at(0).decoder, *emb.at(1).decoder};
      return concat_channels(concat_channels(parts[0], parts[1]), concat_channels(parts[2], parts[3]));
    }, network_step);
    s.check("segnet_logits", params, [&](Tape& t) {
      auto bound = net.bind(t, true);
      return net.forward(bound, image.value).logits;
    }, network_step);
  }
  {
    auto& logits = s.param("logits", {2, 6, 6}, -2, 2);
    auto& logits3 = s.param("logits3", {3, 6, 6}, -2, 2);
    const LabelMap labels = s.labels(6, 6, 2);
    const LabelMap labels3 = s.labels(6, 6, 3);
    s.check("dice_loss", {&logits}, [&](Tape& t) { return dice_loss(t.parameter(logits), labels); });
    s.check("dice_loss_3class", {&logits3}, [&](Tape& t) { return dice_loss(t.parameter(logits3), labels3); });

    auto& anchor = s.param("anchor", {6});
    std::vector<Parameter*> reps;
    for (int i = 0; i < 5; ++i) reps.push_back(&s.param("rep" + std::to_string(i), {6}));
    auto contra = [&](Tape& t) {
      std::vector<Var> pos{t.parameter(*reps[0]), t.parameter(*reps[1])};
      std::vector<Var> neg{t.parameter(*reps[2]), t.parameter(*reps[3]), t.parameter(*reps[4])};
      return contra_loss(t.parameter(anchor), pos, neg, Real(0.5));
    };
    std::vector<Parameter*> contra_params{&anchor};
    contra_params.insert(contra_params.end(), reps.begin(), reps.end());
    s.check("contra_loss", contra_params, contra);

    auto& e_enc = s.param("e_enc", {6});
    auto& e_dec = s.param("e_dec", {6});
    auto& m_enc = s.param("mean_enc", {6});
    auto& m_dec = s.param("mean_dec", {6});
    s.check("consis_loss", {&e_enc, &e_dec, &m_enc, &m_dec}, [&](Tape& t) {
      return consis_loss(t.parameter(e_enc), t.parameter(e_dec), t.parameter(m_enc), t.parameter(m_dec));
    });
    std::vector<Parameter*> all{&logits, &e_enc, &e_dec};
    all.insert(all.end(), contra_params.begin(), contra_params.end());
    s.check("total_loss", all, [&](Tape& t) {
      AlignmentTerms terms;
      terms.contra = contra(t);
      terms.consis = consis_loss(t.parameter(e_enc), t.parameter(e_dec), t.constant(m_enc.value),
                                 t.constant(m_dec.value));
      return total_loss(dice_loss(t.parameter(logits), labels), terms, Real(0.7));
    });
  }
  return s.take();
}

}  // namespace fedbcs
