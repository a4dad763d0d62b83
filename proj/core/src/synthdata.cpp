#include "fedbcs/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <numbers>

#include "fedbcs/errors.hpp"
#include "fedbcs/fft.hpp"
#include "fedbcs/rng.hpp"

namespace fedbcs {

namespace {

constexpr Real kPi = std::numbers::pi_v<Real>;
constexpr Real kMinFraction = Real(0.08);
constexpr Real kMaxFraction = Real(0.5);

Real uniform(std::mt19937_64& rng, Real lo, Real hi) {
  return std::uniform_real_distribution<Real>(lo, hi)(rng);
}

struct Ellipse {
  Real cy, cx, ry, rx, angle;
  Real a2, p2, a3, p3;  // boundary perturbation harmonics

  // Boundary-normalized radius: < 1 inside.
  Real rho(Real y, Real x) const {
    const Real dy = y - cy, dx = x - cx;
    const Real c = std::cos(angle), s = std::sin(angle);
    const Real u = (c * dx + s * dy) / rx;
    const Real v = (-s * dx + c * dy) / ry;
    const Real theta = std::atan2(v, u);
    const Real wobble = 1 + a2 * std::sin(2 * theta + p2) + a3 * std::sin(3 * theta + p3);
    return std::sqrt(u * u + v * v) / wobble;
  }
};

Ellipse random_ellipse(std::mt19937_64& rng, Real size, Real r_lo, Real r_hi, Real margin) {
  Ellipse e{};
  e.cy = uniform(rng, margin, 1 - margin) * size;
  e.cx = uniform(rng, margin, 1 - margin) * size;
  e.ry = uniform(rng, r_lo, r_hi) * size;
  e.rx = uniform(rng, r_lo, r_hi) * size;
  e.angle = uniform(rng, 0, kPi);
  e.a2 = uniform(rng, 0, Real(0.15));
  e.p2 = uniform(rng, 0, 2 * kPi);
  e.a3 = uniform(rng, 0, Real(0.1));
  e.p3 = uniform(rng, 0, 2 * kPi);
  return e;
}

Real smoothstep(Real edge0, Real edge1, Real x) {
  const Real t = std::clamp((x - edge0) / (edge1 - edge0), Real{0}, Real{1});
  return t * t * (3 - 2 * t);
}

}  // namespace

bool DomainStyle::is_identity() const {
  return std::all_of(band_gains.begin(), band_gains.end(), [](Real g) { return g == 1; }) && gamma == 1 &&
         bias_amplitude == 0 && noise_sigma == 0;
}

void DomainStyle::validate() const {
  if (band_gains.empty()) throw ContractError("domain style: no frequency bands");
  for (Real g : band_gains) {
    if (!(g > 0)) throw ContractError("domain style: band gains must be positive");
  }
  if (!(gamma > 0)) throw ContractError("domain style: gamma must be positive");
  if (bias_amplitude < 0 || noise_sigma < 0) throw ContractError("domain style: negative bias or noise");
}

Content render_content(std::size_t size, Real foreground_fraction, std::uint64_t seed) {
  if (size < 8) throw DimensionError("render_content: size must be >= 8");
  std::mt19937_64 rng(seed);
  const Real s = static_cast<Real>(size);
  const std::size_t n = size * size;

  const int shapes = std::uniform_int_distribution<int>(1, 3)(rng);
  std::vector<Ellipse> blobs;
  for (int k = 0; k < shapes; ++k) blobs.push_back(random_ellipse(rng, s, Real(0.1), Real(0.28), Real(0.25)));

  // Signed closeness to the nearest blob boundary; thresholding it at a
  // quantile fixes the foreground fraction exactly.
  std::vector<Real> field(n);
  for (std::size_t y = 0; y < size; ++y) {
    for (std::size_t x = 0; x < size; ++x) {
      Real best = -std::numeric_limits<Real>::infinity();
      for (const auto& e : blobs) best = std::max(best, 1 - e.rho(static_cast<Real>(y), static_cast<Real>(x)));
      field[y * size + x] = best;
    }
  }
  std::vector<Real> sorted = field;
  std::sort(sorted.begin(), sorted.end());
  const auto k = std::clamp<std::size_t>(
      static_cast<std::size_t>(std::lround(foreground_fraction * static_cast<Real>(n))), 1, n - 1);
  const Real threshold = sorted[n - k];

  Content c;
  c.labels = LabelMap(size, size);
  c.image = Tensor::zeros({1, size, size});

  const int distractors = std::uniform_int_distribution<int>(1, 3)(rng);
  std::vector<Ellipse> decoys;
  for (int d = 0; d < distractors; ++d) decoys.push_back(random_ellipse(rng, s, Real(0.04), Real(0.08), Real(0.1)));

  struct Wave {
    Real fy, fx, phase, amp;
  };
  std::vector<Wave> texture;
  for (int w = 0; w < 6; ++w) {
    texture.push_back({uniform(rng, -4, 4), uniform(rng, -4, 4), uniform(rng, 0, 2 * kPi), uniform(rng, 0.01, 0.04)});
  }
  const Real fg_level = uniform(rng, Real(0.7), Real(0.8));
  const Real bg_level = uniform(rng, Real(0.25), Real(0.35));

  const Real edge = Real(0.08);
  for (std::size_t y = 0; y < size; ++y) {
    for (std::size_t x = 0; x < size; ++x) {
      const std::size_t i = y * size + x;
      const bool fg = field[i] >= threshold;
      c.labels.values[i] = fg ? 1 : 0;
      const Real soft = smoothstep(threshold - edge, threshold + edge, field[i]);
      Real decoy = 0;
      for (const auto& e : decoys) {
        decoy = std::max(decoy, 1 - smoothstep(Real(0.8), Real(1.2), e.rho(static_cast<Real>(y), static_cast<Real>(x))));
      }
      Real tex = 0;
      for (const auto& w : texture) {
        tex += w.amp * std::sin(2 * kPi * (w.fy * static_cast<Real>(y) + w.fx * static_cast<Real>(x)) / s + w.phase);
      }
      const Real v = bg_level + (fg_level - bg_level) * soft + Real(0.25) * decoy * (1 - soft) + tex;
      c.image[i] = std::clamp(v, Real{0}, Real{1});
    }
  }
  return c;
}

Tensor apply_style(const Tensor& image, const DomainStyle& style, std::uint64_t seed) {
  style.validate();
  if (image.rank() != 3 || image.extent(0) != 1) throw DimensionError("apply_style: image must be [1,H,W]");
  if (style.is_identity()) return image;
  const std::size_t h = image.extent(1), w = image.extent(2), n = h * w;
  std::mt19937_64 rng(seed);

  std::vector<fft::Complex> spec(n);
  for (std::size_t i = 0; i < n; ++i) spec[i] = image[i];
  fft::transform_2d(spec, h, w, fft::Direction::kForward);
  const std::size_t bands = style.band_gains.size();
  const Real r_max = std::hypot(static_cast<Real>(h / 2), static_cast<Real>(w / 2));
  for (std::size_t u = 0; u < h; ++u) {
    for (std::size_t v = 0; v < w; ++v) {
      const Real fu = static_cast<Real>(std::min(u, h - u));
      const Real fv = static_cast<Real>(std::min(v, w - v));
      const auto band = std::min(bands - 1, static_cast<std::size_t>(std::hypot(fu, fv) / r_max * static_cast<Real>(bands)));
      spec[u * w + v] *= style.band_gains[band];
    }
  }
  fft::transform_2d(spec, h, w, fft::Direction::kInverse);

  const Real phase = uniform(rng, 0, 2 * kPi);
  const Real dir = uniform(rng, 0, 2 * kPi);
  std::normal_distribution<Real> noise(0, style.noise_sigma > 0 ? style.noise_sigma : Real{1});
  Tensor out(image.shape());
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      const std::size_t i = y * w + x;
      Real v = std::clamp(spec[i].real() / static_cast<Real>(n), Real{0}, Real{1});
      v = std::pow(v, style.gamma);
      const Real t = (std::cos(dir) * static_cast<Real>(y) / static_cast<Real>(h) +
                      std::sin(dir) * static_cast<Real>(x) / static_cast<Real>(w));
      v += style.bias_amplitude * std::cos(kPi * t + phase);
      if (style.noise_sigma > 0) v += noise(rng);
      out[i] = std::clamp(v, Real{0}, Real{1});
    }
  }
  return out;
}

DomainData generate_domain(int domain_id, const DomainStyle& style, std::size_t n_train, std::size_t n_test,
                           std::uint64_t seed, std::size_t size) {
  if (n_train == 0 || n_test == 0) throw ContractError("generate_domain: n_train and n_test must be >= 1");
  style.validate();
  DomainData d;
  d.domain = domain_id;
  d.style = style;
  const auto dom = static_cast<std::uint64_t>(domain_id);
  for (Split split : {Split::kTrain, Split::kTest}) {
    const std::size_t count = split == Split::kTrain ? n_train : n_test;
    const auto tag = static_cast<std::uint64_t>(split);
    // Shared across domains so every domain sees the same foreground fractions.
    std::mt19937_64 strata(mix_seed({seed, tag, 0xf7ac}));
    auto& bucket = split == Split::kTrain ? d.train : d.test;
    for (std::size_t i = 0; i < count; ++i) {
      const Real u = (static_cast<Real>(i) + uniform(strata, 0, 1)) / static_cast<Real>(count);
      const Real fraction = kMinFraction + (kMaxFraction - kMinFraction) * u;
      Content c = render_content(size, fraction, mix_seed({seed, dom, tag, i, 0xc0}));
      Sample s;
      s.image = apply_style(c.image, style, mix_seed({seed, dom, tag, i, 0x57}));
      s.labels = std::move(c.labels);
      s.domain = domain_id;
      s.split = split;
      bucket.push_back(std::move(s));
    }
  }
  return d;
}

std::vector<DomainStyle> default_styles(std::size_t count) {
  std::vector<DomainStyle> styles{
      {{1.0, 1.0, 1.0, 1.0}, 1.0, 0.0, 0.02},
      {{1.0, 1.8, 2.2, 2.0}, 0.6, 0.12, 0.05},
      {{1.0, 0.5, 0.3, 0.2}, 1.8, 0.06, 0.01},
      {{0.8, 1.3, 0.6, 2.5}, 1.3, 0.18, 0.07},
  };
  std::mt19937_64 rng(0x5eed);
  while (styles.size() < count) {
    DomainStyle s;
    for (auto& g : s.band_gains) g = uniform(rng, Real(0.3), Real(2.5));
    s.band_gains[0] = uniform(rng, Real(0.8), Real(1.1));
    s.gamma = uniform(rng, Real(0.6), Real(1.8));
    s.bias_amplitude = uniform(rng, 0, Real(0.2));
    s.noise_sigma = uniform(rng, 0, Real(0.07));
    styles.push_back(s);
  }
  styles.resize(count);
  return styles;
}

std::vector<DomainData> make_federation_data(std::size_t clients, const std::vector<DomainStyle>& styles,
                                             const DataSpec& spec, std::uint64_t seed) {
  if (clients == 0) throw ContractError("make_federation_data: need at least one client");
  if (styles.size() < clients) throw ContractError("make_federation_data: fewer styles than clients");
  for (std::size_t a = 0; a < clients; ++a) {
    for (std::size_t b = a + 1; b < clients; ++b) {
      if (styles[a] == styles[b]) throw ContractError("make_federation_data: styles must be distinct");
    }
  }
  std::vector<DomainData> out;
  for (std::size_t m = 0; m < clients; ++m) {
    out.push_back(generate_domain(static_cast<int>(m), styles[m], spec.n_train, spec.n_test, seed, spec.image_size));
  }
  return out;
}

Sample augment(const Sample& s, std::mt19937_64& rng) {
  const std::size_t h = s.labels.height, w = s.labels.width;
  if (h != w) return s;
  const auto op = std::uniform_int_distribution<int>(0, 7)(rng);
  if (op == 0) return s;
  const bool flip = (op & 4) != 0;
  const int turns = op & 3;
  Sample out = s;
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      std::size_t sy = y, sx = flip ? w - 1 - x : x;
      for (int t = 0; t < turns; ++t) {
        const std::size_t ny = sx, nx = h - 1 - sy;
        sy = ny;
        sx = nx;
      }
      out.labels.at(y, x) = s.labels.at(sy, sx);
      for (std::size_t c = 0; c < s.image.extent(0); ++c) out.image.at(c, y, x) = s.image.at(c, sy, sx);
    }
  }
  return out;
}

void dump_dataset(const std::filesystem::path& dir, const std::vector<DomainData>& data, std::uint64_t seed) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("dump_dataset: cannot create " + dir.string() + ": " + ec.message());
  std::ofstream manifest(dir / "manifest.txt");
  if (!manifest) throw IoError("dump_dataset: cannot write manifest in " + dir.string());
  manifest << "seed " << seed << "\n";
  for (const auto& d : data) {
    manifest << "domain " << d.domain << " train " << d.train.size() << " test " << d.test.size() << " gains";
    for (Real g : d.style.band_gains) manifest << ' ' << g;
    manifest << " gamma " << d.style.gamma << " bias " << d.style.bias_amplitude << " noise " << d.style.noise_sigma
             << "\n";
    for (Split split : {Split::kTrain, Split::kTest}) {
      const auto& bucket = split == Split::kTrain ? d.train : d.test;
      const char* tag = split == Split::kTrain ? "train" : "test";
      for (std::size_t i = 0; i < bucket.size(); ++i) {
        const Sample& s = bucket[i];
        const std::string stem = "d" + std::to_string(d.domain) + "_" + tag + "_" + std::to_string(i);
        std::ofstream img(dir / (stem + ".f32"), std::ios::binary);
        for (Real v : s.image.data()) {
          const float f = static_cast<float>(v);
          unsigned char bytes[4];
          std::uint32_t bits;
          std::memcpy(&bits, &f, 4);
          for (int b = 0; b < 4; ++b) bytes[b] = static_cast<unsigned char>(bits >> (8 * b));
          img.write(reinterpret_cast<const char*>(bytes), 4);
        }
        std::ofstream mask(dir / (stem + ".u8"), std::ios::binary);
        mask.write(reinterpret_cast<const char*>(s.labels.values.data()),
                   static_cast<std::streamsize>(s.labels.values.size()));
        if (!img || !mask) throw IoError("dump_dataset: write failed for " + stem);
        manifest << stem << " shape " << s.image.extent(0) << 'x' << s.image.extent(1) << 'x' << s.image.extent(2)
                 << " foreground " << s.labels.count(1) << "\n";
      }
    }
  }
}

}  // namespace fedbcs
