#include <gtest/gtest.h>

#include <array>
#include <cmath>
#include <filesystem>
#include <random>

#include "fedbcs/errors.hpp"
#include "fedbcs/spectral.hpp"
#include "fedbcs/synthdata.hpp"

namespace fedbcs {
namespace {

Real foreground_fraction(const LabelMap& l) { return static_cast<Real>(l.count(1)) / static_cast<Real>(l.size()); }

Tensor amplitude(const Tensor& image) {
  Tape t;
  return spectral::fft2(t.constant(image)).amplitude.value();
}

TEST(Style, IdentityLeavesRenderingUnchanged) {
  const Content c = render_content(32, 0.3, 5);
  const DomainStyle identity;
  ASSERT_TRUE(identity.is_identity());
  EXPECT_EQ(apply_style(c.image, identity, 9), c.image);
}

TEST(Style, ValidationRejectsBadParameters) {
  DomainStyle s;
  s.gamma = 0;
  EXPECT_ANY_THROW(s.validate());
  s = DomainStyle{};
  s.band_gains = {1, -1, 1, 1};
  EXPECT_ANY_THROW(s.validate());
  s = DomainStyle{};
  s.noise_sigma = -0.1;
  EXPECT_ANY_THROW(s.validate());
}

TEST(Style, OutputStaysInUnitInterval) {
  const Content c = render_content(32, 0.3, 6);
  for (const auto& style : default_styles(4)) {
    const Tensor img = apply_style(c.image, style, 3);
    for (Real v : img.data()) {
      EXPECT_GE(v, 0);
      EXPECT_LE(v, 1);
    }
  }
}

TEST(Content, ForegroundFractionIsHit) {
  for (Real f : {0.08, 0.2, 0.35, 0.5}) {
    const Content c = render_content(64, f, 17);
    EXPECT_NEAR(foreground_fraction(c.labels), f, 0.01);
  }
}

TEST(Domain, SameContentTwoStylesGiveSameLabelsDifferentImages) {
  const auto styles = default_styles(2);
  const auto a = generate_domain(0, styles[0], 5, 3, 21, 32);
  const auto b = generate_domain(0, styles[1], 5, 3, 21, 32);
  for (std::size_t i = 0; i < a.train.size(); ++i) {
    EXPECT_EQ(a.train[i].labels, b.train[i].labels);
    EXPECT_NE(a.train[i].image, b.train[i].image);
  }
  for (std::size_t i = 0; i < a.test.size(); ++i) EXPECT_EQ(a.test[i].labels, b.test[i].labels);
}

TEST(Domain, ForegroundWithinFiveToSixtyPercent) {
  const auto d = generate_domain(1, default_styles(2)[1], 20, 10, 4);
  for (const auto* split : {&d.train, &d.test}) {
    for (const auto& s : *split) {
      const Real f = foreground_fraction(s.labels);
      EXPECT_GE(f, 0.05);
      EXPECT_LE(f, 0.60);
      EXPECT_EQ(s.image.shape(), (Shape{1, 64, 64}));
    }
  }
}

TEST(Federation, LabelDistributionMatchesAcrossDomains) {
  const auto data = make_federation_data(4, default_styles(4), DataSpec{64, 30, 10}, 8);
  auto histogram = [](const std::vector<Sample>& samples) {
    std::array<Real, 5> h{};
    for (const auto& s : samples) {
      const auto bin = std::min<std::size_t>(4, static_cast<std::size_t>(foreground_fraction(s.labels) / 0.12));
      h[bin] += Real{1} / static_cast<Real>(samples.size());
    }
    return h;
  };
  const auto ref = histogram(data[0].train);
  for (std::size_t m = 1; m < data.size(); ++m) {
    const auto h = histogram(data[m].train);
    for (std::size_t b = 0; b < h.size(); ++b) EXPECT_NEAR(h[b], ref[b], 0.02) << "domain " << m << " bin " << b;
  }
}

// Mean amplitude per integer radius of the (wrapped) frequency index.
std::vector<Real> radial_profile(const Tensor& amp) {
  const std::size_t n = amp.extent(1);
  std::vector<Real> sum(n, 0), count(n, 0);
  for (std::size_t u = 0; u < n; ++u)
    for (std::size_t v = 0; v < n; ++v) {
      const auto fu = static_cast<Real>(std::min(u, n - u)), fv = static_cast<Real>(std::min(v, n - v));
      const auto r = static_cast<std::size_t>(std::lround(std::sqrt(fu * fu + fv * fv)));
      if (r >= n) continue;
      sum[r] += amp.at(0, u, v);
      count[r] += 1;
    }
  for (std::size_t r = 0; r < n; ++r)
    if (count[r] > 0) sum[r] /= count[r];
  return sum;
}

Real euclidean(const std::vector<Real>& a, const std::vector<Real>& b) {
  Real d = 0;
  for (std::size_t i = 0; i < a.size(); ++i) d += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(d);
}

// Mean pairwise distance within domains and across domains.
std::pair<Real, Real> intra_inter(const std::vector<std::vector<std::vector<Real>>>& features) {
  Real intra = 0, inter = 0;
  std::size_t n_intra = 0, n_inter = 0;
  for (std::size_t a = 0; a < features.size(); ++a)
    for (std::size_t b = a; b < features.size(); ++b)
      for (std::size_t i = 0; i < features[a].size(); ++i)
        for (std::size_t j = a == b ? i + 1 : 0; j < features[b].size(); ++j) {
          const Real d = euclidean(features[a][i], features[b][j]);
          if (a == b) {
            intra += d;
            ++n_intra;
          } else {
            inter += d;
            ++n_inter;
          }
        }
  return {intra / static_cast<Real>(n_intra), inter / static_cast<Real>(n_inter)};
}

TEST(Federation, InterDomainSpectralDistanceAtLeastTwiceIntra) {
  const auto data = make_federation_data(4, default_styles(4), DataSpec{64, 50, 1}, 3);
  std::vector<std::vector<std::vector<Real>>> full(data.size()), radial(data.size());
  for (std::size_t m = 0; m < data.size(); ++m)
    for (const auto& s : data[m].train) {
      const Tensor amp = amplitude(s.image);
      full[m].emplace_back(amp.data().begin(), amp.data().end());
      radial[m].push_back(radial_profile(amp));
    }
  // Style gains act per radial band; the radial profile factors out blob
  // position and orientation, which dominate the full 2-D spectrum.
  const auto [intra, inter] = intra_inter(radial);
  EXPECT_GE(inter, 2 * intra) << "inter " << inter << " intra " << intra;
  const auto [full_intra, full_inter] = intra_inter(full);
  EXPECT_GT(full_inter, full_intra);
}

TEST(Federation, RegenerationIsBitIdentical) {
  const auto a = make_federation_data(3, default_styles(3), DataSpec{32, 4, 2}, 99);
  const auto b = make_federation_data(3, default_styles(3), DataSpec{32, 4, 2}, 99);
  for (std::size_t m = 0; m < 3; ++m) {
    ASSERT_EQ(a[m].train.size(), b[m].train.size());
    for (std::size_t i = 0; i < a[m].train.size(); ++i) {
      EXPECT_EQ(a[m].train[i].image, b[m].train[i].image);
      EXPECT_EQ(a[m].train[i].labels, b[m].train[i].labels);
    }
  }
  const auto c = make_federation_data(3, default_styles(3), DataSpec{32, 4, 2}, 100);
  EXPECT_NE(a[0].train[0].image, c[0].train[0].image);
}

TEST(Federation, DuplicateStylesRejected) {
  const std::vector<DomainStyle> same(2, default_styles(1)[0]);
  EXPECT_ANY_THROW(make_federation_data(2, same, DataSpec{32, 2, 1}, 1));
}

TEST(Augment, TransformsImageAndLabelsTogether) {
  const auto d = generate_domain(0, default_styles(1)[0], 3, 1, 2, 32);
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 10; ++trial) {
    const Sample& s = d.train[trial % 3];
    const Sample a = augment(s, rng);
    EXPECT_EQ(a.labels.count(1), s.labels.count(1));
    // Each label pixel keeps the image value it had before the transform.
    Real sum_fg_before = 0, sum_fg_after = 0;
    for (std::size_t i = 0; i < s.labels.size(); ++i) {
      if (s.labels.values[i] == 1) sum_fg_before += s.image[i];
      if (a.labels.values[i] == 1) sum_fg_after += a.image[i];
    }
    EXPECT_NEAR(sum_fg_before, sum_fg_after, 1e-9);
  }
}

TEST(Dump, WritesManifestAndRawFiles) {
  const auto dir = std::filesystem::temp_directory_path() / "fedbcs_dump_test";
  std::filesystem::remove_all(dir);
  const auto data = make_federation_data(2, default_styles(2), DataSpec{16, 2, 1}, 5);
  dump_dataset(dir, data, 5);
  EXPECT_TRUE(std::filesystem::exists(dir / "manifest.txt"));
  std::size_t files = 0;
  for (const auto& e : std::filesystem::recursive_directory_iterator(dir)) files += e.is_regular_file();
  EXPECT_GT(files, 1u);
  std::filesystem::remove_all(dir);
}

}  // namespace
}  // namespace fedbcs
