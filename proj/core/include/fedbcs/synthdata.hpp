#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <vector>

#include "fedbcs/dataset.hpp"

namespace fedbcs {

/// Nuisance applied to a content rendering: spectral gain per radial
/// frequency band, then gamma, additive low-frequency bias field and
/// Gaussian noise, then clamping to [0,1].
struct DomainStyle {
  std::vector<Real> band_gains{1, 1, 1, 1};  // band 0 holds DC
  Real gamma = 1;
  Real bias_amplitude = 0;
  Real noise_sigma = 0;

  bool is_identity() const;
  void validate() const;

  friend bool operator==(const DomainStyle&, const DomainStyle&) = default;
};

/// Unstyled sample: intensity rendering and labels of one content draw.
struct Content {
  Tensor image;  // [1,S,S]
  LabelMap labels;
};

/// Union of perturbed ellipses thresholded at the quantile that yields
/// `foreground_fraction`, rendered with soft edges, texture and distractor
/// blobs. Deterministic in `seed`.
Content render_content(std::size_t size, Real foreground_fraction, std::uint64_t seed);

/// Applies `style` to an image in [0,1]; `seed` drives the bias field
/// phase and the noise.
Tensor apply_style(const Tensor& image, const DomainStyle& style, std::uint64_t seed);

struct DomainData {
  int domain = 0;
  DomainStyle style;
  std::vector<Sample> train;
  std::vector<Sample> test;
};

/// Content depends only on (domain_id, seed), so the same arguments with
/// a different style give identical labels. Foreground fractions are
/// stratified over [0.08, 0.5] within each split.
DomainData generate_domain(int domain_id, const DomainStyle& style, std::size_t n_train, std::size_t n_test,
                           std::uint64_t seed, std::size_t size = 64);

/// Four clearly separated styles; more are derived deterministically.
std::vector<DomainStyle> default_styles(std::size_t count);

struct DataSpec {
  std::size_t image_size = 64;
  std::size_t n_train = 18;
  std::size_t n_test = 12;

  friend bool operator==(const DataSpec&, const DataSpec&) = default;
};

/// One domain per client. Styles must be pairwise distinct.
std::vector<DomainData> make_federation_data(std::size_t clients, const std::vector<DomainStyle>& styles,
                                             const DataSpec& spec, std::uint64_t seed);

/// Random flip / 90 degree rotation applied identically to image and labels.
Sample augment(const Sample& s, std::mt19937_64& rng);

/// Raw little-endian float32 images, byte masks and manifest.txt.
void dump_dataset(const std::filesystem::path& dir, const std::vector<DomainData>& data, std::uint64_t seed);

}  // namespace fedbcs
