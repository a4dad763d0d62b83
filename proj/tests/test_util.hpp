#pragma once

#include <cstdint>
#include <random>

#include "fedbcs/autodiff.hpp"
#include "fedbcs/dataset.hpp"

namespace fedbcs::testing {

inline Tensor random_tensor(Shape shape, std::mt19937_64& rng, Real lo = -1, Real hi = 1) {
  Tensor t(std::move(shape));
  std::uniform_real_distribution<double> dist(lo, hi);
  for (auto& v : t.data()) v = static_cast<Real>(dist(rng));
  return t;
}

inline Tensor normal_tensor(Shape shape, std::mt19937_64& rng, Real sigma = 1) {
  Tensor t(std::move(shape));
  std::normal_distribution<double> dist(0.0, sigma);
  for (auto& v : t.data()) v = static_cast<Real>(dist(rng));
  return t;
}

inline LabelMap random_labels(std::size_t h, std::size_t w, int classes, std::mt19937_64& rng) {
  LabelMap l(h, w);
  std::uniform_int_distribution<int> dist(0, classes - 1);
  for (auto& v : l.values) v = static_cast<std::uint8_t>(dist(rng));
  return l;
}

/// Label map with a filled rectangle of class 1.
inline LabelMap box_labels(std::size_t h, std::size_t w, std::size_t y0, std::size_t y1, std::size_t x0,
                           std::size_t x1) {
  LabelMap l(h, w);
  for (std::size_t y = y0; y < y1; ++y)
    for (std::size_t x = x0; x < x1; ++x) l.at(y, x) = 1;
  return l;
}

}  // namespace fedbcs::testing
