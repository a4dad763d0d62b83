#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "fedbcs/tensor.hpp"

namespace fedbcs {

/// Integer class map [H,W], row-major.
struct LabelMap {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint8_t> values;

  LabelMap() = default;
  LabelMap(std::size_t h, std::size_t w, std::uint8_t fill = 0) : height(h), width(w), values(h * w, fill) {}

  std::uint8_t at(std::size_t y, std::size_t x) const { return values[y * width + x]; }
  std::uint8_t& at(std::size_t y, std::size_t x) { return values[y * width + x]; }
  std::size_t size() const { return values.size(); }
  std::size_t count(std::uint8_t class_id) const;

  friend bool operator==(const LabelMap&, const LabelMap&) = default;
};

/// Nearest-neighbour resampling to (h, w): output (i, j) takes the label
/// at (floor(i*H/h), floor(j*W/w)).
LabelMap downsample_nearest(const LabelMap& labels, std::size_t h, std::size_t w);

enum class Split { kTrain, kTest };

struct Sample {
  Tensor image;     // [1,H,W] in [0,1]
  LabelMap labels;  // [H,W]
  int domain = 0;
  Split split = Split::kTrain;
};

}  // namespace fedbcs
