#include "fedbcs/dataset.hpp"

#include <algorithm>

#include "fedbcs/errors.hpp"

namespace fedbcs {

std::size_t LabelMap::count(std::uint8_t class_id) const {
  return static_cast<std::size_t>(std::count(values.begin(), values.end(), class_id));
}

LabelMap downsample_nearest(const LabelMap& labels, std::size_t h, std::size_t w) {
  if (h == 0 || w == 0 || h > labels.height || w > labels.width) {
    throw DimensionError("downsample_nearest: target " + std::to_string(h) + "x" + std::to_string(w) +
                         " invalid for " + std::to_string(labels.height) + "x" + std::to_string(labels.width));
  }
  if (h == labels.height && w == labels.width) return labels;
  LabelMap out(h, w);
  for (std::size_t i = 0; i < h; ++i)
    for (std::size_t j = 0; j < w; ++j) out.at(i, j) = labels.at(i * labels.height / h, j * labels.width / w);
  return out;
}

}  // namespace fedbcs
