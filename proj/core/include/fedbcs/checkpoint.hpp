#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "fedbcs/autodiff.hpp"

namespace fedbcs {

/// FBCS1 binary checkpoint:
///   "FBCS1"
///   per parameter, in sorted identifier order:
///     u64 identifier length, identifier bytes,
///     u64 rank, rank x u64 extents,
///     numel x f64 values
/// All integers and floats little-endian.
std::vector<std::uint8_t> encode_checkpoint(const NamedTensors& params);
NamedTensors decode_checkpoint(const std::vector<std::uint8_t>& bytes);

void write_checkpoint(const std::filesystem::path& path, const NamedTensors& params);
NamedTensors read_checkpoint(const std::filesystem::path& path);

}  // namespace fedbcs
