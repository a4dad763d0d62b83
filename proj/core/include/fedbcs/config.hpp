#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include "fedbcs/federation.hpp"
#include "fedbcs/synthdata.hpp"

namespace fedbcs {

/// Everything one `run` needs.
struct RunConfig {
  FederationConfig federation;
  DataSpec data;
  std::string out_dir = "fedbcs_out";
  bool checked = true;
  bool dump_data = false;

  friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

/// Flat "key = value" lines grouped by [section]; '#' starts a comment.
/// Unknown sections or keys and malformed values raise ConfigError with
/// the line number. Keys not given keep their defaults.
RunConfig parse_config(std::string_view text);
RunConfig load_config(const std::filesystem::path& path);

/// Every field, one section per group; parse_config(serialize_config(c)) == c.
std::string serialize_config(const RunConfig& config);

}  // namespace fedbcs
