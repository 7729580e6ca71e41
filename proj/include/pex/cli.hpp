// SPDX-License-Identifier: Apache-2.0
//
// The `pex` command line: prepare, train, generate, eval and replay.

#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

namespace pex::cli {

inline constexpr const char* kVersion = "0.1.0";
/// Relative input paths that do not exist are looked up under this directory.
inline constexpr const char* kDataDirEnv = "PEX_DATA_DIR";

struct RunManifest {
  std::string command;
  std::vector<std::string> argv;
  nlohmann::json config;
  std::vector<std::string> inputs;
  std::vector<std::string> outputs;
  std::uint64_t seed = 0;
  std::string version = kVersion;
  std::string started_at;

  nlohmann::json to_json() const;
  static RunManifest from_json(const nlohmann::json& j);
};

/// Exit codes: 0 success, 1 runtime failure, 2 invalid usage or config.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace pex::cli
