#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "safevpr/core.hpp"
#include "safevpr/evaluator.hpp"

namespace safevpr::cli {

// Process exit codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitInvalid = 1;
inline constexpr int kExitUsage = 2;

/// Batch configuration for `safevpr probe`. Relative paths are resolved
/// against the manifest's directory.
struct RunManifest {
  RiskConfig risk;
  std::uint64_t seed = 0;
  std::size_t resamples = 500;
  std::vector<std::filesystem::path> calibration_tables;
  std::vector<std::filesystem::path> test_tables;
  std::vector<std::filesystem::path> feature_files;
  std::vector<evaluator::SetupDefinition> setups;
  std::vector<std::string> probes;
  std::filesystem::path output_dir = "probe_out";
};

// Parses and validates a manifest; referenced files must exist.
RunManifest load_manifest(const std::filesystem::path& path);

// Entry point shared by the executable and the tests. args excludes argv[0].
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace safevpr::cli
