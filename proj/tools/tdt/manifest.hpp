#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace tdt::cli {

std::string sha256_file(const std::string& path);

/// Written next to the primary output as `<out>.manifest.json`.
struct RunManifest {
  std::string command;
  std::string config_path;
  std::uint64_t seed = 0;
  std::vector<std::string> outputs;
  double wall_clock_s = 0.0;

  void write(const std::string& primary_output) const;
};

}  // namespace tdt::cli
