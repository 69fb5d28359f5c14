#pragma once

#include <fstream>
#include <string>

#include <json.hpp>

#include "exlab/config.hpp"
#include "exlab/spectrum.hpp"

namespace exlab::testing {

inline std::string source_path(const std::string& rel) { return std::string(EXLAB_SOURCE_DIR) + "/" + rel; }

inline const Config& default_config() {
  static const Config cfg = load_config(source_path("config/default.json"));
  return cfg;
}

inline const LinearSpectrum& default_spectrum() {
  static const LinearSpectrum s = solve_spectrum(default_config().potential, default_config().grid());
  return s;
}

}  // namespace exlab::testing
