#pragma once

#include <stdexcept>
#include <string>

namespace tcm {

// Distinct error families so the CLI can map them to distinct exit codes.
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& m) : std::runtime_error(m) {}
};

struct NumericError : std::runtime_error {
  explicit NumericError(const std::string& m) : std::runtime_error(m) {}
};

struct DivergenceError : std::runtime_error {
  explicit DivergenceError(const std::string& m) : std::runtime_error(m) {}
};

struct SamplingError : std::runtime_error {
  explicit SamplingError(const std::string& m) : std::runtime_error(m) {}
};

}  // namespace tcm
