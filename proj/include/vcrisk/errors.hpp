#pragma once

#include <stdexcept>
#include <string>

namespace vcrisk {

struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

struct UnknownBranch : std::invalid_argument {
  explicit UnknownBranch(const std::string& what) : std::invalid_argument(what) {}
};

struct InfeasibleInitialCondition : std::runtime_error {
  explicit InfeasibleInitialCondition(const std::string& what) : std::runtime_error(what) {}
};

struct TrainingAbort : std::runtime_error {
  explicit TrainingAbort(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace vcrisk
