#include "qvrl/errors.hpp"

namespace qvrl {

namespace {

std::string join(const std::vector<std::string>& items) {
  std::string out = "invalid configuration:";
  for (const auto& s : items) out += "\n  - " + s;
  return out;
}

}  // namespace

ConfigError::ConfigError(std::vector<std::string> problems)
    : std::runtime_error(join(problems)), problems_(std::move(problems)) {}

}  // namespace qvrl
