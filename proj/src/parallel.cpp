#include "qvrl/parallel.hpp"

#include <cstdlib>
#include <string>

namespace qvrl {

int resolve_workers(std::optional<int> requested) {
  if (requested && *requested >= 1) return *requested;
  if (const char* env = std::getenv("QVRL_WORKERS")) {
    try {
      const int w = std::stoi(env);
      if (w >= 1) return w;
    } catch (...) {
    }
  }
  return 1;
}

}  // namespace qvrl
