#include "qvrl/td_core.hpp"

namespace qvrl {

void TdConfig::validate() const {
  if (!(lambda > 0.0) || !std::isfinite(lambda))
    throw PreconditionViolation("TdConfig: lambda must be > 0");
  if (!(dt > 0.0) || !std::isfinite(dt)) throw PreconditionViolation("TdConfig: dt must be > 0");
  if (!std::isfinite(epsilon)) throw PreconditionViolation("TdConfig: epsilon must be finite");
}

}  // namespace qvrl
