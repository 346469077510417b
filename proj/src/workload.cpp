#include "stalesim/workload.hpp"

namespace stalesim {

double Workload::objective(const ParamVector&, std::span<const std::size_t>, ParamVector*) const {
  throw ConfigError("workload '" + kind() + "' has no deterministic objective for probing");
}

}  // namespace stalesim
