#include "hcope/estimator.hpp"

#include <cmath>

#include "hcope/errors.hpp"

namespace hcope {

Dataset materialize(const Dataset& ds, std::span<const double> multiplicity) {
  if (multiplicity.size() != ds.size()) throw ConfigError("multiplicity vector has the wrong length");
  Dataset out;
  out.env_id = ds.env_id;
  out.behavior_policy_id = ds.behavior_policy_id;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const double c = multiplicity[i];
    if (c < 0.0 || c != std::floor(c)) throw ConfigError("multiplicities must be non-negative integers");
    for (double k = 0; k < c; k += 1.0) out.trajectories.push_back(ds.trajectories[i]);
  }
  return out;
}

double DatasetFunctionEstimator::evaluate(std::span<const double> multiplicity) const {
  return fn_(materialize(ds_, multiplicity));
}

}  // namespace hcope
