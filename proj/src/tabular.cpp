#include "hcope/tabular.hpp"

#include <cmath>
#include <string>

#include "hcope/errors.hpp"

namespace hcope {

TabularDynamics::TabularDynamics(std::size_t state_count, std::size_t action_count)
    : states(state_count), actions(action_count), rows(state_count * action_count), initial(state_count, 0.0) {}

TabularDynamics TabularDynamics::dense(std::size_t state_count, std::size_t action_count,
                                       const std::vector<double>& p, std::vector<double> d0) {
  if (p.size() != state_count * action_count * state_count) throw ConfigError("dense kernel has the wrong size");
  TabularDynamics dyn(state_count, action_count);
  for (std::size_t s = 0; s < state_count; ++s)
    for (std::size_t a = 0; a < action_count; ++a)
      for (std::size_t n = 0; n < state_count; ++n) {
        const double q = p[(s * action_count + a) * state_count + n];
        if (q != 0.0) dyn.row(s, a).push_back({n, q});
      }
  dyn.initial = std::move(d0);
  dyn.validate();
  return dyn;
}

double TabularDynamics::prob(std::size_t s, std::size_t a, std::size_t next) const {
  double total = 0.0;
  for (const Outcome& o : row(s, a))
    if (o.next == next) total += o.prob;
  return total;
}

void TabularDynamics::validate(double tol) const {
  if (states == 0 || actions == 0) throw ConfigError("tabular dynamics need states and actions");
  if (rows.size() != states * actions) throw ConfigError("tabular dynamics row count mismatch");
  if (initial.size() != states) throw ConfigError("initial distribution has the wrong size");
  auto check = [&](double total, const std::string& what) {
    if (std::abs(total - 1.0) > tol) throw ConfigError(what + " sums to " + std::to_string(total));
  };
  double d0 = 0.0;
  for (double p : initial) {
    if (!(p >= 0.0)) throw ConfigError("initial distribution has a negative entry");
    d0 += p;
  }
  check(d0, "initial distribution");
  for (std::size_t i = 0; i < rows.size(); ++i) {
    double total = 0.0;
    for (const Outcome& o : rows[i]) {
      if (o.next >= states || !(o.prob >= 0.0)) throw ConfigError("invalid outcome in row " + std::to_string(i));
      total += o.prob;
    }
    check(total, "transition row " + std::to_string(i));
  }
}

}  // namespace hcope
