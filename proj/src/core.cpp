#include "hcope/core.hpp"

#include <cmath>

#include "hcope/errors.hpp"

namespace hcope {

std::size_t state_index(const State& s) {
  if (const auto* d = std::get_if<DiscreteState>(&s)) return d->index;
  throw ConfigError("expected a discrete state");
}

const std::vector<double>& state_values(const State& s) {
  if (const auto* c = std::get_if<ContinuousState>(&s)) return c->values;
  throw ConfigError("expected a continuous state");
}

std::size_t action_index(const Action& a) {
  if (const auto* d = std::get_if<DiscreteAction>(&a)) return d->index;
  throw ConfigError("expected a discrete action");
}

const std::vector<double>& action_values(const Action& a) {
  if (const auto* c = std::get_if<ContinuousAction>(&a)) return c->values;
  throw ConfigError("expected a continuous action");
}

void MdpSpec::validate() const {
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw ConfigError("gamma must lie in [0, 1]");
  if (horizon == 0) throw ConfigError("horizon must be positive");
  if (!std::isfinite(r_min) || !std::isfinite(r_max)) throw ConfigError("reward bounds must be finite");
  if (r_min > r_max) throw ConfigError("r_min exceeds r_max");
}

double MdpSpec::discounted_steps(std::size_t t) const {
  if (t >= horizon) return 0.0;
  const std::size_t remaining = horizon - t;
  if (gamma == 1.0) return static_cast<double>(remaining);
  // Summed term by term so gamma = 0 and gamma close to 1 behave identically.
  double sum = 0.0, power = 1.0;
  for (std::size_t u = 0; u < remaining; ++u) {
    sum += power;
    power *= gamma;
  }
  return sum;
}

double trajectory_return(const Trajectory& traj, double gamma) {
  if (traj.steps.empty()) throw ConfigError("empty trajectory");
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw ConfigError("gamma must lie in [0, 1]");
  double g = 0.0, discount = 1.0;
  for (const Step& step : traj.steps) {
    g += discount * step.reward;
    discount *= gamma;
  }
  return g;
}

namespace {

double checked_range(const MdpSpec& spec) {
  const double range = spec.return_range();
  if (!(range > 0.0)) throw NumericError("degenerate reward range");
  return range;
}

}  // namespace

double normalize_return(double g, const MdpSpec& spec) {
  return (g - spec.return_min()) / checked_range(spec);
}

double denormalize_return(double u, const MdpSpec& spec) {
  return spec.return_min() + u * checked_range(spec);
}

double normalize_reward(double r, const MdpSpec& spec) {
  return (r - spec.r_min) / checked_range(spec);
}

double normalize_value_to_go(double v, std::size_t t, const MdpSpec& spec) {
  return (v - spec.r_min * spec.discounted_steps(t)) / checked_range(spec);
}

}  // namespace hcope
