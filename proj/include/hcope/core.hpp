#pragma once

// Trajectory data model, returns and reward-scale normalization.

#include <cstddef>
#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace hcope {

struct DiscreteState {
  std::size_t index = 0;
  bool operator==(const DiscreteState&) const = default;
};

struct ContinuousState {
  std::vector<double> values;
  bool operator==(const ContinuousState&) const = default;
};

using State = std::variant<DiscreteState, ContinuousState>;

struct DiscreteAction {
  std::size_t index = 0;
  bool operator==(const DiscreteAction&) const = default;
};

struct ContinuousAction {
  std::vector<double> values;
  bool operator==(const ContinuousAction&) const = default;
};

using Action = std::variant<DiscreteAction, ContinuousAction>;

// Accessors throw ConfigError on a kind mismatch.
std::size_t state_index(const State& s);
const std::vector<double>& state_values(const State& s);
std::size_t action_index(const Action& a);
const std::vector<double>& action_values(const Action& a);

inline bool is_discrete(const State& s) { return std::holds_alternative<DiscreteState>(s); }
inline bool is_discrete(const Action& a) { return std::holds_alternative<DiscreteAction>(a); }

struct Step {
  State state;
  Action action;
  double reward = 0.0;
  bool operator==(const Step&) const = default;
};

/// One episode. `final_state` is the state reached after the last action;
/// model learners use it for the last transition.
struct Trajectory {
  std::vector<Step> steps;
  bool terminal = false;
  std::optional<State> final_state;

  std::size_t size() const { return steps.size(); }
  bool operator==(const Trajectory&) const = default;
};

struct Dataset {
  std::string env_id;
  std::string behavior_policy_id;
  std::vector<Trajectory> trajectories;

  std::size_t size() const { return trajectories.size(); }
  bool empty() const { return trajectories.empty(); }
  bool operator==(const Dataset&) const = default;
};

/// Episodic problem constants. Rewards lie in [r_min, r_max] on the raw scale.
struct MdpSpec {
  double gamma = 1.0;
  std::size_t horizon = 1;
  double r_min = 0.0;
  double r_max = 1.0;

  void validate() const;

  /// Σ_{u=t}^{L-1} γ^{u-t}: discounted number of remaining steps from time t.
  double discounted_steps(std::size_t t = 0) const;
  double return_min() const { return r_min * discounted_steps(0); }
  double return_max() const { return r_max * discounted_steps(0); }
  double return_range() const { return return_max() - return_min(); }

  /// Largest achievable return after shifting rewards to [0, r_max - r_min], times L.
  double shifted_return_bound() const { return static_cast<double>(horizon) * (r_max - r_min); }
};

/// Σ_t γ^t r_t over the recorded steps.
double trajectory_return(const Trajectory& traj, double gamma);

/// Affine map of a raw return onto [0, 1].
double normalize_return(double g, const MdpSpec& spec);
double denormalize_return(double u, const MdpSpec& spec);

/// Per-step image of the return normalization: (r - r_min) / (g_max - g_min), so a
/// normalized trajectory's discounted reward sum equals normalize_return of its raw return.
double normalize_reward(double r, const MdpSpec& spec);

/// Converts a raw value-to-go from step t (L - t remaining steps) to the normalized scale.
double normalize_value_to_go(double v, std::size_t t, const MdpSpec& spec);

}  // namespace hcope
