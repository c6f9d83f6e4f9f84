#pragma once

// Benchmark environments and trajectory generation.
//
// An environment is a stateless transition function. step() works on the
// simulator's internal state; observe() maps it to what the agent (and the
// recorded trajectory) sees. For MountainCar the internal state is continuous
// and the observation is the grid cell; elsewhere the two coincide.

#include <Eigen/Core>
#include <array>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "hcope/core.hpp"
#include "hcope/policy.hpp"
#include "hcope/random.hpp"
#include "hcope/tabular.hpp"

namespace hcope {

struct Transition {
  State next;
  double reward = 0.0;
  bool terminal = false;
};

struct DiscreteSpace {
  std::size_t states = 0;
  std::size_t actions = 0;
};

class Environment {
 public:
  virtual ~Environment() = default;

  virtual const std::string& id() const = 0;
  virtual const MdpSpec& spec() const = 0;

  virtual State initial_state(Rng& rng) const = 0;
  virtual Transition step(const State& s, const Action& a, Rng& rng) const = 0;
  virtual State observe(const State& internal) const { return internal; }

  /// Known reward of an observed transition (s, a, s'); model-based estimators use it.
  virtual double reward(const State& s, const Action& a, const State& next) const = 0;
  virtual bool is_terminal(const State& observed) const = 0;

  virtual std::optional<DiscreteSpace> discrete_space() const { return std::nullopt; }
};

using EnvironmentPtr = std::shared_ptr<const Environment>;

/// Finite MDP with rewards r(s, a); no terminal states, every episode lasts L steps.
class TabularMdpEnv final : public Environment {
 public:
  TabularMdpEnv(std::string id, TabularDynamics dynamics, std::vector<double> rewards, MdpSpec spec);

  const std::string& id() const override { return id_; }
  const MdpSpec& spec() const override { return spec_; }
  State initial_state(Rng& rng) const override;
  Transition step(const State& s, const Action& a, Rng& rng) const override;
  double reward(const State& s, const Action& a, const State& next) const override;
  bool is_terminal(const State&) const override { return false; }
  std::optional<DiscreteSpace> discrete_space() const override {
    return DiscreteSpace{dynamics_.states, dynamics_.actions};
  }

  const TabularDynamics& dynamics() const { return dynamics_; }
  double reward(std::size_t s, std::size_t a) const { return rewards_[s * dynamics_.actions + a]; }
  const std::vector<double>& rewards() const { return rewards_; }

 private:
  std::size_t sample_next(const std::vector<Outcome>& row, Rng& rng) const;

  std::string id_;
  TabularDynamics dynamics_;
  std::vector<double> rewards_;
  MdpSpec spec_;
};

struct MountainCarConfig {
  std::size_t position_bins = 64;
  std::size_t velocity_bins = 64;
  std::size_t frame_skip = 4;
  std::size_t horizon = 100;
  double gamma = 1.0;
  double start_position_low = -0.6;
  double start_position_high = -0.4;
};

class MountainCarEnv final : public Environment {
 public:
  static constexpr double kMinPosition = -1.2;
  static constexpr double kMaxPosition = 0.6;
  static constexpr double kMaxSpeed = 0.07;
  static constexpr double kGoalPosition = 0.5;

  explicit MountainCarEnv(MountainCarConfig config = {});

  const std::string& id() const override { return id_; }
  const MdpSpec& spec() const override { return spec_; }
  State initial_state(Rng& rng) const override;
  Transition step(const State& s, const Action& a, Rng& rng) const override;
  State observe(const State& internal) const override;
  double reward(const State& s, const Action& a, const State& next) const override;
  bool is_terminal(const State& observed) const override;
  std::optional<DiscreteSpace> discrete_space() const override { return DiscreteSpace{state_count(), 3}; }

  const MountainCarConfig& config() const { return config_; }
  std::size_t state_count() const { return config_.position_bins * config_.velocity_bins + 1; }
  std::size_t terminal_index() const { return config_.position_bins * config_.velocity_bins; }
  std::size_t cell(double position, double velocity) const;
  std::size_t position_bin(std::size_t cell) const { return cell / config_.velocity_bins; }
  std::size_t velocity_bin(std::size_t cell) const { return cell % config_.velocity_bins; }
  double velocity_bin_center(std::size_t bin) const;

  /// One underlying physics update; returns the new (position, velocity).
  static std::array<double, 2> physics(double position, double velocity, std::size_t action);

 private:
  MountainCarConfig config_;
  MdpSpec spec_;
  std::string id_ = "mountain-car-v0";
};

/// Accelerate in the direction of the cell's velocity, mixed with ε-uniform exploration.
TabularPolicy mountain_car_energy_policy(const MountainCarEnv& env, double epsilon = 0.1);

struct Rect {
  double x0 = 0, y0 = 0, x1 = 0, y1 = 0;
  bool contains(double x, double y) const { return x >= x0 && x <= x1 && y >= y0 && y <= y1; }
};

struct CliffWorldConfig {
  double dt = 0.5;
  double world_size = 10.0;  // leaving [0, size]² counts as a fall
  std::vector<Rect> cliffs = {{2.0, 5.6, 4.4, 8.0}, {5.6, 2.0, 8.0, 4.4}};
  std::array<double, 2> goal = {9.0, 9.0};
  double goal_radius = 0.75;
  std::array<double, 2> start = {1.5, 1.5};
  double start_noise = 0.1;  // std of the initial position
  double cliff_penalty = -100.0;
  double noise_variance = 0.01;  // Q = noise_variance * I
  std::size_t horizon = 50;
  double gamma = 1.0;
  // Gains of the hand-coded mean controller.
  double kp = 0.4;
  double kd = 1.0;
  double max_accel = 1.0;
};

/// Point mass on a plane: s' = A s + B a + η, η ~ N(0, Q), s = (x, y, ẋ, ẏ).
class CliffWorldEnv final : public Environment {
 public:
  explicit CliffWorldEnv(CliffWorldConfig config = {});

  const std::string& id() const override { return id_; }
  const MdpSpec& spec() const override { return spec_; }
  State initial_state(Rng& rng) const override;
  Transition step(const State& s, const Action& a, Rng& rng) const override;
  double reward(const State& s, const Action& a, const State& next) const override;
  bool is_terminal(const State& observed) const override;

  const CliffWorldConfig& config() const { return config_; }
  const Eigen::MatrixXd& a_matrix() const { return a_; }
  const Eigen::MatrixXd& b_matrix() const { return b_; }
  const Eigen::MatrixXd& noise_covariance() const { return q_; }

  bool fell(const std::vector<double>& s) const;
  bool at_goal(const std::vector<double>& s) const;

  /// Hand-coded deterministic controller π_d: PD control toward the goal, clipped.
  std::vector<double> mean_action(const std::vector<double>& s) const;

  /// A·s + B·a without noise.
  std::vector<double> mean_next(const std::vector<double>& s, const std::vector<double>& a) const;

 private:
  CliffWorldConfig config_;
  MdpSpec spec_;
  Eigen::MatrixXd a_, b_, q_, q_sqrt_;
  std::string id_ = "cliff-world-v0";
};

/// N(π_d(s), variance · I) over the 2-d acceleration.
GaussianPolicy cliff_world_policy(std::shared_ptr<const CliffWorldEnv> env, std::string id, double variance);

/// Mean-map resolver for policy files ("cliff-world-pd").
MeanResolver cliff_world_mean_resolver(std::shared_ptr<const CliffWorldEnv> env);

/// Runs one episode: stops at a terminal transition or after L steps.
Trajectory sample_trajectory(const Environment& env, const Policy& policy, Rng& rng);

Dataset sample_dataset(const Environment& env, const Policy& policy, std::size_t n, Rng& rng);

struct GroundTruth {
  double mean = 0.0;
  double std_error = 0.0;
  std::size_t rollouts = 0;
};

GroundTruth monte_carlo_ground_truth(const Environment& env, const Policy& policy, std::size_t num_rollouts,
                                     Rng& rng);

}  // namespace hcope
