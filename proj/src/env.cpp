#include "hcope/env.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>

#include "hcope/errors.hpp"

namespace hcope {

// ---------------------------------------------------------------------------
// TabularMdpEnv

TabularMdpEnv::TabularMdpEnv(std::string id, TabularDynamics dynamics, std::vector<double> rewards, MdpSpec spec)
    : id_(std::move(id)), dynamics_(std::move(dynamics)), rewards_(std::move(rewards)), spec_(spec) {
  dynamics_.validate();
  spec_.validate();
  if (rewards_.size() != dynamics_.states * dynamics_.actions) throw ConfigError("reward table has the wrong size");
  for (double r : rewards_)
    if (r < spec_.r_min || r > spec_.r_max) throw ConfigError("reward outside [r_min, r_max]");
}

std::size_t TabularMdpEnv::sample_next(const std::vector<Outcome>& row, Rng& rng) const {
  const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  double running = 0.0;
  for (const Outcome& o : row) {
    running += o.prob;
    if (u < running) return o.next;
  }
  return row.back().next;
}

State TabularMdpEnv::initial_state(Rng& rng) const {
  const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  double running = 0.0;
  std::size_t last = 0;
  for (std::size_t s = 0; s < dynamics_.states; ++s) {
    if (dynamics_.initial[s] <= 0.0) continue;
    running += dynamics_.initial[s];
    last = s;
    if (u < running) return DiscreteState{s};
  }
  return DiscreteState{last};
}

Transition TabularMdpEnv::step(const State& s, const Action& a, Rng& rng) const {
  const std::size_t si = state_index(s), ai = action_index(a);
  if (si >= dynamics_.states) throw ConfigError("state index out of range");
  if (ai >= dynamics_.actions) throw ConfigError("invalid action index " + std::to_string(ai));
  return {DiscreteState{sample_next(dynamics_.row(si, ai), rng)}, reward(si, ai), false};
}

double TabularMdpEnv::reward(const State& s, const Action& a, const State&) const {
  return reward(state_index(s), action_index(a));
}

// ---------------------------------------------------------------------------
// MountainCarEnv

MountainCarEnv::MountainCarEnv(MountainCarConfig config) : config_(config) {
  if (config_.position_bins == 0 || config_.velocity_bins == 0) throw ConfigError("grid needs at least one bin");
  if (config_.frame_skip == 0) throw ConfigError("frame_skip must be >= 1");
  if (config_.start_position_low > config_.start_position_high || config_.start_position_low < kMinPosition ||
      config_.start_position_high >= kGoalPosition)
    throw ConfigError("start positions must lie in [-1.2, 0.5)");
  spec_ = MdpSpec{config_.gamma, config_.horizon, -1.0, 0.0};
  spec_.validate();
}

std::array<double, 2> MountainCarEnv::physics(double position, double velocity, std::size_t action) {
  velocity += 0.001 * (static_cast<double>(action) - 1.0) - 0.0025 * std::cos(3.0 * position);
  velocity = std::clamp(velocity, -kMaxSpeed, kMaxSpeed);
  position += velocity;
  if (position < kMinPosition) {
    position = kMinPosition;
    velocity = 0.0;
  }
  position = std::min(position, kMaxPosition);
  return {position, velocity};
}

std::size_t MountainCarEnv::cell(double position, double velocity) const {
  if (position >= kGoalPosition) return terminal_index();
  auto bin = [](double x, double lo, double hi, std::size_t bins) {
    const double f = (x - lo) / (hi - lo) * static_cast<double>(bins);
    if (!(f > 0.0)) return std::size_t{0};
    return std::min(static_cast<std::size_t>(f), bins - 1);
  };
  const std::size_t pb = bin(position, kMinPosition, kMaxPosition, config_.position_bins);
  const std::size_t vb = bin(velocity, -kMaxSpeed, kMaxSpeed, config_.velocity_bins);
  return pb * config_.velocity_bins + vb;
}

double MountainCarEnv::velocity_bin_center(std::size_t bin) const {
  const double width = 2.0 * kMaxSpeed / static_cast<double>(config_.velocity_bins);
  return -kMaxSpeed + (static_cast<double>(bin) + 0.5) * width;
}

State MountainCarEnv::initial_state(Rng& rng) const {
  const double p =
      std::uniform_real_distribution<double>(config_.start_position_low, config_.start_position_high)(rng);
  return ContinuousState{{p, 0.0}};
}

Transition MountainCarEnv::step(const State& s, const Action& a, Rng&) const {
  const auto& sv = state_values(s);
  if (sv.size() != 2) throw ConfigError("mountain car state is (position, velocity)");
  const std::size_t ai = action_index(a);
  if (ai > 2) throw ConfigError("invalid action index " + std::to_string(ai));
  double p = sv[0], v = sv[1];
  if (p >= kGoalPosition) return {s, 0.0, true};
  for (std::size_t k = 0; k < config_.frame_skip; ++k) {
    const auto next = physics(p, v, ai);
    p = next[0];
    v = next[1];
    if (p >= kGoalPosition) break;
  }
  return {ContinuousState{{p, v}}, -1.0, p >= kGoalPosition};
}

State MountainCarEnv::observe(const State& internal) const {
  const auto& sv = state_values(internal);
  return DiscreteState{cell(sv[0], sv[1])};
}

double MountainCarEnv::reward(const State& s, const Action&, const State&) const {
  return is_terminal(s) ? 0.0 : -1.0;
}

bool MountainCarEnv::is_terminal(const State& observed) const {
  if (is_discrete(observed)) return state_index(observed) == terminal_index();
  return state_values(observed).at(0) >= kGoalPosition;
}

TabularPolicy mountain_car_energy_policy(const MountainCarEnv& env, double epsilon) {
  if (!(epsilon >= 0.0 && epsilon <= 1.0)) throw ConfigError("epsilon must lie in [0, 1]");
  const std::size_t states = env.state_count();
  std::vector<double> probs(states * 3, epsilon / 3.0);
  for (std::size_t s = 0; s < env.terminal_index(); ++s) {
    const double v = env.velocity_bin_center(env.velocity_bin(s));
    probs[s * 3 + (v >= 0.0 ? 2 : 0)] += 1.0 - epsilon;
  }
  // Any row works at the absorbing goal cell; keep it uniform.
  for (std::size_t a = 0; a < 3; ++a) probs[env.terminal_index() * 3 + a] = 1.0;
  return TabularPolicy("mc-energy-eps" + std::to_string(epsilon), states, 3, std::move(probs));
}

// ---------------------------------------------------------------------------
// CliffWorldEnv

CliffWorldEnv::CliffWorldEnv(CliffWorldConfig config) : config_(std::move(config)) {
  if (!(config_.dt > 0.0)) throw ConfigError("dt must be positive");
  if (!(config_.noise_variance >= 0.0)) throw ConfigError("noise variance must be >= 0");
  if (!(config_.cliff_penalty < 0.0)) throw ConfigError("cliff penalty must be negative");
  spec_ = MdpSpec{config_.gamma, config_.horizon, config_.cliff_penalty, 0.0};
  spec_.validate();

  const double dt = config_.dt;
  a_ = Eigen::MatrixXd::Identity(4, 4);
  a_(0, 2) = dt;
  a_(1, 3) = dt;
  b_ = Eigen::MatrixXd::Zero(4, 2);
  b_(0, 0) = 0.5 * dt * dt;
  b_(1, 1) = 0.5 * dt * dt;
  b_(2, 0) = dt;
  b_(3, 1) = dt;
  q_ = config_.noise_variance * Eigen::MatrixXd::Identity(4, 4);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(q_);
  q_sqrt_ = eig.eigenvectors() * eig.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal() *
            eig.eigenvectors().transpose();
}

bool CliffWorldEnv::fell(const std::vector<double>& s) const {
  const double x = s.at(0), y = s.at(1);
  if (!(x >= 0.0 && x <= config_.world_size && y >= 0.0 && y <= config_.world_size)) return true;
  return std::any_of(config_.cliffs.begin(), config_.cliffs.end(), [&](const Rect& r) { return r.contains(x, y); });
}

bool CliffWorldEnv::at_goal(const std::vector<double>& s) const {
  return std::hypot(s.at(0) - config_.goal[0], s.at(1) - config_.goal[1]) < config_.goal_radius;
}

bool CliffWorldEnv::is_terminal(const State& observed) const {
  const auto& s = state_values(observed);
  return fell(s) || at_goal(s);
}

std::vector<double> CliffWorldEnv::mean_action(const std::vector<double>& s) const {
  if (s.size() != 4) throw ConfigError("cliff world state is (x, y, vx, vy)");
  std::vector<double> a(2);
  for (std::size_t k = 0; k < 2; ++k) {
    const double u = config_.kp * (config_.goal[k] - s[k]) - config_.kd * s[2 + k];
    a[k] = std::clamp(u, -config_.max_accel, config_.max_accel);
  }
  return a;
}

std::vector<double> CliffWorldEnv::mean_next(const std::vector<double>& s, const std::vector<double>& a) const {
  if (s.size() != 4 || a.size() != 2) throw ConfigError("cliff world expects 4-d states and 2-d actions");
  const Eigen::Map<const Eigen::Vector4d> sv(s.data());
  const Eigen::Map<const Eigen::Vector2d> av(a.data());
  const Eigen::Vector4d n = a_ * sv + b_ * av;
  return {n(0), n(1), n(2), n(3)};
}

State CliffWorldEnv::initial_state(Rng& rng) const {
  std::normal_distribution<double> noise(0.0, config_.start_noise);
  double x = config_.start[0], y = config_.start[1];
  if (config_.start_noise > 0.0) {
    x += noise(rng);
    y += noise(rng);
  }
  return ContinuousState{{x, y, 0.0, 0.0}};
}

Transition CliffWorldEnv::step(const State& s, const Action& a, Rng& rng) const {
  const auto& sv = state_values(s);
  const auto& av = action_values(a);
  if (sv.size() != 4 || av.size() != 2) throw ConfigError("cliff world expects 4-d states and 2-d actions");
  if (is_terminal(s)) return {s, 0.0, true};
  std::vector<double> next = mean_next(sv, av);
  if (config_.noise_variance > 0.0) {
    std::normal_distribution<double> normal(0.0, 1.0);
    Eigen::Vector4d z;
    for (int k = 0; k < 4; ++k) z(k) = normal(rng);
    const Eigen::Vector4d eta = q_sqrt_ * z;
    for (int k = 0; k < 4; ++k) next[static_cast<std::size_t>(k)] += eta(k);
  }
  State ns = ContinuousState{next};
  const double r = reward(s, a, ns);
  return {std::move(ns), r, fell(next) || at_goal(next)};
}

double CliffWorldEnv::reward(const State& s, const Action& a, const State& next) const {
  const auto& sv = state_values(s);
  if (fell(sv) || at_goal(sv)) return 0.0;
  if (fell(state_values(next))) return config_.cliff_penalty;
  const auto& av = action_values(a);
  double cost = std::abs(sv.at(0) - config_.goal[0]) + std::abs(sv.at(1) - config_.goal[1]);
  for (double u : av) cost += std::abs(u);
  return std::max(-cost, config_.cliff_penalty);
}

GaussianPolicy cliff_world_policy(std::shared_ptr<const CliffWorldEnv> env, std::string id, double variance) {
  if (!(variance > 0.0)) throw ConfigError("policy variance must be positive");
  auto mean = [env](const std::vector<double>& s) { return env->mean_action(s); };
  return GaussianPolicy(std::move(id), "cliff-world-pd", mean, variance * Eigen::MatrixXd::Identity(2, 2));
}

MeanResolver cliff_world_mean_resolver(std::shared_ptr<const CliffWorldEnv> env) {
  return [env](const std::string& id) -> std::optional<GaussianPolicy::MeanFn> {
    if (id != "cliff-world-pd") return std::nullopt;
    return GaussianPolicy::MeanFn([env](const std::vector<double>& s) { return env->mean_action(s); });
  };
}

// ---------------------------------------------------------------------------
// Rollouts

Trajectory sample_trajectory(const Environment& env, const Policy& policy, Rng& rng) {
  const std::size_t horizon = env.spec().horizon;
  Trajectory traj;
  traj.steps.reserve(horizon);
  State internal = env.initial_state(rng);
  for (std::size_t t = 0; t < horizon; ++t) {
    State obs = env.observe(internal);
    Action a = policy.sample(obs, rng);
    Transition tr = env.step(internal, a, rng);
    traj.steps.push_back({std::move(obs), std::move(a), tr.reward});
    internal = std::move(tr.next);
    if (tr.terminal) {
      traj.terminal = true;
      break;
    }
  }
  traj.final_state = env.observe(internal);
  return traj;
}

Dataset sample_dataset(const Environment& env, const Policy& policy, std::size_t n, Rng& rng) {
  Dataset ds{env.id(), policy.id(), {}};
  ds.trajectories.reserve(n);
  for (std::size_t i = 0; i < n; ++i) ds.trajectories.push_back(sample_trajectory(env, policy, rng));
  return ds;
}

GroundTruth monte_carlo_ground_truth(const Environment& env, const Policy& policy, std::size_t num_rollouts,
                                     Rng& rng) {
  if (num_rollouts == 0) throw ConfigError("num_rollouts must be >= 1");
  const double gamma = env.spec().gamma;
  // Welford accumulation keeps the variance exact for constant returns.
  double mean = 0.0, m2 = 0.0;
  for (std::size_t k = 0; k < num_rollouts; ++k) {
    const double g = trajectory_return(sample_trajectory(env, policy, rng), gamma);
    const double delta = g - mean;
    mean += delta / static_cast<double>(k + 1);
    m2 += delta * (g - mean);
  }
  double se = 0.0;
  if (num_rollouts > 1) se = std::sqrt(m2 / static_cast<double>(num_rollouts - 1) / static_cast<double>(num_rollouts));
  return {mean, se, num_rollouts};
}

}  // namespace hcope
