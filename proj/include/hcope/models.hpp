#pragma once

// Learned dynamics models, their value functions for π_e, and the direct
// model-based estimator MB.
//
// Rewards are known: every model borrows r(s, a, s') and the terminal test from
// the environment. Value functions are indexed by time because the horizon is
// finite; v(t, s) is the expected return of π_e over steps t..L-1.

#include <Eigen/Core>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "hcope/core.hpp"
#include "hcope/env.hpp"
#include "hcope/estimator.hpp"
#include "hcope/policy.hpp"
#include "hcope/tabular.hpp"

namespace hcope {

/// Maximum-likelihood tabular model. Unvisited (s, a) pairs loop back to s.
struct TabularModel {
  TabularDynamics dynamics;                 // P̂ and d̂0
  std::vector<std::vector<Outcome>> counts;  // same layout as dynamics.rows, holding counts
  std::vector<double> visits;                // count(s, a)
  std::vector<std::uint8_t> visited;
  bool empty_data = false;  // no transitions at all; d̂0 is uniform

  bool is_visited(std::size_t s, std::size_t a) const { return visited[s * dynamics.actions + a] != 0; }
};

/// Counts every recorded transition, including the one into final_state when present.
TabularModel learn_tabular(const Dataset& ds, std::size_t states, std::size_t actions);

/// Same with trajectory i counted weights[i] times.
TabularModel learn_tabular(const Dataset& ds, std::size_t states, std::size_t actions,
                           std::span<const double> weights);

using TabularReward = std::function<double(std::size_t s, std::size_t a, std::size_t next)>;

/// r(s, a, s') and terminal states of a discrete environment.
TabularReward tabular_reward(const Environment& env);

/// π(a|s) as an S×A table.
std::vector<double> policy_table(const Policy& pi, std::size_t states, std::size_t actions);

struct TabularValues {
  std::size_t horizon = 0, states = 0, actions = 0;
  std::vector<double> v;  // (L+1) × S, v at t = L is zero
  std::vector<double> q;  // L × S × A

  double value(std::size_t t, std::size_t s) const { return v[t * states + s]; }
  double action_value(std::size_t t, std::size_t s, std::size_t a) const {
    return q[(t * states + s) * actions + a];
  }
};

/// Exact finite-horizon backward induction for π given as an S×A table.
TabularValues backward_induction(const TabularDynamics& dyn, const TabularReward& reward,
                                 const std::vector<double>& pi, const MdpSpec& spec);

/// Expected return Σ_s d0(s) v(0, s).
double initial_value(const TabularDynamics& dyn, const TabularValues& values);

enum class ValueProvenance { zero, value_iteration, monte_carlo };

struct ValueFunctions {
  ValueProvenance provenance = ValueProvenance::zero;
  std::function<double(std::size_t t, const State& s)> v;
  std::function<double(std::size_t t, const State& s, const Action& a)> q;

  static ValueFunctions zero();
};

ValueFunctions value_iteration(const TabularModel& model, const TabularReward& reward, const Policy& pi_e,
                               const MdpSpec& spec);

enum class FeatureMap { linear, polynomial };

/// linear: [1, s, a]; polynomial: [1, then s_j² and s_j³ per component, then a] (no raw s).
Eigen::VectorXd features(FeatureMap map, const std::vector<double>& s, const std::vector<double>& a);
std::size_t feature_count(FeatureMap map, std::size_t state_dim, std::size_t action_dim);

/// Sufficient statistics of a least-squares fit of next state on features.
struct RegressionStats {
  Eigen::MatrixXd xtx, xty, yty;
  double count = 0.0;

  void add(const Eigen::VectorXd& x, const Eigen::VectorXd& y);
  void add_scaled(const RegressionStats& other, double weight);
};

/// s' = W^T φ(s, a) + η, η ~ N(0, Q̂).
struct LinearGaussianModel {
  FeatureMap map = FeatureMap::linear;
  std::size_t state_dim = 0, action_dim = 0;
  Eigen::MatrixXd weights;    // features × state_dim
  Eigen::MatrixXd noise_cov;  // Q̂
  Eigen::MatrixXd noise_sqrt;
  double training_mse = 0.0;  // mean squared residual per component
  double samples = 0.0;

  std::vector<double> mean(const std::vector<double>& s, const std::vector<double>& a) const;
  std::vector<double> sample(const std::vector<double>& s, const std::vector<double>& a, Rng& rng) const;
  double log_density(const std::vector<double>& s, const std::vector<double>& a,
                     const std::vector<double>& next) const;

  /// Exact model with the given weights and noise.
  static LinearGaussianModel from_parts(FeatureMap map, std::size_t state_dim, std::size_t action_dim,
                                        Eigen::MatrixXd weights, Eigen::MatrixXd noise_cov);
};

/// Ridge ε = 1e-8. Throws ConfigError "underdetermined regression" when there
/// are fewer transitions than features.
LinearGaussianModel learn_regression(const Dataset& ds, FeatureMap map);
LinearGaussianModel fit_regression(const RegressionStats& stats, FeatureMap map, std::size_t state_dim,
                                   std::size_t action_dim);

/// Per-trajectory regression statistics (transitions into final_state included).
std::vector<RegressionStats> regression_stats(const Dataset& ds, FeatureMap map);

/// Return of π_e inside the model from (t, s), optionally forcing the first action.
double simulate_return(const LinearGaussianModel& model, const Environment& env, const Policy& pi_e,
                       std::size_t t, std::vector<double> s, const Action* first_action, Rng& rng);

/// q(t, s, a) and v(t, s) from `rollouts` simulated returns each. Streams are
/// seeded from (seed, t, s, a) so the functions are deterministic.
ValueFunctions mc_value_functions(std::shared_ptr<const LinearGaussianModel> model, EnvironmentPtr env,
                                  PolicyPtr pi_e, std::size_t rollouts, std::uint64_t seed);

/// Model value of π_e from the empirical initial states of a dataset.
double mb_rollout_value(const LinearGaussianModel& model, const Environment& env, const Policy& pi_e,
                        std::span<const std::vector<double>> starts, std::span<const double> start_weights,
                        std::size_t rollouts, std::uint64_t seed);

enum class ModelKind { tabular, linear, polynomial };

struct ModelOptions {
  std::size_t rollouts = 1000;          // MB rollouts for continuous models
  std::size_t value_rollouts = 200;     // per q/v query for continuous value functions
  std::uint64_t seed = 0x5eed;
};

/// MB from a single model learned on all of ds.
double mb_estimate(const Dataset& ds, const Environment& env, const Policy& pi_e, ModelKind kind,
                   const ModelOptions& options = {});

/// MB with the model refitted on every resample (multiplicities), cheaply:
/// tabular uses count accumulation plus DP over the states seen in D;
/// regression combines per-trajectory statistics then rolls out.
class ModelBasedEstimator final : public BatchEstimator {
 public:
  ModelBasedEstimator(ModelKind kind, const Dataset& ds, EnvironmentPtr env, PolicyPtr pi_e,
                      ModelOptions options = {});

  const std::string& name() const override { return name_; }
  std::size_t size() const override { return n_; }
  double evaluate(std::span<const double> multiplicity) const override;

 private:
  double evaluate_tabular(std::span<const double> c) const;
  double evaluate_regression(std::span<const double> c) const;

  ModelKind kind_;
  EnvironmentPtr env_;
  PolicyPtr pi_e_;
  ModelOptions options_;
  std::string name_;
  std::size_t n_ = 0;
  MdpSpec spec_;

  // Tabular: states of D relabelled 0..K-1; triples (s, a, s') grouped by (s, a).
  struct Pair {
    std::size_t state = 0, action = 0;
    std::size_t first = 0, last = 0;  // triple range
  };
  std::size_t compact_states_ = 0, actions_ = 0;
  std::vector<double> pi_;           // K × A
  std::vector<double> self_reward_;  // K × A, reward of an unvisited self-loop
  std::vector<Pair> pairs_;
  std::vector<std::size_t> pair_of_;  // K × A → pair index or npos
  std::vector<std::size_t> triple_next_;
  std::vector<double> triple_reward_;
  std::vector<std::vector<std::size_t>> trajectory_triples_;
  std::vector<std::size_t> initial_;

  // Regression.
  FeatureMap map_ = FeatureMap::linear;
  std::size_t state_dim_ = 0, action_dim_ = 0;
  std::vector<RegressionStats> stats_;
  std::vector<std::vector<double>> starts_;
};

}  // namespace hcope
