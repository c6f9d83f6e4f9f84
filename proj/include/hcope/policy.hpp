#pragma once

// Stochastic policies with exact density/mass evaluation.

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <functional>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "hcope/core.hpp"
#include "hcope/random.hpp"

namespace hcope {

class Policy {
 public:
  virtual ~Policy() = default;

  virtual const std::string& id() const = 0;

  /// Probability mass (discrete actions) or density (continuous actions) of a in s.
  virtual double prob(const State& s, const Action& a) const = 0;
  virtual double log_prob(const State& s, const Action& a) const;

  virtual Action sample(const State& s, Rng& rng) const = 0;
};

using PolicyPtr = std::shared_ptr<const Policy>;

/// Row-stochastic table over discrete states and actions.
class TabularPolicy final : public Policy {
 public:
  /// Rows are renormalized; negative entries or all-zero rows are rejected.
  TabularPolicy(std::string id, std::size_t state_count, std::size_t action_count, std::vector<double> probs);

  static TabularPolicy uniform(std::string id, std::size_t state_count, std::size_t action_count);

  const std::string& id() const override { return id_; }
  double prob(const State& s, const Action& a) const override;
  Action sample(const State& s, Rng& rng) const override;

  double prob(std::size_t s, std::size_t a) const { return probs_[s * actions_ + a]; }
  std::size_t state_count() const { return states_; }
  std::size_t action_count() const { return actions_; }
  const std::vector<double>& table() const { return probs_; }

 private:
  std::size_t checked_state(const State& s) const;

  std::string id_;
  std::size_t states_;
  std::size_t actions_;
  std::vector<double> probs_;
  std::vector<double> cumulative_;
};

/// A ~ N(mean_fn(s), Σ) over real^k.
class GaussianPolicy final : public Policy {
 public:
  using MeanFn = std::function<std::vector<double>(const std::vector<double>&)>;

  /// mean_id names the deterministic mean map so the policy can be serialized.
  GaussianPolicy(std::string id, std::string mean_id, MeanFn mean_fn, Eigen::MatrixXd covariance);

  const std::string& id() const override { return id_; }
  double prob(const State& s, const Action& a) const override;
  double log_prob(const State& s, const Action& a) const override;
  Action sample(const State& s, Rng& rng) const override;

  /// Same draw as sample(), written into `out` (resized to the action dimension).
  void sample_into(const std::vector<double>& state, Rng& rng, std::vector<double>& out) const;

  std::vector<double> mean(const std::vector<double>& state) const;
  const std::string& mean_id() const { return mean_id_; }
  const Eigen::MatrixXd& covariance() const { return covariance_; }
  std::size_t action_dim() const { return static_cast<std::size_t>(covariance_.rows()); }

 private:
  std::string id_;
  std::string mean_id_;
  MeanFn mean_fn_;
  Eigen::MatrixXd covariance_;
  Eigen::LLT<Eigen::MatrixXd> chol_;
  Eigen::MatrixXd lower_;  // Cholesky factor of the covariance
  double log_norm_ = 0.0;  // -(k log 2π + log det Σ) / 2
};

struct SupportReport {
  bool ok = true;
  std::size_t trajectory = 0;
  std::size_t step = 0;
  std::string detail;
};

/// Reports the first observed step whose action has zero behavior probability.
SupportReport support_check(const Policy& pi_e, const Policy& pi_b, const Dataset& ds);

// Text serialization:
//   tabular <id> <states> <actions>  followed by one row per state
//   gaussian <id> <mean_id> <k>      followed by k rows of covariance entries
void write_policy(std::ostream& out, const Policy& policy);

/// Resolves Gaussian mean maps by id; returns nullopt for unknown ids.
using MeanResolver = std::function<std::optional<GaussianPolicy::MeanFn>(const std::string&)>;
PolicyPtr read_policy(std::istream& in, const MeanResolver& resolve_mean);

}  // namespace hcope
