#pragma once

// Importance weights and the IS / PDIS / WIS / PDWIS estimators.
//
// Estimators work on normalized rewards (return range mapped to [0, 1]) and
// report on the raw scale. Trajectories shorter than the horizon are padded:
// the weight keeps its final value and each padded step earns the normalized
// image of a zero raw reward.

#include <cmath>
#include <limits>
#include <memory>
#include <span>
#include <vector>

#include "hcope/core.hpp"
#include "hcope/estimator.hpp"
#include "hcope/policy.hpp"

namespace hcope {

/// rho[i][t] = Π_{u<=t} π_e(a_u|s_u) / π_b(a_u|s_u), kept in log space.
struct WeightMatrix {
  std::size_t trajectories = 0;
  std::size_t horizon = 0;
  std::vector<double> log_rho;  // row-major; -inf encodes a zero weight

  double log(std::size_t i, std::size_t t) const { return log_rho[i * horizon + t]; }
  double rho(std::size_t i, std::size_t t) const { return std::exp(log(i, t)); }
};

/// Throws SupportViolation ("behavior support violation") when π_b(a|s) = 0 on an observed step.
WeightMatrix compute_weights(const Dataset& ds, const Policy& pi_e, const Policy& pi_b, std::size_t horizon);

/// w[i][t] = rho[i][t] / Σ_j rho[j][t]; throws NumericError on a zero column.
std::vector<double> normalized_weights(const WeightMatrix& wm);

/// Everything the IS-family and doubly robust estimators need from a dataset,
/// computed once: log weights, rescaled weights and normalized padded rewards.
struct ImportanceData {
  MdpSpec spec;
  std::size_t n = 0;
  WeightMatrix weights;
  std::vector<double> scaled_rho;  // exp(log_rho - column max)
  std::vector<double> column_max;  // per-step max log weight over D
  std::vector<double> rewards;     // normalized, padded, n × L
  std::vector<double> returns;     // normalized returns
  std::vector<double> raw_returns;
  std::vector<double> discount;    // γ^t

  static ImportanceData build(const Dataset& ds, const Policy& pi_e, const Policy& pi_b, const MdpSpec& spec);

  std::size_t horizon() const { return spec.horizon; }

  /// Per-step self-normalized sums over the weighted multiset:
  /// den[t] = Σ c_i ρ_it and, for each given n×L value array X, num[t] = Σ c_i ρ_it X_it,
  /// all in a common per-step scale. Throws NumericError on a zero column.
  void weighted_columns(std::span<const double> multiplicity, std::span<const std::vector<double>* const> values,
                        std::vector<double>& den, std::vector<std::vector<double>>& num) const;
};

enum class ImportanceKind { is, pdis, wis, pdwis };

class ImportanceEstimator final : public BatchEstimator {
 public:
  ImportanceEstimator(ImportanceKind kind, std::shared_ptr<const ImportanceData> data);

  const std::string& name() const override { return name_; }
  std::size_t size() const override { return data_->n; }
  double evaluate(std::span<const double> multiplicity) const override;
  std::map<std::string, double> diagnostics() const override;

  /// Estimate on the normalized scale.
  double evaluate_normalized(std::span<const double> multiplicity) const;

 private:
  ImportanceKind kind_;
  std::shared_ptr<const ImportanceData> data_;
  std::string name_;
  double wis_average(std::span<const double> multiplicity, const std::vector<double>& values) const;

  std::vector<double> per_trajectory_;  // IS or PDIS term of each trajectory
};

double is_estimate(const Dataset& ds, const Policy& pi_e, const Policy& pi_b, const MdpSpec& spec);
double pdis_estimate(const Dataset& ds, const Policy& pi_e, const Policy& pi_b, const MdpSpec& spec);
double wis_estimate(const Dataset& ds, const Policy& pi_e, const Policy& pi_b, const MdpSpec& spec);
double pdwis_estimate(const Dataset& ds, const Policy& pi_e, const Policy& pi_b, const MdpSpec& spec);

}  // namespace hcope
