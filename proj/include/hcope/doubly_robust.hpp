#pragma once

// DR and WDR: per-decision importance sampling with a model-based control variate.
//
//   WDR = PDWIS - Σ_i Σ_t γ^t (w_t^i q̂(S_t^i, A_t^i) - w_{t-1}^i v̂(S_t^i))
//
// with self-normalized weights w_t and w_{-1}^i = 1/n, so every weight column
// (including t = -1) sums to one. DR uses ρ_t^i / n in place of w_t^i.
// Values are read at the recorded steps; padded steps after termination use a
// zero raw value. WDR measures values from the normalized image of a raw zero,
// which changes no estimate (the offsets telescope) but makes the zero model exact.

#include <memory>
#include <optional>

#include "hcope/importance.hpp"
#include "hcope/models.hpp"

namespace hcope {

/// q̂ and v̂ at every (i, t) of a dataset, normalized like the rewards.
struct ValueTable {
  std::vector<double> q;  // n × L
  std::vector<double> v;  // n × L
};

ValueTable value_table(const Dataset& ds, const ValueFunctions& vf, const MdpSpec& spec);

/// Largest |v̂(t, s) - Σ_a π_e(a|s) q̂(t, s, a)| over the dataset's states (discrete actions only).
double mixture_gap(const Dataset& ds, const ValueFunctions& vf, const Policy& pi_e, std::size_t actions,
                   const MdpSpec& spec);

/// Per-(i, t) terms γ^t (w_t^i q̂ - w_{t-1}^i v̂) on the normalized scale.
struct ControlVariateTrace {
  std::size_t trajectories = 0, horizon = 0;
  std::vector<double> terms;  // row-major n × L
  double total = 0.0;
};

class DoublyRobustEstimator final : public BatchEstimator {
 public:
  DoublyRobustEstimator(bool weighted, std::shared_ptr<const ImportanceData> data, ValueTable values,
                        std::string name = {});

  const std::string& name() const override { return name_; }
  std::size_t size() const override { return data_->n; }
  double evaluate(std::span<const double> multiplicity) const override;

  double evaluate_normalized(std::span<const double> multiplicity) const;
  ControlVariateTrace control_variate(std::span<const double> multiplicity) const;

 private:
  bool weighted_;
  std::shared_ptr<const ImportanceData> data_;
  ValueTable values_;
  std::vector<double> shifted_v_;  // shifted_v[i][t] = v[i][t+1], last column 0
  std::vector<double> per_trajectory_;
  std::string name_;
};

/// Warns when the value functions break the mixture invariant by more than 1e-6
/// (discrete actions) before estimating.
double wdr_estimate(const Dataset& ds, const Policy& pi_e, const Policy& pi_b, const ValueFunctions& vf,
                    const MdpSpec& spec, std::optional<std::size_t> discrete_actions = std::nullopt);
double dr_estimate(const Dataset& ds, const Policy& pi_e, const Policy& pi_b, const ValueFunctions& vf,
                   const MdpSpec& spec, std::optional<std::size_t> discrete_actions = std::nullopt);

/// Control variate of WDR on ds (normalized scale).
ControlVariateTrace wdr_control_variate(const Dataset& ds, const Policy& pi_e, const Policy& pi_b,
                                        const ValueFunctions& vf, const MdpSpec& spec);

}  // namespace hcope
