#pragma once

// Bootstrap confidence lower bounds over any BatchEstimator.
//
// Resample j draws n trajectory indices from its own stream derive_seed(seed, {j}),
// so results do not depend on the number of workers.

#include <cstdint>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "hcope/estimator.hpp"
#include "hcope/random.hpp"

namespace hcope {

enum class BootstrapMethod { percentile, bca };

std::string to_string(BootstrapMethod m);
BootstrapMethod parse_bootstrap_method(const std::string& text);

struct BootstrapConfig {
  std::size_t resamples = 2000;  // B
  double delta = 0.05;
  BootstrapMethod method = BootstrapMethod::percentile;
  std::uint64_t seed = 0;
  std::size_t workers = 1;
  bool keep_estimates = false;
  double max_failure_fraction = 0.01;

  /// Throws ConfigError unless B ≥ 1, δ ∈ (0, 1) and floor(δ B) ≥ 1.
  void validate() const;

  /// l = floor(δ B), the 1-based rank of the bound in the ascending sort.
  std::size_t order_index() const;
};

struct BoundReport {
  std::string estimator;
  BootstrapMethod method = BootstrapMethod::percentile;
  double point_estimate = 0.0;
  double lower_bound = 0.0;
  double delta = 0.0;
  std::size_t resamples = 0;
  std::size_t rank = 0;      // 1-based order statistic returned
  std::size_t failures = 0;  // failed resamples, ranked below every success
  std::string first_failure;
  std::vector<double> estimates;  // ascending; only with keep_estimates
  std::map<std::string, double> diagnostics;
  std::vector<std::string> warnings;

  // BCa internals (method == bca).
  double bca_z0 = 0.0;
  double bca_acceleration = 0.0;
  double bca_alpha = 0.0;
  bool bca_fallback = false;

  bool operator==(const BoundReport&) const = default;
};

/// n i.i.d. uniform draws from 0..n-1.
std::vector<std::size_t> resample_indices(std::size_t n, Rng& rng);

/// Multiplicities of one resample: counts[i] = #{j : index_j = i}.
std::vector<double> resample_counts(std::size_t n, Rng& rng);

/// Estimates of B resamples, in resample order. Failed resamples are NaN and
/// counted; the first failure message is kept.
struct ResampleResult {
  std::vector<double> estimates;
  std::size_t failures = 0;
  std::string first_failure;
};
ResampleResult run_resamples(const BatchEstimator& est, const BootstrapConfig& cfg);

BoundReport percentile_lower_bound(const BatchEstimator& est, const BootstrapConfig& cfg);
BoundReport bca_lower_bound(const BatchEstimator& est, const BootstrapConfig& cfg);

/// Dispatches on cfg.method.
BoundReport bootstrap_lower_bound(const BatchEstimator& est, const BootstrapConfig& cfg);

/// Leave-one-out estimates θ_(i) (multiplicity 0 for trajectory i, 1 elsewhere).
std::vector<double> jackknife_estimates(const BatchEstimator& est);

struct BcaResult {
  double lower_bound = 0.0;
  double z0 = 0.0;
  double acceleration = 0.0;
  double alpha = 0.0;        // adjusted percentile
  std::size_t rank = 0;      // 1-based
  bool fallback = false;     // percentile used instead
  std::string reason;
};

/// BCa from already computed resample estimates (any order), the full-sample
/// estimate and jackknife estimates. Falls back to the percentile rank when the
/// correction is undefined: fewer than 3 jackknife values, all equal, or every
/// resample on one side of theta_hat.
BcaResult bca_from_estimates(std::span<const double> estimates, double theta_hat,
                             std::span<const double> jackknife, double delta);

/// Human-readable key: value listing, stable field order.
void write_report(std::ostream& out, const BoundReport& report);

}  // namespace hcope
