#pragma once

// Lower-bound sweeps over dataset size, error rates and CSV output.
//
// Trial k at size n samples a fresh dataset from π_b with seed
// derive_seed(seed, {1, n, k}); every estimator sees the same dataset and the
// same bootstrap stream derive_seed(seed, {2, n, k}).

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "hcope/benchmarks.hpp"
#include "hcope/bootstrap.hpp"
#include "hcope/estimators.hpp"

namespace hcope {

struct SweepConfig {
  std::string env_id = "mountain-car-v0";
  Options env_options;
  std::string pi_e = "default";
  std::string pi_b = "default";
  std::vector<EstimatorKind> estimators = {EstimatorKind::is, EstimatorKind::pdwis, EstimatorKind::wdr_tabular,
                                           EstimatorKind::mb_tabular};
  std::vector<std::size_t> n_values = {2, 5, 10, 20, 50, 100, 200, 500};
  std::size_t trials = 100;
  BootstrapConfig bootstrap;
  std::size_t ground_truth_rollouts = 100000;
  std::optional<double> ground_truth;  // skips the Monte Carlo estimate
  std::uint64_t seed = 1;
  std::size_t workers = 1;  // trial-level parallelism
  ModelOptions model;
  bool recompute_per_resample = false;
  bool keep_trials = true;

  void validate() const;
};

/// Flat "key = value" lines; '#' starts a comment. Keys:
///   env, env.<option>, pi_e, pi_b, estimators (comma list), n_values (comma list),
///   trials, bootstrap_b, delta, method, ground_truth_rollouts, ground_truth, seed,
///   workers, mb_rollouts, value_rollouts, model_seed, recompute_per_resample
SweepConfig parse_sweep_config(std::istream& in);
SweepConfig load_sweep_config(const std::string& path);
void write_sweep_config(std::ostream& out, const SweepConfig& cfg);

struct TrialRecord {
  std::size_t trial = 0;
  double lower_bound = 0.0;
  double point_estimate = 0.0;
  bool failed = false;
  std::string error;
};

struct CellResult {
  EstimatorKind estimator = EstimatorKind::is;
  std::size_t n = 0;
  std::size_t valid = 0, invalid = 0, failed = 0;
  double error_rate = 0.0;        // invalid / (valid + invalid); NaN when both are zero
  double mean_valid_bound = 0.0;  // NaN without valid trials
  double ci_low = 0.0, ci_high = 0.0;
  std::vector<TrialRecord> trials;
};

struct SweepResult {
  std::string env_id;
  double ground_truth = 0.0;
  double ground_truth_stderr = 0.0;
  std::size_t ground_truth_rollouts = 0;  // 0 when exact or given
  std::vector<CellResult> cells;          // estimator-major, then n
};

/// Mean ± Monte Carlo standard error of V(π_e), or the exact value for finite MDPs.
GroundTruth ground_truth(const Benchmark& bench, const Policy& pi_e, std::size_t rollouts, std::uint64_t seed);

/// Throws ConfigError on an estimator/environment mismatch before any work, and
/// NumericError if the Monte Carlo ground truth is not within 1% of |V(π_e)|.
SweepResult run_sweep(const SweepConfig& cfg);

/// Aggregates trial records into a cell given the ground truth.
CellResult aggregate(EstimatorKind estimator, std::size_t n, std::vector<TrialRecord> trials, double truth);

/// Columns: estimator,n,trials,valid,invalid,failed,error_rate,mean_valid_bound,
/// ci_low,ci_high,ground_truth,ground_truth_stderr
void write_csv(std::ostream& out, const SweepResult& res);
void emit_csv(const SweepResult& res, const std::string& path);

/// One row per trial: estimator,n,trial,lower_bound,point_estimate,failed,valid
void write_trials_csv(std::ostream& out, const SweepResult& res);

}  // namespace hcope
