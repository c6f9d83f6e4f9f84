#pragma once

// Named estimators and the factory that binds one to a dataset.

#include <memory>
#include <string>
#include <vector>

#include "hcope/env.hpp"
#include "hcope/estimator.hpp"
#include "hcope/models.hpp"
#include "hcope/policy.hpp"

namespace hcope {

enum class EstimatorKind { is, pdis, wis, pdwis, dr, wdr_tabular, wdr_lr, wdr_pr, mb_tabular, mb_lr, mb_pr };

std::string to_string(EstimatorKind kind);
EstimatorKind parse_estimator_kind(const std::string& text);
const std::vector<EstimatorKind>& all_estimator_kinds();

struct EstimatorContext {
  EnvironmentPtr env;
  PolicyPtr pi_e;
  PolicyPtr pi_b;
  ModelOptions model{};
  bool recompute_per_resample = false;  // rebuild everything from each resampled dataset
  bool bias_diagnostics = true;         // attach a surrogate model-bias bound to model-based estimators
};

/// Throws ConfigError when the estimator cannot run on this environment
/// (tabular models on continuous states, regression models on discrete ones).
void check_applicable(EstimatorKind kind, const Environment& env);

std::unique_ptr<BatchEstimator> make_estimator(EstimatorKind kind, const Dataset& ds, const EstimatorContext& ctx);

/// Point estimate on the whole dataset.
double estimate(EstimatorKind kind, const Dataset& ds, const EstimatorContext& ctx);

}  // namespace hcope
