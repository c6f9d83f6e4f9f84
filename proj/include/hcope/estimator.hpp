#pragma once

#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "hcope/core.hpp"

namespace hcope {

/// An off-policy estimator bound to one dataset D of n trajectories.
///
/// evaluate() receives per-trajectory multiplicities, so a bootstrap resample
/// of D (or a jackknife leave-one-out set) is a weight vector rather than a new
/// dataset. Anything computed from D once (weights, a single model and its value
/// functions) is reused across calls. Results are on the raw return scale.
/// Implementations must be safe to call concurrently.
class BatchEstimator {
 public:
  virtual ~BatchEstimator() = default;

  virtual const std::string& name() const = 0;
  virtual std::size_t size() const = 0;
  virtual double evaluate(std::span<const double> multiplicity) const = 0;

  /// Extra per-dataset numbers for reports (weight variance, model bias bound, ...).
  virtual std::map<std::string, double> diagnostics() const { return extra_; }
  void add_diagnostic(const std::string& key, double value) { extra_[key] = value; }

  double evaluate_full() const {
    const std::vector<double> ones(size(), 1.0);
    return evaluate(ones);
  }

 protected:
  std::map<std::string, double> extra_;
};

/// Adapts a plain function of a dataset. Each call materializes the resampled
/// dataset (trajectory i repeated multiplicity[i] times, in index order), so
/// nothing is reused between resamples.
class DatasetFunctionEstimator final : public BatchEstimator {
 public:
  using Fn = std::function<double(const Dataset&)>;

  DatasetFunctionEstimator(std::string name, Dataset ds, Fn fn)
      : name_(std::move(name)), ds_(std::move(ds)), fn_(std::move(fn)) {}

  const std::string& name() const override { return name_; }
  std::size_t size() const override { return ds_.size(); }
  double evaluate(std::span<const double> multiplicity) const override;

 private:
  std::string name_;
  Dataset ds_;
  Fn fn_;
};

/// Dataset holding trajectory i multiplicity[i] times (multiplicities must be whole numbers).
Dataset materialize(const Dataset& ds, std::span<const double> multiplicity);

}  // namespace hcope
