#include "hcope/importance.hpp"

#include <algorithm>
#include <string>

#include "hcope/errors.hpp"

namespace hcope {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double weight_sum(std::span<const double> multiplicity) {
  double total = 0.0;
  for (double c : multiplicity) total += c;
  if (!(total > 0.0)) throw ConfigError("empty dataset");
  return total;
}

[[noreturn]] void zero_column(std::size_t t) {
  throw NumericError("all importance weights zero at step " + std::to_string(t));
}

}  // namespace

WeightMatrix compute_weights(const Dataset& ds, const Policy& pi_e, const Policy& pi_b, std::size_t horizon) {
  WeightMatrix wm;
  wm.trajectories = ds.size();
  wm.horizon = horizon;
  wm.log_rho.assign(ds.size() * horizon, 0.0);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const Trajectory& traj = ds.trajectories[i];
    if (traj.size() > horizon) throw ConfigError("trajectory " + std::to_string(i) + " is longer than the horizon");
    if (traj.steps.empty()) throw ConfigError("empty trajectory");
    double acc = 0.0;
    for (std::size_t t = 0; t < horizon; ++t) {
      if (t < traj.size()) {
        const Step& st = traj.steps[t];
        const double lb = pi_b.log_prob(st.state, st.action);
        if (lb == kNegInf || std::isnan(lb))
          throw SupportViolation("behavior support violation at trajectory " + std::to_string(i) + " step " +
                                 std::to_string(t));
        if (acc != kNegInf) {
          const double le = pi_e.log_prob(st.state, st.action);
          acc = le == kNegInf ? kNegInf : acc + (le - lb);
        }
      }
      wm.log_rho[i * horizon + t] = acc;
    }
  }
  return wm;
}

std::vector<double> normalized_weights(const WeightMatrix& wm) {
  const std::size_t n = wm.trajectories, L = wm.horizon;
  std::vector<double> w(n * L, 0.0);
  for (std::size_t t = 0; t < L; ++t) {
    double top = kNegInf;
    for (std::size_t i = 0; i < n; ++i) top = std::max(top, wm.log(i, t));
    if (top == kNegInf) zero_column(t);
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) total += w[i * L + t] = std::exp(wm.log(i, t) - top);
    for (std::size_t i = 0; i < n; ++i) w[i * L + t] /= total;
  }
  return w;
}

ImportanceData ImportanceData::build(const Dataset& ds, const Policy& pi_e, const Policy& pi_b,
                                     const MdpSpec& spec) {
  spec.validate();
  if (ds.empty()) throw ConfigError("empty dataset");
  ImportanceData d;
  d.spec = spec;
  d.n = ds.size();
  const std::size_t L = spec.horizon;
  d.weights = compute_weights(ds, pi_e, pi_b, L);

  d.discount.resize(L);
  double g = 1.0;
  for (std::size_t t = 0; t < L; ++t, g *= spec.gamma) d.discount[t] = g;

  d.column_max.assign(L, kNegInf);
  for (std::size_t i = 0; i < d.n; ++i)
    for (std::size_t t = 0; t < L; ++t) d.column_max[t] = std::max(d.column_max[t], d.weights.log(i, t));

  d.scaled_rho.assign(d.n * L, 0.0);
  d.rewards.assign(d.n * L, normalize_reward(0.0, spec));
  d.returns.assign(d.n, 0.0);
  d.raw_returns.assign(d.n, 0.0);
  for (std::size_t i = 0; i < d.n; ++i) {
    const Trajectory& traj = ds.trajectories[i];
    double ret = 0.0;
    for (std::size_t t = 0; t < L; ++t) {
      const std::size_t k = i * L + t;
      if (d.column_max[t] != kNegInf) d.scaled_rho[k] = std::exp(d.weights.log_rho[k] - d.column_max[t]);
      if (t < traj.size()) d.rewards[k] = normalize_reward(traj.steps[t].reward, spec);
      ret += d.discount[t] * d.rewards[k];
    }
    d.returns[i] = ret;
    d.raw_returns[i] = trajectory_return(traj, spec.gamma);
  }
  return d;
}

void ImportanceData::weighted_columns(std::span<const double> multiplicity,
                                      std::span<const std::vector<double>* const> values, std::vector<double>& den,
                                      std::vector<std::vector<double>>& num) const {
  const std::size_t L = horizon();
  if (multiplicity.size() != n) throw ConfigError("multiplicity vector has the wrong length");
  den.assign(L, 0.0);
  num.assign(values.size(), std::vector<double>(L, 0.0));
  for (std::size_t i = 0; i < n; ++i) {
    const double c = multiplicity[i];
    if (c == 0.0) continue;
    const double* rho = &scaled_rho[i * L];
    for (std::size_t t = 0; t < L; ++t) den[t] += c * rho[t];
    for (std::size_t k = 0; k < values.size(); ++k) {
      const double* x = &(*values[k])[i * L];
      double* out = num[k].data();
      for (std::size_t t = 0; t < L; ++t) out[t] += c * rho[t] * x[t];
    }
  }
  // A resample can drop every trajectory that carried the column maximum; the
  // remaining weights may then underflow in the shared scale. Redo those
  // columns with a scale taken from the trajectories actually present.
  for (std::size_t t = 0; t < L; ++t) {
    if (den[t] > 1e-250) continue;
    double top = kNegInf;
    for (std::size_t i = 0; i < n; ++i)
      if (multiplicity[i] != 0.0) top = std::max(top, weights.log(i, t));
    if (top == kNegInf) zero_column(t);
    den[t] = 0.0;
    for (auto& col : num) col[t] = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double c = multiplicity[i];
      if (c == 0.0) continue;
      const double r = c * std::exp(weights.log(i, t) - top);
      den[t] += r;
      for (std::size_t k = 0; k < values.size(); ++k) num[k][t] += r * (*values[k])[i * L + t];
    }
  }
}

ImportanceEstimator::ImportanceEstimator(ImportanceKind kind, std::shared_ptr<const ImportanceData> data)
    : kind_(kind), data_(std::move(data)) {
  static const char* const names[] = {"is", "pdis", "wis", "pdwis"};
  name_ = names[static_cast<int>(kind_)];
  const std::size_t L = data_->horizon();
  if (kind_ == ImportanceKind::is) {
    per_trajectory_.resize(data_->n);
    for (std::size_t i = 0; i < data_->n; ++i) per_trajectory_[i] = data_->returns[i] * data_->weights.rho(i, L - 1);
  } else if (kind_ == ImportanceKind::pdis) {
    per_trajectory_.resize(data_->n);
    for (std::size_t i = 0; i < data_->n; ++i) {
      double s = 0.0;
      for (std::size_t t = 0; t < L; ++t) s += data_->discount[t] * data_->rewards[i * L + t] * data_->weights.rho(i, t);
      per_trajectory_[i] = s;
    }
  }
}

double ImportanceEstimator::evaluate_normalized(std::span<const double> multiplicity) const {
  const std::size_t L = data_->horizon();
  if (multiplicity.size() != data_->n) throw ConfigError("multiplicity vector has the wrong length");
  switch (kind_) {
    case ImportanceKind::is:
    case ImportanceKind::pdis: {
      const double total = weight_sum(multiplicity);
      double s = 0.0;
      for (std::size_t i = 0; i < data_->n; ++i) s += multiplicity[i] * per_trajectory_[i];
      return s / total;
    }
    case ImportanceKind::wis: return wis_average(multiplicity, data_->returns);
    case ImportanceKind::pdwis: {
      weight_sum(multiplicity);
      std::vector<double> den;
      std::vector<std::vector<double>> num;
      const std::vector<double>* cols[] = {&data_->rewards};
      data_->weighted_columns(multiplicity, cols, den, num);
      double s = 0.0;
      for (std::size_t t = 0; t < L; ++t) s += data_->discount[t] * num[0][t] / den[t];
      return s;
    }
  }
  return 0.0;
}

// Only the last column matters: values weighted by w_{L-1}.
double ImportanceEstimator::wis_average(std::span<const double> multiplicity, const std::vector<double>& values) const {
  weight_sum(multiplicity);
  const std::size_t t = data_->horizon() - 1;
  double den = 0.0, num = 0.0, top = kNegInf;
  for (std::size_t i = 0; i < data_->n; ++i)
    if (multiplicity[i] != 0.0) top = std::max(top, data_->weights.log(i, t));
  if (top == kNegInf) zero_column(t);
  for (std::size_t i = 0; i < data_->n; ++i) {
    if (multiplicity[i] == 0.0) continue;
    const double r = multiplicity[i] * std::exp(data_->weights.log(i, t) - top);
    den += r;
    num += r * values[i];
  }
  return num / den;
}

double ImportanceEstimator::evaluate(std::span<const double> multiplicity) const {
  // WIS is affine equivariant, so it averages raw returns directly (exact for n = 1).
  if (kind_ == ImportanceKind::wis) {
    if (multiplicity.size() != data_->n) throw ConfigError("multiplicity vector has the wrong length");
    return wis_average(multiplicity, data_->raw_returns);
  }
  return denormalize_return(evaluate_normalized(multiplicity), data_->spec);
}

std::map<std::string, double> ImportanceEstimator::diagnostics() const {
  // Sample variance of the full-trajectory weight ρ_{L-1}.
  const std::size_t L = data_->horizon();
  double mean = 0.0;
  for (std::size_t i = 0; i < data_->n; ++i) mean += data_->weights.rho(i, L - 1);
  mean /= static_cast<double>(data_->n);
  double var = 0.0;
  for (std::size_t i = 0; i < data_->n; ++i) {
    const double d = data_->weights.rho(i, L - 1) - mean;
    var += d * d;
  }
  var = data_->n > 1 ? var / static_cast<double>(data_->n - 1) : 0.0;
  auto out = extra_;
  out["weight_mean"] = mean;
  out["weight_variance"] = var;
  return out;
}

namespace {

double run(ImportanceKind kind, const Dataset& ds, const Policy& pi_e, const Policy& pi_b, const MdpSpec& spec) {
  auto data = std::make_shared<const ImportanceData>(ImportanceData::build(ds, pi_e, pi_b, spec));
  return ImportanceEstimator(kind, data).evaluate_full();
}

}  // namespace

double is_estimate(const Dataset& ds, const Policy& pi_e, const Policy& pi_b, const MdpSpec& spec) {
  return run(ImportanceKind::is, ds, pi_e, pi_b, spec);
}
double pdis_estimate(const Dataset& ds, const Policy& pi_e, const Policy& pi_b, const MdpSpec& spec) {
  return run(ImportanceKind::pdis, ds, pi_e, pi_b, spec);
}
double wis_estimate(const Dataset& ds, const Policy& pi_e, const Policy& pi_b, const MdpSpec& spec) {
  return run(ImportanceKind::wis, ds, pi_e, pi_b, spec);
}
double pdwis_estimate(const Dataset& ds, const Policy& pi_e, const Policy& pi_b, const MdpSpec& spec) {
  return run(ImportanceKind::pdwis, ds, pi_e, pi_b, spec);
}

}  // namespace hcope
