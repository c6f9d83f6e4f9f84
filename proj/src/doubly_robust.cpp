#include "hcope/doubly_robust.hpp"

#include <cmath>
#include <algorithm>
#include <limits>
#include <string>

#include "hcope/errors.hpp"

namespace hcope {

ValueTable value_table(const Dataset& ds, const ValueFunctions& vf, const MdpSpec& spec) {
  const std::size_t L = spec.horizon, n = ds.size();
  ValueTable out;
  out.q.resize(n * L);
  out.v.resize(n * L);
  for (std::size_t i = 0; i < n; ++i) {
    const Trajectory& traj = ds.trajectories[i];
    for (std::size_t t = 0; t < L; ++t) {
      double q = 0.0, v = 0.0;
      if (t < traj.size()) {
        q = vf.q(t, traj.steps[t].state, traj.steps[t].action);
        v = vf.v(t, traj.steps[t].state);
      }
      out.q[i * L + t] = normalize_value_to_go(q, t, spec);
      out.v[i * L + t] = normalize_value_to_go(v, t, spec);
    }
  }
  return out;
}

double mixture_gap(const Dataset& ds, const ValueFunctions& vf, const Policy& pi_e, std::size_t actions,
                   const MdpSpec& spec) {
  double gap = 0.0;
  for (const Trajectory& traj : ds.trajectories)
    for (std::size_t t = 0; t < traj.size() && t < spec.horizon; ++t) {
      const State& s = traj.steps[t].state;
      double mix = 0.0;
      for (std::size_t a = 0; a < actions; ++a) {
        const double p = pi_e.prob(s, DiscreteAction{a});
        if (p != 0.0) mix += p * vf.q(t, s, DiscreteAction{a});
      }
      gap = std::max(gap, std::abs(vf.v(t, s) - mix));
    }
  return gap;
}

DoublyRobustEstimator::DoublyRobustEstimator(bool weighted, std::shared_ptr<const ImportanceData> data,
                                             ValueTable values, std::string name)
    : weighted_(weighted), data_(std::move(data)), values_(std::move(values)), name_(std::move(name)) {
  if (name_.empty()) name_ = weighted_ ? "wdr" : "dr";
  const std::size_t n = data_->n, L = data_->horizon();
  if (values_.q.size() != n * L || values_.v.size() != n * L) throw ConfigError("value table has the wrong size");
  if (weighted_) {
    // The image of a raw zero value is a per-step constant; it cancels column by
    // column in WDR, so values are measured from it and a zero model contributes nothing.
    for (std::size_t t = 0; t < L; ++t) {
      const double zero = normalize_value_to_go(0.0, t, data_->spec);
      for (std::size_t i = 0; i < n; ++i) {
        values_.q[i * L + t] -= zero;
        values_.v[i * L + t] -= zero;
      }
    }
  }
  shifted_v_.assign(n * L, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t t = 0; t + 1 < L; ++t) shifted_v_[i * L + t] = values_.v[i * L + t + 1];
  if (!weighted_) {
    per_trajectory_.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      double s = 0.0, prev = 1.0;
      for (std::size_t t = 0; t < L; ++t) {
        const std::size_t k = i * L + t;
        const double rho = data_->weights.rho(i, t);
        s += data_->discount[t] * (rho * (data_->rewards[k] - values_.q[k]) + prev * values_.v[k]);
        prev = rho;
      }
      per_trajectory_[i] = s;
    }
  }
}

double DoublyRobustEstimator::evaluate_normalized(std::span<const double> c) const {
  const std::size_t n = data_->n, L = data_->horizon();
  if (c.size() != n) throw ConfigError("multiplicity vector has the wrong length");
  double total = 0.0;
  for (double x : c) total += x;
  if (!(total > 0.0)) throw ConfigError("empty dataset");
  if (!weighted_) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += c[i] * per_trajectory_[i];
    return s / total;
  }
  std::vector<double> den;
  std::vector<std::vector<double>> num;
  const std::vector<double>* cols[] = {&data_->rewards, &values_.q, &shifted_v_};
  data_->weighted_columns(c, cols, den, num);
  // t = -1 column: w = c_i / Σc, paired with v̂(S_0).
  double v0 = 0.0;
  for (std::size_t i = 0; i < n; ++i) v0 += c[i] * values_.v[i * L];
  double est = v0 / total;
  for (std::size_t t = 0; t < L; ++t) {
    const double g = data_->discount[t];
    est += g * (num[0][t] - num[1][t]) / den[t];
    if (t + 1 < L) est += data_->discount[t + 1] * num[2][t] / den[t];
  }
  return est;
}

double DoublyRobustEstimator::evaluate(std::span<const double> multiplicity) const {
  return denormalize_return(evaluate_normalized(multiplicity), data_->spec);
}

ControlVariateTrace DoublyRobustEstimator::control_variate(std::span<const double> c) const {
  const std::size_t n = data_->n, L = data_->horizon();
  if (c.size() != n) throw ConfigError("multiplicity vector has the wrong length");
  double total = 0.0;
  for (double x : c) total += x;
  if (!(total > 0.0)) throw ConfigError("empty dataset");
  // Column weights w_t^i (or c_i ρ / Σc for DR), then the trace itself.
  std::vector<double> w(n * L, 0.0);
  if (weighted_) {
    for (std::size_t t = 0; t < L; ++t) {
      double top = -std::numeric_limits<double>::infinity();
      for (std::size_t i = 0; i < n; ++i)
        if (c[i] != 0.0) top = std::max(top, data_->weights.log(i, t));
      if (top == -std::numeric_limits<double>::infinity())
        throw NumericError("all importance weights zero at step " + std::to_string(t));
      double sum = 0.0;
      for (std::size_t i = 0; i < n; ++i)
        if (c[i] != 0.0) sum += w[i * L + t] = c[i] * std::exp(data_->weights.log(i, t) - top);
      for (std::size_t i = 0; i < n; ++i) w[i * L + t] /= sum;
    }
  } else {
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t t = 0; t < L; ++t) w[i * L + t] = c[i] * data_->weights.rho(i, t) / total;
  }
  ControlVariateTrace trace;
  trace.trajectories = n;
  trace.horizon = L;
  trace.terms.assign(n * L, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t t = 0; t < L; ++t) {
      const std::size_t k = i * L + t;
      const double prev = t == 0 ? c[i] / total : w[k - 1];
      trace.terms[k] = data_->discount[t] * (w[k] * values_.q[k] - prev * values_.v[k]);
      trace.total += trace.terms[k];
    }
  return trace;
}

namespace {

DoublyRobustEstimator make(bool weighted, const Dataset& ds, const Policy& pi_e, const Policy& pi_b,
                           const ValueFunctions& vf, const MdpSpec& spec, std::optional<std::size_t> actions) {
  if (actions) {
    const double gap = mixture_gap(ds, vf, pi_e, *actions, spec);
    if (gap > 1e-6) warn("value functions violate v = E_pi[q] by " + std::to_string(gap));
  }
  auto data = std::make_shared<const ImportanceData>(ImportanceData::build(ds, pi_e, pi_b, spec));
  return DoublyRobustEstimator(weighted, data, value_table(ds, vf, spec));
}

}  // namespace

double wdr_estimate(const Dataset& ds, const Policy& pi_e, const Policy& pi_b, const ValueFunctions& vf,
                    const MdpSpec& spec, std::optional<std::size_t> discrete_actions) {
  return make(true, ds, pi_e, pi_b, vf, spec, discrete_actions).evaluate_full();
}

double dr_estimate(const Dataset& ds, const Policy& pi_e, const Policy& pi_b, const ValueFunctions& vf,
                   const MdpSpec& spec, std::optional<std::size_t> discrete_actions) {
  return make(false, ds, pi_e, pi_b, vf, spec, discrete_actions).evaluate_full();
}

ControlVariateTrace wdr_control_variate(const Dataset& ds, const Policy& pi_e, const Policy& pi_b,
                                        const ValueFunctions& vf, const MdpSpec& spec) {
  const DoublyRobustEstimator est = make(true, ds, pi_e, pi_b, vf, spec, std::nullopt);
  const std::vector<double> ones(ds.size(), 1.0);
  return est.control_variate(ones);
}

}  // namespace hcope
