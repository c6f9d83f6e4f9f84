#include "hcope/policy.hpp"

#include <cmath>
#include <istream>
#include <numbers>
#include <ostream>
#include <sstream>

#include "hcope/dataset_io.hpp"
#include "hcope/errors.hpp"

namespace hcope {

double Policy::log_prob(const State& s, const Action& a) const { return std::log(prob(s, a)); }

TabularPolicy::TabularPolicy(std::string id, std::size_t state_count, std::size_t action_count,
                             std::vector<double> probs)
    : id_(std::move(id)), states_(state_count), actions_(action_count), probs_(std::move(probs)) {
  if (states_ == 0 || actions_ == 0) throw ConfigError("tabular policy needs states and actions");
  if (probs_.size() != states_ * actions_) throw ConfigError("tabular policy table has the wrong size");
  cumulative_.resize(probs_.size());
  for (std::size_t s = 0; s < states_; ++s) {
    double total = 0.0;
    for (std::size_t a = 0; a < actions_; ++a) {
      const double p = probs_[s * actions_ + a];
      if (!(p >= 0.0) || !std::isfinite(p)) throw ConfigError("tabular policy entries must be finite and >= 0");
      total += p;
    }
    if (!(total > 0.0)) throw ConfigError("tabular policy row " + std::to_string(s) + " sums to zero");
    // Rows already summing to one are kept as given.
    const double scale = std::abs(total - 1.0) <= 1e-12 ? 1.0 : total;
    double running = 0.0;
    for (std::size_t a = 0; a < actions_; ++a) {
      probs_[s * actions_ + a] /= scale;
      running += probs_[s * actions_ + a];
      cumulative_[s * actions_ + a] = running;
    }
  }
}

TabularPolicy TabularPolicy::uniform(std::string id, std::size_t state_count, std::size_t action_count) {
  return TabularPolicy(std::move(id), state_count, action_count,
                       std::vector<double>(state_count * action_count, 1.0));
}

std::size_t TabularPolicy::checked_state(const State& s) const {
  const std::size_t idx = state_index(s);
  if (idx >= states_) throw ConfigError("state index " + std::to_string(idx) + " out of range for policy " + id_);
  return idx;
}

double TabularPolicy::prob(const State& s, const Action& a) const {
  const std::size_t si = checked_state(s);
  const std::size_t ai = action_index(a);
  if (ai >= actions_) throw ConfigError("action index " + std::to_string(ai) + " out of range for policy " + id_);
  return probs_[si * actions_ + ai];
}

Action TabularPolicy::sample(const State& s, Rng& rng) const {
  const std::size_t si = checked_state(s);
  const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  const double* row = &cumulative_[si * actions_];
  for (std::size_t a = 0; a < actions_; ++a) {
    if (u < row[a] && probs_[si * actions_ + a] > 0.0) return DiscreteAction{a};
  }
  // u landed in the rounding slack above the last cumulative value.
  for (std::size_t a = actions_; a-- > 0;) {
    if (probs_[si * actions_ + a] > 0.0) return DiscreteAction{a};
  }
  return DiscreteAction{actions_ - 1};
}

GaussianPolicy::GaussianPolicy(std::string id, std::string mean_id, MeanFn mean_fn, Eigen::MatrixXd covariance)
    : id_(std::move(id)), mean_id_(std::move(mean_id)), mean_fn_(std::move(mean_fn)),
      covariance_(std::move(covariance)) {
  const auto k = covariance_.rows();
  if (k == 0 || covariance_.cols() != k) throw ConfigError("covariance must be square and non-empty");
  if (!covariance_.isApprox(covariance_.transpose(), 1e-12)) throw ConfigError("covariance must be symmetric");
  chol_.compute(covariance_);
  if (chol_.info() != Eigen::Success) throw ConfigError("covariance must be positive definite");
  lower_ = chol_.matrixL();
  const auto& l = chol_.matrixL();
  double log_det = 0.0;
  for (Eigen::Index i = 0; i < k; ++i) {
    const double d = l(i, i);
    if (!(d > 0.0)) throw ConfigError("covariance must be positive definite");
    log_det += 2.0 * std::log(d);
  }
  log_norm_ = -0.5 * (static_cast<double>(k) * std::log(2.0 * std::numbers::pi) + log_det);
}

std::vector<double> GaussianPolicy::mean(const std::vector<double>& state) const {
  std::vector<double> m = mean_fn_(state);
  if (m.size() != action_dim()) throw ConfigError("mean map returned the wrong dimension");
  return m;
}

double GaussianPolicy::log_prob(const State& s, const Action& a) const {
  const auto& av = action_values(a);
  if (av.size() != action_dim()) throw ConfigError("action dimension mismatch for policy " + id_);
  const std::vector<double> m = mean(state_values(s));
  Eigen::VectorXd diff(static_cast<Eigen::Index>(av.size()));
  for (std::size_t i = 0; i < av.size(); ++i) diff(static_cast<Eigen::Index>(i)) = av[i] - m[i];
  const Eigen::VectorXd z = chol_.matrixL().solve(diff);
  return log_norm_ - 0.5 * z.squaredNorm();
}

double GaussianPolicy::prob(const State& s, const Action& a) const { return std::exp(log_prob(s, a)); }

Action GaussianPolicy::sample(const State& s, Rng& rng) const {
  ContinuousAction a;
  sample_into(state_values(s), rng, a.values);
  return a;
}

void GaussianPolicy::sample_into(const std::vector<double>& state, Rng& rng, std::vector<double>& out) const {
  const std::vector<double> m = mean(state);
  const std::size_t k = m.size();
  std::normal_distribution<double> normal(0.0, 1.0);
  out.resize(k);
  for (std::size_t i = 0; i < k; ++i) out[i] = normal(rng);
  // out <- L z in place, bottom row first so each row still sees the z it needs.
  for (std::size_t i = k; i-- > 0;) {
    double acc = 0.0;
    for (std::size_t j = 0; j <= i; ++j)
      acc += lower_(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) * out[j];
    out[i] = m[i] + acc;
  }
}

SupportReport support_check(const Policy& pi_e, const Policy& pi_b, const Dataset& ds) {
  for (std::size_t i = 0; i < ds.trajectories.size(); ++i) {
    const auto& steps = ds.trajectories[i].steps;
    for (std::size_t t = 0; t < steps.size(); ++t) {
      const double pb = pi_b.prob(steps[t].state, steps[t].action);
      if (!(pb > 0.0)) {
        std::ostringstream msg;
        msg << "behavior policy " << pi_b.id() << " gives zero probability to the observed action at trajectory "
            << i << " step " << t << " (evaluation probability " << pi_e.prob(steps[t].state, steps[t].action)
            << ")";
        return {false, i, t, msg.str()};
      }
    }
  }
  return {};
}

void write_policy(std::ostream& out, const Policy& policy) {
  if (const auto* tab = dynamic_cast<const TabularPolicy*>(&policy)) {
    out << "tabular " << tab->id() << ' ' << tab->state_count() << ' ' << tab->action_count() << '\n';
    for (std::size_t s = 0; s < tab->state_count(); ++s) {
      for (std::size_t a = 0; a < tab->action_count(); ++a) {
        if (a) out << ' ';
        out << format_real(tab->prob(s, a));
      }
      out << '\n';
    }
    return;
  }
  if (const auto* g = dynamic_cast<const GaussianPolicy*>(&policy)) {
    const auto& cov = g->covariance();
    out << "gaussian " << g->id() << ' ' << g->mean_id() << ' ' << cov.rows() << '\n';
    for (Eigen::Index r = 0; r < cov.rows(); ++r) {
      for (Eigen::Index c = 0; c < cov.cols(); ++c) {
        if (c) out << ' ';
        out << format_real(cov(r, c));
      }
      out << '\n';
    }
    return;
  }
  throw ConfigError("policy " + policy.id() + " has no serialized form");
}

PolicyPtr read_policy(std::istream& in, const MeanResolver& resolve_mean) {
  std::string kind, id;
  std::size_t line = 1;
  if (!(in >> kind >> id)) throw ParseError(line, "missing policy header");
  if (kind == "tabular") {
    std::size_t states = 0, actions = 0;
    if (!(in >> states >> actions)) throw ParseError(line, "missing tabular dimensions");
    std::vector<double> probs(states * actions);
    for (std::size_t s = 0; s < states; ++s) {
      ++line;
      for (std::size_t a = 0; a < actions; ++a) {
        if (!(in >> probs[s * actions + a])) throw ParseError(line, "truncated probability row");
      }
    }
    return std::make_shared<TabularPolicy>(id, states, actions, std::move(probs));
  }
  if (kind == "gaussian") {
    std::string mean_id;
    Eigen::Index k = 0;
    if (!(in >> mean_id >> k) || k <= 0) throw ParseError(line, "missing gaussian mean id or dimension");
    Eigen::MatrixXd cov(k, k);
    for (Eigen::Index r = 0; r < k; ++r) {
      ++line;
      for (Eigen::Index c = 0; c < k; ++c) {
        if (!(in >> cov(r, c))) throw ParseError(line, "truncated covariance row");
      }
    }
    auto fn = resolve_mean(mean_id);
    if (!fn) throw ConfigError("unknown mean policy id '" + mean_id + "'");
    return std::make_shared<GaussianPolicy>(id, mean_id, std::move(*fn), std::move(cov));
  }
  throw ParseError(line, "unknown policy kind '" + kind + "'");
}

}  // namespace hcope
