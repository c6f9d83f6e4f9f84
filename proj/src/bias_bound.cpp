#include "hcope/bias_bound.hpp"

#include <cmath>
#include <limits>
#include <numbers>

#include "hcope/errors.hpp"

namespace hcope {

namespace {

double g_max_of(const MdpSpec& spec) { return spec.shifted_return_bound(); }

std::vector<double> table_of(const Policy& pi, const TabularDynamics& dyn) {
  return policy_table(pi, dyn.states, dyn.actions);
}

void check_compatible(const TabularDynamics& truth, const TabularDynamics& model) {
  if (truth.states != model.states || truth.actions != model.actions)
    throw ConfigError("model and MDP have different state or action counts");
}

// Transitions of a recorded trajectory that belong to its distribution: every
// step-to-step move, plus the move into final_state when the episode ended early.
template <class Fn>
void for_each_transition(const Trajectory& traj, std::size_t horizon, Fn&& fn) {
  const std::size_t len = traj.size();
  for (std::size_t t = 0; t + 1 < len; ++t) fn(t, traj.steps[t], traj.steps[t + 1].state);
  if (traj.terminal && len < horizon && len > 0 && traj.final_state) fn(len - 1, traj.steps[len - 1], *traj.final_state);
}

std::string where(std::size_t i, std::size_t t) {
  return " at trajectory " + std::to_string(i) + " step " + std::to_string(t);
}

BiasBoundReport make_report(BoundVariant variant, SurrogateKind kind, const MdpSpec& spec, double kl) {
  BiasBoundReport r;
  r.variant = variant;
  r.surrogate = kind;
  r.g_max = g_max_of(spec);
  r.kl_term = kl;
  r.bound = 2.0 * std::numbers::sqrt2 * r.g_max * std::sqrt(std::max(kl, 0.0));
  return r;
}

}  // namespace

std::string to_string(BoundVariant v) {
  switch (v) {
    case BoundVariant::lemma1: return "lemma1";
    case BoundVariant::theorem1: return "theorem1";
    case BoundVariant::corollary1: return "corollary1";
    case BoundVariant::corollary2: return "corollary2-finite-sample";
  }
  return "";
}

std::string to_string(SurrogateKind k) {
  switch (k) {
    case SurrogateKind::exact_kl: return "exact-kl";
    case SurrogateKind::cross_entropy: return "cross-entropy";
    case SurrogateKind::nll: return "nll";
  }
  return "";
}

BoundVariant parse_bound_variant(const std::string& text) {
  if (text == "lemma1") return BoundVariant::lemma1;
  if (text == "theorem1") return BoundVariant::theorem1;
  if (text == "corollary1") return BoundVariant::corollary1;
  if (text == "corollary2" || text == "corollary2-finite-sample") return BoundVariant::corollary2;
  throw ConfigError("unknown bound variant '" + text + "'");
}

void for_each_trajectory(std::size_t states, std::size_t actions, std::size_t horizon,
                         const std::function<void(const std::vector<std::size_t>&,
                                                  const std::vector<std::size_t>&)>& fn) {
  if (states == 0 || actions == 0 || horizon == 0) throw ConfigError("nothing to enumerate");
  const double size = std::pow(static_cast<double>(states) * static_cast<double>(actions),
                               static_cast<double>(horizon));
  if (size > kEnumerationBudget) throw ConfigError("trajectory enumeration exceeds the budget of 1e7 sequences");
  std::vector<std::size_t> s(horizon, 0), a(horizon, 0);
  while (true) {
    fn(s, a);
    // Odometer increment over (s_0, a_0, ..., s_{L-1}, a_{L-1}), last position fastest.
    std::size_t pos = 2 * horizon;
    while (pos-- > 0) {
      const std::size_t t = pos / 2;
      auto& digit = pos % 2 ? a[t] : s[t];
      const std::size_t base = pos % 2 ? actions : states;
      if (++digit < base) break;
      digit = 0;
      if (pos == 0) return;
    }
  }
}

double trajectory_probability(const TabularDynamics& dyn, const std::vector<double>& pi,
                              const std::vector<std::size_t>& s, const std::vector<std::size_t>& a) {
  double p = dyn.initial[s[0]];
  for (std::size_t t = 0; t < s.size() && p != 0.0; ++t) {
    p *= pi[s[t] * dyn.actions + a[t]];
    if (t + 1 < s.size()) p *= dyn.prob(s[t], a[t], s[t + 1]);
  }
  return p;
}

double enumerated_value(const TabularDynamics& dyn, const std::vector<double>& rewards,
                        const std::vector<double>& pi, const MdpSpec& spec) {
  double v = 0.0;
  for_each_trajectory(dyn.states, dyn.actions, spec.horizon, [&](const auto& s, const auto& a) {
    const double p = trajectory_probability(dyn, pi, s, a);
    if (p == 0.0) return;
    double g = 0.0, disc = 1.0;
    for (std::size_t t = 0; t < s.size(); ++t, disc *= spec.gamma) g += disc * rewards[s[t] * dyn.actions + a[t]];
    v += p * g;
  });
  return v;
}

double trajectory_kl(const TabularDynamics& truth, const TabularDynamics& model, const std::vector<double>& pi,
                     std::size_t horizon) {
  check_compatible(truth, model);
  double kl = 0.0;
  for_each_trajectory(truth.states, truth.actions, horizon, [&](const auto& s, const auto& a) {
    const double p = trajectory_probability(truth, pi, s, a);
    if (p == 0.0) return;
    const double q = trajectory_probability(model, pi, s, a);
    if (q == 0.0) throw NumericError("infinite KL");
    kl += p * std::log(p / q);
  });
  return kl;
}

double trajectory_tv(const TabularDynamics& truth, const TabularDynamics& model, const std::vector<double>& pi,
                     std::size_t horizon) {
  check_compatible(truth, model);
  double tv = 0.0;
  for_each_trajectory(truth.states, truth.actions, horizon, [&](const auto& s, const auto& a) {
    tv += std::abs(trajectory_probability(truth, pi, s, a) - trajectory_probability(model, pi, s, a));
  });
  return 0.5 * tv;
}

double discrete_kl(const std::vector<double>& p, const std::vector<double>& q) {
  if (p.size() != q.size()) throw ConfigError("distributions have different sizes");
  double kl = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] == 0.0) continue;
    if (q[i] == 0.0) throw NumericError("infinite KL");
    kl += p[i] * std::log(p[i] / q[i]);
  }
  return kl;
}

BiasBoundReport lemma1_bound(const TabularMdpEnv& truth, const TabularDynamics& model, const Policy& pi) {
  const auto& spec = truth.spec();
  const double kl = trajectory_kl(truth.dynamics(), model, table_of(pi, truth.dynamics()), spec.horizon);
  return make_report(BoundVariant::lemma1, SurrogateKind::exact_kl, spec, kl);
}

BiasBoundReport theorem1_bound(const TabularMdpEnv& truth, const TabularDynamics& model, const Policy& pi_e,
                               const Policy& pi_b) {
  const TabularDynamics& dyn = truth.dynamics();
  check_compatible(dyn, model);
  const auto& spec = truth.spec();
  const auto te = table_of(pi_e, dyn), tb = table_of(pi_b, dyn);
  double total = 0.0;
  for_each_trajectory(dyn.states, dyn.actions, spec.horizon, [&](const auto& s, const auto& a) {
    const double pb = trajectory_probability(dyn, tb, s, a);
    if (pb == 0.0) {
      // π_b must cover every trajectory π_e can produce.
      if (trajectory_probability(dyn, te, s, a) > 0.0) throw SupportViolation("behavior support violation");
      return;
    }
    double rho = 1.0;
    for (std::size_t t = 0; t < s.size(); ++t) rho *= te[s[t] * dyn.actions + a[t]] / tb[s[t] * dyn.actions + a[t]];
    if (rho == 0.0) return;
    // Policy factors cancel in p_πe / p̂_πe; only d0 and P remain.
    double log_ratio = 0.0;
    const double m0 = model.initial[s[0]];
    if (m0 == 0.0) throw NumericError("infinite KL");
    log_ratio += std::log(dyn.initial[s[0]] / m0);
    for (std::size_t t = 0; t + 1 < s.size(); ++t) {
      const double p = dyn.prob(s[t], a[t], s[t + 1]);
      const double q = model.prob(s[t], a[t], s[t + 1]);
      if (q == 0.0) throw NumericError("infinite KL");
      log_ratio += std::log(p / q);
    }
    total += pb * rho * log_ratio;
  });
  return make_report(BoundVariant::theorem1, SurrogateKind::exact_kl, spec, total);
}

BiasBoundReport corollary1_bound(const TabularMdpEnv& truth, const TabularDynamics& model, const Policy& pi_e,
                                 const Policy& pi_b) {
  const TabularDynamics& dyn = truth.dynamics();
  check_compatible(dyn, model);
  const auto& spec = truth.spec();
  const std::size_t S = dyn.states, A = dyn.actions;
  const auto te = table_of(pi_e, dyn), tb = table_of(pi_b, dyn);

  std::vector<double> eps(S * A, 0.0);
  for (std::size_t s = 0; s < S; ++s)
    for (std::size_t a = 0; a < A; ++a) {
      std::vector<double> p(S, 0.0), q(S, 0.0);
      for (const Outcome& o : dyn.row(s, a)) p[o.next] += o.prob;
      for (const Outcome& o : model.row(s, a)) q[o.next] += o.prob;
      // An infinite ε only matters if the recursion below reaches (s, a).
      try {
        eps[s * A + a] = discrete_kl(p, q);
      } catch (const NumericError&) {
        eps[s * A + a] = std::numeric_limits<double>::infinity();
      }
    }

  double total = discrete_kl(dyn.initial, model.initial);
  // m(s) = E_πb[ρ_{t-1} 1{S_t = s}], starting from d0.
  std::vector<double> m = dyn.initial;
  for (std::size_t t = 0; t + 1 < spec.horizon; ++t) {
    std::vector<double> next(S, 0.0);
    for (std::size_t s = 0; s < S; ++s) {
      if (m[s] == 0.0) continue;
      for (std::size_t a = 0; a < A; ++a) {
        const double pb = tb[s * A + a];
        if (pb == 0.0) {
          if (te[s * A + a] > 0.0) throw SupportViolation("behavior support violation");
          continue;
        }
        const double w = m[s] * pb * (te[s * A + a] / pb);
        if (w == 0.0) continue;
        if (std::isinf(eps[s * A + a])) throw NumericError("infinite KL");
        total += w * eps[s * A + a];
        for (const Outcome& o : dyn.row(s, a)) next[o.next] += w * o.prob;
      }
    }
    m = std::move(next);
  }
  return make_report(BoundVariant::corollary1, SurrogateKind::exact_kl, spec, total);
}

double enumerated_weighted_expectation(const TabularMdpEnv& truth, const Policy& pi_e, const Policy& pi_b,
                                       std::size_t t, bool full_weight,
                                       const std::function<double(std::size_t, std::size_t)>& f) {
  const TabularDynamics& dyn = truth.dynamics();
  const auto te = table_of(pi_e, dyn), tb = table_of(pi_b, dyn);
  const std::size_t L = truth.spec().horizon;
  if (t >= L) throw ConfigError("time step beyond the horizon");
  double total = 0.0;
  for_each_trajectory(dyn.states, dyn.actions, L, [&](const auto& s, const auto& a) {
    const double pb = trajectory_probability(dyn, tb, s, a);
    if (pb == 0.0) return;
    const std::size_t upto = full_weight ? L : t + 1;
    double rho = 1.0;
    for (std::size_t u = 0; u < upto; ++u) rho *= te[s[u] * dyn.actions + a[u]] / tb[s[u] * dyn.actions + a[u]];
    total += pb * rho * f(s[t], a[t]);
  });
  return total;
}

double expected_cross_entropy(const TabularMdpEnv& truth, const TabularDynamics& model, const Policy& pi_e,
                              const Policy& pi_b) {
  const TabularDynamics& dyn = truth.dynamics();
  check_compatible(dyn, model);
  const auto te = table_of(pi_e, dyn), tb = table_of(pi_b, dyn);
  double total = 0.0;
  for_each_trajectory(dyn.states, dyn.actions, truth.spec().horizon, [&](const auto& s, const auto& a) {
    const double pb = trajectory_probability(dyn, tb, s, a);
    if (pb == 0.0) return;
    const double m0 = model.initial[s[0]];
    if (m0 == 0.0) throw NumericError("zero model probability on initial state");
    double h = -std::log(m0), rho = 1.0;
    for (std::size_t t = 0; t + 1 < s.size(); ++t) {
      rho *= te[s[t] * dyn.actions + a[t]] / tb[s[t] * dyn.actions + a[t]];
      if (rho == 0.0) break;
      const double q = model.prob(s[t], a[t], s[t + 1]);
      if (q == 0.0) throw NumericError("zero model probability on a reachable transition");
      h += rho * -std::log(q);
    }
    total += pb * h;
  });
  return total;
}

namespace {

// ρ_t of every recorded step, computed in log space.
std::vector<double> step_weights(const Trajectory& traj, const Policy& pi_e, const Policy& pi_b, std::size_t i) {
  std::vector<double> rho(traj.size());
  double acc = 0.0;
  for (std::size_t t = 0; t < traj.size(); ++t) {
    const Step& st = traj.steps[t];
    const double lb = pi_b.log_prob(st.state, st.action);
    if (lb == -std::numeric_limits<double>::infinity())
      throw SupportViolation("behavior support violation" + where(i, t));
    acc += pi_e.log_prob(st.state, st.action) - lb;
    rho[t] = std::exp(acc);
  }
  return rho;
}

}  // namespace

double surrogate_kl(const Dataset& ds, const TabularDynamics& model, const Policy& pi_e, const Policy& pi_b,
                    std::size_t horizon) {
  if (ds.empty()) throw ConfigError("empty dataset");
  double total = 0.0;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const Trajectory& traj = ds.trajectories[i];
    if (traj.steps.empty()) throw ConfigError("empty trajectory");
    const double d0 = model.initial.at(state_index(traj.steps[0].state));
    if (d0 == 0.0) throw NumericError("zero model probability on initial state" + where(i, 0));
    total += -std::log(d0);
    const auto rho = step_weights(traj, pi_e, pi_b, i);
    for_each_transition(traj, horizon, [&](std::size_t t, const Step& st, const State& next) {
      if (rho[t] == 0.0) return;
      const double q = model.prob(state_index(st.state), action_index(st.action), state_index(next));
      if (q == 0.0) throw NumericError("zero model probability on observed transition" + where(i, t));
      total += rho[t] * -std::log(q);
    });
  }
  return total / static_cast<double>(ds.size());
}

double surrogate_kl(const Dataset& ds, const LinearGaussianModel& model, const Policy& pi_e, const Policy& pi_b,
                    std::size_t horizon) {
  if (ds.empty()) throw ConfigError("empty dataset");
  double total = 0.0;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const Trajectory& traj = ds.trajectories[i];
    const auto rho = step_weights(traj, pi_e, pi_b, i);
    for_each_transition(traj, horizon, [&](std::size_t t, const Step& st, const State& next) {
      if (rho[t] == 0.0) return;
      total += rho[t] * -model.log_density(state_values(st.state), action_values(st.action), state_values(next));
    });
  }
  return total / static_cast<double>(ds.size());
}

BiasBoundReport surrogate_bound(double surrogate, SurrogateKind kind, const MdpSpec& spec, std::size_t n) {
  BiasBoundReport r = make_report(BoundVariant::corollary1, kind, spec, surrogate);
  r.trajectories = n;
  if (surrogate < 0.0) r.warnings.push_back("negative surrogate clamped at zero");
  return r;
}

BiasBoundReport corollary2_from_loglik(double mean_loglik, std::size_t m, double alpha, const MdpSpec& spec,
                                       SurrogateKind kind) {
  if (!(alpha > 0.0 && alpha <= 1.0)) throw ConfigError("alpha must lie in (0, 1]");
  if (m == 0) throw ConfigError("empty dataset");
  BiasBoundReport r;
  r.variant = BoundVariant::corollary2;
  r.surrogate = kind;
  r.alpha = alpha;
  r.trajectories = m;
  r.g_max = g_max_of(spec);
  const double hoeffding = 2.0 * std::sqrt(std::log(1.0 / alpha) / (2.0 * static_cast<double>(m)));
  r.kl_term = hoeffding - mean_loglik;
  if (r.kl_term < 0.0) {
    r.warnings.push_back("corollary 2 radicand " + std::to_string(r.kl_term) + " clamped at zero");
    warn(r.warnings.back());
  }
  r.bound = 2.0 * r.g_max * std::sqrt(std::max(r.kl_term, 0.0));
  return r;
}

BiasBoundReport corollary2_bound(const Dataset& ds, const TabularDynamics& model, double alpha,
                                 const MdpSpec& spec) {
  if (ds.empty()) throw ConfigError("empty dataset");
  double total = 0.0;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const Trajectory& traj = ds.trajectories[i];
    if (traj.steps.empty()) throw ConfigError("empty trajectory");
    const double d0 = model.initial.at(state_index(traj.steps[0].state));
    if (d0 == 0.0) throw NumericError("zero model probability on initial state" + where(i, 0));
    total += std::log(d0);
    for_each_transition(traj, spec.horizon, [&](std::size_t t, const Step& st, const State& next) {
      const double q = model.prob(state_index(st.state), action_index(st.action), state_index(next));
      if (q == 0.0) throw NumericError("zero model probability on observed transition" + where(i, t));
      total += std::log(q);
    });
  }
  return corollary2_from_loglik(total / static_cast<double>(ds.size()), ds.size(), alpha, spec,
                                SurrogateKind::cross_entropy);
}

BiasBoundReport corollary2_bound(const Dataset& ds, const LinearGaussianModel& model, double alpha,
                                 const MdpSpec& spec) {
  if (ds.empty()) throw ConfigError("empty dataset");
  double total = 0.0;
  for (const Trajectory& traj : ds.trajectories)
    for_each_transition(traj, spec.horizon, [&](std::size_t, const Step& st, const State& next) {
      total += model.log_density(state_values(st.state), action_values(st.action), state_values(next));
    });
  return corollary2_from_loglik(total / static_cast<double>(ds.size()), ds.size(), alpha, spec, SurrogateKind::nll);
}

}  // namespace hcope
