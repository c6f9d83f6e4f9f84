#include "hcope/models.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <numbers>
#include <unordered_map>

#include "hcope/errors.hpp"

namespace hcope {

namespace {

constexpr std::size_t kNone = std::numeric_limits<std::size_t>::max();

void add_count(std::vector<Outcome>& row, std::size_t next, double w) {
  for (Outcome& o : row)
    if (o.next == next) {
      o.prob += w;
      return;
    }
  row.push_back({next, w});
}

std::size_t checked(std::size_t index, std::size_t bound, const char* what) {
  if (index >= bound) throw ConfigError(std::string(what) + " index out of range");
  return index;
}

// Symmetric PSD square root via eigen-decomposition; tolerates singular matrices.
Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& m) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(m);
  Eigen::VectorXd d = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return eig.eigenvectors() * d.asDiagonal() * eig.eigenvectors().transpose();
}

std::uint64_t hash_values(std::uint64_t h, const std::vector<double>& xs) {
  for (double x : xs) h = mix64(h ^ std::bit_cast<std::uint64_t>(x));
  return h;
}

}  // namespace

TabularModel learn_tabular(const Dataset& ds, std::size_t states, std::size_t actions) {
  return learn_tabular(ds, states, actions, {});
}

TabularModel learn_tabular(const Dataset& ds, std::size_t states, std::size_t actions,
                           std::span<const double> weights) {
  if (!weights.empty() && weights.size() != ds.size()) throw ConfigError("weight vector has the wrong length");
  TabularModel m;
  m.dynamics = TabularDynamics(states, actions);
  m.counts.resize(states * actions);
  m.visits.assign(states * actions, 0.0);
  m.visited.assign(states * actions, 0);
  std::vector<double> d0(states, 0.0);
  double starts = 0.0;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const double w = weights.empty() ? 1.0 : weights[i];
    const Trajectory& traj = ds.trajectories[i];
    if (w == 0.0 || traj.steps.empty()) continue;
    d0[checked(state_index(traj.steps[0].state), states, "state")] += w;
    starts += w;
    for (std::size_t t = 0; t < traj.size(); ++t) {
      const State* next = nullptr;
      if (t + 1 < traj.size())
        next = &traj.steps[t + 1].state;
      else if (traj.final_state)
        next = &*traj.final_state;
      if (!next) continue;
      const std::size_t s = checked(state_index(traj.steps[t].state), states, "state");
      const std::size_t a = checked(action_index(traj.steps[t].action), actions, "action");
      const std::size_t k = s * actions + a;
      add_count(m.counts[k], checked(state_index(*next), states, "state"), w);
      m.visits[k] += w;
    }
  }
  bool any = false;
  for (std::size_t s = 0; s < states; ++s)
    for (std::size_t a = 0; a < actions; ++a) {
      const std::size_t k = s * actions + a;
      auto& row = m.dynamics.rows[k];
      if (m.visits[k] > 0.0) {
        any = true;
        m.visited[k] = 1;
        for (const Outcome& o : m.counts[k]) row.push_back({o.next, o.prob / m.visits[k]});
      } else {
        row.push_back({s, 1.0});
      }
    }
  if (starts > 0.0) {
    for (std::size_t s = 0; s < states; ++s) m.dynamics.initial[s] = d0[s] / starts;
  } else {
    std::fill(m.dynamics.initial.begin(), m.dynamics.initial.end(), 1.0 / static_cast<double>(states));
  }
  m.empty_data = !any;
  return m;
}

TabularReward tabular_reward(const Environment& env) {
  return [&env](std::size_t s, std::size_t a, std::size_t next) {
    return env.reward(DiscreteState{s}, DiscreteAction{a}, DiscreteState{next});
  };
}

std::vector<double> policy_table(const Policy& pi, std::size_t states, std::size_t actions) {
  std::vector<double> table(states * actions);
  for (std::size_t s = 0; s < states; ++s)
    for (std::size_t a = 0; a < actions; ++a) table[s * actions + a] = pi.prob(DiscreteState{s}, DiscreteAction{a});
  return table;
}

TabularValues backward_induction(const TabularDynamics& dyn, const TabularReward& reward,
                                 const std::vector<double>& pi, const MdpSpec& spec) {
  const std::size_t S = dyn.states, A = dyn.actions, L = spec.horizon;
  if (pi.size() != S * A) throw ConfigError("policy table has the wrong size");
  TabularValues out;
  out.horizon = L;
  out.states = S;
  out.actions = A;
  out.v.assign((L + 1) * S, 0.0);
  out.q.assign(L * S * A, 0.0);
  std::vector<double> rbar(S * A, 0.0);
  for (std::size_t s = 0; s < S; ++s)
    for (std::size_t a = 0; a < A; ++a)
      for (const Outcome& o : dyn.row(s, a)) rbar[s * A + a] += o.prob * reward(s, a, o.next);
  for (std::size_t t = L; t-- > 0;) {
    const double* vn = &out.v[(t + 1) * S];
    for (std::size_t s = 0; s < S; ++s) {
      double vs = 0.0;
      for (std::size_t a = 0; a < A; ++a) {
        double future = 0.0;
        for (const Outcome& o : dyn.row(s, a)) future += o.prob * vn[o.next];
        const double q = rbar[s * A + a] + spec.gamma * future;
        out.q[(t * S + s) * A + a] = q;
        vs += pi[s * A + a] * q;
      }
      out.v[t * S + s] = vs;
    }
  }
  return out;
}

double initial_value(const TabularDynamics& dyn, const TabularValues& values) {
  double total = 0.0;
  for (std::size_t s = 0; s < dyn.states; ++s) total += dyn.initial[s] * values.value(0, s);
  return total;
}

ValueFunctions ValueFunctions::zero() {
  ValueFunctions vf;
  vf.v = [](std::size_t, const State&) { return 0.0; };
  vf.q = [](std::size_t, const State&, const Action&) { return 0.0; };
  return vf;
}

ValueFunctions value_iteration(const TabularModel& model, const TabularReward& reward, const Policy& pi_e,
                               const MdpSpec& spec) {
  const TabularDynamics& dyn = model.dynamics;
  auto values = std::make_shared<const TabularValues>(
      backward_induction(dyn, reward, policy_table(pi_e, dyn.states, dyn.actions), spec));
  ValueFunctions vf;
  vf.provenance = ValueProvenance::value_iteration;
  vf.v = [values](std::size_t t, const State& s) {
    return t < values->horizon ? values->value(t, checked(state_index(s), values->states, "state")) : 0.0;
  };
  vf.q = [values](std::size_t t, const State& s, const Action& a) {
    if (t >= values->horizon) return 0.0;
    return values->action_value(t, checked(state_index(s), values->states, "state"),
                                 checked(action_index(a), values->actions, "action"));
  };
  return vf;
}

std::size_t feature_count(FeatureMap map, std::size_t state_dim, std::size_t action_dim) {
  return map == FeatureMap::linear ? 1 + state_dim + action_dim : 1 + 2 * state_dim + action_dim;
}

namespace {

void write_features(FeatureMap map, const double* s, std::size_t d, const double* a, std::size_t k, double* out) {
  std::size_t j = 0;
  out[j++] = 1.0;
  if (map == FeatureMap::linear) {
    for (std::size_t i = 0; i < d; ++i) out[j++] = s[i];
  } else {
    for (std::size_t i = 0; i < d; ++i) {
      const double x2 = s[i] * s[i];
      out[j++] = x2;
      out[j++] = x2 * s[i];
    }
  }
  for (std::size_t i = 0; i < k; ++i) out[j++] = a[i];
}

}  // namespace

Eigen::VectorXd features(FeatureMap map, const std::vector<double>& s, const std::vector<double>& a) {
  Eigen::VectorXd x(static_cast<Eigen::Index>(feature_count(map, s.size(), a.size())));
  write_features(map, s.data(), s.size(), a.data(), a.size(), x.data());
  return x;
}

void RegressionStats::add(const Eigen::VectorXd& x, const Eigen::VectorXd& y) {
  if (count == 0.0 && xtx.size() == 0) {
    xtx = Eigen::MatrixXd::Zero(x.size(), x.size());
    xty = Eigen::MatrixXd::Zero(x.size(), y.size());
    yty = Eigen::MatrixXd::Zero(y.size(), y.size());
  }
  xtx.selfadjointView<Eigen::Lower>().rankUpdate(x);
  xty.noalias() += x * y.transpose();
  yty.noalias() += y * y.transpose();
  count += 1.0;
}

void RegressionStats::add_scaled(const RegressionStats& other, double weight) {
  if (other.count == 0.0 || weight == 0.0) return;
  if (xtx.size() == 0) {
    xtx = Eigen::MatrixXd::Zero(other.xtx.rows(), other.xtx.cols());
    xty = Eigen::MatrixXd::Zero(other.xty.rows(), other.xty.cols());
    yty = Eigen::MatrixXd::Zero(other.yty.rows(), other.yty.cols());
  }
  xtx += weight * other.xtx;
  xty += weight * other.xty;
  yty += weight * other.yty;
  count += weight * other.count;
}

LinearGaussianModel LinearGaussianModel::from_parts(FeatureMap map, std::size_t state_dim, std::size_t action_dim,
                                                    Eigen::MatrixXd weights, Eigen::MatrixXd noise_cov) {
  const auto p = static_cast<Eigen::Index>(feature_count(map, state_dim, action_dim));
  const auto d = static_cast<Eigen::Index>(state_dim);
  if (weights.rows() != p || weights.cols() != d) throw ConfigError("model weight matrix has the wrong shape");
  if (noise_cov.rows() != d || noise_cov.cols() != d) throw ConfigError("noise covariance has the wrong shape");
  LinearGaussianModel m;
  m.map = map;
  m.state_dim = state_dim;
  m.action_dim = action_dim;
  m.weights = std::move(weights);
  m.noise_cov = 0.5 * (noise_cov + noise_cov.transpose());
  m.noise_sqrt = psd_sqrt(m.noise_cov);
  m.training_mse = m.noise_cov.trace() / static_cast<double>(d);
  return m;
}

std::vector<double> LinearGaussianModel::mean(const std::vector<double>& s, const std::vector<double>& a) const {
  if (s.size() != state_dim || a.size() != action_dim) throw ConfigError("model input has the wrong dimension");
  const Eigen::VectorXd mu = weights.transpose() * features(map, s, a);
  return {mu.data(), mu.data() + mu.size()};
}

std::vector<double> LinearGaussianModel::sample(const std::vector<double>& s, const std::vector<double>& a,
                                                Rng& rng) const {
  std::vector<double> out = mean(s, a);
  std::normal_distribution<double> normal;
  Eigen::VectorXd z(static_cast<Eigen::Index>(state_dim));
  for (Eigen::Index i = 0; i < z.size(); ++i) z[i] = normal(rng);
  const Eigen::VectorXd eta = noise_sqrt * z;
  for (std::size_t i = 0; i < state_dim; ++i) out[i] += eta[static_cast<Eigen::Index>(i)];
  return out;
}

double LinearGaussianModel::log_density(const std::vector<double>& s, const std::vector<double>& a,
                                        const std::vector<double>& next) const {
  const std::vector<double> mu = mean(s, a);
  if (next.size() != state_dim) throw ConfigError("model input has the wrong dimension");
  Eigen::LLT<Eigen::MatrixXd> llt(noise_cov);
  if (llt.info() != Eigen::Success || llt.matrixL().toDenseMatrix().diagonal().minCoeff() <= 0.0)
    throw NumericError("model noise covariance is singular");
  Eigen::VectorXd r(static_cast<Eigen::Index>(state_dim));
  for (std::size_t i = 0; i < state_dim; ++i) r[static_cast<Eigen::Index>(i)] = next[i] - mu[i];
  const Eigen::VectorXd z = llt.matrixL().solve(r);
  const double log_det = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
  return -0.5 * (static_cast<double>(state_dim) * std::log(2.0 * std::numbers::pi) + log_det + z.squaredNorm());
}

namespace {

struct Transitions {
  std::vector<Eigen::VectorXd> x, y;
  std::vector<std::size_t> owner;  // trajectory of each transition
};

Transitions collect_transitions(const Dataset& ds, FeatureMap map, std::size_t& state_dim, std::size_t& action_dim) {
  Transitions tr;
  state_dim = action_dim = 0;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const Trajectory& traj = ds.trajectories[i];
    for (std::size_t t = 0; t < traj.size(); ++t) {
      const State* next = nullptr;
      if (t + 1 < traj.size())
        next = &traj.steps[t + 1].state;
      else if (traj.final_state)
        next = &*traj.final_state;
      if (!next) continue;
      const auto& s = state_values(traj.steps[t].state);
      const auto& a = action_values(traj.steps[t].action);
      const auto& sn = state_values(*next);
      if (state_dim == 0) {
        state_dim = s.size();
        action_dim = a.size();
      }
      if (s.size() != state_dim || sn.size() != state_dim || a.size() != action_dim)
        throw ConfigError("inconsistent state or action dimension");
      tr.x.push_back(features(map, s, a));
      tr.y.push_back(Eigen::Map<const Eigen::VectorXd>(sn.data(), static_cast<Eigen::Index>(sn.size())));
      tr.owner.push_back(i);
    }
  }
  return tr;
}

Eigen::MatrixXd solve_weights(const RegressionStats& stats) {
  Eigen::MatrixXd a = stats.xtx.selfadjointView<Eigen::Lower>();
  a.diagonal().array() += 1e-8;
  return a.ldlt().solve(stats.xty);
}

}  // namespace

std::vector<RegressionStats> regression_stats(const Dataset& ds, FeatureMap map) {
  std::size_t d = 0, k = 0;
  const Transitions tr = collect_transitions(ds, map, d, k);
  std::vector<RegressionStats> out(ds.size());
  for (std::size_t j = 0; j < tr.x.size(); ++j) out[tr.owner[j]].add(tr.x[j], tr.y[j]);
  return out;
}

LinearGaussianModel fit_regression(const RegressionStats& stats, FeatureMap map, std::size_t state_dim,
                                   std::size_t action_dim) {
  const std::size_t p = feature_count(map, state_dim, action_dim);
  if (state_dim == 0 || stats.count < static_cast<double>(p)) throw ConfigError("underdetermined regression");
  Eigen::MatrixXd w = solve_weights(stats);
  const Eigen::MatrixXd xtx = stats.xtx.selfadjointView<Eigen::Lower>();
  const Eigen::MatrixXd cross = w.transpose() * stats.xty;
  Eigen::MatrixXd resid = stats.yty - cross - cross.transpose() + w.transpose() * xtx * w;
  resid /= stats.count;
  LinearGaussianModel m = LinearGaussianModel::from_parts(map, state_dim, action_dim, std::move(w), resid);
  m.samples = stats.count;
  return m;
}

LinearGaussianModel learn_regression(const Dataset& ds, FeatureMap map) {
  std::size_t d = 0, k = 0;
  const Transitions tr = collect_transitions(ds, map, d, k);
  RegressionStats stats;
  for (std::size_t j = 0; j < tr.x.size(); ++j) stats.add(tr.x[j], tr.y[j]);
  const std::size_t p = d == 0 ? 1 : feature_count(map, d, k);
  if (tr.x.empty() || tr.x.size() < p) throw ConfigError("underdetermined regression");
  Eigen::MatrixXd w = solve_weights(stats);
  // Residuals straight from the data: the normal-equation identity loses digits
  // exactly when the fit is near perfect.
  Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d));
  for (std::size_t j = 0; j < tr.x.size(); ++j) {
    const Eigen::VectorXd r = tr.y[j] - w.transpose() * tr.x[j];
    cov.noalias() += r * r.transpose();
  }
  cov /= static_cast<double>(tr.x.size());
  LinearGaussianModel m = LinearGaussianModel::from_parts(map, d, k, std::move(w), cov);
  m.samples = static_cast<double>(tr.x.size());
  return m;
}

double simulate_return(const LinearGaussianModel& model, const Environment& env, const Policy& pi_e,
                       std::size_t t, std::vector<double> s, const Action* first_action, Rng& rng) {
  const MdpSpec& spec = env.spec();
  const std::size_t d = model.state_dim, k = model.action_dim;
  const std::size_t p = feature_count(model.map, d, k);
  State cur = ContinuousState{std::move(s)};
  State nxt = ContinuousState{std::vector<double>(d)};
  std::vector<double> phi(p), z(d);
  std::normal_distribution<double> normal;
  const auto* gaussian = dynamic_cast<const GaussianPolicy*>(&pi_e);
  Action drawn = ContinuousAction{};
  double ret = 0.0, disc = 1.0;
  for (std::size_t u = t; u < spec.horizon; ++u) {
    if (env.is_terminal(cur)) break;
    if (u == t && first_action) drawn = *first_action;
    else if (gaussian) gaussian->sample_into(std::get<ContinuousState>(cur).values, rng, std::get<ContinuousAction>(drawn).values);
    else drawn = pi_e.sample(cur, rng);
    const Action& a = drawn;
    const auto& sv = std::get<ContinuousState>(cur).values;
    const auto& av = action_values(a);
    if (sv.size() != d || av.size() != k) throw ConfigError("model input has the wrong dimension");
    write_features(model.map, sv.data(), d, av.data(), k, phi.data());
    auto& nv = std::get<ContinuousState>(nxt).values;
    for (std::size_t i = 0; i < d; ++i) z[i] = normal(rng);
    for (std::size_t i = 0; i < d; ++i) {
      double m = 0.0;
      for (std::size_t j = 0; j < p; ++j) m += model.weights(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)) * phi[j];
      for (std::size_t j = 0; j < d; ++j) m += model.noise_sqrt(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) * z[j];
      nv[i] = m;
    }
    ret += disc * env.reward(cur, a, nxt);
    disc *= spec.gamma;
    std::swap(cur, nxt);
  }
  return ret;
}

ValueFunctions mc_value_functions(std::shared_ptr<const LinearGaussianModel> model, EnvironmentPtr env,
                                  PolicyPtr pi_e, std::size_t rollouts, std::uint64_t seed) {
  if (rollouts == 0) throw ConfigError("rollout count must be positive");
  ValueFunctions vf;
  vf.provenance = ValueProvenance::monte_carlo;
  vf.q = [=](std::size_t t, const State& s, const Action& a) {
    if (t >= env->spec().horizon || env->is_terminal(s)) return 0.0;
    const std::uint64_t h = hash_values(hash_values(mix64(seed ^ (t + 1)), state_values(s)), action_values(a));
    double total = 0.0;
    for (std::size_t r = 0; r < rollouts; ++r) {
      Rng rng = make_rng(h, {r});
      total += simulate_return(*model, *env, *pi_e, t, state_values(s), &a, rng);
    }
    return total / static_cast<double>(rollouts);
  };
  vf.v = [=](std::size_t t, const State& s) {
    if (t >= env->spec().horizon || env->is_terminal(s)) return 0.0;
    const std::uint64_t h = hash_values(mix64(~seed ^ (t + 1)), state_values(s));
    double total = 0.0;
    for (std::size_t r = 0; r < rollouts; ++r) {
      Rng rng = make_rng(h, {r});
      total += simulate_return(*model, *env, *pi_e, t, state_values(s), nullptr, rng);
    }
    return total / static_cast<double>(rollouts);
  };
  return vf;
}

double mb_rollout_value(const LinearGaussianModel& model, const Environment& env, const Policy& pi_e,
                        std::span<const std::vector<double>> starts, std::span<const double> start_weights,
                        std::size_t rollouts, std::uint64_t seed) {
  if (starts.empty() || starts.size() != start_weights.size()) throw ConfigError("no initial states");
  if (rollouts == 0) throw ConfigError("rollout count must be positive");
  std::vector<double> cum(starts.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < starts.size(); ++i) cum[i] = acc += start_weights[i];
  if (!(acc > 0.0)) throw ConfigError("empty dataset");
  double total = 0.0;
  for (std::size_t r = 0; r < rollouts; ++r) {
    Rng rng = make_rng(seed, {r});
    const double u = std::uniform_real_distribution<double>(0.0, acc)(rng);
    std::size_t i = static_cast<std::size_t>(std::upper_bound(cum.begin(), cum.end(), u) - cum.begin());
    if (i >= starts.size()) i = starts.size() - 1;
    while (start_weights[i] == 0.0) --i;  // u landed exactly on a boundary
    total += simulate_return(model, env, pi_e, 0, starts[i], nullptr, rng);
  }
  return total / static_cast<double>(rollouts);
}

double mb_estimate(const Dataset& ds, const Environment& env, const Policy& pi_e, ModelKind kind,
                   const ModelOptions& options) {
  if (ds.empty()) throw ConfigError("empty dataset");
  if (kind == ModelKind::tabular) {
    const auto space = env.discrete_space();
    if (!space) throw ConfigError("tabular model needs a discrete environment");
    const TabularModel model = learn_tabular(ds, space->states, space->actions);
    const TabularValues values = backward_induction(
        model.dynamics, tabular_reward(env), policy_table(pi_e, space->states, space->actions), env.spec());
    return initial_value(model.dynamics, values);
  }
  const LinearGaussianModel model =
      learn_regression(ds, kind == ModelKind::linear ? FeatureMap::linear : FeatureMap::polynomial);
  std::vector<std::vector<double>> starts;
  for (const Trajectory& traj : ds.trajectories) starts.push_back(state_values(traj.steps.at(0).state));
  const std::vector<double> ones(starts.size(), 1.0);
  return mb_rollout_value(model, env, pi_e, starts, ones, options.rollouts, options.seed);
}

ModelBasedEstimator::ModelBasedEstimator(ModelKind kind, const Dataset& ds, EnvironmentPtr env, PolicyPtr pi_e,
                                         ModelOptions options)
    : kind_(kind), env_(std::move(env)), pi_e_(std::move(pi_e)), options_(options), n_(ds.size()) {
  if (ds.empty()) throw ConfigError("empty dataset");
  spec_ = env_->spec();
  name_ = kind_ == ModelKind::tabular ? "mb-tabular" : kind_ == ModelKind::linear ? "mb-lr" : "mb-pr";
  for (const Trajectory& traj : ds.trajectories)
    if (traj.steps.empty()) throw ConfigError("empty trajectory");

  if (kind_ != ModelKind::tabular) {
    if (env_->discrete_space()) throw ConfigError("regression models need a continuous environment");
    map_ = kind_ == ModelKind::linear ? FeatureMap::linear : FeatureMap::polynomial;
    state_dim_ = state_values(ds.trajectories[0].steps[0].state).size();
    action_dim_ = action_values(ds.trajectories[0].steps[0].action).size();
    stats_ = regression_stats(ds, map_);
    for (const Trajectory& traj : ds.trajectories) starts_.push_back(state_values(traj.steps[0].state));
    return;
  }

  const auto space = env_->discrete_space();
  if (!space) throw ConfigError("tabular model needs a discrete environment");
  actions_ = space->actions;
  const std::size_t S = space->states, A = actions_;
  std::unordered_map<std::size_t, std::size_t> compact;
  std::vector<std::size_t> global;
  auto id = [&](const State& s) {
    const std::size_t g = checked(state_index(s), S, "state");
    auto [it, fresh] = compact.try_emplace(g, global.size());
    if (fresh) global.push_back(g);
    return it->second;
  };
  struct Triple {
    std::size_t s, a, next;
  };
  std::vector<Triple> triples;
  std::unordered_map<std::uint64_t, std::size_t> triple_id;
  trajectory_triples_.resize(n_);
  initial_.resize(n_);
  for (std::size_t i = 0; i < n_; ++i) {
    const Trajectory& traj = ds.trajectories[i];
    initial_[i] = id(traj.steps[0].state);
    for (std::size_t t = 0; t < traj.size(); ++t) {
      const State* next = nullptr;
      if (t + 1 < traj.size())
        next = &traj.steps[t + 1].state;
      else if (traj.final_state)
        next = &*traj.final_state;
      if (!next) continue;
      const std::size_t s = id(traj.steps[t].state);
      const std::size_t a = checked(action_index(traj.steps[t].action), A, "action");
      const std::size_t ns = id(*next);
      const std::uint64_t key = (static_cast<std::uint64_t>(global[s]) * A + a) * S + global[ns];
      auto [it, fresh] = triple_id.try_emplace(key, triples.size());
      if (fresh) triples.push_back({s, a, ns});
      trajectory_triples_[i].push_back(it->second);
    }
  }
  compact_states_ = global.size();
  const std::size_t K = compact_states_;

  // Group triples by (state, action) so that each state owns a contiguous range.
  std::vector<std::size_t> order(triples.size());
  for (std::size_t j = 0; j < order.size(); ++j) order[j] = j;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
    return std::pair(triples[x].s, triples[x].a) < std::pair(triples[y].s, triples[y].a);
  });
  std::vector<std::size_t> rank(triples.size());
  for (std::size_t j = 0; j < order.size(); ++j) rank[order[j]] = j;
  for (auto& list : trajectory_triples_)
    for (std::size_t& j : list) j = rank[j];

  const TabularReward reward = tabular_reward(*env_);
  triple_next_.resize(triples.size());
  triple_reward_.resize(triples.size());
  pair_of_.assign(K * A, kNone);
  for (std::size_t j = 0; j < order.size(); ++j) {
    const Triple& tr = triples[order[j]];
    triple_next_[j] = tr.next;
    triple_reward_[j] = reward(global[tr.s], tr.a, global[tr.next]);
    if (pairs_.empty() || pairs_.back().state != tr.s || pairs_.back().action != tr.a) {
      pair_of_[tr.s * A + tr.a] = pairs_.size();
      pairs_.push_back({tr.s, tr.a, j, j + 1});
    } else {
      pairs_.back().last = j + 1;
    }
  }
  pi_.resize(K * A);
  self_reward_.resize(K * A);
  for (std::size_t k = 0; k < K; ++k)
    for (std::size_t a = 0; a < A; ++a) {
      pi_[k * A + a] = pi_e_->prob(DiscreteState{global[k]}, DiscreteAction{a});
      self_reward_[k * A + a] = reward(global[k], a, global[k]);
    }
}

double ModelBasedEstimator::evaluate(std::span<const double> multiplicity) const {
  if (multiplicity.size() != n_) throw ConfigError("multiplicity vector has the wrong length");
  return kind_ == ModelKind::tabular ? evaluate_tabular(multiplicity) : evaluate_regression(multiplicity);
}

double ModelBasedEstimator::evaluate_tabular(std::span<const double> c) const {
  const std::size_t K = compact_states_, A = actions_, T = triple_next_.size();
  std::vector<double> cnt(T, 0.0), d0(K, 0.0);
  double total = 0.0;
  for (std::size_t i = 0; i < n_; ++i) {
    if (c[i] == 0.0) continue;
    total += c[i];
    d0[initial_[i]] += c[i];
    for (std::size_t j : trajectory_triples_[i]) cnt[j] += c[i];
  }
  if (!(total > 0.0)) throw ConfigError("empty dataset");

  // Per state: V_t(k) = base(k) + γ (loop(k) V_{t+1}(k) + Σ_j coef_j V_{t+1}(next_j)).
  std::vector<double> base(K, 0.0), loop(K, 0.0);
  std::vector<std::size_t> start(K + 1, 0), next;
  std::vector<double> coef;
  next.reserve(T);
  coef.reserve(T);
  std::vector<std::uint8_t> seen(A);
  for (std::size_t k = 0; k < K; ++k) {
    start[k] = next.size();
    std::fill(seen.begin(), seen.end(), 0);
    for (std::size_t a = 0; a < A; ++a) {
      const std::size_t p = pair_of_[k * A + a];
      if (p == kNone) continue;
      const Pair& pr = pairs_[p];
      double visits = 0.0;
      for (std::size_t j = pr.first; j < pr.last; ++j) visits += cnt[j];
      if (visits == 0.0) continue;
      seen[a] = 1;
      const double pa = pi_[k * A + a];
      if (pa == 0.0) continue;
      for (std::size_t j = pr.first; j < pr.last; ++j) {
        if (cnt[j] == 0.0) continue;
        const double w = pa * cnt[j] / visits;
        base[k] += w * triple_reward_[j];
        next.push_back(triple_next_[j]);
        coef.push_back(w);
      }
    }
    for (std::size_t a = 0; a < A; ++a)
      if (!seen[a]) {
        base[k] += pi_[k * A + a] * self_reward_[k * A + a];
        loop[k] += pi_[k * A + a];
      }
  }
  start[K] = next.size();

  const double gamma = spec_.gamma;
  std::vector<double> v(K, 0.0), vn(K, 0.0);
  for (std::size_t t = spec_.horizon; t-- > 0;) {
    for (std::size_t k = 0; k < K; ++k) {
      double f = loop[k] * vn[k];
      for (std::size_t j = start[k]; j < start[k + 1]; ++j) f += coef[j] * vn[next[j]];
      v[k] = base[k] + gamma * f;
    }
    std::swap(v, vn);
  }
  double value = 0.0;
  for (std::size_t k = 0; k < K; ++k) value += d0[k] * vn[k];
  return value / total;
}

double ModelBasedEstimator::evaluate_regression(std::span<const double> c) const {
  RegressionStats total;
  for (std::size_t i = 0; i < n_; ++i) total.add_scaled(stats_[i], c[i]);
  const LinearGaussianModel model = fit_regression(total, map_, state_dim_, action_dim_);
  return mb_rollout_value(model, *env_, *pi_e_, starts_, c, options_.rollouts, options_.seed);
}

}  // namespace hcope
