#pragma once

// Brute-force references shared by the tests. Deliberately naive: nested
// recursion over every (s_0, a_0, ..., s_{L-1}, a_{L-1}) with dense tables,
// no library helpers beyond plain data access.

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "hcope/benchmarks.hpp"
#include "hcope/core.hpp"
#include "hcope/env.hpp"
#include "hcope/policy.hpp"
#include "hcope/tabular.hpp"

namespace oracle {

using hcope::TabularDynamics;

struct Path {
  std::vector<std::size_t> s, a;
  double prob = 0.0;
};

inline std::vector<double> dense(const TabularDynamics& dyn) {
  const std::size_t S = dyn.states, A = dyn.actions;
  std::vector<double> p(S * A * S, 0.0);
  for (std::size_t s = 0; s < S; ++s)
    for (std::size_t a = 0; a < A; ++a)
      for (const auto& o : dyn.row(s, a)) p[(s * A + a) * S + o.next] += o.prob;
  return p;
}

inline std::vector<double> table(const hcope::Policy& pi, std::size_t S, std::size_t A) {
  std::vector<double> t(S * A);
  for (std::size_t s = 0; s < S; ++s)
    for (std::size_t a = 0; a < A; ++a) t[s * A + a] = pi.prob(hcope::DiscreteState{s}, hcope::DiscreteAction{a});
  return t;
}

/// Every length-L path with its probability under (dyn, pi), zero-probability paths included.
inline std::vector<Path> paths(const TabularDynamics& dyn, const std::vector<double>& pi, std::size_t L) {
  const std::size_t S = dyn.states, A = dyn.actions;
  const std::vector<double> p = dense(dyn);
  std::vector<Path> out;
  Path cur;
  std::function<void(std::size_t, double)> rec = [&](std::size_t t, double prob) {
    if (t == L) {
      cur.prob = prob;
      out.push_back(cur);
      return;
    }
    for (std::size_t s = 0; s < S; ++s) {
      const double ps = t == 0 ? dyn.initial[s] : p[(cur.s[t - 1] * A + cur.a[t - 1]) * S + s];
      for (std::size_t a = 0; a < A; ++a) {
        cur.s.push_back(s);
        cur.a.push_back(a);
        rec(t + 1, prob * ps * pi[s * A + a]);
        cur.s.pop_back();
        cur.a.pop_back();
      }
    }
  };
  rec(0, 1.0);
  return out;
}

inline double path_return(const Path& h, const std::vector<double>& r, std::size_t A, double gamma) {
  double g = 0.0, d = 1.0;
  for (std::size_t t = 0; t < h.s.size(); ++t, d *= gamma) g += d * r[h.s[t] * A + h.a[t]];
  return g;
}

/// V(π) by summing path returns.
inline double value(const TabularDynamics& dyn, const std::vector<double>& r, const std::vector<double>& pi,
                    std::size_t L, double gamma) {
  double v = 0.0;
  for (const auto& h : paths(dyn, pi, L)) v += h.prob * path_return(h, r, dyn.actions, gamma);
  return v;
}

/// V(π) by a textbook backward recursion, for cross-checking the enumeration.
inline double dp_value(const TabularDynamics& dyn, const std::vector<double>& r, const std::vector<double>& pi,
                       std::size_t L, double gamma) {
  const std::size_t S = dyn.states, A = dyn.actions;
  const std::vector<double> p = dense(dyn);
  std::vector<double> v(S, 0.0), next(S, 0.0);
  for (std::size_t t = L; t-- > 0;) {
    for (std::size_t s = 0; s < S; ++s) {
      double acc = 0.0;
      for (std::size_t a = 0; a < A; ++a) {
        double q = r[s * A + a];
        for (std::size_t s2 = 0; s2 < S; ++s2) q += gamma * p[(s * A + a) * S + s2] * v[s2];
        acc += pi[s * A + a] * q;
      }
      next[s] = acc;
    }
    v.swap(next);
  }
  double total = 0.0;
  for (std::size_t s = 0; s < S; ++s) total += dyn.initial[s] * v[s];
  return total;
}

/// Σ_h |p(h) - q(h)| / 2 over matching path lists.
inline double tv(const std::vector<Path>& p, const std::vector<Path>& q) {
  double d = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) d += std::abs(p[i].prob - q[i].prob);
  return d / 2.0;
}

inline double kl(const std::vector<Path>& p, const std::vector<Path>& q) {
  double d = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i)
    if (p[i].prob > 0.0) d += p[i].prob * std::log(p[i].prob / q[i].prob);
  return d;
}

/// One recorded trajectory for a path (rewards from r, no final state).
inline hcope::Trajectory trajectory(const Path& h, const std::vector<double>& r, std::size_t A) {
  hcope::Trajectory traj;
  for (std::size_t t = 0; t < h.s.size(); ++t)
    traj.steps.push_back({hcope::DiscreteState{h.s[t]}, hcope::DiscreteAction{h.a[t]}, r[h.s[t] * A + h.a[t]]});
  return traj;
}

/// All π_b paths of positive probability as a dataset plus their probabilities,
/// so an estimator evaluated with these multiplicities gives its exact expectation
/// over single-trajectory datasets (IS, PDIS, DR) or its population value (WIS, WDR).
struct Population {
  hcope::Dataset ds;
  std::vector<double> prob;
};

inline Population population(const hcope::TabularMdpEnv& env, const hcope::Policy& pi_b) {
  const auto& dyn = env.dynamics();
  Population pop;
  pop.ds.env_id = env.id();
  pop.ds.behavior_policy_id = pi_b.id();
  for (const auto& h : paths(dyn, table(pi_b, dyn.states, dyn.actions), env.spec().horizon)) {
    if (h.prob <= 0.0) continue;
    pop.ds.trajectories.push_back(trajectory(h, env.rewards(), dyn.actions));
    pop.prob.push_back(h.prob);
  }
  return pop;
}

/// Copy of `dyn` with every row mixed towards a random full-support distribution.
template <class Rng>
TabularDynamics perturbed(const TabularDynamics& dyn, Rng& rng, double lo = 0.05, double hi = 0.5) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  auto mix = [&](const std::vector<double>& p) {
    const double lam = lo + (hi - lo) * u(rng);
    std::vector<double> q(p.size());
    double z = 0.0;
    for (auto& x : q) z += x = 0.05 + u(rng);
    std::vector<double> out(p.size());
    for (std::size_t i = 0; i < p.size(); ++i) out[i] = (1 - lam) * p[i] + lam * q[i] / z;
    return out;
  };
  const std::size_t S = dyn.states, A = dyn.actions;
  const std::vector<double> p = dense(dyn);
  std::vector<double> np(p.size());
  for (std::size_t sa = 0; sa < S * A; ++sa) {
    const auto row = mix(std::vector<double>(p.begin() + sa * S, p.begin() + (sa + 1) * S));
    std::copy(row.begin(), row.end(), np.begin() + sa * S);
  }
  return TabularDynamics::dense(S, A, np, mix(dyn.initial));
}

}  // namespace oracle
