#pragma once

// Upper bounds on the bias of a model-based value estimate.
//
// With returns confined to a range of width g_max = L (r_max - r_min),
//
//   |V(π) - V̂(π)| ≤ 2 g_max D_TV(p_π, p̂_π) ≤ 2√2 g_max sqrt(D_KL(p_π ‖ p̂_π)),
//
// where p_π and p̂_π are the trajectory distributions of π in the true MDP and
// in the model. The exact variants enumerate trajectories and exist for small
// MDPs; the surrogates estimate the KL term from data.

#include <functional>
#include <string>
#include <vector>

#include "hcope/core.hpp"
#include "hcope/env.hpp"
#include "hcope/models.hpp"
#include "hcope/policy.hpp"
#include "hcope/tabular.hpp"

namespace hcope {

enum class BoundVariant { lemma1, theorem1, corollary1, corollary2 };
enum class SurrogateKind { exact_kl, cross_entropy, nll };

std::string to_string(BoundVariant v);
std::string to_string(SurrogateKind k);
BoundVariant parse_bound_variant(const std::string& text);

struct BiasBoundReport {
  BoundVariant variant = BoundVariant::lemma1;
  SurrogateKind surrogate = SurrogateKind::exact_kl;
  double g_max = 0.0;
  double kl_term = 0.0;  // the quantity under the square root
  double bound = 0.0;
  double alpha = 0.0;    // corollary 2 only
  std::size_t trajectories = 0;
  std::vector<std::string> warnings;
};

/// Largest number of trajectories the exact variants will enumerate.
inline constexpr double kEnumerationBudget = 1e7;

/// Calls fn(states, actions) for every sequence s_0 a_0 ... s_{L-1} a_{L-1}.
/// Throws ConfigError when |S|^L |A|^L exceeds the budget.
void for_each_trajectory(std::size_t states, std::size_t actions, std::size_t horizon,
                         const std::function<void(const std::vector<std::size_t>&,
                                                  const std::vector<std::size_t>&)>& fn);

/// d0(s_0) Π_t π(a_t|s_t) Π_{t<L-1} P(s_{t+1}|s_t, a_t).
double trajectory_probability(const TabularDynamics& dyn, const std::vector<double>& pi,
                              const std::vector<std::size_t>& s, const std::vector<std::size_t>& a);

/// V(π) by trajectory enumeration with rewards r(s, a).
double enumerated_value(const TabularDynamics& dyn, const std::vector<double>& rewards,
                        const std::vector<double>& pi, const MdpSpec& spec);

/// Exact D_KL(p_π ‖ p̂_π); throws NumericError "infinite KL" on a support mismatch.
double trajectory_kl(const TabularDynamics& truth, const TabularDynamics& model, const std::vector<double>& pi,
                     std::size_t horizon);

double trajectory_tv(const TabularDynamics& truth, const TabularDynamics& model, const std::vector<double>& pi,
                     std::size_t horizon);

/// D_KL between two distributions over the same finite set.
double discrete_kl(const std::vector<double>& p, const std::vector<double>& q);

BiasBoundReport lemma1_bound(const TabularMdpEnv& truth, const TabularDynamics& model, const Policy& pi);

/// Trajectory-level expectation under π_b: E[ρ_L log(p_πe(H) / p̂_πe(H))].
BiasBoundReport theorem1_bound(const TabularMdpEnv& truth, const TabularDynamics& model, const Policy& pi_e,
                               const Policy& pi_b);

/// ε_0 + Σ_{t=0}^{L-2} E_πb[ρ_t ε(S_t, A_t)] with ε_0 = D_KL(d0 ‖ d̂0) and
/// ε(s, a) = D_KL(P(·|s,a) ‖ P̂(·|s,a)), from a ρ-weighted forward recursion.
BiasBoundReport corollary1_bound(const TabularMdpEnv& truth, const TabularDynamics& model, const Policy& pi_e,
                                 const Policy& pi_b);

/// E_πb[ρ_t f(S_t, A_t)] by enumeration, for any t < L.
double enumerated_weighted_expectation(const TabularMdpEnv& truth, const Policy& pi_e, const Policy& pi_b,
                                       std::size_t t, bool full_weight,
                                       const std::function<double(std::size_t, std::size_t)>& f);

/// Σ_h p_πb(h) S(h), where S(h) is the cross-entropy surrogate of one trajectory
/// (all L-1 transitions counted). Upper-bounds the corollary-1 sum.
double expected_cross_entropy(const TabularMdpEnv& truth, const TabularDynamics& model, const Policy& pi_e,
                              const Policy& pi_b);

/// Importance-weighted empirical cross-entropy:
/// (1/n) Σ_i [ -log d̂0(s_0) + Σ_t ρ_t (-log P̂(s_{t+1} | s_t, a_t)) ].
/// A trajectory's last recorded transition counts only when the episode
/// terminated early. Throws NumericError if the model gives an observed event zero probability.
double surrogate_kl(const Dataset& ds, const TabularDynamics& model, const Policy& pi_e, const Policy& pi_b,
                    std::size_t horizon);

/// Continuous analogue with negative log densities (no initial-state term);
/// approximates the KL sum up to the entropy of the true dynamics.
double surrogate_kl(const Dataset& ds, const LinearGaussianModel& model, const Policy& pi_e, const Policy& pi_b,
                    std::size_t horizon);

/// 2√2 g_max sqrt(max(surrogate, 0)) for a data-driven surrogate.
BiasBoundReport surrogate_bound(double surrogate, SurrogateKind kind, const MdpSpec& spec, std::size_t n);

/// 2 g_max sqrt(2 sqrt(ln(1/α) / (2m)) - (1/m) Σ_h (log d̂0(s_0) + Σ_t log P̂(s_{t+1}|s_t,a_t))),
/// radicand clamped at zero with a warning.
BiasBoundReport corollary2_bound(const Dataset& ds, const TabularDynamics& model, double alpha, const MdpSpec& spec);
BiasBoundReport corollary2_bound(const Dataset& ds, const LinearGaussianModel& model, double alpha,
                                 const MdpSpec& spec);

/// Shared tail of both corollary-2 overloads, from the mean log-likelihood of the data.
BiasBoundReport corollary2_from_loglik(double mean_loglik, std::size_t m, double alpha, const MdpSpec& spec,
                                       SurrogateKind kind);

}  // namespace hcope
