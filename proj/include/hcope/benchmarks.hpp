#pragma once

// Named environments with their default evaluation and behavior policies.
//
//   mountain-car-v0   discretized MountainCar; π_e ε-greedy energy pumping, π_b uniform
//   cliff-world-v0    2-d point mass among cliffs; π_e N(π_d, 0.1 I), π_b N(π_d, 0.3 I)
//   micro-a/b/c       small enumerable MDPs used by tests and sanity sweeps
//
// Policy specs: "default", "uniform", "energy:<eps>", "gaussian:<variance>",
// "table:<p00,p01,...>" (row-major S×A) or "file:<path>".

#include <map>
#include <optional>
#include <string>

#include "hcope/env.hpp"
#include "hcope/policy.hpp"

namespace hcope {

using Options = std::map<std::string, std::string>;

struct Benchmark {
  EnvironmentPtr env;
  PolicyPtr default_pi_e;
  PolicyPtr default_pi_b;
  MeanResolver resolver;  // for Gaussian policy files
};

/// Options are environment parameters (e.g. "position_bins", "noise_variance");
/// unknown keys throw ConfigError.
Benchmark make_benchmark(const std::string& env_id, const Options& options = {});

enum class PolicyRole { evaluation, behavior };

PolicyPtr make_policy(const Benchmark& bench, const std::string& spec, PolicyRole role);

/// The three fixed micro-MDPs: 0 → micro-a (2 states, 2 actions, L = 2),
/// 1 → micro-b (3, 2, L = 3, γ = 0.9), 2 → micro-c (4, 3, L = 3).
Benchmark micro_benchmark(int which);

/// V(π) by backward induction when the environment is a finite MDP with known dynamics.
std::optional<double> exact_value(const Environment& env, const Policy& pi);

}  // namespace hcope
