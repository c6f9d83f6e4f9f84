#pragma once

// Sparse finite transition kernels shared by micro-MDPs, learned models and
// the bias-bound enumerators.

#include <cstddef>
#include <vector>

namespace hcope {

struct Outcome {
  std::size_t next = 0;
  double prob = 0.0;
};

struct TabularDynamics {
  std::size_t states = 0;
  std::size_t actions = 0;
  std::vector<std::vector<Outcome>> rows;  // rows[s * actions + a]
  std::vector<double> initial;             // d0

  TabularDynamics() = default;
  TabularDynamics(std::size_t state_count, std::size_t action_count);

  /// Builds from a dense S×A×S array.
  static TabularDynamics dense(std::size_t state_count, std::size_t action_count, const std::vector<double>& p,
                               std::vector<double> d0);

  const std::vector<Outcome>& row(std::size_t s, std::size_t a) const { return rows[s * actions + a]; }
  std::vector<Outcome>& row(std::size_t s, std::size_t a) { return rows[s * actions + a]; }

  double prob(std::size_t s, std::size_t a, std::size_t next) const;

  /// Rows and d0 must be distributions within `tol`; throws ConfigError otherwise.
  void validate(double tol = 1e-9) const;
};

}  // namespace hcope
