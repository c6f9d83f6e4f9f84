#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <charconv>
#include <cmath>
#include <limits>
#include <random>
#include <sstream>

#include "hcope/core.hpp"
#include "hcope/dataset_io.hpp"
#include "hcope/errors.hpp"
#include "hcope/random.hpp"

using namespace hcope;

namespace {

Trajectory rewards_only(const std::vector<double>& r) {
  Trajectory t;
  for (double x : r) t.steps.push_back({DiscreteState{0}, DiscreteAction{0}, x});
  return t;
}

Dataset random_dataset(Rng& rng, bool continuous) {
  std::uniform_real_distribution<double> u(-1e3, 1e3);
  std::uniform_int_distribution<std::size_t> len(1, 12), idx(0, 1000);
  Dataset ds;
  ds.env_id = continuous ? "cliff-world-v0" : "micro-b";
  ds.behavior_policy_id = "pi_b";
  const std::size_t n = len(rng);
  for (std::size_t i = 0; i < n; ++i) {
    Trajectory traj;
    const std::size_t L = len(rng);
    for (std::size_t t = 0; t < L; ++t) {
      Step s;
      if (continuous) {
        s.state = ContinuousState{{u(rng), u(rng) * 1e-9, u(rng) * 1e12, -0.0}};
        s.action = ContinuousAction{{u(rng), std::nextafter(u(rng), 0.0)}};
      } else {
        s.state = DiscreteState{idx(rng)};
        s.action = DiscreteAction{idx(rng) % 3};
      }
      s.reward = u(rng) / 7.0;
      traj.steps.push_back(std::move(s));
    }
    traj.terminal = len(rng) % 2 == 0;
    if (len(rng) % 3 != 0)
      traj.final_state = continuous ? State{ContinuousState{{u(rng), u(rng), u(rng), u(rng)}}}
                                    : State{DiscreteState{idx(rng)}};
    ds.trajectories.push_back(std::move(traj));
  }
  return ds;
}

}  // namespace

TEST_CASE("return is linear in rewards") {
  Rng rng(11);
  std::uniform_real_distribution<double> u(-5, 5);
  for (int rep = 0; rep < 200; ++rep) {
    const std::size_t L = 1 + rep % 9;
    std::vector<double> r1(L), r2(L), mix(L);
    const double a = u(rng), b = u(rng), gamma = rep % 2 ? 1.0 : 0.93;
    for (std::size_t t = 0; t < L; ++t) {
      r1[t] = u(rng);
      r2[t] = u(rng);
      mix[t] = a * r1[t] + b * r2[t];
    }
    const double lhs = trajectory_return(rewards_only(mix), gamma);
    const double rhs = a * trajectory_return(rewards_only(r1), gamma) + b * trajectory_return(rewards_only(r2), gamma);
    CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));
  }
}

TEST_CASE("discounted return") {
  CHECK(trajectory_return(rewards_only({1, 2, 3}), 0.5) == doctest::Approx(1 + 1 + 0.75));
  CHECK_THROWS_AS(trajectory_return(Trajectory{}, 1.0), ConfigError);
}

TEST_CASE("return normalization is monotone and invertible") {
  MdpSpec spec;
  spec.horizon = 100;
  spec.r_min = -1;
  spec.r_max = 0;
  CHECK(normalize_return(-100, spec) == doctest::Approx(0.0));
  CHECK(normalize_return(0, spec) == doctest::Approx(1.0));
  Rng rng(3);
  std::uniform_real_distribution<double> u(-100, 0);
  double prev_g = -100, prev_u = normalize_return(-100, spec);
  std::vector<double> gs(500);
  for (auto& g : gs) g = u(rng);
  std::sort(gs.begin(), gs.end());
  for (double g : gs) {
    const double x = normalize_return(g, spec);
    CHECK(x >= prev_u);
    CHECK(g >= prev_g);
    CHECK(std::abs(denormalize_return(x, spec) - g) <= 1e-12 * std::max(1.0, std::abs(g)));
    prev_g = g;
    prev_u = x;
  }
}

TEST_CASE("per-step normalization sums to the normalized return") {
  MdpSpec spec;
  spec.horizon = 4;
  spec.gamma = 0.9;
  spec.r_min = -3;
  spec.r_max = 2;
  const std::vector<double> r = {-3, 1.5, 0.25, 2};
  double sum = 0, d = 1;
  for (double x : r) {
    sum += d * normalize_reward(x, spec);
    d *= spec.gamma;
  }
  CHECK(sum == doctest::Approx(normalize_return(trajectory_return(rewards_only(r), 0.9), spec)).epsilon(1e-14));
}

TEST_CASE("degenerate reward range is rejected") {
  MdpSpec spec;
  spec.r_min = spec.r_max = 1;
  CHECK_THROWS_AS(normalize_return(1, spec), NumericError);
  spec.r_max = 0;
  CHECK_THROWS_AS(spec.validate(), ConfigError);
}

TEST_CASE("dataset round trip is lossless") {
  Rng rng(2024);
  for (int rep = 0; rep < 50; ++rep) {
    const Dataset ds = random_dataset(rng, rep % 2 == 1);
    std::stringstream ss;
    write_dataset(ss, ds);
    const Dataset back = read_dataset(ss);
    REQUIRE(back == ds);
  }
}

TEST_CASE("format_real round trips extreme values") {
  for (double x : {0.1, 1.0 / 3.0, 1e-300, -2.5e300, std::numeric_limits<double>::denorm_min(), -0.0}) {
    const std::string text = format_real(x);
    double back = 1.0;
    std::from_chars(text.data(), text.data() + text.size(), back);
    CHECK(back == x);
    CHECK(std::signbit(back) == std::signbit(x));
  }
}

TEST_CASE("truncated or malformed files raise parse errors with line numbers") {
  Rng rng(5);
  const Dataset ds = random_dataset(rng, false);
  std::stringstream ss;
  write_dataset(ss, ds);
  std::string text = ss.str();

  std::istringstream cut(text.substr(0, text.size() - 5));
  CHECK_THROWS_AS(read_dataset(cut), ParseError);

  std::istringstream empty("");
  CHECK_THROWS_AS(read_dataset(empty), ParseError);

  std::istringstream bad_header("not-a-dataset\n");
  CHECK_THROWS_AS(read_dataset(bad_header), ParseError);

  std::istringstream bad_row(std::string(kDatasetSchema) + "\tmicro-b\tpi_b\nmicro-b\tpi_b\t0\td1\td1\t0 0 x\t-\n");
  try {
    read_dataset(bad_row);
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.line() == 2);
  }
}

TEST_CASE("derived seeds depend only on coordinates") {
  CHECK(derive_seed(1, {2, 3}) == derive_seed(1, {2, 3}));
  CHECK(derive_seed(1, {2, 3}) != derive_seed(1, {3, 2}));
  CHECK(derive_seed(1, {2}) != derive_seed(2, {2}));
}
