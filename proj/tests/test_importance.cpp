#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "hcope/benchmarks.hpp"
#include "hcope/errors.hpp"
#include "hcope/importance.hpp"
#include "oracle.hpp"

using namespace hcope;

namespace {

const TabularMdpEnv& tabular(const Benchmark& b) { return dynamic_cast<const TabularMdpEnv&>(*b.env); }

double exhaustive(const Benchmark& b, double (*fn)(const Dataset&, const Policy&, const Policy&, const MdpSpec&)) {
  const auto& env = tabular(b);
  const auto pop = oracle::population(env, *b.default_pi_b);
  double total = 0.0;
  for (std::size_t i = 0; i < pop.ds.size(); ++i) {
    Dataset one{pop.ds.env_id, pop.ds.behavior_policy_id, {pop.ds.trajectories[i]}};
    total += pop.prob[i] * fn(one, *b.default_pi_e, *b.default_pi_b, env.spec());
  }
  return total;
}

}  // namespace

TEST_CASE("oracle enumeration and dynamic programming agree") {
  for (int k = 0; k < 3; ++k) {
    const Benchmark b = micro_benchmark(k);
    const auto& env = tabular(b);
    const auto& dyn = env.dynamics();
    const auto pi = oracle::table(*b.default_pi_e, dyn.states, dyn.actions);
    const double v1 = oracle::value(dyn, env.rewards(), pi, env.spec().horizon, env.spec().gamma);
    const double v2 = oracle::dp_value(dyn, env.rewards(), pi, env.spec().horizon, env.spec().gamma);
    CHECK(v1 == doctest::Approx(v2).epsilon(1e-14));
    CHECK(*exact_value(env, *b.default_pi_e) == doctest::Approx(v2).epsilon(1e-14));
  }
}

TEST_CASE("IS and PDIS are unbiased by exhaustive enumeration") {
  for (int k = 0; k < 3; ++k) {
    CAPTURE(k);
    const Benchmark b = micro_benchmark(k);
    const auto& env = tabular(b);
    const auto& dyn = env.dynamics();
    const double v = oracle::dp_value(dyn, env.rewards(), oracle::table(*b.default_pi_e, dyn.states, dyn.actions),
                                      env.spec().horizon, env.spec().gamma);
    CHECK(std::abs(exhaustive(b, is_estimate) - v) <= 1e-12);
    CHECK(std::abs(exhaustive(b, pdis_estimate) - v) <= 1e-12);

    // Same expectation through population multiplicities.
    const auto pop = oracle::population(env, *b.default_pi_b);
    auto data = std::make_shared<const ImportanceData>(
        ImportanceData::build(pop.ds, *b.default_pi_e, *b.default_pi_b, env.spec()));
    CHECK(std::abs(ImportanceEstimator(ImportanceKind::is, data).evaluate(pop.prob) - v) <= 1e-12);
    CHECK(std::abs(ImportanceEstimator(ImportanceKind::pdis, data).evaluate(pop.prob) - v) <= 1e-12);
    // The self-normalized estimators are consistent: on the population they are exact too.
    CHECK(std::abs(ImportanceEstimator(ImportanceKind::wis, data).evaluate(pop.prob) - v) <= 1e-12);
    CHECK(std::abs(ImportanceEstimator(ImportanceKind::pdwis, data).evaluate(pop.prob) - v) <= 1e-12);
  }
}

TEST_CASE("PDIS discounts each reward by its own weight") {
  const Benchmark b = micro_benchmark(1);
  const auto& env = tabular(b);
  Rng rng(3);
  const Trajectory traj = sample_trajectory(env, *b.default_pi_b, rng);
  double rho = 1.0, g = 1.0, expect = 0.0;
  for (const Step& st : traj.steps) {
    rho *= b.default_pi_e->prob(st.state, st.action) / b.default_pi_b->prob(st.state, st.action);
    expect += g * rho * st.reward;
    g *= env.spec().gamma;
  }
  const Dataset ds{env.id(), "b", {traj}};
  CHECK(pdis_estimate(ds, *b.default_pi_e, *b.default_pi_b, env.spec()) == doctest::Approx(expect).epsilon(1e-13));
}

TEST_CASE("normalized weight columns sum to one") {
  const Benchmark b = make_benchmark("mountain-car-v0");
  Rng rng(17);
  const Dataset ds = sample_dataset(*b.env, *b.default_pi_b, 200, rng);
  const WeightMatrix wm = compute_weights(ds, *b.default_pi_e, *b.default_pi_b, b.env->spec().horizon);
  const std::vector<double> w = normalized_weights(wm);
  for (std::size_t t = 0; t < wm.horizon; ++t) {
    double sum = 0.0;
    for (std::size_t i = 0; i < wm.trajectories; ++i) sum += w[i * wm.horizon + t];
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
  }
  // Weights past termination hold their last value.
  for (std::size_t i = 0; i < ds.size(); ++i)
    for (std::size_t t = ds.trajectories[i].size(); t < wm.horizon; ++t)
      CHECK(wm.log(i, t) == wm.log(i, ds.trajectories[i].size() - 1));
}

TEST_CASE("IS equals PDIS when all reward arrives at the last step") {
  const Benchmark b = micro_benchmark(2);  // γ = 1
  const auto& env = tabular(b);
  Rng rng(21);
  Dataset ds = sample_dataset(env, *b.default_pi_b, 300, rng);
  std::uniform_real_distribution<double> u(0, 1);
  for (auto& traj : ds.trajectories)
    for (std::size_t t = 0; t < traj.size(); ++t) traj.steps[t].reward = t + 1 == traj.size() ? u(rng) : 0.0;
  const double is = is_estimate(ds, *b.default_pi_e, *b.default_pi_b, env.spec());
  const double pdis = pdis_estimate(ds, *b.default_pi_e, *b.default_pi_b, env.spec());
  CHECK(is == doctest::Approx(pdis).epsilon(1e-13));
}

TEST_CASE("self-normalized estimators ignore a common weight scale") {
  const Benchmark b = make_benchmark("mountain-car-v0");
  Rng rng(5);
  const Dataset ds = sample_dataset(*b.env, *b.default_pi_b, 100, rng);
  const ImportanceData base = ImportanceData::build(ds, *b.default_pi_e, *b.default_pi_b, b.env->spec());
  for (double shift : {-900.0, -3.0, 2.5, 900.0}) {
    ImportanceData scaled = base;
    for (double& x : scaled.weights.log_rho) x += shift;
    for (double& x : scaled.column_max) x += shift;
    auto a = std::make_shared<const ImportanceData>(base);
    auto s = std::make_shared<const ImportanceData>(scaled);
    for (ImportanceKind kind : {ImportanceKind::wis, ImportanceKind::pdwis}) {
      const double x = ImportanceEstimator(kind, a).evaluate_full();
      const double y = ImportanceEstimator(kind, s).evaluate_full();
      CHECK(std::isfinite(y));
      CHECK(y == doctest::Approx(x).epsilon(1e-12));
    }
  }
}

TEST_CASE("WIS with one trajectory returns its return exactly") {
  for (const char* id : {"micro-b", "mountain-car-v0", "cliff-world-v0"}) {
    const Benchmark b = make_benchmark(id);
    Rng rng(99);
    for (int k = 0; k < 25; ++k) {
      const Dataset ds = sample_dataset(*b.env, *b.default_pi_b, 1, rng);
      const double g = trajectory_return(ds.trajectories[0], b.env->spec().gamma);
      CHECK(wis_estimate(ds, *b.default_pi_e, *b.default_pi_b, b.env->spec()) == g);
    }
  }
}

TEST_CASE("multiplicities match materialized resamples") {
  const Benchmark b = micro_benchmark(1);
  Rng rng(8);
  const Dataset ds = sample_dataset(*b.env, *b.default_pi_b, 40, rng);
  auto data = std::make_shared<const ImportanceData>(
      ImportanceData::build(ds, *b.default_pi_e, *b.default_pi_b, b.env->spec()));
  std::vector<double> c(ds.size());
  std::uniform_int_distribution<int> k(0, 3);
  for (auto& x : c) x = k(rng);
  const Dataset big = materialize(ds, c);
  using Fn = double (*)(const Dataset&, const Policy&, const Policy&, const MdpSpec&);
  const std::pair<ImportanceKind, Fn> cases[] = {{ImportanceKind::is, is_estimate},
                                                  {ImportanceKind::pdis, pdis_estimate},
                                                  {ImportanceKind::wis, wis_estimate},
                                                  {ImportanceKind::pdwis, pdwis_estimate}};
  for (auto [kind, fn] : cases)
    CHECK(ImportanceEstimator(kind, data).evaluate(c) ==
          doctest::Approx(fn(big, *b.default_pi_e, *b.default_pi_b, b.env->spec())).epsilon(1e-12));
}

TEST_CASE("support violations and zero columns are reported") {
  const Benchmark b = micro_benchmark(0);
  Rng rng(1);
  const Dataset ds = sample_dataset(*b.env, *b.default_pi_b, 30, rng);
  const TabularPolicy narrow("narrow", 2, 2, {1, 0, 1, 0});
  CHECK_THROWS_AS(is_estimate(ds, *b.default_pi_e, narrow, b.env->spec()), SupportViolation);
  try {
    compute_weights(ds, *b.default_pi_e, narrow, 2);
  } catch (const SupportViolation& e) {
    CHECK(std::string(e.what()).find("behavior support violation") != std::string::npos);
  }
  // π_e puts no mass on anything observed: every weight is zero.
  Dataset only0 = ds;
  for (auto& traj : only0.trajectories)
    for (auto& st : traj.steps) st.action = DiscreteAction{0};
  const TabularPolicy never0("never0", 2, 2, {0, 1, 0, 1});
  CHECK_THROWS_AS(wis_estimate(only0, never0, *b.default_pi_b, b.env->spec()), NumericError);
  CHECK_THROWS_AS(pdwis_estimate(only0, never0, *b.default_pi_b, b.env->spec()), NumericError);
  CHECK(is_estimate(only0, never0, *b.default_pi_b, b.env->spec()) == doctest::Approx(0.0));
}

TEST_CASE("long horizons stay finite") {
  const Benchmark b = make_benchmark("mountain-car-v0");
  Rng rng(12);
  const Dataset ds = sample_dataset(*b.env, *b.default_pi_b, 50, rng);
  const MdpSpec& spec = b.env->spec();
  for (double v : {is_estimate(ds, *b.default_pi_e, *b.default_pi_b, spec),
                   pdis_estimate(ds, *b.default_pi_e, *b.default_pi_b, spec),
                   wis_estimate(ds, *b.default_pi_e, *b.default_pi_b, spec),
                   pdwis_estimate(ds, *b.default_pi_e, *b.default_pi_b, spec)})
    CHECK(std::isfinite(v));
  const double w = wis_estimate(ds, *b.default_pi_e, *b.default_pi_b, spec);
  CHECK(w >= -100.0);
  CHECK(w <= 0.0);
}
