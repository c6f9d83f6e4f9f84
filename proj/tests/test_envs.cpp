#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>
#include <boost/multiprecision/cpp_bin_float.hpp>
#include <cmath>
#include <numbers>
#include <sstream>

#include "hcope/benchmarks.hpp"
#include "hcope/env.hpp"
#include "hcope/errors.hpp"
#include "hcope/policy.hpp"

using namespace hcope;

TEST_CASE("tabular policy rows are renormalized") {
  TabularPolicy pi("p", 2, 3, {1, 1, 2, 0, 5, 5});
  CHECK(pi.prob(0, 2) == doctest::Approx(0.5));
  CHECK(pi.prob(1, 0) == 0.0);
  CHECK(pi.prob(1, 1) == doctest::Approx(0.5));
  for (std::size_t s = 0; s < 2; ++s) {
    double sum = 0;
    for (std::size_t a = 0; a < 3; ++a) sum += pi.prob(s, a);
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
  }
  CHECK_THROWS_AS(TabularPolicy("p", 1, 2, {0.5, -0.1}), ConfigError);
  CHECK_THROWS_AS(TabularPolicy("p", 1, 2, {0, 0}), ConfigError);
  CHECK_THROWS_AS(TabularPolicy("p", 1, 2, {1}), ConfigError);
}

TEST_CASE("tabular sampling follows the table") {
  TabularPolicy pi("p", 1, 3, {0.2, 0.5, 0.3});
  Rng rng(1);
  std::vector<int> hits(3);
  const int n = 200000;
  for (int k = 0; k < n; ++k) ++hits[action_index(pi.sample(DiscreteState{0}, rng))];
  for (std::size_t a = 0; a < 3; ++a) CHECK(hits[a] / double(n) == doctest::Approx(pi.prob(0, a)).epsilon(0.02));
}

TEST_CASE("gaussian log density matches a high-precision evaluation") {
  using Big = boost::multiprecision::cpp_bin_float_50;
  Eigen::MatrixXd cov(2, 2);
  cov << 0.3, 0.1, 0.1, 0.2;
  GaussianPolicy pi("g", "affine", [](const std::vector<double>& s) { return std::vector<double>{s[0], -2 * s[1]}; },
                    cov);
  Rng rng(9);
  for (int rep = 0; rep < 50; ++rep) {
    const std::vector<double> s = {std::normal_distribution<double>()(rng), std::normal_distribution<double>()(rng)};
    const Action a = pi.sample(ContinuousState{s}, rng);
    const auto& av = action_values(a);
    const Big d0 = Big(av[0]) - Big(s[0]), d1 = Big(av[1]) - Big(-2 * s[1]);
    // Quadratic form with the exact inverse of the 2×2 covariance.
    const Big det = Big(0.3) * Big(0.2) - Big(0.1) * Big(0.1);
    const Big quad = (Big(0.2) * d0 * d0 - 2 * Big(0.1) * d0 * d1 + Big(0.3) * d1 * d1) / det;
    const Big ref = -quad / 2 - boost::multiprecision::log(2 * boost::math::constants::pi<Big>()) -
                    boost::multiprecision::log(det) / 2;
    CHECK(std::abs(pi.log_prob(ContinuousState{s}, a) - ref.convert_to<double>()) <= 1e-10);
    CHECK(pi.prob(ContinuousState{s}, a) == doctest::Approx(std::exp(ref.convert_to<double>())).epsilon(1e-10));
  }
}

TEST_CASE("gaussian density integrates to one") {
  Eigen::MatrixXd cov(1, 1);
  cov << 0.09;
  GaussianPolicy pi("g", "zero", [](const std::vector<double>&) { return std::vector<double>{0.25}; }, cov);
  double total = 0.0;
  const double h = 1e-3;
  for (double x = -3; x <= 3; x += h) total += pi.prob(ContinuousState{{}}, ContinuousAction{{x}}) * h;
  CHECK(total == doctest::Approx(1.0).epsilon(1e-6));
  Eigen::MatrixXd bad(2, 2);
  bad << 1, 2, 2, 1;
  CHECK_THROWS_AS(GaussianPolicy("g", "z", [](const std::vector<double>&) { return std::vector<double>(2); }, bad),
                  ConfigError);
}

TEST_CASE("policy serialization round trip") {
  const Benchmark mc = make_benchmark("micro-c");
  std::stringstream ss;
  write_policy(ss, *mc.default_pi_e);
  const PolicyPtr back = read_policy(ss, mc.resolver);
  const auto& t1 = dynamic_cast<const TabularPolicy&>(*mc.default_pi_e);
  const auto& t2 = dynamic_cast<const TabularPolicy&>(*back);
  CHECK(t1.table() == t2.table());
  CHECK(back->id() == t1.id());

  const Benchmark cw = make_benchmark("cliff-world-v0");
  std::stringstream gs;
  write_policy(gs, *cw.default_pi_b);
  const PolicyPtr g = read_policy(gs, cw.resolver);
  const State s = ContinuousState{{1, 2, 0.1, -0.2}};
  const Action a = ContinuousAction{{0.3, 0.4}};
  CHECK(g->log_prob(s, a) == cw.default_pi_b->log_prob(s, a));
}

TEST_CASE("support check reports the first zero-probability action") {
  const Benchmark b = make_benchmark("micro-a");
  TabularPolicy narrow("narrow", 2, 2, {1, 0, 1, 0});
  Dataset ds;
  ds.trajectories.push_back({{{DiscreteState{0}, DiscreteAction{0}, 0.1}, {DiscreteState{1}, DiscreteAction{1}, 0.3}}, false, {}});
  const SupportReport rep = support_check(*b.default_pi_e, narrow, ds);
  CHECK_FALSE(rep.ok);
  CHECK(rep.trajectory == 0);
  CHECK(rep.step == 1);
  CHECK(support_check(*b.default_pi_e, *b.default_pi_b, ds).ok);
}

TEST_CASE("micro MDPs are valid and small") {
  for (int k = 0; k < 3; ++k) {
    const Benchmark b = micro_benchmark(k);
    const auto& env = dynamic_cast<const TabularMdpEnv&>(*b.env);
    env.dynamics().validate();
    CHECK(env.dynamics().states <= 4);
    CHECK(env.dynamics().actions <= 3);
    CHECK(env.spec().horizon <= 3);
    const auto& pb = dynamic_cast<const TabularPolicy&>(*b.default_pi_b);
    for (double p : pb.table()) CHECK(p > 0.0);
  }
}

TEST_CASE("mountain car grid is a bijection") {
  const MountainCarEnv env;
  const auto& c = env.config();
  for (std::size_t pb = 0; pb < c.position_bins; ++pb)
    for (std::size_t vb = 0; vb < c.velocity_bins; ++vb) {
      const std::size_t cell = pb * c.velocity_bins + vb;
      CHECK(env.position_bin(cell) == pb);
      CHECK(env.velocity_bin(cell) == vb);
      const double p = MountainCarEnv::kMinPosition +
                       (pb + 0.5) * (MountainCarEnv::kMaxPosition - MountainCarEnv::kMinPosition) / c.position_bins;
      if (p < MountainCarEnv::kGoalPosition) CHECK(env.cell(p, env.velocity_bin_center(vb)) == cell);
    }
  CHECK(env.cell(0.55, 0.0) == env.terminal_index());
  CHECK_THROWS_AS(MountainCarEnv(MountainCarConfig{.frame_skip = 0}), ConfigError);
}

TEST_CASE("mountain car rewards and returns") {
  const Benchmark b = make_benchmark("mountain-car-v0");
  Rng rng(4);
  for (const PolicyPtr& pi : {b.default_pi_e, b.default_pi_b}) {
    for (int k = 0; k < 300; ++k) {
      const Trajectory traj = sample_trajectory(*b.env, *pi, rng);
      CHECK(traj.size() <= 100);
      for (std::size_t t = 0; t < traj.size(); ++t) CHECK(traj.steps[t].reward == -1.0);
      if (traj.terminal) CHECK(b.env->is_terminal(*traj.final_state));
      const double g = trajectory_return(traj, 1.0);
      CHECK(g >= -100.0);
      CHECK(g <= 0.0);
    }
  }
}

TEST_CASE("mountain car evaluation policy finishes in 30 to 45 steps on average") {
  const Benchmark b = make_benchmark("mountain-car-v0");
  Rng rng(77);
  const int n = 20000;
  double total = 0;
  for (int k = 0; k < n; ++k) total += static_cast<double>(sample_trajectory(*b.env, *b.default_pi_e, rng).size());
  const double mean = total / n;
  MESSAGE("mean episode length of the evaluation policy: " << mean);
  CHECK(mean >= 30.0);
  CHECK(mean <= 45.0);
}

TEST_CASE("cliff world dynamics are linear with the configured noise") {
  auto env = std::make_shared<const CliffWorldEnv>();
  Rng rng(123);
  const int n = 100000;
  Eigen::Vector4d mean = Eigen::Vector4d::Zero();
  Eigen::Matrix4d second = Eigen::Matrix4d::Zero();
  std::uniform_real_distribution<double> pos(0.5, 1.5), vel(-0.5, 0.5), acc(-1, 1);
  for (int k = 0; k < n; ++k) {
    const std::vector<double> s = {pos(rng), pos(rng), vel(rng), vel(rng)};
    const std::vector<double> a = {acc(rng), acc(rng)};
    const Transition tr = env->step(ContinuousState{s}, ContinuousAction{a}, rng);
    const auto mu = env->mean_next(s, a);
    const auto& nx = state_values(tr.next);
    Eigen::Vector4d r;
    for (int i = 0; i < 4; ++i) r(i) = nx[i] - mu[i];
    mean += r;
    second += r * r.transpose();
  }
  mean /= n;
  const Eigen::Matrix4d cov = second / n - mean * mean.transpose();
  const Eigen::Matrix4d& q = env->noise_covariance();
  for (int i = 0; i < 4; ++i) CHECK(std::abs(mean(i)) <= 4 * std::sqrt(q(i, i) / n));
  CHECK((cov - q).norm() <= 0.1 * q.norm());

  // s' = A s + B a exactly when noise is off.
  CliffWorldConfig quiet;
  quiet.noise_variance = 0.0;
  CliffWorldEnv det(quiet);
  const std::vector<double> s = {1, 1, 0.2, -0.1}, a = {0.5, -0.3};
  const Eigen::Vector4d expect = det.a_matrix() * Eigen::Vector4d(1, 1, 0.2, -0.1) + det.b_matrix() * Eigen::Vector2d(0.5, -0.3);
  const auto nx = state_values(det.step(ContinuousState{s}, ContinuousAction{a}, rng).next);
  for (int i = 0; i < 4; ++i) CHECK(nx[i] == doctest::Approx(expect(i)).epsilon(1e-15));
}

TEST_CASE("cliff world rewards, cliffs and horizon") {
  const Benchmark b = make_benchmark("cliff-world-v0");
  const auto& env = dynamic_cast<const CliffWorldEnv&>(*b.env);
  const State s = ContinuousState{{1, 2, 0, 0}};
  const Action a = ContinuousAction{{0.5, -0.25}};
  CHECK(env.reward(s, a, ContinuousState{{1.1, 2.1, 0, 0}}) == doctest::Approx(-(8 + 7 + 0.75)));
  CHECK(env.reward(s, a, ContinuousState{{3, 7, 0, 0}}) == -100.0);
  CHECK(env.is_terminal(ContinuousState{{-0.1, 5, 0, 0}}));
  CHECK(env.is_terminal(ContinuousState{{9, 9, 0, 0}}));
  Rng rng(8);
  std::size_t falls = 0, goals = 0;
  for (int k = 0; k < 2000; ++k) {
    const Trajectory traj = sample_trajectory(env, *b.default_pi_e, rng);
    CHECK(traj.size() <= env.spec().horizon);
    for (const Step& st : traj.steps) CHECK(st.reward >= env.spec().r_min);
    if (traj.terminal) (env.fell(state_values(*traj.final_state)) ? falls : goals)++;
  }
  MESSAGE("evaluation policy: " << goals << " goals, " << falls << " falls in 2000 episodes");
  CHECK(goals > 1000);
}

TEST_CASE("benchmark factory validates names and options") {
  CHECK_THROWS_AS(make_benchmark("nope"), ConfigError);
  CHECK_THROWS_AS(make_benchmark("mountain-car-v0", {{"bins", "3"}}), ConfigError);
  CHECK_THROWS_AS(make_benchmark("mountain-car-v0", {{"position_bins", "x"}}), ConfigError);
  const Benchmark b = make_benchmark("mountain-car-v0", {{"position_bins", "8"}, {"velocity_bins", "8"}});
  CHECK(b.env->discrete_space()->states == 65);
  CHECK_THROWS_AS(make_policy(b, "gaussian:0.1", PolicyRole::evaluation), ConfigError);
  CHECK(make_policy(b, "energy:0.2", PolicyRole::evaluation)->id() != b.default_pi_e->id());
}

TEST_CASE("exact value agrees with Monte Carlo on micro MDPs") {
  for (int k = 0; k < 3; ++k) {
    const Benchmark b = micro_benchmark(k);
    const double exact = *exact_value(*b.env, *b.default_pi_e);
    Rng rng(k);
    const GroundTruth mc = monte_carlo_ground_truth(*b.env, *b.default_pi_e, 200000, rng);
    CHECK(std::abs(mc.mean - exact) <= 4 * mc.std_error + 1e-12);
  }
}
