#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <sstream>

#include "hcope/errors.hpp"
#include "hcope/experiments.hpp"

using namespace hcope;

namespace {

SweepConfig small_sweep() {
  SweepConfig cfg;
  cfg.env_id = "micro-b";
  cfg.estimators = {EstimatorKind::pdwis, EstimatorKind::wdr_tabular, EstimatorKind::mb_tabular};
  cfg.n_values = {5, 20};
  cfg.trials = 6;
  cfg.bootstrap.resamples = 200;
  cfg.seed = 17;
  return cfg;
}

void same_records(const SweepResult& a, const SweepResult& b, std::size_t trials) {
  REQUIRE(a.cells.size() == b.cells.size());
  for (std::size_t c = 0; c < a.cells.size(); ++c) {
    CHECK(a.cells[c].estimator == b.cells[c].estimator);
    CHECK(a.cells[c].n == b.cells[c].n);
    for (std::size_t k = 0; k < trials; ++k) {
      CHECK(a.cells[c].trials[k].lower_bound == b.cells[c].trials[k].lower_bound);
      CHECK(a.cells[c].trials[k].point_estimate == b.cells[c].trials[k].point_estimate);
    }
  }
}

}  // namespace

TEST_CASE("config parsing") {
  std::istringstream in(
      "# sweep\n"
      "env = cliff-world-v0\n"
      "env.horizon = 50\n"
      "estimators = mb-lr, mb-pr\n"
      "n_values = 200,500\n"
      "trials = 50   # per cell\n"
      "bootstrap_b = 1000\n"
      "delta = 0.1\n"
      "method = bca\n"
      "seed = 99\n"
      "recompute_per_resample = true\n");
  const SweepConfig cfg = parse_sweep_config(in);
  CHECK(cfg.env_id == "cliff-world-v0");
  CHECK(cfg.env_options.at("horizon") == "50");
  CHECK(cfg.estimators == std::vector<EstimatorKind>{EstimatorKind::mb_lr, EstimatorKind::mb_pr});
  CHECK(cfg.n_values == std::vector<std::size_t>{200, 500});
  CHECK(cfg.trials == 50);
  CHECK(cfg.bootstrap.resamples == 1000);
  CHECK(cfg.bootstrap.delta == 0.1);
  CHECK(cfg.bootstrap.method == BootstrapMethod::bca);
  CHECK(cfg.seed == 99);
  CHECK(cfg.recompute_per_resample);

  std::stringstream round;
  write_sweep_config(round, cfg);
  const SweepConfig back = parse_sweep_config(round);
  CHECK(back.estimators == cfg.estimators);
  CHECK(back.n_values == cfg.n_values);
  CHECK(back.bootstrap.delta == cfg.bootstrap.delta);
}

TEST_CASE("config errors carry line numbers") {
  std::istringstream unknown("trials = 3\n\nbogus = 1\n");
  try {
    parse_sweep_config(unknown);
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.line() == 3);
  }
  std::istringstream bad_number("trials = three\n");
  CHECK_THROWS_AS(parse_sweep_config(bad_number), ParseError);
  std::istringstream no_eq("trials 3\n");
  CHECK_THROWS_AS(parse_sweep_config(no_eq), ParseError);
}

TEST_CASE("estimator and environment mismatches fail before any work") {
  SweepConfig cfg = small_sweep();
  cfg.estimators = {EstimatorKind::mb_lr};
  CHECK_THROWS_AS(run_sweep(cfg), ConfigError);
  cfg = small_sweep();
  cfg.bootstrap.resamples = 10;
  CHECK_THROWS_AS(run_sweep(cfg), ConfigError);
}

TEST_CASE("sweeps do not depend on the worker count") {
  SweepConfig cfg = small_sweep();
  const SweepResult one = run_sweep(cfg);
  CHECK(one.ground_truth_rollouts == 0);  // exact for micro MDPs
  cfg.workers = 3;
  same_records(one, run_sweep(cfg), cfg.trials);
  cfg.workers = 1;
  cfg.bootstrap.workers = 4;
  same_records(one, run_sweep(cfg), cfg.trials);
}

TEST_CASE("trials are addressed by coordinates, not by position") {
  SweepConfig cfg = small_sweep();
  const SweepResult full = run_sweep(cfg);
  cfg.trials = 3;
  cfg.n_values = {20};
  cfg.estimators = {EstimatorKind::wdr_tabular};
  const SweepResult part = run_sweep(cfg);
  REQUIRE(part.cells.size() == 1);
  const CellResult& ref = full.cells[3];  // wdr-tabular, n = 20
  REQUIRE(ref.estimator == EstimatorKind::wdr_tabular);
  REQUIRE(ref.n == 20);
  for (std::size_t k = 0; k < 3; ++k) CHECK(part.cells[0].trials[k].lower_bound == ref.trials[k].lower_bound);
}

TEST_CASE("aggregation counts a bound equal to the truth as valid") {
  std::vector<TrialRecord> trials(5);
  trials[0].lower_bound = 1.0;
  trials[1].lower_bound = 2.0;  // equal
  trials[2].lower_bound = 2.5;  // above
  trials[3].failed = true;
  trials[4].lower_bound = 0.0;
  const CellResult cell = aggregate(EstimatorKind::pdwis, 10, trials, 2.0);
  CHECK(cell.valid == 3);
  CHECK(cell.invalid == 1);
  CHECK(cell.failed == 1);
  CHECK(cell.error_rate == doctest::Approx(0.25));
  CHECK(cell.mean_valid_bound == doctest::Approx(1.0));
  CHECK(cell.ci_low < 1.0);
  CHECK(cell.ci_high > 1.0);
  CHECK(cell.ci_high - 1.0 == doctest::Approx(1.0 - cell.ci_low));

  const CellResult none = aggregate(EstimatorKind::pdwis, 10, {trials[3]}, 2.0);
  CHECK(std::isnan(none.error_rate));
  CHECK(std::isnan(none.mean_valid_bound));
}

TEST_CASE("CSV layout") {
  SweepConfig cfg = small_sweep();
  cfg.trials = 2;
  cfg.n_values = {5};
  const SweepResult res = run_sweep(cfg);
  std::ostringstream out;
  write_csv(out, res);
  std::istringstream lines(out.str());
  std::string header;
  std::getline(lines, header);
  CHECK(header ==
        "estimator,n,trials,valid,invalid,failed,error_rate,mean_valid_bound,ci_low,ci_high,ground_truth,"
        "ground_truth_stderr");
  std::size_t rows = 0;
  for (std::string row; std::getline(lines, row);) {
    ++rows;
    CHECK(std::count(row.begin(), row.end(), ',') == 11);
  }
  CHECK(rows == cfg.estimators.size());

  std::ostringstream per_trial;
  write_trials_csv(per_trial, res);
  std::istringstream tl(per_trial.str());
  std::getline(tl, header);
  CHECK(header == "estimator,n,trial,lower_bound,point_estimate,failed,valid");
}

TEST_CASE("Monte Carlo ground truth reports a standard error") {
  const Benchmark b = make_benchmark("mountain-car-v0");
  const GroundTruth gt = ground_truth(b, *b.default_pi_e, 2000, 3);
  CHECK(gt.std_error > 0.0);
  CHECK(gt.mean < 0.0);
  const Benchmark m = micro_benchmark(1);
  const GroundTruth exact = ground_truth(m, *m.default_pi_e, 10, 3);
  CHECK(exact.mean == *exact_value(*m.env, *m.default_pi_e));
}
