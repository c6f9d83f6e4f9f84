// hcope: generate datasets, bound policy values and run sweeps from the shell.
//
// Exit codes: 0 success, 2 configuration error, 3 behavior support violation,
// 4 numeric failure, 1 anything else.

#include <CLI11.hpp>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>

#include "hcope/benchmarks.hpp"
#include "hcope/bias_bound.hpp"
#include "hcope/bootstrap.hpp"
#include "hcope/dataset_io.hpp"
#include "hcope/errors.hpp"
#include "hcope/estimators.hpp"
#include "hcope/experiments.hpp"
#include "hcope/models.hpp"

using namespace hcope;

namespace {

struct Shared {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> workers;
  std::optional<double> delta;
  std::optional<std::size_t> bootstrap_b;
  std::vector<std::string> env_opts;
};

Options parse_env_opts(const std::vector<std::string>& items, Options base = {}) {
  for (const auto& item : items) {
    const auto eq = item.find('=');
    if (eq == std::string::npos) throw ConfigError("--env-opt expects key=value, got '" + item + "'");
    base[item.substr(0, eq)] = item.substr(eq + 1);
  }
  return base;
}

// Settings from --config (if any) with command-line flags on top.
SweepConfig settings(const Shared& sh) {
  SweepConfig cfg = sh.config.empty() ? SweepConfig{} : load_sweep_config(sh.config);
  if (sh.seed) cfg.seed = *sh.seed;
  if (sh.workers) cfg.workers = *sh.workers;
  if (sh.delta) cfg.bootstrap.delta = *sh.delta;
  if (sh.bootstrap_b) cfg.bootstrap.resamples = *sh.bootstrap_b;
  cfg.env_options = parse_env_opts(sh.env_opts, cfg.env_options);
  return cfg;
}

// Writes to --out when given, stdout otherwise.
template <class Fn>
void emit(const std::string& path, Fn&& fn) {
  if (path.empty()) {
    fn(std::cout);
    return;
  }
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot open '" + path + "' for writing");
  fn(out);
}

void add_shared(CLI::App* cmd, Shared& sh, bool bootstrap) {
  cmd->add_option("--config", sh.config, "flat key = value settings file");
  cmd->add_option("--out", sh.out, "output file (default stdout)");
  cmd->add_option("--seed", sh.seed, "master seed");
  cmd->add_option("--env-opt", sh.env_opts, "environment option key=value (repeatable)");
  if (bootstrap) {
    cmd->add_option("--workers", sh.workers, "worker threads");
    cmd->add_option("--delta", sh.delta, "1 - confidence level");
    cmd->add_option("--bootstrap-b", sh.bootstrap_b, "bootstrap resamples");
  }
}

int run(int argc, char** argv) {
  CLI::App app{"High-confidence off-policy evaluation"};
  app.require_subcommand(1);

  Shared gen_sh, eval_sh, sweep_sh, gt_sh, bias_sh;

  auto* gen = app.add_subcommand("generate", "sample trajectories of a policy into a dataset file");
  std::string gen_env = "mountain-car-v0", gen_policy = "default";
  std::size_t gen_n = 100;
  gen->add_option("--env", gen_env, "environment id");
  gen->add_option("--policy", gen_policy, "policy spec (default = the benchmark's behavior policy)");
  gen->add_option("-n,--n", gen_n, "number of trajectories")->check(CLI::PositiveNumber);
  add_shared(gen, gen_sh, false);

  auto* eval = app.add_subcommand("evaluate", "bootstrap lower bound on V(pi_e) from a dataset");
  std::string eval_dataset, eval_estimator = "wdr-tabular", eval_method = "percentile";
  std::optional<std::string> eval_pi_e, eval_pi_b;
  bool eval_keep = false;
  eval->add_option("--dataset", eval_dataset, "dataset file")->required();
  eval->add_option("--estimator", eval_estimator, "estimator name");
  eval->add_option("--method", eval_method, "percentile | bca");
  eval->add_option("--pi-e", eval_pi_e, "evaluation policy spec");
  eval->add_option("--pi-b", eval_pi_b, "behavior policy spec");
  eval->add_flag("--keep-estimates", eval_keep, "print the sorted resample estimates");
  add_shared(eval, eval_sh, true);

  auto* sweep = app.add_subcommand("sweep", "lower-bound sweep over dataset sizes, written as CSV");
  std::string sweep_trials_out;
  sweep->add_option("--trials-out", sweep_trials_out, "per-trial CSV");
  add_shared(sweep, sweep_sh, true);

  auto* gt = app.add_subcommand("ground-truth", "Monte Carlo (or exact) value of a policy");
  std::string gt_env = "mountain-car-v0", gt_policy = "default";
  std::size_t gt_rollouts = 100000;
  gt->add_option("--env", gt_env, "environment id");
  gt->add_option("--policy", gt_policy, "policy spec (default = the benchmark's evaluation policy)");
  gt->add_option("--rollouts", gt_rollouts, "episodes")->check(CLI::PositiveNumber);
  add_shared(gt, gt_sh, false);

  auto* bias = app.add_subcommand("bias-bound", "upper bound on model bias from a dataset");
  std::string bias_dataset, bias_model = "tabular", bias_variant = "corollary1";
  double bias_alpha = 0.05;
  std::optional<std::string> bias_pi_e, bias_pi_b;
  bias->add_option("--dataset", bias_dataset, "dataset file")->required();
  bias->add_option("--model", bias_model, "tabular | linear | polynomial");
  bias->add_option("--variant", bias_variant, "lemma1 | theorem1 | corollary1 | corollary2");
  bias->add_option("--alpha", bias_alpha, "corollary 2 confidence parameter");
  bias->add_option("--pi-e", bias_pi_e, "evaluation policy spec");
  bias->add_option("--pi-b", bias_pi_b, "behavior policy spec");
  add_shared(bias, bias_sh, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  if (gen->parsed()) {
    const SweepConfig cfg = settings(gen_sh);
    const Benchmark bench = make_benchmark(gen_env, cfg.env_options);
    const PolicyPtr pi = make_policy(bench, gen_policy, PolicyRole::behavior);
    Rng rng = make_rng(cfg.seed, {0x9e});
    const Dataset ds = sample_dataset(*bench.env, *pi, gen_n, rng);
    emit(gen_sh.out, [&](std::ostream& o) { write_dataset(o, ds); });
  } else if (eval->parsed()) {
    SweepConfig cfg = settings(eval_sh);
    const Dataset ds = load_dataset(eval_dataset);
    const Benchmark bench = make_benchmark(ds.env_id, cfg.env_options);
    EstimatorContext ctx;
    ctx.env = bench.env;
    ctx.pi_e = make_policy(bench, eval_pi_e.value_or(cfg.pi_e), PolicyRole::evaluation);
    ctx.pi_b = make_policy(bench, eval_pi_b.value_or(cfg.pi_b), PolicyRole::behavior);
    ctx.model = cfg.model;
    ctx.recompute_per_resample = cfg.recompute_per_resample;
    BootstrapConfig bc = cfg.bootstrap;
    bc.seed = cfg.seed;
    bc.workers = cfg.workers;
    bc.method = parse_bootstrap_method(eval_method);
    bc.keep_estimates = eval_keep;
    const auto est = make_estimator(parse_estimator_kind(eval_estimator), ds, ctx);
    const BoundReport rep = bootstrap_lower_bound(*est, bc);
    emit(eval_sh.out, [&](std::ostream& o) {
      write_report(o, rep);
      if (eval_keep)
        for (double x : rep.estimates) o << "estimate: " << format_real(x) << '\n';
    });
  } else if (sweep->parsed()) {
    if (sweep_sh.config.empty()) throw ConfigError("sweep needs --config");
    const SweepConfig cfg = settings(sweep_sh);
    const SweepResult res = run_sweep(cfg);
    emit(sweep_sh.out, [&](std::ostream& o) { write_csv(o, res); });
    if (!sweep_trials_out.empty()) emit(sweep_trials_out, [&](std::ostream& o) { write_trials_csv(o, res); });
  } else if (gt->parsed()) {
    const SweepConfig cfg = settings(gt_sh);
    const Benchmark bench = make_benchmark(gt_env, cfg.env_options);
    const PolicyPtr pi = make_policy(bench, gt_policy, PolicyRole::evaluation);
    const GroundTruth g = ground_truth(bench, *pi, gt_rollouts, cfg.seed);
    emit(gt_sh.out, [&](std::ostream& o) {
      o << "env: " << gt_env << "\npolicy: " << pi->id() << "\nvalue: " << format_real(g.mean)
        << "\nstd_error: " << format_real(g.std_error) << "\nrollouts: " << g.rollouts
        << (g.rollouts == 0 ? " (exact)" : "") << '\n';
    });
  } else if (bias->parsed()) {
    const SweepConfig cfg = settings(bias_sh);
    const Dataset ds = load_dataset(bias_dataset);
    const Benchmark bench = make_benchmark(ds.env_id, cfg.env_options);
    const PolicyPtr pi_e = make_policy(bench, bias_pi_e.value_or(cfg.pi_e), PolicyRole::evaluation);
    const PolicyPtr pi_b = make_policy(bench, bias_pi_b.value_or(cfg.pi_b), PolicyRole::behavior);
    const MdpSpec& spec = bench.env->spec();
    const BoundVariant variant = parse_bound_variant(bias_variant);
    BiasBoundReport rep;
    if (bias_model == "tabular") {
      const auto space = bench.env->discrete_space();
      if (!space) throw ConfigError("tabular model needs a discrete environment");
      const TabularModel model = learn_tabular(ds, space->states, space->actions);
      const auto* truth = dynamic_cast<const TabularMdpEnv*>(bench.env.get());
      switch (variant) {
        case BoundVariant::lemma1:
        case BoundVariant::theorem1:
          if (!truth) throw ConfigError("exact bounds need a finite MDP with known dynamics");
          rep = variant == BoundVariant::lemma1 ? lemma1_bound(*truth, model.dynamics, *pi_e)
                                                : theorem1_bound(*truth, model.dynamics, *pi_e, *pi_b);
          break;
        case BoundVariant::corollary1:
          if (truth) {
            rep = corollary1_bound(*truth, model.dynamics, *pi_e, *pi_b);
          } else {
            rep = surrogate_bound(surrogate_kl(ds, model.dynamics, *pi_e, *pi_b, spec.horizon),
                                  SurrogateKind::cross_entropy, spec, ds.size());
          }
          break;
        case BoundVariant::corollary2: rep = corollary2_bound(ds, model.dynamics, bias_alpha, spec); break;
      }
    } else {
      const FeatureMap map = bias_model == "linear"       ? FeatureMap::linear
                             : bias_model == "polynomial" ? FeatureMap::polynomial
                                                          : throw ConfigError("unknown model '" + bias_model + "'");
      const LinearGaussianModel model = learn_regression(ds, map);
      if (variant == BoundVariant::corollary2)
        rep = corollary2_bound(ds, model, bias_alpha, spec);
      else if (variant == BoundVariant::corollary1)
        rep = surrogate_bound(surrogate_kl(ds, model, *pi_e, *pi_b, spec.horizon), SurrogateKind::nll, spec,
                              ds.size());
      else
        throw ConfigError("exact bounds need a finite MDP with known dynamics");
    }
    emit(bias_sh.out, [&](std::ostream& o) {
      o << "variant: " << to_string(rep.variant) << "\nsurrogate: " << to_string(rep.surrogate)
        << "\ng_max: " << format_real(rep.g_max) << "\nkl_term: " << format_real(rep.kl_term)
        << "\nbound: " << format_real(rep.bound) << '\n';
      if (rep.variant == BoundVariant::corollary2) o << "alpha: " << format_real(rep.alpha) << '\n';
      if (rep.surrogate == SurrogateKind::nll) o << "note: continuous surrogate, approximate up to a constant\n";
      for (const auto& w : rep.warnings) o << "warning: " << w << '\n';
    });
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const SupportViolation& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  } catch (const NumericError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 4;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const ParseError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
