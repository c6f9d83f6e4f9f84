#include "hcope/experiments.hpp"

#include <algorithm>
#include <boost/math/distributions/students_t.hpp>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "hcope/dataset_io.hpp"
#include "hcope/errors.hpp"
#include "hcope/parallel.hpp"

namespace hcope {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <class T>
T parse_number(const std::string& text, std::size_t line) {
  T v{};
  const auto [p, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || p != text.data() + text.size() || text.empty())
    throw ParseError(line, "'" + text + "' is not a valid number");
  return v;
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  for (std::string item; std::getline(ss, item, ',');)
    if (const auto t = trim(item); !t.empty()) out.push_back(t);
  return out;
}

bool parse_bool(const std::string& text, std::size_t line) {
  if (text == "true" || text == "1" || text == "yes") return true;
  if (text == "false" || text == "0" || text == "no") return false;
  throw ParseError(line, "'" + text + "' is not a boolean");
}

}  // namespace

void SweepConfig::validate() const {
  if (estimators.empty()) throw ConfigError("no estimators configured");
  if (n_values.empty()) throw ConfigError("no dataset sizes configured");
  for (std::size_t i = 0; i < n_values.size(); ++i) {
    if (n_values[i] == 0) throw ConfigError("dataset sizes must be positive");
    if (i > 0 && n_values[i] <= n_values[i - 1]) throw ConfigError("n_values must be strictly increasing");
  }
  if (trials == 0) throw ConfigError("trials must be at least 1");
  if (!ground_truth && ground_truth_rollouts == 0) throw ConfigError("ground_truth_rollouts must be positive");
  bootstrap.validate();
}

SweepConfig parse_sweep_config(std::istream& in) {
  SweepConfig cfg;
  std::string raw;
  for (std::size_t line = 1; std::getline(in, raw); ++line) {
    if (const auto hash = raw.find('#'); hash != std::string::npos) raw.erase(hash);
    const std::string text = trim(raw);
    if (text.empty()) continue;
    const auto eq = text.find('=');
    if (eq == std::string::npos) throw ParseError(line, "expected key = value");
    const std::string key = trim(text.substr(0, eq));
    const std::string value = trim(text.substr(eq + 1));
    try {
      if (key == "env") cfg.env_id = value;
      else if (key.rfind("env.", 0) == 0) cfg.env_options[key.substr(4)] = value;
      else if (key == "pi_e") cfg.pi_e = value;
      else if (key == "pi_b") cfg.pi_b = value;
      else if (key == "estimators") {
        cfg.estimators.clear();
        for (const auto& e : split_list(value)) cfg.estimators.push_back(parse_estimator_kind(e));
      } else if (key == "n_values") {
        cfg.n_values.clear();
        for (const auto& e : split_list(value)) cfg.n_values.push_back(parse_number<std::size_t>(e, line));
      } else if (key == "trials") cfg.trials = parse_number<std::size_t>(value, line);
      else if (key == "bootstrap_b") cfg.bootstrap.resamples = parse_number<std::size_t>(value, line);
      else if (key == "delta") cfg.bootstrap.delta = parse_number<double>(value, line);
      else if (key == "method") cfg.bootstrap.method = parse_bootstrap_method(value);
      else if (key == "ground_truth_rollouts") cfg.ground_truth_rollouts = parse_number<std::size_t>(value, line);
      else if (key == "ground_truth") cfg.ground_truth = parse_number<double>(value, line);
      else if (key == "seed") cfg.seed = parse_number<std::uint64_t>(value, line);
      else if (key == "workers") cfg.workers = parse_number<std::size_t>(value, line);
      else if (key == "mb_rollouts") cfg.model.rollouts = parse_number<std::size_t>(value, line);
      else if (key == "value_rollouts") cfg.model.value_rollouts = parse_number<std::size_t>(value, line);
      else if (key == "model_seed") cfg.model.seed = parse_number<std::uint64_t>(value, line);
      else if (key == "recompute_per_resample") cfg.recompute_per_resample = parse_bool(value, line);
      else throw ParseError(line, "unknown key '" + key + "'");
    } catch (const ConfigError& e) {
      throw ParseError(line, e.what());
    }
  }
  return cfg;
}

SweepConfig load_sweep_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  return parse_sweep_config(in);
}

void write_sweep_config(std::ostream& out, const SweepConfig& cfg) {
  auto join = [](const auto& xs, auto fmt) {
    std::string s;
    for (const auto& x : xs) s += (s.empty() ? "" : ",") + fmt(x);
    return s;
  };
  out << "env = " << cfg.env_id << '\n';
  for (const auto& [k, v] : cfg.env_options) out << "env." << k << " = " << v << '\n';
  out << "pi_e = " << cfg.pi_e << '\n'
      << "pi_b = " << cfg.pi_b << '\n'
      << "estimators = " << join(cfg.estimators, [](EstimatorKind k) { return to_string(k); }) << '\n'
      << "n_values = " << join(cfg.n_values, [](std::size_t n) { return std::to_string(n); }) << '\n'
      << "trials = " << cfg.trials << '\n'
      << "bootstrap_b = " << cfg.bootstrap.resamples << '\n'
      << "delta = " << format_real(cfg.bootstrap.delta) << '\n'
      << "method = " << to_string(cfg.bootstrap.method) << '\n'
      << "ground_truth_rollouts = " << cfg.ground_truth_rollouts << '\n';
  if (cfg.ground_truth) out << "ground_truth = " << format_real(*cfg.ground_truth) << '\n';
  out << "seed = " << cfg.seed << '\n'
      << "workers = " << cfg.workers << '\n'
      << "mb_rollouts = " << cfg.model.rollouts << '\n'
      << "value_rollouts = " << cfg.model.value_rollouts << '\n'
      << "model_seed = " << cfg.model.seed << '\n'
      << "recompute_per_resample = " << (cfg.recompute_per_resample ? "true" : "false") << '\n';
}

GroundTruth ground_truth(const Benchmark& bench, const Policy& pi_e, std::size_t rollouts, std::uint64_t seed) {
  if (const auto v = exact_value(*bench.env, pi_e)) return {*v, 0.0, 0};
  Rng rng = make_rng(seed, {0x67});
  return monte_carlo_ground_truth(*bench.env, pi_e, rollouts, rng);
}

CellResult aggregate(EstimatorKind estimator, std::size_t n, std::vector<TrialRecord> trials, double truth) {
  CellResult cell;
  cell.estimator = estimator;
  cell.n = n;
  std::vector<double> valid;
  for (const TrialRecord& t : trials) {
    if (t.failed) {
      ++cell.failed;
    } else if (t.lower_bound <= truth) {
      ++cell.valid;
      valid.push_back(t.lower_bound);
    } else {
      ++cell.invalid;
    }
  }
  const std::size_t classified = cell.valid + cell.invalid;
  cell.error_rate = classified ? static_cast<double>(cell.invalid) / static_cast<double>(classified) : kNaN;
  if (valid.empty()) {
    cell.mean_valid_bound = cell.ci_low = cell.ci_high = kNaN;
  } else {
    const double k = static_cast<double>(valid.size());
    double mean = 0.0;
    for (double x : valid) mean += x;
    mean /= k;
    cell.mean_valid_bound = mean;
    if (valid.size() < 2) {
      cell.ci_low = cell.ci_high = mean;
    } else {
      double ss = 0.0;
      for (double x : valid) ss += (x - mean) * (x - mean);
      const double se = std::sqrt(ss / (k - 1.0) / k);
      const double tq = boost::math::quantile(boost::math::students_t(k - 1.0), 0.975);
      cell.ci_low = mean - tq * se;
      cell.ci_high = mean + tq * se;
    }
  }
  cell.trials = std::move(trials);
  return cell;
}

SweepResult run_sweep(const SweepConfig& cfg) {
  cfg.validate();
  const Benchmark bench = make_benchmark(cfg.env_id, cfg.env_options);
  for (EstimatorKind k : cfg.estimators) check_applicable(k, *bench.env);
  EstimatorContext ctx;
  ctx.env = bench.env;
  ctx.pi_e = make_policy(bench, cfg.pi_e, PolicyRole::evaluation);
  ctx.pi_b = make_policy(bench, cfg.pi_b, PolicyRole::behavior);
  ctx.model = cfg.model;
  ctx.recompute_per_resample = cfg.recompute_per_resample;
  ctx.bias_diagnostics = false;

  SweepResult res;
  res.env_id = cfg.env_id;
  if (cfg.ground_truth) {
    res.ground_truth = *cfg.ground_truth;
  } else {
    const GroundTruth gt = ground_truth(bench, *ctx.pi_e, cfg.ground_truth_rollouts, cfg.seed);
    res.ground_truth = gt.mean;
    res.ground_truth_stderr = gt.std_error;
    res.ground_truth_rollouts = gt.rollouts;
    if (gt.rollouts > 0 && !(gt.std_error < 0.01 * std::abs(gt.mean)))
      throw NumericError("ground truth standard error " + format_real(gt.std_error) +
                         " is not below 1% of |V(pi_e)|; increase ground_truth_rollouts");
  }

  const std::size_t E = cfg.estimators.size(), N = cfg.n_values.size(), M = cfg.trials;
  // records[(e * N + ni) * M + k]
  std::vector<TrialRecord> records(E * N * M);
  parallel_for(N * M, cfg.workers, [&](std::size_t job) {
    const std::size_t ni = job / M, k = job % M;
    const std::size_t n = cfg.n_values[ni];
    Rng data_rng = make_rng(cfg.seed, {1, n, k});
    const Dataset ds = sample_dataset(*bench.env, *ctx.pi_b, n, data_rng);
    BootstrapConfig bc = cfg.bootstrap;
    bc.seed = derive_seed(cfg.seed, {2, n, k});
    bc.workers = 1;
    bc.keep_estimates = false;
    for (std::size_t e = 0; e < E; ++e) {
      TrialRecord& rec = records[(e * N + ni) * M + k];
      rec.trial = k;
      try {
        const auto est = make_estimator(cfg.estimators[e], ds, ctx);
        const BoundReport rep = bootstrap_lower_bound(*est, bc);
        rec.lower_bound = rep.lower_bound;
        rec.point_estimate = rep.point_estimate;
        if (!std::isfinite(rep.lower_bound)) {
          rec.failed = true;
          rec.error = "non-finite lower bound";
        }
      } catch (const std::exception& ex) {
        rec.failed = true;
        rec.error = ex.what();
        rec.lower_bound = rec.point_estimate = kNaN;
      }
    }
  });

  for (std::size_t e = 0; e < E; ++e)
    for (std::size_t ni = 0; ni < N; ++ni) {
      std::vector<TrialRecord> trials(records.begin() + static_cast<std::ptrdiff_t>((e * N + ni) * M),
                                      records.begin() + static_cast<std::ptrdiff_t>((e * N + ni + 1) * M));
      CellResult cell = aggregate(cfg.estimators[e], cfg.n_values[ni], std::move(trials), res.ground_truth);
      if (!cfg.keep_trials) cell.trials.clear();
      res.cells.push_back(std::move(cell));
    }
  return res;
}

void write_csv(std::ostream& out, const SweepResult& res) {
  out << "estimator,n,trials,valid,invalid,failed,error_rate,mean_valid_bound,ci_low,ci_high,ground_truth,"
         "ground_truth_stderr\n";
  for (const CellResult& c : res.cells) {
    out << to_string(c.estimator) << ',' << c.n << ',' << (c.valid + c.invalid + c.failed) << ',' << c.valid << ','
        << c.invalid << ',' << c.failed << ',' << format_real(c.error_rate) << ',' << format_real(c.mean_valid_bound)
        << ',' << format_real(c.ci_low) << ',' << format_real(c.ci_high) << ',' << format_real(res.ground_truth)
        << ',' << format_real(res.ground_truth_stderr) << '\n';
  }
}

void emit_csv(const SweepResult& res, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot open '" + path + "' for writing");
  write_csv(out, res);
  out.flush();
  if (!out) throw std::runtime_error("failed writing '" + path + "'");
}

void write_trials_csv(std::ostream& out, const SweepResult& res) {
  out << "estimator,n,trial,lower_bound,point_estimate,failed,valid\n";
  for (const CellResult& c : res.cells)
    for (const TrialRecord& t : c.trials)
      out << to_string(c.estimator) << ',' << c.n << ',' << t.trial << ',' << format_real(t.lower_bound) << ','
          << format_real(t.point_estimate) << ',' << (t.failed ? 1 : 0) << ','
          << (!t.failed && t.lower_bound <= res.ground_truth ? 1 : 0) << '\n';
}

}  // namespace hcope
