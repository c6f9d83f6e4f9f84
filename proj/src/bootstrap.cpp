#include "hcope/bootstrap.hpp"

#include <algorithm>
#include <boost/math/distributions/normal.hpp>
#include <cmath>
#include <iomanip>
#include <limits>
#include <ostream>

#include "hcope/errors.hpp"
#include "hcope/parallel.hpp"

namespace hcope {

namespace {

const boost::math::normal standard_normal;

double phi(double x) { return boost::math::cdf(standard_normal, x); }
double phi_inv(double p) { return boost::math::quantile(standard_normal, p); }

std::size_t rank_for(double alpha, std::size_t count) {
  const double l = std::floor(alpha * static_cast<double>(count));
  return static_cast<std::size_t>(std::clamp(l, 1.0, static_cast<double>(count)));
}

// Ascending order with NaN (failed) first and ties broken by resample index.
std::vector<std::size_t> sorted_order(const std::vector<double>& xs) {
  std::vector<std::size_t> order(xs.size());
  for (std::size_t j = 0; j < order.size(); ++j) order[j] = j;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const bool na = std::isnan(xs[a]), nb = std::isnan(xs[b]);
    if (na || nb) return na && !nb;
    return xs[a] < xs[b];
  });
  return order;
}

BoundReport base_report(const BatchEstimator& est, const BootstrapConfig& cfg, const ResampleResult& rr) {
  BoundReport rep;
  rep.estimator = est.name();
  rep.method = cfg.method;
  rep.point_estimate = est.evaluate_full();
  rep.delta = cfg.delta;
  rep.resamples = cfg.resamples;
  rep.failures = rr.failures;
  rep.first_failure = rr.first_failure;
  rep.diagnostics = est.diagnostics();
  if (rr.failures > 0)
    rep.warnings.push_back(std::to_string(rr.failures) + " resamples failed: " + rr.first_failure);
  return rep;
}

double order_statistic(const std::vector<double>& estimates, const std::vector<std::size_t>& order,
                       std::size_t rank) {
  const double x = estimates[order[rank - 1]];
  return std::isnan(x) ? -std::numeric_limits<double>::infinity() : x;
}

void keep_sorted(BoundReport& rep, const std::vector<double>& estimates, const std::vector<std::size_t>& order) {
  rep.estimates.reserve(order.size());
  for (std::size_t j : order) rep.estimates.push_back(estimates[j]);
}

}  // namespace

std::string to_string(BootstrapMethod m) { return m == BootstrapMethod::percentile ? "percentile" : "bca"; }

BootstrapMethod parse_bootstrap_method(const std::string& text) {
  if (text == "percentile") return BootstrapMethod::percentile;
  if (text == "bca") return BootstrapMethod::bca;
  throw ConfigError("unknown bootstrap method '" + text + "'");
}

void BootstrapConfig::validate() const {
  if (resamples == 0) throw ConfigError("bootstrap needs at least one resample");
  if (!(delta > 0.0 && delta < 1.0)) throw ConfigError("delta must lie in (0, 1)");
  if (std::floor(delta * static_cast<double>(resamples)) < 1.0)
    throw ConfigError("floor(delta * B) must be at least 1");
  if (!(max_failure_fraction >= 0.0 && max_failure_fraction < 1.0))
    throw ConfigError("max failure fraction must lie in [0, 1)");
}

std::size_t BootstrapConfig::order_index() const {
  return static_cast<std::size_t>(std::floor(delta * static_cast<double>(resamples)));
}

std::vector<std::size_t> resample_indices(std::size_t n, Rng& rng) {
  if (n == 0) throw ConfigError("cannot resample an empty dataset");
  std::uniform_int_distribution<std::size_t> pick(0, n - 1);
  std::vector<std::size_t> idx(n);
  for (auto& i : idx) i = pick(rng);
  return idx;
}

std::vector<double> resample_counts(std::size_t n, Rng& rng) {
  std::vector<double> counts(n, 0.0);
  for (std::size_t i : resample_indices(n, rng)) counts[i] += 1.0;
  return counts;
}

ResampleResult run_resamples(const BatchEstimator& est, const BootstrapConfig& cfg) {
  cfg.validate();
  const std::size_t n = est.size();
  ResampleResult rr;
  rr.estimates.assign(cfg.resamples, std::numeric_limits<double>::quiet_NaN());
  std::vector<std::string> errors(cfg.resamples);
  parallel_for(cfg.resamples, cfg.workers, [&](std::size_t j) {
    Rng rng = make_rng(cfg.seed, {j});
    const std::vector<double> counts = resample_counts(n, rng);
    try {
      const double v = est.evaluate(counts);
      if (std::isfinite(v))
        rr.estimates[j] = v;
      else
        errors[j] = "non-finite estimate";
    } catch (const std::exception& e) {
      errors[j] = e.what();
    }
  });
  for (std::size_t j = 0; j < cfg.resamples; ++j)
    if (std::isnan(rr.estimates[j])) {
      if (rr.failures++ == 0) rr.first_failure = errors[j];
    }
  if (static_cast<double>(rr.failures) > cfg.max_failure_fraction * static_cast<double>(cfg.resamples))
    throw NumericError("bootstrap aborted: " + std::to_string(rr.failures) + " of " +
                       std::to_string(cfg.resamples) + " resamples failed (" + rr.first_failure +
                       "); the evaluation policy is likely unsupported by the data");
  return rr;
}

BoundReport percentile_lower_bound(const BatchEstimator& est, const BootstrapConfig& cfg) {
  const ResampleResult rr = run_resamples(est, cfg);
  BoundReport rep = base_report(est, cfg, rr);
  rep.method = BootstrapMethod::percentile;
  const auto order = sorted_order(rr.estimates);
  rep.rank = cfg.order_index();
  rep.lower_bound = order_statistic(rr.estimates, order, rep.rank);
  if (cfg.keep_estimates) keep_sorted(rep, rr.estimates, order);
  return rep;
}

std::vector<double> jackknife_estimates(const BatchEstimator& est) {
  const std::size_t n = est.size();
  std::vector<double> out(n);
  std::vector<double> c(n, 1.0);
  for (std::size_t i = 0; i < n; ++i) {
    c[i] = 0.0;
    out[i] = est.evaluate(c);
    c[i] = 1.0;
  }
  return out;
}

BcaResult bca_from_estimates(std::span<const double> estimates, double theta_hat,
                             std::span<const double> jackknife, double delta) {
  std::vector<double> xs;
  for (double x : estimates)
    if (!std::isnan(x)) xs.push_back(x);
  const std::size_t failed = estimates.size() - xs.size();
  const std::size_t B = estimates.size();
  if (B == 0) throw ConfigError("no resample estimates");
  std::sort(xs.begin(), xs.end());
  BcaResult res;
  auto fallback = [&](std::string why) {
    res.fallback = true;
    res.reason = std::move(why);
    res.z0 = res.acceleration = 0.0;
    res.alpha = delta;
    return res;
  };
  auto finish = [&](BcaResult r) {
    r.rank = rank_for(r.alpha, B);
    // Failures rank below every success.
    r.lower_bound = r.rank <= failed ? -std::numeric_limits<double>::infinity() : xs[r.rank - failed - 1];
    return r;
  };

  if (jackknife.size() < 3) return finish(fallback("BCa needs at least 3 trajectories for the jackknife"));
  double mean = 0.0;
  for (double x : jackknife) {
    if (!std::isfinite(x)) return finish(fallback("jackknife estimate is not finite"));
    mean += x;
  }
  mean /= static_cast<double>(jackknife.size());
  double s2 = 0.0, s3 = 0.0;
  for (double x : jackknife) {
    const double d = mean - x;
    s2 += d * d;
    s3 += d * d * d;
  }
  if (!(s2 > 0.0)) return finish(fallback("jackknife is degenerate (all leave-one-out estimates equal)"));
  const double below =
      static_cast<double>(std::lower_bound(xs.begin(), xs.end(), theta_hat) - xs.begin() + failed) /
      static_cast<double>(B);
  if (below <= 0.0 || below >= 1.0)
    return finish(fallback("every resample estimate lies on one side of the point estimate"));
  res.z0 = phi_inv(below);
  res.acceleration = s3 / (6.0 * std::pow(s2, 1.5));
  const double zd = phi_inv(delta);
  const double denom = 1.0 - res.acceleration * (res.z0 + zd);
  if (!(denom > 0.0)) return finish(fallback("BCa acceleration makes the adjusted percentile undefined"));
  res.alpha = phi(res.z0 + (res.z0 + zd) / denom);
  return finish(res);
}

BoundReport bca_lower_bound(const BatchEstimator& est, const BootstrapConfig& cfg) {
  const ResampleResult rr = run_resamples(est, cfg);
  BoundReport rep = base_report(est, cfg, rr);
  rep.method = BootstrapMethod::bca;
  std::vector<double> jack;
  std::string jack_error;
  if (est.size() >= 3) {
    try {
      jack = jackknife_estimates(est);
    } catch (const std::exception& e) {
      jack_error = e.what();
      jack.clear();
    }
  }
  BcaResult b = bca_from_estimates(rr.estimates, rep.point_estimate, jack, cfg.delta);
  if (!jack_error.empty()) b.reason = "jackknife failed: " + jack_error;
  rep.lower_bound = b.lower_bound;
  rep.rank = b.rank;
  rep.bca_z0 = b.z0;
  rep.bca_acceleration = b.acceleration;
  rep.bca_alpha = b.alpha;
  rep.bca_fallback = b.fallback;
  if (b.fallback) {
    rep.warnings.push_back("BCa fell back to the percentile bound: " + b.reason);
    warn(rep.warnings.back());
  }
  if (cfg.keep_estimates) keep_sorted(rep, rr.estimates, sorted_order(rr.estimates));
  return rep;
}

BoundReport bootstrap_lower_bound(const BatchEstimator& est, const BootstrapConfig& cfg) {
  return cfg.method == BootstrapMethod::bca ? bca_lower_bound(est, cfg) : percentile_lower_bound(est, cfg);
}

void write_report(std::ostream& out, const BoundReport& r) {
  const auto old = out.precision(17);
  out << "estimator: " << r.estimator << '\n'
      << "method: " << to_string(r.method) << '\n'
      << "point_estimate: " << r.point_estimate << '\n'
      << "lower_bound: " << r.lower_bound << '\n'
      << "delta: " << r.delta << '\n'
      << "resamples: " << r.resamples << '\n'
      << "rank: " << r.rank << '\n'
      << "failures: " << r.failures << '\n';
  if (r.method == BootstrapMethod::bca)
    out << "bca_z0: " << r.bca_z0 << '\n'
        << "bca_acceleration: " << r.bca_acceleration << '\n'
        << "bca_alpha: " << r.bca_alpha << '\n'
        << "bca_fallback: " << (r.bca_fallback ? "true" : "false") << '\n';
  for (const auto& [k, v] : r.diagnostics) out << "diagnostic." << k << ": " << v << '\n';
  for (const auto& w : r.warnings) out << "warning: " << w << '\n';
  out.precision(old);
}

}  // namespace hcope
