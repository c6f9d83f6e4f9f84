#include "hcope/estimators.hpp"

#include "hcope/bias_bound.hpp"
#include "hcope/doubly_robust.hpp"
#include "hcope/errors.hpp"
#include "hcope/importance.hpp"

namespace hcope {

namespace {

struct Entry {
  EstimatorKind kind;
  const char* name;
};

constexpr Entry kEntries[] = {
    {EstimatorKind::is, "is"},
    {EstimatorKind::pdis, "pdis"},
    {EstimatorKind::wis, "wis"},
    {EstimatorKind::pdwis, "pdwis"},
    {EstimatorKind::dr, "dr"},
    {EstimatorKind::wdr_tabular, "wdr-tabular"},
    {EstimatorKind::wdr_lr, "wdr-lr"},
    {EstimatorKind::wdr_pr, "wdr-pr"},
    {EstimatorKind::mb_tabular, "mb-tabular"},
    {EstimatorKind::mb_lr, "mb-lr"},
    {EstimatorKind::mb_pr, "mb-pr"},
};

bool tabular_only(EstimatorKind k) { return k == EstimatorKind::wdr_tabular || k == EstimatorKind::mb_tabular; }
bool regression_only(EstimatorKind k) {
  return k == EstimatorKind::wdr_lr || k == EstimatorKind::wdr_pr || k == EstimatorKind::mb_lr ||
         k == EstimatorKind::mb_pr;
}

// Model behind the model-based kinds; dr picks whichever suits the environment.
ModelKind model_kind(EstimatorKind k, const Environment& env) {
  switch (k) {
    case EstimatorKind::wdr_tabular:
    case EstimatorKind::mb_tabular: return ModelKind::tabular;
    case EstimatorKind::wdr_lr:
    case EstimatorKind::mb_lr: return ModelKind::linear;
    case EstimatorKind::wdr_pr:
    case EstimatorKind::mb_pr: return ModelKind::polynomial;
    default: return env.discrete_space() ? ModelKind::tabular : ModelKind::linear;
  }
}

FeatureMap feature_map(ModelKind k) { return k == ModelKind::polynomial ? FeatureMap::polynomial : FeatureMap::linear; }

// Surrogate model-bias bound of the model learned from all of ds; diagnostic only.
void attach_bias_bound(BatchEstimator& est, ModelKind kind, const Dataset& ds, const EstimatorContext& ctx) {
  const MdpSpec& spec = ctx.env->spec();
  try {
    double surrogate = 0.0;
    SurrogateKind sk = SurrogateKind::cross_entropy;
    if (kind == ModelKind::tabular) {
      const auto space = *ctx.env->discrete_space();
      const TabularModel model = learn_tabular(ds, space.states, space.actions);
      surrogate = surrogate_kl(ds, model.dynamics, *ctx.pi_e, *ctx.pi_b, spec.horizon);
    } else {
      sk = SurrogateKind::nll;
      surrogate = surrogate_kl(ds, learn_regression(ds, feature_map(kind)), *ctx.pi_e, *ctx.pi_b, spec.horizon);
    }
    const BiasBoundReport r = surrogate_bound(surrogate, sk, spec, ds.size());
    est.add_diagnostic("model_bias_surrogate", surrogate);
    est.add_diagnostic("model_bias_bound", r.bound);
  } catch (const std::exception&) {
    // A singular or unsupported model leaves the diagnostic out.
  }
}

std::unique_ptr<BatchEstimator> build(EstimatorKind kind, const Dataset& ds, const EstimatorContext& ctx) {
  const MdpSpec& spec = ctx.env->spec();
  switch (kind) {
    case EstimatorKind::is:
    case EstimatorKind::pdis:
    case EstimatorKind::wis:
    case EstimatorKind::pdwis: {
      auto data = std::make_shared<const ImportanceData>(ImportanceData::build(ds, *ctx.pi_e, *ctx.pi_b, spec));
      const auto ik = kind == EstimatorKind::is     ? ImportanceKind::is
                      : kind == EstimatorKind::pdis ? ImportanceKind::pdis
                      : kind == EstimatorKind::wis  ? ImportanceKind::wis
                                                    : ImportanceKind::pdwis;
      return std::make_unique<ImportanceEstimator>(ik, data);
    }
    case EstimatorKind::mb_tabular:
    case EstimatorKind::mb_lr:
    case EstimatorKind::mb_pr: {
      const ModelKind mk = model_kind(kind, *ctx.env);
      auto est = std::make_unique<ModelBasedEstimator>(mk, ds, ctx.env, ctx.pi_e, ctx.model);
      if (ctx.bias_diagnostics && ctx.pi_b) attach_bias_bound(*est, mk, ds, ctx);
      return est;
    }
    default: {
      // Doubly robust: one model from all of D, its value functions reused on every resample.
      const ModelKind mk = model_kind(kind, *ctx.env);
      auto data = std::make_shared<const ImportanceData>(ImportanceData::build(ds, *ctx.pi_e, *ctx.pi_b, spec));
      ValueFunctions vf;
      if (mk == ModelKind::tabular) {
        const auto space = *ctx.env->discrete_space();
        const TabularModel model = learn_tabular(ds, space.states, space.actions);
        vf = value_iteration(model, tabular_reward(*ctx.env), *ctx.pi_e, spec);
        const double gap = mixture_gap(ds, vf, *ctx.pi_e, space.actions, spec);
        if (gap > 1e-6) warn("value functions violate v = E_pi[q] by " + std::to_string(gap));
      } else {
        auto model = std::make_shared<const LinearGaussianModel>(learn_regression(ds, feature_map(mk)));
        vf = mc_value_functions(model, ctx.env, ctx.pi_e, ctx.model.value_rollouts, ctx.model.seed);
      }
      auto est = std::make_unique<DoublyRobustEstimator>(kind != EstimatorKind::dr, data, value_table(ds, vf, spec),
                                                         to_string(kind));
      if (ctx.bias_diagnostics) attach_bias_bound(*est, mk, ds, ctx);
      return est;
    }
  }
}

}  // namespace

std::string to_string(EstimatorKind kind) {
  for (const Entry& e : kEntries)
    if (e.kind == kind) return e.name;
  return "?";
}

EstimatorKind parse_estimator_kind(const std::string& text) {
  for (const Entry& e : kEntries)
    if (text == e.name) return e.kind;
  throw ConfigError("unknown estimator '" + text + "'");
}

const std::vector<EstimatorKind>& all_estimator_kinds() {
  static const std::vector<EstimatorKind> kinds = [] {
    std::vector<EstimatorKind> out;
    for (const Entry& e : kEntries) out.push_back(e.kind);
    return out;
  }();
  return kinds;
}

void check_applicable(EstimatorKind kind, const Environment& env) {
  const bool discrete = env.discrete_space().has_value();
  if (tabular_only(kind) && !discrete)
    throw ConfigError("estimator " + to_string(kind) + " needs a discrete environment, got " + env.id());
  if (regression_only(kind) && discrete)
    throw ConfigError("estimator " + to_string(kind) + " needs a continuous environment, got " + env.id());
}

std::unique_ptr<BatchEstimator> make_estimator(EstimatorKind kind, const Dataset& ds, const EstimatorContext& ctx) {
  if (!ctx.env || !ctx.pi_e || !ctx.pi_b) throw ConfigError("estimator context is incomplete");
  check_applicable(kind, *ctx.env);
  if (ds.empty()) throw ConfigError("empty dataset");
  if (!ctx.recompute_per_resample) return build(kind, ds, ctx);
  EstimatorContext inner = ctx;
  inner.recompute_per_resample = false;
  inner.bias_diagnostics = false;
  return std::make_unique<DatasetFunctionEstimator>(
      to_string(kind), ds, [kind, inner](const Dataset& d) { return build(kind, d, inner)->evaluate_full(); });
}

double estimate(EstimatorKind kind, const Dataset& ds, const EstimatorContext& ctx) {
  EstimatorContext c = ctx;
  c.bias_diagnostics = false;
  return make_estimator(kind, ds, c)->evaluate_full();
}

}  // namespace hcope
