#include "hcope/benchmarks.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "hcope/errors.hpp"
#include "hcope/models.hpp"

namespace hcope {

namespace {

double to_real(const std::string& key, const std::string& text) {
  double v = 0.0;
  const auto [p, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || p != text.data() + text.size())
    throw ConfigError("option " + key + ": '" + text + "' is not a number");
  return v;
}

std::size_t to_count(const std::string& key, const std::string& text) {
  std::size_t v = 0;
  const auto [p, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || p != text.data() + text.size())
    throw ConfigError("option " + key + ": '" + text + "' is not a non-negative integer");
  return v;
}

Benchmark mountain_car(const Options& options) {
  MountainCarConfig cfg;
  for (const auto& [k, v] : options) {
    if (k == "position_bins") cfg.position_bins = to_count(k, v);
    else if (k == "velocity_bins") cfg.velocity_bins = to_count(k, v);
    else if (k == "frame_skip") cfg.frame_skip = to_count(k, v);
    else if (k == "horizon") cfg.horizon = to_count(k, v);
    else if (k == "gamma") cfg.gamma = to_real(k, v);
    else if (k == "start_low") cfg.start_position_low = to_real(k, v);
    else if (k == "start_high") cfg.start_position_high = to_real(k, v);
    else throw ConfigError("unknown mountain-car option '" + k + "'");
  }
  auto env = std::make_shared<const MountainCarEnv>(cfg);
  Benchmark b;
  b.env = env;
  b.default_pi_e = std::make_shared<const TabularPolicy>(mountain_car_energy_policy(*env, 0.1));
  b.default_pi_b = std::make_shared<const TabularPolicy>(TabularPolicy::uniform("uniform", env->state_count(), 3));
  b.resolver = [](const std::string&) { return std::optional<GaussianPolicy::MeanFn>(); };
  return b;
}

Benchmark cliff_world(const Options& options) {
  CliffWorldConfig cfg;
  for (const auto& [k, v] : options) {
    if (k == "noise_variance") cfg.noise_variance = to_real(k, v);
    else if (k == "horizon") cfg.horizon = to_count(k, v);
    else if (k == "gamma") cfg.gamma = to_real(k, v);
    else if (k == "dt") cfg.dt = to_real(k, v);
    else if (k == "cliff_penalty") cfg.cliff_penalty = to_real(k, v);
    else if (k == "start_noise") cfg.start_noise = to_real(k, v);
    else if (k == "goal_radius") cfg.goal_radius = to_real(k, v);
    else if (k == "kp") cfg.kp = to_real(k, v);
    else if (k == "kd") cfg.kd = to_real(k, v);
    else throw ConfigError("unknown cliff-world option '" + k + "'");
  }
  auto env = std::make_shared<const CliffWorldEnv>(cfg);
  Benchmark b;
  b.env = env;
  b.default_pi_e = std::make_shared<const GaussianPolicy>(cliff_world_policy(env, "cw-pi-e", 0.1));
  b.default_pi_b = std::make_shared<const GaussianPolicy>(cliff_world_policy(env, "cw-pi-b", 0.3));
  b.resolver = cliff_world_mean_resolver(env);
  return b;
}

struct MicroSpec {
  const char* id;
  std::size_t states, actions, horizon;
  double gamma;
  std::vector<double> d0, p, r, pi_e, pi_b;
};

const MicroSpec& micro_spec(int which) {
  static const MicroSpec specs[] = {
      {"micro-a", 2, 2, 2, 1.0,
       {0.6, 0.4},
       {0.7, 0.3, 0.2, 0.8,   //
        0.5, 0.5, 0.9, 0.1},
       {0.1, 0.8, 0.5, 0.3},
       {0.2, 0.8, 0.7, 0.3},
       {0.5, 0.5, 0.6, 0.4}},
      {"micro-b", 3, 2, 3, 0.9,
       {0.5, 0.3, 0.2},
       {0.1, 0.6, 0.3, 0.0, 0.5, 0.5,   //
        0.4, 0.4, 0.2, 1.0, 0.0, 0.0,   //
        0.3, 0.0, 0.7, 0.25, 0.25, 0.5},
       {0.0, 1.0, 0.4, 0.2, 0.9, 0.6},
       {0.1, 0.9, 0.8, 0.2, 0.5, 0.5},
       {0.5, 0.5, 0.5, 0.5, 0.3, 0.7}},
      {"micro-c", 4, 3, 3, 1.0,
       {0.4, 0.3, 0.2, 0.1},
       {0.5, 0.5, 0.0, 0.0,  0.0, 0.2, 0.8, 0.0,  0.1, 0.1, 0.1, 0.7,   //
        0.0, 1.0, 0.0, 0.0,  0.3, 0.0, 0.3, 0.4,  0.0, 0.0, 0.5, 0.5,   //
        0.6, 0.0, 0.4, 0.0,  0.2, 0.2, 0.2, 0.4,  0.0, 0.9, 0.0, 0.1,   //
        0.25, 0.25, 0.25, 0.25,  0.0, 0.0, 0.0, 1.0,  0.5, 0.0, 0.5, 0.0},
       {0.3, 0.7, 0.1, 0.0, 0.5, 1.0, 0.8, 0.2, 0.4, 0.6, 0.9, 0.05},
       {0.6, 0.3, 0.1, 0.1, 0.1, 0.8, 0.2, 0.5, 0.3, 0.0, 0.5, 0.5},
       {1.0 / 3, 1.0 / 3, 1.0 / 3, 0.2, 0.4, 0.4, 0.5, 0.25, 0.25, 0.3, 0.3, 0.4}},
  };
  if (which < 0 || which > 2) throw ConfigError("micro-MDP index must be 0, 1 or 2");
  return specs[which];
}

}  // namespace

Benchmark micro_benchmark(int which) {
  const MicroSpec& m = micro_spec(which);
  MdpSpec spec;
  spec.gamma = m.gamma;
  spec.horizon = m.horizon;
  spec.r_min = 0.0;
  spec.r_max = 1.0;
  auto env = std::make_shared<const TabularMdpEnv>(m.id, TabularDynamics::dense(m.states, m.actions, m.p, m.d0),
                                                   m.r, spec);
  Benchmark b;
  b.env = env;
  b.default_pi_e = std::make_shared<const TabularPolicy>(std::string(m.id) + "-pi-e", m.states, m.actions, m.pi_e);
  b.default_pi_b = std::make_shared<const TabularPolicy>(std::string(m.id) + "-pi-b", m.states, m.actions, m.pi_b);
  b.resolver = [](const std::string&) { return std::optional<GaussianPolicy::MeanFn>(); };
  return b;
}

Benchmark make_benchmark(const std::string& env_id, const Options& options) {
  if (env_id == "mountain-car-v0") return mountain_car(options);
  if (env_id == "cliff-world-v0") return cliff_world(options);
  for (int k = 0; k < 3; ++k)
    if (env_id == micro_spec(k).id) {
      if (!options.empty()) throw ConfigError(env_id + " takes no options");
      return micro_benchmark(k);
    }
  throw ConfigError("unknown environment '" + env_id + "'");
}

PolicyPtr make_policy(const Benchmark& bench, const std::string& spec, PolicyRole role) {
  const auto colon = spec.find(':');
  const std::string head = spec.substr(0, colon);
  const std::string arg = colon == std::string::npos ? "" : spec.substr(colon + 1);
  const auto space = bench.env->discrete_space();
  if (head == "default") return role == PolicyRole::evaluation ? bench.default_pi_e : bench.default_pi_b;
  if (head == "uniform") {
    if (!space) throw ConfigError("uniform policy needs a discrete environment");
    return std::make_shared<const TabularPolicy>(TabularPolicy::uniform("uniform", space->states, space->actions));
  }
  if (head == "energy") {
    const auto* mc = dynamic_cast<const MountainCarEnv*>(bench.env.get());
    if (!mc) throw ConfigError("energy policy needs mountain-car-v0");
    return std::make_shared<const TabularPolicy>(mountain_car_energy_policy(*mc, to_real("energy", arg)));
  }
  if (head == "gaussian") {
    auto cw = std::dynamic_pointer_cast<const CliffWorldEnv>(bench.env);
    if (!cw) throw ConfigError("gaussian policy needs cliff-world-v0");
    return std::make_shared<const GaussianPolicy>(cliff_world_policy(cw, "cw-gaussian-" + arg, to_real("gaussian", arg)));
  }
  if (head == "table") {
    if (!space) throw ConfigError("table policy needs a discrete environment");
    std::vector<double> probs;
    std::stringstream ss(arg);
    for (std::string item; std::getline(ss, item, ',');) probs.push_back(to_real("table", item));
    return std::make_shared<const TabularPolicy>("table", space->states, space->actions, probs);
  }
  if (head == "file") {
    std::ifstream in(arg);
    if (!in) throw ConfigError("cannot open policy file '" + arg + "'");
    return read_policy(in, bench.resolver);
  }
  throw ConfigError("unknown policy spec '" + spec + "'");
}

std::optional<double> exact_value(const Environment& env, const Policy& pi) {
  const auto* tab = dynamic_cast<const TabularMdpEnv*>(&env);
  if (!tab) return std::nullopt;
  const TabularDynamics& dyn = tab->dynamics();
  const TabularValues values = backward_induction(
      dyn, [tab](std::size_t s, std::size_t a, std::size_t) { return tab->reward(s, a); },
      policy_table(pi, dyn.states, dyn.actions), tab->spec());
  return initial_value(dyn, values);
}

}  // namespace hcope
