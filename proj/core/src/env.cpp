#include "windlab/env.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace windlab {

const char* to_string(SimulatorKind kind) {
  return kind == SimulatorKind::kStatic ? "Static" : "Dynamic";
}

int EnvConfig::effective_horizon() const {
  if (horizon > 0) return horizon;
  return wind.scenario == Scenario::II ? 2048 : 150;
}

void EnvConfig::validate() const {
  if (layout_id.empty()) throw std::invalid_argument("EnvConfig: empty layout id");
  if (horizon < 0) throw std::invalid_argument("EnvConfig: horizon must be >= 1 (or 0 for default)");
  if (!(beta > 0.0 && beta < 1.0)) throw std::invalid_argument("EnvConfig: beta must be in (0, 1)");
  if (!(alpha >= 0.0)) throw std::invalid_argument("EnvConfig: alpha must be >= 0");
  if (!(duty_cycle_cap > 0.0 && duty_cycle_cap <= 1.0))
    throw std::invalid_argument("EnvConfig: duty-cycle cap must be in (0, 1]");
  if (!(static_step_s > 0.0) || !(dynamic_step_s > 0.0))
    throw std::invalid_argument("EnvConfig: step durations must be positive");
  if (c_load < 0.0) throw std::invalid_argument("EnvConfig: c_load must be >= 0");
  if (estimator_window < 1) throw std::invalid_argument("EnvConfig: estimator window >= 1");
}

std::map<std::string, std::string> parse_key_value_text(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos) continue;
    const auto last = line.find_last_not_of(" \t\r");
    line = line.substr(first, last - first + 1);
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos || eq == 0)
      throw std::invalid_argument("config line " + std::to_string(lineno) +
                                  ": expected key=value, got \"" + line + "\"");
    std::string key = line.substr(0, eq);
    std::string value = line.substr(eq + 1);
    const auto kend = key.find_last_not_of(" \t");
    key = key.substr(0, kend + 1);
    const auto vstart = value.find_first_not_of(" \t");
    value = vstart == std::string::npos ? "" : value.substr(vstart);
    kv[key] = value;
  }
  return kv;
}

std::map<std::string, std::string> read_key_value_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file: " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_key_value_text(buf.str());
}

void apply_overrides(EnvConfig& config, const std::map<std::string, std::string>& overrides) {
  for (const auto& [key, value] : overrides) {
    if (key.rfind("bridge.", 0) == 0) continue;  // CLI namespace
    if (key == "scenario") {
      config.wind.scenario = scenario_from_string(value);
    } else if (key == "horizon") {
      config.horizon = static_cast<int>(parse_double(value));
    } else if (key == "alpha") {
      config.alpha = parse_double(value);
    } else if (key == "beta") {
      config.beta = parse_double(value);
    } else if (key == "c_load") {
      config.c_load = parse_double(value);
    } else if (key == "duty_cycle_cap") {
      config.duty_cycle_cap = parse_double(value);
    } else if (key == "u_inf") {
      config.wind.fixed_u = parse_double(value);
    } else if (key == "phi_inf") {
      config.wind.fixed_phi = parse_double(value);
    } else if (key == "ti_inf") {
      config.wind.ti_inf = parse_double(value);
    } else if (key == "weibull_scale") {
      config.wind.weibull_scale = parse_double(value);
    } else if (key == "weibull_shape") {
      config.wind.weibull_shape = parse_double(value);
    } else if (key == "phi_mean") {
      config.wind.phi_mean = parse_double(value);
    } else if (key == "phi_std") {
      config.wind.phi_std = parse_double(value);
    } else if (key == "series") {
      config.series_path = value;
    } else if (key == "estimator_window") {
      config.estimator_window = static_cast<int>(parse_double(value));
    } else {
      throw std::invalid_argument("unknown config key \"" + key + "\"");
    }
  }
}

std::string EnvId::str() const {
  return (decentralized ? "Dec_" : "") + layout_id + "_" + to_string(simulator);
}

std::vector<std::string> registered_env_ids() {
  std::vector<std::string> ids;
  for (const std::string& layout : registered_layouts())
    for (const char* prefix : {"Dec_", ""})
      for (const char* suffix : {"_Static", "_Dynamic"})
        ids.push_back(prefix + layout + suffix);
  return ids;
}

EnvId parse_env_id(const std::string& env_id) {
  const auto fail = [&]() -> EnvId {
    std::string msg = "unknown environment id \"" + env_id + "\"; valid ids:";
    for (const std::string& id : registered_env_ids()) msg += "\n  " + id;
    throw std::invalid_argument(msg);
  };
  EnvId id;
  std::string rest = env_id;
  if (rest.rfind("Dec_", 0) == 0) {
    id.decentralized = true;
    rest = rest.substr(4);
  }
  const std::string kStatic = "_Static", kDynamic = "_Dynamic";
  if (rest.size() > kStatic.size() &&
      rest.compare(rest.size() - kStatic.size(), kStatic.size(), kStatic) == 0) {
    id.simulator = SimulatorKind::kStatic;
    id.layout_id = rest.substr(0, rest.size() - kStatic.size());
  } else if (rest.size() > kDynamic.size() &&
             rest.compare(rest.size() - kDynamic.size(), kDynamic.size(), kDynamic) == 0) {
    id.simulator = SimulatorKind::kDynamic;
    id.layout_id = rest.substr(0, rest.size() - kDynamic.size());
  } else {
    return fail();
  }
  const std::vector<std::string> layouts = registered_layouts();
  if (std::find(layouts.begin(), layouts.end(), id.layout_id) == layouts.end()) return fail();
  return id;
}

// ---------------------------------------------------------------------------
// Budget.

bool budget_accepts(double used_s, double elapsed_s, double required_s, double cap) {
  if (required_s < 0.0 || !std::isfinite(required_s))
    throw std::invalid_argument("budget: bad required actuation time");
  const double denom = std::max(elapsed_s + required_s, required_s / cap);
  // The 1e-9 s slack keeps the required/cap boundary (first actuation of an
  // episode) admissible under floating-point rounding.
  return used_s + required_s <= cap * denom + 1e-9;
}

ActuationBudget::ActuationBudget(int num_agents, double cap, double step_s)
    : cap_(cap), step_s_(step_s), used_s_(static_cast<std::size_t>(num_agents), 0.0) {
  if (num_agents < 1) throw std::invalid_argument("budget: need at least one agent");
}

void ActuationBudget::reset() {
  elapsed_s_ = 0.0;
  std::fill(used_s_.begin(), used_s_.end(), 0.0);
}

bool ActuationBudget::request(int agent, double required_s) {
  if (!budget_accepts(used_s_[agent], elapsed_s_, required_s, cap_)) return false;
  used_s_[agent] += required_s;
  return true;
}

double ActuationBudget::fraction(int agent) const {
  return elapsed_s_ > 0.0 ? used_s_[agent] / elapsed_s_ : 0.0;
}

// ---------------------------------------------------------------------------
// Rewards.

double reward_production(const std::vector<double>& powers_w, double u_inf) {
  if (powers_w.empty() || u_inf <= 1.0) return 0.0;  // low-wind guard
  double sum_kw = 0.0;
  for (double p : powers_w) sum_kw += p / 1000.0;
  return sum_kw / static_cast<double>(powers_w.size()) / (u_inf * u_inf * u_inf);
}

double combined_reward(double r_production, double raw_load, double alpha, double c_load) {
  return r_production - alpha * c_load * raw_load;
}

std::vector<double> common_reward_shaper(const ShaperGlobal& global,
                                         const std::vector<ShaperAgent>& agents) {
  const double r =
      combined_reward(global.r_production, global.load_raw, global.alpha, global.c_load);
  return std::vector<double>(agents.size(), r);
}

double calibrate_c_load(const FarmLayout& layout, SimulatorKind kind) {
  const FreeStreamConditions ref{layout.prevailing_u, layout.prevailing_phi, 0.06};
  if (kind == SimulatorKind::kStatic) {
    // The greedy steady state is a fixed point, so one solve is the episode mean.
    const SteadyFarmState st = solve_farm(layout, std::vector<double>(layout.count(), 0.0), ref);
    std::vector<double> powers;
    for (const auto& t : st.turbines) powers.push_back(t.power_w);
    const double rp = reward_production(powers, ref.u_inf);
    const double load = load_proxy_static(st);
    return load > 0.0 ? rp / load : 0.0;
  }
  // Dynamic: one greedy 150-step episode with the fixed reference wind; the
  // production reward uses the same estimator pipeline the environment does.
  WindScenarioConfig wind;
  wind.fixed_u = layout.prevailing_u;
  wind.fixed_phi = layout.prevailing_phi;
  DynFarmSim sim(layout, wind);
  sim.reset(0);
  FreeStreamEstimator estimator(20);
  estimator.observe(sim.measures());
  const std::vector<TurbineCommand> greedy(static_cast<std::size_t>(layout.count()));
  double rp_sum = 0.0, load_sum = 0.0;
  const int kSteps = 150;
  for (int k = 0; k < kSteps; ++k) {
    sim.apply_commands(greedy);
    estimator.observe(sim.measures());
    std::vector<double> powers;
    for (const auto& ms : sim.measures()) powers.push_back(ms.power_w);
    rp_sum += reward_production(powers, estimator.estimate().first);
    load_sum += load_penalty_dynamic(sim.measures());
  }
  return load_sum > 0.0 ? rp_sum / load_sum : 0.0;
}

// ---------------------------------------------------------------------------
// FarmEnv.

namespace {

std::shared_ptr<const WindSeries> resolve_series(const EnvConfig& config) {
  if (config.wind.scenario != Scenario::III) return nullptr;
  if (config.wind.series) return config.wind.series;
  const std::string path = config.series_path.empty()
                               ? data_dir() + "/wind/synthetic_series.csv"
                               : config.series_path;
  return std::make_shared<WindSeries>(load_wind_series(path));
}

}  // namespace

FarmEnv::FarmEnv(EnvConfig config)
    : config_(std::move(config)),
      layout_(load_layout(config_.layout_id)),
      kind_(config_.simulator),
      horizon_(config_.effective_horizon()),
      estimator_(config_.estimator_window),
      budget_(std::max(1, layout_.count()), config_.duty_cycle_cap, config_.step_seconds()) {
  config_.validate();
  config_.wind.horizon = horizon_;
  config_.wind.series = resolve_series(config_);
  c_load_ = config_.c_load > 0.0
                ? config_.c_load
                : (kind_ == SimulatorKind::kStatic ? layout_.c_load_static : layout_.c_load_dyn);
  if (c_load_ <= 0.0) c_load_ = calibrate_c_load(layout_, kind_);
  shaper_ = common_reward_shaper;
  if (kind_ == SimulatorKind::kStatic) {
    wind_.emplace(config_.wind, layout_.prevailing_u, layout_.prevailing_phi);
  } else {
    auto sim = std::make_shared<DynFarmSim>(layout_, config_.wind);
    owned_sim_ = sim.get();
    session_ = std::move(sim);
  }
}

FarmEnv::FarmEnv(EnvConfig config, std::shared_ptr<SimulatorSession> session)
    : FarmEnv([&]() -> EnvConfig {
        if (config.simulator != SimulatorKind::kDynamic)
          throw std::invalid_argument("FarmEnv: external sessions require a dynamic env");
        return config;
      }()) {
  if (!session) throw std::invalid_argument("FarmEnv: null session");
  owned_sim_ = nullptr;
  session_ = std::move(session);
  if (session_->num_turbines() != layout_.count())
    throw std::invalid_argument("FarmEnv: session turbine count does not match the layout");
}

void FarmEnv::set_reward_shaper(RewardShaper shaper) {
  shaper_ = shaper ? std::move(shaper) : common_reward_shaper;
}

std::vector<double> FarmEnv::action_low() const {
  return kind_ == SimulatorKind::kStatic
             ? std::vector<double>{-kMaxDeltaYawDeg}
             : std::vector<double>{-kMaxDeltaYawDeg, -kMaxDeltaPitchDeg, -kMaxDeltaTorqueFrac};
}

std::vector<double> FarmEnv::action_high() const {
  return kind_ == SimulatorKind::kStatic
             ? std::vector<double>{kMaxDeltaYawDeg}
             : std::vector<double>{kMaxDeltaYawDeg, kMaxDeltaPitchDeg, kMaxDeltaTorqueFrac};
}

std::vector<std::vector<double>> FarmEnv::reset(std::uint64_t seed) {
  const int m = layout_.count();
  steps_ = 0;
  terminated_ = false;
  has_reset_ = true;
  budget_.reset();
  if (kind_ == SimulatorKind::kStatic) {
    rng_ = Rng(seed);
    wind_->reset(rng_);
    wind_now_ = wind_->at(0.0);
    yaws_.assign(m, 0.0);
    static_state_ = solve_farm(layout_, yaws_, wind_now_);
    refresh_static_observations();
  } else {
    if (owned_sim_) {
      owned_sim_->reset(seed);
    } else if (session_->step_index() != 0 || !session_->active()) {
      throw std::logic_error("FarmEnv: bridged session must be freshly reset by its server");
    }
    targets_.assign(m, ActuatorTriple{});
    for (int i = 0; i < m; ++i) {
      targets_[i].yaw_deg = session_->measures()[i].yaw_deg;
      targets_[i].pitch_deg = session_->measures()[i].pitch_deg;
      targets_[i].torque_frac = session_->measures()[i].torque_frac;
    }
    estimator_.reset();
    estimator_.observe(session_->measures());
    const auto [u, phi] = estimator_.estimate();
    wind_now_ = FreeStreamConditions{std::max(u, 0.1), wrap_deg_360(phi), config_.wind.ti_inf};
    refresh_dynamic_observations();
  }
  return obs_;
}

void FarmEnv::require_active() const {
  if (!has_reset_) throw std::logic_error("FarmEnv: reset() before stepping");
  if (terminated_)
    throw std::logic_error("FarmEnv: episode terminated; reset() before stepping again");
}

EnvStepResult FarmEnv::step(const std::vector<std::vector<double>>& actions) {
  require_active();
  const int m = layout_.count();
  if (static_cast<int>(actions.size()) != m)
    throw std::invalid_argument("FarmEnv: expected one action per agent");
  for (const auto& a : actions) {
    if (static_cast<int>(a.size()) != action_dim())
      throw std::invalid_argument("FarmEnv: wrong action dimension");
    for (double v : a)
      if (!std::isfinite(v)) throw std::domain_error("FarmEnv: non-finite action");
  }

  budget_.begin_step();
  std::vector<ShaperAgent> agents(m);
  const TurbineSpec& spec = layout_.turbine;

  if (kind_ == SimulatorKind::kStatic) {
    for (int i = 0; i < m; ++i) {
      const double dyaw = std::clamp(actions[i][0], -kMaxDeltaYawDeg, kMaxDeltaYawDeg);
      const double target = std::clamp(yaws_[i] + dyaw, -spec.yaw_limit_deg, spec.yaw_limit_deg);
      const double delta = target - yaws_[i];
      const double required = std::abs(delta) / ActuatorLimits{}.yaw_rate_deg_s;
      if (budget_.request(i, required))
        yaws_[i] = target;
      else
        agents[i].budget_rejected = true;
    }
    wind_now_ = wind_->at(config_.static_step_s * (steps_ + 1));
    static_state_ = solve_farm(layout_, yaws_, wind_now_);
    std::vector<double> powers(m);
    for (int i = 0; i < m; ++i) {
      powers[i] = static_state_.turbines[i].power_w;
      agents[i].power_w = powers[i];
      agents[i].load_raw = load_proxy_turbine(static_state_.turbines[i]);
      agents[i].yaw_deg = yaws_[i];
    }
    refresh_static_observations();
    return finish_step(agents, powers, load_proxy_static(static_state_));
  }

  // Dynamic: gate the target changes, then advance the session one step.
  const ActuatorLimits limits{};
  std::vector<TurbineCommand> commands(m);
  for (int i = 0; i < m; ++i) {
    const double dyaw = std::clamp(actions[i][0], -kMaxDeltaYawDeg, kMaxDeltaYawDeg);
    const double dpitch = std::clamp(actions[i][1], -kMaxDeltaPitchDeg, kMaxDeltaPitchDeg);
    const double dtorque = std::clamp(actions[i][2], -kMaxDeltaTorqueFrac, kMaxDeltaTorqueFrac);
    ActuatorTriple next = targets_[i];
    next.yaw_deg = std::clamp(next.yaw_deg + dyaw, -spec.yaw_limit_deg, spec.yaw_limit_deg);
    next.pitch_deg = std::clamp(next.pitch_deg + dpitch, spec.pitch_min_deg, spec.pitch_max_deg);
    next.torque_frac = std::clamp(next.torque_frac + dtorque, spec.torque_min, spec.torque_max);
    const double required =
        std::max({std::abs(next.yaw_deg - targets_[i].yaw_deg) / limits.yaw_rate_deg_s,
                  std::abs(next.pitch_deg - targets_[i].pitch_deg) / limits.pitch_rate_deg_s,
                  std::abs(next.torque_frac - targets_[i].torque_frac) / limits.torque_rate_frac_s});
    if (budget_.request(i, required))
      targets_[i] = next;
    else
      agents[i].budget_rejected = true;
    commands[i].yaw_target_deg = targets_[i].yaw_deg;
    commands[i].pitch_target_deg = targets_[i].pitch_deg;
    commands[i].torque_target_frac = targets_[i].torque_frac;
  }
  session_->apply_commands(commands);
  if (!session_->active()) terminated_ = true;  // simulator ended the episode early
  estimator_.observe(session_->measures());
  const auto [u_est, phi_est] = estimator_.estimate();
  wind_now_ = FreeStreamConditions{std::max(u_est, 0.1), wrap_deg_360(phi_est),
                                   config_.wind.ti_inf};
  std::vector<double> powers(m);
  for (int i = 0; i < m; ++i) {
    const TurbineMeasures& ms = session_->measures()[i];
    powers[i] = ms.power_w;
    agents[i].power_w = ms.power_w;
    double load_i = 0.0;
    for (double v : ms.mop) load_i += std::abs(v);
    for (double v : ms.mip) load_i += std::abs(v);
    agents[i].load_raw = load_i;
    agents[i].yaw_deg = ms.yaw_deg;
  }
  refresh_dynamic_observations();
  return finish_step(agents, powers, load_penalty_dynamic(session_->measures()));
}

EnvStepResult FarmEnv::finish_step(const std::vector<ShaperAgent>& agents,
                                   const std::vector<double>& powers_w, double load_raw) {
  const int m = layout_.count();
  ShaperGlobal global;
  global.r_production = reward_production(powers_w, wind_now_.u_inf);
  global.load_raw = load_raw;
  global.alpha = config_.alpha;
  global.c_load = c_load_;
  for (double p : powers_w) global.power_total_w += p;
  global.u_inf = wind_now_.u_inf;
  global.phi_inf = wind_now_.phi_inf;

  EnvStepResult result;
  result.rewards = shaper_(global, agents);
  if (static_cast<int>(result.rewards.size()) != m)
    throw std::runtime_error("reward shaper returned the wrong number of rewards");
  for (double r : result.rewards)
    if (!std::isfinite(r)) throw std::runtime_error("reward shaper returned a non-finite reward");

  ++steps_;
  if (steps_ >= horizon_) terminated_ = true;
  result.terminated = terminated_;
  result.observations = obs_;
  result.info["power_total_w"] = global.power_total_w;
  result.info["load_raw"] = load_raw;
  for (int i = 0; i < m; ++i) {
    result.info["budget_frac_agent_" + std::to_string(i)] = budget_.fraction(i);
    result.info["budget_reject_agent_" + std::to_string(i)] = agents[i].budget_rejected ? 1.0 : 0.0;
  }
  return result;
}

void FarmEnv::refresh_static_observations() {
  const int m = layout_.count();
  obs_.assign(m, std::vector<double>(4, 0.0));
  for (int i = 0; i < m; ++i) {
    obs_[i][0] = static_state_.turbines[i].rotor_effective_speed;
    obs_[i][1] = wind_now_.phi_inf;
    obs_[i][2] = yaws_[i];
    obs_[i][3] = yaws_[i];  // applied instantly: target == current
  }
}

void FarmEnv::refresh_dynamic_observations() {
  const int m = layout_.count();
  obs_.assign(m, std::vector<double>(8, 0.0));
  for (int i = 0; i < m; ++i) {
    const TurbineMeasures& ms = session_->measures()[i];
    obs_[i][0] = ms.wind_speed;
    obs_[i][1] = ms.wind_dir;
    obs_[i][2] = ms.yaw_deg;
    obs_[i][3] = ms.pitch_deg;
    obs_[i][4] = ms.torque_frac;
    obs_[i][5] = targets_[i].yaw_deg;
    obs_[i][6] = targets_[i].pitch_deg;
    obs_[i][7] = targets_[i].torque_frac;
  }
}

std::vector<double> FarmEnv::global_observation() const {
  std::vector<double> g;
  g.reserve(static_cast<std::size_t>(num_agents()) * obs_dim() + 2);
  for (const auto& o : obs_) g.insert(g.end(), o.begin(), o.end());
  g.push_back(wind_now_.u_inf);
  g.push_back(wind_now_.phi_inf);
  return g;
}

// ---------------------------------------------------------------------------
// Wrappers.

CentralizedEnv::CentralizedEnv(std::shared_ptr<FarmEnv> env) : env_(std::move(env)) {
  if (!env_) throw std::invalid_argument("CentralizedEnv: null env");
}

std::vector<double> CentralizedEnv::reset(std::uint64_t seed) {
  env_->reset(seed);
  return env_->global_observation();
}

CentralizedEnv::Result CentralizedEnv::step(const std::vector<double>& joint_action) {
  const int m = env_->num_agents(), d = env_->action_dim();
  if (static_cast<int>(joint_action.size()) != m * d)
    throw std::invalid_argument("CentralizedEnv: joint action must have M*action_dim entries");
  std::vector<std::vector<double>> actions(m);
  for (int i = 0; i < m; ++i)
    actions[i].assign(joint_action.begin() + i * d, joint_action.begin() + (i + 1) * d);
  EnvStepResult r = env_->step(actions);
  Result out;
  out.observation = env_->global_observation();
  out.reward = r.rewards.empty() ? 0.0 : r.rewards[0];
  out.terminated = r.terminated;
  out.info = std::move(r.info);
  return out;
}

AgentCycleEnv::AgentCycleEnv(std::shared_ptr<FarmEnv> env) : env_(std::move(env)) {
  if (!env_) throw std::invalid_argument("AgentCycleEnv: null env");
}

void AgentCycleEnv::reset(std::uint64_t seed) {
  obs_ = env_->reset(seed);
  pending_.assign(env_->num_agents(), {});
  rewards_.assign(env_->num_agents(), 0.0);
  info_.clear();
  current_ = 0;
}

const std::vector<double>& AgentCycleEnv::observe(int agent) const {
  return obs_.at(static_cast<std::size_t>(agent));
}

void AgentCycleEnv::act(const std::vector<double>& action) {
  if (env_->terminated()) throw std::logic_error("AgentCycleEnv: episode terminated");
  pending_.at(static_cast<std::size_t>(current_)) = action;
  ++current_;
  if (current_ == env_->num_agents()) {
    EnvStepResult r = env_->step(pending_);
    obs_ = std::move(r.observations);
    rewards_ = std::move(r.rewards);
    info_ = std::move(r.info);
    current_ = 0;
  }
}

MadeEnv make_env(const std::string& env_id,
                 const std::map<std::string, std::string>& overrides) {
  MadeEnv made;
  made.id = parse_env_id(env_id);
  EnvConfig config;
  config.layout_id = made.id.layout_id;
  config.simulator = made.id.simulator;
  apply_overrides(config, overrides);
  made.agents = std::make_shared<FarmEnv>(config);
  if (!made.id.decentralized) made.centralized = std::make_shared<CentralizedEnv>(made.agents);
  return made;
}

// ---------------------------------------------------------------------------
// Feature scaling.

namespace {

double normalize_feature(double v, int index) {
  switch (index) {
    case 0: return v / 20.0;             // u
    case 1: return (v - 180.0) / 180.0;  // phi
    case 2: return v / 45.0;             // yaw
    case 3: return v / 30.0;             // pitch
    case 4: return (v - 0.6) / 0.4;      // torque
    case 5: return v / 45.0;             // yaw target
    case 6: return v / 30.0;             // pitch target
    case 7: return (v - 0.6) / 0.4;      // torque target
    default: throw std::logic_error("bad feature index");
  }
}

}  // namespace

std::vector<double> normalize_local_observation(const std::vector<double>& obs,
                                                SimulatorKind kind) {
  const int dim = kind == SimulatorKind::kStatic ? 4 : 8;
  if (static_cast<int>(obs.size()) != dim)
    throw std::invalid_argument("normalize_local_observation: wrong dimension");
  std::vector<double> out(obs.size());
  if (kind == SimulatorKind::kStatic) {
    // Static layout: u, phi, yaw, yaw target.
    const int map[4] = {0, 1, 2, 5};
    for (int i = 0; i < 4; ++i) out[i] = normalize_feature(obs[i], map[i]);
  } else {
    for (int i = 0; i < 8; ++i) out[i] = normalize_feature(obs[i], i);
  }
  return out;
}

std::vector<double> normalize_global_observation(const std::vector<double>& gobs,
                                                 int num_agents, SimulatorKind kind) {
  const int dim = kind == SimulatorKind::kStatic ? 4 : 8;
  if (static_cast<int>(gobs.size()) != num_agents * dim + 2)
    throw std::invalid_argument("normalize_global_observation: wrong dimension");
  std::vector<double> out;
  out.reserve(gobs.size());
  for (int a = 0; a < num_agents; ++a) {
    const std::vector<double> local(gobs.begin() + a * dim, gobs.begin() + (a + 1) * dim);
    const std::vector<double> n = normalize_local_observation(local, kind);
    out.insert(out.end(), n.begin(), n.end());
  }
  out.push_back(gobs[gobs.size() - 2] / 20.0);
  out.push_back((gobs[gobs.size() - 1] - 180.0) / 180.0);
  return out;
}

}  // namespace windlab
