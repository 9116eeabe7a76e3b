#pragma once
// The cooperative multi-agent environment layer: local/global observations,
// bounded delta actions, duty-cycle gating of actuation time, production and
// load rewards, wind scenarios, and the parallel / agent-cycle / centralized
// step interfaces over either the steady-state solver or the dynamic engine.

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "windlab/cosim.hpp"
#include "windlab/dynsim.hpp"
#include "windlab/layouts.hpp"
#include "windlab/wake.hpp"
#include "windlab/wind.hpp"

namespace windlab {

enum class SimulatorKind { kStatic, kDynamic };
const char* to_string(SimulatorKind kind);

// Per-agent action bounds (deltas applied to the current targets).
inline constexpr double kMaxDeltaYawDeg = 5.0;
inline constexpr double kMaxDeltaPitchDeg = 1.0;
inline constexpr double kMaxDeltaTorqueFrac = 0.05;

struct EnvConfig {
  std::string layout_id = "Turb3_Row1";
  SimulatorKind simulator = SimulatorKind::kStatic;
  WindScenarioConfig wind;
  std::string series_path;  // Scenario III; empty = the shipped synthetic series
  int horizon = 0;          // 0 = scenario default: 150 for I/III, 2048 for II
  double beta = 0.99;       // episode discount (consumed by training/evaluation)
  double alpha = 1.0;       // load weight in r = r^P - alpha c_L r^L
  double c_load = 0.0;      // 0 = use the layout's calibrated constant
  double duty_cycle_cap = 0.10;
  double static_step_s = 60.0;  // wall-time of one static step (duty-cycle base)
  double dynamic_step_s = 3.0;
  int estimator_window = 20;

  int effective_horizon() const;
  double step_seconds() const { return simulator == SimulatorKind::kStatic ? static_step_s : dynamic_step_s; }
  void validate() const;
};

// Applies line-based key=value overrides (the config-file format). Unknown
// keys are an error, except the "bridge." namespace which belongs to the CLI.
void apply_overrides(EnvConfig& config, const std::map<std::string, std::string>& overrides);
std::map<std::string, std::string> parse_key_value_text(const std::string& text);
std::map<std::string, std::string> read_key_value_file(const std::string& path);

// Environment id: "[Dec_]<Layout>_<Static|Dynamic>". The "Dec_" prefix selects
// the per-agent (decentralized) interface; without it the id denotes the
// centralized interface over the concatenated action vector.
struct EnvId {
  bool decentralized = false;
  std::string layout_id;
  SimulatorKind simulator = SimulatorKind::kStatic;

  std::string str() const;
};
EnvId parse_env_id(const std::string& env_id);  // unknown id -> error listing valid ids
std::vector<std::string> registered_env_ids();  // decentralized and centralized forms

// ---------------------------------------------------------------------------
// Duty-cycle budget. Time spent actuating is |delta|/rate (the slowest
// actuator dominates); a request is admitted iff
//   used + required <= cap * max(elapsed + required, required / cap)
// i.e. the duty fraction stays within cap once the actuation interval itself
// is counted, and the first actuation of an episode is always admissible.
bool budget_accepts(double used_s, double elapsed_s, double required_s, double cap);

class ActuationBudget {
 public:
  ActuationBudget(int num_agents, double cap, double step_s);
  void reset();
  void begin_step() { elapsed_s_ += step_s_; }
  bool request(int agent, double required_s);  // accept -> commits the time
  double used_s(int agent) const { return used_s_[agent]; }
  double elapsed_s() const { return elapsed_s_; }
  double fraction(int agent) const;
  double cap() const { return cap_; }

 private:
  double cap_;
  double step_s_;
  double elapsed_s_ = 0.0;
  std::vector<double> used_s_;
};

// ---------------------------------------------------------------------------
// Rewards. Production reward r^P = (1/M) sum_i P_i[kW] / u_inf^3, zero below
// the 1 m/s low-wind guard; the combined reward subtracts the load penalty
// rescaled by the per-layout calibration constant c_L.
double reward_production(const std::vector<double>& powers_w, double u_inf);
double combined_reward(double r_production, double raw_load, double alpha, double c_load);

// Inputs handed to a reward shaper each step.
struct ShaperGlobal {
  double r_production = 0.0;
  double load_raw = 0.0;
  double alpha = 1.0;
  double c_load = 0.0;
  double power_total_w = 0.0;
  double u_inf = 0.0;
  double phi_inf = 0.0;
};
struct ShaperAgent {
  double power_w = 0.0;
  double load_raw = 0.0;  // this turbine's contribution to the raw penalty
  double yaw_deg = 0.0;
  bool budget_rejected = false;
};
using RewardShaper =
    std::function<std::vector<double>(const ShaperGlobal&, const std::vector<ShaperAgent>&)>;

// Default: every agent receives the common reward r^P - alpha c_L r^L.
std::vector<double> common_reward_shaper(const ShaperGlobal& global,
                                         const std::vector<ShaperAgent>& agents);

// One greedy-baseline episode at the layout's prevailing wind fixes c_L so
// that mean(c_L * r^L) = mean(r^P).
double calibrate_c_load(const FarmLayout& layout, SimulatorKind kind);

// ---------------------------------------------------------------------------
// The parallel (simultaneous-step) multi-agent environment.
//
// Observations are physical values, ordered
//   static  (4): u_i m/s, phi_i deg, yaw_i deg, target_yaw_i deg
//   dynamic (8): u_i, phi_i, yaw_i, pitch_i deg, torque_i frac,
//                target_yaw_i, target_pitch_i, target_torque_i
// Actions are per-agent deltas: [dyaw] (static) or [dyaw, dpitch, dtorque]
// (dynamic), clamped to the bounds above before gating.
struct EnvStepResult {
  std::vector<std::vector<double>> observations;
  std::vector<double> rewards;
  bool terminated = false;
  std::map<std::string, double> info;  // "power_total_w", "load_raw",
                                       // "budget_frac_agent_<i>", "budget_reject_agent_<i>"
};

class FarmEnv {
 public:
  explicit FarmEnv(EnvConfig config);
  // Dynamic environment over an already-running simulator session (e.g. a
  // bridged remote engine); the session must be freshly reset.
  FarmEnv(EnvConfig config, std::shared_ptr<SimulatorSession> session);

  std::vector<std::vector<double>> reset(std::uint64_t seed);
  EnvStepResult step(const std::vector<std::vector<double>>& actions);

  int num_agents() const { return layout_.count(); }
  int obs_dim() const { return kind_ == SimulatorKind::kStatic ? 4 : 8; }
  int action_dim() const { return kind_ == SimulatorKind::kStatic ? 1 : 3; }
  std::vector<double> action_low() const;
  std::vector<double> action_high() const;
  std::vector<double> global_observation() const;  // (o_1..o_M, u_inf, phi_inf)

  bool terminated() const { return terminated_; }
  int step_count() const { return steps_; }
  int horizon() const { return horizon_; }
  SimulatorKind simulator_kind() const { return kind_; }
  const FarmLayout& layout() const { return layout_; }
  const EnvConfig& config() const { return config_; }
  double c_load() const { return c_load_; }
  double dt_s() const { return config_.step_seconds(); }
  // Free-stream conditions as the environment sees them: ground truth on the
  // static env, the window-averaged estimate on dynamic envs.
  FreeStreamConditions current_wind() const { return wind_now_; }
  double budget_used_s(int agent) const { return budget_.used_s(agent); }
  double budget_elapsed_s() const { return budget_.elapsed_s(); }
  void set_reward_shaper(RewardShaper shaper);

 private:
  void require_active() const;
  void refresh_static_observations();
  void refresh_dynamic_observations();
  EnvStepResult finish_step(const std::vector<ShaperAgent>& agents,
                            const std::vector<double>& powers_w, double load_raw);

  EnvConfig config_;
  FarmLayout layout_;
  SimulatorKind kind_;
  int horizon_;
  double c_load_ = 0.0;
  RewardShaper shaper_;

  // Static engine.
  std::optional<WindProcess> wind_;
  std::vector<double> yaws_;
  SteadyFarmState static_state_;

  // Dynamic engine (owned or adopted).
  std::shared_ptr<SimulatorSession> session_;
  DynFarmSim* owned_sim_ = nullptr;
  FreeStreamEstimator estimator_;
  std::vector<ActuatorTriple> targets_;

  Rng rng_{0};
  ActuationBudget budget_;
  FreeStreamConditions wind_now_;
  int steps_ = 0;
  bool terminated_ = true;
  bool has_reset_ = false;
  std::vector<std::vector<double>> obs_;
};

// Centralized interface: one flat action vector (M * action_dim), the global
// observation, and the scalar common reward.
class CentralizedEnv {
 public:
  explicit CentralizedEnv(std::shared_ptr<FarmEnv> env);

  struct Result {
    std::vector<double> observation;
    double reward = 0.0;
    bool terminated = false;
    std::map<std::string, double> info;
  };

  std::vector<double> reset(std::uint64_t seed);
  Result step(const std::vector<double>& joint_action);
  int action_dim() const { return env_->num_agents() * env_->action_dim(); }
  int obs_dim() const { return env_->num_agents() * env_->obs_dim() + 2; }
  FarmEnv& inner() { return *env_; }

 private:
  std::shared_ptr<FarmEnv> env_;
};

// Agent-cycle interface: agents observe and act one at a time; the farm steps
// once the last agent has acted.
class AgentCycleEnv {
 public:
  explicit AgentCycleEnv(std::shared_ptr<FarmEnv> env);

  void reset(std::uint64_t seed);
  int current_agent() const { return current_; }
  const std::vector<double>& observe(int agent) const;
  void act(const std::vector<double>& action);  // advances the agent cursor
  const std::vector<double>& last_rewards() const { return rewards_; }
  const std::map<std::string, double>& last_info() const { return info_; }
  bool terminated() const { return env_->terminated(); }
  FarmEnv& inner() { return *env_; }

 private:
  std::shared_ptr<FarmEnv> env_;
  std::vector<std::vector<double>> obs_;
  std::vector<std::vector<double>> pending_;
  std::vector<double> rewards_;
  std::map<std::string, double> info_;
  int current_ = 0;
};

// Factory for environment ids. Centralized ids still expose the underlying
// per-agent environment through `agents`.
struct MadeEnv {
  EnvId id;
  std::shared_ptr<FarmEnv> agents;
  std::shared_ptr<CentralizedEnv> centralized;  // null for "Dec_" ids
};
MadeEnv make_env(const std::string& env_id,
                 const std::map<std::string, std::string>& overrides = {});

// Feature scaling shared by the learning stack: physical observations to
// roughly unit range. Layout-independent so policies transfer across farms.
std::vector<double> normalize_local_observation(const std::vector<double>& obs,
                                                SimulatorKind kind);
std::vector<double> normalize_global_observation(const std::vector<double>& gobs,
                                                 int num_agents, SimulatorKind kind);

}  // namespace windlab
