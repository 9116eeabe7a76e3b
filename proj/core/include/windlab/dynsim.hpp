#pragma once
// Reduced-order dynamic farm engine: the static wake formulas driven by
// time-lagged upstream states (advection delay), stochastic wake meandering,
// rate-limited actuators, pitch/torque derating, blade-sector load surrogates
// and noisy measurements. Also defines the simulator session interface the
// environment and the co-simulation bridge share.

#include <cstdint>
#include <memory>
#include <vector>

#include "windlab/common.hpp"
#include "windlab/wake.hpp"
#include "windlab/wind.hpp"

namespace windlab {

// The 12 per-turbine measures, in wire order.
struct TurbineMeasures {
  double wind_speed = 0.0;    // rotor-effective speed with measurement noise
  double wind_dir = 0.0;      // deg
  double power_w = 0.0;
  double yaw_deg = 0.0;
  double pitch_deg = 0.0;
  double torque_frac = 0.0;
  std::array<double, 3> mop{};  // out-of-plane blade moments, N*m
  std::array<double, 3> mip{};  // in-plane blade moments, N*m
};

// The 3 per-turbine control targets, in wire order.
struct TurbineCommand {
  double yaw_target_deg = 0.0;
  double pitch_target_deg = 0.0;
  double torque_target_frac = 1.0;
};

// One lock-step simulator episode: measures for step k are available, the
// environment replies with commands echoing k, and the simulator advances.
class SimulatorSession {
 public:
  virtual ~SimulatorSession() = default;
  virtual int num_turbines() const = 0;
  virtual std::uint64_t step_index() const = 0;
  virtual const std::vector<TurbineMeasures>& measures() const = 0;
  virtual void apply_commands(const std::vector<TurbineCommand>& commands) = 0;
  virtual bool active() const = 0;
  virtual void close() = 0;
};

// Pitch/torque derating multipliers: Cp_eff = Cp cos^3(pitch) torque_frac,
// Ct_eff = Ct cos^2(pitch) torque_frac. Inputs outside the actuator envelope
// are clamped and reported.
struct PitchTorqueEffect {
  double cp_mult = 1.0;
  double ct_mult = 1.0;
  bool clamped = false;
};
PitchTorqueEffect pitch_torque_effect(double pitch_deg, double torque_frac);

struct ActuatorLimits {
  double yaw_rate_deg_s = 0.3;
  double pitch_rate_deg_s = 8.0;
  double torque_rate_frac_s = 0.1;
};

struct ActuatorTriple {
  double yaw_deg = 0.0;
  double pitch_deg = 0.0;
  double torque_frac = 1.0;
};

// Upstream state snapshot consumed by downstream turbines after the advection
// delay. Alongside the (time, yaw, rotor speed, Ct_eff) fields the local TI
// is stored because the wake expansion rate depends on it.
struct HistoryRecord {
  double time_s = 0.0;
  double yaw_deg = 0.0;
  double rotor_effective_speed = 0.0;
  double ct_eff = 0.0;
  double ti_local = 0.06;
};

// Fixed-capacity ring of time-ordered records; lookups older than the oldest
// retained record return the oldest.
class WakeHistoryBuffer {
 public:
  explicit WakeHistoryBuffer(std::size_t capacity);
  void push(const HistoryRecord& rec);  // time must be strictly increasing
  const HistoryRecord& at_or_before(double t) const;
  std::size_t size() const { return size_; }
  void clear() { size_ = 0; head_ = 0; }

 private:
  const HistoryRecord& nth_oldest(std::size_t n) const;
  std::vector<HistoryRecord> buf_;
  std::size_t head_ = 0;  // next write slot
  std::size_t size_ = 0;
};

struct DynSimConfig {
  double dt_s = 3.0;
  double advection_factor = 0.8;  // wake travels at 0.8 u_inf
  double meander_tau_s = 60.0;
  double meander_eta_factor = 0.3;  // eta = factor * TI_inf * u_inf
  double noise_factor = 0.3;        // measured u = u (1 + factor TI N(0,1))
  ActuatorLimits limits;
};

// The dynamic engine. Construction wires a layout and wind scenario; reset()
// seeds an episode and produces the step-0 measures. Per step the generator
// consumes a fixed amount of randomness (meander + measurement noise), so
// paired runs with identical seeds stay aligned regardless of actions.
class DynFarmSim final : public SimulatorSession {
 public:
  DynFarmSim(FarmLayout layout, WindScenarioConfig wind, DynSimConfig config = {});

  void reset(std::uint64_t seed);

  int num_turbines() const override { return layout_.count(); }
  std::uint64_t step_index() const override { return step_; }
  const std::vector<TurbineMeasures>& measures() const override { return measures_; }
  void apply_commands(const std::vector<TurbineCommand>& commands) override;
  bool active() const override { return active_; }
  void close() override { active_ = false; }

  // Introspection for tests and the environment layer.
  double time_s() const { return t_; }
  double dt_s() const { return config_.dt_s; }
  const FarmLayout& layout() const { return layout_; }
  const FreeStreamConditions& inflow() const { return inflow_; }
  const std::vector<TurbineFlowState>& true_states() const { return states_; }
  const std::vector<ActuatorTriple>& actuators() const { return actuators_; }
  const std::vector<ActuatorTriple>& targets() const { return targets_; }

 private:
  void advance(double dt);
  void solve_current(bool initial);
  void emit_measures();

  FarmLayout layout_;
  WindProcess wind_;
  DynSimConfig config_;
  Rng rng_{0};
  bool has_reset_ = false;
  bool active_ = false;
  std::uint64_t step_ = 0;
  double t_ = 0.0;
  FreeStreamConditions inflow_;
  std::vector<ActuatorTriple> actuators_;
  std::vector<ActuatorTriple> targets_;
  std::vector<WakeHistoryBuffer> history_;
  std::vector<double> meander_;  // lateral offset per ordered pair, i*M + j
  std::vector<TurbineFlowState> states_;
  std::vector<TurbineMeasures> measures_;
};

// Blade-sector load surrogate for one turbine: sector b aggregates the three
// rotor samples sharing one lateral station; T_b = (1/2 rho A Ct_eff u_b^2)/3,
// Mop_b = T_b (2/3) r, Mip_b = 0.1 Mop_b (1 + TI_local).
struct BladeMoments {
  std::array<double, 3> mop{};
  std::array<double, 3> mip{};
};
BladeMoments load_surrogate(const TurbineFlowState& state, double ct_eff,
                            const TurbineSpec& spec);

// Eq.-5-style raw penalty: mean over turbines of (sum |Mop| + sum |Mip|).
double load_penalty_dynamic(const std::vector<TurbineMeasures>& measures);

}  // namespace windlab
