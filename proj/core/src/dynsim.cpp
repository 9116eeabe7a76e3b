#include "windlab/dynsim.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace windlab {

PitchTorqueEffect pitch_torque_effect(double pitch_deg, double torque_frac) {
  PitchTorqueEffect e;
  const TurbineSpec defaults{};
  double p = pitch_deg, q = torque_frac;
  if (p < defaults.pitch_min_deg || p > defaults.pitch_max_deg) {
    p = std::clamp(p, defaults.pitch_min_deg, defaults.pitch_max_deg);
    e.clamped = true;
  }
  if (q < defaults.torque_min || q > defaults.torque_max) {
    q = std::clamp(q, defaults.torque_min, defaults.torque_max);
    e.clamped = true;
  }
  const double c = std::cos(deg2rad(p));
  e.cp_mult = c * c * c * q;
  e.ct_mult = c * c * q;
  return e;
}

WakeHistoryBuffer::WakeHistoryBuffer(std::size_t capacity) : buf_(capacity) {
  if (capacity == 0) throw std::invalid_argument("WakeHistoryBuffer: zero capacity");
}

void WakeHistoryBuffer::push(const HistoryRecord& rec) {
  if (size_ > 0) {
    const std::size_t newest = (head_ + buf_.size() - 1) % buf_.size();
    if (rec.time_s <= buf_[newest].time_s)
      throw std::logic_error("WakeHistoryBuffer: time must be strictly increasing");
  }
  buf_[head_] = rec;
  head_ = (head_ + 1) % buf_.size();
  size_ = std::min(size_ + 1, buf_.size());
}

const HistoryRecord& WakeHistoryBuffer::nth_oldest(std::size_t n) const {
  const std::size_t oldest = (head_ + buf_.size() - size_) % buf_.size();
  return buf_[(oldest + n) % buf_.size()];
}

const HistoryRecord& WakeHistoryBuffer::at_or_before(double t) const {
  if (size_ == 0) throw std::logic_error("WakeHistoryBuffer: empty");
  // Binary search for the newest record with time <= t; clamp to the oldest.
  std::size_t lo = 0, hi = size_;  // half-open, counting from the oldest
  while (lo < hi) {
    const std::size_t mid = (lo + hi) / 2;
    if (nth_oldest(mid).time_s <= t)
      lo = mid + 1;
    else
      hi = mid;
  }
  return nth_oldest(lo == 0 ? 0 : lo - 1);
}

DynFarmSim::DynFarmSim(FarmLayout layout, WindScenarioConfig wind, DynSimConfig config)
    : layout_(std::move(layout)),
      wind_(std::move(wind), layout_.prevailing_u, layout_.prevailing_phi),
      config_(config) {
  layout_.validate();
  const int m = layout_.count();
  double max_dist = 1.0;
  for (int i = 0; i < m; ++i)
    for (int j = i + 1; j < m; ++j)
      max_dist = std::max(max_dist, std::hypot(layout_.positions[i][0] - layout_.positions[j][0],
                                               layout_.positions[i][1] - layout_.positions[j][1]));
  // Retain enough history for the slowest plausible advection (u_inf ~ 2 m/s);
  // older lookups clamp to the oldest record.
  const double u_floor = 2.0;
  const std::size_t cap = static_cast<std::size_t>(
      std::min(20000.0, std::ceil(max_dist / (config_.advection_factor * u_floor * config_.dt_s)) + 8));
  history_.assign(m, WakeHistoryBuffer(cap));
  actuators_.resize(m);
  targets_.resize(m);
  meander_.assign(static_cast<std::size_t>(m) * m, 0.0);
  states_.resize(m);
  measures_.resize(m);
}

void DynFarmSim::reset(std::uint64_t seed) {
  rng_ = Rng(seed);
  const int m = layout_.count();
  step_ = 0;
  t_ = 0.0;
  active_ = true;
  has_reset_ = true;
  wind_.reset(rng_);
  inflow_ = wind_.at(0.0);
  inflow_.validate();
  for (int i = 0; i < m; ++i) {
    actuators_[i] = ActuatorTriple{};
    targets_[i] = ActuatorTriple{};
    history_[i].clear();
  }
  std::fill(meander_.begin(), meander_.end(), 0.0);
  // Seed histories with the greedy steady state one step in the past so the
  // engine starts on the static solver's fixed point.
  solve_current(/*initial=*/true);
  emit_measures();
}

void DynFarmSim::apply_commands(const std::vector<TurbineCommand>& commands) {
  if (!has_reset_) throw std::logic_error("DynFarmSim: reset() before stepping");
  if (!active_) throw std::logic_error("DynFarmSim: session closed");
  const int m = layout_.count();
  if (static_cast<int>(commands.size()) != m)
    throw std::invalid_argument("DynFarmSim: command count != turbine count");
  const TurbineSpec& spec = layout_.turbine;
  for (int i = 0; i < m; ++i) {
    const TurbineCommand& c = commands[i];
    if (!std::isfinite(c.yaw_target_deg) || !std::isfinite(c.pitch_target_deg) ||
        !std::isfinite(c.torque_target_frac))
      throw std::domain_error("DynFarmSim: non-finite command");
    targets_[i].yaw_deg = std::clamp(c.yaw_target_deg, -spec.yaw_limit_deg, spec.yaw_limit_deg);
    targets_[i].pitch_deg = std::clamp(c.pitch_target_deg, spec.pitch_min_deg, spec.pitch_max_deg);
    targets_[i].torque_frac = std::clamp(c.torque_target_frac, spec.torque_min, spec.torque_max);
  }
  advance(config_.dt_s);
  ++step_;
}

void DynFarmSim::advance(double dt) {
  const int m = layout_.count();
  // Rate-limited actuator motion toward targets.
  const auto slew = [dt](double cur, double tgt, double rate) {
    return cur + std::clamp(tgt - cur, -rate * dt, rate * dt);
  };
  for (int i = 0; i < m; ++i) {
    actuators_[i].yaw_deg = slew(actuators_[i].yaw_deg, targets_[i].yaw_deg,
                                 config_.limits.yaw_rate_deg_s);
    actuators_[i].pitch_deg = slew(actuators_[i].pitch_deg, targets_[i].pitch_deg,
                                   config_.limits.pitch_rate_deg_s);
    actuators_[i].torque_frac = slew(actuators_[i].torque_frac, targets_[i].torque_frac,
                                     config_.limits.torque_rate_frac_s);
  }
  t_ += dt;
  inflow_ = wind_.at(t_);
  inflow_.validate();
  // Mean-reverting meander offsets; one draw per ordered pair each step keeps
  // randomness consumption independent of the control trajectory.
  const double decay = 1.0 - dt / config_.meander_tau_s;
  const double eta = config_.meander_eta_factor * inflow_.ti_inf * inflow_.u_inf;
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < m; ++j) {
      if (i == j) continue;
      double& mo = meander_[static_cast<std::size_t>(i) * m + j];
      mo = mo * decay + eta * std::sqrt(dt) * rng_.normal();
    }
  solve_current(/*initial=*/false);
  emit_measures();
}

void DynFarmSim::solve_current(bool initial) {
  const int m = layout_.count();
  const TurbineSpec& spec = layout_.turbine;
  const WindFrame frame = WindFrame::from_direction(inflow_.phi_inf);
  std::vector<std::array<double, 2>> wf(m);
  for (int i = 0; i < m; ++i)
    wf[i] = frame.project(layout_.positions[i][0], layout_.positions[i][1]);

  if (initial) {
    // Greedy steady solve in downwind order; its per-turbine state seeds every
    // history buffer at t = -dt so lagged lookups start self-consistent.
    std::vector<int> order(m);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return wf[a][0] < wf[b][0]; });
    std::vector<WakeSource> sources;
    sources.reserve(m);
    for (int idx : order) {
      const PitchTorqueEffect eff =
          pitch_torque_effect(actuators_[idx].pitch_deg, actuators_[idx].torque_frac);
      TurbineFlowState st = evaluate_rotor(sources, wf[idx][0], wf[idx][1],
                                           actuators_[idx].yaw_deg, spec, inflow_, eff.cp_mult);
      const double ct_eff = spec.ct * eff.ct_mult;
      sources.push_back(
          WakeSource{wf[idx][0], wf[idx][1], actuators_[idx].yaw_deg, ct_eff, st.ti_local, 0.0});
      states_[idx] = st;
      history_[idx].push(HistoryRecord{-config_.dt_s, actuators_[idx].yaw_deg,
                                       st.rotor_effective_speed, ct_eff, st.ti_local});
    }
  }

  // Evaluate every rotor against time-lagged upstream snapshots.
  std::vector<TurbineFlowState> next(m);
  const double adv = config_.advection_factor * std::max(inflow_.u_inf, 0.1);
  for (int j = 0; j < m; ++j) {
    std::vector<WakeSource> sources;
    sources.reserve(m - 1);
    for (int i = 0; i < m; ++i) {
      if (i == j || wf[i][0] >= wf[j][0]) continue;
      const double lag = (wf[j][0] - wf[i][0]) / adv;
      const HistoryRecord& rec = history_[i].at_or_before(t_ - lag);
      sources.push_back(WakeSource{wf[i][0], wf[i][1], rec.yaw_deg, rec.ct_eff, rec.ti_local,
                                   meander_[static_cast<std::size_t>(i) * m + j]});
    }
    const PitchTorqueEffect eff =
        pitch_torque_effect(actuators_[j].pitch_deg, actuators_[j].torque_frac);
    next[j] = evaluate_rotor(sources, wf[j][0], wf[j][1], actuators_[j].yaw_deg, spec,
                             inflow_, eff.cp_mult);
  }
  states_ = std::move(next);
  for (int j = 0; j < m; ++j) {
    const PitchTorqueEffect eff =
        pitch_torque_effect(actuators_[j].pitch_deg, actuators_[j].torque_frac);
    history_[j].push(HistoryRecord{t_, actuators_[j].yaw_deg,
                                   states_[j].rotor_effective_speed, spec.ct * eff.ct_mult,
                                   states_[j].ti_local});
  }
}

void DynFarmSim::emit_measures() {
  const int m = layout_.count();
  const TurbineSpec& spec = layout_.turbine;
  for (int i = 0; i < m; ++i) {
    const TurbineFlowState& st = states_[i];
    const PitchTorqueEffect eff =
        pitch_torque_effect(actuators_[i].pitch_deg, actuators_[i].torque_frac);
    TurbineMeasures ms;
    ms.wind_speed = st.rotor_effective_speed *
                    (1.0 + config_.noise_factor * st.ti_local * rng_.normal());
    ms.wind_dir = inflow_.phi_inf;
    ms.power_w = st.power_w;
    ms.yaw_deg = actuators_[i].yaw_deg;
    ms.pitch_deg = actuators_[i].pitch_deg;
    ms.torque_frac = actuators_[i].torque_frac;
    const BladeMoments bm = load_surrogate(st, spec.ct * eff.ct_mult, spec);
    ms.mop = bm.mop;
    ms.mip = bm.mip;
    measures_[i] = ms;
  }
}

BladeMoments load_surrogate(const TurbineFlowState& state, double ct_eff,
                            const TurbineSpec& spec) {
  BladeMoments bm;
  for (int b = 0; b < 3; ++b) {
    // Sector b = the three samples sharing lateral station b (see
    // rotor_sample_offsets ordering).
    const double u_b = (state.samples[3 * b].u + state.samples[3 * b + 1].u +
                        state.samples[3 * b + 2].u) / 3.0;
    const double thrust_b =
        0.5 * kAirDensity * spec.rotor_area_m2() * ct_eff * u_b * u_b / 3.0;
    bm.mop[b] = thrust_b * (2.0 / 3.0) * spec.radius_m();
    bm.mip[b] = 0.1 * bm.mop[b] * (1.0 + state.ti_local);
  }
  return bm;
}

double load_penalty_dynamic(const std::vector<TurbineMeasures>& measures) {
  if (measures.empty()) return 0.0;
  double total = 0.0;
  for (const auto& ms : measures) {
    for (double v : ms.mop) total += std::abs(v);
    for (double v : ms.mip) total += std::abs(v);
  }
  return total / static_cast<double>(measures.size());
}

}  // namespace windlab
