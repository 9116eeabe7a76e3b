#pragma once
// Static analytical wake engine: Gaussian velocity deficits with yaw-induced
// deflection, added wake turbulence, rotor-grid sampling, turbine power and the
// static turbulence-based load proxy.

#include <array>
#include <cstddef>
#include <string>
#include <vector>

#include "windlab/common.hpp"

namespace windlab {

struct TurbineSpec {
  double rotor_diameter_m = 126.0;
  double hub_height_m = 90.0;
  double rated_power_w = 5.0e6;
  double cp = 0.45;
  double ct = 0.8;
  double cos_exponent_power = 1.88;
  // Actuator envelopes (used by the dynamic engine and the env layer).
  double yaw_limit_deg = 45.0;
  double pitch_min_deg = 0.0;
  double pitch_max_deg = 30.0;
  double torque_min = 0.2;
  double torque_max = 1.0;

  double radius_m() const { return 0.5 * rotor_diameter_m; }
  double rotor_area_m2() const { return kPi * radius_m() * radius_m(); }
  void validate() const;  // throws std::invalid_argument on bad values
};

struct FreeStreamConditions {
  double u_inf = 8.0;       // m/s
  double phi_inf = 270.0;   // deg, meteorological (direction wind comes FROM)
  double ti_inf = 0.06;     // ambient turbulence intensity

  void validate() const;
};

struct FarmLayout {
  std::string name;
  std::vector<std::array<double, 2>> positions;  // (x_m, y_m)
  TurbineSpec turbine;
  // Per-layout defaults shipped with the registry data files.
  double prevailing_u = 8.0;
  double prevailing_phi = 270.0;
  double c_load_static = 0.0;  // 0 = not calibrated yet
  double c_load_dyn = 0.0;

  int count() const { return static_cast<int>(positions.size()); }
  void validate() const;  // M >= 1, pairwise spacing >= 1 diameter
};

// Orthonormal wind-aligned frame: x_t points downwind, y_t crosswind (90 deg
// counter-clockwise from the flow vector).
struct WindFrame {
  double dx, dy;  // downwind unit vector (east, north)
  double cx, cy;  // crosswind unit vector

  static WindFrame from_direction(double phi_inf_deg);
  std::array<double, 2> project(double x_m, double y_m) const {
    return {x_m * dx + y_m * dy, x_m * cx + y_m * cy};
  }
};

inline constexpr int kRotorSamples = 9;

// Rotor-plane sample offsets: (lateral, vertical) in {-0.49r, 0, +0.49r}^2,
// ordered lateral-major so samples {3b, 3b+1, 3b+2} share one lateral station —
// these triplets are the three blade sectors used by the dynamic load model.
std::array<std::array<double, 2>, kRotorSamples> rotor_sample_offsets(double radius_m);

struct RotorSample {
  double u = 0.0;   // streamwise sample speed, m/s
  double v = 0.0;   // lateral wake-perturbation component, m/s
  double w = 0.0;   // vertical component (no vertical model: always 0)
  double ti = 0.0;  // local turbulence intensity
};

struct TurbineFlowState {
  double yaw_deg = 0.0;  // relative to the local wind direction
  double rotor_effective_speed = 0.0;
  double power_w = 0.0;
  double ti_local = 0.0;  // mean sample TI
  std::array<RotorSample, kRotorSamples> samples{};
};

struct SteadyFarmState {
  FreeStreamConditions conditions;
  std::vector<TurbineFlowState> turbines;
};

// One upstream wake as seen by a query point, in wind-frame coordinates.
struct WakeSource {
  double x_t = 0.0;            // wind-frame downwind coordinate of the rotor
  double y_t = 0.0;            // wind-frame crosswind coordinate
  double yaw_deg = 0.0;        // relative to wind
  double ct_eff = 0.8;         // thrust coefficient after pitch/torque derating
  double ti_source = 0.06;     // local TI at the source rotor (sets expansion)
  double extra_offset_m = 0.0; // meander shift added to the deflection
};

// Linear wake expansion rate k = 0.38 TI + 0.004.
double wake_expansion_rate(double ti_local);

// Downwind distance before the Gaussian widths start growing linearly.
// Bare k*x growth from the rotor plane over-diffuses the wake and caps the
// steering gain on a 4D row at ~3.7%; a fixed 3D near-wake length (the usual
// Gaussian-model structure) restores the expected >= 10% oracle gain.
inline constexpr double kNearWakeLengthDiameters = 3.0;

// Jimenez wake-center deflection at downwind distance x for a source yawed by
// yaw_deg; sign follows the small-angle limit delta(x) -> +xi0*x.
double jimenez_deflection(double x_m, double yaw_deg, double ct, double k, double diameter_m);

// Initial wake skew angle xi0 = 0.5 Ct sin(gamma) cos^2(gamma), radians.
double wake_skew_angle(double yaw_deg, double ct);

// Crespo-Hernandez added turbulence at x downstream; 0 for x <= 0 or ct <= 0.
double wake_added_ti(double ct, double ti_inf, double x_over_d);

// Sum-of-squares freestream superposition, clamped to 1.
double superpose(const std::vector<double>& deficits);

// P = min(rated, 1/2 rho A Cp u^3 cos(gamma)^1.88); cp_mult derates Cp.
double turbine_power(double rotor_effective_speed, double yaw_deg,
                     const TurbineSpec& spec, double cp_mult = 1.0);

// Flow at one query point: superposed fractional deficit, lateral perturbation
// and combined turbulence intensity from every wake in `sources`.
struct PointFlow {
  double deficit = 0.0;
  double v = 0.0;
  double ti = 0.0;
};
PointFlow sample_point_flow(const std::vector<WakeSource>& sources, double x_t,
                            double y_t, double dz, const TurbineSpec& spec,
                            const FreeStreamConditions& conditions);

// Full rotor evaluation at a wind-frame position: 9-point sampling, effective
// speed, local TI and power. Shared by the static solver and the dynamic engine.
TurbineFlowState evaluate_rotor(const std::vector<WakeSource>& sources, double x_t,
                                double y_t, double yaw_deg, const TurbineSpec& spec,
                                const FreeStreamConditions& conditions,
                                double cp_mult = 1.0);

// Steady-state farm solve in downwind order.
SteadyFarmState solve_farm(const FarmLayout& layout, const std::vector<double>& yaws_deg,
                           const FreeStreamConditions& conditions);

// Turbulence-based static load penalty: mean over turbines of
// (sum of the 9 sample TIs + population std of u, v and w over the 9 samples).
double load_proxy_turbine(const TurbineFlowState& turbine);
double load_proxy_static(const SteadyFarmState& state);

}  // namespace windlab
