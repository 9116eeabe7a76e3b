#include "windlab/wake.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace windlab {

void TurbineSpec::validate() const {
  if (!(rotor_diameter_m > 0.0)) throw std::invalid_argument("TurbineSpec: rotor_diameter_m <= 0");
  if (!(hub_height_m > 0.0)) throw std::invalid_argument("TurbineSpec: hub_height_m <= 0");
  if (!(rated_power_w > 0.0)) throw std::invalid_argument("TurbineSpec: rated_power_w <= 0");
  if (!(cp > 0.0 && cp < 16.0 / 27.0)) throw std::invalid_argument("TurbineSpec: cp outside (0, 16/27)");
  if (!(ct > 0.0 && ct < 1.0)) throw std::invalid_argument("TurbineSpec: ct outside (0, 1)");
}

void FreeStreamConditions::validate() const {
  if (!std::isfinite(u_inf) || u_inf < 0.0)
    throw std::domain_error("FreeStreamConditions: u_inf must be finite and >= 0");
  if (!std::isfinite(phi_inf))
    throw std::domain_error("FreeStreamConditions: phi_inf must be finite");
  if (!(ti_inf >= 0.0 && ti_inf < 1.0))
    throw std::domain_error("FreeStreamConditions: ti_inf outside [0, 1)");
}

void FarmLayout::validate() const {
  if (positions.empty()) throw std::invalid_argument("FarmLayout: empty layout");
  turbine.validate();
  const double min_spacing = turbine.rotor_diameter_m;
  for (std::size_t i = 0; i < positions.size(); ++i) {
    if (!std::isfinite(positions[i][0]) || !std::isfinite(positions[i][1]))
      throw std::invalid_argument("FarmLayout: non-finite coordinate");
    for (std::size_t j = i + 1; j < positions.size(); ++j) {
      const double dx = positions[i][0] - positions[j][0];
      const double dy = positions[i][1] - positions[j][1];
      if (std::hypot(dx, dy) < min_spacing)
        throw std::invalid_argument("FarmLayout '" + name +
                                    "': turbines closer than one rotor diameter");
    }
  }
}

WindFrame WindFrame::from_direction(double phi_inf_deg) {
  const double phi = deg2rad(phi_inf_deg);
  // Meteorological convention: phi is where the wind comes FROM, so the flow
  // vector points the opposite way.
  WindFrame f;
  f.dx = -std::sin(phi);
  f.dy = -std::cos(phi);
  f.cx = -f.dy;  // 90 deg counter-clockwise from the flow vector
  f.cy = f.dx;
  return f;
}

std::array<std::array<double, 2>, kRotorSamples> rotor_sample_offsets(double radius_m) {
  const double s = 0.49 * radius_m;
  const std::array<double, 3> stations = {-s, 0.0, s};
  std::array<std::array<double, 2>, kRotorSamples> out{};
  int j = 0;
  for (double lat : stations)
    for (double vert : stations) out[j++] = {lat, vert};
  return out;
}

double wake_expansion_rate(double ti_local) { return 0.38 * ti_local + 0.004; }

double wake_skew_angle(double yaw_deg, double ct) {
  const double g = deg2rad(yaw_deg);
  return 0.5 * ct * std::sin(g) * std::cos(g) * std::cos(g);
}

double jimenez_deflection(double x_m, double yaw_deg, double ct, double k,
                          double diameter_m) {
  if (x_m <= 0.0) return 0.0;
  const double xi0 = wake_skew_angle(yaw_deg, ct);
  if (xi0 == 0.0) return 0.0;
  // Closed-form integral of the Jimenez skew-angle decay
  // xi(x) = xi0 / (1 + 2 k x / D)^2, with the sign fixed so that
  // delta(x) -> +xi0 * x in the small-k*x limit.
  const double a = 1.0 + 2.0 * k * x_m / diameter_m;
  const double lead = xi0 * diameter_m / (30.0 * k);
  return lead * ((15.0 + xi0 * xi0) - (15.0 * a * a * a * a + xi0 * xi0) / (a * a * a * a * a));
}

double wake_added_ti(double ct, double ti_inf, double x_over_d) {
  if (x_over_d <= 0.0 || ct <= 0.0) return 0.0;
  const double a = (1.0 - std::sqrt(1.0 - ct)) / 2.0;
  return 0.73 * std::pow(a, 0.8325) * std::pow(ti_inf, 0.0325) *
         std::pow(x_over_d, -0.32);
}

double superpose(const std::vector<double>& deficits) {
  double ss = 0.0;
  for (double d : deficits) ss += d * d;
  return std::min(1.0, std::sqrt(ss));
}

double turbine_power(double rotor_effective_speed, double yaw_deg,
                     const TurbineSpec& spec, double cp_mult) {
  if (rotor_effective_speed <= 0.0) return 0.0;
  const double cosy = std::cos(deg2rad(yaw_deg));
  if (cosy <= 1e-12) return 0.0;  // |yaw| >= 90 deg extracts nothing
  const double p = 0.5 * kAirDensity * spec.rotor_area_m2() * spec.cp * cp_mult *
                   rotor_effective_speed * rotor_effective_speed * rotor_effective_speed *
                   std::pow(cosy, spec.cos_exponent_power);
  return std::min(spec.rated_power_w, p);
}

namespace {

// Single-wake effect at a point dx downwind / dy crosswind / dz above hub of
// the source rotor. `profile` is the bare Gaussian shape factor reused to
// radially weight the added turbulence.
struct SingleWake {
  double deficit = 0.0;
  double profile = 0.0;
  double xi0 = 0.0;
};

SingleWake eval_single_wake(const WakeSource& src, double dx, double dy, double dz,
                            const TurbineSpec& spec) {
  SingleWake out;
  if (dx <= 0.0) return out;
  const double d = spec.rotor_diameter_m;
  // The Gaussian model is invalid right behind the rotor; clamp.
  const double x = std::max(dx, 0.1 * d);
  const double gamma = deg2rad(src.yaw_deg);
  const double k = wake_expansion_rate(src.ti_source);
  // Widths stay at their initial value through the near wake, then grow
  // linearly (see kNearWakeLengthDiameters).
  const double growth = k * std::max(0.0, x - kNearWakeLengthDiameters * d);
  const double sigma_y = growth + d * std::cos(gamma) / std::sqrt(8.0);
  const double sigma_z = growth + d / std::sqrt(8.0);
  const double arg = 1.0 - src.ct_eff * std::cos(gamma) * d * d / (8.0 * sigma_y * sigma_z);
  const double centerline = 1.0 - std::sqrt(std::max(0.0, arg));
  const double delta = jimenez_deflection(x, src.yaw_deg, src.ct_eff, k, d) + src.extra_offset_m;
  const double ry = dy - delta;
  out.profile = std::exp(-ry * ry / (2.0 * sigma_y * sigma_y)) *
                std::exp(-dz * dz / (2.0 * sigma_z * sigma_z));
  out.deficit = centerline * out.profile;
  out.xi0 = wake_skew_angle(src.yaw_deg, src.ct_eff);
  return out;
}

}  // namespace

PointFlow sample_point_flow(const std::vector<WakeSource>& sources, double x_t,
                            double y_t, double dz, const TurbineSpec& spec,
                            const FreeStreamConditions& conditions) {
  PointFlow flow;
  double deficit_ss = 0.0;  // sum of squared single-wake deficits
  double ti_ss = 0.0;       // sum of squared added-TI contributions
  const double d = spec.rotor_diameter_m;
  for (const WakeSource& src : sources) {
    const double dx = x_t - src.x_t;
    if (dx <= 0.0) continue;
    const SingleWake wk = eval_single_wake(src, dx, y_t - src.y_t, dz, spec);
    deficit_ss += wk.deficit * wk.deficit;
    flow.v += wk.deficit * conditions.u_inf * std::sin(wk.xi0) / 2.0;
    const double ati =
        wake_added_ti(src.ct_eff, conditions.ti_inf, std::max(dx, 0.1 * d) / d) * wk.profile;
    ti_ss += ati * ati;
  }
  flow.deficit = std::min(1.0, std::sqrt(deficit_ss));
  flow.ti = std::sqrt(conditions.ti_inf * conditions.ti_inf + ti_ss);
  return flow;
}

TurbineFlowState evaluate_rotor(const std::vector<WakeSource>& sources, double x_t,
                                double y_t, double yaw_deg, const TurbineSpec& spec,
                                const FreeStreamConditions& conditions, double cp_mult) {
  TurbineFlowState st;
  st.yaw_deg = yaw_deg;
  const double gamma = deg2rad(yaw_deg);
  const auto offsets = rotor_sample_offsets(spec.radius_m());
  double deficit_sum = 0.0, ti_sum = 0.0;
  for (int j = 0; j < kRotorSamples; ++j) {
    // Rotor plane rotated by yaw: a lateral station s maps to
    // (-s sin(gamma), s cos(gamma)) in the wind frame.
    const double lat = offsets[j][0];
    const double px = x_t - lat * std::sin(gamma);
    const double py = y_t + lat * std::cos(gamma);
    const PointFlow flow = sample_point_flow(sources, px, py, offsets[j][1], spec, conditions);
    st.samples[j].u = conditions.u_inf * (1.0 - flow.deficit);
    st.samples[j].v = flow.v;
    st.samples[j].w = 0.0;
    st.samples[j].ti = flow.ti;
    deficit_sum += flow.deficit;
    ti_sum += flow.ti;
  }
  st.rotor_effective_speed = conditions.u_inf * (1.0 - deficit_sum / kRotorSamples);
  st.ti_local = ti_sum / kRotorSamples;
  st.power_w = turbine_power(st.rotor_effective_speed, yaw_deg, spec, cp_mult);
  return st;
}

SteadyFarmState solve_farm(const FarmLayout& layout, const std::vector<double>& yaws_deg,
                           const FreeStreamConditions& conditions) {
  layout.validate();
  conditions.validate();
  const int m = layout.count();
  if (static_cast<int>(yaws_deg.size()) != m)
    throw std::invalid_argument("solve_farm: yaw vector length != turbine count");
  for (double y : yaws_deg) {
    if (!std::isfinite(y) || std::abs(y) > layout.turbine.yaw_limit_deg)
      throw std::invalid_argument("solve_farm: yaw outside actuator envelope");
  }

  const WindFrame frame = WindFrame::from_direction(conditions.phi_inf);
  std::vector<std::array<double, 2>> wf(m);
  for (int i = 0; i < m; ++i)
    wf[i] = frame.project(layout.positions[i][0], layout.positions[i][1]);

  // Downwind processing order; ties broken by turbine index for determinism.
  std::vector<int> order(m);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return wf[a][0] < wf[b][0]; });

  SteadyFarmState state;
  state.conditions = conditions;
  state.turbines.resize(m);
  std::vector<WakeSource> sources;
  sources.reserve(m);
  for (int idx : order) {
    TurbineFlowState st = evaluate_rotor(sources, wf[idx][0], wf[idx][1], yaws_deg[idx],
                                         layout.turbine, conditions);
    sources.push_back(WakeSource{wf[idx][0], wf[idx][1], yaws_deg[idx],
                                 layout.turbine.ct, st.ti_local, 0.0});
    state.turbines[idx] = st;
  }
  return state;
}

namespace {

double population_std(const std::array<RotorSample, kRotorSamples>& samples,
                      double RotorSample::* field) {
  double mean = 0.0;
  for (const auto& s : samples) mean += s.*field;
  mean /= kRotorSamples;
  double var = 0.0;
  for (const auto& s : samples) {
    const double d = s.*field - mean;
    var += d * d;
  }
  return std::sqrt(var / kRotorSamples);
}

}  // namespace

double load_proxy_turbine(const TurbineFlowState& t) {
  double ti_sum = 0.0;
  for (const auto& s : t.samples) ti_sum += s.ti;
  return ti_sum + population_std(t.samples, &RotorSample::u) +
         population_std(t.samples, &RotorSample::v) +
         population_std(t.samples, &RotorSample::w);
}

double load_proxy_static(const SteadyFarmState& state) {
  if (state.turbines.empty()) return 0.0;
  double total = 0.0;
  for (const auto& t : state.turbines) total += load_proxy_turbine(t);
  return total / static_cast<double>(state.turbines.size());
}

}  // namespace windlab
