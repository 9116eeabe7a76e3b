#include "windlab/wind.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace windlab {

Scenario scenario_from_string(const std::string& s) {
  if (s == "I" || s == "1") return Scenario::I;
  if (s == "II" || s == "2") return Scenario::II;
  if (s == "III" || s == "3") return Scenario::III;
  throw std::invalid_argument("unknown scenario '" + s + "' (expected I, II or III)");
}

std::string to_string(Scenario s) {
  switch (s) {
    case Scenario::I: return "I";
    case Scenario::II: return "II";
    case Scenario::III: return "III";
  }
  throw std::logic_error("bad Scenario");
}

void WindSeries::validate() const {
  if (time_s.empty()) throw std::invalid_argument("WindSeries: empty");
  if (u_inf.size() != time_s.size() || phi_inf.size() != time_s.size())
    throw std::invalid_argument("WindSeries: ragged columns");
  for (std::size_t i = 0; i < time_s.size(); ++i) {
    if (!std::isfinite(time_s[i]) || !std::isfinite(u_inf[i]) || !std::isfinite(phi_inf[i]))
      throw std::invalid_argument("WindSeries: non-finite row");
    if (i > 0 && time_s[i] <= time_s[i - 1])
      throw std::invalid_argument("WindSeries: time not strictly increasing");
    if (u_inf[i] < 0.0) throw std::invalid_argument("WindSeries: negative wind speed");
  }
}

WindSeries load_wind_series(const std::string& path) {
  const csv::Table t = csv::read(path);
  const std::size_t ct = t.col("time_s"), cu = t.col("u_inf"), cp = t.col("phi_inf");
  WindSeries s;
  for (const auto& row : t.rows) {
    s.time_s.push_back(parse_double(row[ct]));
    s.u_inf.push_back(parse_double(row[cu]));
    s.phi_inf.push_back(parse_double(row[cp]));
  }
  s.validate();
  return s;
}

void save_wind_series(const std::string& path, const WindSeries& series) {
  series.validate();
  csv::Table t;
  t.header = {"time_s", "u_inf", "phi_inf"};
  for (std::size_t i = 0; i < series.rows(); ++i)
    t.rows.push_back({fmt_double(series.time_s[i]), fmt_double(series.u_inf[i]),
                      fmt_double(series.phi_inf[i])});
  csv::write(path, t);
}

WindSeries generate_synthetic_series(int days, std::uint64_t seed, double weibull_scale,
                                     double weibull_shape, double phi_mean,
                                     double phi_std) {
  if (days < 1) throw std::invalid_argument("generate_synthetic_series: days < 1");
  Rng rng(seed);
  WindSeries s;
  const int rows = days * 24 * 6;  // 10-minute cadence
  const double rho = 0.97;         // AR(1) memory ~ a few hours
  const double innov = std::sqrt(1.0 - rho * rho);
  double zu = rng.normal(), zp = rng.normal();
  for (int i = 0; i < rows; ++i) {
    if (i > 0) {
      zu = rho * zu + innov * rng.normal();
      zp = rho * zp + innov * rng.normal();
    }
    // Map the Gaussian state through its own CDF onto the Weibull marginal.
    const double q = 0.5 * std::erfc(-zu / std::sqrt(2.0));
    const double u = weibull_scale *
                     std::pow(-std::log1p(-std::min(q, 1.0 - 1e-12)), 1.0 / weibull_shape);
    s.time_s.push_back(600.0 * i);
    s.u_inf.push_back(u);
    s.phi_inf.push_back(wrap_deg_360(phi_mean + phi_std * zp));
  }
  s.validate();
  return s;
}

WindProcess::WindProcess(WindScenarioConfig config, double prevailing_u,
                         double prevailing_phi)
    : config_(std::move(config)) {
  if (std::isnan(config_.fixed_u)) config_.fixed_u = prevailing_u;
  if (std::isnan(config_.fixed_phi)) config_.fixed_phi = prevailing_phi;
  if (std::isnan(config_.phi_mean)) config_.phi_mean = prevailing_phi;
  if (config_.scenario == Scenario::III) {
    if (!config_.series) throw std::invalid_argument("Scenario III needs a wind series");
    config_.series->validate();
  }
  episode_u_ = config_.fixed_u;
  episode_phi_ = config_.fixed_phi;
}

void WindProcess::reset(Rng& rng) {
  switch (config_.scenario) {
    case Scenario::I:
      episode_u_ = config_.fixed_u;
      episode_phi_ = config_.fixed_phi;
      break;
    case Scenario::II:
      episode_u_ = rng.weibull(config_.weibull_scale, config_.weibull_shape);
      episode_phi_ = wrap_deg_360(rng.normal(config_.phi_mean, config_.phi_std));
      break;
    case Scenario::III: {
      const std::size_t n = config_.series->rows();
      // Uniform start row, bounded so a horizon of rows fits when possible.
      const std::size_t hi =
          n > static_cast<std::size_t>(config_.horizon) ? n - config_.horizon : 0;
      start_row_ = static_cast<std::size_t>(rng.integer(hi + 1));
      break;
    }
  }
}

FreeStreamConditions WindProcess::at(double t_episode_s) const {
  FreeStreamConditions c;
  c.ti_inf = config_.ti_inf;
  if (config_.scenario != Scenario::III) {
    c.u_inf = episode_u_;
    c.phi_inf = wrap_deg_360(episode_phi_);
    return c;
  }
  const WindSeries& s = *config_.series;
  const double t0 = s.time_s.front();
  // The last row is held for one trailing cadence interval before wrapping.
  const double cadence =
      s.rows() > 1 ? s.time_s.back() - s.time_s[s.rows() - 2] : 600.0;
  const double duration = s.time_s.back() - t0 + cadence;
  double t = s.time_s[start_row_] + t_episode_s;
  t = t0 + std::fmod(t - t0, duration);  // wrap past the end of the series
  auto it = std::upper_bound(s.time_s.begin(), s.time_s.end(), t);
  const std::size_t row = (it == s.time_s.begin()) ? 0 : (it - s.time_s.begin() - 1);
  c.u_inf = s.u_inf[row];
  c.phi_inf = wrap_deg_360(s.phi_inf[row]);
  return c;
}

}  // namespace windlab
