#pragma once
// Wind scenarios: fixed prevailing conditions (I), per-episode Weibull/Normal
// sampling (II), and time-series replay (III), plus the series file format.

#include <memory>
#include <string>
#include <vector>

#include "windlab/common.hpp"
#include "windlab/wake.hpp"

namespace windlab {

enum class Scenario { I = 1, II = 2, III = 3 };

Scenario scenario_from_string(const std::string& s);  // "I"/"II"/"III" (or 1/2/3)
std::string to_string(Scenario s);

// A wind time series: monotone times (s) with free-stream speed/direction rows.
struct WindSeries {
  std::vector<double> time_s;
  std::vector<double> u_inf;
  std::vector<double> phi_inf;

  std::size_t rows() const { return time_s.size(); }
  void validate() const;  // non-empty, monotone time, finite values
};

// File format: CSV with header "time_s,u_inf,phi_inf".
WindSeries load_wind_series(const std::string& path);
void save_wind_series(const std::string& path, const WindSeries& series);

// Seeded synthetic series: `days` of 10-minute rows; u follows a Weibull
// marginal and phi a Normal marginal around phi_mean, both driven by an AR(1)
// process so consecutive rows are correlated like real campaigns.
WindSeries generate_synthetic_series(int days, std::uint64_t seed,
                                     double weibull_scale = 8.0,
                                     double weibull_shape = 2.0,
                                     double phi_mean = 255.0, double phi_std = 5.0);

struct WindScenarioConfig {
  Scenario scenario = Scenario::I;
  double ti_inf = 0.06;
  // Scenario I (and forced evaluation conditions): fall back to the layout's
  // prevailing wind when NaN.
  double fixed_u = std::numeric_limits<double>::quiet_NaN();
  double fixed_phi = std::numeric_limits<double>::quiet_NaN();
  // Scenario II marginals; phi_mean NaN = layout prevailing direction.
  double weibull_scale = 8.0;
  double weibull_shape = 2.0;
  double phi_mean = std::numeric_limits<double>::quiet_NaN();
  double phi_std = 5.0;
  // Scenario III replay source and the episode length used to bound the
  // random start row.
  std::shared_ptr<const WindSeries> series;
  int horizon = 150;
};

// Per-episode wind provider. reset() consumes a fixed amount of randomness per
// scenario so trajectories are reproducible; at(t) is pure.
class WindProcess {
 public:
  WindProcess(WindScenarioConfig config, double prevailing_u, double prevailing_phi);

  void reset(Rng& rng);
  FreeStreamConditions at(double t_episode_s) const;
  Scenario scenario() const { return config_.scenario; }
  std::size_t start_row() const { return start_row_; }  // Scenario III

 private:
  WindScenarioConfig config_;
  double episode_u_ = 8.0;
  double episode_phi_ = 270.0;
  std::size_t start_row_ = 0;
};

}  // namespace windlab
