// Regenerates the shipped data files: named farm layouts (synthetic stand-in
// geometries), calibrated per-layout load constants for both simulators, and
// the synthetic wind series used by the time-series replay scenario.
//
// Usage: windlab_datagen <output data dir>

#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include "windlab/env.hpp"
#include "windlab/layouts.hpp"
#include "windlab/wind.hpp"

using namespace windlab;

namespace {

constexpr double kD = 126.0;

FarmLayout named(const std::string& name, std::vector<std::array<double, 2>> positions,
                 double prevailing_phi = 270.0, double prevailing_u = 8.0) {
  FarmLayout layout;
  layout.name = name;
  layout.positions = std::move(positions);
  layout.prevailing_u = prevailing_u;
  layout.prevailing_phi = prevailing_phi;
  layout.validate();
  return layout;
}

std::vector<std::array<double, 2>> grid(int rows, int cols, double dx, double dy,
                                        double shear_per_col = 0.0) {
  std::vector<std::array<double, 2>> p;
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c)
      p.push_back({c * dx, r * dy + c * shear_per_col});
  return p;
}

// Alternating full/staggered rows facing the prevailing wind (+x downwind).
std::vector<std::array<double, 2>> staggered_rows(const std::vector<int>& row_counts,
                                                  double dx, double dy) {
  std::vector<std::array<double, 2>> p;
  for (std::size_t r = 0; r < row_counts.size(); ++r) {
    const double offset = (r % 2 == 0) ? 0.0 : 0.5 * dy;
    for (int c = 0; c < row_counts[r]; ++c)
      p.push_back({static_cast<double>(r) * dx, offset + c * dy});
  }
  return p;
}

std::vector<FarmLayout> named_layouts() {
  std::vector<FarmLayout> all;
  all.push_back(named("Turb6_Row2", grid(3, 2, 4 * kD, 4 * kD)));
  all.push_back(named("Ablaincourt",
                      {{0, 0},
                       {450, 180},
                       {900, 330},
                       {1350, 450},
                       {1800, 540},
                       {2250, 600},
                       {2700, 630}},
                      255.0));
  all.push_back(named("Turb16_TCRWP", grid(4, 4, 4 * kD, 4 * kD)));
  all.push_back(named("Turb16_Row5", staggered_rows({4, 3, 3, 3, 3}, 4 * kD, 4 * kD)));
  all.push_back(named("Ormonde", staggered_rows({8, 8, 7, 7}, 560.0, 700.0)));
  all.push_back(named("Turb32_Row5", staggered_rows({7, 7, 6, 6, 6}, 4 * kD, 4 * kD)));
  all.push_back(named("WMR", grid(5, 7, 6 * kD, 6 * kD)));
  all.push_back(named("HornsRev1", grid(8, 10, 7 * kD, 7 * kD, 120.0)));
  // A fan: rows further downwind spread slightly wider.
  std::vector<std::array<double, 2>> hr2;
  for (int r = 0; r < 7; ++r)
    for (int c = 0; c < 13; ++c)
      hr2.push_back({r * 900.0, (c - 6) * (900.0 + 60.0 * r)});
  all.push_back(named("HornsRev2", hr2));
  return all;
}

void calibrate_and_save(FarmLayout layout, const std::filesystem::path& dir) {
  layout.c_load_static = calibrate_c_load(layout, SimulatorKind::kStatic);
  layout.c_load_dyn = calibrate_c_load(layout, SimulatorKind::kDynamic);
  const std::string path = (dir / (layout.name + ".layout")).string();
  save_layout_file(path, layout);
  std::printf("%-14s M=%-3d c_load_static=%.6g c_load_dyn=%.6g\n", layout.name.c_str(),
              layout.count(), layout.c_load_static, layout.c_load_dyn);
}

}  // namespace

int main(int argc, char** argv) {
  if (argc != 2) {
    std::fprintf(stderr, "usage: %s <output data dir>\n", argv[0]);
    return 2;
  }
  const std::filesystem::path out(argv[1]);
  std::filesystem::create_directories(out / "layouts");
  std::filesystem::create_directories(out / "wind");

  for (int m = 1; m <= 12; ++m) calibrate_and_save(make_row_layout(m), out / "layouts");
  for (FarmLayout& layout : named_layouts()) calibrate_and_save(std::move(layout), out / "layouts");

  const WindSeries series = generate_synthetic_series(/*days=*/92, /*seed=*/7);
  save_wind_series((out / "wind" / "synthetic_series.csv").string(), series);
  std::printf("wind series: %zu rows\n", series.rows());
  return 0;
}
