#pragma once
// Shared plumbing: deterministic RNG, angle helpers, CSV io, small utilities.

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace windlab {

inline constexpr const char* kVersionStamp = "windlab 1.0.0";

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double kAirDensity = 1.225;  // kg/m^3

inline double deg2rad(double d) { return d * kPi / 180.0; }
inline double rad2deg(double r) { return r * 180.0 / kPi; }

// Wrap a compass angle into [0, 360).
double wrap_deg_360(double d);
// Wrap an angular difference into (-180, 180].
double wrap_deg_180(double d);
// Circular mean of compass angles, in [0, 360).
double circular_mean_deg(const std::vector<double>& deg);

// Deterministic random stream. All draws are built from raw mt19937_64 output
// (hand-rolled uniform/Box-Muller/inverse-CDF) so sequences are reproducible
// across platforms and standard-library versions.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  // Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Standard normal via Box-Muller (caches the second deviate).
  double normal();
  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  // Weibull via inverse CDF: scale * (-ln(1-U))^(1/shape).
  double weibull(double scale, double shape);

  // Uniform integer in [0, n).
  std::uint64_t integer(std::uint64_t n);

  // Derive an independent stream for a subcomponent.
  Rng spawn() { return Rng(gen_() ^ 0x9e3779b97f4a7c15ull); }

 private:
  std::mt19937_64 gen_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

// Shortest round-trip decimal form of a double (std::to_chars).
std::string fmt_double(double v);
// Strict double parse; throws std::invalid_argument on trailing garbage.
double parse_double(const std::string& s);

namespace csv {

// A parsed CSV file: leading '#' comment lines, one header row, data rows.
struct Table {
  std::vector<std::string> comments;  // without the leading "# "
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::size_t col(const std::string& name) const;  // throws if absent
};

Table read(const std::string& path);
void write(const std::string& path, const Table& table);
std::string to_string(const Table& table);

}  // namespace csv

// Write a file atomically (temp file + rename) so partial outputs never land.
void write_file_atomic(const std::string& path, const std::string& content);

}  // namespace windlab
