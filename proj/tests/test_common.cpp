#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "windlab/common.hpp"

using namespace windlab;

namespace {

// Two-sided Kolmogorov-Smirnov statistic of samples against an analytic CDF.
double ks_statistic(std::vector<double> samples, double (*cdf)(double)) {
  std::sort(samples.begin(), samples.end());
  const double n = static_cast<double>(samples.size());
  double d = 0.0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const double f = cdf(samples[i]);
    d = std::max(d, std::abs((i + 1) / n - f));
    d = std::max(d, std::abs(f - i / n));
  }
  return d;
}

double weibull_cdf_8_2(double x) { return 1.0 - std::exp(-std::pow(x / 8.0, 2.0)); }
double normal_cdf_0_1(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

}  // namespace

TEST_CASE("angle helpers") {
  CHECK(wrap_deg_360(0.0) == 0.0);
  CHECK(wrap_deg_360(360.0) == 0.0);
  CHECK(wrap_deg_360(-90.0) == doctest::Approx(270.0));
  CHECK(wrap_deg_360(725.0) == doctest::Approx(5.0));
  CHECK(wrap_deg_180(179.0) == doctest::Approx(179.0));
  CHECK(wrap_deg_180(181.0) == doctest::Approx(-179.0));
  CHECK(wrap_deg_180(-180.0) == doctest::Approx(180.0));
  // Circular mean straddling north.
  CHECK(circular_mean_deg({350.0, 10.0}) == doctest::Approx(0.0).epsilon(1e-9));
  CHECK(circular_mean_deg({90.0}) == doctest::Approx(90.0));
  CHECK_THROWS_AS(circular_mean_deg({}), std::invalid_argument);
}

TEST_CASE("rng determinism and spawn independence") {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) {
    CHECK(a.uniform() == b.uniform());
    CHECK(a.normal() == b.normal());
  }
  Rng c(42);
  Rng child = c.spawn();
  // Child stream must not replay the parent's sequence.
  Rng d(42);
  (void)d.spawn();
  CHECK(child.uniform() != d.uniform());
}

TEST_CASE("uniform range and integer bounds") {
  Rng rng(7);
  for (int i = 0; i < 10000; ++i) {
    const double u = rng.uniform();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
  }
  for (int i = 0; i < 1000; ++i) {
    const auto v = rng.integer(7);
    CHECK(v < 7);
  }
  CHECK_THROWS_AS(rng.integer(0), std::invalid_argument);
}

TEST_CASE("weibull sampler passes KS at the 1% level") {
  Rng rng(1234);
  std::vector<double> s(10000);
  for (auto& v : s) v = rng.weibull(8.0, 2.0);
  // 1% critical value for the two-sided KS test, large-n asymptotic.
  const double crit = 1.6276 / std::sqrt(10000.0);
  CHECK(ks_statistic(s, weibull_cdf_8_2) < crit);
}

TEST_CASE("box-muller normal passes KS at the 1% level") {
  Rng rng(99);
  std::vector<double> s(10000);
  for (auto& v : s) v = rng.normal();
  const double crit = 1.6276 / std::sqrt(10000.0);
  CHECK(ks_statistic(s, normal_cdf_0_1) < crit);
}

TEST_CASE("double formatting round-trips") {
  Rng rng(5);
  for (int i = 0; i < 1000; ++i) {
    const double v = (rng.uniform() - 0.5) * std::pow(10.0, rng.uniform(-10, 10));
    CHECK(parse_double(fmt_double(v)) == v);
  }
  CHECK(parse_double("1.5") == 1.5);
  CHECK_THROWS_AS(parse_double("1.5x"), std::invalid_argument);
  CHECK_THROWS_AS(parse_double(""), std::invalid_argument);
}

TEST_CASE("csv round-trip is lossless") {
  csv::Table t;
  t.comments = {"windlab 1.0.0", "demo table"};
  t.header = {"a", "b", "c"};
  t.rows = {{"1", "2.5", "x"}, {"-3", "0.125", "y"}};
  const auto path = std::filesystem::temp_directory_path() / "windlab_csv_test.csv";
  csv::write(path.string(), t);
  const csv::Table r = csv::read(path.string());
  CHECK(r.comments == t.comments);
  CHECK(r.header == t.header);
  CHECK(r.rows == t.rows);
  CHECK(csv::to_string(r) == csv::to_string(t));
  CHECK(r.col("b") == 1);
  CHECK_THROWS_AS(r.col("nope"), std::out_of_range);
  std::filesystem::remove(path);
}

TEST_CASE("atomic write leaves no temp file") {
  const auto dir = std::filesystem::temp_directory_path() / "windlab_atomic";
  const auto path = dir / "out.txt";
  write_file_atomic(path.string(), "hello\n");
  std::ifstream in(path);
  std::string s;
  std::getline(in, s);
  CHECK(s == "hello");
  CHECK_FALSE(std::filesystem::exists(path.string() + ".tmp"));
  std::filesystem::remove_all(dir);
}
