#include "windlab/common.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace windlab {

double wrap_deg_360(double d) {
  double w = std::fmod(d, 360.0);
  if (w < 0.0) w += 360.0;
  if (w >= 360.0) w = 0.0;  // fmod rounding can land exactly on 360
  return w;
}

double wrap_deg_180(double d) {
  double w = std::fmod(d + 180.0, 360.0);
  if (w <= 0.0) w += 360.0;
  return w - 180.0;
}

double circular_mean_deg(const std::vector<double>& deg) {
  if (deg.empty()) throw std::invalid_argument("circular_mean_deg: empty input");
  double s = 0.0, c = 0.0;
  for (double d : deg) {
    s += std::sin(deg2rad(d));
    c += std::cos(deg2rad(d));
  }
  return wrap_deg_360(rad2deg(std::atan2(s, c)));
}

double Rng::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  // Box-Muller on two uniforms; guard against log(0).
  double u1 = uniform();
  while (u1 <= 0.0) u1 = uniform();
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  spare_ = r * std::sin(2.0 * kPi * u2);
  has_spare_ = true;
  return r * std::cos(2.0 * kPi * u2);
}

double Rng::weibull(double scale, double shape) {
  if (scale <= 0.0 || shape <= 0.0)
    throw std::invalid_argument("weibull: scale and shape must be positive");
  double u = uniform();
  while (u >= 1.0) u = uniform();  // uniform() < 1 by construction; belt and braces
  return scale * std::pow(-std::log1p(-u), 1.0 / shape);
}

std::uint64_t Rng::integer(std::uint64_t n) {
  if (n == 0) throw std::invalid_argument("integer: n must be positive");
  // Rejection sampling for an unbiased draw.
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
  std::uint64_t v = gen_();
  while (v >= limit) v = gen_();
  return v % n;
}

std::string fmt_double(double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  if (ec != std::errc()) throw std::runtime_error("fmt_double: to_chars failed");
  return std::string(buf, ptr);
}

double parse_double(const std::string& s) {
  if (s.empty()) throw std::invalid_argument("parse_double: empty field");
  const char* b = s.data();
  const char* e = s.data() + s.size();
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(b, e, v);
  if (ec != std::errc() || ptr != e)
    throw std::invalid_argument("parse_double: bad number '" + s + "'");
  return v;
}

namespace csv {

std::size_t Table::col(const std::string& name) const {
  for (std::size_t i = 0; i < header.size(); ++i)
    if (header[i] == name) return i;
  throw std::out_of_range("csv: no column named '" + name + "'");
}

static std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(ch);
    }
  }
  out.push_back(cur);
  return out;
}

Table read(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("csv: cannot open " + path);
  Table t;
  std::string line;
  bool have_header = false;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line[0] == '#') {
      std::size_t start = line.size() > 1 && line[1] == ' ' ? 2 : 1;
      t.comments.push_back(line.substr(start));
      continue;
    }
    if (!have_header) {
      t.header = split_line(line);
      have_header = true;
    } else {
      auto row = split_line(line);
      if (row.size() != t.header.size())
        throw std::runtime_error("csv: ragged row in " + path);
      t.rows.push_back(std::move(row));
    }
  }
  if (!have_header) throw std::runtime_error("csv: no header in " + path);
  return t;
}

std::string to_string(const Table& t) {
  std::ostringstream out;
  for (const auto& c : t.comments) out << "# " << c << "\n";
  for (std::size_t i = 0; i < t.header.size(); ++i)
    out << (i ? "," : "") << t.header[i];
  out << "\n";
  for (const auto& row : t.rows) {
    for (std::size_t i = 0; i < row.size(); ++i) out << (i ? "," : "") << row[i];
    out << "\n";
  }
  return out.str();
}

void write(const std::string& path, const Table& t) {
  write_file_atomic(path, to_string(t));
}

}  // namespace csv

void write_file_atomic(const std::string& path, const std::string& content) {
  namespace fs = std::filesystem;
  const fs::path target(path);
  if (target.has_parent_path()) fs::create_directories(target.parent_path());
  const fs::path tmp = target.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open " + tmp.string() + " for writing");
    out << content;
    if (!out) throw std::runtime_error("short write to " + tmp.string());
  }
  fs::rename(tmp, target);
}

}  // namespace windlab
