#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <istream>
#include <optional>
#include <ostream>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "asyncps/libsvm.hpp"
#include "asyncps/stat_table.hpp"
#include "asyncps/version_store.hpp"

namespace asyncps {

// One output row: either a server update (objective_error filled on
// evaluation points) or a worker wait-time observation.
struct MetricsRecord {
  double wall_time_s = 0.0;
  double virtual_time = 0.0;
  Version server_version = 0;
  std::optional<WorkerId> worker_id;
  std::optional<std::int64_t> staleness;
  std::optional<double> objective_error;
  std::optional<double> wait_time_s;

  bool is_wait() const noexcept { return wait_time_s.has_value(); }

  friend bool operator==(const MetricsRecord&, const MetricsRecord&) = default;
};

inline constexpr std::string_view kMetricsHeader =
    "wall_time_s,virtual_time,server_version,worker_id,staleness,objective_error,wait_time_s";

// Wait row: time from submitting a result until the next task arrives.
inline MetricsRecord record_wait_time(WorkerId worker, double submit_t, double redispatch_t,
                                      Version server_version = 0, double wall_time = 0.0) {
  if (redispatch_t < submit_t) throw std::invalid_argument("record_wait_time: redispatch precedes submission");
  MetricsRecord r;
  r.wall_time_s = wall_time;
  r.virtual_time = redispatch_t;
  r.server_version = server_version;
  r.worker_id = worker;
  r.wait_time_s = redispatch_t - submit_t;
  return r;
}

namespace detail {

inline std::string format_float(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

inline double parse_float_field(std::string_view s, std::size_t lineno) {
  std::string tmp(s);
  char* end = nullptr;
  const double v = std::strtod(tmp.c_str(), &end);
  if (end != tmp.c_str() + tmp.size() || tmp.empty()) throw ParseError(lineno, "bad number '" + tmp + "'");
  return v;
}

}  // namespace detail

inline void write_metrics_row(std::ostream& out, const MetricsRecord& r) {
  out << detail::format_float(r.wall_time_s) << ',' << detail::format_float(r.virtual_time) << ','
      << r.server_version << ',';
  if (r.worker_id) out << *r.worker_id;
  out << ',';
  if (r.staleness) out << *r.staleness;
  out << ',';
  if (r.objective_error) out << detail::format_float(*r.objective_error);
  out << ',';
  if (r.wait_time_s) out << detail::format_float(*r.wait_time_s);
  out << '\n';
}

inline void write_metrics_csv(std::ostream& out, std::span<const MetricsRecord> rows) {
  out << kMetricsHeader << '\n';
  for (const auto& r : rows) write_metrics_row(out, r);
}

inline std::vector<MetricsRecord> read_metrics_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != kMetricsHeader) throw ParseError(1, "missing metrics header");
  std::vector<MetricsRecord> rows;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string_view> f;
    std::string_view rest = line;
    while (true) {
      const auto c = rest.find(',');
      f.push_back(rest.substr(0, c));
      if (c == std::string_view::npos) break;
      rest.remove_prefix(c + 1);
    }
    if (f.size() != 7) throw ParseError(lineno, "expected 7 fields");
    MetricsRecord r;
    r.wall_time_s = detail::parse_float_field(f[0], lineno);
    r.virtual_time = detail::parse_float_field(f[1], lineno);
    if (!detail::parse_number(f[2], r.server_version)) throw ParseError(lineno, "bad server_version");
    if (!f[3].empty()) {
      WorkerId w = 0;
      if (!detail::parse_number(f[3], w)) throw ParseError(lineno, "bad worker_id");
      r.worker_id = w;
    }
    if (!f[4].empty()) {
      std::int64_t s = 0;
      if (!detail::parse_number(f[4], s)) throw ParseError(lineno, "bad staleness");
      r.staleness = s;
    }
    if (!f[5].empty()) r.objective_error = detail::parse_float_field(f[5], lineno);
    if (!f[6].empty()) r.wait_time_s = detail::parse_float_field(f[6], lineno);
    rows.push_back(r);
  }
  return rows;
}

struct ObjectivePoint {
  double time = 0.0;
  Version version = 0;
  double objective = 0.0;
};

struct ErrorPoint {
  double time = 0.0;
  double error = 0.0;
};

// objective - baseline at every evaluation point.
inline std::vector<ErrorPoint> error_curve(std::span<const ObjectivePoint> trace, double baseline) {
  std::vector<ErrorPoint> out;
  out.reserve(trace.size());
  for (const auto& p : trace) out.push_back({p.time, p.objective - baseline});
  return out;
}

// Error points recorded in a metrics stream (update rows carrying objective_error).
inline std::vector<ErrorPoint> error_curve(std::span<const MetricsRecord> rows, bool use_wall_time = false) {
  std::vector<ErrorPoint> out;
  for (const auto& r : rows) {
    if (r.objective_error && !r.is_wait()) {
      out.push_back({use_wall_time ? r.wall_time_s : r.virtual_time, *r.objective_error});
    }
  }
  return out;
}

// Trailing moving average over `window` points (fewer at the start).
inline std::vector<ErrorPoint> smooth(std::span<const ErrorPoint> curve, std::size_t window) {
  if (window == 0) throw std::invalid_argument("smooth: window must be >= 1");
  std::vector<ErrorPoint> out;
  out.reserve(curve.size());
  for (std::size_t i = 0; i < curve.size(); ++i) {
    const std::size_t first = i + 1 >= window ? i + 1 - window : 0;
    double sum = 0.0;
    for (std::size_t j = first; j <= i; ++j) sum += curve[j].error;
    out.push_back({curve[i].time, sum / static_cast<double>(i + 1 - first)});
  }
  return out;
}

// First time the smoothed error drops below `target`.
inline std::optional<double> time_to_target(std::span<const ErrorPoint> curve, double target,
                                            std::size_t window = 5) {
  for (const auto& p : smooth(curve, window)) {
    if (p.error < target) return p.time;
  }
  return std::nullopt;
}

inline double mean_wait_time(std::span<const MetricsRecord> rows) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& r : rows) {
    if (r.wait_time_s) {
      sum += *r.wait_time_s;
      ++n;
    }
  }
  return n == 0 ? 0.0 : sum / static_cast<double>(n);
}

}  // namespace asyncps
