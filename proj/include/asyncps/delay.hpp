#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstddef>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "asyncps/dataset.hpp"
#include "asyncps/libsvm.hpp"
#include "asyncps/stat_table.hpp"

namespace asyncps {

enum class DelayKind { none, cds, pcs };

// Per-worker slowdown: a worker with multiplier c takes c times its nominal task time.
struct DelayModel {
  DelayKind kind = DelayKind::none;
  WorkerId cds_worker_id = 0;
  double cds_intensity = 0.0;
  std::uint64_t pcs_seed = 0;
  std::vector<double> per_worker_multiplier;

  double multiplier(WorkerId w) const {
    if (per_worker_multiplier.empty()) return 1.0;
    return per_worker_multiplier.at(static_cast<std::size_t>(w));
  }

  // Multipliers sized for m workers (all 1 when no delay is configured).
  std::vector<double> multipliers(std::size_t m) const {
    if (per_worker_multiplier.empty()) return std::vector<double>(m, 1.0);
    if (per_worker_multiplier.size() != m) {
      throw std::invalid_argument("delay model built for " + std::to_string(per_worker_multiplier.size()) +
                                  " workers, run has " + std::to_string(m));
    }
    return per_worker_multiplier;
  }

  std::size_t straggler_count() const {
    std::size_t n = 0;
    for (double c : per_worker_multiplier) n += c != 1.0;
    return n;
  }
};

inline DelayModel no_delay(std::size_t m = 0) {
  DelayModel d;
  if (m > 0) d.per_worker_multiplier.assign(m, 1.0);
  return d;
}

// One controlled straggler running at 1 / (1 + intensity) speed.
inline DelayModel apply_cds(std::size_t m, WorkerId worker, double intensity) {
  if (worker < 0 || static_cast<std::size_t>(worker) >= m) throw std::invalid_argument("cds: worker id out of range");
  if (!(intensity >= 0.0 && intensity <= 1.0)) throw std::invalid_argument("cds: intensity must be in [0, 1]");
  DelayModel d;
  d.kind = DelayKind::cds;
  d.cds_worker_id = worker;
  d.cds_intensity = intensity;
  d.per_worker_multiplier.assign(m, 1.0);
  d.per_worker_multiplier[static_cast<std::size_t>(worker)] = 1.0 + intensity;
  return d;
}

inline constexpr double kPcsFraction = 0.25;
inline constexpr double kPcsUniformShare = 0.8;
inline constexpr double kPcsUniformLo = 1.5;
inline constexpr double kPcsUniformHi = 2.5;
inline constexpr double kPcsTailHi = 10.0;

// Production-cluster stragglers: floor(m/4) slow workers chosen at random;
// most slowed by U[1.5, 2.5], the rest long-tail in (2.5, 10].
inline DelayModel generate_pcs(std::size_t m, std::uint64_t seed) {
  if (m < 4) throw std::invalid_argument("pcs: need at least 4 workers for one straggler");
  const auto count = static_cast<std::size_t>(std::floor(kPcsFraction * static_cast<double>(m)));
  const auto uniform = static_cast<std::size_t>(std::llround(kPcsUniformShare * static_cast<double>(count)));

  Rng rng = make_rng(seed, 0x504353ull);
  std::vector<std::size_t> ids(m);
  for (std::size_t i = 0; i < m; ++i) ids[i] = i;
  std::shuffle(ids.begin(), ids.end(), rng);

  DelayModel d;
  d.kind = DelayKind::pcs;
  d.pcs_seed = seed;
  d.per_worker_multiplier.assign(m, 1.0);
  std::uniform_real_distribution<double> mild(kPcsUniformLo, kPcsUniformHi);
  // (2.5, 10]: mirror a draw from [2.5, 10) around the interval.
  std::uniform_real_distribution<double> tail(kPcsUniformHi, kPcsTailHi);
  for (std::size_t i = 0; i < count; ++i) {
    d.per_worker_multiplier[ids[i]] = i < uniform ? mild(rng) : kPcsUniformHi + kPcsTailHi - tail(rng);
  }
  return d;
}

// "none" | "cds:w=<id>,i=<f>" | "pcs:seed=<u>"
inline DelayModel parse_delay(std::string_view spec, std::size_t m) {
  if (spec == "none" || spec.empty()) return no_delay(m);
  const auto colon = spec.find(':');
  const std::string_view kind = spec.substr(0, colon);
  double w = 0.0;
  double i = 0.0;
  double seed = 0.0;
  bool has_w = false, has_i = false, has_seed = false;
  if (colon != std::string_view::npos) {
    std::string_view rest = spec.substr(colon + 1);
    while (!rest.empty()) {
      const auto comma = rest.find(',');
      const std::string_view kv = rest.substr(0, comma);
      const auto eq = kv.find('=');
      if (eq == std::string_view::npos) throw std::invalid_argument("malformed delay parameter '" + std::string(kv) + "'");
      const std::string_view key = kv.substr(0, eq);
      double value = 0.0;
      if (!detail::parse_number(kv.substr(eq + 1), value)) {
        throw std::invalid_argument("malformed delay parameter '" + std::string(kv) + "'");
      }
      if (key == "w") {
        w = value;
        has_w = true;
      } else if (key == "i") {
        i = value;
        has_i = true;
      } else if (key == "seed") {
        seed = value;
        has_seed = true;
      } else {
        throw std::invalid_argument("unknown delay parameter '" + std::string(key) + "'");
      }
      if (comma == std::string_view::npos) break;
      rest.remove_prefix(comma + 1);
    }
  }
  if (kind == "cds") {
    if (!has_w || !has_i) throw std::invalid_argument("cds delay needs w=<id> and i=<intensity>");
    return apply_cds(m, static_cast<WorkerId>(w), i);
  }
  if (kind == "pcs") {
    if (!has_seed) throw std::invalid_argument("pcs delay needs seed=<u>");
    return generate_pcs(m, static_cast<std::uint64_t>(seed));
  }
  throw std::invalid_argument("unknown delay model '" + std::string(kind) + "'");
}

inline std::string delay_spec(const DelayModel& d) {
  switch (d.kind) {
    case DelayKind::cds: {
      char buf[64];
      std::snprintf(buf, sizeof buf, "cds:w=%d,i=%g", d.cds_worker_id, d.cds_intensity);
      return buf;
    }
    case DelayKind::pcs:
      return "pcs:seed=" + std::to_string(d.pcs_seed);
    case DelayKind::none:
      break;
  }
  return "none";
}

}  // namespace asyncps
