#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "asyncps/context.hpp"
#include "asyncps/libsvm.hpp"

namespace asyncps {

// A barrier-control strategy: a pure function from STAT to the workers that
// may start a new task now.
struct ConsistencyModel {
  std::string name;
  std::map<std::string, double> params;
  std::function<std::vector<WorkerId>(const BarrierView&)> admit;

  std::vector<WorkerId> operator()(const BarrierView& view) const { return admit(view); }

  // e.g. "ssp:s=3"
  std::string spec() const {
    std::string out = name;
    char sep = ':';
    for (const auto& [k, v] : params) {
      out += sep;
      out += k + "=" + std::to_string(static_cast<long long>(v));
      sep = ',';
    }
    return out;
  }
};

// Every live worker is idle with its last result consumed, and nothing is queued.
inline ConsistencyModel bsp() {
  return {"bsp", {}, [](const BarrierView& view) -> std::vector<WorkerId> {
            if (view.queue_length != 0) return {};
            const auto avail = view.available();
            if (avail.empty() || avail.size() != view.alive_count()) return {};
            return avail;
          }};
}

inline ConsistencyModel asp() {
  return {"asp", {}, [](const BarrierView& view) { return view.available(); }};
}

// Bounded staleness. Each outstanding task (in flight or queued) can still
// land one update before any other task is consumed, so a task T may end up
// with staleness(T) + (outstanding - 1). Workers are admitted in id order
// while that worst case stays below s for every outstanding task, including
// the one being admitted.
inline ConsistencyModel ssp(std::int64_t s) {
  if (s < 1) throw std::invalid_argument("ssp: s must be >= 1");
  return {"ssp", {{"s", static_cast<double>(s)}}, [s](const BarrierView& view) {
            std::int64_t max_staleness = 0;
            std::int64_t outstanding = static_cast<std::int64_t>(view.queue_length);
            for (const auto& w : view.workers) {
              if (w.busy()) {
                ++outstanding;
                max_staleness = std::max(max_staleness, w.staleness);
              }
            }
            std::vector<WorkerId> out;
            for (WorkerId id : view.available()) {
              if (max_staleness + outstanding >= s) break;  // (outstanding + 1) - 1 would reach s
              out.push_back(id);
              ++outstanding;
            }
            return out;
          }};
}

// Throttled release: release every available worker once at least k are available.
inline ConsistencyModel throttled_release(std::size_t k) {
  if (k < 1) throw std::invalid_argument("throttled: k must be >= 1");
  return {"throttled", {{"k", static_cast<double>(k)}}, [k](const BarrierView& view) -> std::vector<WorkerId> {
            auto avail = view.available();
            if (avail.size() < k) return {};
            return avail;
          }};
}

// Name -> factory over named integer parameters.
class PolicyRegistry {
 public:
  using Params = std::map<std::string, double>;
  using Factory = std::function<ConsistencyModel(const Params&)>;

  static PolicyRegistry with_builtins() {
    PolicyRegistry r;
    r.add("bsp", [](const Params&) { return bsp(); });
    r.add("asp", [](const Params&) { return asp(); });
    r.add("ssp", [](const Params& p) { return ssp(static_cast<std::int64_t>(require(p, "s", "ssp"))); });
    r.add("throttled", [](const Params& p) {
      const double k = require(p, "k", "throttled");
      if (k < 1) throw std::invalid_argument("throttled: k must be >= 1");
      return throttled_release(static_cast<std::size_t>(k));
    });
    return r;
  }

  void add(std::string name, Factory f) { factories_[std::move(name)] = std::move(f); }

  bool contains(std::string_view name) const { return factories_.contains(std::string(name)); }

  std::vector<std::string> names() const {
    std::vector<std::string> out;
    for (const auto& [k, _] : factories_) out.push_back(k);
    return out;
  }

  // "name" or "name:key=value[,key=value...]"
  ConsistencyModel parse(std::string_view spec) const {
    const auto colon = spec.find(':');
    const std::string name(spec.substr(0, colon));
    const auto it = factories_.find(name);
    if (it == factories_.end()) throw std::invalid_argument("unknown barrier '" + name + "'");
    Params params;
    if (colon != std::string_view::npos) {
      std::string_view rest = spec.substr(colon + 1);
      while (!rest.empty()) {
        const auto comma = rest.find(',');
        const std::string_view kv = rest.substr(0, comma);
        const auto eq = kv.find('=');
        double value = 0.0;
        if (eq == std::string_view::npos || !detail::parse_number(kv.substr(eq + 1), value)) {
          throw std::invalid_argument("malformed barrier parameter '" + std::string(kv) + "'");
        }
        params[std::string(kv.substr(0, eq))] = value;
        if (comma == std::string_view::npos) break;
        rest.remove_prefix(comma + 1);
      }
    }
    return it->second(params);
  }

 private:
  static double require(const Params& p, const std::string& key, const char* who) {
    const auto it = p.find(key);
    if (it == p.end()) throw std::invalid_argument(std::string(who) + ": missing parameter '" + key + "'");
    return it->second;
  }

  std::map<std::string, Factory> factories_;
};

inline ConsistencyModel parse_barrier(std::string_view spec) {
  return PolicyRegistry::with_builtins().parse(spec);
}

}  // namespace asyncps
