#pragma once

#include <cstddef>
#include <cstdint>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <vector>

#include "asyncps/version_store.hpp"

namespace asyncps {

using WorkerId = int;

// Weight of the newest sample in the average-task-time EMA.
inline constexpr double kTaskTimeSmoothing = 0.3;

struct WorkerStatus {
  WorkerId worker_id = 0;
  bool available = true;
  bool failed = false;
  // Updates applied since this worker's parameters were broadcast, while its
  // task is outstanding; the consumed value after collection; 0 once redispatched.
  std::int64_t staleness = 0;
  double avg_task_time = 0.0;
  std::size_t task_time_samples = 0;
  Version last_dispatch_version = 0;
  double last_dispatch_time = 0.0;
  std::optional<double> last_submit_time;
  std::size_t pending_results = 0;  // submitted, not yet consumed
  std::size_t dispatches = 0;

  bool busy() const noexcept { return !available && !failed; }
  bool outstanding() const noexcept { return busy() || pending_results > 0; }
  bool dispatchable() const noexcept { return available && !failed && pending_results == 0; }
};

// Per-worker bookkeeping shared between the scheduler, the server and the workers.
class StatTable {
 public:
  explicit StatTable(std::size_t workers) : rows_(workers) {
    if (workers == 0) throw std::invalid_argument("StatTable: need at least one worker");
    for (std::size_t i = 0; i < workers; ++i) rows_[i].worker_id = static_cast<WorkerId>(i);
  }

  std::size_t size() const noexcept { return rows_.size(); }

  std::vector<WorkerStatus> snapshot() const {
    std::lock_guard lock(mu_);
    return rows_;
  }

  WorkerStatus status(WorkerId w) const {
    std::lock_guard lock(mu_);
    return rows_.at(index(w));
  }

  void mark_dispatched(WorkerId w, Version version, double time) {
    std::lock_guard lock(mu_);
    auto& s = rows_.at(index(w));
    if (!s.dispatchable()) throw std::logic_error("dispatch of a worker that is not available");
    s.available = false;
    s.staleness = 0;
    s.last_dispatch_version = version;
    s.last_dispatch_time = time;
    ++s.dispatches;
  }

  void mark_submitted(WorkerId w, double time, bool enqueued) {
    std::lock_guard lock(mu_);
    auto& s = rows_.at(index(w));
    s.available = true;
    s.last_submit_time = time;
    if (enqueued) ++s.pending_results;
  }

  void mark_failed(WorkerId w) {
    std::lock_guard lock(mu_);
    auto& s = rows_.at(index(w));
    s.failed = true;
    s.available = false;
  }

  void on_collect(WorkerId w, std::int64_t staleness, double task_time) {
    std::lock_guard lock(mu_);
    auto& s = rows_.at(index(w));
    if (s.pending_results > 0) --s.pending_results;
    s.staleness = staleness;
    s.avg_task_time = s.task_time_samples == 0
                          ? task_time
                          : kTaskTimeSmoothing * task_time + (1.0 - kTaskTimeSmoothing) * s.avg_task_time;
    ++s.task_time_samples;
  }

  void on_server_update(Version current) {
    std::lock_guard lock(mu_);
    for (auto& s : rows_) {
      if (s.outstanding()) s.staleness = static_cast<std::int64_t>(current - s.last_dispatch_version);
    }
  }

  std::size_t available_count() const {
    std::lock_guard lock(mu_);
    std::size_t c = 0;
    for (const auto& s : rows_) c += s.dispatchable();
    return c;
  }

  std::size_t alive_count() const {
    std::lock_guard lock(mu_);
    std::size_t c = 0;
    for (const auto& s : rows_) c += !s.failed;
    return c;
  }

 private:
  std::size_t index(WorkerId w) const {
    if (w < 0 || static_cast<std::size_t>(w) >= rows_.size()) throw std::out_of_range("unknown worker id");
    return static_cast<std::size_t>(w);
  }

  mutable std::mutex mu_;
  std::vector<WorkerStatus> rows_;
};

}  // namespace asyncps
