#pragma once

#include <algorithm>
#include <concepts>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <ranges>
#include <span>
#include <utility>
#include <vector>

#include "asyncps/dataset.hpp"
#include "asyncps/linalg.hpp"
#include "asyncps/result_queue.hpp"
#include "asyncps/stat_table.hpp"
#include "asyncps/version_store.hpp"

namespace asyncps {

// What a worker hands back: an aggregated gradient plus optional history term.
struct TaskPayload {
  DenseVector gradient;
  std::optional<DenseVector> history_gradient;
  std::vector<std::size_t> samples;  // global sample indices that contributed
  std::size_t batch_size = 0;
};

// Who computed a task, against which model, and when.
struct TaskHeader {
  WorkerId worker_id = 0;
  Version model_version = 0;
  double dispatch_time = 0.0;
  double submit_time = 0.0;
  std::shared_ptr<const DenseVector> model;  // parameters the task was computed against
};

struct TaskResult {
  DenseVector gradient;
  std::optional<DenseVector> history_gradient;
  std::vector<std::size_t> samples;
  WorkerId worker_id = 0;
  std::size_t batch_size = 0;
  Version model_version = 0;
  double dispatch_time = 0.0;
  double submit_time = 0.0;
  std::uint64_t seq = 0;         // arrival order, stamped by the queue
  std::int64_t staleness = 0;    // filled in at collection
  std::shared_ptr<const DenseVector> model;
};

struct Gradients {
  DenseVector gradient;
  std::optional<DenseVector> history_gradient;
};

using ResultQueue = MpscQueue<TaskResult>;

// Entry point shared by scheduler, workers and server: the result queue, the
// STAT table, and the versioned model store.
class AsyncContext {
 public:
  AsyncContext(std::size_t workers, DenseVector initial, std::size_t samples = 0)
      : stat_(workers), store_(std::make_shared<VersionStore>(std::move(initial), samples)) {}

  AsyncContext(const AsyncContext&) = delete;
  AsyncContext& operator=(const AsyncContext&) = delete;

  StatTable& stat() noexcept { return stat_; }
  const StatTable& stat() const noexcept { return stat_; }
  ResultQueue& queue() noexcept { return queue_; }
  const ResultQueue& queue() const noexcept { return queue_; }
  const std::shared_ptr<VersionStore>& store() const noexcept { return store_; }

  Version server_version() const noexcept { return store_->current_version(); }
  std::shared_ptr<const DenseVector> model() const { return store_->current(); }

  std::size_t workers() const noexcept { return stat_.size(); }

 private:
  StatTable stat_;
  ResultQueue queue_;
  std::shared_ptr<VersionStore> store_;
};

// Read-only view handed to barrier predicates.
struct BarrierView {
  std::vector<WorkerStatus> workers;
  std::size_t queue_length = 0;
  Version server_version = 0;

  std::size_t worker_count() const noexcept { return workers.size(); }

  std::vector<WorkerId> available() const {
    std::vector<WorkerId> out;
    for (const auto& s : workers) {
      if (s.dispatchable()) out.push_back(s.worker_id);
    }
    return out;
  }

  std::size_t available_count() const noexcept {
    return static_cast<std::size_t>(
        std::ranges::count_if(workers, [](const WorkerStatus& s) { return s.dispatchable(); }));
  }

  std::size_t alive_count() const noexcept {
    return static_cast<std::size_t>(std::ranges::count_if(workers, [](const WorkerStatus& s) { return !s.failed; }));
  }

  std::size_t busy_count() const noexcept {
    return static_cast<std::size_t>(std::ranges::count_if(workers, [](const WorkerStatus& s) { return s.busy(); }));
  }
};

inline BarrierView make_barrier_view(const AsyncContext& ctx) {
  return BarrierView{ctx.stat().snapshot(), ctx.queue().size(), ctx.server_version()};
}

// Applies `predicate` to the current STAT and returns the admitted workers,
// restricted to ones that can actually take a task, in ascending id order.
template <class Predicate>
  requires std::invocable<const Predicate&, const BarrierView&>
std::vector<WorkerId> async_barrier(const Predicate& predicate, const AsyncContext& ctx) {
  const BarrierView view = make_barrier_view(ctx);
  std::vector<WorkerId> admitted = predicate(view);
  std::ranges::sort(admitted);
  admitted.erase(std::unique(admitted.begin(), admitted.end()), admitted.end());
  std::erase_if(admitted, [&](WorkerId w) {
    return w < 0 || static_cast<std::size_t>(w) >= view.workers.size() || !view.workers[w].dispatchable();
  });
  return admitted;
}

// Enqueues a finished task and flips the worker back to available.
// A payload with batch_size 0 is not enqueued. Returns whether it was.
inline bool submit_task(AsyncContext& ctx, TaskPayload payload, const TaskHeader& header) {
  const bool enqueue = payload.batch_size > 0;
  if (enqueue) {
    TaskResult r;
    r.gradient = std::move(payload.gradient);
    r.history_gradient = std::move(payload.history_gradient);
    r.samples = std::move(payload.samples);
    r.worker_id = header.worker_id;
    r.batch_size = payload.batch_size;
    r.model_version = header.model_version;
    r.dispatch_time = header.dispatch_time;
    r.submit_time = header.submit_time;
    r.model = header.model;
    // Availability flips before the push so the server never sees a result
    // from a worker that still looks busy.
    ctx.stat().mark_submitted(header.worker_id, header.submit_time, true);
    ctx.queue().push(std::move(r));
  } else {
    ctx.stat().mark_submitted(header.worker_id, header.submit_time, false);
  }
  return enqueue;
}

// Folds a worker's partial gradients with `combine` and enqueues the single
// result without waiting for the server.
template <class Combine>
  requires std::invocable<Combine&, DenseVector, const DenseVector&>
bool async_reduce(std::span<const DenseVector> partials, Combine combine, AsyncContext& ctx,
                  const TaskHeader& header, std::size_t batch_size = 0) {
  TaskPayload payload;
  if (!partials.empty()) {
    DenseVector acc = partials.front();
    for (std::size_t i = 1; i < partials.size(); ++i) acc = combine(std::move(acc), partials[i]);
    payload.gradient = std::move(acc);
    payload.batch_size = batch_size == 0 ? partials.size() : batch_size;
  }
  return submit_task(ctx, std::move(payload), header);
}

template <class U>
concept TaskAccumulator = std::copy_constructible<U> && requires(const U& u) {
  { u.into_payload() } -> std::same_as<TaskPayload>;
};

// Per-partition fold with a neutral `zero`, partitions merged with `comb_op`.
// `partitions` is a range of element ranges.
template <TaskAccumulator U, std::ranges::input_range Parts, class SeqOp, class CombOp>
bool async_aggregate(const Parts& partitions, const U& zero, SeqOp seq_op, CombOp comb_op, AsyncContext& ctx,
                     const TaskHeader& header) {
  U total = zero;
  for (const auto& part : partitions) {
    U local = zero;
    for (const auto& elem : part) local = seq_op(std::move(local), elem);
    total = comb_op(std::move(total), std::move(local));
  }
  return submit_task(ctx, total.into_payload(), header);
}

// Standard accumulator for gradient tasks: sums sample gradients (and the
// history term when requested) and reports their means.
struct SampleFold {
  GradientSum gradient;
  std::optional<GradientSum> history;
  std::vector<std::size_t> samples;

  explicit SampleFold(std::size_t dim, bool with_history = false) : gradient(dim) {
    if (with_history) history.emplace(dim);
  }

  SampleFold& merge(const SampleFold& other) {
    gradient.sum += other.gradient.sum;
    gradient.count += other.gradient.count;
    if (history && other.history) {
      history->sum += other.history->sum;
      history->count += other.history->count;
    }
    samples.insert(samples.end(), other.samples.begin(), other.samples.end());
    return *this;
  }

  TaskPayload into_payload() const {
    TaskPayload p;
    p.batch_size = gradient.count;
    if (gradient.count == 0) return p;
    p.gradient = gradient.mean();
    if (history) p.history_gradient = history->mean();
    p.samples = samples;
    return p;
  }
};

inline bool has_next(const AsyncContext& ctx) { return !ctx.queue().empty(); }

// Oldest result plus its attributes; blocks while the queue is empty.
// nullopt signals end of stream (queue closed, or woken with nothing to return).
inline std::optional<TaskResult> async_collect_all(AsyncContext& ctx) {
  std::optional<TaskResult> r = ctx.queue().pop_wait();
  if (!r) return std::nullopt;
  r->staleness = static_cast<std::int64_t>(ctx.server_version() - r->model_version);
  ctx.stat().on_collect(r->worker_id, r->staleness, r->submit_time - r->dispatch_time);
  return r;
}

inline std::optional<Gradients> async_collect(AsyncContext& ctx) {
  auto r = async_collect_all(ctx);
  if (!r) return std::nullopt;
  return Gradients{std::move(r->gradient), std::move(r->history_gradient)};
}

// Publishes `w` as the next version and refreshes staleness of outstanding tasks.
inline DynamicBroadcast async_broadcast(DenseVector w, AsyncContext& ctx) {
  ensure_finite(w, "model update");
  DynamicBroadcast handle = async_broadcast(std::move(w), ctx.store());
  ctx.stat().on_server_update(handle.version());
  return handle;
}

inline Version server_update(AsyncContext& ctx, DenseVector w) {
  return async_broadcast(std::move(w), ctx).version();
}

}  // namespace asyncps
