#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <functional>
#include <limits>
#include <map>
#include <mutex>
#include <optional>
#include <queue>
#include <random>
#include <stdexcept>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "asyncps/consistency.hpp"
#include "asyncps/context.hpp"
#include "asyncps/metrics.hpp"

namespace asyncps {

enum class ClockMode { virtual_clock, wall };

// Nothing is in flight, nothing is queued, and the barrier admits nobody.
class DeadlockError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Nominal task duration: virtual units under the virtual clock, seconds of
// emulated work under the wall clock.
struct TaskCost {
  double base = 1.0;
  double jitter = 0.0;  // duration *= 1 + jitter * U[0, 1)
  std::function<double(WorkerId, std::size_t)> custom;  // (worker, task ordinal) -> nominal

  double nominal(WorkerId w, std::size_t ordinal) const { return custom ? custom(w, ordinal) : base; }
};

struct EngineConfig {
  std::size_t workers = 1;
  ClockMode clock = ClockMode::virtual_clock;
  TaskCost cost;
  // Slowdown factor per worker (1 = nominal speed). Empty means all 1.
  std::vector<double> multipliers;
  // Wall clock: a straggler sleeps (c - 1) * nominal after each task; 0 uses the
  // task's own measured duration as nominal.
  double nominal_task_time = 0.0;
  std::uint64_t seed = 1;
  std::size_t max_updates = 1000;
  double max_time = std::numeric_limits<double>::infinity();
  // (worker, task ordinal): that task dies instead of returning a result.
  std::vector<std::pair<WorkerId, std::size_t>> failures;
};

struct UpdateEvent {
  Version version = 0;
  double time = 0.0;
  double wall_time = 0.0;
  std::size_t updates = 0;
  const DenseVector& model;
  const TaskResult& result;
};

struct UpdateVerdict {
  std::optional<double> objective_error;
  bool stop = false;
};

using UpdateObserver = std::function<UpdateVerdict(const UpdateEvent&)>;

enum class StopReason { max_updates, observer, max_time };

struct DispatchEvent {
  double time = 0.0;
  WorkerId worker = 0;
  Version version = 0;
  std::size_t available = 0;  // available workers just before this dispatch batch
};

struct SubmitEvent {
  double time = 0.0;
  WorkerId worker = 0;
  double duration = 0.0;
};

struct CollectEvent {
  double time = 0.0;
  WorkerId worker = 0;
  std::uint64_t seq = 0;
  Version model_version = 0;
  Version server_version = 0;
  std::int64_t staleness = 0;
};

struct RunReport {
  std::vector<MetricsRecord> records;  // update rows and wait rows, in event order
  std::vector<DispatchEvent> dispatches;
  std::vector<SubmitEvent> submissions;
  std::vector<CollectEvent> collects;
  DenseVector final_model;
  Version final_version = 0;
  std::size_t updates = 0;
  double end_time = 0.0;
  StopReason reason = StopReason::max_updates;
};

// Server-side step rule plus the worker-side task it needs.
//   prepare(worker, ctx)  server, at dispatch: snapshot what the task reads
//   compute(task) const   worker: must not touch shared mutable state
//   consume(result, ctx)  server: returns new parameters when the model moves
template <class A>
concept ServerAlgorithm = requires(A& a, const A& ca, WorkerId w, AsyncContext& ctx, const TaskResult& r,
                                   const typename A::Task& task) {
  { ca.initial_model() } -> std::convertible_to<DenseVector>;
  { ca.history_samples() } -> std::convertible_to<std::size_t>;
  { a.prepare(w, ctx) } -> std::same_as<typename A::Task>;
  { ca.compute(task) } -> std::same_as<TaskPayload>;
  { a.consume(r, ctx) } -> std::same_as<std::optional<DenseVector>>;
};

namespace detail {

template <ServerAlgorithm A>
class RunState {
 public:
  RunState(const EngineConfig& cfg, A& algo, const ConsistencyModel& barrier, const UpdateObserver& observer)
      : cfg_(cfg),
        algo_(algo),
        barrier_(barrier),
        observer_(observer),
        ctx_(cfg.workers, algo.initial_model(), algo.history_samples()),
        task_counts_(cfg.workers, 0),
        start_(std::chrono::steady_clock::now()) {
    if (cfg.workers == 0) throw std::invalid_argument("engine: need at least one worker");
    if (!cfg.multipliers.empty() && cfg.multipliers.size() != cfg.workers) {
      throw std::invalid_argument("engine: one multiplier per worker");
    }
    for (std::size_t w = 0; w < cfg.workers; ++w) jitter_rngs_.push_back(make_rng(cfg.seed, 0x4a495454ull + w));
    for (const auto& [w, ord] : cfg.failures) fail_at_[w].push_back(ord);
  }

 protected:
  double wall_now() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

  double multiplier(WorkerId w) const { return cfg_.multipliers.empty() ? 1.0 : cfg_.multipliers[w]; }

  bool scheduled_failure(WorkerId w, std::size_t ordinal) const {
    const auto it = fail_at_.find(w);
    if (it == fail_at_.end()) return false;
    for (std::size_t o : it->second) {
      if (o == ordinal) return true;
    }
    return false;
  }

  double draw_jitter(WorkerId w) {
    if (cfg_.cost.jitter <= 0.0) return 1.0;
    std::uniform_real_distribution<double> u(0.0, 1.0);
    return 1.0 + cfg_.cost.jitter * u(jitter_rngs_[w]);
  }

  struct Launch {
    WorkerId worker;
    std::size_t ordinal;
    typename A::Task task;
    TaskHeader header;
  };

  // Runs the barrier and hands every admitted worker a task through `launch`.
  template <class LaunchFn>
  std::size_t dispatch(double now, LaunchFn&& launch) {
    if (stopped_) return 0;
    const std::vector<WorkerId> admitted = async_barrier(barrier_, ctx_);
    if (admitted.empty()) return 0;
    const std::size_t available = ctx_.stat().available_count();
    const Version version = ctx_.server_version();
    for (WorkerId w : admitted) {
      const WorkerStatus st = ctx_.stat().status(w);
      if (st.last_submit_time) {
        report_.records.push_back(record_wait_time(w, *st.last_submit_time, now, version, wall_now()));
      }
      ctx_.stat().mark_dispatched(w, version, now);
      report_.dispatches.push_back({now, w, version, available});
      TaskHeader header{w, version, now, 0.0, ctx_.model()};
      launch(Launch{w, task_counts_[w]++, algo_.prepare(w, ctx_), std::move(header)});
      ++dispatched_;
    }
    return admitted.size();
  }

  void apply_update(DenseVector w, const TaskResult& last, double now) {
    const Version v = server_update(ctx_, std::move(w));
    ++updates_;
    MetricsRecord rec;
    rec.wall_time_s = wall_now();
    rec.virtual_time = now;
    rec.server_version = v;
    rec.worker_id = last.worker_id;
    rec.staleness = last.staleness;
    if (observer_) {
      const UpdateEvent ev{v, now, rec.wall_time_s, updates_, *ctx_.model(), last};
      const UpdateVerdict verdict = observer_(ev);
      rec.objective_error = verdict.objective_error;
      if (verdict.stop) stop(StopReason::observer);
    }
    report_.records.push_back(rec);
    if (updates_ >= cfg_.max_updates) stop(StopReason::max_updates);
  }

  void drain(double now) {
    while (!stopped_ && has_next(ctx_)) {
      std::optional<TaskResult> r = async_collect_all(ctx_);
      if (!r) break;
      ++collected_;
      report_.collects.push_back(
          {now, r->worker_id, r->seq, r->model_version, ctx_.server_version(), r->staleness});
      if (auto w = algo_.consume(*r, ctx_)) apply_update(std::move(*w), *r, now);
      last_result_ = std::move(*r);
    }
    check_failures(now);
  }

  void check_failures(double now) {
    const std::size_t alive = ctx_.stat().alive_count();
    if (alive == seen_alive_) return;
    seen_alive_ = alive;
    if constexpr (requires { algo_.on_failure(ctx_); }) {
      if (!stopped_) {
        if (auto w = algo_.on_failure(ctx_)) apply_update(std::move(*w), last_result_, now);
      }
    }
  }

  void stop(StopReason reason) {
    if (stopped_) return;
    stopped_ = true;
    report_.reason = reason;
  }

  [[noreturn]] void fail_stuck() const {
    if (ctx_.stat().alive_count() == 0) throw DeadlockError("all workers have failed");
    throw DeadlockError("barrier '" + barrier_.name + "' admits no worker while nothing is in flight");
  }

  RunReport finish(double now) {
    report_.final_model = *ctx_.model();
    report_.final_version = ctx_.server_version();
    report_.updates = updates_;
    report_.end_time = now;
    return std::move(report_);
  }

  const EngineConfig& cfg_;
  A& algo_;
  const ConsistencyModel& barrier_;
  const UpdateObserver& observer_;
  AsyncContext ctx_;
  RunReport report_;
  std::vector<std::size_t> task_counts_;
  std::vector<Rng> jitter_rngs_;
  std::map<WorkerId, std::vector<std::size_t>> fail_at_;
  std::chrono::steady_clock::time_point start_;
  TaskResult last_result_;
  std::size_t updates_ = 0;
  std::size_t dispatched_ = 0;
  std::size_t collected_ = 0;
  std::size_t seen_alive_ = std::numeric_limits<std::size_t>::max();
  bool stopped_ = false;
};

// Discrete-event execution. Tasks are computed at dispatch and complete at
// dispatch time + duration; completions sharing a timestamp are enqueued in
// worker-id order, the server drains the queue, then the scheduler runs.
// Server work takes zero virtual time.
template <ServerAlgorithm A>
class VirtualRun : RunState<A> {
  using Base = RunState<A>;

 public:
  using Base::Base;

  RunReport run() {
    seen_alive_ = ctx_.stat().alive_count();
    auto launch = [this](typename Base::Launch l) { start_task(std::move(l)); };
    this->dispatch(0.0, launch);
    double now = 0.0;
    while (!stopped_) {
      if (!has_next(ctx_)) {
        if (events_.empty()) this->fail_stuck();
        const double next = events_.top().finish;
        if (next > cfg_.max_time) {
          this->stop(StopReason::max_time);
          break;
        }
        now = next;
        while (!events_.empty() && events_.top().finish == now) {
          Pending ev = std::move(const_cast<Pending&>(events_.top()));
          events_.pop();
          complete(std::move(ev), now);
        }
      }
      this->drain(now);
      this->dispatch(now, launch);
    }
    return this->finish(now);
  }

 private:
  using Base::cfg_;
  using Base::ctx_;
  using Base::report_;
  using Base::seen_alive_;
  using Base::stopped_;

  struct Pending {
    double finish = 0.0;
    WorkerId worker = 0;
    bool fails = false;
    TaskPayload payload;
    TaskHeader header;
  };

  struct Later {
    bool operator()(const Pending& a, const Pending& b) const {
      if (a.finish != b.finish) return a.finish > b.finish;
      return a.worker > b.worker;
    }
  };

  void start_task(typename Base::Launch l) {
    Pending p;
    p.worker = l.worker;
    p.header = std::move(l.header);
    const double duration =
        cfg_.cost.nominal(l.worker, l.ordinal) * this->multiplier(l.worker) * this->draw_jitter(l.worker);
    p.finish = p.header.dispatch_time + duration;
    p.fails = this->scheduled_failure(l.worker, l.ordinal);
    if (!p.fails) {
      try {
        p.payload = this->algo_.compute(l.task);
      } catch (const NumericalError&) {
        throw;  // divergence ends the run rather than the worker
      } catch (const std::exception&) {
        p.fails = true;
      }
    }
    events_.push(std::move(p));
  }

  void complete(Pending ev, double now) {
    if (ev.fails) {
      ctx_.stat().mark_failed(ev.worker);
      return;
    }
    ev.header.submit_time = now;
    report_.submissions.push_back({now, ev.worker, now - ev.header.dispatch_time});
    submit_task(ctx_, std::move(ev.payload), ev.header);
  }

  std::priority_queue<Pending, std::vector<Pending>, Later> events_;
};

// Real threads, one per worker; delays are real sleeps.
template <ServerAlgorithm A>
class WallRun : RunState<A> {
  using Base = RunState<A>;

 public:
  using Base::Base;

  ~WallRun() { shutdown(); }

  RunReport run() {
    seen_alive_ = ctx_.stat().alive_count();
    mailboxes_ = std::vector<Mailbox>(cfg_.workers);
    for (std::size_t w = 0; w < cfg_.workers; ++w) {
      threads_.emplace_back([this, w] { worker_loop(static_cast<WorkerId>(w)); });
    }
    auto launch = [this](typename Base::Launch l) { post(std::move(l)); };
    try {
      this->dispatch(this->wall_now(), launch);
      while (!stopped_) {
        const std::uint64_t epoch = ctx_.queue().epoch();
        rethrow_fatal();
        if (!has_next(ctx_)) {
          const double now = this->wall_now();
          this->check_failures(now);
          if (stopped_) break;
          if (outstanding() == 0 && this->dispatch(now, launch) == 0 && !has_next(ctx_)) this->fail_stuck();
          if (now > cfg_.max_time) {
            this->stop(StopReason::max_time);
            break;
          }
          ctx_.queue().wait_activity_for(epoch, std::chrono::milliseconds(50));
          continue;
        }
        const double now = this->wall_now();
        this->drain(now);
        this->dispatch(this->wall_now(), launch);
      }
    } catch (...) {
      shutdown();
      throw;
    }
    shutdown();
    std::lock_guard lock(log_mu_);
    report_.submissions = std::move(submissions_);
    return this->finish(this->wall_now());
  }

 private:
  using Base::cfg_;
  using Base::ctx_;
  using Base::report_;
  using Base::seen_alive_;
  using Base::stopped_;

  struct Job {
    typename Base::Launch launch;
    bool fails = false;
    double jitter = 1.0;
  };

  struct Mailbox {
    std::mutex mu;
    std::condition_variable cv;
    std::optional<Job> job;
    bool stop = false;
  };

  std::size_t outstanding() const { return this->dispatched_ - this->collected_ - failed_.load(); }

  void rethrow_fatal() {
    std::lock_guard lock(log_mu_);
    if (fatal_) std::rethrow_exception(fatal_);
  }

  void post(typename Base::Launch l) {
    Job job{std::move(l), false, 1.0};
    job.fails = this->scheduled_failure(job.launch.worker, job.launch.ordinal);
    job.jitter = this->draw_jitter(job.launch.worker);
    Mailbox& box = mailboxes_[job.launch.worker];
    {
      std::lock_guard lock(box.mu);
      box.job = std::move(job);
    }
    box.cv.notify_one();
  }

  void worker_loop(WorkerId id) {
    Mailbox& box = mailboxes_[id];
    while (true) {
      Job job;
      {
        std::unique_lock lock(box.mu);
        box.cv.wait(lock, [&] { return box.stop || box.job.has_value(); });
        if (box.stop) return;
        job = std::move(*box.job);
        box.job.reset();
      }
      const auto begin = std::chrono::steady_clock::now();
      bool failed = job.fails;
      TaskPayload payload;
      if (!failed) {
        try {
          payload = this->algo_.compute(job.launch.task);
        } catch (const NumericalError&) {
          {
            std::lock_guard lock(log_mu_);
            if (!fatal_) fatal_ = std::current_exception();
          }
          ctx_.queue().poke();
          return;
        } catch (const std::exception&) {
          failed = true;
        }
      }
      const double work = cfg_.cost.nominal(id, job.launch.ordinal) * job.jitter;
      if (work > 0.0) std::this_thread::sleep_for(std::chrono::duration<double>(work));
      const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - begin).count();
      const double nominal = cfg_.nominal_task_time > 0.0 ? cfg_.nominal_task_time : elapsed;
      const double extra = (this->multiplier(id) - 1.0) * nominal;
      if (extra > 0.0) std::this_thread::sleep_for(std::chrono::duration<double>(extra));
      if (failed) {
        ctx_.stat().mark_failed(id);
        failed_.fetch_add(1);
        ctx_.queue().poke();
        return;
      }
      TaskHeader header = job.launch.header;
      header.submit_time = this->wall_now();
      {
        std::lock_guard lock(log_mu_);
        submissions_.push_back({header.submit_time, id, header.submit_time - header.dispatch_time});
      }
      submit_task(ctx_, std::move(payload), header);
    }
  }

  void shutdown() {
    for (auto& box : mailboxes_) {
      {
        std::lock_guard lock(box.mu);
        box.stop = true;
      }
      box.cv.notify_all();
    }
    threads_.clear();  // joins
  }

  std::vector<Mailbox> mailboxes_;
  std::vector<std::jthread> threads_;
  std::atomic<std::size_t> failed_{0};
  std::mutex log_mu_;
  std::vector<SubmitEvent> submissions_;
  std::exception_ptr fatal_;  // guarded by log_mu_
};

}  // namespace detail

// Runs the parameter-server loop until the update cap, the observer's stop
// signal, or the time limit. One update row per server update; one wait row
// per redispatch of a worker that had submitted before.
template <ServerAlgorithm A>
RunReport run(const EngineConfig& cfg, A& algo, const ConsistencyModel& barrier,
              const UpdateObserver& observer = {}) {
  if (cfg.clock == ClockMode::virtual_clock) {
    detail::VirtualRun<A> r(cfg, algo, barrier, observer);
    return r.run();
  }
  detail::WallRun<A> r(cfg, algo, barrier, observer);
  return r.run();
}

}  // namespace asyncps
