#pragma once

#include <algorithm>
#include <array>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "asyncps/consistency.hpp"
#include "asyncps/context.hpp"
#include "asyncps/dataset.hpp"
#include "asyncps/engine.hpp"
#include "asyncps/optimizers.hpp"

namespace asyncps {

struct AlgorithmConfig {
  std::size_t workers = 1;
  double rate = 0.1;
  double step = 0.1;  // synchronous step size; async variants divide by workers
  Schedule schedule = Schedule::inverse_sqrt;  // sgd / asgd only; saga steps are fixed
  SagaMode saga_mode = SagaMode::canonical;
  std::uint64_t seed = 1;
  std::optional<DenseVector> initial;  // zeros when unset
};

// Mini-batch drawn by one worker: local indices per owned partition.
struct Pick {
  std::size_t partition = 0;
  std::vector<std::size_t> local;
};

// Worker w owns partitions p with p % m == w and draws from each with its own stream.
class TaskSource {
 public:
  TaskSource(std::shared_ptr<const Dataset> data, std::size_t workers, double rate, std::uint64_t seed)
      : data_(std::move(data)), rate_(rate), owned_(workers) {
    if (!data_) throw std::invalid_argument("TaskSource: no dataset");
    if (workers == 0) throw std::invalid_argument("TaskSource: workers must be >= 1");
    if (data_->partition_count() < workers) {
      throw std::invalid_argument("TaskSource: " + std::to_string(data_->partition_count()) +
                                  " partitions cannot feed " + std::to_string(workers) + " workers");
    }
    if (!(rate > 0.0 && rate <= 1.0)) throw std::invalid_argument("TaskSource: rate must be in (0, 1]");
    for (std::size_t p = 0; p < data_->partition_count(); ++p) owned_[p % workers].push_back(p);
    for (std::size_t w = 0; w < workers; ++w) rngs_.push_back(make_rng(seed, 0x53414d50ull + w));
  }

  const Dataset& data() const noexcept { return *data_; }
  const std::shared_ptr<const Dataset>& shared_data() const noexcept { return data_; }
  std::size_t workers() const noexcept { return owned_.size(); }
  double rate() const noexcept { return rate_; }
  const std::vector<std::size_t>& owned(WorkerId w) const { return owned_.at(static_cast<std::size_t>(w)); }

  std::vector<Pick> sample(WorkerId w) {
    std::vector<Pick> picks;
    Rng& rng = rngs_.at(static_cast<std::size_t>(w));
    for (std::size_t p : owned(w)) picks.push_back({p, sample_minibatch(data_->partitions[p], rate_, rng)});
    return picks;
  }

 private:
  std::shared_ptr<const Dataset> data_;
  double rate_;
  std::vector<std::vector<std::size_t>> owned_;
  std::vector<Rng> rngs_;
};

// Everything a worker needs, resolved on the server at dispatch.
struct GradientTask {
  std::shared_ptr<const Dataset> data;
  std::shared_ptr<const DenseVector> w;
  std::vector<Pick> picks;
  // One entry per picked sample, in pick order; empty when no history is needed.
  std::vector<std::shared_ptr<const DenseVector>> history;
};

// Folds each picked partition separately and merges the partials.
inline TaskPayload compute_gradient_task(const GradientTask& task) {
  const bool with_history = !task.history.empty();
  const std::size_t dim = task.w->size();
  SampleFold total(dim, with_history);
  std::size_t h = 0;
  for (const Pick& pick : task.picks) {
    const DataPartition& part = task.data->partitions[pick.partition];
    SampleFold local(dim, with_history);
    for (std::size_t i : pick.local) {
      const SparseRow& row = part.rows[i];
      local.gradient.add(row, *task.w);
      if (with_history) local.history->add(row, *task.history.at(h++));
      local.samples.push_back(part.global_offsets[i]);
    }
    total.merge(local);
  }
  return total.into_payload();
}

namespace detail {

inline DenseVector initial_model(const AlgorithmConfig& cfg, const Dataset& ds) {
  if (!cfg.initial) return DenseVector(ds.d);
  if (cfg.initial->size() != ds.d) throw std::invalid_argument("initial model has the wrong dimension");
  return *cfg.initial;
}

// Batch-size-weighted mean over a round, taken in worker-id order.
inline DenseVector weighted_mean(const std::vector<TaskResult>& round, bool history) {
  DenseVector acc(round.front().gradient.size());
  double total = 0.0;
  for (const auto& r : round) {
    axpy(static_cast<double>(r.batch_size), history ? *r.history_gradient : r.gradient, acc);
    total += static_cast<double>(r.batch_size);
  }
  for (double& v : acc) v /= total;
  return acc;
}

// Sync algorithms gather one result per live worker before stepping.
class RoundBuffer {
 public:
  void add(TaskResult r) { results_.push_back(std::move(r)); }

  std::optional<std::vector<TaskResult>> take_if_complete(const AsyncContext& ctx) {
    if (results_.empty() || results_.size() < ctx.stat().alive_count()) return std::nullopt;
    std::ranges::sort(results_, [](const TaskResult& a, const TaskResult& b) {
      return a.worker_id != b.worker_id ? a.worker_id < b.worker_id : a.seq < b.seq;
    });
    return std::exchange(results_, {});
  }

 private:
  std::vector<TaskResult> results_;
};

}  // namespace detail

// Synchronous mini-batch SGD: one step per round on the mean gradient.
class SgdAlgorithm {
 public:
  using Task = GradientTask;

  SgdAlgorithm(std::shared_ptr<const Dataset> data, const AlgorithmConfig& cfg)
      : source_(std::move(data), cfg.workers, cfg.rate, cfg.seed),
        state_{detail::initial_model(cfg, source_.data()), 1, cfg.step, cfg.schedule} {}

  DenseVector initial_model() const { return state_.w; }
  std::size_t history_samples() const { return 0; }

  Task prepare(WorkerId w, AsyncContext& ctx) { return {source_.shared_data(), ctx.model(), source_.sample(w), {}}; }
  TaskPayload compute(const Task& t) const { return compute_gradient_task(t); }

  std::optional<DenseVector> consume(const TaskResult& r, AsyncContext& ctx) {
    buffer_.add(r);
    return step(ctx);
  }

  std::optional<DenseVector> on_failure(AsyncContext& ctx) { return step(ctx); }

  const SgdState& state() const noexcept { return state_; }

 private:
  std::optional<DenseVector> step(AsyncContext& ctx) {
    auto round = buffer_.take_if_complete(ctx);
    if (!round) return std::nullopt;
    sgd_step(state_, detail::weighted_mean(*round, false));
    return state_.w;
  }

  TaskSource source_;
  SgdState state_;
  detail::RoundBuffer buffer_;
};

// One SGD step per consumed result with step / m.
class AsgdAlgorithm {
 public:
  using Task = GradientTask;

  AsgdAlgorithm(std::shared_ptr<const Dataset> data, const AlgorithmConfig& cfg)
      : source_(std::move(data), cfg.workers, cfg.rate, cfg.seed),
        state_(detail::initial_model(cfg, source_.data()), cfg.step, cfg.schedule, cfg.workers) {}

  DenseVector initial_model() const { return state_.sgd.w; }
  std::size_t history_samples() const { return 0; }

  Task prepare(WorkerId w, AsyncContext& ctx) { return {source_.shared_data(), ctx.model(), source_.sample(w), {}}; }
  TaskPayload compute(const Task& t) const { return compute_gradient_task(t); }

  std::optional<DenseVector> consume(const TaskResult& r, AsyncContext&) {
    asgd_step(state_, r);
    return state_.sgd.w;
  }

  const AsgdState& state() const noexcept { return state_; }

 private:
  TaskSource source_;
  AsgdState state_;
};

namespace detail {

inline SagaState make_saga_state(const AlgorithmConfig& cfg, const Dataset& ds, double alpha) {
  SagaState s;
  s.w = initial_model(cfg, ds);
  s.alpha = alpha;
  s.n = ds.n;
  s.b = cfg.rate;
  s.P = ds.partition_count();
  s.mode = cfg.saga_mode;
  // Every sample's history starts at the initial model, so the canonical
  // average starts as the full gradient there.
  s.average_history = cfg.saga_mode == SagaMode::canonical ? full_gradient(ds, s.w) : DenseVector(ds.d);
  return s;
}

inline GradientTask history_task(const TaskSource& source, std::vector<Pick> picks, const AsyncContext& ctx) {
  GradientTask t{source.shared_data(), ctx.model(), std::move(picks), {}};
  const VersionStore& store = *ctx.store();
  for (const Pick& pick : t.picks) {
    const DataPartition& part = source.data().partitions[pick.partition];
    for (std::size_t i : pick.local) t.history.push_back(store.value_at(part.global_offsets[i]));
  }
  return t;
}

inline void touch_result(AsyncContext& ctx, const TaskResult& r) {
  ctx.store()->touch(r.samples, r.model_version, r.model);
}

}  // namespace detail

// Synchronous SAGA with history recovered from stored model versions.
class SagaAlgorithm {
 public:
  using Task = GradientTask;

  SagaAlgorithm(std::shared_ptr<const Dataset> data, const AlgorithmConfig& cfg)
      : source_(std::move(data), cfg.workers, cfg.rate, cfg.seed),
        state_(detail::make_saga_state(cfg, source_.data(), cfg.step)) {}

  DenseVector initial_model() const { return state_.w; }
  std::size_t history_samples() const { return source_.data().n; }

  Task prepare(WorkerId w, AsyncContext& ctx) { return detail::history_task(source_, source_.sample(w), ctx); }
  TaskPayload compute(const Task& t) const { return compute_gradient_task(t); }

  std::optional<DenseVector> consume(const TaskResult& r, AsyncContext& ctx) {
    buffer_.add(r);
    return step(ctx);
  }

  std::optional<DenseVector> on_failure(AsyncContext& ctx) { return step(ctx); }

  const SagaState& state() const noexcept { return state_; }

 private:
  std::optional<DenseVector> step(AsyncContext& ctx) {
    auto round = buffer_.take_if_complete(ctx);
    if (!round) return std::nullopt;
    std::size_t batch = 0;
    for (const auto& r : *round) batch += r.batch_size;
    saga_step(state_, detail::weighted_mean(*round, false), detail::weighted_mean(*round, true), batch);
    for (const auto& r : *round) detail::touch_result(ctx, r);
    return state_.w;
  }

  TaskSource source_;
  SagaState state_;
  detail::RoundBuffer buffer_;
};

// SAGA step per consumed result with step / m.
class AsagaAlgorithm {
 public:
  using Task = GradientTask;

  AsagaAlgorithm(std::shared_ptr<const Dataset> data, const AlgorithmConfig& cfg)
      : source_(std::move(data), cfg.workers, cfg.rate, cfg.seed),
        state_(detail::make_saga_state(cfg, source_.data(), async_step_size(cfg.step, cfg.workers))) {}

  DenseVector initial_model() const { return state_.w; }
  std::size_t history_samples() const { return source_.data().n; }

  Task prepare(WorkerId w, AsyncContext& ctx) { return detail::history_task(source_, source_.sample(w), ctx); }
  TaskPayload compute(const Task& t) const { return compute_gradient_task(t); }

  std::optional<DenseVector> consume(const TaskResult& r, AsyncContext& ctx) {
    asaga_step(state_, r);
    detail::touch_result(ctx, r);
    return state_.w;
  }

  const SagaState& state() const noexcept { return state_; }

 private:
  TaskSource source_;
  SagaState state_;
};

inline constexpr std::array<std::string_view, 4> kAlgorithms{"sgd", "asgd", "saga", "asaga"};

inline bool is_algorithm(std::string_view name) {
  return std::ranges::find(kAlgorithms, name) != kAlgorithms.end();
}

inline bool is_async_algorithm(std::string_view name) { return name == "asgd" || name == "asaga"; }

// asgd <-> sgd, asaga <-> saga
inline std::string_view sync_partner(std::string_view name) {
  if (name == "asgd") return "sgd";
  if (name == "asaga") return "saga";
  return name;
}

// Builds the named step rule and runs it on the engine.
inline RunReport run_algorithm(std::string_view name, std::shared_ptr<const Dataset> data,
                               const ConsistencyModel& barrier, const AlgorithmConfig& cfg,
                               const EngineConfig& engine, const UpdateObserver& observer = {}) {
  if (engine.workers != cfg.workers) throw std::invalid_argument("run_algorithm: worker counts disagree");
  if (name == "sgd") {
    SgdAlgorithm a(std::move(data), cfg);
    return run(engine, a, barrier, observer);
  }
  if (name == "asgd") {
    AsgdAlgorithm a(std::move(data), cfg);
    return run(engine, a, barrier, observer);
  }
  if (name == "saga") {
    SagaAlgorithm a(std::move(data), cfg);
    return run(engine, a, barrier, observer);
  }
  if (name == "asaga") {
    AsagaAlgorithm a(std::move(data), cfg);
    return run(engine, a, barrier, observer);
  }
  throw std::invalid_argument("unknown algorithm '" + std::string(name) + "'");
}

}  // namespace asyncps
