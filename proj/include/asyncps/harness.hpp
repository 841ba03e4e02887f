#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <limits>
#include <memory>
#include <numeric>
#include <optional>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "asyncps/algorithms.hpp"
#include "asyncps/consistency.hpp"
#include "asyncps/dataset.hpp"
#include "asyncps/delay.hpp"
#include "asyncps/engine.hpp"
#include "asyncps/libsvm.hpp"
#include "asyncps/metrics.hpp"
#include "asyncps/optimizers.hpp"
#include "asyncps/synth.hpp"

namespace asyncps {

struct ExperimentConfig {
  std::string data = "synth:4096,64,1";  // LIBSVM path or synth:n,d,seed[,noise]
  std::string algorithm = "asgd";
  std::string barrier = "asp";
  std::size_t workers = 8;
  std::size_t partitions = 32;
  double rate = 0.1;
  double step = 0.1;  // synchronous step; async algorithms use step / workers
  Schedule schedule = Schedule::inverse_sqrt;
  SagaMode saga_mode = SagaMode::canonical;
  std::size_t iterations = 1000;  // server update cap per repetition
  std::vector<std::uint64_t> seeds{1, 2, 3};
  std::uint64_t partition_seed = 7;
  ClockMode clock = ClockMode::virtual_clock;
  std::string delay = "none";
  TaskCost cost;
  double max_time = std::numeric_limits<double>::infinity();
  std::size_t eval_every = 10;
  std::optional<double> target;  // absolute error for time-to-target
  bool stop_at_target = false;
  std::size_t smoothing_window = 5;
  std::string out;
};

inline std::shared_ptr<const Dataset> load_dataset(std::string_view spec, std::size_t partitions,
                                                   std::uint64_t partition_seed) {
  if (spec.substr(0, 6) == "synth:") {
    SynthProblem p = make_synthetic(parse_synth_spec(spec));
    return std::make_shared<const Dataset>(partition(std::move(p.rows), p.d, partitions, partition_seed));
  }
  std::ifstream in{std::string(spec)};
  if (!in) throw std::runtime_error("cannot open dataset '" + std::string(spec) + "'");
  Dataset raw = parse_libsvm(in);
  return std::make_shared<const Dataset>(partition(raw.rows(), raw.d, partitions, partition_seed));
}

inline AlgorithmConfig algorithm_config(const ExperimentConfig& cfg, std::uint64_t seed) {
  AlgorithmConfig a;
  a.workers = cfg.workers;
  a.rate = cfg.rate;
  a.step = cfg.step;
  a.schedule = cfg.schedule;
  a.saga_mode = cfg.saga_mode;
  a.seed = seed;
  return a;
}

inline EngineConfig engine_config(const ExperimentConfig& cfg, const DelayModel& delay, std::uint64_t seed) {
  EngineConfig e;
  e.workers = cfg.workers;
  e.clock = cfg.clock;
  e.cost = cfg.cost;
  e.multipliers = delay.multipliers(cfg.workers);
  e.seed = seed;
  e.max_updates = cfg.iterations;
  e.max_time = cfg.max_time;
  return e;
}

inline constexpr std::size_t kCalibrationUpdates = 100;

// Mean task duration over the first 100 undelayed asynchronous updates.
inline double calibrate_iteration_time(const ExperimentConfig& cfg, std::shared_ptr<const Dataset> data) {
  const std::uint64_t seed = cfg.seeds.empty() ? 1 : cfg.seeds.front();
  EngineConfig e = engine_config(cfg, no_delay(cfg.workers), seed);
  e.max_updates = kCalibrationUpdates;
  e.max_time = std::numeric_limits<double>::infinity();
  const RunReport r = run_algorithm("asgd", std::move(data), asp(), algorithm_config(cfg, seed), e);
  if (r.submissions.empty()) throw std::runtime_error("calibration produced no tasks");
  double sum = 0.0;
  for (const auto& s : r.submissions) sum += s.duration;
  return sum / static_cast<double>(r.submissions.size());
}

struct Repetition {
  std::uint64_t seed = 0;
  RunReport report;
  std::vector<ErrorPoint> curve;
  std::optional<double> time_to_target;
  double mean_wait = 0.0;
};

struct ExperimentResult {
  ExperimentConfig config;
  DelayModel delay;
  double baseline = 0.0;
  double calibrated_task_time = 0.0;
  std::vector<Repetition> repetitions;
  std::vector<ErrorPoint> mean_curve;  // averaged pointwise by evaluation index

  // Mean over repetitions; nullopt if any repetition missed the target.
  std::optional<double> time_to_target() const {
    if (repetitions.empty()) return std::nullopt;
    double sum = 0.0;
    for (const auto& r : repetitions) {
      if (!r.time_to_target) return std::nullopt;
      sum += *r.time_to_target;
    }
    return sum / static_cast<double>(repetitions.size());
  }

  double mean_wait() const {
    if (repetitions.empty()) return 0.0;
    double sum = 0.0;
    for (const auto& r : repetitions) sum += r.mean_wait;
    return sum / static_cast<double>(repetitions.size());
  }

  double final_error() const { return mean_curve.empty() ? 0.0 : mean_curve.back().error; }
};

namespace detail {

inline std::vector<ErrorPoint> average_curves(const std::vector<Repetition>& reps) {
  std::vector<ErrorPoint> out;
  if (reps.empty()) return out;
  std::size_t len = reps.front().curve.size();
  for (const auto& r : reps) len = std::min(len, r.curve.size());
  for (std::size_t i = 0; i < len; ++i) {
    ErrorPoint p;
    for (const auto& r : reps) {
      p.time += r.curve[i].time;
      p.error += r.curve[i].error;
    }
    p.time /= static_cast<double>(reps.size());
    p.error /= static_cast<double>(reps.size());
    out.push_back(p);
  }
  return out;
}

}  // namespace detail

// Runs every seed of one (algorithm, barrier, delay) cell. Objective error is
// evaluated at the initial model and after every eval_every updates.
inline ExperimentResult run_experiment(const ExperimentConfig& cfg, std::shared_ptr<const Dataset> data,
                                       std::optional<double> baseline = std::nullopt) {
  if (!is_algorithm(cfg.algorithm)) throw std::invalid_argument("unknown algorithm '" + cfg.algorithm + "'");
  if (cfg.eval_every == 0) throw std::invalid_argument("eval_every must be >= 1");
  if (cfg.seeds.empty()) throw std::invalid_argument("need at least one seed");
  const ConsistencyModel barrier = parse_barrier(cfg.barrier);

  ExperimentResult result;
  result.config = cfg;
  result.delay = parse_delay(cfg.delay, cfg.workers);
  result.baseline = baseline ? *baseline : compute_baseline(*data, cfg.workers);
  if (cfg.clock == ClockMode::wall && result.delay.straggler_count() > 0) {
    result.calibrated_task_time = calibrate_iteration_time(cfg, data);
  }

  for (std::uint64_t seed : cfg.seeds) {
    Repetition rep;
    rep.seed = seed;
    const AlgorithmConfig acfg = algorithm_config(cfg, seed);
    EngineConfig ecfg = engine_config(cfg, result.delay, seed);
    ecfg.nominal_task_time = result.calibrated_task_time;

    const DenseVector w0 = acfg.initial ? *acfg.initial : DenseVector(data->d);
    const double err0 = objective(*data, w0, cfg.workers) - result.baseline;
    rep.curve.push_back({0.0, err0});
    std::vector<ErrorPoint>& curve = rep.curve;
    const bool wall = cfg.clock == ClockMode::wall;
    const UpdateObserver observer = [&](const UpdateEvent& ev) {
      UpdateVerdict v;
      if (ev.updates % cfg.eval_every != 0) return v;
      const double err = objective(*data, ev.model, cfg.workers) - result.baseline;
      v.objective_error = err;
      curve.push_back({wall ? ev.wall_time : ev.time, err});
      if (cfg.stop_at_target && cfg.target) {
        const std::size_t k = std::min(cfg.smoothing_window, curve.size());
        double s = 0.0;
        for (std::size_t i = curve.size() - k; i < curve.size(); ++i) s += curve[i].error;
        if (s / static_cast<double>(k) < *cfg.target) v.stop = true;
      }
      return v;
    };
    rep.report = run_algorithm(cfg.algorithm, data, barrier, acfg, ecfg, observer);

    MetricsRecord first;
    first.server_version = 0;
    first.objective_error = err0;
    rep.report.records.insert(rep.report.records.begin(), first);
    if (cfg.target) rep.time_to_target = asyncps::time_to_target(rep.curve, *cfg.target, cfg.smoothing_window);
    rep.mean_wait = mean_wait_time(rep.report.records);
    result.repetitions.push_back(std::move(rep));
  }
  result.mean_curve = detail::average_curves(result.repetitions);
  return result;
}

inline ExperimentResult run_experiment(const ExperimentConfig& cfg) {
  return run_experiment(cfg, load_dataset(cfg.data, cfg.partitions, cfg.partition_seed));
}

// sync time-to-target / async time-to-target
inline std::optional<double> speedup(const ExperimentResult& async_run, const ExperimentResult& sync_run) {
  const auto a = async_run.time_to_target();
  const auto s = sync_run.time_to_target();
  if (!a || !s || *a <= 0.0) return std::nullopt;
  return *s / *a;
}

inline constexpr std::string_view kSummaryHeader =
    "algorithm,barrier,delay,workers,repetitions,time_to_target,mean_wait,final_error,updates,speedup_vs_sync";

struct SummaryRow {
  const ExperimentResult* result = nullptr;
  std::optional<double> speedup;
};

inline void write_summary_csv(std::ostream& out, std::span<const SummaryRow> rows) {
  out << kSummaryHeader << '\n';
  for (const auto& row : rows) {
    const ExperimentResult& r = *row.result;
    std::size_t updates = 0;
    for (const auto& rep : r.repetitions) updates += rep.report.updates;
    out << r.config.algorithm << ',' << r.config.barrier << ',' << delay_spec(r.delay) << ',' << r.config.workers
        << ',' << r.repetitions.size() << ',';
    if (const auto t = r.time_to_target()) out << detail::format_float(*t);
    out << ',' << detail::format_float(r.mean_wait()) << ',' << detail::format_float(r.final_error()) << ','
        << (r.repetitions.empty() ? 0 : updates / r.repetitions.size()) << ',';
    if (row.speedup) out << detail::format_float(*row.speedup);
    out << '\n';
  }
}

// time,error columns of the averaged curve.
inline void write_curve_csv(std::ostream& out, std::span<const ErrorPoint> curve) {
  out << "time,error\n";
  for (const auto& p : curve) out << detail::format_float(p.time) << ',' << detail::format_float(p.error) << '\n';
}

}  // namespace asyncps
