// Acceptance run: one PASS/FAIL line per criterion.
// Exit status is 0 once every check has run; pass --strict to exit 1 on any FAIL.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <functional>
#include <limits>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "asyncps/asyncps.hpp"
#include "oracles.hpp"

using namespace asyncps;

namespace {

// Pinned tolerances and budgets.
constexpr double kGradRelTol = 1e-6;
constexpr double kSerialTol = 1e-12;
constexpr double kHistoryTol = 1e-10;
constexpr double kSagaTarget = 1e-6;
constexpr std::size_t kSagaBudget = 5000;
constexpr double kCdsSpeedup = 1.5;
constexpr double kCdsSpread = 0.15;
constexpr double kPcsSpeedup = 2.0;
constexpr double kWaitSpread = 0.20;
constexpr double kBspWaitGrowth = 1.5;

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Criterion {
  int id;
  const char* name;
  double budget_s;
  std::function<Outcome()> check;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double spread(const std::vector<double>& v) {
  const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
  return *lo > 0.0 ? (*hi - *lo) / *lo : (*hi > 0.0 ? INFINITY : 0.0);
}

std::string join(const std::vector<double>& v) {
  std::ostringstream o;
  for (std::size_t i = 0; i < v.size(); ++i) o << (i ? " / " : "") << fmt("%.4g", v[i]);
  return o.str();
}

std::shared_ptr<const Dataset> synth(std::string spec, std::size_t parts) { return load_dataset(spec, parts, 7); }

std::vector<DenseVector> iterates(std::string_view name, std::shared_ptr<const Dataset> data,
                                  const ConsistencyModel& barrier, const AlgorithmConfig& a, std::size_t updates,
                                  std::size_t every) {
  EngineConfig e;
  e.workers = a.workers;
  e.max_updates = updates;
  e.seed = a.seed;
  std::vector<DenseVector> out;
  run_algorithm(name, std::move(data), barrier, a, e, [&](const UpdateEvent& ev) {
    if (ev.updates % every == 0) out.push_back(ev.model);
    return UpdateVerdict{};
  });
  return out;
}

Outcome gradient_correctness() {
  std::mt19937_64 rng(2024);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::bernoulli_distribution keep(0.6);
  const std::size_t d = 20;
  double worst = 0.0;
  for (int t = 0; t < 100; ++t) {
    SparseRow row;
    for (std::size_t j = 0; j < d; ++j) {
      if (keep(rng)) {
        row.indices.push_back(j);
        row.values.push_back(gauss(rng));
      }
    }
    row.label = gauss(rng);
    DenseVector w(d);
    for (double& x : w) x = gauss(rng);
    const DenseVector g = sample_gradient(row, w);
    const oracle::Vec fd = oracle::fd_gradient(row, oracle::to_vec(w), 1e-5);
    double num = 0.0, den = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      num += (g[j] - fd[j]) * (g[j] - fd[j]);
      den += fd[j] * fd[j];
    }
    worst = std::max(worst, den > 0.0 ? std::sqrt(num / den) : std::sqrt(num));
  }
  return {worst < kGradRelTol, fmt("max relative error %.3g over 100 pairs", worst)};
}

Outcome serial_equivalence() {
  const auto data = synth("synth:1024,32,1,0.5", 8);
  const std::size_t rounds = 500;
  double worst = 0.0;
  bool single_identical = true;
  for (std::size_t m : {4u, 1u}) {
    AlgorithmConfig a;
    a.workers = m;
    a.rate = 0.1;
    a.step = 0.05;
    a.seed = 3;
    const auto expect = oracle::serial_sgd(data, m, a.rate, a.step, a.schedule, a.seed, rounds);
    const auto got = iterates("asgd", data, bsp(), a, rounds * m, m);
    if (got.size() != rounds) return {false, "wrong iterate count"};
    for (std::size_t k = 0; k < rounds; ++k) {
      const double diff = oracle::max_diff(expect[k], got[k]);
      worst = std::max(worst, diff);
      if (m == 1 && diff != 0.0) single_identical = false;
    }
  }
  return {worst <= kSerialTol, fmt("max |diff| %.3g over 500 rounds (m=4, m=1); m=1 bit-identical: %s", worst,
                                   single_identical ? "yes" : "no")};
}

Outcome history_oracle() {
  const auto data = synth("synth:100,10,1", 4);
  AlgorithmConfig a;
  a.workers = 1;
  a.rate = 0.1;
  a.step = 0.01;
  a.schedule = Schedule::fixed;
  a.seed = 5;
  const auto expect = oracle::table_saga(data, a.rate, a.step, a.seed, 200);
  const auto got = iterates("asaga", data, asp(), a, 200, 1);
  if (got.size() != 200) return {false, "wrong iterate count"};
  double worst = 0.0;
  for (std::size_t t = 0; t < 200; ++t) worst = std::max(worst, oracle::max_diff(expect[t], got[t]));
  return {worst < kHistoryTol, fmt("max |diff| %.3g over 200 iterates", worst)};
}

Outcome saga_convergence() {
  const auto data = synth("synth:1000,20,1", 4);
  const double baseline = compute_baseline(*data, 1);
  const double step = 1.0 / (3.0 * lipschitz_bound(*data));
  std::size_t slowest = 0;
  bool all = true;
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    AlgorithmConfig a;
    a.workers = 1;
    a.rate = 0.01;
    a.step = step;
    a.schedule = Schedule::fixed;
    a.seed = seed;
    EngineConfig e;
    e.workers = 1;
    e.max_updates = kSagaBudget;
    std::size_t hit = 0;
    run_algorithm("saga", data, bsp(), a, e, [&](const UpdateEvent& ev) {
      UpdateVerdict v;
      if (objective(*data, ev.model, 1) - baseline < kSagaTarget) {
        hit = ev.updates;
        v.stop = true;
      }
      return v;
    });
    if (hit == 0) all = false;
    slowest = std::max(slowest, hit);
  }
  return {all, fmt("step 1/(3L)=%.4g, error < 1e-6 after at most %zu of %zu iterations (3 seeds)", step,
                   all ? slowest : kSagaBudget, kSagaBudget)};
}

// Shared setup for the straggler experiments.
ExperimentConfig straggler_config(std::size_t m) {
  ExperimentConfig c;
  c.data = "synth:4096,64,1,0.5";
  c.workers = m;
  c.partitions = 32;
  c.rate = 0.05;
  c.step = 0.1;
  c.schedule = Schedule::inverse_sqrt;
  c.seeds = {1, 2, 3};
  c.target = 1.0;
  c.stop_at_target = true;
  return c;
}

double ttt(ExperimentConfig c, const std::string& algo, const std::string& barrier, std::size_t iters,
           std::size_t every, std::shared_ptr<const Dataset> data, double baseline) {
  c.algorithm = algo;
  c.barrier = barrier;
  c.iterations = iters;
  c.eval_every = every;
  return run_experiment(c, std::move(data), baseline).time_to_target().value_or(INFINITY);
}

Outcome cds_robustness() {
  const std::size_t m = 8;
  ExperimentConfig c = straggler_config(m);
  const auto data = synth(c.data, c.partitions);
  const double baseline = compute_baseline(*data, m);
  std::vector<double> sgd, asgd;
  for (double i : {0.0, 0.3, 0.6, 1.0}) {
    c.delay = fmt("cds:w=0,i=%g", i);
    sgd.push_back(ttt(c, "sgd", "bsp", 2000, 1, data, baseline));
    asgd.push_back(ttt(c, "asgd", "throttled:k=4", 2000 * m, m, data, baseline));
  }
  const double sp = sgd.back() / asgd.back();
  const bool monotone = sgd[0] < sgd[1] && sgd[1] < sgd[2] && sgd[2] < sgd[3];
  const double var = spread(asgd);
  return {sp >= kCdsSpeedup && var < kCdsSpread && monotone,
          fmt("speedup %.2fx at i=1.0; ASGD ttt %s (spread %.1f%%); SGD ttt %s (%s)", sp, join(asgd).c_str(),
              100.0 * var, join(sgd).c_str(), monotone ? "increasing" : "not increasing")};
}

Outcome pcs_robustness() {
  const std::size_t m = 16;
  ExperimentConfig c = straggler_config(m);
  c.delay = "pcs:seed=1";
  const auto data = synth(c.data, c.partitions);
  const double baseline = compute_baseline(*data, m);
  const std::string barrier = "throttled:k=8";
  const double sgd = ttt(c, "sgd", "bsp", 4000, 1, data, baseline);
  const double asgd = ttt(c, "asgd", barrier, 4000 * m, m, data, baseline);
  const double saga = ttt(c, "saga", "bsp", 4000, 1, data, baseline);
  const double asaga = ttt(c, "asaga", barrier, 4000 * m, m, data, baseline);
  const double s1 = sgd / asgd, s2 = saga / asaga;
  return {s1 >= kPcsSpeedup && s2 >= kPcsSpeedup,
          fmt("ASGD %.2fx (%.4g vs %.4g), ASAGA %.2fx (%.4g vs %.4g)", s1, sgd, asgd, s2, saga, asaga)};
}

std::vector<double> waits(const std::string& algo, const std::string& barrier,
                          std::shared_ptr<const Dataset> data) {
  std::vector<double> out;
  for (double i : {0.0, 0.3, 0.6, 1.0}) {
    ExperimentConfig c;
    c.workers = 8;
    c.partitions = 32;
    c.rate = 0.05;
    c.step = 0.1;
    c.seeds = {1, 2, 3};
    c.cost.jitter = 0.5;
    c.iterations = 2000;
    c.eval_every = 1000;
    c.algorithm = algo;
    c.barrier = barrier;
    c.delay = fmt("cds:w=0,i=%g", i);
    out.push_back(run_experiment(c, data, 0.0).mean_wait());
  }
  return out;
}

Outcome wait_times() {
  const auto data = synth("synth:1024,16,1,0.5", 32);
  const auto bsp_w = waits("sgd", "bsp", data);
  const auto async_w = waits("asgd", "throttled:k=4", data);
  const auto asp_w = waits("asgd", "asp", data);
  const double growth = bsp_w[3] / bsp_w[0];
  const double var = spread(async_w);
  return {var < kWaitSpread && growth >= kBspWaitGrowth,
          fmt("throttled:k=4 waits %s (spread %.1f%%); bsp waits %s (x%.2f); asp waits %s", join(async_w).c_str(),
              100.0 * var, join(bsp_w).c_str(), growth, join(asp_w).c_str())};
}

Outcome barrier_invariants() {
  const auto data = synth("synth:1024,16,1,0.5", 32);
  std::vector<std::string> failures;
  std::int64_t worst_ssp = std::numeric_limits<std::int64_t>::min();  // max staleness - s
  for (const std::string barrier : {"ssp:s=2", "ssp:s=4", "ssp:s=8", "throttled:k=2", "throttled:k=4", "asp"}) {
    for (std::uint64_t seed : {1u, 2u}) {
      AlgorithmConfig a;
      a.workers = 8;
      a.rate = 0.05;
      a.step = 0.1;
      a.seed = seed;
      EngineConfig e;
      e.workers = 8;
      e.max_updates = 1500;
      e.seed = seed;
      e.cost.jitter = 0.5;
      e.multipliers = apply_cds(8, 0, 1.0).multipliers(8);
      const ConsistencyModel model = parse_barrier(barrier);
      const RunReport r = run_algorithm("asgd", data, model, a, e);
      if (model.name == "ssp") {
        const auto s = static_cast<std::int64_t>(model.params.at("s"));
        for (const auto& col : r.collects) {
          worst_ssp = std::max(worst_ssp, col.staleness - s);
          if (col.staleness > s) failures.push_back(barrier + " staleness");
        }
      }
      if (model.name == "throttled") {
        const auto k = static_cast<std::size_t>(model.params.at("k"));
        for (const auto& d : r.dispatches) {
          if (d.available < k) failures.push_back(barrier + " dispatch below k");
        }
      }
      if (model.name == "asp") {
        for (const auto& rec : r.records) {
          if (rec.wait_time_s && *rec.wait_time_s != 0.0) failures.push_back("asp nonzero wait");
        }
      }
      for (std::size_t i = 0; i < r.collects.size(); ++i) {
        if (r.collects[i].seq != i || r.collects[i].worker != r.submissions[i].worker) {
          failures.push_back(barrier + " collect order");
          break;
        }
      }
    }
  }
  return {failures.empty(), failures.empty() ? fmt("12 traces clean; max SSP consumed staleness - s = %lld",
                                                   static_cast<long long>(worst_ssp))
                                             : failures.front()};
}

Outcome pcs_distribution() {
  for (std::uint64_t seed = 1; seed <= 50; ++seed) {
    const DelayModel d = generate_pcs(32, seed);
    std::size_t mild = 0, tail = 0, other = 0;
    for (double c : d.per_worker_multiplier) {
      if (c == 1.0) continue;
      if (c >= kPcsUniformLo && c <= kPcsUniformHi) {
        ++mild;
      } else if (c > kPcsUniformHi && c <= kPcsTailHi) {
        ++tail;
      } else {
        ++other;
      }
    }
    if (mild != 6 || tail != 2 || other != 0) return {false, fmt("seed %llu: %zu/%zu/%zu", (unsigned long long)seed, mild, tail, other)};
    if (generate_pcs(32, seed).per_worker_multiplier != d.per_worker_multiplier) {
      return {false, "not reproducible"};
    }
  }
  return {true, "50 seeds: 8 stragglers each (6 in [1.5, 2.5], 2 in (2.5, 10]), reproducible"};
}

}  // namespace

int main(int argc, char** argv) {
  const bool strict = argc > 1 && std::strcmp(argv[1], "--strict") == 0;
  const std::vector<Criterion> criteria{
      {1, "gradient correctness", 1.0, gradient_correctness},
      {2, "serial equivalence", 10.0, serial_equivalence},
      {3, "history-recovery oracle", 10.0, history_oracle},
      {4, "SAGA convergence", 60.0, saga_convergence},
      {5, "CDS robustness", 300.0, cds_robustness},
      {6, "PCS robustness", 600.0, pcs_robustness},
      {7, "wait-time behavior", 120.0, wait_times},
      {8, "barrier invariants", 60.0, barrier_invariants},
      {9, "PCS generator distribution", 1.0, pcs_distribution},
  };
  int failed = 0;
  for (const auto& c : criteria) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.check();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool in_time = secs < c.budget_s;
    const bool pass = o.pass && in_time;
    failed += !pass;
    std::cout << "AC" << c.id << ' ' << (pass ? "PASS" : "FAIL") << ' ' << c.name << ": " << o.detail
              << fmt(" [%.2fs of %.0fs%s]", secs, c.budget_s, in_time ? "" : ", over budget") << std::endl;
  }
  std::cout << (9 - failed) << "/9 criteria passed" << std::endl;
  return strict && failed ? 1 : 0;
}
