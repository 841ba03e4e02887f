#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>
#include <set>

#include "asyncps/algorithms.hpp"
#include "asyncps/engine.hpp"
#include "asyncps/optimizers.hpp"
#include "asyncps/synth.hpp"
#include "oracles.hpp"

using namespace asyncps;

namespace {

std::shared_ptr<const Dataset> synth_data(std::size_t n, std::size_t d, std::uint64_t seed, double noise,
                                          std::size_t parts) {
  SynthProblem p = make_synthetic({n, d, seed, noise});
  return std::make_shared<const Dataset>(partition(std::move(p.rows), d, parts, 7));
}

EngineConfig engine(std::size_t m, std::size_t updates, std::uint64_t seed = 1) {
  EngineConfig e;
  e.workers = m;
  e.max_updates = updates;
  e.seed = seed;
  return e;
}

AlgorithmConfig algo(std::size_t m, double rate, double step, std::uint64_t seed = 1) {
  AlgorithmConfig a;
  a.workers = m;
  a.rate = rate;
  a.step = step;
  a.seed = seed;
  return a;
}

// Model after every `every` updates.
std::vector<DenseVector> iterates(std::string_view name, std::shared_ptr<const Dataset> data,
                                  const ConsistencyModel& barrier, const AlgorithmConfig& a, const EngineConfig& e,
                                  std::size_t every = 1) {
  std::vector<DenseVector> out;
  run_algorithm(name, std::move(data), barrier, a, e, [&](const UpdateEvent& ev) {
    if (ev.updates % every == 0) out.push_back(ev.model);
    return UpdateVerdict{};
  });
  return out;
}

TaskResult result_with(DenseVector g, std::optional<DenseVector> h, std::size_t batch) {
  TaskResult r;
  r.gradient = std::move(g);
  r.history_gradient = std::move(h);
  r.batch_size = batch;
  return r;
}

}  // namespace

TEST(Sgd, StepAndSchedules) {
  SgdState s{DenseVector{1.0, 1.0}, 1, 0.5, Schedule::fixed};
  sgd_step(s, DenseVector{2.0, 4.0});
  EXPECT_EQ(s.w, (DenseVector{0.0, -1.0}));
  EXPECT_EQ(s.k, 2u);

  SgdState t{DenseVector{0.0}, 4, 0.5, Schedule::inverse_sqrt};
  EXPECT_DOUBLE_EQ(t.step_size(), 0.25);
  sgd_step(t, DenseVector{1.0});
  EXPECT_DOUBLE_EQ(t.w[0], -0.25);

  EXPECT_EQ(parse_schedule("fixed"), Schedule::fixed);
  EXPECT_EQ(parse_schedule("inverse_sqrt"), Schedule::inverse_sqrt);
  EXPECT_THROW(parse_schedule("cosine"), std::invalid_argument);
}

TEST(Asgd, StepIsSyncStepOverWorkersAndAdvancesPerRound) {
  EXPECT_DOUBLE_EQ(async_step_size(0.4, 4), 0.1);
  EXPECT_THROW(async_step_size(0.4, 0), std::invalid_argument);

  AsgdState s(DenseVector{0.0}, 0.4, Schedule::inverse_sqrt, 4);
  for (int i = 0; i < 4; ++i) {
    EXPECT_DOUBLE_EQ(s.step_size(), 0.1);
    asgd_step(s, result_with(DenseVector{1.0}, std::nullopt, 1));
  }
  EXPECT_NEAR(s.sgd.w[0], -0.4, 1e-15);
  EXPECT_DOUBLE_EQ(s.step_size(), 0.1 / std::sqrt(2.0));
}

TEST(Saga, CanonicalHandExample) {
  SagaState s;
  s.w = DenseVector{0.0};
  s.average_history = DenseVector{1.0};
  s.alpha = 0.5;
  s.n = 4;
  saga_step(s, DenseVector{3.0}, DenseVector{1.0}, 2);
  // Step uses the old average: 3 - 1 + 1 = 3.
  EXPECT_DOUBLE_EQ(s.w[0], -1.5);
  EXPECT_DOUBLE_EQ(s.average_history[0], 2.0);
}

TEST(Saga, PaperLiteralScaling) {
  SagaState s;
  s.w = DenseVector{0.0};
  s.average_history = DenseVector{0.0};
  s.alpha = 0.5;
  s.n = 10;
  s.b = 0.25;
  s.P = 5;
  s.mode = SagaMode::paper_literal;
  saga_step(s, DenseVector{3.0}, DenseVector{1.0}, 3);
  // avg += 2 * (b n = 2.5) first, then the step sees it.
  EXPECT_DOUBLE_EQ(s.average_history[0], 5.0);
  EXPECT_DOUBLE_EQ(s.w[0], -3.5);

  s.w = DenseVector{0.0};
  s.average_history = DenseVector{0.0};
  asaga_step(s, result_with(DenseVector{3.0}, DenseVector{1.0}, 3));
  EXPECT_DOUBLE_EQ(s.average_history[0], 1.0);  // b n / P = 0.5
  EXPECT_DOUBLE_EQ(s.w[0], -1.5);

  EXPECT_EQ(parse_saga_mode("paper_literal"), SagaMode::paper_literal);
  EXPECT_THROW(parse_saga_mode("x"), std::invalid_argument);
  EXPECT_THROW(asaga_step(s, result_with(DenseVector{1.0}, std::nullopt, 1)), std::invalid_argument);
}

TEST(Saga, MatchesExplicitTableSingleWorker) {
  const auto data = synth_data(100, 10, 4, 0.5, 4);
  const double alpha = 0.01;
  const auto expect = oracle::table_saga(data, 0.1, alpha, 3, 200);
  AlgorithmConfig a = algo(1, 0.1, alpha, 3);
  a.schedule = Schedule::fixed;
  const auto sync = iterates("saga", data, bsp(), a, engine(1, 200));
  const auto async = iterates("asaga", data, asp(), a, engine(1, 200));
  ASSERT_EQ(sync.size(), 200u);
  ASSERT_EQ(async.size(), 200u);
  double worst = 0.0;
  for (std::size_t t = 0; t < 200; ++t) {
    worst = std::max(worst, oracle::max_diff(expect[t], sync[t]));
    EXPECT_EQ(sync[t], async[t]) << "t=" << t;  // one worker: identical arithmetic
  }
  EXPECT_LT(worst, 1e-10);
}

TEST(Saga, InitialAverageIsFullGradient) {
  const auto data = synth_data(60, 5, 9, 0.1, 3);
  AlgorithmConfig a = algo(3, 0.2, 0.01);
  a.initial = DenseVector{0.1, -0.2, 0.3, 0.0, 1.0};
  SagaAlgorithm s(data, a);
  const auto rows = data->rows();
  oracle::Vec g(5, 0.0);
  for (const auto& r : rows) {
    const auto gi = oracle::grad(r, oracle::to_vec(*a.initial));
    for (std::size_t j = 0; j < 5; ++j) g[j] += gi[j] / double(rows.size());
  }
  EXPECT_LT(oracle::max_diff(g, s.state().average_history), 1e-12);
  a.saga_mode = SagaMode::paper_literal;
  EXPECT_EQ(SagaAlgorithm(data, a).state().average_history, DenseVector(5));
}

TEST(Asgd, BspMatchesSerialSgd) {
  const std::size_t m = 4;
  const auto data = synth_data(1024, 32, 5, 0.5, 8);
  const auto expect = oracle::serial_sgd(data, m, 0.1, 0.05, Schedule::inverse_sqrt, 2, 100);
  AlgorithmConfig a = algo(m, 0.1, 0.05, 2);
  const auto got = iterates("asgd", data, bsp(), a, engine(m, 100 * m), m);
  ASSERT_EQ(got.size(), 100u);
  double worst = 0.0;
  for (std::size_t k = 0; k < 100; ++k) worst = std::max(worst, oracle::max_diff(expect[k], got[k]));
  EXPECT_LT(worst, 1e-12);

  const auto sync = iterates("sgd", data, bsp(), a, engine(m, 100));
  worst = 0.0;
  for (std::size_t k = 0; k < 100; ++k) worst = std::max(worst, oracle::max_diff(expect[k], sync[k]));
  EXPECT_LT(worst, 1e-12);
}

TEST(Sgd, FullBatchRoundsAreGradientDescent) {
  // Unequal partitions (4, 3, 3): the round mean must weight by batch size.
  const auto data = synth_data(10, 3, 6, 0.2, 3);
  AlgorithmConfig a = algo(3, 1.0, 0.05);
  a.schedule = Schedule::fixed;
  const auto got = iterates("sgd", data, bsp(), a, engine(3, 20));
  DenseVector w(3);
  for (std::size_t k = 0; k < 20; ++k) {
    axpy(-0.05, full_gradient(*data, w), w);
    EXPECT_LT(max_abs_diff(w, got[k]), 1e-13);
  }
}

TEST(Sgd, DescendsOnEverySeed) {
  const auto data = synth_data(512, 16, 8, 0.3, 8);
  const double baseline = compute_baseline(*data, 4);
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    for (std::string_view name : {"sgd", "asgd", "saga", "asaga"}) {
      // Same gradient budget for both families: async variants update once per result.
      AlgorithmConfig a = algo(4, 0.2, name.ends_with("saga") ? 0.005 : 0.05, seed);
      const std::size_t updates = is_async_algorithm(name) ? 1600 : 400;
      const RunReport r = run_algorithm(name, data, asp(), a, engine(4, updates, seed));
      const double start = objective(*data, DenseVector(16), 4) - baseline;
      const double end = objective(*data, r.final_model, 4) - baseline;
      EXPECT_LT(end, 0.1 * start) << name << " seed " << seed;
    }
  }
}

TEST(Optimizers, DivergenceIsReported) {
  const auto data = synth_data(256, 8, 1, 0.1, 4);
  AlgorithmConfig a = algo(2, 0.5, 50.0);
  a.schedule = Schedule::fixed;
  EXPECT_THROW(run_algorithm("asgd", data, asp(), a, engine(2, 5000)), NumericalError);
  EngineConfig wall = engine(2, 5000);
  wall.clock = ClockMode::wall;
  wall.cost.base = 0.0;
  EXPECT_THROW(run_algorithm("asgd", data, asp(), a, wall), NumericalError);
}

TEST(Optimizers, LipschitzAndFullGradient) {
  std::vector<SparseRow> rows{{{0, 1}, {1.0, 2.0}, 1.0}, {{1}, {3.0}, 0.0}};
  const Dataset ds = make_unpartitioned(rows, 2);
  EXPECT_DOUBLE_EQ(lipschitz_bound(ds), 18.0);
  // Residuals at w = (1, 1): 2 and 3.
  const DenseVector g = full_gradient(ds, DenseVector{1.0, 1.0});
  EXPECT_DOUBLE_EQ(g[0], (2.0 * 2.0 * 1.0) / 2.0);
  EXPECT_DOUBLE_EQ(g[1], (2.0 * 2.0 * 2.0 + 2.0 * 3.0 * 3.0) / 2.0);
}

TEST(Baseline, IdentityDesignIsExact) {
  std::vector<SparseRow> rows;
  for (std::size_t i = 0; i < 5; ++i) rows.push_back({{i}, {1.0}, double(i) - 2.0});
  const auto sol = solve_normal_equations(make_unpartitioned(rows, 5));
  EXPECT_NEAR(sol.objective, 0.0, 1e-24);
  EXPECT_FALSE(sol.regularized);
  EXPECT_DOUBLE_EQ(sol.w[4], 2.0);
}

TEST(Baseline, PlantedNoiselessIsZero) {
  SynthProblem p = make_synthetic({300, 12, 3, 0.0});
  const auto sol = solve_normal_equations(make_unpartitioned(p.rows, 12));
  EXPECT_LT(sol.objective, 1e-18);
  EXPECT_LT(max_abs_diff(sol.w, p.planted), 1e-10);
}

TEST(Baseline, MatchesPseudoinverse) {
  SynthProblem p = make_synthetic({200, 20, 11, 1.0});
  const Dataset ds = make_unpartitioned(p.rows, 20);
  const double expect = oracle::pinv_residual(p.rows, 20);
  for (std::size_t m : {1u, 4u}) {
    EXPECT_NEAR(compute_baseline(ds, m), expect / double(m), 1e-9 * expect);
  }
}

TEST(Baseline, RankDeficientDesignIsRegularized) {
  std::vector<SparseRow> rows;
  for (int i = 0; i < 20; ++i) {
    const double x = 0.1 * i;
    rows.push_back({{0, 1}, {x, 2.0 * x}, 3.0 * x + (i % 2 ? 0.1 : -0.1)});
  }
  const auto sol = solve_normal_equations(make_unpartitioned(rows, 2));
  EXPECT_TRUE(sol.regularized);
  EXPECT_NEAR(sol.objective, oracle::pinv_residual(rows, 2), 1e-6);
}

TEST(Algorithms, RegistryAndOwnership) {
  EXPECT_TRUE(is_algorithm("asaga"));
  EXPECT_FALSE(is_algorithm("adam"));
  EXPECT_TRUE(is_async_algorithm("asgd"));
  EXPECT_FALSE(is_async_algorithm("saga"));
  EXPECT_EQ(sync_partner("asaga"), "saga");
  EXPECT_EQ(sync_partner("sgd"), "sgd");

  const auto data = synth_data(100, 4, 1, 0.0, 10);
  TaskSource src(data, 4, 0.1, 1);
  EXPECT_EQ(src.owned(1), (std::vector<std::size_t>{1, 5, 9}));
  EXPECT_EQ(src.owned(3), (std::vector<std::size_t>{3, 7}));
  EXPECT_THROW(TaskSource(data, 11, 0.1, 1), std::invalid_argument);
  EXPECT_THROW(TaskSource(data, 2, 0.0, 1), std::invalid_argument);
  EXPECT_THROW(run_algorithm("adam", data, asp(), algo(2, 0.1, 0.1), engine(2, 1)), std::invalid_argument);
  EXPECT_THROW(run_algorithm("sgd", data, asp(), algo(2, 0.1, 0.1), engine(3, 1)), std::invalid_argument);
}

TEST(Algorithms, AsagaRunsUnderJitter) {
  const auto data = synth_data(80, 4, 2, 0.1, 4);
  AsagaAlgorithm a(data, algo(2, 0.25, 0.01));
  EngineConfig e = engine(2, 30);
  e.cost.jitter = 1.0;
  const RunReport r = run(e, a, asp());
  EXPECT_EQ(r.updates, 30u);
  EXPECT_TRUE(all_finite(r.final_model));
}

TEST(Asaga, AverageTracksExplicitTableUnderAsynchrony) {
  const auto data = synth_data(100, 6, 12, 0.3, 8);
  const auto rows = data->rows();
  AsagaAlgorithm a(data, algo(4, 0.5, 0.01, 5));
  std::vector<oracle::Vec> table(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) table[i] = oracle::grad(rows[i], oracle::Vec(6, 0.0));
  std::set<std::size_t> touched;
  std::size_t checks = 0;
  double worst = 0.0;
  EngineConfig e = engine(4, 400, 5);
  e.cost.jitter = 0.8;
  run(e, a, asp(), [&](const UpdateEvent& ev) {
    const oracle::Vec w = oracle::to_vec(*ev.result.model);
    for (std::size_t s : ev.result.samples) {
      table[s] = oracle::grad(rows[s], w);
      touched.insert(s);
    }
    if (touched.size() == rows.size()) {
      oracle::Vec mean(6, 0.0);
      for (const auto& g : table)
        for (std::size_t j = 0; j < 6; ++j) mean[j] += g[j] / double(rows.size());
      worst = std::max(worst, oracle::max_diff(mean, a.state().average_history));
      ++checks;
    }
    return UpdateVerdict{};
  });
  EXPECT_GT(checks, 100u);
  EXPECT_LT(worst, 1e-10);
}

TEST(Sgd, MedianErrorNonincreasingOverWindows) {
  const auto data = synth_data(1024, 16, 21, 0.3, 8);
  const double baseline = compute_baseline(*data, 4);
  // Step sized so 1000 iterations stay above the stationary noise floor.
  const double step = 0.2 / lipschitz_bound(*data);
  constexpr std::size_t kIters = 1000, kWindow = 100;
  std::vector<std::vector<double>> curves;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    AlgorithmConfig a = algo(4, 0.1, step, seed);
    a.schedule = Schedule::fixed;
    std::vector<double> errs;
    for (const auto& w : iterates("sgd", data, bsp(), a, engine(4, kIters, seed)))
      errs.push_back(objective(*data, w, 4) - baseline);
    curves.push_back(std::move(errs));
  }
  std::vector<double> windows;
  for (std::size_t start = 0; start < kIters; start += kWindow) {
    std::vector<double> per_seed;
    for (const auto& c : curves) per_seed.push_back(std::accumulate(c.begin() + start, c.begin() + start + kWindow, 0.0));
    std::nth_element(per_seed.begin(), per_seed.begin() + 2, per_seed.end());
    windows.push_back(per_seed[2] / kWindow);
  }
  for (std::size_t i = 1; i < windows.size(); ++i) EXPECT_LE(windows[i], windows[i - 1]) << "window " << i;
}

TEST(Optimizers, IteratesStayFiniteBelowInverseLipschitz) {
  const auto data = synth_data(256, 8, 3, 1.0, 8);
  const double step = 0.99 / lipschitz_bound(*data);
  for (std::string_view name : {"sgd", "asgd", "saga", "asaga"}) {
    AlgorithmConfig a = algo(4, 0.05, step);
    a.schedule = Schedule::fixed;
    EngineConfig e = engine(4, 2000);
    e.cost.jitter = 0.5;
    const RunReport r = run_algorithm(name, data, asp(), a, e);
    EXPECT_TRUE(all_finite(r.final_model)) << name;
  }
}
