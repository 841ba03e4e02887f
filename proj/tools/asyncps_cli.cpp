// Command-line driver: runs experiment matrices and emits CSV plus a gnuplot script.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "asyncps/asyncps.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace asyncps;

namespace {

struct RunOptions {
  std::vector<std::string> algos{"asgd"};
  std::vector<std::string> barriers{"asp"};
  std::vector<std::string> delays{"none"};
  std::size_t workers = 8;
  std::size_t partitions = 32;
  double rate = 0.1;
  double step = 0.01;
  std::size_t iters = 1000;
  std::string clock = "virtual";
  std::string data = "synth:4096,64,1,0.1";
  std::string out = "out";
  std::string saga_mode = "canonical";
  std::string schedule = "inverse_sqrt";
  std::size_t eval_every = 10;
  std::optional<double> target;
  std::vector<std::uint64_t> seeds{1, 2, 3};
  std::uint64_t partition_seed = 7;
  double task_cost = 1.0;
  double jitter = 0.0;
  double max_time = 0.0;
  bool stop_at_target = false;
  std::string config;
};

template <class T>
void override_from(const json& j, const char* key, T& field) {
  if (j.contains(key)) field = j.at(key).get<T>();
}

template <class T>
void override_list(const json& j, const char* key, std::vector<T>& field) {
  if (!j.contains(key)) return;
  const json& v = j.at(key);
  field = v.is_array() ? v.get<std::vector<T>>() : std::vector<T>{v.get<T>()};
}

// Keys mirror the long flag names, with '-' written as '_'.
void apply_config_file(RunOptions& o) {
  std::ifstream in(o.config);
  if (!in) throw std::runtime_error("cannot open config '" + o.config + "'");
  const json j = json::parse(in, nullptr, true, true);
  override_list(j, "algo", o.algos);
  override_list(j, "barrier", o.barriers);
  override_list(j, "delay", o.delays);
  override_list(j, "seed", o.seeds);
  override_from(j, "workers", o.workers);
  override_from(j, "partitions", o.partitions);
  override_from(j, "rate", o.rate);
  override_from(j, "step", o.step);
  override_from(j, "iters", o.iters);
  override_from(j, "clock", o.clock);
  override_from(j, "data", o.data);
  override_from(j, "out", o.out);
  override_from(j, "saga_mode", o.saga_mode);
  override_from(j, "schedule", o.schedule);
  override_from(j, "eval_every", o.eval_every);
  override_from(j, "partition_seed", o.partition_seed);
  override_from(j, "task_cost", o.task_cost);
  override_from(j, "jitter", o.jitter);
  override_from(j, "max_time", o.max_time);
  override_from(j, "stop_at_target", o.stop_at_target);
  if (j.contains("target")) o.target = j.at("target").get<double>();
}

std::string cell_name(const ExperimentResult& r) {
  std::string name = r.config.algorithm + "_" + r.config.barrier + "_" + delay_spec(r.delay);
  for (char& c : name) {
    if (c == ':' || c == ',' || c == '=') c = '-';
  }
  return name;
}

void write_metrics(const fs::path& dir, const ExperimentResult& r) {
  fs::create_directories(dir);
  for (std::size_t i = 0; i < r.repetitions.size(); ++i) {
    const fs::path file = dir / (i == 0 ? std::string("metrics.csv") : "metrics_rep" + std::to_string(i) + ".csv");
    std::ofstream out(file);
    write_metrics_csv(out, r.repetitions[i].report.records);
  }
  std::ofstream curve(dir / "curve.csv");
  write_curve_csv(curve, r.mean_curve);
}

void write_gnuplot(const fs::path& file, const std::vector<std::pair<std::string, fs::path>>& curves, bool wall) {
  std::ofstream gp(file);
  gp << "set datafile separator ','\n"
     << "set key autotitle columnhead\n"
     << "set logscale y\n"
     << "set xlabel '" << (wall ? "wall time (s)" : "virtual time") << "'\n"
     << "set ylabel 'objective error'\n"
     << "set terminal pngcairo size 900,600\n"
     << "set output 'error.png'\n"
     << "plot ";
  for (std::size_t i = 0; i < curves.size(); ++i) {
    if (i) gp << ", \\\n     ";
    gp << "'" << curves[i].second.generic_string() << "' using 1:2 with lines title '" << curves[i].first << "'";
  }
  gp << '\n';
}

const ExperimentResult* find_sync_partner(const std::vector<ExperimentResult>& all, const ExperimentResult& r) {
  const std::string_view partner = sync_partner(r.config.algorithm);
  const ExperimentResult* fallback = nullptr;
  for (const auto& c : all) {
    if (c.config.algorithm != partner || c.config.delay != r.config.delay) continue;
    if (c.config.barrier == "bsp") return &c;
    if (!fallback) fallback = &c;
  }
  return fallback;
}

int cmd_run(RunOptions o) {
  if (!o.config.empty()) apply_config_file(o);
  if (o.clock != "virtual" && o.clock != "wall") throw std::invalid_argument("clock must be 'virtual' or 'wall'");
  for (const auto& a : o.algos) {
    if (!is_algorithm(a)) throw std::invalid_argument("unknown algorithm '" + a + "'");
  }
  for (const auto& b : o.barriers) parse_barrier(b);
  for (const auto& d : o.delays) parse_delay(d, o.workers);

  const auto data = load_dataset(o.data, o.partitions, o.partition_seed);
  const double baseline = compute_baseline(*data, o.workers);
  std::cerr << "dataset n=" << data->n << " d=" << data->d << " P=" << data->partition_count()
            << " baseline=" << baseline << '\n';

  std::vector<ExperimentResult> results;
  for (const auto& delay : o.delays) {
    for (const auto& algo : o.algos) {
      for (const auto& barrier : o.barriers) {
        ExperimentConfig cfg;
        cfg.data = o.data;
        cfg.algorithm = algo;
        cfg.barrier = barrier;
        cfg.workers = o.workers;
        cfg.partitions = o.partitions;
        cfg.rate = o.rate;
        cfg.step = o.step;
        cfg.schedule = parse_schedule(o.schedule);
        cfg.saga_mode = parse_saga_mode(o.saga_mode);
        cfg.iterations = o.iters;
        cfg.seeds = o.seeds;
        cfg.partition_seed = o.partition_seed;
        cfg.clock = o.clock == "wall" ? ClockMode::wall : ClockMode::virtual_clock;
        cfg.delay = delay;
        cfg.cost.base = o.task_cost;
        cfg.cost.jitter = o.jitter;
        if (o.max_time > 0.0) cfg.max_time = o.max_time;
        cfg.eval_every = o.eval_every;
        cfg.target = o.target;
        cfg.stop_at_target = o.stop_at_target;
        cfg.out = o.out;
        std::cerr << "running " << algo << " / " << barrier << " / " << delay << '\n';
        results.push_back(run_experiment(cfg, data, baseline));
      }
    }
  }

  const fs::path out(o.out);
  fs::create_directories(out);
  const bool single = results.size() == 1;
  std::vector<std::pair<std::string, fs::path>> curves;
  for (const auto& r : results) {
    const std::string name = cell_name(r);
    const fs::path dir = single ? out : out / name;
    write_metrics(dir, r);
    curves.emplace_back(name, fs::relative(dir / "curve.csv", out));
  }

  std::vector<SummaryRow> rows;
  for (const auto& r : results) {
    SummaryRow row{&r, std::nullopt};
    if (is_async_algorithm(r.config.algorithm)) {
      if (const auto* s = find_sync_partner(results, r)) row.speedup = speedup(r, *s);
    }
    rows.push_back(row);
  }
  {
    std::ofstream summary(out / "summary.csv");
    write_summary_csv(summary, rows);
  }
  write_summary_csv(std::cout, rows);
  write_gnuplot(out / "plot.gp", curves, o.clock == "wall");
  return 0;
}

int cmd_synth(std::size_t n, std::size_t d, std::uint64_t seed, double noise, const std::string& out_path) {
  const SynthProblem p = make_synthetic({n, d, seed, noise});
  if (out_path.empty() || out_path == "-") {
    serialize_libsvm(std::cout, p.rows);
  } else {
    std::ofstream out(out_path);
    if (!out) throw std::runtime_error("cannot write '" + out_path + "'");
    serialize_libsvm(out, p.rows);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Asynchronous parameter-server simulator"};
  app.require_subcommand(1);

  RunOptions o;
  auto* run = app.add_subcommand("run", "Run an algorithm x barrier x delay experiment matrix");
  run->add_option("--algo", o.algos, "sgd | asgd | saga | asaga (repeatable)")->capture_default_str();
  run->add_option("--barrier", o.barriers, "bsp | asp | ssp:s=<int> | throttled:k=<int> (repeatable)")
      ->capture_default_str();
  run->add_option("--delay", o.delays, "none | cds:w=<id>,i=<f> | pcs:seed=<u> (repeatable)")->capture_default_str();
  run->add_option("--workers,-m", o.workers, "Worker count")->capture_default_str();
  run->add_option("--partitions,-P", o.partitions, "Data partitions")->capture_default_str();
  run->add_option("--rate,-b", o.rate, "Mini-batch sampling rate per partition")->capture_default_str();
  run->add_option("--step", o.step, "Synchronous step size (async variants use step / workers)")
      ->capture_default_str();
  run->add_option("--iters", o.iters, "Server updates per repetition")->capture_default_str();
  run->add_option("--clock", o.clock, "virtual | wall")->capture_default_str();
  run->add_option("--data", o.data, "LIBSVM file or synth:n,d,seed[,noise]")->capture_default_str();
  run->add_option("--out", o.out, "Output directory")->capture_default_str();
  run->add_option("--saga-mode", o.saga_mode, "canonical | paper_literal")->capture_default_str();
  run->add_option("--schedule", o.schedule, "SGD step schedule: fixed | inverse_sqrt")->capture_default_str();
  run->add_option("--eval-every", o.eval_every, "Evaluate objective every E updates")->capture_default_str();
  run->add_option("--target", o.target, "Absolute error target for time-to-target");
  run->add_flag("--stop-at-target", o.stop_at_target, "Stop once the smoothed error reaches the target");
  run->add_option("--seed", o.seeds, "Repetition seeds (repeatable)")->capture_default_str();
  run->add_option("--partition-seed", o.partition_seed, "Seed for the partition shuffle")->capture_default_str();
  run->add_option("--task-cost", o.task_cost, "Nominal task time (virtual units or seconds)")->capture_default_str();
  run->add_option("--jitter", o.jitter, "Task time *= 1 + jitter * U[0,1)")->capture_default_str();
  run->add_option("--max-time", o.max_time, "Stop after this much (virtual or wall) time; 0 = no limit");
  run->add_option("--config", o.config, "JSON file whose keys override the flags");

  std::size_t sn = 1000, sd = 20;
  std::uint64_t sseed = 1;
  double snoise = 0.0;
  std::string sout;
  auto* synth = app.add_subcommand("synth", "Write a synthetic least-squares problem in LIBSVM format");
  synth->add_option("--n", sn, "Samples")->capture_default_str();
  synth->add_option("--d", sd, "Features")->capture_default_str();
  synth->add_option("--seed", sseed, "Generator seed")->capture_default_str();
  synth->add_option("--noise", snoise, "Label noise standard deviation")->capture_default_str();
  synth->add_option("--out,-o", sout, "Output file (default stdout)");

  CLI11_PARSE(app, argc, argv);
  try {
    if (*run) return cmd_run(o);
    if (*synth) return cmd_synth(sn, sd, sseed, snoise, sout);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
