// Runs ASGD with throttled release against synchronous SGD on a synthetic
// problem with one straggler and prints both error curves' time-to-target.

#include <iostream>

#include "asyncps/asyncps.hpp"

int main() {
  using namespace asyncps;

  ExperimentConfig cfg;
  cfg.data = "synth:4096,64,1,0.5";
  cfg.workers = 8;
  cfg.partitions = 32;
  cfg.rate = 0.05;
  cfg.step = 0.1;
  cfg.seeds = {1};
  cfg.delay = "cds:w=0,i=1.0";
  cfg.target = 1.0;
  cfg.stop_at_target = true;

  const auto data = load_dataset(cfg.data, cfg.partitions, cfg.partition_seed);

  cfg.algorithm = "sgd";
  cfg.barrier = "bsp";
  cfg.iterations = 2000;  // rounds
  cfg.eval_every = 1;
  const ExperimentResult sync = run_experiment(cfg, data);

  cfg.algorithm = "asgd";
  cfg.barrier = "throttled:k=4";
  cfg.iterations = 2000 * cfg.workers;  // one update per result
  cfg.eval_every = cfg.workers;
  const ExperimentResult async = run_experiment(cfg, data);

  std::cout << "baseline objective " << sync.baseline << '\n';
  for (const auto* r : {&sync, &async}) {
    std::cout << r->config.algorithm << " / " << r->config.barrier << ": ";
    if (const auto t = r->time_to_target()) {
      std::cout << "time to target " << *t << '\n';
    } else {
      std::cout << "target not reached, final error " << r->final_error() << '\n';
    }
  }
  if (const auto s = speedup(async, sync)) std::cout << "speedup " << *s << "x\n";
}
