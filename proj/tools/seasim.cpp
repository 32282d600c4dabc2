// SPDX-License-Identifier: Apache-2.0
//
// Experiment runner: loads a scenario config, applies CLI overrides, and
// executes the configured runs. Exit codes: 0 success, 2 config error,
// 3 infeasible placement.

#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "seasim/seasim.hpp"

namespace {

std::vector<double> parse_sweep(const std::string& spec) {
  // lo:hi:n inclusive linear sweep
  double lo, hi;
  int n;
  if (std::sscanf(spec.c_str(), "%lf:%lf:%d", &lo, &hi, &n) != 3 || n < 1 || hi < lo)
    throw seasim::ConfigError("--sweep-rate expects lo:hi:n with hi >= lo and n >= 1");
  std::vector<double> rates;
  for (int i = 0; i < n; ++i)
    rates.push_back(n == 1 ? lo : lo + (hi - lo) * i / (n - 1));
  return rates;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"seasim: multi-LLM serving simulator and placement searcher"};
  std::string config_path;
  std::string policy;
  std::string sweep_rate;
  std::string out_dir;
  std::uint64_t seed = 0;
  bool have_seed = false;
  double density = 0.0;
  int skewness = 0;
  double noise_scale = -1.0;
  bool oracle_lengths = false;

  app.add_option("--config", config_path, "scenario config file")->required();
  app.add_option("--policy", policy, "scheduling policy: db|fcfs|rr|mlfq");
  app.add_option("--seed", seed, "run seed")->each([&](const std::string&) { have_seed = true; });
  app.add_option("--sweep-rate", sweep_rate, "rate sweep lo:hi:n (switches to rate_sweep)");
  app.add_option("--density", density, "cluster density factor (2 halves the GPUs)");
  app.add_option("--skewness", skewness, "consecutive same-service requests in the trace");
  app.add_option("--noise-scale", noise_scale, "profiled-length noise stddev factor");
  app.add_option("--out-dir", out_dir, "output directory");
  app.add_flag("--oracle-lengths", oracle_lengths, "scheduler sees (noisy) true lengths");

  CLI11_PARSE(app, argc, argv);

  try {
    seasim::ExperimentConfig cfg = seasim::load_config(config_path);
    if (!policy.empty()) {
      auto parsed = seasim::parse_policy(policy);
      if (!parsed)
        throw seasim::ConfigError("--policy: unknown '" + policy +
                                  "' (expected db|fcfs|rr|mlfq)");
      cfg.sim.scheduler.policy = *parsed;
    }
    if (have_seed) {
      cfg.seed = seed;
      cfg.sim.seed = seed;
    }
    if (!sweep_rate.empty()) {
      cfg.kind = seasim::ExperimentKind::kRateSweep;
      cfg.rates = parse_sweep(sweep_rate);
    }
    if (density > 0.0) cfg.density = density;
    if (skewness > 0) cfg.trace.skewness = skewness;
    if (noise_scale >= 0.0) cfg.sim.noise_scale = noise_scale;
    if (oracle_lengths) cfg.sim.scheduler.oracle_lengths = true;
    if (!out_dir.empty()) cfg.out_dir = out_dir;

    seasim::run_experiment(cfg);
    return 0;
  } catch (const seasim::InfeasibleError& e) {
    std::cerr << "infeasible placement: " << e.what() << "\n";
    return 3;
  } catch (const seasim::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const seasim::ParseError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const seasim::ValidationError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  }
}
