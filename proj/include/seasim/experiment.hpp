// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "seasim/config.hpp"
#include "seasim/placement.hpp"
#include "seasim/simulation.hpp"

namespace seasim {

/// Density scales the node count: a denser cluster has fewer GPUs for the
/// same workload (density 2 halves the GPU count).
inline GpuSpec scaled_cluster(const GpuSpec& base, double density) {
  GpuSpec scaled = base;
  scaled.num_nodes = std::max(1, static_cast<int>(std::llround(base.num_nodes / density)));
  return scaled;
}

/// Plan for a run: parsed from a file, dedicated minimum-TP groups, or the
/// two-stage search over this run's trace. Replacement-enabled runs start
/// from the dedicated plan and re-search at every interval boundary.
inline PlacementPlan resolve_plan(const ExperimentConfig& cfg, const GpuSpec& cluster,
                                  const Trace& trace) {
  if (cfg.placement_mode == "file") {
    std::ifstream in(cfg.plan_file);
    if (!in) throw ConfigError("cannot open plan file: " + cfg.plan_file);
    std::stringstream buf;
    buf << in.rdbuf();
    PlacementPlan plan = parse_plan(buf.str(), cfg.services);
    auto problems = validate_plan(plan, cluster, cfg.services.size(), cfg.placement.share_cap);
    if (!problems.empty())
      throw InfeasibleError("plan file invalid: " + problems.front());
    return plan;
  }
  if (cfg.placement_mode == "dedicated" || cfg.sim.replacement.enabled)
    return dedicated_plan(cluster, cfg.cost, cfg.services, cfg.placement,
                          cfg.sim.scheduler.batch_cap);
  return search_placement(cluster, cfg.cost, cfg.services, trace, cfg.sim, cfg.placement);
}

inline ReplanFn make_replan(const ExperimentConfig& cfg, const GpuSpec& cluster) {
  if (!cfg.sim.replacement.enabled) return {};
  return [&cfg, cluster](const Trace& history, const PlacementPlan& current) {
    if (history.empty()) return current;
    return search_placement(cluster, cfg.cost, cfg.services, history, cfg.sim, cfg.placement);
  };
}

struct RunOutput {
  std::string label;
  RunResult result;
  PlacementPlan plan;
  double rate = 0.0;
  double density = 1.0;
  int skewness = 1;
  double noise_scale = 0.0;
  Policy policy = Policy::kDb;
};

inline RunOutput execute_run(const ExperimentConfig& cfg, const std::string& label,
                             const Trace& trace) {
  const GpuSpec cluster = scaled_cluster(cfg.cluster, cfg.density);
  RunOutput out;
  out.label = label;
  out.rate = cfg.trace.rate;
  out.density = cfg.density;
  out.skewness = cfg.trace.skewness;
  out.noise_scale = cfg.sim.noise_scale;
  out.policy = cfg.sim.scheduler.policy;
  out.plan = resolve_plan(cfg, cluster, trace);
  if (!out.plan.feasible)
    throw InfeasibleError("run " + label + ": plan leaves " +
                          std::to_string(out.plan.unplaced.size()) + " service(s) unplaced");
  out.result = run_simulation(trace, out.plan, cfg.services, cfg.cost, cluster, cfg.sim,
                              make_replan(cfg, cluster));
  return out;
}

namespace detail {

inline nlohmann::ordered_json metrics_json(const ServiceMetrics& m) {
  nlohmann::ordered_json j;
  j["l_n_sum"] = m.l_n_sum;
  j["l_n_mean"] = m.l_n_mean;
  j["p99_latency"] = m.p99_latency;
  j["slo_attainment"] = m.slo_attainment;
  j["avg_ttft"] = m.avg_ttft;
  j["avg_tpot"] = m.avg_tpot;
  j["throughput"] = m.throughput;
  j["total"] = m.total;
  j["finished"] = m.finished;
  j["unservable"] = m.unservable;
  j["slo_constraint_met"] = m.slo_constraint_met;
  return j;
}

}  // namespace detail

/// Metrics JSON with stable key order; byte-identical across identical runs.
inline std::string report_to_json(const RunOutput& run,
                                  const std::vector<ServiceProfile>& profiles) {
  nlohmann::ordered_json j;
  j["run"] = run.label;
  j["policy"] = to_string(run.policy);
  j["rate"] = run.rate;
  j["density"] = run.density;
  j["skewness"] = run.skewness;
  j["noise_scale"] = run.noise_scale;
  j["delta"] = run.result.metrics.delta;
  j["aggregate"] = detail::metrics_json(run.result.metrics.aggregate);
  nlohmann::ordered_json per;
  for (std::size_t s = 0; s < run.result.metrics.per_service.size(); ++s)
    per[profiles[s].name] = detail::metrics_json(run.result.metrics.per_service[s]);
  j["per_service"] = per;
  nlohmann::ordered_json kv;
  for (std::size_t e = 0; e < run.result.kv_stats.size(); ++e) {
    const CacheStats& s = run.result.kv_stats[e];
    nlohmann::ordered_json je;
    je["block_table_entries"] = s.block_table_entries;
    je["native_reads_writes"] = s.native_reads_writes;
    je["internal_fragmentation_bytes"] = s.internal_fragmentation_bytes;
    je["peak_utilization"] = s.peak_utilization;
    kv["engine_" + std::to_string(e)] = je;
  }
  j["kv_cache"] = kv;
  nlohmann::ordered_json repl = nlohmann::ordered_json::array();
  for (const auto& ev : run.result.replacements) {
    nlohmann::ordered_json je;
    je["time"] = ev.time;
    je["old_interval"] = ev.old_interval;
    je["new_interval"] = ev.new_interval;
    je["m_real"] = ev.m_real;
    je["m_est"] = std::isnan(ev.m_est) ? nlohmann::ordered_json() : nlohmann::ordered_json(ev.m_est);
    je["plan_changed"] = ev.plan_changed;
    repl.push_back(je);
  }
  j["replacement_events"] = repl;
  return j.dump(2) + "\n";
}

inline constexpr const char* kCsvHeader =
    "run,policy,rate,density,skewness,noise_scale,l_n_mean,l_n_sum,p99_latency,"
    "slo_attainment,avg_ttft,avg_tpot,throughput,finished,unservable,total";

inline std::string csv_row(const RunOutput& run) {
  const ServiceMetrics& m = run.result.metrics.aggregate;
  char buf[512];
  std::snprintf(buf, sizeof(buf), "%s,%s,%.9g,%.9g,%d,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%zu,%zu,%zu",
                run.label.c_str(), to_string(run.policy), run.rate, run.density, run.skewness,
                run.noise_scale, m.l_n_mean, m.l_n_sum, m.p99_latency, m.slo_attainment,
                m.avg_ttft, m.avg_tpot, m.throughput, m.finished, m.unservable, m.total);
  return buf;
}

/// Runs the configured scenario and writes metrics JSON, CSV summary, run
/// logs and plans under out_dir. Returns the completed runs for callers that
/// want to inspect them (tests, the CLI table printer).
inline std::vector<RunOutput> run_experiment(const ExperimentConfig& base,
                                             std::ostream& console = std::cout) {
  namespace fs = std::filesystem;
  fs::create_directories(base.out_dir);

  struct Variant {
    std::string label;
    ExperimentConfig cfg;
  };
  std::vector<Variant> variants;
  auto label_num = [](const std::string& prefix, double v) {
    std::ostringstream s;
    s << prefix << v;
    return s.str();
  };

  switch (base.kind) {
    case ExperimentKind::kSingle: {
      variants.push_back({"single", base});
      break;
    }
    case ExperimentKind::kRateSweep: {
      if (base.rates.empty())
        throw ConfigError("rate_sweep: [experiment] rates is empty (or pass --sweep-rate)");
      for (double r : base.rates) {
        Variant v{label_num("rate_", r), base};
        v.cfg.trace.rate = r;
        variants.push_back(std::move(v));
      }
      break;
    }
    case ExperimentKind::kPolicyAblation: {
      std::vector<double> rates = base.rates.empty() ? std::vector<double>{base.trace.rate}
                                                     : base.rates;
      for (double r : rates)
        for (const auto& pol : base.policies) {
          Variant v{label_num(pol + "_rate_", r), base};
          v.cfg.trace.rate = r;
          v.cfg.sim.scheduler.policy = *parse_policy(pol);
          variants.push_back(std::move(v));
        }
      break;
    }
    case ExperimentKind::kDensityAblation: {
      for (double d : base.densities) {
        Variant v{label_num("density_", d), base};
        v.cfg.density = d;
        variants.push_back(std::move(v));
      }
      break;
    }
    case ExperimentKind::kSkewnessAblation: {
      for (double k : base.skewnesses) {
        Variant v{label_num("skewness_", k), base};
        v.cfg.trace.skewness = std::max(1, static_cast<int>(std::llround(k)));
        variants.push_back(std::move(v));
      }
      break;
    }
    case ExperimentKind::kNoiseAblation: {
      for (double n : base.noise_scales) {
        Variant v{label_num("noise_", n), base};
        v.cfg.sim.noise_scale = n;
        v.cfg.sim.scheduler.oracle_lengths = true;  // noise is on profiled lengths
        variants.push_back(std::move(v));
      }
      break;
    }
  }

  std::ofstream csv(fs::path(base.out_dir) / "summary.csv");
  csv << kCsvHeader << "\n";

  std::vector<RunOutput> outputs;
  console << "run                      policy  l_n_mean    p99(s)  slo_att   ttft(s)\n";
  for (const auto& variant : variants) {
    const Trace trace = build_trace(variant.cfg);
    RunOutput out = execute_run(variant.cfg, variant.label, trace);

    const fs::path dir = fs::path(base.out_dir) / variant.label;
    fs::create_directories(dir);
    std::ofstream(dir / "metrics.json") << report_to_json(out, variant.cfg.services);
    std::ofstream(dir / "plan.txt") << serialize_plan(out.plan, variant.cfg.services);
    if (variant.cfg.sim.collect_log) std::ofstream(dir / "run.log") << out.result.run_log;
    csv << csv_row(out) << "\n";

    const ServiceMetrics& m = out.result.metrics.aggregate;
    char line[256];
    std::snprintf(line, sizeof(line), "%-24s %-6s %9.3f %9.3f %8.3f %9.3f\n",
                  variant.label.c_str(), to_string(out.policy), m.l_n_mean, m.p99_latency,
                  m.slo_attainment, m.avg_ttft);
    console << line;
    outputs.push_back(std::move(out));
  }
  return outputs;
}

}  // namespace seasim
