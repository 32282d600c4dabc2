// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdio>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "seasim/common.hpp"
#include "seasim/cost_model.hpp"
#include "seasim/placement.hpp"
#include "seasim/replacement.hpp"
#include "seasim/scheduler.hpp"
#include "seasim/simulation.hpp"
#include "seasim/workload.hpp"

namespace seasim {

namespace detail {

struct IniSection {
  std::string header;  // full text between brackets
  std::vector<std::pair<std::string, std::string>> entries;

  std::optional<std::string> get(const std::string& key) const {
    for (const auto& [k, v] : entries)
      if (k == key) return v;
    return std::nullopt;
  }
};

struct IniFile {
  std::vector<IniSection> sections;

  std::vector<const IniSection*> all(const std::string& prefix) const {
    std::vector<const IniSection*> out;
    for (const auto& s : sections)
      if (s.header == prefix || s.header.rfind(prefix + " ", 0) == 0) out.push_back(&s);
    return out;
  }

  const IniSection* find(const std::string& header) const {
    for (const auto& s : sections)
      if (s.header == header) return &s;
    return nullptr;
  }
};

inline std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline IniFile parse_ini(std::istream& in, const std::string& origin) {
  IniFile file;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto comment = line.find_first_of(";#");
    if (comment != std::string::npos) line = line.substr(0, comment);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']')
        throw ParseError(origin + ":" + std::to_string(lineno) + ": unterminated section header");
      file.sections.push_back({trim(line.substr(1, line.size() - 2)), {}});
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ParseError(origin + ":" + std::to_string(lineno) + ": expected key = value");
    if (file.sections.empty())
      throw ParseError(origin + ":" + std::to_string(lineno) + ": key outside any section");
    file.sections.back().entries.emplace_back(trim(line.substr(0, eq)),
                                              trim(line.substr(eq + 1)));
  }
  return file;
}

// Typed lookup helpers; errors name the [section] key path.
class SectionView {
 public:
  SectionView(const IniSection* s, std::string name) : s_(s), name_(std::move(name)) {}

  bool present() const { return s_ != nullptr; }

  std::string str(const std::string& key, const std::string& def) const {
    if (!s_) return def;
    auto v = s_->get(key);
    return v ? *v : def;
  }

  double num(const std::string& key, double def) const {
    if (!s_) return def;
    auto v = s_->get(key);
    if (!v) return def;
    try {
      std::size_t used = 0;
      const double x = std::stod(*v, &used);
      if (used != v->size()) throw std::invalid_argument("");
      return x;
    } catch (const std::exception&) {
      throw ConfigError("[" + name_ + "] " + key + ": not a number: '" + *v + "'");
    }
  }

  long integer(const std::string& key, long def) const {
    const double x = num(key, static_cast<double>(def));
    const long i = static_cast<long>(x);
    if (static_cast<double>(i) != x)
      throw ConfigError("[" + name_ + "] " + key + ": expected an integer");
    return i;
  }

  bool boolean(const std::string& key, bool def) const {
    if (!s_) return def;
    auto v = s_->get(key);
    if (!v) return def;
    if (*v == "true" || *v == "1" || *v == "yes" || *v == "on") return true;
    if (*v == "false" || *v == "0" || *v == "no" || *v == "off") return false;
    throw ConfigError("[" + name_ + "] " + key + ": expected a boolean, got '" + *v + "'");
  }

  std::vector<std::string> list(const std::string& key,
                                const std::vector<std::string>& def) const {
    if (!s_) return def;
    auto v = s_->get(key);
    if (!v) return def;
    std::vector<std::string> out;
    std::istringstream ss(*v);
    std::string item;
    while (std::getline(ss, item, ',')) {
      item = trim(item);
      if (!item.empty()) out.push_back(item);
    }
    return out;
  }

  std::vector<double> num_list(const std::string& key, const std::vector<double>& def) const {
    auto items = list(key, {});
    if (items.empty()) return def;
    std::vector<double> out;
    for (const auto& item : items) {
      try {
        out.push_back(std::stod(item));
      } catch (const std::exception&) {
        throw ConfigError("[" + name_ + "] " + key + ": not a number: '" + item + "'");
      }
    }
    return out;
  }

 private:
  const IniSection* s_;
  std::string name_;
};

inline std::string fmt_num(double x) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

}  // namespace detail

enum class ExperimentKind {
  kSingle,
  kRateSweep,
  kPolicyAblation,
  kDensityAblation,
  kSkewnessAblation,
  kNoiseAblation
};

inline const char* to_string(ExperimentKind k) {
  switch (k) {
    case ExperimentKind::kSingle: return "single";
    case ExperimentKind::kRateSweep: return "rate_sweep";
    case ExperimentKind::kPolicyAblation: return "policy_ablation";
    case ExperimentKind::kDensityAblation: return "density_ablation";
    case ExperimentKind::kSkewnessAblation: return "skewness_ablation";
    case ExperimentKind::kNoiseAblation: return "noise_ablation";
  }
  return "?";
}

struct TraceConfig {
  std::string kind = "synthetic";  // synthetic | file
  double rate = 4.0;
  double duration = 120.0;
  int skewness = 1;
  std::uint64_t seed = 7;
  std::string file;
  RateProfile shape;
};

/// Fully normalized experiment description. All paper-default constants are
/// injected here so downstream code never guesses.
struct ExperimentConfig {
  ExperimentKind kind = ExperimentKind::kSingle;
  std::uint64_t seed = 1;
  std::string out_dir = "out";
  std::vector<double> rates;         // rate_sweep / policy_ablation
  std::vector<std::string> policies; // policy_ablation
  std::vector<double> densities;     // density_ablation
  std::vector<double> skewnesses;    // skewness_ablation
  std::vector<double> noise_scales;  // noise_ablation
  double density = 1.0;

  GpuSpec cluster;
  CostModel cost;
  std::vector<ServiceProfile> services;
  TraceConfig trace;
  SimOptions sim;
  PlacementConfig placement;
  std::string placement_mode = "search";  // search | dedicated | file
  std::string plan_file;
  double starvation_scale = 5.0;  // threshold = scale * service SLO
};

namespace detail {

constexpr std::uint64_t kProfileSeed = 0xbeef1e57ULL;

inline void build_service_stats(ServiceProfile& p, const CostModel& cost, double slo_scale,
                                double starvation_scale, const IniSection* section) {
  const int min_tp = cost.model(p.model_id).min_tp;
  auto [mean, stddev] = estimate_exec_stats(p, cost, min_tp, kProfileSeed);
  // Budgets are kept in single-GPU-equivalent seconds.
  p.mean_exec_time = mean * min_tp;
  p.exec_time_stddev = stddev * min_tp;
  SectionView view(section, "service " + p.name);
  const double default_slo = slo_scale * mean;  // wall seconds at min TP
  p.slo = view.num("slo", default_slo);
  p.starvation_threshold = view.num("starvation_threshold", starvation_scale * p.slo);
  p.validate();
}

}  // namespace detail

inline ExperimentConfig config_from_ini(const detail::IniFile& ini) {
  using detail::SectionView;
  ExperimentConfig cfg;

  SectionView exp(ini.find("experiment"), "experiment");
  {
    const std::string kind = exp.str("kind", "single");
    if (kind == "single")
      cfg.kind = ExperimentKind::kSingle;
    else if (kind == "rate_sweep")
      cfg.kind = ExperimentKind::kRateSweep;
    else if (kind == "policy_ablation")
      cfg.kind = ExperimentKind::kPolicyAblation;
    else if (kind == "density_ablation")
      cfg.kind = ExperimentKind::kDensityAblation;
    else if (kind == "skewness_ablation")
      cfg.kind = ExperimentKind::kSkewnessAblation;
    else if (kind == "noise_ablation")
      cfg.kind = ExperimentKind::kNoiseAblation;
    else
      throw ConfigError("[experiment] kind: unknown '" + kind +
                        "' (expected single|rate_sweep|policy_ablation|density_ablation|"
                        "skewness_ablation|noise_ablation)");
    cfg.seed = static_cast<std::uint64_t>(exp.integer("seed", 1));
    cfg.out_dir = exp.str("out_dir", "out");
    cfg.rates = exp.num_list("rates", {});
    cfg.policies = exp.list("policies", {"db", "fcfs", "rr", "mlfq"});
    cfg.densities = exp.num_list("densities", {0.5, 1.0, 2.0});
    cfg.skewnesses = exp.num_list("skewnesses", {1, 4, 16});
    cfg.noise_scales = exp.num_list("noise_scales", {0, 1, 4, 16});
    cfg.density = exp.num("density", 1.0);
    for (const auto& pol : cfg.policies)
      if (!parse_policy(pol))
        throw ConfigError("[experiment] policies: unknown '" + pol +
                          "' (expected db|fcfs|rr|mlfq)");
    if (cfg.density <= 0.0) throw ConfigError("[experiment] density: must be > 0");
  }

  SectionView cluster(ini.find("cluster"), "cluster");
  cfg.cluster.num_nodes = static_cast<int>(cluster.integer("num_nodes", 1));
  cfg.cluster.gpus_per_node = static_cast<int>(cluster.integer("gpus_per_node", 8));
  cfg.cluster.mem_bytes = cluster.num("gpu_mem_gb", 80.0) * kGiB;
  // Density scales the node count: density 2 halves the cluster.
  cfg.cluster.num_nodes =
      std::max(1, static_cast<int>(std::llround(cfg.cluster.num_nodes / cfg.density)));
  cfg.cluster.validate();

  cfg.cost = default_cost_model();
  for (const auto* s : ini.all("model")) {
    std::istringstream hs(s->header);
    std::string word, model_id;
    hs >> word >> model_id;
    if (model_id.empty()) throw ConfigError("[model] section needs a name: [model <id>]");
    SectionView view(s, s->header);
    ModelSpec spec;
    spec.model_id = model_id;
    spec.num_layers = static_cast<int>(view.integer("num_layers", 32));
    spec.num_heads = static_cast<int>(view.integer("num_heads", 32));
    spec.head_dim = static_cast<int>(view.integer("head_dim", 128));
    spec.dtype_bytes = static_cast<int>(view.integer("dtype_bytes", 2));
    spec.weight_bytes = view.num("weight_gb", 14.0) * kGiB;
    spec.min_tp = static_cast<int>(view.integer("min_tp", 1));
    cfg.cost.add_model(spec);
  }
  for (const auto* s : ini.all("cost")) {
    std::istringstream hs(s->header);
    std::string word, model_id, tp_word;
    hs >> word >> model_id >> tp_word;
    if (model_id.empty() || tp_word.rfind("tp=", 0) != 0)
      throw ConfigError("[cost] section header must be [cost <model> tp=<n>]");
    const int tp = std::stoi(tp_word.substr(3));
    SectionView view(s, s->header);
    CostCoeffs c;
    c.prefill_fixed = view.num("prefill_fixed", 0.0);
    c.prefill_per_token = view.num("prefill_per_token", 0.0);
    c.decode_fixed = view.num("decode_fixed", 0.0);
    c.decode_per_seq = view.num("decode_per_seq", 0.0);
    c.decode_per_context_token = view.num("decode_per_context_token", 0.0);
    c.activation_base = view.num("activation_base_gb", 0.5) * kGiB;
    c.activation_per_seq = view.num("activation_per_seq_gb", 0.02) * kGiB;
    cfg.cost.add_entry(model_id, tp, c);
  }

  SectionView simv(ini.find("simulation"), "simulation");
  cfg.sim.tokens_per_block = static_cast<int>(simv.integer("tokens_per_block", 16));
  cfg.sim.slo_scale = simv.num("slo_scale", 5.0);
  cfg.sim.delta = simv.num("delta", 0.9);
  cfg.sim.kv_pool_cap_bytes = simv.num("kv_pool_cap_gb", 0.0) * kGiB;
  cfg.sim.collect_log = simv.boolean("run_log", false);
  if (cfg.sim.tokens_per_block < 1)
    throw ConfigError("[simulation] tokens_per_block: must be >= 1");
  if (cfg.sim.slo_scale <= 0.0) throw ConfigError("[simulation] slo_scale: must be > 0");
  if (cfg.sim.delta < 0.0 || cfg.sim.delta > 1.0)
    throw ConfigError("[simulation] delta: must be in [0,1]");

  SectionView sched(ini.find("scheduler"), "scheduler");
  {
    const std::string pol = sched.str("policy", "db");
    auto parsed = parse_policy(pol);
    if (!parsed)
      throw ConfigError("[scheduler] policy: unknown '" + pol + "' (expected db|fcfs|rr|mlfq)");
    cfg.sim.scheduler.policy = *parsed;
    cfg.sim.scheduler.batch_cap = static_cast<int>(sched.integer("batch_cap", 16));
    cfg.sim.scheduler.oracle_lengths = sched.boolean("oracle_lengths", false);
    cfg.sim.scheduler.starvation_enabled = sched.boolean("starvation", true);
    cfg.sim.scheduler.mlfq_levels = static_cast<int>(sched.integer("mlfq_levels", 4));
    cfg.sim.scheduler.mlfq_base_quantum = sched.num("mlfq_base_quantum", 0.25);
    cfg.sim.scheduler.mlfq_quantum_ratio = sched.num("mlfq_quantum_ratio", 2.0);
    cfg.sim.noise_scale = sched.num("noise_scale", 0.0);
    if (cfg.sim.scheduler.batch_cap < 1) throw ConfigError("[scheduler] batch_cap: must be >= 1");
    if (cfg.sim.scheduler.mlfq_levels < 1) throw ConfigError("[scheduler] mlfq_levels: must be >= 1");
    if (cfg.sim.scheduler.mlfq_base_quantum <= 0.0 || cfg.sim.scheduler.mlfq_quantum_ratio < 1.0)
      throw ConfigError("[scheduler] mlfq quantum settings out of range");
    if (cfg.sim.noise_scale < 0.0) throw ConfigError("[scheduler] noise_scale: must be >= 0");
  }

  SectionView repl(ini.find("replacement"), "replacement");
  cfg.sim.replacement.enabled = repl.boolean("enabled", false);
  cfg.sim.replacement.adaptive = repl.boolean("adaptive", true);
  cfg.sim.replacement.initial_interval = repl.num("initial_interval", 600.0);
  cfg.sim.replacement.min_interval = repl.num("min_interval", 60.0);
  cfg.sim.replacement.max_interval = repl.num("max_interval", 3600.0);
  cfg.sim.replacement.beta = repl.num("beta", 0.1);
  cfg.sim.replacement.migrate_pause = repl.num("migrate_pause", 5.0);
  {
    const std::string metric = repl.str("metric", "normalized_latency");
    if (metric == "normalized_latency")
      cfg.sim.replacement.metric = ReplacementMetric::kNormalizedLatency;
    else if (metric == "slo_attainment")
      cfg.sim.replacement.metric = ReplacementMetric::kSloAttainment;
    else
      throw ConfigError("[replacement] metric: unknown '" + metric +
                        "' (expected normalized_latency|slo_attainment)");
  }
  cfg.sim.replacement.validate();

  SectionView plc(ini.find("placement"), "placement");
  cfg.placement.share_cap = static_cast<int>(plc.integer("share_cap", 2));
  cfg.placement.alpha = plc.num("alpha", 0.0001);
  cfg.placement.replica_cap = static_cast<int>(plc.integer("replica_cap", 0));
  cfg.placement.kv_reserve_bytes = plc.num("kv_reserve_gb", 4.0) * kGiB;
  cfg.placement.parallel = plc.boolean("parallel", true);
  cfg.placement_mode = plc.str("mode", "search");
  cfg.plan_file = plc.str("plan_file", "");
  if (cfg.placement.share_cap < 1) throw ConfigError("[placement] share_cap: must be >= 1");
  if (cfg.placement.alpha < 0.0) throw ConfigError("[placement] alpha: must be >= 0");
  if (cfg.placement_mode != "search" && cfg.placement_mode != "dedicated" &&
      cfg.placement_mode != "file")
    throw ConfigError("[placement] mode: unknown '" + cfg.placement_mode +
                      "' (expected search|dedicated|file)");
  if (cfg.placement_mode == "file" && cfg.plan_file.empty())
    throw ConfigError("[placement] plan_file: required when mode = file");

  SectionView trace(ini.find("trace"), "trace");
  cfg.trace.kind = trace.str("kind", "synthetic");
  cfg.trace.rate = trace.num("rate", 4.0);
  cfg.trace.duration = trace.num("duration", 120.0);
  cfg.trace.skewness = static_cast<int>(trace.integer("skewness", 1));
  cfg.trace.seed = static_cast<std::uint64_t>(trace.integer("seed", 7));
  cfg.trace.file = trace.str("file", "");
  {
    const std::string shape = trace.str("rate_profile", "constant");
    if (shape == "constant")
      cfg.trace.shape.kind = RateProfile::Kind::kConstant;
    else if (shape == "step")
      cfg.trace.shape.kind = RateProfile::Kind::kStep;
    else if (shape == "diurnal")
      cfg.trace.shape.kind = RateProfile::Kind::kDiurnal;
    else
      throw ConfigError("[trace] rate_profile: unknown '" + shape +
                        "' (expected constant|step|diurnal)");
    cfg.trace.shape.step_time = trace.num("step_time", 0.0);
    cfg.trace.shape.step_factor = trace.num("step_factor", 1.0);
    cfg.trace.shape.diurnal_period = trace.num("diurnal_period", 3600.0);
    cfg.trace.shape.diurnal_depth = trace.num("diurnal_depth", 0.5);
  }
  if (cfg.trace.kind != "synthetic" && cfg.trace.kind != "file")
    throw ConfigError("[trace] kind: unknown '" + cfg.trace.kind + "' (expected synthetic|file)");
  if (cfg.trace.kind == "synthetic" && cfg.trace.rate <= 0.0)
    throw ConfigError("[trace] rate: must be > 0");
  if (cfg.trace.kind == "file" && cfg.trace.file.empty())
    throw ConfigError("[trace] file: required when kind = file");
  if (cfg.trace.skewness < 1) throw ConfigError("[trace] skewness: must be >= 1");

  const auto service_sections = ini.all("service");
  if (service_sections.empty()) throw ConfigError("config defines no [service <name>] sections");
  cfg.sim.seed = cfg.seed;
  cfg.starvation_scale = sched.num("starvation_scale", 5.0);
  if (cfg.starvation_scale <= 0.0)
    throw ConfigError("[scheduler] starvation_scale: must be > 0");
  for (const auto* s : service_sections) {
    std::istringstream hs(s->header);
    std::string word, name;
    hs >> word >> name;
    if (name.empty()) throw ConfigError("[service] section needs a name: [service <name>]");
    SectionView view(s, s->header);
    ServiceProfile p;
    p.name = name;
    p.model_id = view.str("model", "llama2-7b");
    cfg.cost.model(p.model_id);  // must exist
    p.input_len_dist.mean = view.num("input_mean", 128.0);
    p.input_len_dist.stddev = view.num("input_stddev", 0.0);
    p.output_len_dist.mean = view.num("output_mean", 64.0);
    p.output_len_dist.stddev = view.num("output_stddev", 0.0);
    if (p.input_len_dist.mean < 1.0 || p.output_len_dist.mean < 1.0)
      throw ConfigError("[" + s->header + "]: length means must be >= 1");
    detail::build_service_stats(p, cfg.cost, cfg.sim.slo_scale, cfg.starvation_scale, s);
    cfg.services.push_back(std::move(p));
  }
  return cfg;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  auto ini = detail::parse_ini(in, path);
  return config_from_ini(ini);
}

inline ExperimentConfig parse_config(const std::string& text) {
  std::istringstream in(text);
  auto ini = detail::parse_ini(in, "<inline>");
  return config_from_ini(ini);
}

/// Canonical dump of a normalized config; reloading the dump yields the same
/// dump (round-trip identity).
inline std::string dump_config(const ExperimentConfig& cfg) {
  using detail::fmt_num;
  std::ostringstream out;
  out << "[experiment]\n";
  out << "kind = " << to_string(cfg.kind) << "\n";
  out << "seed = " << cfg.seed << "\n";
  out << "out_dir = " << cfg.out_dir << "\n";
  auto dump_list = [&](const char* key, const std::vector<double>& xs) {
    if (xs.empty()) return;
    out << key << " = ";
    for (std::size_t i = 0; i < xs.size(); ++i) out << (i ? "," : "") << fmt_num(xs[i]);
    out << "\n";
  };
  dump_list("rates", cfg.rates);
  out << "policies = ";
  for (std::size_t i = 0; i < cfg.policies.size(); ++i) out << (i ? "," : "") << cfg.policies[i];
  out << "\n";
  dump_list("densities", cfg.densities);
  dump_list("skewnesses", cfg.skewnesses);
  dump_list("noise_scales", cfg.noise_scales);

  out << "\n[cluster]\n";
  out << "num_nodes = " << cfg.cluster.num_nodes << "\n";
  out << "gpus_per_node = " << cfg.cluster.gpus_per_node << "\n";
  out << "gpu_mem_gb = " << fmt_num(cfg.cluster.mem_bytes / kGiB) << "\n";

  out << "\n[simulation]\n";
  out << "tokens_per_block = " << cfg.sim.tokens_per_block << "\n";
  out << "slo_scale = " << fmt_num(cfg.sim.slo_scale) << "\n";
  out << "delta = " << fmt_num(cfg.sim.delta) << "\n";
  out << "kv_pool_cap_gb = " << fmt_num(cfg.sim.kv_pool_cap_bytes / kGiB) << "\n";
  out << "run_log = " << (cfg.sim.collect_log ? "true" : "false") << "\n";

  out << "\n[scheduler]\n";
  out << "policy = " << to_string(cfg.sim.scheduler.policy) << "\n";
  out << "batch_cap = " << cfg.sim.scheduler.batch_cap << "\n";
  out << "oracle_lengths = " << (cfg.sim.scheduler.oracle_lengths ? "true" : "false") << "\n";
  out << "starvation = " << (cfg.sim.scheduler.starvation_enabled ? "true" : "false") << "\n";
  out << "starvation_scale = " << fmt_num(cfg.starvation_scale) << "\n";
  out << "mlfq_levels = " << cfg.sim.scheduler.mlfq_levels << "\n";
  out << "mlfq_base_quantum = " << fmt_num(cfg.sim.scheduler.mlfq_base_quantum) << "\n";
  out << "mlfq_quantum_ratio = " << fmt_num(cfg.sim.scheduler.mlfq_quantum_ratio) << "\n";
  out << "noise_scale = " << fmt_num(cfg.sim.noise_scale) << "\n";

  out << "\n[replacement]\n";
  out << "enabled = " << (cfg.sim.replacement.enabled ? "true" : "false") << "\n";
  out << "adaptive = " << (cfg.sim.replacement.adaptive ? "true" : "false") << "\n";
  out << "initial_interval = " << fmt_num(cfg.sim.replacement.initial_interval) << "\n";
  out << "min_interval = " << fmt_num(cfg.sim.replacement.min_interval) << "\n";
  out << "max_interval = " << fmt_num(cfg.sim.replacement.max_interval) << "\n";
  out << "beta = " << fmt_num(cfg.sim.replacement.beta) << "\n";
  out << "migrate_pause = " << fmt_num(cfg.sim.replacement.migrate_pause) << "\n";
  out << "metric = "
      << (cfg.sim.replacement.metric == ReplacementMetric::kNormalizedLatency
              ? "normalized_latency"
              : "slo_attainment")
      << "\n";

  out << "\n[placement]\n";
  out << "mode = " << cfg.placement_mode << "\n";
  if (!cfg.plan_file.empty()) out << "plan_file = " << cfg.plan_file << "\n";
  out << "share_cap = " << cfg.placement.share_cap << "\n";
  out << "alpha = " << fmt_num(cfg.placement.alpha) << "\n";
  out << "replica_cap = " << cfg.placement.replica_cap << "\n";
  out << "kv_reserve_gb = " << fmt_num(cfg.placement.kv_reserve_bytes / kGiB) << "\n";
  out << "parallel = " << (cfg.placement.parallel ? "true" : "false") << "\n";

  out << "\n[trace]\n";
  out << "kind = " << cfg.trace.kind << "\n";
  if (cfg.trace.kind == "file") out << "file = " << cfg.trace.file << "\n";
  out << "rate = " << fmt_num(cfg.trace.rate) << "\n";
  out << "duration = " << fmt_num(cfg.trace.duration) << "\n";
  out << "skewness = " << cfg.trace.skewness << "\n";
  out << "seed = " << cfg.trace.seed << "\n";
  const char* shape = cfg.trace.shape.kind == RateProfile::Kind::kConstant ? "constant"
                      : cfg.trace.shape.kind == RateProfile::Kind::kStep   ? "step"
                                                                           : "diurnal";
  out << "rate_profile = " << shape << "\n";
  if (cfg.trace.shape.kind == RateProfile::Kind::kStep) {
    out << "step_time = " << fmt_num(cfg.trace.shape.step_time) << "\n";
    out << "step_factor = " << fmt_num(cfg.trace.shape.step_factor) << "\n";
  }
  if (cfg.trace.shape.kind == RateProfile::Kind::kDiurnal) {
    out << "diurnal_period = " << fmt_num(cfg.trace.shape.diurnal_period) << "\n";
    out << "diurnal_depth = " << fmt_num(cfg.trace.shape.diurnal_depth) << "\n";
  }

  for (const auto& p : cfg.services) {
    out << "\n[service " << p.name << "]\n";
    out << "model = " << p.model_id << "\n";
    out << "input_mean = " << fmt_num(p.input_len_dist.mean) << "\n";
    out << "input_stddev = " << fmt_num(p.input_len_dist.stddev) << "\n";
    out << "output_mean = " << fmt_num(p.output_len_dist.mean) << "\n";
    out << "output_stddev = " << fmt_num(p.output_len_dist.stddev) << "\n";
    out << "slo = " << fmt_num(p.slo) << "\n";
    out << "starvation_threshold = " << fmt_num(p.starvation_threshold) << "\n";
  }
  return out.str();
}

/// Builds the arrival trace the configured way. Synthetic generation is a
/// pure function of the config; file traces are validated on load.
inline Trace build_trace(const ExperimentConfig& cfg) {
  if (cfg.trace.kind == "file") {
    Trace t = load_trace(cfg.trace.file);
    t.validate(cfg.services);
    return t;
  }
  return generate_trace(cfg.services, cfg.trace.rate, cfg.trace.duration, cfg.trace.skewness,
                        cfg.trace.seed, cfg.trace.shape);
}

}  // namespace seasim
