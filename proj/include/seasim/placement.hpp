// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <future>
#include <numeric>
#include <vector>

#include "seasim/common.hpp"
#include "seasim/cost_model.hpp"
#include "seasim/metrics.hpp"
#include "seasim/placement_plan.hpp"
#include "seasim/simulation.hpp"
#include "seasim/workload.hpp"

namespace seasim {

struct PlacementConfig {
  int share_cap = 2;            // services per local engine
  double alpha = 1e-4;          // UI weight of the normalized latency term
  int replica_cap = 0;          // groups allowed to serve one service; 0 = unlimited
  double kv_reserve_bytes = 4.0 * kGiB;  // per-engine pool floor for memory checks
  bool parallel = true;         // candidate evaluation may fan out
};

/// Unserved index entry per Eq-style ranking: SLO-violating request count
/// dominates, alpha-weighted per-service normalized latency breaks ties.
struct UnservedIndexEntry {
  std::size_t service = 0;
  std::size_t unserved_count = 0;
  double norm_latency_s = 0.0;
  double ui = 0.0;
};

/// Smallest usable power-of-two TP size for a model: at least min_tp,
/// dividing the head count, fitting one node, with a profiled cost entry.
inline int required_tp(const ModelSpec& model, const GpuSpec& cluster, const CostModel& cost) {
  for (int tp = 1; tp <= cluster.gpus_per_node; tp *= 2) {
    if (tp < model.min_tp) continue;
    if (model.num_heads % tp != 0) continue;
    if (!cost.has_entry(model.model_id, tp)) continue;
    return tp;
  }
  throw InfeasibleError("model " + model.model_id + " fits no TP size up to " +
                        std::to_string(cluster.gpus_per_node) + " GPUs per node");
}

/// Stage one: one candidate per power-of-two TP size up to the node width.
/// Each node splits into uniform groups; when a model needs more GPUs than
/// the group size, equal-size neighbor groups on one node merge (doubling)
/// until a large-enough group exists.
inline std::vector<std::vector<SharingGroup>> enumerate_partitions(
    const GpuSpec& cluster, const CostModel& cost,
    const std::vector<ServiceProfile>& services) {
  if (cluster.total_gpus() < 1) throw ConfigError("enumerate_partitions: empty cluster");
  int max_required = 1;
  for (const auto& svc : services)
    max_required = std::max(max_required, required_tp(cost.model(svc.model_id), cluster, cost));

  std::vector<std::vector<SharingGroup>> candidates;
  for (int tp = 1; tp <= cluster.gpus_per_node; tp *= 2) {
    std::vector<SharingGroup> groups;
    for (int node = 0; node < cluster.num_nodes; ++node) {
      for (int g = 0; g + tp <= cluster.gpus_per_node; g += tp) {
        SharingGroup group;
        group.node_id = node;
        group.tp_size = tp;
        for (int k = 0; k < tp; ++k)
          group.gpu_ids.push_back(node * cluster.gpus_per_node + g + k);
        groups.push_back(std::move(group));
      }
    }
    // Merge on the lowest node until the biggest group hosts every model.
    while (true) {
      int biggest = 0;
      for (const auto& g : groups) biggest = std::max(biggest, g.tp_size);
      if (biggest >= max_required) break;
      bool merged = false;
      for (int node = 0; node < cluster.num_nodes && !merged; ++node) {
        // Two lowest-indexed equal smallest-size groups on this node.
        int smallest = cluster.gpus_per_node + 1;
        for (const auto& g : groups)
          if (g.node_id == node) smallest = std::min(smallest, g.tp_size);
        std::vector<std::size_t> pick;
        for (std::size_t i = 0; i < groups.size() && pick.size() < 2; ++i)
          if (groups[i].node_id == node && groups[i].tp_size == smallest) pick.push_back(i);
        if (pick.size() < 2) continue;
        SharingGroup& a = groups[pick[0]];
        SharingGroup& b = groups[pick[1]];
        a.gpu_ids.insert(a.gpu_ids.end(), b.gpu_ids.begin(), b.gpu_ids.end());
        std::sort(a.gpu_ids.begin(), a.gpu_ids.end());
        a.tp_size = static_cast<int>(a.gpu_ids.size());
        groups.erase(groups.begin() + static_cast<long>(pick[1]));
        merged = true;
      }
      if (!merged)
        throw InfeasibleError("no partition can host a model needing tp=" +
                              std::to_string(max_required));
    }
    std::sort(groups.begin(), groups.end(), [](const SharingGroup& a, const SharingGroup& b) {
      return a.gpu_ids.front() < b.gpu_ids.front();
    });
    candidates.push_back(std::move(groups));
  }
  return candidates;
}

namespace detail {

inline std::vector<UnservedIndexEntry> unserved_index(const std::vector<Request>& requests,
                                                      const std::vector<ServiceProfile>& profiles,
                                                      const MetricContext& ctx, double alpha) {
  std::vector<UnservedIndexEntry> ui(profiles.size());
  for (std::size_t s = 0; s < profiles.size(); ++s) ui[s].service = s;
  for (const auto& r : requests) {
    UnservedIndexEntry& e = ui[r.service];
    if (!r.finished()) {
      ++e.unserved_count;  // unservable or still queued: cannot meet its SLO
      continue;
    }
    const double lat = r.latency();
    if (lat > profiles[r.service].slo) ++e.unserved_count;
    e.norm_latency_s += lat / ctx.norm_exec[r.service];
  }
  for (auto& e : ui) e.ui = static_cast<double>(e.unserved_count) + alpha * e.norm_latency_s;
  return ui;
}

inline bool can_allocate(const SharingGroup& group, std::size_t svc,
                         const std::vector<ServiceProfile>& profiles, const CostModel& cost,
                         const GpuSpec& cluster, const PlacementConfig& pcfg,
                         const PlacementPlan& plan, int batch_cap) {
  if (group.serves(svc)) return false;
  if (static_cast<int>(group.services.size()) >= pcfg.share_cap) return false;
  if (pcfg.replica_cap > 0) {
    int replicas = 0;
    for (const auto& g : plan.groups) replicas += g.serves(svc) ? 1 : 0;
    if (replicas >= pcfg.replica_cap) return false;
  }
  const ModelSpec& model = cost.model(profiles[svc].model_id);
  if (model.num_heads % group.tp_size != 0) return false;
  if (group.tp_size < model.min_tp) return false;
  if (!cost.has_entry(model.model_id, group.tp_size)) return false;
  // Memory check over the group's distinct models plus the newcomer.
  std::vector<std::string> model_ids;
  for (std::size_t s : group.services) {
    const std::string& mid = profiles[s].model_id;
    if (std::find(model_ids.begin(), model_ids.end(), mid) == model_ids.end())
      model_ids.push_back(mid);
  }
  if (std::find(model_ids.begin(), model_ids.end(), model.model_id) == model_ids.end())
    model_ids.push_back(model.model_id);
  const double per_gpu =
      cost.memory_footprint(model_ids, group.tp_size, pcfg.kv_reserve_bytes, batch_cap);
  return per_gpu <= cluster.mem_bytes;
}

}  // namespace detail

/// Stage two: iterative service allocation. Each pass simulates the history
/// under the partial plan, then gives the lowest-rate group the most
/// unserved allocatable service; passes repeat until nothing places.
/// Services may land in several groups (replicas) on later passes.
inline PlacementPlan allocate_services(const std::vector<SharingGroup>& partition,
                                       const std::vector<ServiceProfile>& profiles,
                                       const Trace& history, const CostModel& cost,
                                       const GpuSpec& cluster, const SimOptions& sim_opts,
                                       const PlacementConfig& pcfg) {
  PlacementPlan plan;
  plan.groups = partition;
  const MetricContext ctx =
      MetricContext::make(profiles, cost, sim_opts.slo_scale, sim_opts.delta);

  std::vector<std::size_t> hist_count(profiles.size(), 0);
  {
    std::unordered_map<std::string, std::size_t> by_name;
    for (std::size_t s = 0; s < profiles.size(); ++s) by_name[profiles[s].name] = s;
    for (const auto& rec : history.records) ++hist_count[by_name.at(rec.service_id)];
  }

  SimOptions pass_opts = sim_opts;
  pass_opts.replacement.enabled = false;
  pass_opts.collect_log = false;

  const std::size_t max_passes = plan.groups.size() * static_cast<std::size_t>(pcfg.share_cap) + 1;
  for (std::size_t pass = 0; pass < max_passes; ++pass) {
    RunResult sim = run_simulation(history, plan, profiles, cost, cluster, pass_opts);
    std::vector<UnservedIndexEntry> ui =
        detail::unserved_index(sim.requests, profiles, ctx, pcfg.alpha);

    std::vector<std::size_t> group_order(plan.groups.size());
    std::iota(group_order.begin(), group_order.end(), 0);
    std::stable_sort(group_order.begin(), group_order.end(), [&](std::size_t a, std::size_t b) {
      auto load = [&](std::size_t gi) {
        std::size_t total = 0;
        for (std::size_t s : plan.groups[gi].services) total += hist_count[s];
        return total;
      };
      return load(a) < load(b);
    });
    std::vector<UnservedIndexEntry> svc_order = ui;
    std::stable_sort(svc_order.begin(), svc_order.end(),
                     [](const UnservedIndexEntry& a, const UnservedIndexEntry& b) {
                       if (a.ui != b.ui) return a.ui > b.ui;
                       return a.service < b.service;
                     });

    bool placed = false;
    for (std::size_t gi : group_order) {
      for (const auto& entry : svc_order) {
        if (detail::can_allocate(plan.groups[gi], entry.service, profiles, cost, cluster, pcfg,
                                 plan, sim_opts.scheduler.batch_cap)) {
          plan.groups[gi].services.push_back(entry.service);
          placed = true;
          break;
        }
      }
      if (placed) break;
    }
    if (!placed) break;
  }

  for (std::size_t s = 0; s < profiles.size(); ++s)
    if (!plan.serves(s)) {
      plan.unplaced.push_back(s);
      plan.feasible = false;
    }
  return plan;
}

/// Full two-stage search: allocate services onto every candidate partition,
/// simulate the history under each resulting plan, and keep the plan with
/// the highest SLO attainment, ties broken by lower normalized latency and
/// then candidate order. Candidate evaluation is pure, so it may fan out;
/// the aggregation is index-ordered either way.
inline PlacementPlan search_placement(const GpuSpec& cluster, const CostModel& cost,
                                      const std::vector<ServiceProfile>& profiles,
                                      const Trace& history, const SimOptions& sim_opts,
                                      const PlacementConfig& pcfg) {
  const auto partitions = enumerate_partitions(cluster, cost, profiles);
  SimOptions eval_opts = sim_opts;
  eval_opts.replacement.enabled = false;
  eval_opts.collect_log = false;

  struct Outcome {
    PlacementPlan plan;
    double slo = 0.0;
    double l_n = 0.0;
  };
  auto evaluate = [&](const std::vector<SharingGroup>& partition) {
    Outcome out;
    out.plan =
        allocate_services(partition, profiles, history, cost, cluster, eval_opts, pcfg);
    RunResult sim = run_simulation(history, out.plan, profiles, cost, cluster, eval_opts);
    out.slo = sim.metrics.aggregate.slo_attainment;
    out.l_n = sim.metrics.aggregate.l_n_mean;
    return out;
  };

  std::vector<Outcome> outcomes(partitions.size());
  if (pcfg.parallel && partitions.size() > 1) {
    std::vector<std::future<Outcome>> futures;
    for (const auto& p : partitions)
      futures.push_back(std::async(std::launch::async, evaluate, std::cref(p)));
    for (std::size_t i = 0; i < futures.size(); ++i) outcomes[i] = futures[i].get();
  } else {
    for (std::size_t i = 0; i < partitions.size(); ++i) outcomes[i] = evaluate(partitions[i]);
  }

  std::optional<std::size_t> best;
  for (std::size_t i = 0; i < outcomes.size(); ++i) {
    if (!outcomes[i].plan.feasible) continue;
    if (!best || outcomes[i].slo > outcomes[*best].slo ||
        (outcomes[i].slo == outcomes[*best].slo && outcomes[i].l_n < outcomes[*best].l_n))
      best = i;
  }
  if (!best) throw InfeasibleError("search_placement: no candidate placed every service");
  return outcomes[*best].plan;
}

/// Initial plan for services with no history: each gets a dedicated group of
/// its minimum TP size, packed first-fit; services that no longer fit join an
/// existing group when the share cap and memory allow.
inline PlacementPlan dedicated_plan(const GpuSpec& cluster, const CostModel& cost,
                                    const std::vector<ServiceProfile>& profiles,
                                    const PlacementConfig& pcfg, int batch_cap) {
  PlacementPlan plan;
  std::vector<int> next_free(cluster.num_nodes, 0);
  for (std::size_t svc = 0; svc < profiles.size(); ++svc) {
    const int tp = required_tp(cost.model(profiles[svc].model_id), cluster, cost);
    bool placed = false;
    for (int node = 0; node < cluster.num_nodes && !placed; ++node) {
      if (next_free[node] + tp > cluster.gpus_per_node) continue;
      SharingGroup g;
      g.node_id = node;
      g.tp_size = tp;
      for (int k = 0; k < tp; ++k)
        g.gpu_ids.push_back(node * cluster.gpus_per_node + next_free[node] + k);
      next_free[node] += tp;
      g.services.push_back(svc);
      plan.groups.push_back(std::move(g));
      placed = true;
    }
    if (!placed) {
      for (auto& g : plan.groups) {
        if (detail::can_allocate(g, svc, profiles, cost, cluster, pcfg, plan, batch_cap)) {
          g.services.push_back(svc);
          placed = true;
          break;
        }
      }
    }
    if (!placed) {
      plan.unplaced.push_back(svc);
      plan.feasible = false;
    }
  }
  return plan;
}

}  // namespace seasim
