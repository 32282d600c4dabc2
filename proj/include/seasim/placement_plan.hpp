// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "seasim/common.hpp"
#include "seasim/cost_model.hpp"
#include "seasim/workload.hpp"

namespace seasim {

/// A set of services time-sharing one TP group of GPUs on one node.
struct SharingGroup {
  std::vector<std::size_t> services;  // indices into the service table
  std::vector<int> gpu_ids;           // global ids, all on node_id
  int tp_size = 1;                    // == gpu_ids.size()
  int node_id = 0;

  bool serves(std::size_t svc) const {
    return std::find(services.begin(), services.end(), svc) != services.end();
  }
};

struct PlacementPlan {
  std::vector<SharingGroup> groups;
  std::vector<std::size_t> unplaced;  // services no group serves
  bool feasible = true;

  bool serves(std::size_t svc) const {
    for (const auto& g : groups)
      if (g.serves(svc)) return true;
    return false;
  }
};

/// Structural invariant check: every service covered, groups use disjoint
/// in-cluster GPUs on a single node, tp matches the GPU count and never
/// exceeds the per-node size, and the share cap holds. Returns the list of
/// violations, empty when the plan is well formed.
inline std::vector<std::string> validate_plan(const PlacementPlan& plan, const GpuSpec& cluster,
                                              std::size_t num_services, int share_cap) {
  std::vector<std::string> problems;
  std::set<int> used;
  std::vector<bool> covered(num_services, false);
  for (std::size_t gi = 0; gi < plan.groups.size(); ++gi) {
    const SharingGroup& g = plan.groups[gi];
    const std::string tag = "group " + std::to_string(gi);
    if (g.tp_size != static_cast<int>(g.gpu_ids.size()))
      problems.push_back(tag + ": tp_size != |gpu_ids|");
    if (g.tp_size > cluster.gpus_per_node)
      problems.push_back(tag + ": tp exceeds gpus_per_node");
    if (static_cast<int>(g.services.size()) > share_cap)
      problems.push_back(tag + ": exceeds share cap");
    for (int gpu : g.gpu_ids) {
      if (gpu < 0 || gpu >= cluster.total_gpus())
        problems.push_back(tag + ": gpu id out of cluster");
      else if (gpu / cluster.gpus_per_node != g.node_id)
        problems.push_back(tag + ": gpu not on declared node");
      if (!used.insert(gpu).second) problems.push_back(tag + ": gpu used twice");
    }
    for (std::size_t svc : g.services) {
      if (svc >= num_services)
        problems.push_back(tag + ": unknown service index");
      else
        covered[svc] = true;
    }
  }
  for (std::size_t s = 0; s < num_services; ++s)
    if (!covered[s]) problems.push_back("service " + std::to_string(s) + " not placed");
  return problems;
}

inline std::string serialize_plan(const PlacementPlan& plan,
                                  const std::vector<ServiceProfile>& profiles) {
  std::ostringstream out;
  out << "# placement plan (" << plan.groups.size() << " groups"
      << (plan.feasible ? "" : ", infeasible") << ")\n";
  for (const auto& g : plan.groups) {
    out << "group node=" << g.node_id << " tp=" << g.tp_size << " gpus=";
    for (std::size_t i = 0; i < g.gpu_ids.size(); ++i)
      out << (i ? "," : "") << g.gpu_ids[i];
    out << " services=";
    for (std::size_t i = 0; i < g.services.size(); ++i)
      out << (i ? "," : "") << profiles[g.services[i]].name;
    out << "\n";
  }
  return out.str();
}

inline PlacementPlan parse_plan(const std::string& text,
                                const std::vector<ServiceProfile>& profiles) {
  PlacementPlan plan;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  auto service_index = [&](const std::string& name) -> std::size_t {
    for (std::size_t s = 0; s < profiles.size(); ++s)
      if (profiles[s].name == name) return s;
    throw ParseError("plan:" + std::to_string(lineno) + ": unknown service '" + name + "'");
  };
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ss(line);
    std::string word;
    ss >> word;
    if (word != "group")
      throw ParseError("plan:" + std::to_string(lineno) + ": expected 'group'");
    SharingGroup g;
    while (ss >> word) {
      const auto eq = word.find('=');
      if (eq == std::string::npos)
        throw ParseError("plan:" + std::to_string(lineno) + ": expected key=value");
      const std::string key = word.substr(0, eq);
      const std::string value = word.substr(eq + 1);
      std::istringstream vs(value);
      std::string item;
      if (key == "node") {
        g.node_id = std::stoi(value);
      } else if (key == "tp") {
        g.tp_size = std::stoi(value);
      } else if (key == "gpus") {
        while (std::getline(vs, item, ',')) g.gpu_ids.push_back(std::stoi(item));
      } else if (key == "services") {
        while (std::getline(vs, item, ',')) g.services.push_back(service_index(item));
      } else {
        throw ParseError("plan:" + std::to_string(lineno) + ": unknown key '" + key + "'");
      }
    }
    plan.groups.push_back(std::move(g));
  }
  for (std::size_t s = 0; s < profiles.size(); ++s)
    if (!plan.serves(s)) {
      plan.unplaced.push_back(s);
      plan.feasible = false;
    }
  return plan;
}

}  // namespace seasim
