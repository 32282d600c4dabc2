// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cstdint>
#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <unordered_map>
#include <vector>

#include "seasim/common.hpp"
#include "seasim/cost_model.hpp"
#include "seasim/workload.hpp"

namespace seasim {

enum class Policy { kDb, kFcfs, kRr, kMlfq };

inline const char* to_string(Policy p) {
  switch (p) {
    case Policy::kDb: return "db";
    case Policy::kFcfs: return "fcfs";
    case Policy::kRr: return "rr";
    case Policy::kMlfq: return "mlfq";
  }
  return "?";
}

inline std::optional<Policy> parse_policy(const std::string& s) {
  if (s == "db") return Policy::kDb;
  if (s == "fcfs") return Policy::kFcfs;
  if (s == "rr") return Policy::kRr;
  if (s == "mlfq") return Policy::kMlfq;
  return std::nullopt;
}

/// One engine iteration: all members share service and phase.
struct BatchDecision {
  Phase phase = Phase::kPrefill;
  std::size_t service = 0;
  std::vector<std::uint64_t> request_ids;
  bool triggered_by_starvation = false;
};

/// Engine-side admission gate consulted during batch assembly. acquire() for
/// the batch seed may evict queued decoding requests to make room; extensions
/// must fit in what is free. A successful acquire commits KV allocations.
class ResourceGate {
 public:
  virtual ~ResourceGate() = default;
  virtual bool acquire(const Request& r, Phase phase, bool is_seed) = 0;
};

/// Gate that always admits; used by unit tests and the scheduling oracle.
class UnboundedGate : public ResourceGate {
 public:
  bool acquire(const Request&, Phase, bool) override { return true; }
};

struct SchedulerConfig {
  Policy policy = Policy::kDb;
  int batch_cap = 16;
  bool oracle_lengths = false;   // priority from true remaining time (Eq. 7 form)
  bool starvation_enabled = true;
  int mlfq_levels = 4;
  double mlfq_base_quantum = 0.25;  // seconds
  double mlfq_quantum_ratio = 2.0;
};

/// Per-engine request scheduler. The simulator owns the request pool; ids
/// index into it. Batch members leave the queues while the iteration runs and
/// unfinished ones are re-queued by account_iteration.
class Scheduler {
 public:
  Scheduler(SchedulerConfig cfg, std::vector<Request>* pool,
            const std::vector<ServiceProfile>* profiles, const CostModel* cost, int tp_size)
      : cfg_(cfg), pool_(pool), profiles_(profiles), cost_(cost), tp_size_(tp_size) {}
  virtual ~Scheduler() = default;

  virtual void admit(std::uint64_t id, double now) = 0;
  virtual std::optional<BatchDecision> next_batch(ResourceGate& gate, double now) = 0;
  virtual void account_iteration(const BatchDecision& batch, double iteration_time, int tp_size,
                                 double now) = 0;

  /// Worst queued decoding request other than `exclude`, removed from the
  /// queues; the engine evicts its KV and calls requeue_after_eviction.
  virtual std::optional<std::uint64_t> pop_eviction_victim(std::uint64_t exclude) = 0;
  virtual void requeue_after_eviction(std::uint64_t id, double now) = 0;

  /// Drains every queued request, e.g. at a replacement boundary.
  virtual std::vector<std::uint64_t> drain() = 0;

  std::size_t queue_depth() const { return depth_; }
  virtual bool has_queued_work() const = 0;

  virtual std::vector<std::uint64_t> waiting_ids() const = 0;
  virtual std::vector<std::uint64_t> decoding_ids() const = 0;
  virtual double priority_of(std::uint64_t) const { return 0.0; }

 protected:
  Request& req(std::uint64_t id) { return (*pool_)[id]; }
  const Request& req(std::uint64_t id) const { return (*pool_)[id]; }
  const ServiceProfile& profile(const Request& r) const { return (*profiles_)[r.service]; }

  // Remaining work in single-GPU-equivalent seconds assuming the (possibly
  // noisy) profiled output length; used only in oracle-length mode.
  double oracle_remaining(const Request& r) const {
    const ServiceProfile& p = profile(r);
    const int min_tp = cost_->model(p.model_id).min_tp;
    const int target = std::max(r.visible_output_len, r.tokens_generated + 1);
    double t;
    if (r.phase == Phase::kWaiting) {
      // Evicted requests re-prefill over prompt plus already-generated tokens.
      t = cost_->isolated_exec_time(p.model_id, min_tp, r.input_len + r.tokens_generated,
                                    target - r.tokens_generated);
    } else {
      t = cost_->decode_span_time(p.model_id, min_tp, r.input_len + r.tokens_generated,
                                  target - r.tokens_generated);
    }
    return t * min_tp;
  }

  SchedulerConfig cfg_;
  std::vector<Request>* pool_;
  const std::vector<ServiceProfile>* profiles_;
  const CostModel* cost_;
  int tp_size_ = 1;
  std::size_t depth_ = 0;
};

namespace detail {

// (key1, key2, id) lexicographic ordering shared by the queue sets.
struct QKey {
  double k1;
  double k2;
  std::uint64_t id;
  bool operator<(const QKey& o) const {
    if (k1 != o.k1) return k1 < o.k1;
    if (k2 != o.k2) return k2 < o.k2;
    return id < o.id;
  }
};

}  // namespace detail

/// Doubling-budget scheduler. Priority O_r = remaining budget * mean service
/// time; smaller is served first. An exhausted budget doubles the cumulative
/// grant (2^k * (mean + stddev)) and resets the priority to the full grant,
/// demoting runaway requests. Starved services override the priority order.
class DbScheduler : public Scheduler {
 public:
  using Scheduler::Scheduler;

  void admit(std::uint64_t id, double now) override {
    Request& r = req(id);
    Info& info = infos_[id];
    if (info.loc != Loc::kNone) throw std::logic_error("admit: request already admitted");
    if (r.budget_granted == 0.0) {
      const ServiceProfile& p = profile(r);
      const double q0 = p.mean_exec_time + p.exec_time_stddev;
      r.budget_remaining = q0;
      r.budget_granted = q0;
      r.budget_doublings = 0;
    }
    info.priority = initial_priority(r);
    info.last_scheduled = now;
    enqueue(id, r.phase == Phase::kDecoding ? Loc::kDecode : Loc::kWait, now);
    ++depth_;
  }

  std::optional<BatchDecision> next_batch(ResourceGate& gate, double now) override {
    if (auto starved = pick_starved(now)) {
      // Starved service first; fall through if none of its requests fit.
      if (auto batch = assemble_starved(*starved, gate, now)) return batch;
    }
    // Global minimum O_r over both queues, skipping seeds the gate rejects.
    // Probing may evict queued requests, so walk a snapshot and re-check.
    std::vector<std::uint64_t> order;
    merge_by_key(order);
    for (std::uint64_t id : order) {
      const Loc loc = infos_.at(id).loc;
      if (loc == Loc::kNone) continue;
      const Phase phase = loc == Loc::kWait ? Phase::kPrefill : Phase::kDecoding;
      if (gate.acquire(req(id), phase, true)) return assemble(id, phase, false, gate, now);
    }
    return std::nullopt;
  }

  void account_iteration(const BatchDecision& batch, double iteration_time, int tp_size,
                         double now) override {
    const double work = iteration_time * tp_size;  // single-GPU-equivalent seconds
    for (std::uint64_t id : batch.request_ids) {
      Request& r = req(id);
      auto it = infos_.find(id);
      if (it == infos_.end()) throw std::logic_error("account_iteration: unknown request");
      Info& info = it->second;
      r.budget_remaining -= work;
      info.last_scheduled = now;
      if (r.finished()) {
        --depth_;
        infos_.erase(it);
        continue;
      }
      if (cfg_.oracle_lengths) {
        info.priority = oracle_remaining(r) * profile(r).mean_exec_time;
      } else if (r.budget_remaining <= 0.0) {
        // Double until positive; cumulative grant stays 2^k * (mean+stddev).
        const double q0 = profile(r).mean_exec_time + profile(r).exec_time_stddev;
        while (r.budget_remaining <= 0.0) {
          const double delta = std::ldexp(q0, r.budget_doublings);  // 2^k - 2^(k-1) of the new k
          r.budget_doublings += 1;
          r.budget_remaining += delta;
          r.budget_granted += delta;
        }
        info.priority = r.budget_granted * profile(r).mean_exec_time;
      } else {
        info.priority = r.budget_remaining * profile(r).mean_exec_time;
      }
      enqueue(id, r.phase == Phase::kDecoding ? Loc::kDecode : Loc::kWait, now);
    }
  }

  std::optional<std::uint64_t> pop_eviction_victim(std::uint64_t exclude) override {
    for (auto it = decode_.rbegin(); it != decode_.rend(); ++it) {
      if (it->id == exclude) continue;
      const std::uint64_t id = it->id;
      dequeue(id);
      return id;
    }
    return std::nullopt;
  }

  void requeue_after_eviction(std::uint64_t id, double now) override {
    Info& info = infos_.at(id);
    info.priority = cfg_.oracle_lengths ? oracle_remaining(req(id)) * profile(req(id)).mean_exec_time
                                        : req(id).budget_remaining * profile(req(id)).mean_exec_time;
    enqueue(id, Loc::kWait, info.last_scheduled);
  }

  std::vector<std::uint64_t> drain() override {
    std::vector<std::uint64_t> out;
    for (const auto& k : wait_) out.push_back(k.id);
    for (const auto& k : decode_) out.push_back(k.id);
    for (std::uint64_t id : out) dequeue(id);
    for (std::uint64_t id : out) {
      infos_.erase(id);
      --depth_;
    }
    std::sort(out.begin(), out.end());
    return out;
  }

  bool has_queued_work() const override { return !wait_.empty() || !decode_.empty(); }

  std::vector<std::uint64_t> waiting_ids() const override {
    std::vector<std::uint64_t> v;
    for (const auto& k : wait_) v.push_back(k.id);
    return v;
  }
  std::vector<std::uint64_t> decoding_ids() const override {
    std::vector<std::uint64_t> v;
    for (const auto& k : decode_) v.push_back(k.id);
    return v;
  }
  double priority_of(std::uint64_t id) const override { return infos_.at(id).priority; }

 private:
  enum class Loc { kNone, kWait, kDecode };
  struct Info {
    double priority = 0.0;
    double last_scheduled = 0.0;
    Loc loc = Loc::kNone;
  };

  double initial_priority(const Request& r) const {
    if (cfg_.oracle_lengths) return oracle_remaining(r) * profile(r).mean_exec_time;
    return r.budget_remaining * profile(r).mean_exec_time;
  }

  void merge_by_key(std::vector<std::uint64_t>& out) const {
    auto wit = wait_.begin();
    auto dit = decode_.begin();
    while (wit != wait_.end() || dit != decode_.end()) {
      const bool take_wait = dit == decode_.end() || (wit != wait_.end() && *wit < *dit);
      out.push_back(take_wait ? (wit++)->id : (dit++)->id);
    }
  }

  detail::QKey key_of(std::uint64_t id) const {
    const Info& info = infos_.at(id);
    return {info.priority, req(id).arrival_time, id};
  }

  void enqueue(std::uint64_t id, Loc loc, double last_sched) {
    Info& info = infos_.at(id);
    info.loc = loc;
    info.last_scheduled = last_sched;
    (loc == Loc::kWait ? wait_ : decode_).insert(key_of(id));
    starve_[req(id).service].insert({last_sched, id});
  }

  void dequeue(std::uint64_t id) {
    Info& info = infos_.at(id);
    if (info.loc == Loc::kNone) return;
    (info.loc == Loc::kWait ? wait_ : decode_).erase(key_of(id));
    starve_[req(id).service].erase({info.last_scheduled, id});
    info.loc = Loc::kNone;
  }

  // Most-starved service, if any request has waited past its threshold.
  std::optional<std::size_t> pick_starved(double now) const {
    if (!cfg_.starvation_enabled) return std::nullopt;
    std::optional<std::size_t> best;
    double best_t = std::numeric_limits<double>::infinity();
    for (const auto& [svc, set] : starve_) {
      if (set.empty()) continue;
      const double oldest = set.begin()->first;
      if (now - oldest > (*profiles_)[svc].starvation_threshold && oldest < best_t) {
        best_t = oldest;
        best = svc;
      }
    }
    return best;
  }

  std::optional<BatchDecision> assemble_starved(std::size_t svc, ResourceGate& gate, double now) {
    // Starved-first order within the service; the seed fixes the phase.
    std::vector<std::uint64_t> order;
    for (const auto& [t, id] : starve_.at(svc)) order.push_back(id);
    for (std::uint64_t id : order) {
      const Loc loc = infos_.at(id).loc;
      if (loc == Loc::kNone) continue;
      const Phase phase = loc == Loc::kWait ? Phase::kPrefill : Phase::kDecoding;
      if (!gate.acquire(req(id), phase, true)) continue;
      BatchDecision batch;
      batch.phase = phase;
      batch.service = svc;
      batch.triggered_by_starvation = true;
      dequeue(id);
      batch.request_ids.push_back(id);
      extend_from(order, batch, gate, now);
      return batch;
    }
    return std::nullopt;
  }

  std::optional<BatchDecision> assemble(std::uint64_t seed, Phase phase, bool starved,
                                        ResourceGate& gate, double now) {
    BatchDecision batch;
    batch.phase = phase;
    batch.service = req(seed).service;
    batch.triggered_by_starvation = starved;
    dequeue(seed);
    batch.request_ids.push_back(seed);
    std::vector<std::uint64_t> order;
    for (const auto& k : (phase == Phase::kPrefill ? wait_ : decode_))
      if (req(k.id).service == batch.service) order.push_back(k.id);
    extend_from(order, batch, gate, now);
    return batch;
  }

  void extend_from(const std::vector<std::uint64_t>& order, BatchDecision& batch,
                   ResourceGate& gate, double) {
    for (std::uint64_t id : order) {
      if (static_cast<int>(batch.request_ids.size()) >= cfg_.batch_cap) break;
      if (id == batch.request_ids.front()) continue;
      auto it = infos_.find(id);
      if (it == infos_.end() || it->second.loc == Loc::kNone) continue;
      const Request& r = req(id);
      if (r.service != batch.service) continue;
      const Phase p = r.phase == Phase::kDecoding ? Phase::kDecoding : Phase::kPrefill;
      if (p != batch.phase) continue;
      if (!gate.acquire(r, batch.phase, false)) break;
      dequeue(id);
      batch.request_ids.push_back(id);
    }
  }

  std::set<detail::QKey> wait_;
  std::set<detail::QKey> decode_;
  std::unordered_map<std::uint64_t, Info> infos_;
  std::map<std::size_t, std::set<std::pair<double, std::uint64_t>>> starve_;
};

/// Non-preemptive arrival-order baseline; the head request runs to finish.
class FcfsScheduler : public Scheduler {
 public:
  using Scheduler::Scheduler;

  void admit(std::uint64_t id, double) override {
    if (!loc_.emplace(id, Loc::kWait).second) throw std::logic_error("admit: duplicate");
    queue_of(Loc::kWait).insert(key_of(id));
    ++depth_;
  }

  std::optional<BatchDecision> next_batch(ResourceGate& gate, double now) override {
    std::vector<std::uint64_t> order;
    {
      auto wit = wait_.begin();
      auto dit = decode_.begin();
      while (wit != wait_.end() || dit != decode_.end()) {
        const bool take_wait = dit == decode_.end() || (wit != wait_.end() && *wit < *dit);
        order.push_back(take_wait ? (wit++)->id : (dit++)->id);
      }
    }
    for (std::uint64_t id : order) {
      auto it = loc_.find(id);
      if (it == loc_.end() || it->second == Loc::kNone) continue;
      const Phase phase = it->second == Loc::kWait ? Phase::kPrefill : Phase::kDecoding;
      if (gate.acquire(req(id), phase, true)) return assemble(id, phase, gate, now);
    }
    return std::nullopt;
  }

  void account_iteration(const BatchDecision& batch, double, int, double) override {
    for (std::uint64_t id : batch.request_ids) {
      Request& r = req(id);
      if (r.finished()) {
        loc_.erase(id);
        --depth_;
        continue;
      }
      const Loc loc = r.phase == Phase::kDecoding ? Loc::kDecode : Loc::kWait;
      loc_[id] = loc;
      queue_of(loc).insert(key_of(id));
    }
  }

  std::optional<std::uint64_t> pop_eviction_victim(std::uint64_t exclude) override {
    for (auto it = decode_.rbegin(); it != decode_.rend(); ++it) {
      if (it->id == exclude) continue;
      const std::uint64_t id = it->id;
      dequeue(id);
      return id;
    }
    return std::nullopt;
  }

  void requeue_after_eviction(std::uint64_t id, double) override {
    loc_[id] = Loc::kWait;
    wait_.insert(key_of(id));
  }

  std::vector<std::uint64_t> drain() override {
    std::vector<std::uint64_t> out;
    for (const auto& k : wait_) out.push_back(k.id);
    for (const auto& k : decode_) out.push_back(k.id);
    wait_.clear();
    decode_.clear();
    for (std::uint64_t id : out) loc_.erase(id);
    depth_ -= out.size();
    std::sort(out.begin(), out.end());
    return out;
  }

  bool has_queued_work() const override { return !wait_.empty() || !decode_.empty(); }

  std::vector<std::uint64_t> waiting_ids() const override {
    std::vector<std::uint64_t> v;
    for (const auto& k : wait_) v.push_back(k.id);
    return v;
  }
  std::vector<std::uint64_t> decoding_ids() const override {
    std::vector<std::uint64_t> v;
    for (const auto& k : decode_) v.push_back(k.id);
    return v;
  }

 private:
  enum class Loc { kNone, kWait, kDecode };

  detail::QKey key_of(std::uint64_t id) const { return {req(id).arrival_time, 0.0, id}; }
  std::set<detail::QKey>& queue_of(Loc loc) { return loc == Loc::kWait ? wait_ : decode_; }

  void dequeue(std::uint64_t id) {
    auto it = loc_.find(id);
    if (it == loc_.end() || it->second == Loc::kNone) return;
    queue_of(it->second).erase(key_of(id));
    it->second = Loc::kNone;
  }

  BatchDecision assemble(std::uint64_t seed, Phase phase, ResourceGate& gate, double) {
    BatchDecision batch;
    batch.phase = phase;
    batch.service = req(seed).service;
    dequeue(seed);
    batch.request_ids.push_back(seed);
    std::vector<std::uint64_t> order;
    for (const auto& k : (phase == Phase::kPrefill ? wait_ : decode_))
      if (req(k.id).service == batch.service) order.push_back(k.id);
    for (std::uint64_t id : order) {
      if (static_cast<int>(batch.request_ids.size()) >= cfg_.batch_cap) break;
      const Request& r = req(id);
      const Phase p = r.phase == Phase::kDecoding ? Phase::kDecoding : Phase::kPrefill;
      if (p != phase) continue;
      if (!gate.acquire(r, phase, false)) break;
      dequeue(id);
      batch.request_ids.push_back(id);
    }
    return batch;
  }

  std::set<detail::QKey> wait_;
  std::set<detail::QKey> decode_;
  std::unordered_map<std::uint64_t, Loc> loc_;
};

/// Round-robin over services, FCFS within a service; the rotation advances
/// one service per issued batch.
class RrScheduler : public Scheduler {
 public:
  using Scheduler::Scheduler;

  void admit(std::uint64_t id, double) override {
    const Request& r = req(id);
    if (!queued_.insert(id).second) throw std::logic_error("admit: duplicate");
    per_service_[r.service].insert(key_of(id));
    ++depth_;
  }

  std::optional<BatchDecision> next_batch(ResourceGate& gate, double now) override {
    if (per_service_.empty()) return std::nullopt;
    std::vector<std::size_t> services;
    for (const auto& [svc, q] : per_service_)
      if (!q.empty()) services.push_back(svc);
    if (services.empty()) return std::nullopt;
    // Start from the first service at or after the cursor.
    std::size_t start = 0;
    while (start < services.size() && services[start] < cursor_) ++start;
    for (std::size_t k = 0; k < services.size(); ++k) {
      const std::size_t svc = services[(start + k) % services.size()];
      std::vector<std::uint64_t> order;
      for (const auto& key : per_service_[svc]) order.push_back(key.id);
      for (std::uint64_t id : order) {
        if (!queued_.count(id)) continue;
        const Request& seed = req(id);
        const Phase phase = seed.phase == Phase::kDecoding ? Phase::kDecoding : Phase::kPrefill;
        if (!gate.acquire(seed, phase, true)) continue;
        cursor_ = svc + 1;
        return assemble(id, phase, gate, now);
      }
    }
    return std::nullopt;
  }

  void account_iteration(const BatchDecision& batch, double, int, double) override {
    for (std::uint64_t id : batch.request_ids) {
      Request& r = req(id);
      if (r.finished()) {
        queued_.erase(id);
        --depth_;
        continue;
      }
      queued_.insert(id);
      per_service_[r.service].insert(key_of(id));
    }
  }

  std::optional<std::uint64_t> pop_eviction_victim(std::uint64_t exclude) override {
    // Latest-arrived queued decoding request across services.
    std::optional<detail::QKey> best;
    for (const auto& [svc, q] : per_service_)
      for (auto it = q.rbegin(); it != q.rend(); ++it) {
        if (it->id == exclude) continue;
        if (req(it->id).phase == Phase::kDecoding) {
          if (!best || *best < *it) best = *it;
          break;
        }
      }
    if (!best) return std::nullopt;
    dequeue(best->id);
    return best->id;
  }

  void requeue_after_eviction(std::uint64_t id, double) override {
    queued_.insert(id);
    per_service_[req(id).service].insert(key_of(id));
  }

  std::vector<std::uint64_t> drain() override {
    std::vector<std::uint64_t> out(queued_.begin(), queued_.end());
    queued_.clear();
    per_service_.clear();
    depth_ -= out.size();
    return out;
  }

  bool has_queued_work() const override { return !queued_.empty(); }

  std::vector<std::uint64_t> waiting_ids() const override { return phase_ids(Phase::kWaiting); }
  std::vector<std::uint64_t> decoding_ids() const override { return phase_ids(Phase::kDecoding); }

 private:
  detail::QKey key_of(std::uint64_t id) const { return {req(id).arrival_time, 0.0, id}; }

  void dequeue(std::uint64_t id) {
    if (!queued_.erase(id)) return;
    per_service_[req(id).service].erase(key_of(id));
  }

  std::vector<std::uint64_t> phase_ids(Phase p) const {
    std::vector<std::uint64_t> v;
    for (std::uint64_t id : queued_)
      if (req(id).phase == p) v.push_back(id);
    std::sort(v.begin(), v.end());
    return v;
  }

  BatchDecision assemble(std::uint64_t seed, Phase phase, ResourceGate& gate, double) {
    BatchDecision batch;
    batch.phase = phase;
    batch.service = req(seed).service;
    dequeue(seed);
    batch.request_ids.push_back(seed);
    std::vector<std::uint64_t> order;
    for (const auto& k : per_service_[batch.service]) order.push_back(k.id);
    for (std::uint64_t id : order) {
      if (static_cast<int>(batch.request_ids.size()) >= cfg_.batch_cap) break;
      const Request& r = req(id);
      const Phase p = r.phase == Phase::kDecoding ? Phase::kDecoding : Phase::kPrefill;
      if (p != phase) continue;
      if (!gate.acquire(r, phase, false)) break;
      dequeue(id);
      batch.request_ids.push_back(id);
    }
    return batch;
  }

  std::set<std::uint64_t> queued_;
  std::map<std::size_t, std::set<detail::QKey>> per_service_;
  std::size_t cursor_ = 0;
};

/// Skip-join multi-level feedback queue: a request joins the shallowest level
/// whose quantum covers its estimated prefill time, is served FIFO within the
/// lowest non-empty level, and is demoted when it exhausts the level quantum.
class MlfqScheduler : public Scheduler {
 public:
  MlfqScheduler(SchedulerConfig cfg, std::vector<Request>* pool,
                const std::vector<ServiceProfile>* profiles, const CostModel* cost, int tp_size)
      : Scheduler(cfg, pool, profiles, cost, tp_size), levels_(cfg.mlfq_levels) {
    if (cfg.mlfq_levels < 1) throw ConfigError("mlfq: levels must be >= 1");
  }

  void admit(std::uint64_t id, double) override {
    const Request& r = req(id);
    Info info;
    info.level = join_level(r);
    info.seq = next_seq_++;
    infos_[id] = info;
    levels_[info.level].insert({static_cast<double>(info.seq), 0.0, id});
    ++depth_;
  }

  std::optional<BatchDecision> next_batch(ResourceGate& gate, double now) override {
    for (auto& level : levels_) {
      std::vector<std::uint64_t> order;
      for (const auto& key : level) order.push_back(key.id);
      for (std::uint64_t id : order) {
        auto it = infos_.find(id);
        if (it == infos_.end() || !level.count({static_cast<double>(it->second.seq), 0.0, id}))
          continue;
        const Request& seed = req(id);
        const Phase phase = seed.phase == Phase::kDecoding ? Phase::kDecoding : Phase::kPrefill;
        if (!gate.acquire(seed, phase, true)) continue;
        return assemble(id, phase, gate, now);
      }
    }
    return std::nullopt;
  }

  void account_iteration(const BatchDecision& batch, double iteration_time, int,
                         double) override {
    for (std::uint64_t id : batch.request_ids) {
      Request& r = req(id);
      auto it = infos_.find(id);
      if (it == infos_.end()) throw std::logic_error("account_iteration: unknown request");
      Info& info = it->second;
      if (r.finished()) {
        infos_.erase(it);
        --depth_;
        continue;
      }
      info.used += iteration_time;
      if (info.used > quantum(info.level) && info.level + 1 < static_cast<int>(levels_.size())) {
        info.level += 1;
        info.used = 0.0;
      }
      info.seq = next_seq_++;
      levels_[info.level].insert({static_cast<double>(info.seq), 0.0, id});
    }
  }

  std::optional<std::uint64_t> pop_eviction_victim(std::uint64_t exclude) override {
    for (auto lvl = levels_.rbegin(); lvl != levels_.rend(); ++lvl)
      for (auto it = lvl->rbegin(); it != lvl->rend(); ++it) {
        if (it->id == exclude) continue;
        if (req(it->id).phase == Phase::kDecoding) {
          const std::uint64_t id = it->id;
          dequeue(id);
          return id;
        }
      }
    return std::nullopt;
  }

  void requeue_after_eviction(std::uint64_t id, double) override {
    Info& info = infos_.at(id);
    info.seq = next_seq_++;
    levels_[info.level].insert({static_cast<double>(info.seq), 0.0, id});
  }

  std::vector<std::uint64_t> drain() override {
    std::vector<std::uint64_t> out;
    for (auto& level : levels_) {
      for (const auto& k : level) out.push_back(k.id);
      level.clear();
    }
    depth_ -= out.size();
    std::sort(out.begin(), out.end());
    return out;
  }

  bool has_queued_work() const override {
    for (const auto& level : levels_)
      if (!level.empty()) return true;
    return false;
  }

  std::vector<std::uint64_t> waiting_ids() const override { return phase_ids(Phase::kWaiting); }
  std::vector<std::uint64_t> decoding_ids() const override { return phase_ids(Phase::kDecoding); }

  int level_of(std::uint64_t id) const { return infos_.at(id).level; }

 private:
  struct Info {
    int level = 0;
    double used = 0.0;
    std::uint64_t seq = 0;
  };

  double quantum(int level) const {
    return cfg_.mlfq_base_quantum * std::pow(cfg_.mlfq_quantum_ratio, level);
  }

  int join_level(const Request& r) const {
    const ServiceProfile& p = profile(r);
    const double first_iter = cost_->prefill_time(p.model_id, tp_size_, r.input_len);
    for (int l = 0; l < static_cast<int>(levels_.size()); ++l)
      if (first_iter <= quantum(l)) return l;
    return static_cast<int>(levels_.size()) - 1;
  }

  void dequeue(std::uint64_t id) {
    const Info& info = infos_.at(id);
    levels_[info.level].erase({static_cast<double>(info.seq), 0.0, id});
  }

  std::vector<std::uint64_t> phase_ids(Phase p) const {
    std::vector<std::uint64_t> v;
    for (const auto& level : levels_)
      for (const auto& k : level)
        if (req(k.id).phase == p) v.push_back(k.id);
    std::sort(v.begin(), v.end());
    return v;
  }

  BatchDecision assemble(std::uint64_t seed, Phase phase, ResourceGate& gate, double) {
    BatchDecision batch;
    batch.phase = phase;
    batch.service = req(seed).service;
    const int seed_level = infos_.at(seed).level;
    dequeue(seed);
    batch.request_ids.push_back(seed);
    std::vector<std::uint64_t> order;
    for (const auto& k : levels_[seed_level]) order.push_back(k.id);
    for (std::uint64_t id : order) {
      if (static_cast<int>(batch.request_ids.size()) >= cfg_.batch_cap) break;
      const Request& r = req(id);
      if (r.service != batch.service) continue;
      const Phase p = r.phase == Phase::kDecoding ? Phase::kDecoding : Phase::kPrefill;
      if (p != phase) continue;
      if (!gate.acquire(r, phase, false)) break;
      dequeue(id);
      batch.request_ids.push_back(id);
    }
    return batch;
  }

  std::vector<std::set<detail::QKey>> levels_;
  std::unordered_map<std::uint64_t, Info> infos_;
  std::uint64_t next_seq_ = 0;
};

inline std::unique_ptr<Scheduler> make_scheduler(const SchedulerConfig& cfg,
                                                 std::vector<Request>* pool,
                                                 const std::vector<ServiceProfile>* profiles,
                                                 const CostModel* cost, int tp_size) {
  switch (cfg.policy) {
    case Policy::kDb: return std::make_unique<DbScheduler>(cfg, pool, profiles, cost, tp_size);
    case Policy::kFcfs: return std::make_unique<FcfsScheduler>(cfg, pool, profiles, cost, tp_size);
    case Policy::kRr: return std::make_unique<RrScheduler>(cfg, pool, profiles, cost, tp_size);
    case Policy::kMlfq: return std::make_unique<MlfqScheduler>(cfg, pool, profiles, cost, tp_size);
  }
  throw ConfigError("unknown policy");
}

// ---------------------------------------------------------------------------
// Brute-force optimality oracle
// ---------------------------------------------------------------------------

/// Input to the exhaustive-search oracle: execution quantized to whole
/// iteration quanta, arrivals on the quantum grid.
struct OracleRequest {
  double arrival = 0.0;
  int exec_quanta = 1;
  std::size_t service = 0;
};

struct OracleResult {
  double min_l_n_sum = 0.0;
  // schedule[k] = request index run in the k-th busy slot.
  std::vector<int> schedule;
};

/// Minimal normalized latency (sum form) over all preemptive schedules at
/// iteration granularity: single engine, batch size one. A memoized search
/// over remaining-work states; work conservation pins the wall clock to the
/// executed-work count, which keeps the state space tractable.
inline OracleResult brute_force_optimal(const std::vector<OracleRequest>& reqs,
                                        const std::vector<double>& service_mean_time,
                                        double quantum,
                                        bool require_uniform_service_times = true) {
  if (reqs.empty()) return {};
  if (reqs.size() > 8)
    throw ValidationError("brute_force_optimal: refusing instance with more than 8 requests");
  if (quantum <= 0.0) throw ValidationError("brute_force_optimal: quantum must be > 0");

  const std::size_t n = reqs.size();
  std::vector<long> arrival_slot(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double slots = reqs[i].arrival / quantum;
    arrival_slot[i] = std::llround(slots);
    if (std::abs(slots - static_cast<double>(arrival_slot[i])) > 1e-9)
      throw ValidationError("brute_force_optimal: arrival not on the quantum grid");
    if (reqs[i].exec_quanta < 1)
      throw ValidationError("brute_force_optimal: exec_quanta must be >= 1");
    if (reqs[i].service >= service_mean_time.size())
      throw ValidationError("brute_force_optimal: service out of range");
  }
  if (require_uniform_service_times) {
    std::map<std::size_t, int> per_service;
    for (const auto& r : reqs) {
      auto [it, fresh] = per_service.emplace(r.service, r.exec_quanta);
      if (!fresh && it->second != r.exec_quanta)
        throw ValidationError("brute_force_optimal: per-service execution times differ");
    }
  }

  long total = 0;
  for (const auto& r : reqs) total += r.exec_quanta;

  // Busy-slot timeline shared by every work-conserving schedule: the E-th
  // executed quantum always runs in slot start_slot[E-1].
  std::vector<long> start_slot(total);
  {
    std::vector<std::pair<long, long>> events;  // (slot, quanta released)
    for (std::size_t i = 0; i < n; ++i) events.push_back({arrival_slot[i], reqs[i].exec_quanta});
    std::sort(events.begin(), events.end());
    long released = 0;
    std::size_t next_event = 0;
    long t = -1;
    for (long e = 0; e < total; ++e) {
      long earliest = t + 1;
      while (true) {
        while (next_event < events.size() && events[next_event].first <= earliest) {
          released += events[next_event].second;
          ++next_event;
        }
        if (released > e) break;
        earliest = events[next_event].first;  // idle until more work arrives
      }
      t = earliest;
      start_slot[e] = t;
    }
  }

  std::vector<long> stride(n);
  long num_states = 1;
  for (std::size_t i = 0; i < n; ++i) {
    stride[i] = num_states;
    num_states *= reqs[i].exec_quanta + 1;
  }

  constexpr double kUnvisited = -1.0;
  std::vector<double> memo(static_cast<std::size_t>(num_states), kUnvisited);
  std::vector<std::int8_t> choice(static_cast<std::size_t>(num_states), -1);

  // Iterative DFS would obscure the recurrence; depth is at most `total`.
  auto solve = [&](auto&& self, long state, long executed) -> double {
    if (executed == total) return 0.0;
    double& slot_memo = memo[static_cast<std::size_t>(state)];
    if (slot_memo != kUnvisited) return slot_memo;
    const long slot = start_slot[executed];
    double best = std::numeric_limits<double>::infinity();
    std::int8_t best_i = -1;
    for (std::size_t i = 0; i < n; ++i) {
      const long rem = (state / stride[i]) % (reqs[i].exec_quanta + 1);
      if (rem == 0 || arrival_slot[i] > slot) continue;
      double contrib = 0.0;
      if (rem == 1) {
        const double completion = static_cast<double>(slot + 1) * quantum;
        contrib = (completion - reqs[i].arrival) / service_mean_time[reqs[i].service];
      }
      const double v = contrib + self(self, state - stride[i], executed + 1);
      if (v < best) {
        best = v;
        best_i = static_cast<std::int8_t>(i);
      }
    }
    slot_memo = best;
    choice[static_cast<std::size_t>(state)] = best_i;
    return best;
  };

  long full = 0;
  for (std::size_t i = 0; i < n; ++i) full += stride[i] * reqs[i].exec_quanta;

  OracleResult result;
  result.min_l_n_sum = solve(solve, full, 0);
  long state = full;
  for (long e = 0; e < total; ++e) {
    const int i = choice[static_cast<std::size_t>(state)];
    result.schedule.push_back(i);
    state -= stride[i];
  }
  return result;
}

}  // namespace seasim
