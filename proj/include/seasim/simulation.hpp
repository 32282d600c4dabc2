// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <limits>
#include <memory>
#include <queue>
#include <string>
#include <unordered_map>
#include <vector>

#include "seasim/common.hpp"
#include "seasim/cost_model.hpp"
#include "seasim/kv_cache.hpp"
#include "seasim/metrics.hpp"
#include "seasim/placement_plan.hpp"
#include "seasim/replacement.hpp"
#include "seasim/scheduler.hpp"
#include "seasim/workload.hpp"

namespace seasim {

struct SimOptions {
  SchedulerConfig scheduler;
  ReplacementConfig replacement;
  int tokens_per_block = 16;
  double kv_pool_cap_bytes = 0.0;  // 0: all leftover GPU memory becomes KV pool
  double slo_scale = 5.0;
  double delta = 0.9;
  double noise_scale = 0.0;  // profiled-length noise, stddev = scale * output_len
  std::uint64_t seed = 1;
  bool collect_log = false;
};

/// Placement re-search hook invoked at replacement boundaries with the
/// elapsed interval's trace slice. Wired by the experiment layer; the
/// simulator itself stays placement-agnostic.
using ReplanFn =
    std::function<PlacementPlan(const Trace& history, const PlacementPlan& current)>;

struct RunResult {
  MetricsReport metrics;
  std::vector<Request> requests;
  std::vector<CacheStats> kv_stats;
  std::vector<ReplacementEvent> replacements;
  std::string run_log;
  double end_time = 0.0;
  PlacementPlan final_plan;
};

namespace detail {

enum class EvKind : std::uint8_t { kArrival = 0, kIterDone = 1, kResume = 2, kReplace = 3 };

struct Ev {
  double time;
  EvKind kind;
  std::uint64_t seq;
  std::uint64_t arg;  // request id (arrival) or engine index
};

struct EvLater {
  bool operator()(const Ev& a, const Ev& b) const {
    if (a.time != b.time) return a.time > b.time;
    if (a.kind != b.kind) return a.kind > b.kind;
    return a.seq > b.seq;
  }
};

class SimRun {
 public:
  SimRun(const Trace& trace, const PlacementPlan& plan,
         const std::vector<ServiceProfile>& profiles, const CostModel& cost,
         const GpuSpec& cluster, const SimOptions& opts, ReplanFn replan, double until)
      : trace_(trace),
        plan_(plan),
        profiles_(profiles),
        cost_(cost),
        cluster_(cluster),
        opts_(opts),
        replan_(std::move(replan)),
        until_(until) {
    metric_ctx_ = MetricContext::make(profiles_, cost_, opts_.slo_scale, opts_.delta);
  }

  RunResult run() {
    build_requests();
    build_engines();
    for (std::uint64_t id = 0; id < requests_.size(); ++id)
      push({requests_[id].arrival_time, EvKind::kArrival, next_seq_++, id});
    if (opts_.replacement.enabled) {
      opts_.replacement.validate();
      repl_.current_interval = clamp_interval(opts_.replacement.initial_interval, opts_.replacement);
      repl_.interval_start = 0.0;
      repl_.next_replacement_time = repl_.current_interval;
      push({repl_.next_replacement_time, EvKind::kReplace, next_seq_++, 0});
    }

    while (!events_.empty()) {
      const Ev ev = events_.top();
      if (ev.time > until_) break;
      events_.pop();
      now_ = std::max(now_, ev.time);
      switch (ev.kind) {
        case EvKind::kArrival: on_arrival(ev.arg); break;
        case EvKind::kIterDone: on_iter_done(ev.arg); break;
        case EvKind::kResume: kick(engines_[ev.arg]); break;
        case EvKind::kReplace: on_replace_boundary(ev.time); break;
      }
    }

    RunResult result;
    result.end_time = now_;
    result.requests = std::move(requests_);
    for (auto& e : engines_) result.kv_stats.push_back(e.cache.stats());
    result.replacements = std::move(replacement_log_);
    result.run_log = std::move(log_);
    result.final_plan = plan_;
    if (until_ == std::numeric_limits<double>::infinity())
      result.metrics = compute_metrics(result.requests, metric_ctx_);
    return result;
  }

 private:
  struct Engine {
    std::size_t index = 0;
    SharingGroup group;
    std::vector<std::string> shared_models;
    std::vector<int> model_idx_of_service;  // per global service, -1 if not served
    std::unique_ptr<Scheduler> sched;
    UnifiedKvCache cache;
    bool running = false;
    BatchDecision current;
    double iter_time = 0.0;
    double resume_at = 0.0;
  };

  // Commits KV allocations during batch assembly. Extensions only use free
  // blocks; a seed may evict queued decoding requests, worst priority first.
  class EngineGate : public ResourceGate {
   public:
    EngineGate(SimRun* sim, Engine* e) : sim_(sim), e_(e) {}

    bool acquire(const Request& r, Phase phase, bool is_seed) override {
      const int mi = e_->model_idx_of_service[r.service];
      const long tokens = phase == Phase::kPrefill
                              ? r.input_len + r.tokens_generated
                              : r.input_len + r.tokens_generated + 1;
      while (!e_->cache.can_grow_to(r.id, mi, tokens)) {
        if (!is_seed) return false;
        auto victim = e_->sched->pop_eviction_victim(r.id);
        if (!victim) return false;
        sim_->evict(*e_, *victim);
      }
      e_->cache.try_allocate(r.id, mi, tokens);
      return true;
    }

   private:
    SimRun* sim_;
    Engine* e_;
  };

  void build_requests() {
    trace_.validate(profiles_);
    std::unordered_map<std::string, std::size_t> by_name;
    for (std::size_t s = 0; s < profiles_.size(); ++s) by_name[profiles_[s].name] = s;
    requests_.reserve(trace_.records.size());
    for (std::uint64_t id = 0; id < trace_.records.size(); ++id) {
      const TraceRecord& rec = trace_.records[id];
      Request r;
      r.id = id;
      r.service = by_name.at(rec.service_id);
      r.arrival_time = rec.arrival_time;
      r.input_len = rec.input_len;
      r.output_len = rec.output_len;
      requests_.push_back(r);
    }
    apply_length_noise(requests_, opts_.noise_scale, opts_.seed ^ 0x6e015eULL);
  }

  void build_engines() {
    engines_.clear();
    engines_by_service_.assign(profiles_.size(), {});
    for (std::size_t gi = 0; gi < plan_.groups.size(); ++gi) {
      const SharingGroup& g = plan_.groups[gi];
      Engine e;
      e.index = gi;
      e.group = g;
      e.model_idx_of_service.assign(profiles_.size(), -1);
      std::vector<ModelSpec> specs;
      for (std::size_t svc : g.services) {
        const std::string& mid = profiles_[svc].model_id;
        int idx = -1;
        for (std::size_t k = 0; k < e.shared_models.size(); ++k)
          if (e.shared_models[k] == mid) idx = static_cast<int>(k);
        if (idx < 0) {
          idx = static_cast<int>(e.shared_models.size());
          e.shared_models.push_back(mid);
          specs.push_back(cost_.model(mid));
        }
        e.model_idx_of_service[svc] = idx;
        engines_by_service_[svc].push_back(gi);
      }
      // All leftover memory (optionally capped) backs the merged-block pool.
      double weights = 0.0, act = 0.0;
      for (const auto& spec : specs) {
        weights += spec.weight_bytes / g.tp_size;
        act = std::max(act, cost_.activation_peak_bytes(spec.model_id, g.tp_size,
                                                        opts_.scheduler.batch_cap));
      }
      double leftover = cluster_.mem_bytes - weights - act;
      if (opts_.kv_pool_cap_bytes > 0.0)
        leftover = std::min(leftover, opts_.kv_pool_cap_bytes / g.tp_size);
      const double merged = plan_merged_shape(specs, opts_.tokens_per_block, g.tp_size);
      const auto blocks = static_cast<std::size_t>(std::max(0.0, leftover / merged));
      if (blocks == 0)
        throw InfeasibleError("engine " + std::to_string(gi) + ": no GPU memory left for KV");
      e.cache = UnifiedKvCache(specs, opts_.tokens_per_block, g.tp_size, blocks);
      e.sched = make_scheduler(opts_.scheduler, &requests_, &profiles_, &cost_, g.tp_size);
      engines_.push_back(std::move(e));
    }
  }

  void push(Ev ev) { events_.push(ev); }

  void on_arrival(std::uint64_t id) {
    Request& r = requests_[id];
    dispatch_request(r, now_);
    if (!r.unservable) kick(engines_[engine_of_[id]]);
  }

  // Least-loaded eligible engine, ties to the lower engine id.
  void dispatch_request(Request& r, double admit_time) {
    const auto& eligible = engines_by_service_[r.service];
    if (eligible.empty()) {
      r.unservable = true;
      log_line("unservable req=" + std::to_string(r.id));
      return;
    }
    std::size_t best = eligible[0];
    for (std::size_t gi : eligible)
      if (engines_[gi].sched->queue_depth() < engines_[best].sched->queue_depth()) best = gi;
    Engine& e = engines_[best];
    // A request whose full context can never fit the pool would wedge the
    // engine; reject it up front.
    const long max_tokens = static_cast<long>(r.input_len) + r.output_len;
    if (e.cache.native_blocks_for(max_tokens) > e.cache.pool_size()) {
      r.unservable = true;
      log_line("unservable req=" + std::to_string(r.id) + " reason=exceeds_kv_pool");
      return;
    }
    engine_of_[r.id] = best;
    e.sched->admit(r.id, admit_time);
    if (opts_.collect_log)
      log_line("arrival req=" + std::to_string(r.id) + " svc=" + profiles_[r.service].name +
               " engine=" + std::to_string(best));
  }

  void kick(Engine& e) {
    if (e.running || now_ < e.resume_at || replace_pending_) return;
    if (!e.sched->has_queued_work()) return;
    EngineGate gate(this, &e);
    auto batch = e.sched->next_batch(gate, now_);
    if (!batch) return;
    const std::string& model = e.shared_models[e.model_idx_of_service[batch->service]];
    double dt;
    if (batch->phase == Phase::kPrefill) {
      long tokens = 0;
      for (std::uint64_t id : batch->request_ids) {
        Request& r = requests_[id];
        tokens += r.input_len + r.tokens_generated;
        r.phase = Phase::kPrefill;
      }
      dt = cost_.prefill_time(model, e.group.tp_size, tokens);
    } else {
      long ctx = 0;
      for (std::uint64_t id : batch->request_ids) {
        const Request& r = requests_[id];
        ctx += r.input_len + r.tokens_generated;
        e.cache.record_context_read(id);
      }
      dt = cost_.decode_time(model, e.group.tp_size,
                             static_cast<int>(batch->request_ids.size()), ctx);
    }
    e.running = true;
    ++running_engines_;
    e.current = *batch;
    e.iter_time = dt;
    push({now_ + dt, EvKind::kIterDone, next_seq_++, e.index});
    if (opts_.collect_log) {
      std::string ids;
      for (std::uint64_t id : batch->request_ids)
        ids += (ids.empty() ? "" : ",") + std::to_string(id);
      log_line("batch engine=" + std::to_string(e.index) +
               " phase=" + (batch->phase == Phase::kPrefill ? std::string("prefill")
                                                            : std::string("decode")) +
               " svc=" + profiles_[batch->service].name +
               " n=" + std::to_string(batch->request_ids.size()) +
               " starved=" + (batch->triggered_by_starvation ? "1" : "0") +
               " dt=" + format_seconds(dt) + " reqs=" + ids);
    }
  }

  void on_iter_done(std::size_t engine_idx) {
    Engine& e = engines_[engine_idx];
    const BatchDecision batch = std::move(e.current);
    e.running = false;
    --running_engines_;
    for (std::uint64_t id : batch.request_ids) {
      Request& r = requests_[id];
      if (r.tokens_generated == 0) r.first_token_time = now_;
      r.tokens_generated += 1;
      if (r.tokens_generated >= r.output_len) {
        r.tokens_generated = r.output_len;
        r.phase = Phase::kFinished;
        r.finish_time = now_;
        e.cache.free_request(id);
        if (opts_.collect_log)
          log_line("finish req=" + std::to_string(id) + " latency=" + format_seconds(r.latency()));
      } else {
        r.phase = Phase::kDecoding;
      }
    }
    e.sched->account_iteration(batch, e.iter_time, e.group.tp_size, now_);
    if (replace_pending_) {
      if (running_engines_ == 0) do_replacement();
      return;
    }
    kick(e);
  }

  void evict(Engine& e, std::uint64_t victim) {
    e.cache.free_request(victim);
    Request& r = requests_[victim];
    r.phase = Phase::kWaiting;  // KV gone; prefill recomputes it on resume
    e.sched->requeue_after_eviction(victim, now_);
    if (opts_.collect_log)
      log_line("evict engine=" + std::to_string(e.index) + " req=" + std::to_string(victim));
  }

  void on_replace_boundary(double boundary) {
    replace_pending_ = true;
    pending_boundary_ = boundary;
    if (running_engines_ == 0) do_replacement();
  }

  void do_replacement() {
    replace_pending_ = false;
    const double boundary = pending_boundary_;
    const WindowMetrics real =
        window_metrics(requests_, repl_.interval_start, boundary, metric_ctx_);
    const double m_real = opts_.replacement.metric == ReplacementMetric::kNormalizedLatency
                              ? real.l_n_mean
                              : real.slo_attainment;
    const double old_interval = repl_.current_interval;
    if (opts_.replacement.adaptive && repl_.have_estimate)
      repl_.current_interval = clamp_interval(
          update_interval(old_interval, m_real, repl_.last_estimate, opts_.replacement.beta),
          opts_.replacement);

    const Trace history = trace_.slice(repl_.interval_start, boundary);
    PlacementPlan new_plan = replan_ ? replan_(history, plan_) : plan_;
    const bool changed =
        serialize_plan(new_plan, profiles_) != serialize_plan(plan_, profiles_);
    const double resume = now_ + (changed ? opts_.replacement.migrate_pause : 0.0);

    ReplacementEvent event;
    event.time = boundary;
    event.old_interval = old_interval;
    event.new_interval = repl_.current_interval;
    event.m_real = m_real;
    event.m_est = repl_.have_estimate ? repl_.last_estimate : std::nan("");
    event.plan_changed = changed;
    replacement_log_.push_back(event);
    if (opts_.collect_log)
      log_line("replace interval_old=" + format_seconds(old_interval) +
               " interval_new=" + format_seconds(repl_.current_interval) +
               " m_real=" + format_seconds(m_real) +
               " m_est=" + (repl_.have_estimate ? format_seconds(repl_.last_estimate) : "none") +
               " changed=" + (changed ? "1" : "0"));

    if (changed) {
      // Drain every queue, rebuild engines, and re-dispatch in id order.
      // In-flight decodes lose their KV and re-prefill after migration.
      std::vector<std::uint64_t> live;
      for (auto& e : engines_)
        for (std::uint64_t id : e.sched->drain()) live.push_back(id);
      std::sort(live.begin(), live.end());
      plan_ = std::move(new_plan);
      engine_of_.clear();
      build_engines();
      for (auto& e : engines_) e.resume_at = resume;
      for (std::uint64_t id : live) {
        Request& r = requests_[id];
        r.phase = Phase::kWaiting;
        dispatch_request(r, resume);
      }
    }
    for (auto& e : engines_) {
      e.resume_at = resume;
      push({resume, EvKind::kResume, next_seq_++, e.index});
    }

    // Estimate for the upcoming interval: replay the elapsed window's trace
    // under the active plan with replacement off.
    repl_.last_real = m_real;
    repl_.last_estimate = estimate_metric(history, boundary - repl_.interval_start);
    repl_.have_estimate = true;
    repl_.interval_start = resume;
    repl_.next_replacement_time = resume + repl_.current_interval;
    push({repl_.next_replacement_time, EvKind::kReplace, next_seq_++, 0});
  }

  double estimate_metric(const Trace& history, double window);  // defined below

  void log_line(const std::string& body) {
    if (!opts_.collect_log) return;
    log_ += "t=" + format_seconds(now_) + " " + body + "\n";
  }

  Trace trace_;
  PlacementPlan plan_;
  const std::vector<ServiceProfile>& profiles_;
  const CostModel& cost_;
  const GpuSpec& cluster_;
  SimOptions opts_;
  ReplanFn replan_;
  double until_;

  MetricContext metric_ctx_;
  std::vector<Request> requests_;
  std::vector<Engine> engines_;
  std::vector<std::vector<std::size_t>> engines_by_service_;
  std::unordered_map<std::uint64_t, std::size_t> engine_of_;
  std::priority_queue<Ev, std::vector<Ev>, EvLater> events_;
  std::uint64_t next_seq_ = 0;
  double now_ = 0.0;
  int running_engines_ = 0;
  bool replace_pending_ = false;
  double pending_boundary_ = 0.0;
  ReplacementState repl_;
  std::vector<ReplacementEvent> replacement_log_;
  std::string log_;
};

}  // namespace detail

/// Runs the full event loop: arrivals, per-engine iterations, replacement
/// timers. Bit-deterministic for identical inputs and seed. `until` bounds
/// simulated time for windowed estimates; the default drains the trace.
inline RunResult run_simulation(const Trace& trace, const PlacementPlan& plan,
                                const std::vector<ServiceProfile>& profiles,
                                const CostModel& cost, const GpuSpec& cluster,
                                const SimOptions& opts, ReplanFn replan = {},
                                double until = std::numeric_limits<double>::infinity()) {
  detail::SimRun sim(trace, plan, profiles, cost, cluster, opts, std::move(replan), until);
  return sim.run();
}

inline double detail::SimRun::estimate_metric(const Trace& history, double window) {
  SimOptions inner = opts_;
  inner.replacement.enabled = false;
  inner.collect_log = false;
  inner.seed = opts_.seed ^ (0x5eedULL + replacement_log_.size());
  RunResult r = run_simulation(history, plan_, profiles_, cost_, cluster_, inner, {}, window);
  const WindowMetrics est = window_metrics(r.requests, 0.0, window, metric_ctx_);
  return opts_.replacement.metric == ReplacementMetric::kNormalizedLatency ? est.l_n_mean
                                                                           : est.slo_attainment;
}

/// Dispatcher rule, exposed for direct testing: among engines serving the
/// service, the one with the fewest admitted unfinished requests; ties break
/// to the lower engine id. Empty result means the request is unservable.
inline std::optional<std::size_t> pick_engine(const std::vector<std::size_t>& eligible,
                                              const std::vector<std::size_t>& depths) {
  if (eligible.empty()) return std::nullopt;
  std::size_t best = eligible[0];
  for (std::size_t gi : eligible)
    if (depths[gi] < depths[best]) best = gi;
  return best;
}

}  // namespace seasim
