// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "seasim/common.hpp"
#include "seasim/cost_model.hpp"
#include "seasim/workload.hpp"

namespace seasim {

/// Everything needed to turn finished requests into metrics. norm_exec is the
/// per-service normalization constant: isolated mean execution time at the
/// service's minimum TP, fixed per run so policies stay comparable.
struct MetricContext {
  const std::vector<ServiceProfile>* profiles = nullptr;
  const CostModel* cost = nullptr;
  std::vector<double> norm_exec;
  double slo_scale = 5.0;
  double delta = 0.9;  // per-service attainment threshold to report against

  static MetricContext make(const std::vector<ServiceProfile>& profiles, const CostModel& cost,
                            double slo_scale, double delta) {
    MetricContext ctx;
    ctx.profiles = &profiles;
    ctx.cost = &cost;
    ctx.slo_scale = slo_scale;
    ctx.delta = delta;
    for (const auto& p : profiles) {
      const int min_tp = cost.model(p.model_id).min_tp;
      ctx.norm_exec.push_back(p.mean_exec_time / min_tp);
    }
    return ctx;
  }

  /// Per-request SLO: slo_scale times this request's isolated execution time.
  double slo_of(const Request& r) const {
    const ServiceProfile& p = (*profiles)[r.service];
    const int min_tp = cost->model(p.model_id).min_tp;
    return slo_scale * cost->isolated_exec_time(p.model_id, min_tp, r.input_len, r.output_len);
  }
};

struct ServiceMetrics {
  std::size_t total = 0;
  std::size_t finished = 0;
  std::size_t unservable = 0;
  std::size_t slo_met = 0;
  double l_n_sum = 0.0;
  double l_n_mean = 0.0;
  double p99_latency = 0.0;
  double slo_attainment = 0.0;
  double avg_ttft = 0.0;
  double avg_tpot = 0.0;
  double throughput = 0.0;
  bool slo_constraint_met = true;
};

struct MetricsReport {
  ServiceMetrics aggregate;
  std::vector<ServiceMetrics> per_service;
  double delta = 0.9;
};

namespace detail {

// Nearest-rank percentile over a scratch copy.
inline double percentile(std::vector<double> xs, double pct) {
  if (xs.empty()) return 0.0;
  std::sort(xs.begin(), xs.end());
  const std::size_t rank =
      std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(pct / 100.0 * xs.size())));
  return xs[rank - 1];
}

struct Accum {
  std::vector<double> latencies;
  std::vector<double> norm;
  double l_n_sum = 0.0;
  double ttft_sum = 0.0;
  std::size_t ttft_n = 0;
  double tpot_sum = 0.0;
  std::size_t tpot_n = 0;
  std::size_t total = 0, finished = 0, unservable = 0, slo_met = 0;
  double first_arrival = std::numeric_limits<double>::infinity();
  double last_finish = -std::numeric_limits<double>::infinity();

  void add(const Request& r, const MetricContext& ctx) {
    ++total;
    first_arrival = std::min(first_arrival, r.arrival_time);
    if (r.unservable || !r.finished()) {
      if (r.unservable) ++unservable;
      return;  // counts against SLO attainment, contributes no latency
    }
    ++finished;
    const double lat = r.latency();
    latencies.push_back(lat);
    norm.push_back(lat / ctx.norm_exec[r.service]);
    l_n_sum += norm.back();
    last_finish = std::max(last_finish, *r.finish_time);
    if (lat < ctx.slo_of(r)) ++slo_met;  // strict inequality
    if (r.first_token_time) {
      ttft_sum += *r.first_token_time - r.arrival_time;
      ++ttft_n;
    }
    if (r.output_len >= 2 && r.first_token_time) {
      tpot_sum += (*r.finish_time - *r.first_token_time) / (r.output_len - 1);
      ++tpot_n;
    }
  }

  ServiceMetrics finish_metrics(double delta) const {
    ServiceMetrics m;
    m.total = total;
    m.finished = finished;
    m.unservable = unservable;
    m.slo_met = slo_met;
    m.l_n_sum = l_n_sum;
    m.l_n_mean = norm.empty() ? 0.0 : l_n_sum / static_cast<double>(norm.size());
    m.p99_latency = percentile(latencies, 99.0);
    m.slo_attainment = total == 0 ? 1.0 : static_cast<double>(slo_met) / static_cast<double>(total);
    m.avg_ttft = ttft_n == 0 ? 0.0 : ttft_sum / static_cast<double>(ttft_n);
    m.avg_tpot = tpot_n == 0 ? 0.0 : tpot_sum / static_cast<double>(tpot_n);
    const double span = last_finish - first_arrival;
    m.throughput = (finished > 0 && span > 0.0) ? static_cast<double>(finished) / span : 0.0;
    m.slo_constraint_met = m.slo_attainment >= delta;
    return m;
  }
};

}  // namespace detail

/// Final metrics over a completed run. Every request must be finished or
/// marked unservable; anything still in flight is a logic error here.
inline MetricsReport compute_metrics(const std::vector<Request>& requests,
                                     const MetricContext& ctx) {
  detail::Accum agg;
  std::vector<detail::Accum> per(ctx.profiles->size());
  for (const auto& r : requests) {
    if (!r.finished() && !r.unservable)
      throw std::logic_error("compute_metrics: request " + std::to_string(r.id) +
                             " neither finished nor unservable");
    agg.add(r, ctx);
    per[r.service].add(r, ctx);
  }
  MetricsReport report;
  report.delta = ctx.delta;
  report.aggregate = agg.finish_metrics(ctx.delta);
  for (const auto& a : per) report.per_service.push_back(a.finish_metrics(ctx.delta));
  return report;
}

/// Interval metric for the replacement controller: requests arriving in
/// [begin, end); those not finished by `end` count as SLO violations and
/// contribute no latency. Tolerates in-flight requests by design.
struct WindowMetrics {
  double l_n_mean = 0.0;
  double slo_attainment = 1.0;
  std::size_t arrivals = 0;
};

inline WindowMetrics window_metrics(const std::vector<Request>& requests, double begin,
                                    double end, const MetricContext& ctx) {
  WindowMetrics w;
  double norm_sum = 0.0;
  std::size_t finished = 0, met = 0;
  for (const auto& r : requests) {
    if (r.arrival_time < begin || r.arrival_time >= end) continue;
    ++w.arrivals;
    if (!r.finished() || *r.finish_time > end) continue;
    ++finished;
    const double lat = r.latency();
    norm_sum += lat / ctx.norm_exec[r.service];
    if (lat < ctx.slo_of(r)) ++met;
  }
  w.l_n_mean = finished == 0 ? 0.0 : norm_sum / static_cast<double>(finished);
  w.slo_attainment =
      w.arrivals == 0 ? 1.0 : static_cast<double>(met) / static_cast<double>(w.arrivals);
  return w;
}

}  // namespace seasim
