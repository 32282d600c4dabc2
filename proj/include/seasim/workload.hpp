// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "seasim/common.hpp"
#include "seasim/cost_model.hpp"

namespace seasim {

/// Empirical token-length distribution: samples win when present, otherwise
/// a Gaussian truncated at one token.
struct LengthDist {
  double mean = 0.0;
  double stddev = 0.0;
  std::vector<int> samples;

  bool degenerate() const { return samples.empty() && stddev == 0.0; }

  double effective_mean() const {
    if (samples.empty()) return mean;
    double s = 0.0;
    for (int v : samples) s += v;
    return s / static_cast<double>(samples.size());
  }

  int sample(detail::Rng& rng) const {
    if (!samples.empty()) return samples[rng.next_below(samples.size())];
    if (stddev == 0.0) return std::max(1, static_cast<int>(std::llround(mean)));
    const double x = rng.gaussian(mean, stddev);
    return std::max(1, static_cast<int>(std::llround(x)));
  }
};

/// Per-service characteristics as collected by the service monitor.
/// mean_exec_time / exec_time_stddev are in single-GPU-equivalent seconds
/// (wall time at min_tp scaled by min_tp) so budgets compare across TP sizes.
struct ServiceProfile {
  std::string name;
  std::string model_id;
  LengthDist input_len_dist;
  LengthDist output_len_dist;
  double mean_exec_time = 0.0;    // L-hat, single-GPU-equivalent seconds
  double exec_time_stddev = 0.0;  // Var in the priority formula (a std deviation)
  double slo = 0.0;               // seconds
  double starvation_threshold = 0.0;

  void validate() const {
    if (mean_exec_time <= 0.0)
      throw ConfigError("service " + name + ": mean_exec_time must be > 0");
    if (exec_time_stddev < 0.0)
      throw ConfigError("service " + name + ": exec_time_stddev must be >= 0");
    if (slo <= 0.0) throw ConfigError("service " + name + ": slo must be > 0");
  }
};

enum class Phase : std::uint8_t { kWaiting, kPrefill, kDecoding, kFinished };

inline const char* to_string(Phase p) {
  switch (p) {
    case Phase::kWaiting: return "waiting";
    case Phase::kPrefill: return "prefill";
    case Phase::kDecoding: return "decoding";
    case Phase::kFinished: return "finished";
  }
  return "?";
}

/// One inference request. output_len is ground truth the scheduler never
/// sees directly; visible_output_len is what a (possibly noisy) profiler
/// would report and is only consulted in oracle-length mode.
struct Request {
  std::uint64_t id = 0;
  std::size_t service = 0;  // index into the service table
  double arrival_time = 0.0;
  int input_len = 0;
  int output_len = 0;
  int visible_output_len = 0;
  int tokens_generated = 0;
  Phase phase = Phase::kWaiting;
  std::optional<double> first_token_time;
  std::optional<double> finish_time;
  double budget_remaining = 0.0;  // single-GPU-equivalent seconds
  double budget_granted = 0.0;    // cumulative across doublings
  int budget_doublings = 0;
  bool unservable = false;

  bool finished() const { return phase == Phase::kFinished; }

  double latency() const {
    if (!finish_time) throw std::logic_error("latency of unfinished request");
    return *finish_time - arrival_time;
  }
};

struct TraceRecord {
  double arrival_time = 0.0;
  std::string service_id;
  int input_len = 0;
  int output_len = 0;
};

/// Arrival trace, non-decreasing in time.
struct Trace {
  std::vector<TraceRecord> records;

  std::size_t size() const { return records.size(); }
  bool empty() const { return records.empty(); }

  void validate(const std::vector<ServiceProfile>& profiles) const {
    double prev = 0.0;
    for (std::size_t i = 0; i < records.size(); ++i) {
      const TraceRecord& r = records[i];
      if (r.arrival_time < prev)
        throw ValidationError("trace: non-monotone arrival at record " + std::to_string(i));
      prev = r.arrival_time;
      if (r.input_len < 1 || r.output_len < 1)
        throw ValidationError("trace: non-positive length at record " + std::to_string(i));
      if (!profiles.empty()) {
        bool known = false;
        for (const auto& p : profiles) known = known || p.name == r.service_id;
        if (!known) throw ValidationError("trace: unknown service '" + r.service_id + "'");
      }
    }
  }

  /// Records with arrival in [begin, end), shifted so the window starts at 0.
  Trace slice(double begin, double end) const {
    Trace out;
    for (const auto& r : records) {
      if (r.arrival_time >= begin && r.arrival_time < end) {
        TraceRecord shifted = r;
        shifted.arrival_time -= begin;
        out.records.push_back(shifted);
      }
    }
    return out;
  }
};

/// Time-varying arrival-rate profiles for synthetic traces. Non-constant
/// shapes are realized by Poisson thinning against the peak rate.
struct RateProfile {
  enum class Kind { kConstant, kStep, kDiurnal } kind = Kind::kConstant;
  double step_time = 0.0;    // kStep: time of the rate change
  double step_factor = 1.0;  // kStep: multiplier after step_time
  double diurnal_period = 3600.0;
  double diurnal_depth = 0.5;  // kDiurnal: modulation in [0,1)

  double factor_at(double t) const {
    switch (kind) {
      case Kind::kConstant: return 1.0;
      case Kind::kStep: return t >= step_time ? step_factor : 1.0;
      case Kind::kDiurnal:
        return 1.0 - diurnal_depth * 0.5 *
                         (1.0 + std::sin(6.283185307179586 * t / diurnal_period));
    }
    return 1.0;
  }

  double peak_factor() const {
    switch (kind) {
      case Kind::kConstant: return 1.0;
      case Kind::kStep: return std::max(1.0, step_factor);
      case Kind::kDiurnal: return 1.0;
    }
    return 1.0;
  }
};

/// Poisson arrivals at aggregate `rate`, services assigned round-robin in
/// runs of `skewness`, lengths drawn from each service's distributions.
/// Pure function of its arguments.
inline Trace generate_trace(const std::vector<ServiceProfile>& profiles, double rate,
                            double duration, int skewness, std::uint64_t seed,
                            const RateProfile& shape = {}) {
  if (profiles.empty()) throw ConfigError("generate_trace: no service profiles");
  if (rate <= 0.0) throw ConfigError("generate_trace: rate must be > 0");
  if (skewness < 1) throw ConfigError("generate_trace: skewness must be >= 1");

  detail::Rng arrivals(seed);
  detail::Rng lengths(seed ^ 0x5eed5eed5eed5eedULL);

  Trace trace;
  const double peak = rate * shape.peak_factor();
  double t = 0.0;
  std::size_t run = 0;  // arrivals accepted so far; selects the service run
  while (true) {
    t += arrivals.exponential(peak);
    if (t >= duration) break;
    // Thinning keeps the accept decision independent of the length stream.
    if (shape.kind != RateProfile::Kind::kConstant &&
        arrivals.next_double() >= rate * shape.factor_at(t) / peak)
      continue;
    const std::size_t svc = (run / skewness) % profiles.size();
    ++run;
    TraceRecord rec;
    rec.arrival_time = t;
    rec.service_id = profiles[svc].name;
    rec.input_len = profiles[svc].input_len_dist.sample(lengths);
    rec.output_len = profiles[svc].output_len_dist.sample(lengths);
    trace.records.push_back(std::move(rec));
  }
  return trace;
}

inline constexpr const char* kTraceHeader = "arrival_time,service_id,input_len,output_len";

inline void save_trace(const Trace& trace, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot open trace file for writing: " + path);
  out << kTraceHeader << "\n";
  char buf[64];
  for (const auto& r : trace.records) {
    std::snprintf(buf, sizeof(buf), "%.6f", r.arrival_time);
    out << buf << "," << r.service_id << "," << r.input_len << "," << r.output_len << "\n";
  }
}

inline Trace load_trace(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open trace file: " + path);
  std::string line;
  if (!std::getline(in, line)) throw ParseError(path + ": empty file, expected header");
  if (line.size() && line.back() == '\r') line.pop_back();
  if (line != kTraceHeader)
    throw ParseError(path + ":1: bad header, expected '" + std::string(kTraceHeader) + "'");

  Trace trace;
  std::size_t lineno = 1;
  double prev = -1.0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.size() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string at, svc, il, ol;
    if (!std::getline(ss, at, ',') || !std::getline(ss, svc, ',') ||
        !std::getline(ss, il, ',') || !std::getline(ss, ol))
      throw ParseError(path + ":" + std::to_string(lineno) + ": expected 4 comma-separated fields");
    TraceRecord rec;
    try {
      rec.arrival_time = std::stod(at);
      rec.input_len = std::stoi(il);
      rec.output_len = std::stoi(ol);
    } catch (const std::exception&) {
      throw ParseError(path + ":" + std::to_string(lineno) + ": malformed number");
    }
    rec.service_id = svc;
    if (rec.input_len < 1 || rec.output_len < 1)
      throw ValidationError(path + ":" + std::to_string(lineno) + ": lengths must be >= 1");
    if (rec.arrival_time < prev)
      throw ValidationError(path + ":" + std::to_string(lineno) + ": non-monotone arrival_time");
    prev = rec.arrival_time;
    trace.records.push_back(std::move(rec));
  }
  return trace;
}

/// Mean and standard deviation of full-request execution time (wall seconds
/// at tp_size) under the cost model. Degenerate distributions evaluate in
/// closed form; otherwise a seeded Monte-Carlo estimate over >= 1000 draws.
inline std::pair<double, double> estimate_exec_stats(const ServiceProfile& profile,
                                                     const CostModel& cm, int tp_size,
                                                     std::uint64_t seed = 12345,
                                                     int num_samples = 4096) {
  if (!cm.has_entry(profile.model_id, tp_size))
    throw ConfigError("estimate_exec_stats: no cost entry for " + profile.model_id + " at tp=" +
                      std::to_string(tp_size));
  if (profile.input_len_dist.degenerate() && profile.output_len_dist.degenerate()) {
    const int in = std::max(1, static_cast<int>(std::llround(profile.input_len_dist.mean)));
    const int out = std::max(1, static_cast<int>(std::llround(profile.output_len_dist.mean)));
    return {cm.isolated_exec_time(profile.model_id, tp_size, in, out), 0.0};
  }
  if (num_samples < 1000) num_samples = 1000;
  detail::Rng rng(seed);
  std::vector<double> xs(num_samples);
  double sum = 0.0;
  for (int i = 0; i < num_samples; ++i) {
    const int in = profile.input_len_dist.sample(rng);
    const int out = profile.output_len_dist.sample(rng);
    xs[i] = cm.isolated_exec_time(profile.model_id, tp_size, in, out);
    sum += xs[i];
  }
  const double mean = sum / num_samples;
  double var = 0.0;
  for (double x : xs) var += (x - mean) * (x - mean);
  var /= num_samples;
  return {mean, std::sqrt(var)};
}

/// Profiling-noise injector: perturbs the scheduler-visible output length of
/// each request by Gaussian noise with stddev = scale * true length. Ground
/// truth is untouched; only oracle-length scheduling consults the result.
inline void apply_length_noise(std::vector<Request>& requests, double scale,
                               std::uint64_t seed) {
  if (scale < 0.0) throw ConfigError("length noise scale must be >= 0");
  detail::Rng rng(seed);
  for (auto& r : requests) {
    if (scale == 0.0) {
      r.visible_output_len = r.output_len;
    } else {
      const double noisy = rng.gaussian(0.0, scale * r.output_len);
      r.visible_output_len =
          std::max(1, static_cast<int>(std::llround(r.output_len + noisy)));
    }
  }
}

}  // namespace seasim
