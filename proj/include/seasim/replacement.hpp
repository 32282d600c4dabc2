// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "seasim/common.hpp"

namespace seasim {

enum class ReplacementMetric { kNormalizedLatency, kSloAttainment };

struct ReplacementConfig {
  bool enabled = false;
  bool adaptive = true;         // off: fixed interval, replacement still runs
  double initial_interval = 600.0;
  double min_interval = 60.0;
  double max_interval = 3600.0;
  double beta = 0.1;
  double migrate_pause = 5.0;   // engines stall this long on a plan change
  ReplacementMetric metric = ReplacementMetric::kNormalizedLatency;

  void validate() const {
    if (beta <= 0.0 || beta >= 1.0) throw ConfigError("replacement: beta must be in (0,1)");
    if (initial_interval <= 0.0) throw ConfigError("replacement: initial_interval must be > 0");
    if (min_interval <= 0.0 || max_interval < min_interval)
      throw ConfigError("replacement: need 0 < min_interval <= max_interval");
    if (migrate_pause < 0.0) throw ConfigError("replacement: migrate_pause must be >= 0");
  }
};

/// One interval-boundary update. Relative deviation of the real metric from
/// the estimate above beta shrinks the interval, below beta grows it; the
/// boundary case lands on the shrink side, and an estimate of zero counts as
/// maximal deviation.
inline double update_interval(double interval, double m_real, double m_est, double beta) {
  bool shrink;
  if (m_est == 0.0)
    shrink = true;
  else
    shrink = std::abs(m_real - m_est) / std::abs(m_est) >= beta;
  return shrink ? (1.0 - beta) * interval : (1.0 + beta) * interval;
}

inline double clamp_interval(double interval, const ReplacementConfig& cfg) {
  return std::min(cfg.max_interval, std::max(cfg.min_interval, interval));
}

/// Controller state carried across interval boundaries by the simulator.
struct ReplacementState {
  double current_interval = 0.0;
  double next_replacement_time = 0.0;
  double interval_start = 0.0;
  double last_estimate = 0.0;
  double last_real = 0.0;
  bool have_estimate = false;
};

struct ReplacementEvent {
  double time = 0.0;
  double old_interval = 0.0;
  double new_interval = 0.0;
  double m_real = 0.0;
  double m_est = 0.0;
  bool plan_changed = false;
};

}  // namespace seasim
