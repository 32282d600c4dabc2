// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "seasim/common.hpp"
#include "seasim/config.hpp"
#include "seasim/cost_model.hpp"
#include "seasim/experiment.hpp"
#include "seasim/kv_cache.hpp"
#include "seasim/metrics.hpp"
#include "seasim/placement.hpp"
#include "seasim/placement_plan.hpp"
#include "seasim/replacement.hpp"
#include "seasim/scheduler.hpp"
#include "seasim/simulation.hpp"
#include "seasim/workload.hpp"
