// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "seasim/common.hpp"

namespace seasim {

constexpr double kGiB = 1024.0 * 1024.0 * 1024.0;

/// Architecture summary of one model class. Weights and the KV block shape
/// derive from these fields; min_tp is the smallest tensor-parallel size
/// whose per-GPU weight share fits GPU memory.
struct ModelSpec {
  std::string model_id;
  int num_layers = 0;
  int num_heads = 0;
  int head_dim = 0;
  int dtype_bytes = 0;
  double weight_bytes = 0.0;
  int min_tp = 1;

  void validate() const {
    if (num_layers < 1 || num_heads < 1 || head_dim < 1 || dtype_bytes < 1)
      throw ConfigError("model " + model_id + ": all counts must be >= 1");
    if (weight_bytes <= 0.0)
      throw ConfigError("model " + model_id + ": weight_bytes must be > 0");
    if (min_tp < 1) throw ConfigError("model " + model_id + ": min_tp must be >= 1");
  }

  // Per-token KV bytes across the full model (both K and V, all layers/heads).
  double kv_bytes_per_token() const {
    return 2.0 * num_layers * num_heads * head_dim * dtype_bytes;
  }
};

/// Iteration-time coefficients for one (model, tp_size) pair.
///   prefill(tokens)              = prefill_fixed + prefill_per_token * tokens
///   decode(batch, context)       = decode_fixed + decode_per_seq * batch
///                                  + decode_per_context_token * context
///   activation_peak(batch)       = activation_base + activation_per_seq * batch
struct CostCoeffs {
  double prefill_fixed = 0.0;             // seconds
  double prefill_per_token = 0.0;         // seconds / prompt token
  double decode_fixed = 0.0;              // seconds
  double decode_per_seq = 0.0;            // seconds / request in batch
  double decode_per_context_token = 0.0;  // seconds / context token
  double activation_base = 0.0;           // bytes
  double activation_per_seq = 0.0;        // bytes / request in batch

  void validate(const std::string& key) const {
    const double coeffs[] = {prefill_fixed,  prefill_per_token,        decode_fixed,
                             decode_per_seq, decode_per_context_token, activation_base,
                             activation_per_seq};
    for (double c : coeffs)
      if (c < 0.0) throw ConfigError("cost entry " + key + ": coefficients must be >= 0");
    if (prefill_fixed + prefill_per_token <= 0.0 || decode_fixed + decode_per_seq <= 0.0)
      throw ConfigError("cost entry " + key + ": iteration time must be positive");
  }
};

/// Cluster shape: N nodes of m GPUs each, all with the same memory.
struct GpuSpec {
  double mem_bytes = 80.0 * kGiB;
  int gpus_per_node = 8;
  int num_nodes = 1;

  int total_gpus() const { return gpus_per_node * num_nodes; }

  void validate() const {
    if (mem_bytes < 1.0 || gpus_per_node < 1 || num_nodes < 1)
      throw ConfigError("cluster: mem_bytes, gpus_per_node and num_nodes must be >= 1");
  }
};

/// Profiled cost tables for all models, immutable after load.
class CostModel {
 public:
  void add_model(ModelSpec spec) {
    spec.validate();
    models_[spec.model_id] = std::move(spec);
  }

  void add_entry(const std::string& model_id, int tp_size, CostCoeffs coeffs) {
    coeffs.validate(model_id + "/tp" + std::to_string(tp_size));
    entries_[{model_id, tp_size}] = coeffs;
  }

  bool has_entry(const std::string& model_id, int tp_size) const {
    return entries_.count({model_id, tp_size}) > 0;
  }

  const ModelSpec& model(const std::string& model_id) const {
    auto it = models_.find(model_id);
    if (it == models_.end()) throw ConfigError("unknown model: " + model_id);
    return it->second;
  }

  const std::map<std::string, ModelSpec>& models() const { return models_; }

  /// Time of one prefill iteration over `total_prompt_tokens` prompt tokens.
  double prefill_time(const std::string& model_id, int tp_size, long total_prompt_tokens) const {
    if (total_prompt_tokens < 1)
      throw ValidationError("prefill_time: total_prompt_tokens must be >= 1");
    const CostCoeffs& c = entry(model_id, tp_size);
    return c.prefill_fixed + c.prefill_per_token * static_cast<double>(total_prompt_tokens);
  }

  /// Time of one decode iteration generating one token for each of
  /// `batch_size` requests whose contexts total `total_context_tokens`.
  double decode_time(const std::string& model_id, int tp_size, int batch_size,
                     long total_context_tokens) const {
    if (batch_size == 0) return 0.0;
    if (batch_size < 0 || total_context_tokens < 0)
      throw ValidationError("decode_time: negative batch or context");
    const CostCoeffs& c = entry(model_id, tp_size);
    return c.decode_fixed + c.decode_per_seq * batch_size +
           c.decode_per_context_token * static_cast<double>(total_context_tokens);
  }

  double activation_peak_bytes(const std::string& model_id, int tp_size, int batch_size) const {
    const CostCoeffs& c = entry(model_id, tp_size);
    return c.activation_base + c.activation_per_seq * batch_size;
  }

  /// Per-GPU bytes needed to serve `model_ids` together at `tp_size` with a
  /// KV pool of `kv_pool_bytes` (pool is total across the TP group).
  /// Feasibility against GpuSpec.mem_bytes is the caller's judgement.
  double memory_footprint(const std::vector<std::string>& model_ids, int tp_size,
                          double kv_pool_bytes, int batch_cap) const {
    double weights = 0.0;
    double act = 0.0;
    for (const auto& id : model_ids) {
      const ModelSpec& spec = model(id);
      if (spec.num_heads % tp_size != 0)
        throw ConfigError("model " + id + ": tp_size " + std::to_string(tp_size) +
                          " does not divide num_heads");
      weights += spec.weight_bytes / tp_size;
      act = std::max(act, activation_peak_bytes(id, tp_size, batch_cap));
    }
    return weights + act + kv_pool_bytes / tp_size;
  }

  /// Total time of `steps` consecutive single-request decode iterations whose
  /// contexts grow from `ctx_first` by one token per step.
  double decode_span_time(const std::string& model_id, int tp_size, long ctx_first,
                          long steps) const {
    if (steps <= 0) return 0.0;
    const CostCoeffs& c = entry(model_id, tp_size);
    const double s = static_cast<double>(steps);
    const double ctx_sum = s * static_cast<double>(ctx_first) + s * (s - 1.0) / 2.0;
    return s * (c.decode_fixed + c.decode_per_seq) + c.decode_per_context_token * ctx_sum;
  }

  /// End-to-end time of one request served alone: one prefill iteration plus
  /// one decode iteration per output token after the first. Closed form so
  /// metric and SLO computation stay O(1) per request.
  double isolated_exec_time(const std::string& model_id, int tp_size, long input_len,
                            long output_len) const {
    return prefill_time(model_id, tp_size, input_len) +
           decode_span_time(model_id, tp_size, input_len + 1, output_len - 1);
  }

  void validate_tp_divisibility(int tp_size) const {
    for (const auto& [id, spec] : models_)
      if (spec.num_heads % tp_size == 0 && !has_entry(id, tp_size))
        throw ConfigError("model " + id + ": missing cost entry for tp=" + std::to_string(tp_size));
  }

 private:
  const CostCoeffs& entry(const std::string& model_id, int tp_size) const {
    auto it = entries_.find({model_id, tp_size});
    if (it == entries_.end())
      throw ConfigError("no cost entry for model " + model_id + " at tp=" +
                        std::to_string(tp_size));
    return it->second;
  }

  std::map<std::string, ModelSpec> models_;
  std::map<std::pair<std::string, int>, CostCoeffs> entries_;
};

/// Built-in model classes with synthetic but trend-faithful cost tables:
/// prefill gains from larger TP on long prompts, while short prompts and
/// small decode batches pay the extra communication overhead.
inline CostModel default_cost_model() {
  CostModel cm;

  cm.add_model({.model_id = "llama2-7b",
                .num_layers = 32,
                .num_heads = 32,
                .head_dim = 128,
                .dtype_bytes = 2,
                .weight_bytes = 14.0 * kGiB,
                .min_tp = 1});
  cm.add_model({.model_id = "llama2-13b",
                .num_layers = 40,
                .num_heads = 40,
                .head_dim = 128,
                .dtype_bytes = 2,
                .weight_bytes = 26.0 * kGiB,
                .min_tp = 1});
  cm.add_model({.model_id = "llama2-70b",
                .num_layers = 80,
                .num_heads = 64,
                .head_dim = 128,
                .dtype_bytes = 2,
                .weight_bytes = 140.0 * kGiB,
                .min_tp = 4});
  cm.add_model({.model_id = "opt-6.7b",
                .num_layers = 32,
                .num_heads = 32,
                .head_dim = 128,
                .dtype_bytes = 2,
                .weight_bytes = 13.4 * kGiB,
                .min_tp = 1});

  auto gib = [](double g) { return g * kGiB; };

  // llama2-7b
  cm.add_entry("llama2-7b", 1,
               {2.0e-3, 8.0e-5, 6.0e-3, 4.0e-4, 2.5e-7, gib(0.8), gib(0.03)});
  cm.add_entry("llama2-7b", 2,
               {5.0e-3, 4.8e-5, 7.5e-3, 2.4e-4, 1.4e-7, gib(0.5), gib(0.02)});
  cm.add_entry("llama2-7b", 4,
               {9.0e-3, 2.8e-5, 1.0e-2, 1.4e-4, 0.8e-7, gib(0.35), gib(0.013)});
  cm.add_entry("llama2-7b", 8,
               {1.4e-2, 1.8e-5, 1.4e-2, 0.9e-4, 0.5e-7, gib(0.25), gib(0.009)});

  // llama2-13b
  cm.add_entry("llama2-13b", 1,
               {2.5e-3, 1.45e-4, 9.0e-3, 6.5e-4, 4.2e-7, gib(1.1), gib(0.045)});
  cm.add_entry("llama2-13b", 2,
               {5.5e-3, 8.7e-5, 1.1e-2, 3.9e-4, 2.3e-7, gib(0.7), gib(0.028)});
  cm.add_entry("llama2-13b", 4,
               {1.0e-2, 5.2e-5, 1.4e-2, 2.3e-4, 1.3e-7, gib(0.5), gib(0.018)});
  cm.add_entry("llama2-13b", 8,
               {1.6e-2, 3.2e-5, 1.9e-2, 1.5e-4, 0.8e-7, gib(0.35), gib(0.012)});

  // llama2-70b (tp >= 4: a tp=1/2 weight share exceeds an 80GB GPU)
  cm.add_entry("llama2-70b", 4,
               {1.8e-2, 2.6e-4, 2.6e-2, 9.0e-4, 5.5e-7, gib(1.4), gib(0.055)});
  cm.add_entry("llama2-70b", 8,
               {2.6e-2, 1.5e-4, 3.3e-2, 5.6e-4, 3.2e-7, gib(0.9), gib(0.035)});

  // opt-6.7b
  cm.add_entry("opt-6.7b", 1,
               {1.9e-3, 7.6e-5, 5.7e-3, 3.8e-4, 2.4e-7, gib(0.8), gib(0.03)});
  cm.add_entry("opt-6.7b", 2,
               {4.8e-3, 4.6e-5, 7.2e-3, 2.3e-4, 1.35e-7, gib(0.5), gib(0.02)});
  cm.add_entry("opt-6.7b", 4,
               {8.6e-3, 2.7e-5, 9.6e-3, 1.35e-4, 0.77e-7, gib(0.35), gib(0.013)});
  cm.add_entry("opt-6.7b", 8,
               {1.35e-2, 1.7e-5, 1.35e-2, 0.87e-4, 0.48e-7, gib(0.25), gib(0.009)});

  return cm;
}

}  // namespace seasim
