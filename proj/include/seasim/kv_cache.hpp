// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "seasim/common.hpp"
#include "seasim/cost_model.hpp"

namespace seasim {

/// Per-GPU bytes of one native cache block of `model` at `tp_size`.
inline double native_block_bytes(const ModelSpec& model, int tokens_per_block, int tp_size) {
  if (model.num_heads % tp_size != 0)
    throw ConfigError("model " + model.model_id + ": tp does not divide num_heads");
  return static_cast<double>(tokens_per_block) * model.num_layers * 2.0 *
         (model.num_heads / tp_size) * model.head_dim * model.dtype_bytes;
}

/// Merged block size: the largest native block among the shared models, so
/// every model packs at least one native block per merged block.
inline double plan_merged_shape(const std::vector<ModelSpec>& models, int tokens_per_block,
                                int tp_size) {
  if (models.empty()) throw ConfigError("plan_merged_shape: empty model list");
  double merged = 0.0;
  for (const auto& m : models)
    merged = std::max(merged, native_block_bytes(m, tokens_per_block, tp_size));
  return merged;
}

struct CacheStats {
  std::uint64_t block_table_entries = 0;  // peak across the run
  std::uint64_t native_reads_writes = 0;  // cumulative block touches
  double internal_fragmentation_bytes = 0.0;  // peak
  double peak_utilization = 0.0;              // fraction of merged blocks in use
};

/// Merged-block KV cache for one engine. Smaller models pack several native
/// blocks into one merged block via a sub-index; a merged block is claimed by
/// the first model that touches it and returns to the free list only when
/// every sub-slot is empty. Single-threaded by contract.
class UnifiedKvCache {
 public:
  UnifiedKvCache() = default;

  UnifiedKvCache(std::vector<ModelSpec> models, int tokens_per_block, int tp_size,
                 std::size_t pool_blocks)
      : models_(std::move(models)),
        tokens_per_block_(tokens_per_block),
        pool_blocks_(pool_blocks) {
    merged_block_bytes_ = plan_merged_shape(models_, tokens_per_block, tp_size);
    native_bytes_.resize(models_.size());
    sub_slots_.resize(models_.size());
    open_slots_.assign(models_.size(), 0);
    partial_.resize(models_.size());
    for (std::size_t m = 0; m < models_.size(); ++m) {
      native_bytes_[m] = native_block_bytes(models_[m], tokens_per_block, tp_size);
      sub_slots_[m] = static_cast<int>(merged_block_bytes_ / native_bytes_[m]);
    }
    blocks_.assign(pool_blocks_, BlockState{});
    for (std::size_t b = 0; b < pool_blocks_; ++b) free_list_.insert(static_cast<int>(b));
  }

  int model_index(const std::string& model_id) const {
    for (std::size_t m = 0; m < models_.size(); ++m)
      if (models_[m].model_id == model_id) return static_cast<int>(m);
    throw ConfigError("kv cache: model not shared on this engine: " + model_id);
  }

  int sub_slots_per_merged(int model_idx) const { return sub_slots_[model_idx]; }
  double merged_block_bytes() const { return merged_block_bytes_; }
  std::size_t pool_size() const { return pool_blocks_; }
  std::size_t free_blocks() const { return free_list_.size(); }
  std::size_t allocated_blocks() const { return pool_blocks_ - free_list_.size(); }
  int tokens_per_block() const { return tokens_per_block_; }

  std::size_t native_blocks_for(long tokens) const {
    return static_cast<std::size_t>((tokens + tokens_per_block_ - 1) / tokens_per_block_);
  }

  bool registered(std::uint64_t request_id) const { return table_.count(request_id) > 0; }

  /// Native slots the pool can still hand to `model_idx` without evictions.
  std::size_t available_slots(int model_idx) const {
    return open_slots_[model_idx] + free_list_.size() * sub_slots_[model_idx];
  }

  bool can_grow_to(std::uint64_t request_id, int model_idx, long tokens_needed) const {
    const std::size_t need = native_blocks_for(tokens_needed);
    std::size_t have = 0;
    auto it = table_.find(request_id);
    if (it != table_.end()) have = it->second.slots.size();
    if (need <= have) return true;
    return available_slots(model_idx) >= need - have;
  }

  /// Grows the request's block table to cover `tokens_needed` tokens.
  /// Returns false (and changes nothing) when the pool cannot supply the
  /// missing slots — the CacheFull signal; the caller preempts or delays.
  bool try_allocate(std::uint64_t request_id, int model_idx, long tokens_needed) {
    if (tokens_needed < 0) throw ValidationError("allocate: negative tokens_needed");
    Entry& e = table_[request_id];  // registers on first touch
    if (e.slots.empty()) e.model = model_idx;
    if (e.model != model_idx) throw std::logic_error("allocate: request changed model");
    const std::size_t need = native_blocks_for(tokens_needed);
    if (need > e.slots.size() &&
        available_slots(model_idx) < need - e.slots.size())
      return false;
    token_waste_bytes_ -= entry_token_waste(e);
    while (e.slots.size() < need) claim_slot(e, model_idx, request_id);
    if (tokens_needed > e.tokens) {
      // One native-block touch per appended token.
      stats_rw_ += static_cast<std::uint64_t>(tokens_needed - e.tokens);
      e.tokens = tokens_needed;
    }
    token_waste_bytes_ += entry_token_waste(e);
    note_watermarks();
    return true;
  }

  /// Releases every slot of the request. Unknown request is a logic error.
  void free_request(std::uint64_t request_id) {
    auto it = table_.find(request_id);
    if (it == table_.end()) throw std::logic_error("free_request: unknown request");
    Entry& e = it->second;
    for (const auto& [block, slot] : e.slots) release_slot(block, slot, e.model);
    current_entries_ -= e.slots.size();
    token_waste_bytes_ -= entry_token_waste(e);
    table_.erase(it);
  }

  /// Counts one native-block touch per block of the request's context, e.g.
  /// a decode step streaming the full KV history.
  void record_context_read(std::uint64_t request_id) {
    auto it = table_.find(request_id);
    if (it == table_.end()) return;
    stats_rw_ += it->second.slots.size();
  }

  const std::vector<std::pair<int, int>>& block_table(std::uint64_t request_id) const {
    auto it = table_.find(request_id);
    if (it == table_.end()) throw std::logic_error("block_table: unknown request");
    return it->second.slots;
  }

  std::uint64_t owner_of(int block, int slot) const {
    const BlockState& b = blocks_[block];
    if (slot >= static_cast<int>(b.slot_owner.size())) return 0;
    return b.slot_owner[slot];
  }

  std::size_t table_entries() const { return current_entries_; }

  /// Bytes reserved but not holding KV pairs: merged-block packing residue,
  /// unoccupied sub-slots of claimed blocks, and the tail of each request's
  /// last native block.
  double fragmentation_bytes() const { return slot_frag_bytes_ + token_waste_bytes_; }

  CacheStats stats() const {
    CacheStats s;
    s.block_table_entries = peak_entries_;
    s.native_reads_writes = stats_rw_;
    s.internal_fragmentation_bytes = peak_frag_bytes_;
    s.peak_utilization = pool_blocks_ == 0 ? 0.0 : peak_used_ / static_cast<double>(pool_blocks_);
    return s;
  }

 private:
  struct BlockState {
    int owner_model = -1;
    int occupied = 0;
    std::vector<std::uint64_t> slot_owner;
  };
  struct Entry {
    int model = -1;
    long tokens = 0;
    std::vector<std::pair<int, int>> slots;  // (merged block id, sub index)
  };

  double entry_token_waste(const Entry& e) const {
    if (e.model < 0) return 0.0;
    const double cap_tokens = static_cast<double>(e.slots.size()) * tokens_per_block_;
    const double per_token = native_bytes_[e.model] / tokens_per_block_;
    return (cap_tokens - static_cast<double>(e.tokens)) * per_token;
  }

  void claim_slot(Entry& e, int model_idx, std::uint64_t request_id) {
    token_waste_bytes_ -= entry_token_waste(e);
    int block, slot;
    auto& partial = partial_[model_idx];
    if (!partial.empty()) {
      block = *partial.begin();
      BlockState& b = blocks_[block];
      slot = 0;
      while (b.slot_owner[slot] != 0) ++slot;
      b.slot_owner[slot] = request_id;
      b.occupied++;
      open_slots_[model_idx]--;
      slot_frag_bytes_ -= native_bytes_[model_idx];
      if (b.occupied == sub_slots_[model_idx]) partial.erase(block);
    } else {
      if (free_list_.empty()) throw std::logic_error("claim_slot: pool exhausted");
      block = *free_list_.begin();
      free_list_.erase(free_list_.begin());
      BlockState& b = blocks_[block];
      b.owner_model = model_idx;
      b.occupied = 1;
      b.slot_owner.assign(sub_slots_[model_idx], 0);
      b.slot_owner[0] = request_id;
      slot = 0;
      open_slots_[model_idx] += sub_slots_[model_idx] - 1;
      slot_frag_bytes_ += merged_block_bytes_ - native_bytes_[model_idx];
      if (sub_slots_[model_idx] > 1) partial.insert(block);
    }
    e.slots.emplace_back(block, slot);
    current_entries_++;
    token_waste_bytes_ += entry_token_waste(e);
  }

  void release_slot(int block, int slot, int model_idx) {
    BlockState& b = blocks_[block];
    b.slot_owner[slot] = 0;
    b.occupied--;
    if (b.occupied == 0) {
      partial_[model_idx].erase(block);
      open_slots_[model_idx] -= sub_slots_[model_idx] - 1;
      slot_frag_bytes_ -= merged_block_bytes_ - native_bytes_[model_idx];
      b.owner_model = -1;
      b.slot_owner.clear();
      free_list_.insert(block);
    } else {
      partial_[model_idx].insert(block);
      open_slots_[model_idx]++;
      slot_frag_bytes_ += native_bytes_[model_idx];
    }
  }

  void note_watermarks() {
    peak_entries_ = std::max(peak_entries_, static_cast<std::uint64_t>(current_entries_));
    peak_used_ = std::max(peak_used_, static_cast<double>(allocated_blocks()));
    peak_frag_bytes_ = std::max(peak_frag_bytes_, fragmentation_bytes());
  }

  std::vector<ModelSpec> models_;
  int tokens_per_block_ = 16;
  std::size_t pool_blocks_ = 0;
  double merged_block_bytes_ = 0.0;
  std::vector<double> native_bytes_;
  std::vector<int> sub_slots_;
  std::vector<std::size_t> open_slots_;        // free sub-slots in claimed blocks
  std::vector<std::set<int>> partial_;         // claimed, not-full blocks per model
  std::set<int> free_list_;
  std::vector<BlockState> blocks_;
  std::unordered_map<std::uint64_t, Entry> table_;

  std::size_t current_entries_ = 0;
  std::uint64_t peak_entries_ = 0;
  std::uint64_t stats_rw_ = 0;
  double slot_frag_bytes_ = 0.0;
  double token_waste_bytes_ = 0.0;
  double peak_frag_bytes_ = 0.0;
  double peak_used_ = 0.0;
};

/// One step of a cache workload replay.
struct KvOp {
  enum class Kind { kGrow, kFree } kind = Kind::kGrow;
  std::uint64_t request_id = 0;
  int model_idx = 0;
  long tokens = 0;  // kGrow: total tokens the request must cover afterwards
};

/// Split-scheme reference accounting: blocks are per-layer-per-head, so each
/// native block of model m costs num_layers*num_heads table entries and every
/// token touches that many blocks. Blocks are exactly shaped, so the only
/// fragmentation is the tail of the last block.
class SplitCacheCounter {
 public:
  explicit SplitCacheCounter(std::vector<ModelSpec> models, int tokens_per_block)
      : models_(std::move(models)), tokens_per_block_(tokens_per_block) {}

  void grow(std::uint64_t id, int model_idx, long tokens) {
    Entry& e = table_[id];
    e.model = model_idx;
    const long need =
        (tokens + tokens_per_block_ - 1) / tokens_per_block_;
    const std::uint64_t factor = split_factor(model_idx);
    if (need > e.blocks) {
      current_entries_ += static_cast<std::uint64_t>(need - e.blocks) * factor;
      e.blocks = need;
    }
    if (tokens > e.tokens) {
      rw_ += static_cast<std::uint64_t>(tokens - e.tokens) * factor;
      e.tokens = tokens;
    }
    peak_entries_ = std::max(peak_entries_, current_entries_);
    frag_ = std::max(frag_, total_token_waste());
  }

  void free(std::uint64_t id) {
    auto it = table_.find(id);
    if (it == table_.end()) return;
    current_entries_ -= static_cast<std::uint64_t>(it->second.blocks) * split_factor(it->second.model);
    table_.erase(it);
  }

  CacheStats stats() const {
    CacheStats s;
    s.block_table_entries = peak_entries_;
    s.native_reads_writes = rw_;
    s.internal_fragmentation_bytes = frag_;
    s.peak_utilization = 0.0;  // unbounded reference pool
    return s;
  }

 private:
  struct Entry {
    int model = 0;
    long blocks = 0;
    long tokens = 0;
  };

  std::uint64_t split_factor(int model_idx) const {
    const ModelSpec& m = models_[model_idx];
    return static_cast<std::uint64_t>(m.num_layers) * static_cast<std::uint64_t>(m.num_heads);
  }

  double total_token_waste() const {
    double waste = 0.0;
    for (const auto& [id, e] : table_) {
      const double per_token = models_[e.model].kv_bytes_per_token();
      waste += (static_cast<double>(e.blocks) * tokens_per_block_ - e.tokens) * per_token;
    }
    return waste;
  }

  std::vector<ModelSpec> models_;
  int tokens_per_block_;
  std::map<std::uint64_t, Entry> table_;
  std::uint64_t current_entries_ = 0;
  std::uint64_t peak_entries_ = 0;
  std::uint64_t rw_ = 0;
  double frag_ = 0.0;
};

/// Replays the same token workload under the merged and the split scheme and
/// returns both stat blocks for comparison.
inline std::pair<CacheStats, CacheStats> compare_schemes(const std::vector<ModelSpec>& models,
                                                         int tokens_per_block, int tp_size,
                                                         const std::vector<KvOp>& ops,
                                                         std::size_t pool_blocks) {
  UnifiedKvCache merged(models, tokens_per_block, tp_size, pool_blocks);
  SplitCacheCounter split(models, tokens_per_block);
  for (const auto& op : ops) {
    if (op.kind == KvOp::Kind::kGrow) {
      if (!merged.try_allocate(op.request_id, op.model_idx, op.tokens))
        throw ValidationError("compare_schemes: pool too small for workload sample");
      split.grow(op.request_id, op.model_idx, op.tokens);
    } else {
      merged.free_request(op.request_id);
      split.free(op.request_id);
    }
  }
  return {merged.stats(), split.stats()};
}

}  // namespace seasim
