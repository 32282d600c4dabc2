// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <map>
#include <set>

#include "seasim/kv_cache.hpp"

using namespace seasim;

namespace {

ModelSpec model(const std::string& id, int layers, int heads, int head_dim = 128,
                int dtype = 2) {
  ModelSpec m;
  m.model_id = id;
  m.num_layers = layers;
  m.num_heads = heads;
  m.head_dim = head_dim;
  m.dtype_bytes = dtype;
  m.weight_bytes = 1.0 * kGiB;
  m.min_tp = 1;
  return m;
}

TEST(MergedShape, SingleModelIsIdentity) {
  const ModelSpec m = model("a", 32, 32);
  EXPECT_EQ(plan_merged_shape({m}, 16, 1), native_block_bytes(m, 16, 1));
}

TEST(MergedShape, SameArchitecturePacksOneSubSlot) {
  const ModelSpec m = model("a", 32, 32);
  UnifiedKvCache cache({m, model("b", 32, 32)}, 16, 1, 8);
  EXPECT_EQ(cache.sub_slots_per_merged(0), 1);
  EXPECT_EQ(cache.sub_slots_per_merged(1), 1);
}

TEST(MergedShape, SevenBPacksIntoThirteenB) {
  // 7B-like 32x32 inside 13B-like 40x40 at equal head_dim:
  // floor(40*40 / (32*32)) = 1 sub-slot.
  const ModelSpec small = model("7b", 32, 32);
  const ModelSpec big = model("13b", 40, 40);
  EXPECT_EQ(plan_merged_shape({small, big}, 16, 1), native_block_bytes(big, 16, 1));
  UnifiedKvCache cache({small, big}, 16, 1, 8);
  EXPECT_EQ(cache.sub_slots_per_merged(0), 1);
  EXPECT_EQ(cache.sub_slots_per_merged(1), 1);
}

TEST(MergedShape, SmallModelPacksManySubSlots) {
  const ModelSpec small = model("s", 2, 2);
  const ModelSpec big = model("b", 8, 8);
  UnifiedKvCache cache({small, big}, 16, 1, 8);
  EXPECT_EQ(cache.sub_slots_per_merged(0), 16);  // 64/4
  EXPECT_EQ(cache.sub_slots_per_merged(1), 1);
}

TEST(MergedShape, EmptyModelListRejected) {
  EXPECT_THROW(plan_merged_shape({}, 16, 1), ConfigError);
}

TEST(Allocate, ZeroTokensIsNoChange) {
  UnifiedKvCache cache({model("a", 4, 4)}, 16, 1, 4);
  EXPECT_TRUE(cache.try_allocate(1, 0, 0));
  EXPECT_EQ(cache.free_blocks(), 4u);
  EXPECT_EQ(cache.block_table(1).size(), 0u);
}

TEST(Allocate, CacheFullSignal) {
  // Pool of 2 merged blocks, sub_slots = 1: a request needing 3 native
  // blocks (33..48 tokens) cannot fit.
  UnifiedKvCache cache({model("a", 4, 4)}, 16, 1, 2);
  EXPECT_FALSE(cache.try_allocate(1, 0, 33));
  EXPECT_EQ(cache.free_blocks(), 2u);  // failure leaves no partial state
}

TEST(Allocate, PackingUsesOneMergedBlock) {
  // sub_slots = 4: three native blocks pack into one merged block.
  const ModelSpec small = model("s", 2, 2);
  const ModelSpec big = model("b", 4, 4);  // 4x bytes
  UnifiedKvCache cache({small, big}, 16, 1, 8);
  ASSERT_EQ(cache.sub_slots_per_merged(0), 4);
  EXPECT_TRUE(cache.try_allocate(1, 0, 48));  // 3 native blocks
  EXPECT_EQ(cache.allocated_blocks(), 1u);
  EXPECT_EQ(cache.block_table(1).size(), 3u);
}

TEST(Allocate, GrowReusesExistingBlocks) {
  UnifiedKvCache cache({model("a", 4, 4)}, 16, 1, 4);
  EXPECT_TRUE(cache.try_allocate(1, 0, 10));
  EXPECT_TRUE(cache.try_allocate(1, 0, 16));  // same native block
  EXPECT_EQ(cache.block_table(1).size(), 1u);
  EXPECT_TRUE(cache.try_allocate(1, 0, 17));  // crosses a block boundary
  EXPECT_EQ(cache.block_table(1).size(), 2u);
}

TEST(Free, RestoresFreeList) {
  UnifiedKvCache cache({model("a", 4, 4)}, 16, 1, 4);
  ASSERT_TRUE(cache.try_allocate(1, 0, 40));
  EXPECT_EQ(cache.free_blocks(), 1u);
  cache.free_request(1);
  EXPECT_EQ(cache.free_blocks(), 4u);
}

TEST(Free, SharedMergedBlockStaysAllocated) {
  // Two owners inside one merged block: freeing one keeps the block out of
  // the free list.
  const ModelSpec small = model("s", 2, 2);
  const ModelSpec big = model("b", 4, 4);
  UnifiedKvCache cache({small, big}, 16, 1, 2);
  ASSERT_TRUE(cache.try_allocate(1, 0, 8));
  ASSERT_TRUE(cache.try_allocate(2, 0, 8));
  EXPECT_EQ(cache.allocated_blocks(), 1u);  // both sub-slots of block 0
  cache.free_request(1);
  EXPECT_EQ(cache.allocated_blocks(), 1u);
  cache.free_request(2);
  EXPECT_EQ(cache.allocated_blocks(), 0u);
}

TEST(Free, UnknownRequestIsLogicError) {
  UnifiedKvCache cache({model("a", 4, 4)}, 16, 1, 4);
  EXPECT_THROW(cache.free_request(77), std::logic_error);
}

TEST(Property, RandomAllocFreeConservesPoolAndOwnership) {
  // Interleaved alloc/free against a counting oracle, plus the no-aliasing
  // invariant: every (block, slot) pair has at most one owner.
  const ModelSpec small = model("s", 2, 2);
  const ModelSpec big = model("b", 8, 8);
  const std::size_t pool = 64;
  UnifiedKvCache cache({small, big}, 16, 1, pool);
  seasim::detail::Rng rng(2024);
  std::map<std::uint64_t, std::pair<int, long>> live;  // id -> (model, tokens)
  std::uint64_t next_id = 1;
  for (int step = 0; step < 100000; ++step) {
    const bool do_alloc = live.empty() || rng.next_double() < 0.6;
    if (do_alloc) {
      const bool grow_existing = !live.empty() && rng.next_double() < 0.5;
      std::uint64_t id;
      int mi;
      long tokens;
      if (grow_existing) {
        auto it = live.begin();
        std::advance(it, static_cast<long>(rng.next_below(live.size())));
        id = it->first;
        mi = it->second.first;
        tokens = it->second.second + 1 + static_cast<long>(rng.next_below(40));
      } else {
        id = next_id++;
        mi = static_cast<int>(rng.next_below(2));
        tokens = 1 + static_cast<long>(rng.next_below(64));
      }
      if (cache.try_allocate(id, mi, tokens)) live[id] = {mi, tokens};
    } else {
      auto it = live.begin();
      std::advance(it, static_cast<long>(rng.next_below(live.size())));
      cache.free_request(it->first);
      live.erase(it);
    }
    if (step % 1000 == 0) {
      // Conservation: allocated + free == pool.
      ASSERT_EQ(cache.allocated_blocks() + cache.free_blocks(), pool);
      // Oracle: entries equal the sum of per-request block needs.
      std::size_t expect_entries = 0;
      std::set<std::pair<int, int>> seen;
      for (const auto& [id, info] : live) {
        const std::size_t blocks = cache.native_blocks_for(info.second);
        expect_entries += blocks;
        ASSERT_EQ(cache.block_table(id).size(), blocks);
        for (const auto& slot : cache.block_table(id)) {
          ASSERT_TRUE(seen.insert(slot).second) << "aliased slot";
          ASSERT_EQ(cache.owner_of(slot.first, slot.second), id);
        }
      }
      ASSERT_EQ(cache.table_entries(), expect_entries);
    }
  }
  for (const auto& [id, info] : live) cache.free_request(id);
  EXPECT_EQ(cache.free_blocks(), pool);
  EXPECT_EQ(cache.table_entries(), 0u);
  EXPECT_EQ(cache.fragmentation_bytes(), 0.0);
}

std::vector<KvOp> simple_workload(int requests, long tokens_each) {
  std::vector<KvOp> ops;
  for (int i = 0; i < requests; ++i)
    ops.push_back({KvOp::Kind::kGrow, static_cast<std::uint64_t>(i + 1), 0, tokens_each});
  for (int i = 0; i < requests; ++i)
    ops.push_back({KvOp::Kind::kFree, static_cast<std::uint64_t>(i + 1), 0, 0});
  return ops;
}

TEST(CompareSchemes, SplitTableIs1024xForLlama7bShape) {
  const auto [merged, split] =
      compare_schemes({model("7b", 32, 32)}, 16, 1, simple_workload(8, 100), 256);
  ASSERT_GT(merged.block_table_entries, 0u);
  EXPECT_EQ(split.block_table_entries, merged.block_table_entries * 1024u);
  EXPECT_EQ(split.native_reads_writes, merged.native_reads_writes * 1024u);
  EXPECT_LE(merged.native_reads_writes, split.native_reads_writes);
}

TEST(CompareSchemes, SingleLayerHeadRatioIsOne) {
  const auto [merged, split] =
      compare_schemes({model("tiny", 1, 1)}, 16, 1, simple_workload(1, 1), 16);
  EXPECT_EQ(split.block_table_entries, merged.block_table_entries);
  EXPECT_EQ(split.native_reads_writes, merged.native_reads_writes);
}

TEST(CompareSchemes, ThirteenBRatioIs1600) {
  const auto [merged, split] =
      compare_schemes({model("13b", 40, 40)}, 16, 1, simple_workload(4, 64), 256);
  EXPECT_EQ(split.block_table_entries, merged.block_table_entries * 1600u);
}

TEST(CompareSchemes, MergedFragmentationAtLeastSplit) {
  // Shared workload of a small and a large model: the merged scheme wastes
  // packing residue and open sub-slots, the split scheme only block tails.
  std::vector<KvOp> ops;
  ops.push_back({KvOp::Kind::kGrow, 1, 0, 20});
  ops.push_back({KvOp::Kind::kGrow, 2, 1, 100});
  ops.push_back({KvOp::Kind::kGrow, 1, 0, 50});
  ops.push_back({KvOp::Kind::kFree, 2, 0, 0});
  const auto [merged, split] =
      compare_schemes({model("s", 3, 3), model("b", 8, 8)}, 16, 1, ops, 256);
  EXPECT_GE(merged.internal_fragmentation_bytes, split.internal_fragmentation_bytes);
  EXPECT_LE(merged.native_reads_writes, split.native_reads_writes);
}

TEST(Stats, PeakUtilizationTracksHighWater) {
  UnifiedKvCache cache({model("a", 4, 4)}, 16, 1, 10);
  ASSERT_TRUE(cache.try_allocate(1, 0, 16 * 6));
  cache.free_request(1);
  ASSERT_TRUE(cache.try_allocate(2, 0, 16 * 2));
  const CacheStats s = cache.stats();
  EXPECT_DOUBLE_EQ(s.peak_utilization, 0.6);
}

}  // namespace
