// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include "seasim/cost_model.hpp"

using namespace seasim;

namespace {

CostModel tiny_model(double a_p, double b_p, double a_d, double b_d, double c_d) {
  CostModel cm;
  cm.add_model({.model_id = "m",
                .num_layers = 2,
                .num_heads = 4,
                .head_dim = 8,
                .dtype_bytes = 2,
                .weight_bytes = 1.0 * kGiB,
                .min_tp = 1});
  cm.add_entry("m", 1, {a_p, b_p, a_d, b_d, c_d, 0.0, 0.0});
  return cm;
}

TEST(CostModel, PrefillRejectsZeroTokens) {
  CostModel cm = tiny_model(1e-3, 1e-5, 1e-3, 1e-4, 0.0);
  EXPECT_THROW(cm.prefill_time("m", 1, 0), ValidationError);
}

TEST(CostModel, PrefillArithmetic) {
  // a_p = 2ms, b_p = 0.01ms/token, 1000 tokens -> 12ms, checked by hand.
  CostModel cm = tiny_model(2e-3, 1e-5, 1e-3, 1e-4, 0.0);
  EXPECT_NEAR(cm.prefill_time("m", 1, 1000), 12e-3, 1e-12);
}

TEST(CostModel, PrefillMonotoneInTokens) {
  CostModel cm = tiny_model(2e-3, 1e-5, 1e-3, 1e-4, 0.0);
  double prev = 0.0;
  for (long tokens = 1; tokens <= 4096; tokens *= 2) {
    const double t = cm.prefill_time("m", 1, tokens);
    EXPECT_GE(t, prev);
    prev = t;
  }
}

TEST(CostModel, DecodeEmptyBatchIsFree) {
  CostModel cm = tiny_model(2e-3, 1e-5, 5e-3, 1e-4, 0.0);
  EXPECT_EQ(cm.decode_time("m", 1, 0, 0), 0.0);
}

TEST(CostModel, DecodeArithmetic) {
  // a_d = 5ms, b_d = 0.1ms/seq, batch 8 -> 5.8ms.
  CostModel cm = tiny_model(2e-3, 1e-5, 5e-3, 1e-4, 0.0);
  EXPECT_NEAR(cm.decode_time("m", 1, 8, 0), 5.8e-3, 1e-12);
}

TEST(CostModel, MissingEntryIsConfigError) {
  CostModel cm = tiny_model(2e-3, 1e-5, 5e-3, 1e-4, 0.0);
  EXPECT_THROW(cm.prefill_time("m", 2, 100), ConfigError);
  EXPECT_THROW(cm.decode_time("nope", 1, 1, 10), ConfigError);
}

TEST(CostModel, DefaultProfilesFollowTpTrends) {
  CostModel cm = default_cost_model();
  // Long prompts gain from TP on the 13B class.
  EXPECT_LT(cm.prefill_time("llama2-13b", 4, 8192), cm.prefill_time("llama2-13b", 1, 8192));
  // Short-context decode at batch 8 pays for TP on the 7B class.
  EXPECT_GT(cm.decode_time("llama2-7b", 4, 8, 8 * 64), cm.decode_time("llama2-7b", 1, 8, 8 * 64));
  // Short prompts pay for TP too.
  EXPECT_GT(cm.prefill_time("llama2-7b", 4, 128), cm.prefill_time("llama2-7b", 1, 128));
}

TEST(CostModel, MemoryFootprint) {
  CostModel cm;
  cm.add_model({.model_id = "w14",
                .num_layers = 32,
                .num_heads = 32,
                .head_dim = 128,
                .dtype_bytes = 2,
                .weight_bytes = 14.0 * kGiB,
                .min_tp = 1});
  cm.add_entry("w14", 2, {1e-3, 1e-5, 1e-3, 1e-4, 0.0, 0.5 * kGiB, 0.0});
  // 14GB weights at tp=2 -> 7GB per GPU plus activation.
  EXPECT_NEAR(cm.memory_footprint({"w14"}, 2, 0.0, 8), 7.5 * kGiB, 1.0);
  // Two identical models double the weight term.
  EXPECT_NEAR(cm.memory_footprint({"w14", "w14"}, 2, 0.0, 8), 14.5 * kGiB, 1.0);
  // KV pool is split across the TP group.
  EXPECT_NEAR(cm.memory_footprint({"w14"}, 2, 4.0 * kGiB, 8), 9.5 * kGiB, 1.0);
}

TEST(CostModel, KvBytesMatchPaperScale) {
  // A 7B-class request with 4096+4096 tokens needs about 4GB of KV.
  CostModel cm = default_cost_model();
  const ModelSpec& m = cm.model("llama2-7b");
  const double bytes = m.kv_bytes_per_token() * 8192;
  EXPECT_NEAR(bytes / kGiB, 4.0, 0.1);
}

TEST(CostModel, TpMustDivideHeads) {
  CostModel cm = tiny_model(1e-3, 1e-5, 1e-3, 1e-4, 0.0);  // 4 heads
  cm.add_entry("m", 3, {1e-3, 1e-5, 1e-3, 1e-4, 0.0, 0.0, 0.0});
  EXPECT_THROW(cm.memory_footprint({"m"}, 3, 0.0, 8), ConfigError);
}

TEST(CostModel, IsolatedExecTimeClosedFormMatchesStepSum) {
  CostModel cm = tiny_model(2e-3, 1e-5, 5e-3, 1e-4, 3e-7);
  const long input = 37;
  const long output = 23;
  double expect = cm.prefill_time("m", 1, input);
  for (long k = 1; k < output; ++k) expect += cm.decode_time("m", 1, 1, input + k);
  EXPECT_NEAR(cm.isolated_exec_time("m", 1, input, output), expect, 1e-12);
}

TEST(CostModel, NegativeCoefficientRejected) {
  CostModel cm;
  cm.add_model({.model_id = "m",
                .num_layers = 1,
                .num_heads = 1,
                .head_dim = 1,
                .dtype_bytes = 1,
                .weight_bytes = 1.0,
                .min_tp = 1});
  EXPECT_THROW(cm.add_entry("m", 1, {-1e-3, 1e-5, 1e-3, 1e-4, 0.0, 0.0, 0.0}), ConfigError);
}

}  // namespace
