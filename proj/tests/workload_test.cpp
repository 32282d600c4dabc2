// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>

#include "seasim/workload.hpp"

using namespace seasim;

namespace {

std::vector<ServiceProfile> two_services() {
  ServiceProfile a;
  a.name = "alpha";
  a.model_id = "m";
  a.input_len_dist = {100.0, 0.0, {}};
  a.output_len_dist = {10.0, 0.0, {}};
  a.mean_exec_time = 1.0;
  a.slo = 5.0;
  a.starvation_threshold = 25.0;
  ServiceProfile b = a;
  b.name = "beta";
  return {a, b};
}

TEST(GenerateTrace, ZeroDurationIsEmpty) {
  auto profiles = two_services();
  profiles.resize(1);
  EXPECT_TRUE(generate_trace(profiles, 1.0, 0.0, 1, 42).empty());
}

TEST(GenerateTrace, SkewnessRuns) {
  // skewness = 3 over two services: alpha,alpha,alpha,beta,beta,beta,alpha,...
  const Trace t = generate_trace(two_services(), 50.0, 10.0, 3, 7);
  ASSERT_GE(t.size(), 12u);
  for (std::size_t i = 0; i < t.size(); ++i) {
    const bool alpha_run = (i / 3) % 2 == 0;
    EXPECT_EQ(t.records[i].service_id, alpha_run ? "alpha" : "beta") << "at " << i;
  }
}

TEST(GenerateTrace, DeterministicGivenSeed) {
  const Trace a = generate_trace(two_services(), 5.0, 50.0, 2, 42);
  const Trace b = generate_trace(two_services(), 5.0, 50.0, 2, 42);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a.records[i].arrival_time, b.records[i].arrival_time);
    EXPECT_EQ(a.records[i].service_id, b.records[i].service_id);
    EXPECT_EQ(a.records[i].input_len, b.records[i].input_len);
    EXPECT_EQ(a.records[i].output_len, b.records[i].output_len);
  }
  const Trace c = generate_trace(two_services(), 5.0, 50.0, 2, 43);
  EXPECT_TRUE(a.size() != c.size() || a.records[0].arrival_time != c.records[0].arrival_time);
}

TEST(GenerateTrace, EmptyProfilesRejected) {
  EXPECT_THROW(generate_trace({}, 1.0, 1.0, 1, 1), ConfigError);
}

TEST(GenerateTrace, InterArrivalMeanConvergesToRate) {
  const double rate = 20.0;
  const Trace t = generate_trace(two_services(), rate, 1000.0, 1, 11);
  ASSERT_GE(t.size(), 10000u);
  double prev = 0.0, sum = 0.0;
  for (const auto& r : t.records) {
    sum += r.arrival_time - prev;
    prev = r.arrival_time;
  }
  const double mean_gap = sum / static_cast<double>(t.size());
  EXPECT_NEAR(mean_gap, 1.0 / rate, 0.05 / rate);
}

TEST(GenerateTrace, SampledLengthMeanMatchesDistribution) {
  auto profiles = two_services();
  profiles[0].input_len_dist = {200.0, 30.0, {}};
  profiles[1].input_len_dist = {200.0, 30.0, {}};
  const Trace t = generate_trace(profiles, 20.0, 1000.0, 1, 3);
  ASSERT_GE(t.size(), 10000u);
  double sum = 0.0;
  for (const auto& r : t.records) sum += r.input_len;
  EXPECT_NEAR(sum / static_cast<double>(t.size()), 200.0, 10.0);
}

TEST(GenerateTrace, StepProfileChangesRate) {
  auto profiles = two_services();
  RateProfile shape;
  shape.kind = RateProfile::Kind::kStep;
  shape.step_time = 500.0;
  shape.step_factor = 4.0;
  const Trace t = generate_trace(profiles, 10.0, 1000.0, 1, 9, shape);
  std::size_t before = 0, after = 0;
  for (const auto& r : t.records) (r.arrival_time < 500.0 ? before : after)++;
  EXPECT_NEAR(static_cast<double>(after) / before, 4.0, 0.5);
}

TEST(TraceIo, RoundTripIdentity) {
  const std::string path = std::filesystem::temp_directory_path() / "seasim_trace_rt.csv";
  const Trace t = generate_trace(two_services(), 5.0, 30.0, 2, 13);
  save_trace(t, path);
  const Trace back = load_trace(path);
  ASSERT_EQ(back.size(), t.size());
  for (std::size_t i = 0; i < t.size(); ++i) {
    EXPECT_NEAR(back.records[i].arrival_time, t.records[i].arrival_time, 1e-6);
    EXPECT_EQ(back.records[i].service_id, t.records[i].service_id);
    EXPECT_EQ(back.records[i].input_len, t.records[i].input_len);
    EXPECT_EQ(back.records[i].output_len, t.records[i].output_len);
  }
  std::filesystem::remove(path);
}

TEST(TraceIo, HeaderOnlyIsEmptyTrace) {
  const std::string path = std::filesystem::temp_directory_path() / "seasim_trace_empty.csv";
  { std::ofstream(path) << kTraceHeader << "\n"; }
  EXPECT_TRUE(load_trace(path).empty());
  std::filesystem::remove(path);
}

TEST(TraceIo, SingleRowParses) {
  const std::string path = std::filesystem::temp_directory_path() / "seasim_trace_row.csv";
  { std::ofstream(path) << kTraceHeader << "\n0.5,chat,73,427\n"; }
  const Trace t = load_trace(path);
  ASSERT_EQ(t.size(), 1u);
  EXPECT_DOUBLE_EQ(t.records[0].arrival_time, 0.5);
  EXPECT_EQ(t.records[0].service_id, "chat");
  EXPECT_EQ(t.records[0].input_len, 73);
  EXPECT_EQ(t.records[0].output_len, 427);
  std::filesystem::remove(path);
}

TEST(TraceIo, MalformedRowNamesLine) {
  const std::string path = std::filesystem::temp_directory_path() / "seasim_trace_bad.csv";
  { std::ofstream(path) << kTraceHeader << "\n0.5,chat,73,427\n0.7,chat,bogus,1\n"; }
  try {
    load_trace(path);
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find(":3:"), std::string::npos) << e.what();
  }
  std::filesystem::remove(path);
}

TEST(TraceIo, NegativeLengthRejected) {
  const std::string path = std::filesystem::temp_directory_path() / "seasim_trace_neg.csv";
  { std::ofstream(path) << kTraceHeader << "\n0.5,chat,73,-1\n"; }
  EXPECT_THROW(load_trace(path), ValidationError);
  std::filesystem::remove(path);
}

TEST(TraceIo, NonMonotoneArrivalRejected) {
  const std::string path = std::filesystem::temp_directory_path() / "seasim_trace_mono.csv";
  { std::ofstream(path) << kTraceHeader << "\n1.0,chat,10,10\n0.5,chat,10,10\n"; }
  EXPECT_THROW(load_trace(path), ValidationError);
  std::filesystem::remove(path);
}

CostModel linear_token_cost() {
  // 1ms per token end to end: prefill 1ms/token, decode 1ms per step.
  CostModel cm;
  cm.add_model({.model_id = "lin",
                .num_layers = 1,
                .num_heads = 1,
                .head_dim = 1,
                .dtype_bytes = 1,
                .weight_bytes = 1.0,
                .min_tp = 1});
  cm.add_entry("lin", 1, {0.0, 1e-3, 0.0, 1e-3, 0.0, 0.0, 0.0});
  return cm;
}

TEST(ExecStats, DegenerateDistributionsAreExact) {
  CostModel cm = linear_token_cost();
  ServiceProfile p;
  p.name = "svc";
  p.model_id = "lin";
  p.input_len_dist = {100.0, 0.0, {}};
  p.output_len_dist = {10.0, 0.0, {}};
  auto [mean, stddev] = estimate_exec_stats(p, cm, 1);
  // 100 prompt tokens + 9 decode steps at 1ms each.
  EXPECT_NEAR(mean, 0.109, 1e-12);
  EXPECT_EQ(stddev, 0.0);
}

TEST(ExecStats, TwoPointOutputMatchesEnumeration) {
  // Oracle: input fixed at 1 token (1ms prefill); output uniform over {1,3}.
  // Enumerated exactly: exec(out=1) = 1ms, exec(out=3) = 3ms
  // -> mean 2ms, stddev 1ms. The Monte-Carlo estimate must agree within 3
  // standard errors (sigma/sqrt(n) for the mean).
  CostModel cm = linear_token_cost();
  ServiceProfile p;
  p.name = "svc";
  p.model_id = "lin";
  p.input_len_dist = {1.0, 0.0, {}};
  p.output_len_dist = {0.0, 0.0, {1, 3}};
  const int n = 4096;
  auto [mean, stddev] = estimate_exec_stats(p, cm, 1, 99, n);
  const double exact_mean = 2e-3;
  const double exact_stddev = 1e-3;
  EXPECT_NEAR(mean, exact_mean, 3.0 * exact_stddev / std::sqrt(static_cast<double>(n)));
  EXPECT_NEAR(stddev, exact_stddev, 3.0 * exact_stddev / std::sqrt(static_cast<double>(n)));
}

TEST(ExecStats, LongPrefillServiceHasLargerPrefillShare) {
  // Table-1-like length mixes: a summarization-style service spends a larger
  // fraction of its time in prefill than a chat-style service.
  CostModel cm = default_cost_model();
  ServiceProfile chat;
  chat.name = "chat";
  chat.model_id = "llama2-7b";
  chat.input_len_dist = {73.0, 0.0, {}};
  chat.output_len_dist = {427.0, 0.0, {}};
  ServiceProfile summar;
  summar.name = "summarize";
  summar.model_id = "llama2-7b";
  summar.input_len_dist = {13187.0, 0.0, {}};
  summar.output_len_dist = {21.0, 0.0, {}};
  auto share = [&](const ServiceProfile& p) {
    auto [mean, stddev] = estimate_exec_stats(p, cm, 1);
    const double prefill = cm.prefill_time(p.model_id, 1,
                                           static_cast<long>(p.input_len_dist.mean));
    return prefill / mean;
  };
  EXPECT_GT(share(summar), share(chat));
}

TEST(ExecStats, MissingCostEntryIsConfigError) {
  CostModel cm = linear_token_cost();
  ServiceProfile p;
  p.name = "svc";
  p.model_id = "lin";
  p.input_len_dist = {10.0, 0.0, {}};
  p.output_len_dist = {10.0, 0.0, {}};
  EXPECT_THROW(estimate_exec_stats(p, cm, 2), ConfigError);
}

TEST(LengthNoise, ZeroScaleIsIdentity) {
  std::vector<Request> rs(3);
  rs[0].output_len = 10;
  rs[1].output_len = 100;
  rs[2].output_len = 1;
  apply_length_noise(rs, 0.0, 5);
  for (const auto& r : rs) EXPECT_EQ(r.visible_output_len, r.output_len);
}

TEST(LengthNoise, ScalePerturbsAroundTruth) {
  std::vector<Request> rs(20000);
  for (auto& r : rs) r.output_len = 100;
  apply_length_noise(rs, 0.5, 5);
  double sum = 0.0;
  std::size_t changed = 0;
  for (const auto& r : rs) {
    EXPECT_GE(r.visible_output_len, 1);
    sum += r.visible_output_len;
    changed += r.visible_output_len != r.output_len;
  }
  EXPECT_GT(changed, rs.size() / 2);
  EXPECT_NEAR(sum / static_cast<double>(rs.size()), 100.0, 2.0);
}

}  // namespace
