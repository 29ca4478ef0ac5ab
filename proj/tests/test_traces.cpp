// Copyright 2026 The plansim Authors.
// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>

#include "doctest.h"
#include "plansim/traces.hpp"

using namespace plansim;

TEST_CASE("out-of-order files are sorted by arrival") {
  const Trace t = load_trace(
      "{\"id\": 0, \"context_len\": 10, \"gen_len\": 5, \"arrival_s\": 3.0}\n"
      "{\"id\": 1, \"context_len\": 20, \"gen_len\": 5, \"arrival_s\": 1.0}\n"
      "{\"id\": 2, \"context_len\": 30, \"gen_len\": 5, \"arrival_s\": 2.0}\n");
  REQUIRE(t.requests.size() == 3);
  CHECK(t.requests[0].id == 1);
  CHECK(t.requests[1].id == 2);
  CHECK(t.requests[2].id == 0);
}

TEST_CASE("empty file gives empty trace") {
  const Trace t = load_trace("");
  CHECK(t.requests.empty());
}

TEST_CASE("azure-style column names are accepted") {
  const Trace t = load_trace(
      "{\"ContextTokens\": 128, \"GeneratedTokens\": 32, \"TIMESTAMP\": 0.5}\n");
  REQUIRE(t.requests.size() == 1);
  CHECK(t.requests[0].context_len == 128);
  CHECK(t.requests[0].gen_len == 32);
  CHECK(t.requests[0].arrival == 0.5);
}

TEST_CASE("invalid rows are rejected") {
  CHECK_THROWS_AS(
      load_trace("{\"context_len\": 0, \"gen_len\": 5, \"arrival_s\": 0}\n"),
      DataError);
  CHECK_THROWS_AS(
      load_trace("{\"context_len\": 5, \"gen_len\": 5, \"arrival_s\": -1}\n"),
      DataError);
  CHECK_THROWS_AS(load_trace("{\"gen_len\": 5}\n"), DataError);
}

TEST_CASE("exponential gaps have mean 1/rate") {
  const Trace t = synth_trace({100, 0}, {10, 0}, 0.25, 10000, 123);
  REQUIRE(t.requests.size() == 10000);
  double prev = 0.0, sum = 0.0;
  for (const auto& r : t.requests) {
    CHECK(r.arrival >= prev);
    sum += r.arrival - prev;
    prev = r.arrival;
  }
  const double mean_gap = sum / 10000.0;
  CHECK(mean_gap == doctest::Approx(4.0).epsilon(0.05));
}

TEST_CASE("summarization-style parameters reproduce sample moments") {
  const Trace t =
      synth_trace({2742.11, 944.33}, {172.22, 73.17}, 0.25, 1188, 7);
  double ctx_sum = 0, gen_sum = 0;
  for (const auto& r : t.requests) {
    ctx_sum += double(r.context_len);
    gen_sum += double(r.gen_len);
  }
  const double ctx_mean = ctx_sum / 1188.0;
  const double gen_mean = gen_sum / 1188.0;
  CHECK(std::abs(ctx_mean - 2742.11) / 2742.11 < 0.10);
  CHECK(std::abs(gen_mean - 172.22) / 172.22 < 0.10);

  double ctx_var = 0;
  for (const auto& r : t.requests)
    ctx_var += (double(r.context_len) - ctx_mean) * (double(r.context_len) - ctx_mean);
  CHECK(std::abs(std::sqrt(ctx_var / 1188.0) - 944.33) / 944.33 < 0.10);
}

TEST_CASE("zero stddev pins every length to the mean") {
  const Trace t = synth_trace({50, 0}, {7, 0}, 1.0, 64, 9);
  for (const auto& r : t.requests) {
    CHECK(r.context_len == 50);
    CHECK(r.gen_len == 7);
  }
}

TEST_CASE("lengths are always at least one token") {
  const Trace t = synth_trace({2, 50}, {1, 40}, 1.0, 2000, 11);
  for (const auto& r : t.requests) {
    CHECK(r.context_len >= 1);
    CHECK(r.gen_len >= 1);
  }
}

TEST_CASE("generation is deterministic per seed") {
  const Trace a = synth_trace({100, 30}, {50, 10}, 0.5, 200, 42);
  const Trace b = synth_trace({100, 30}, {50, 10}, 0.5, 200, 42);
  const Trace c = synth_trace({100, 30}, {50, 10}, 0.5, 200, 43);
  CHECK(serialize_trace(a) == serialize_trace(b));
  CHECK(serialize_trace(a) != serialize_trace(c));
}

TEST_CASE("serialization round-trip preserves order and fields") {
  const Trace t = synth_trace({100, 30}, {50, 10}, 0.5, 100, 5);
  const Trace back = load_trace(serialize_trace(t));
  REQUIRE(back.requests.size() == t.requests.size());
  for (size_t i = 0; i < t.requests.size(); ++i) {
    CHECK(back.requests[i].id == t.requests[i].id);
    CHECK(back.requests[i].context_len == t.requests[i].context_len);
    CHECK(back.requests[i].gen_len == t.requests[i].gen_len);
    CHECK(back.requests[i].arrival == t.requests[i].arrival);
    if (i > 0) CHECK(back.requests[i].arrival >= back.requests[i - 1].arrival);
  }
}

TEST_CASE("synth_trace rejects bad parameters") {
  CHECK_THROWS_AS(synth_trace({10, 1}, {10, 1}, 0.0, 10, 1), DataError);
  CHECK_THROWS_AS(synth_trace({10, 1}, {10, 1}, 1.0, -1, 1), DataError);
  CHECK(synth_trace({10, 1}, {10, 1}, 1.0, 0, 1).requests.empty());
}
