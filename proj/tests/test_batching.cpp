// Copyright 2026 The plansim Authors.
// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <map>
#include <random>
#include <set>

#include "doctest.h"
#include "plansim/batching.hpp"
#include "support/fixtures.hpp"

using namespace plansim;

namespace {

constexpr double kKv = 1.0;  // 1 byte per token keeps the arithmetic readable

std::vector<Request> reqs(std::initializer_list<Request> rs) { return {rs}; }

// Drives the admit/step loop to completion with a unit-duration clock and
// returns bookkeeping the properties are checked against.
struct RunResult {
  std::set<int64_t> completed;
  std::set<int64_t> rejected;
  int64_t iterations = 0;
  std::map<int64_t, int64_t> decode_iterations;
  bool memory_safe = true;
};

RunResult drive(BatchState& state, const BatchPolicy& policy,
                int64_t max_iterations = 200000) {
  RunResult result;
  double clock = 0.0;
  while (!state.done() && result.iterations < max_iterations) {
    const auto adm = state.admit(policy, clock);
    for (int64_t id : adm.rejected) result.rejected.insert(id);
    if (state.idle()) {
      if (state.pending().empty()) break;
      clock = std::max(clock, state.next_arrival());
      continue;
    }
    for (const auto& a : state.active())
      if (a.phase == Phase::Decode) ++result.decode_iterations[a.request.id];
    const StepEvents ev = state.step(policy);
    clock += 1.0;
    ++result.iterations;
    for (int64_t id : ev.finished) result.completed.insert(id);
    for (int64_t id : ev.rejected) result.rejected.insert(id);
    if (state.memory_used() > state.memory_capacity()) result.memory_safe = false;
  }
  return result;
}

}  // namespace

TEST_CASE("basic admission") {
  BatchState s(reqs({{0, 10, 2, 0.0}}), kKv, 100.0);
  const auto adm = s.admit({}, 0.0);
  CHECK(adm.admitted == std::vector<int64_t>{0});
  CHECK(s.active().size() == 1);
  CHECK(s.memory_used() == 10.0);
}

TEST_CASE("request whose context alone exceeds capacity is rejected") {
  BatchState s(reqs({{0, 200, 2, 0.0}, {1, 10, 2, 0.0}}), kKv, 100.0);
  const auto adm = s.admit({}, 0.0);
  CHECK(adm.rejected == std::vector<int64_t>{0});
  CHECK(adm.admitted == std::vector<int64_t>{1});
}

TEST_CASE("max batch size caps admissions") {
  std::vector<Request> many;
  for (int64_t i = 0; i < 10; ++i) many.push_back({i, 1, 2, 0.0});
  BatchState s(many, kKv, 1000.0);
  BatchPolicy policy;
  policy.max_batch_size = 8;
  const auto adm = s.admit(policy, 0.0);
  CHECK(adm.admitted.size() == 8);
  CHECK(s.pending().size() == 2);
}

TEST_CASE("admission does not start requests that have not arrived") {
  BatchState s(reqs({{0, 10, 2, 5.0}}), kKv, 100.0);
  CHECK(s.admit({}, 1.0).admitted.empty());
  CHECK(s.idle());
  CHECK(s.next_arrival() == 5.0);
  CHECK(s.admit({}, 5.0).admitted.size() == 1);
}

TEST_CASE("contiguous schedule: ctx=100 gen=3 takes exactly 3 iterations") {
  BatchState s(reqs({{0, 100, 3, 0.0}}), kKv, 1000.0);
  const BatchPolicy policy;
  s.admit(policy, 0.0);

  // Iteration 1: the whole prompt prefills and yields the first token.
  StepEvents ev = s.step(policy);
  REQUIRE(ev.workload.prefill_items.size() == 1);
  CHECK(ev.workload.prefill_items[0].second == 100);
  CHECK(ev.workload.decode_count == 0);
  CHECK(ev.prefill_completed == std::vector<int64_t>{0});
  CHECK(s.active()[0].tokens_generated == 1);

  // Iterations 2 and 3: decode, then departure.
  ev = s.step(policy);
  CHECK(ev.workload.decode_count == 1);
  CHECK(ev.finished.empty());
  ev = s.step(policy);
  CHECK(ev.finished == std::vector<int64_t>{0});
  CHECK(s.done());
}

TEST_CASE("chunked prefill: ctx=100 chunk=32 takes 4 prefill iterations") {
  BatchState s(reqs({{0, 100, 2, 0.0}}), kKv, 1000.0);
  BatchPolicy policy;
  policy.mode = BatchMode::ChunkedPrefill;
  policy.chunk_size = 32;
  s.admit(policy, 0.0);

  const std::vector<int64_t> expected = {32, 32, 32, 4};
  for (size_t i = 0; i < expected.size(); ++i) {
    const StepEvents ev = s.step(policy);
    REQUIRE(ev.workload.prefill_items.size() == 1);
    CHECK(ev.workload.prefill_items[0].second == expected[i]);
    CHECK(ev.prefill_completed.empty() == (i + 1 < expected.size()));
  }
  // One decode iteration finishes gen_len=2.
  const StepEvents ev = s.step(policy);
  CHECK(ev.workload.decode_count == 1);
  CHECK(ev.finished == std::vector<int64_t>{0});
}

TEST_CASE("two decode requests batch into one decode entry") {
  BatchState s(reqs({{0, 4, 5, 0.0}, {1, 6, 5, 0.0}}), kKv, 1000.0);
  const BatchPolicy policy;
  s.admit(policy, 0.0);
  s.step(policy);  // both prefill
  const StepEvents ev = s.step(policy);
  CHECK(ev.workload.prefill_items.empty());
  CHECK(ev.workload.decode_count == 2);
}

TEST_CASE("overflow evicts exactly the newest request") {
  // Both contexts admit into capacity 101 at usage 80; decode growth of two
  // tokens per iteration overflows at the eleventh generated token.
  BatchState s(reqs({{0, 40, 20, 0.0}, {1, 40, 20, 0.0}}), kKv, 101.0);
  const BatchPolicy policy;
  s.admit(policy, 0.0);
  StepEvents ev = s.step(policy);  // prefill both, +2 tokens -> 82
  CHECK(ev.evicted.empty());
  ev = s.step(policy);  // 84
  CHECK(ev.evicted.empty());
  std::vector<int64_t> evicted;
  for (int i = 0; i < 20 && evicted.empty(); ++i) {
    ev = s.step(policy);
    evicted = ev.evicted;
  }
  CHECK(evicted == std::vector<int64_t>{1});  // newest admitted goes first
  CHECK(s.memory_used() <= 101.0);
  CHECK(s.pending().front().id == 1);  // back at the head of the queue
}

TEST_CASE("no overflow leaves the batch untouched") {
  BatchState s(reqs({{0, 10, 5, 0.0}}), kKv, 1000.0);
  s.admit({}, 0.0);
  const auto evict = s.evict_on_overflow();
  CHECK(evict.evicted.empty());
  CHECK(evict.rejected.empty());
  CHECK(s.active().size() == 1);
}

TEST_CASE("evicted request is re-admitted and completes with full output") {
  // Capacity fits one full request (ctx 40 + 10 generated) but not two.
  BatchState s(reqs({{0, 40, 10, 0.0}, {1, 40, 10, 0.0}}), kKv, 95.0);
  const BatchPolicy policy;
  RunResult run = drive(s, policy);
  CHECK(run.completed == std::set<int64_t>{0, 1});
  CHECK(run.rejected.empty());
  CHECK(run.memory_safe);
  // Request 1 restarted prefill after eviction, so it saw strictly more
  // decode iterations than a clean run would need.
  CHECK(run.decode_iterations[1] >= 9);
}

TEST_CASE("a lone request that outgrows capacity is rejected, not looped") {
  // ctx fits, ctx + gen cannot.
  BatchState s(reqs({{0, 50, 100, 0.0}}), kKv, 60.0);
  const BatchPolicy policy;
  const RunResult run = drive(s, policy);
  CHECK(run.completed.empty());
  CHECK(run.rejected == std::set<int64_t>{0});
  CHECK(s.done());
}

TEST_CASE("property: safety, conservation, FIFO over random workloads") {
  std::mt19937_64 rng(2026);
  for (int round = 0; round < 400; ++round) {
    const int n = 1 + int(rng() % 24);
    std::vector<Request> requests;
    double arrival = 0.0;
    for (int i = 0; i < n; ++i) {
      arrival += double(rng() % 8) * 0.5;
      requests.push_back({int64_t(i), 1 + int64_t(rng() % 60),
                          1 + int64_t(rng() % 30), arrival});
    }
    const double capacity = 20.0 + double(rng() % 150);
    BatchPolicy policy;
    policy.max_batch_size = rng() % 3 == 0 ? 1 + int64_t(rng() % 8) : 0;
    if (rng() % 2) {
      policy.mode = BatchMode::ChunkedPrefill;
      policy.chunk_size = 1 + int64_t(rng() % 32);
    }

    BatchState s(requests, kKv, capacity);
    const RunResult run = drive(s, policy);

    CHECK(run.memory_safe);
    CHECK(s.done());
    // Every request either completed or was rejected.
    CHECK(run.completed.size() + run.rejected.size() == size_t(n));
    for (int64_t id = 0; id < n; ++id)
      CHECK((run.completed.count(id) || run.rejected.count(id)));
  }
}

TEST_CASE("property: admission is FIFO head-blocking") {
  std::mt19937_64 rng(7);
  for (int round = 0; round < 100; ++round) {
    const int n = 2 + int(rng() % 16);
    std::vector<Request> requests;
    double arrival = 0.0;
    for (int i = 0; i < n; ++i) {
      arrival += double(rng() % 4) * 0.25;
      requests.push_back({int64_t(i), 1 + int64_t(rng() % 40),
                          1 + int64_t(rng() % 10), arrival});
    }
    BatchState s(requests, kKv, 30.0 + double(rng() % 100));
    const BatchPolicy policy;
    double clock = 0.0;
    std::vector<int64_t> admitted_order;
    while (!s.done()) {
      const auto adm = s.admit(policy, clock);
      admitted_order.insert(admitted_order.end(), adm.admitted.begin(),
                            adm.admitted.end());
      if (s.idle()) {
        if (s.pending().empty()) break;
        clock = std::max(clock, s.next_arrival());
        continue;
      }
      s.step(policy);
      clock += 1.0;
    }
    // First admissions never skip an earlier-arrived pending request: the
    // admitted sequence of FIRST admissions is increasing in arrival order.
    std::set<int64_t> seen;
    int64_t watermark = -1;
    for (int64_t id : admitted_order) {
      if (!seen.insert(id).second) continue;  // re-admission after eviction
      CHECK(id > watermark);
      watermark = id;
    }
  }
}

TEST_CASE("chunked mode rejects a non-positive chunk size") {
  BatchState s(reqs({{0, 10, 2, 0.0}}), kKv, 100.0);
  BatchPolicy policy;
  policy.mode = BatchMode::ChunkedPrefill;
  policy.chunk_size = 0;
  s.admit(policy, 0.0);
  CHECK_THROWS_AS(s.step(policy), DataError);
}

TEST_CASE("chunked and contiguous run the same decode iteration count") {
  // With ample memory, decode iterations per request are gen_len - 1 in both
  // modes; chunking only stretches the prefill phase.
  std::vector<Request> requests = {{0, 90, 6, 0.0}, {1, 33, 4, 0.5}, {2, 150, 9, 1.0}};
  BatchPolicy contiguous;
  BatchPolicy chunked;
  chunked.mode = BatchMode::ChunkedPrefill;
  chunked.chunk_size = 16;

  BatchState a(requests, kKv, 1e9);
  BatchState b(requests, kKv, 1e9);
  const RunResult ra = drive(a, contiguous);
  const RunResult rb = drive(b, chunked);
  for (const auto& r : requests) {
    CHECK(ra.decode_iterations.at(r.id) == r.gen_len - 1);
    CHECK(rb.decode_iterations.at(r.id) == r.gen_len - 1);
  }
}
