// Copyright 2026 The plansim Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <deque>
#include <vector>

#include "plansim/traces.hpp"

namespace plansim {

enum class Phase { Prefill, Decode };
enum class BatchMode { Contiguous, ChunkedPrefill };

struct BatchPolicy {
  BatchMode mode = BatchMode::Contiguous;
  int64_t chunk_size = 0;      // chunked mode only, >= 1
  int64_t max_batch_size = 0;  // 0 = unlimited, counts requests
};

struct ActiveRequest {
  Request request;
  Phase phase = Phase::Prefill;
  int64_t tokens_generated = 0;
  int64_t prefill_tokens_done = 0;
  int64_t admit_seq = 0;
};

// What the simulator has to price for one iteration: per-request prefill token
// counts plus one batched decode entry.
struct IterationWorkload {
  std::vector<std::pair<int64_t, int64_t>> prefill_items;  // (request id, tokens)
  int64_t decode_count = 0;

  int64_t batch_size() const {
    return int64_t(prefill_items.size()) + decode_count;
  }
  int64_t total_tokens() const {
    int64_t t = decode_count;
    for (const auto& [id, tok] : prefill_items) t += tok;
    return t;
  }
};

struct StepEvents {
  IterationWorkload workload;
  std::vector<int64_t> prefill_completed;  // first token produced this iteration
  std::vector<int64_t> finished;
  std::vector<int64_t> evicted;
  std::vector<int64_t> rejected;
};

// Live batch of one model replica. Memory is tracked as an aggregate KV
// ledger over the replica's devices; admission reserves context KV only, so a
// growing batch can overflow and trigger LIFO eviction.
class BatchState {
 public:
  BatchState(std::vector<Request> pending_sorted, double kv_bytes_per_token,
             double memory_capacity);

  struct AdmitResult {
    std::vector<int64_t> admitted;
    std::vector<int64_t> rejected;  // context alone can never fit
  };

  // Pops arrived requests in arrival order while they fit.
  AdmitResult admit(const BatchPolicy& policy, double clock);

  // Runs one batching iteration over the current active list. The caller
  // prices the returned workload and advances the clock.
  StepEvents step(const BatchPolicy& policy);

  // LIFO eviction until the ledger fits again. The oldest active request is
  // never evicted; if it alone exceeds capacity it is rejected instead, which
  // guarantees forward progress.
  struct EvictResult {
    std::vector<int64_t> evicted;
    std::vector<int64_t> rejected;
  };
  EvictResult evict_on_overflow();

  bool done() const { return pending_.empty() && active_.empty(); }
  bool idle() const { return active_.empty(); }
  double next_arrival() const;

  double memory_used() const;
  double memory_capacity() const { return capacity_; }
  const std::deque<Request>& pending() const { return pending_; }
  const std::vector<ActiveRequest>& active() const { return active_; }

 private:
  double request_kv_bytes(const ActiveRequest& a) const;

  std::deque<Request> pending_;
  std::vector<ActiveRequest> active_;  // admission order
  double kv_bytes_per_token_ = 0.0;
  double capacity_ = 0.0;
  int64_t admit_counter_ = 0;
};

}  // namespace plansim
