// Copyright 2026 The plansim Authors.
// SPDX-License-Identifier: Apache-2.0

#include "plansim/batching.hpp"

#include <algorithm>
#include <limits>

namespace plansim {

BatchState::BatchState(std::vector<Request> pending_sorted,
                       double kv_bytes_per_token, double memory_capacity)
    : pending_(pending_sorted.begin(), pending_sorted.end()),
      kv_bytes_per_token_(kv_bytes_per_token),
      capacity_(memory_capacity) {
  std::stable_sort(pending_.begin(), pending_.end(),
                   [](const Request& a, const Request& b) { return a.arrival < b.arrival; });
}

double BatchState::request_kv_bytes(const ActiveRequest& a) const {
  return double(a.request.context_len + a.tokens_generated) * kv_bytes_per_token_;
}

double BatchState::memory_used() const {
  double used = 0.0;
  for (const auto& a : active_) used += request_kv_bytes(a);
  return used;
}

double BatchState::next_arrival() const {
  if (pending_.empty()) return std::numeric_limits<double>::infinity();
  return pending_.front().arrival;
}

BatchState::AdmitResult BatchState::admit(const BatchPolicy& policy, double clock) {
  AdmitResult result;
  double used = memory_used();
  while (!pending_.empty() && pending_.front().arrival <= clock) {
    const Request& head = pending_.front();
    const double context_kv = double(head.context_len) * kv_bytes_per_token_;
    if (context_kv > capacity_) {
      result.rejected.push_back(head.id);
      pending_.pop_front();
      continue;
    }
    if (policy.max_batch_size > 0 &&
        int64_t(active_.size()) >= policy.max_batch_size)
      break;
    if (used + context_kv > capacity_) break;  // head blocks, FIFO
    ActiveRequest a;
    a.request = head;
    a.phase = Phase::Prefill;
    a.admit_seq = admit_counter_++;
    active_.push_back(a);
    used += context_kv;
    result.admitted.push_back(head.id);
    pending_.pop_front();
  }
  return result;
}

StepEvents BatchState::step(const BatchPolicy& policy) {
  if (policy.mode == BatchMode::ChunkedPrefill && policy.chunk_size < 1)
    throw DataError("chunked prefill requires chunk_size >= 1");
  StepEvents ev;

  for (const auto& a : active_) {
    if (a.phase == Phase::Prefill) {
      int64_t tokens = a.request.context_len - a.prefill_tokens_done;
      if (policy.mode == BatchMode::ChunkedPrefill)
        tokens = std::min(tokens, policy.chunk_size);
      ev.workload.prefill_items.emplace_back(a.request.id, tokens);
    } else {
      ++ev.workload.decode_count;
    }
  }

  for (auto& a : active_) {
    if (a.phase == Phase::Prefill) {
      int64_t tokens = a.request.context_len - a.prefill_tokens_done;
      if (policy.mode == BatchMode::ChunkedPrefill)
        tokens = std::min(tokens, policy.chunk_size);
      a.prefill_tokens_done += tokens;
      if (a.prefill_tokens_done == a.request.context_len) {
        // The prefill iteration samples the first output token.
        a.phase = Phase::Decode;
        a.tokens_generated = 1;
        ev.prefill_completed.push_back(a.request.id);
      }
    } else {
      ++a.tokens_generated;
    }
  }

  for (auto it = active_.begin(); it != active_.end();) {
    if (it->phase == Phase::Decode && it->tokens_generated >= it->request.gen_len) {
      ev.finished.push_back(it->request.id);
      it = active_.erase(it);
    } else {
      ++it;
    }
  }

  EvictResult evict = evict_on_overflow();
  ev.evicted = std::move(evict.evicted);
  ev.rejected = std::move(evict.rejected);
  return ev;
}

BatchState::EvictResult BatchState::evict_on_overflow() {
  EvictResult result;
  while (active_.size() > 1 && memory_used() > capacity_) {
    ActiveRequest newest = active_.back();
    active_.pop_back();
    result.evicted.push_back(newest.request.id);
    // Generated tokens are discarded; the request restarts from scratch at
    // the head of the queue.
    pending_.push_front(newest.request);
  }
  if (active_.size() == 1 && memory_used() > capacity_) {
    result.rejected.push_back(active_.front().request.id);
    active_.clear();
  }
  return result;
}

}  // namespace plansim
