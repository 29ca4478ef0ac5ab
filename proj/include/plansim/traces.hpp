// Copyright 2026 The plansim Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "plansim/common.hpp"

namespace plansim {

struct Request {
  int64_t id = 0;
  int64_t context_len = 0;
  int64_t gen_len = 0;
  double arrival = 0.0;  // seconds
};

struct TraceMetadata {
  std::string name;
  uint64_t seed = 0;
  std::string source;
};

// Requests sorted by arrival time.
struct Trace {
  std::vector<Request> requests;
  TraceMetadata metadata;
};

// JSONL, one request per line. Accepts Azure-trace style column names
// (context_tokens / generated_tokens / timestamp) as aliases.
Trace load_trace(const std::string& jsonl_text, const std::string& source_name = "");
Trace load_trace_file(const std::string& path);
std::string serialize_trace(const Trace& trace);

struct LengthDistribution {
  double mean = 0.0;
  double stddev = 0.0;
};

// Poisson arrivals (exponential inter-arrival gaps at `rate` requests/s) with
// lengths drawn from a normal truncated at one token. Deterministic per seed.
Trace synth_trace(const LengthDistribution& ctx_dist,
                  const LengthDistribution& gen_dist, double rate, int64_t n,
                  uint64_t seed);

}  // namespace plansim
