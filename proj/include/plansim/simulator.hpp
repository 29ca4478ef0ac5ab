// Copyright 2026 The plansim Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <vector>

#include "plansim/batching.hpp"
#include "plansim/cost.hpp"
#include "plansim/planner.hpp"
#include "plansim/traces.hpp"

namespace plansim {

struct StageCost {
  double seconds = 0.0;
  double joules = 0.0;
};

// Dense work issued to the devices, for utilization accounting.
struct WorkTally {
  double flops = 0.0;
  double bytes = 0.0;
};

// Costs one batching iteration: a single block is priced per stage and scaled
// by the stage's block repetitions; inter-stage activation transfers are
// charged to the downstream stage.
std::vector<StageCost> iteration_time(const ExecutionPlan& plan,
                                      const IterationWorkload& workload,
                                      const ProfileStore& store, double freq_ghz,
                                      WorkTally* tally = nullptr);

struct IterationRecord {
  double clock_start = 0.0;
  double duration = 0.0;  // max over stages
  double energy = 0.0;    // sum over stages
  int64_t batch_size = 0;
  std::vector<double> stage_seconds;
  std::vector<double> stage_joules;
};

struct RequestMetrics {
  int64_t id = 0;
  double ttft = 0.0;
  double tpot = 0.0;  // 0 when gen_len < 2
  double e2e = 0.0;
  int64_t gen_len = 0;
};

struct SimulationReport {
  std::string plan_encoding;
  double frequency_ghz = 0.0;
  double e2e_latency = 0.0;
  double total_energy = 0.0;
  double p95_latency = 0.0;
  double mean_ttft = 0.0;
  double mean_tpot = 0.0;
  double mfu = 0.0;
  double mbu = 0.0;
  int64_t num_completed = 0;
  int64_t num_rejected = 0;
  int64_t num_iterations = 0;
  int64_t max_batch_observed = 0;
  std::vector<RequestMetrics> per_request;  // completed requests
  std::vector<int64_t> rejected_ids;
  std::vector<IterationRecord> iterations;  // populated when emit_iterations
};

enum class TtftAnchor { Arrival, Admission };

struct SimConfig {
  double freq_ghz = 0.0;  // 0 = device max frequency
  BatchPolicy policy;
  TtftAnchor ttft_anchor = TtftAnchor::Arrival;
  bool emit_iterations = false;
};

SimulationReport simulate_plan(const ExecutionPlan& plan, const ModelSpec& model,
                               const ClusterSpec& cluster, const Trace& trace,
                               const ProfileStore& store, const SimConfig& cfg);

enum class Objective { Latency, Energy };

struct SearchEntry {
  size_t plan_index = 0;
  double freq_ghz = 0.0;
  SimulationReport report;
};

struct RankedPlans {
  std::vector<SearchEntry> entries;  // best first
};

// Simulates every (plan, frequency) pair and ranks by the objective. Plans
// that reject fewer requests always rank first; latency/energy only order
// plans that served the same workload.
RankedPlans search(const std::vector<ExecutionPlan>& plans, const ModelSpec& model,
                   const ClusterSpec& cluster, const Trace& trace,
                   const ProfileStore& store, Objective objective,
                   const std::vector<double>& frequencies, const SimConfig& cfg,
                   int jobs = 1);

struct SweepRow {
  int64_t max_batch_size = 0;
  double mean_tpot = 0.0;
  double mean_ttft = 0.0;
  double e2e_latency = 0.0;
};

struct SweepTable {
  int64_t observed_max_batch = 0;
  std::vector<SweepRow> rows;
};

// Finds the uncapped batch-size upper bound on a trace subset, then sweeps
// caps at i/segments of that bound.
SweepTable sweep_max_batch(const ExecutionPlan& plan, const ModelSpec& model,
                           const ClusterSpec& cluster, const Trace& trace,
                           const ProfileStore& store, const SimConfig& cfg,
                           int segments, int64_t subset_size = 256);

std::string report_to_json(const SimulationReport& report);
std::string iterations_to_jsonl(const SimulationReport& report);
std::string report_summary_line(const SimulationReport& report);

}  // namespace plansim
