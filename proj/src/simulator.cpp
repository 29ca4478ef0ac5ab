// Copyright 2026 The plansim Authors.
// SPDX-License-Identifier: Apache-2.0

#include "plansim/simulator.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <map>
#include <sstream>
#include <thread>

#include "json.hpp"

namespace plansim {

std::vector<StageCost> iteration_time(const ExecutionPlan& plan,
                                      const IterationWorkload& workload,
                                      const ProfileStore& store, double freq_ghz,
                                      WorkTally* tally) {
  const ParallelScheme& scheme = plan.scheme;
  const double total_tokens = double(workload.total_tokens());

  double block_seconds = 0.0;
  double block_joules = 0.0;
  double block_flops = 0.0;
  double block_bytes = 0.0;

  for (const CellScheme& cell : scheme.cells) {
    auto add_query = [&](double tokens) {
      OpQuery q;
      q.op = cell.op;
      q.dtype = plan.compute_dtype;
      q.freq_ghz = freq_ghz;
      q.context_tokens = tokens * cell.token_scale;
      q.tasks_on_device = cell.query_tasks;
      q.width = cell.query_width;
      block_seconds += store.query_time(q);
      block_joules += store.query_energy(q) * scheme.stage_devices;
      if (tally) {
        block_flops += op_flops(cell.op, q.context_tokens, q.tasks_on_device,
                                q.width, plan.op_shape);
        block_bytes += op_bytes(cell.op, q.context_tokens, q.tasks_on_device,
                                q.width, plan.op_shape, 2.0);
      }
    };
    // Prefill requests are priced at their full token count for this
    // iteration; decode requests collapse into one batched query whose
    // context length is the decode count.
    for (const auto& [id, tokens] : workload.prefill_items) add_query(double(tokens));
    if (workload.decode_count > 0) add_query(double(workload.decode_count));
  }

  for (const ResolvedCollective& rc : plan.block_collectives) {
    CollectiveQuery q;
    q.kind = rc.kind;
    q.payload_bytes = rc.payload_bytes_per_token * total_tokens * rc.token_share;
    q.num_devices = rc.num_devices;
    q.num_nodes = rc.num_nodes;
    block_seconds += store.query_time(q);
    block_joules += store.query_energy(q) * rc.groups_per_stage;
  }

  std::vector<StageCost> stages(size_t(scheme.num_stages));
  const double reps = double(scheme.stage_repetitions);
  for (auto& s : stages) {
    s.seconds = block_seconds * reps;
    s.joules = block_joules * reps;
  }
  for (size_t b = 0; b < plan.p2p_boundary_nodes.size(); ++b) {
    CollectiveQuery q;
    q.kind = CollectiveKind::P2P;
    q.payload_bytes = plan.p2p_payload_per_token * total_tokens;
    q.num_devices = 2;
    q.num_nodes = plan.p2p_boundary_nodes[b];
    stages[b + 1].seconds += store.query_time(q);
    stages[b + 1].joules += store.query_energy(q);
  }

  if (tally) {
    tally->flops +=
        block_flops * scheme.stage_devices * reps * scheme.num_stages;
    tally->bytes +=
        block_bytes * scheme.stage_devices * reps * scheme.num_stages;
  }
  return stages;
}

namespace {

struct ReplicaOutcome {
  double clock = 0.0;
  double energy = 0.0;
  int64_t iterations = 0;
  int64_t max_batch = 0;
};

ReplicaOutcome run_replica(const ExecutionPlan& plan,
                           std::vector<Request> requests,
                           const ProfileStore& store, const SimConfig& cfg,
                           double freq_ghz, WorkTally& tally,
                           SimulationReport& report) {
  std::map<int64_t, Request> by_id;
  for (const auto& r : requests) by_id[r.id] = r;

  BatchState state(std::move(requests), plan.kv_bytes_per_token,
                   plan.kv_budget_per_replica);
  ReplicaOutcome out;
  std::map<int64_t, double> first_token_at;
  std::map<int64_t, double> admitted_at;

  while (!state.done()) {
    const auto admit = state.admit(cfg.policy, out.clock);
    for (const int64_t id : admit.rejected) report.rejected_ids.push_back(id);
    for (const int64_t id : admit.admitted) admitted_at[id] = out.clock;
    if (state.idle()) {
      if (state.pending().empty()) break;
      out.clock = std::max(out.clock, state.next_arrival());
      continue;
    }

    const StepEvents ev = state.step(cfg.policy);
    const std::vector<StageCost> stages =
        iteration_time(plan, ev.workload, store, freq_ghz, &tally);
    double duration = 0.0;
    double energy = 0.0;
    for (const auto& s : stages) {
      duration = std::max(duration, s.seconds);
      energy += s.joules;
    }
    const double start = out.clock;
    out.clock += duration;
    out.energy += energy;
    ++out.iterations;
    out.max_batch = std::max(out.max_batch, ev.workload.batch_size());

    for (const int64_t id : ev.prefill_completed) first_token_at[id] = out.clock;
    for (const int64_t id : ev.evicted) {
      first_token_at.erase(id);
      admitted_at.erase(id);
    }
    for (const int64_t id : ev.rejected) report.rejected_ids.push_back(id);
    for (const int64_t id : ev.finished) {
      const Request& req = by_id.at(id);
      RequestMetrics m;
      m.id = id;
      m.gen_len = req.gen_len;
      m.e2e = out.clock - req.arrival;
      const double anchor = cfg.ttft_anchor == TtftAnchor::Arrival
                                ? req.arrival
                                : admitted_at.at(id);
      m.ttft = first_token_at.at(id) - anchor;
      if (req.gen_len >= 2)
        m.tpot = (out.clock - first_token_at.at(id)) / double(req.gen_len - 1);
      report.per_request.push_back(m);
    }

    if (cfg.emit_iterations) {
      IterationRecord rec;
      rec.clock_start = start;
      rec.duration = duration;
      rec.energy = energy;
      rec.batch_size = ev.workload.batch_size();
      for (const auto& s : stages) {
        rec.stage_seconds.push_back(s.seconds);
        rec.stage_joules.push_back(s.joules);
      }
      report.iterations.push_back(rec);
    }
  }
  return out;
}

}  // namespace

SimulationReport simulate_plan(const ExecutionPlan& plan,
                               [[maybe_unused]] const ModelSpec& model,
                               const ClusterSpec& cluster, const Trace& trace,
                               const ProfileStore& store, const SimConfig& cfg) {
  const double freq_ghz =
      cfg.freq_ghz > 0 ? cfg.freq_ghz : cluster.device.max_frequency();

  SimulationReport report;
  report.plan_encoding = plan.scheme.encoding;
  report.frequency_ghz = freq_ghz;

  // Model-level DP splits the trace round-robin; replicas run independent
  // clocks and the slowest one defines end-to-end latency.
  const size_t replicas = size_t(plan.scheme.model_dp);
  std::vector<std::vector<Request>> split;
  split.resize(replicas);
  for (size_t i = 0; i < trace.requests.size(); ++i)
    split[i % replicas].push_back(trace.requests[i]);

  WorkTally tally;
  for (size_t r = 0; r < replicas; ++r) {
    const ReplicaOutcome out =
        run_replica(plan, split[r], store, cfg, freq_ghz, tally, report);
    report.e2e_latency = std::max(report.e2e_latency, out.clock);
    report.total_energy += out.energy;
    report.num_iterations += out.iterations;
    report.max_batch_observed = std::max(report.max_batch_observed, out.max_batch);
  }

  std::sort(report.per_request.begin(), report.per_request.end(),
            [](const RequestMetrics& a, const RequestMetrics& b) { return a.id < b.id; });
  std::sort(report.rejected_ids.begin(), report.rejected_ids.end());
  report.num_completed = int64_t(report.per_request.size());
  report.num_rejected = int64_t(report.rejected_ids.size());

  if (!report.per_request.empty()) {
    std::vector<double> e2e;
    double ttft_sum = 0.0, tpot_sum = 0.0;
    int64_t tpot_n = 0;
    for (const auto& m : report.per_request) {
      e2e.push_back(m.e2e);
      ttft_sum += m.ttft;
      if (m.gen_len >= 2) {
        tpot_sum += m.tpot;
        ++tpot_n;
      }
    }
    std::sort(e2e.begin(), e2e.end());
    const size_t rank = size_t(std::ceil(0.95 * double(e2e.size())));
    report.p95_latency = e2e[std::min(e2e.size() - 1, rank == 0 ? 0 : rank - 1)];
    report.mean_ttft = ttft_sum / double(report.per_request.size());
    report.mean_tpot = tpot_n > 0 ? tpot_sum / double(tpot_n) : 0.0;
  }

  const int total_devices = cluster.total_devices();
  if (report.e2e_latency > 0) {
    const double peak =
        cluster.device.peak_flops_for(plan.compute_dtype) * total_devices;
    report.mfu = tally.flops / (report.e2e_latency * peak);
    report.mbu = tally.bytes /
                 (report.e2e_latency * cluster.device.peak_mem_bandwidth *
                  total_devices);
  }
  return report;
}

RankedPlans search(const std::vector<ExecutionPlan>& plans, const ModelSpec& model,
                   const ClusterSpec& cluster, const Trace& trace,
                   const ProfileStore& store, Objective objective,
                   const std::vector<double>& frequencies, const SimConfig& cfg,
                   int jobs) {
  if (plans.empty()) throw InfeasibleError("search: no feasible plan");
  std::vector<double> freqs = frequencies;
  if (freqs.empty()) freqs.push_back(cluster.device.max_frequency());

  std::vector<SearchEntry> entries(plans.size() * freqs.size());
  std::atomic<size_t> next{0};
  auto worker = [&]() {
    while (true) {
      const size_t i = next.fetch_add(1);
      if (i >= entries.size()) break;
      const size_t plan_index = i / freqs.size();
      const double freq = freqs[i % freqs.size()];
      SimConfig run_cfg = cfg;
      run_cfg.freq_ghz = freq;
      run_cfg.emit_iterations = false;
      entries[i].plan_index = plan_index;
      entries[i].freq_ghz = freq;
      entries[i].report = simulate_plan(plans[plan_index], model, cluster, trace,
                                        store, run_cfg);
    }
  };
  const int worker_count = std::max(1, jobs);
  if (worker_count == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < worker_count; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  auto metric = [&](const SearchEntry& e, Objective obj) {
    return obj == Objective::Latency ? e.report.e2e_latency
                                     : e.report.total_energy;
  };
  const Objective other =
      objective == Objective::Latency ? Objective::Energy : Objective::Latency;
  std::sort(entries.begin(), entries.end(),
            [&](const SearchEntry& a, const SearchEntry& b) {
              if (a.report.num_rejected != b.report.num_rejected)
                return a.report.num_rejected < b.report.num_rejected;
              if (metric(a, objective) != metric(b, objective))
                return metric(a, objective) < metric(b, objective);
              if (metric(a, other) != metric(b, other))
                return metric(a, other) < metric(b, other);
              if (a.report.plan_encoding != b.report.plan_encoding)
                return a.report.plan_encoding < b.report.plan_encoding;
              return a.freq_ghz < b.freq_ghz;
            });
  return RankedPlans{std::move(entries)};
}

SweepTable sweep_max_batch(const ExecutionPlan& plan, const ModelSpec& model,
                           const ClusterSpec& cluster, const Trace& trace,
                           const ProfileStore& store, const SimConfig& cfg,
                           int segments, int64_t subset_size) {
  if (segments < 1) throw DataError("sweep: segments must be >= 1");

  Trace subset;
  subset.metadata = trace.metadata;
  const size_t take =
      std::min(trace.requests.size(), size_t(std::max<int64_t>(1, subset_size)));
  subset.requests.assign(trace.requests.begin(), trace.requests.begin() + long(take));

  SimConfig probe_cfg = cfg;
  probe_cfg.policy.max_batch_size = 0;
  probe_cfg.emit_iterations = false;
  const SimulationReport probe =
      simulate_plan(plan, model, cluster, subset, store, probe_cfg);

  SweepTable table;
  table.observed_max_batch = std::max<int64_t>(1, probe.max_batch_observed);
  for (int i = 1; i <= segments; ++i) {
    const int64_t cap = std::max<int64_t>(
        1, llround(double(i) * double(table.observed_max_batch) / segments));
    SimConfig run_cfg = cfg;
    run_cfg.policy.max_batch_size = cap;
    run_cfg.emit_iterations = false;
    const SimulationReport rep =
        simulate_plan(plan, model, cluster, trace, store, run_cfg);
    table.rows.push_back({cap, rep.mean_tpot, rep.mean_ttft, rep.e2e_latency});
  }
  return table;
}

std::string report_to_json(const SimulationReport& r) {
  nlohmann::ordered_json doc;
  doc["plan"] = r.plan_encoding;
  doc["frequency_ghz"] = r.frequency_ghz;
  doc["metrics"] = {
      {"e2e_latency_s", r.e2e_latency},
      {"total_energy_j", r.total_energy},
      {"p95_latency_s", r.p95_latency},
      {"mean_ttft_s", r.mean_ttft},
      {"mean_tpot_s", r.mean_tpot},
      {"mfu", r.mfu},
      {"mbu", r.mbu},
      {"num_completed", r.num_completed},
      {"num_rejected", r.num_rejected},
      {"num_iterations", r.num_iterations},
      {"max_batch_observed", r.max_batch_observed},
  };
  doc["per_request"] = nlohmann::ordered_json::array();
  for (const auto& m : r.per_request) {
    doc["per_request"].push_back({{"id", m.id},
                                  {"ttft_s", m.ttft},
                                  {"tpot_s", m.tpot},
                                  {"e2e_s", m.e2e},
                                  {"gen_len", m.gen_len}});
  }
  doc["rejected"] = r.rejected_ids;
  if (!r.iterations.empty()) {
    doc["iterations"] = nlohmann::ordered_json::array();
    for (const auto& it : r.iterations) {
      doc["iterations"].push_back({{"clock_start_s", it.clock_start},
                                   {"duration_s", it.duration},
                                   {"energy_j", it.energy},
                                   {"batch_size", it.batch_size},
                                   {"stage_seconds", it.stage_seconds},
                                   {"stage_joules", it.stage_joules}});
    }
  }
  return doc.dump(2) + "\n";
}

std::string iterations_to_jsonl(const SimulationReport& r) {
  std::ostringstream out;
  for (const auto& it : r.iterations) {
    nlohmann::ordered_json rec;
    rec["clock_start_s"] = it.clock_start;
    rec["duration_s"] = it.duration;
    rec["energy_j"] = it.energy;
    rec["batch_size"] = it.batch_size;
    rec["stage_seconds"] = it.stage_seconds;
    rec["stage_joules"] = it.stage_joules;
    out << rec.dump() << "\n";
  }
  return out.str();
}

std::string report_summary_line(const SimulationReport& r) {
  std::ostringstream ss;
  ss << r.plan_encoding << " @" << r.frequency_ghz << "GHz"
     << "  e2e=" << r.e2e_latency << "s"
     << "  energy=" << r.total_energy << "J"
     << "  p95=" << r.p95_latency << "s"
     << "  ttft=" << r.mean_ttft << "s"
     << "  tpot=" << r.mean_tpot << "s"
     << "  mfu=" << r.mfu << "  mbu=" << r.mbu
     << "  completed=" << r.num_completed << "  rejected=" << r.num_rejected;
  return ss.str();
}

}  // namespace plansim
