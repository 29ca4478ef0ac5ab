// Copyright 2026 The plansim Authors.
// SPDX-License-Identifier: Apache-2.0
//
// plansim: searches for hybrid-parallel execution plans for serving
// transformer LLMs by simulating iteration-level batching against profiled
// operation costs.

#include <cstdio>
#include <iostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "plansim/batching.hpp"
#include "plansim/cluster.hpp"
#include "plansim/common.hpp"
#include "plansim/cost.hpp"
#include "plansim/ir.hpp"
#include "plansim/planner.hpp"
#include "plansim/simulator.hpp"
#include "plansim/traces.hpp"

namespace {

using namespace plansim;

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitInfeasible = 3;
constexpr int kExitDataError = 4;

struct CommonOptions {
  std::string model_path;
  std::string cluster_path;
  std::string profiles_path;
  std::string trace_path;
  std::string objective = "latency";
  std::vector<double> frequencies;
  std::string batching = "contiguous";
  int64_t chunk_size = 256;
  int64_t max_batch_size = 0;
  double activation_reserve = 0.10;
  bool no_count_embedding = false;
  std::string ttft_anchor = "arrival";
  int jobs = int(std::thread::hardware_concurrency());
  int max_cell_combos = 65536;
  std::string emit_iterations_path;
};

void add_input_flags(CLI::App* cmd, CommonOptions& opt, bool needs_trace,
                     bool needs_profiles) {
  cmd->add_option("--model", opt.model_path, "model config JSON")->required();
  cmd->add_option("--cluster", opt.cluster_path, "cluster spec JSON")->required();
  if (needs_profiles)
    cmd->add_option("--profiles", opt.profiles_path, "profile JSONL")->required();
  if (needs_trace)
    cmd->add_option("--trace", opt.trace_path, "request trace JSONL")->required();
}

void add_sim_flags(CLI::App* cmd, CommonOptions& opt) {
  cmd->add_option("--frequencies", opt.frequencies,
                  "frequencies (GHz) to simulate; default: device max")
      ->delimiter(',');
  cmd->add_option("--batching", opt.batching, "contiguous | chunked")
      ->check(CLI::IsMember({"contiguous", "chunked"}));
  cmd->add_option("--chunk-size", opt.chunk_size, "prefill chunk tokens");
  cmd->add_option("--max-batch-size", opt.max_batch_size,
                  "request cap per iteration, 0 = unlimited");
  cmd->add_option("--activation-reserve", opt.activation_reserve,
                  "fraction of device memory reserved for activations");
  cmd->add_flag("--no-count-embedding", opt.no_count_embedding,
                "exclude embedding/head weights from the memory ledger");
  cmd->add_option("--ttft-anchor", opt.ttft_anchor, "arrival | admission")
      ->check(CLI::IsMember({"arrival", "admission"}));
  cmd->add_option("--max-cell-combos", opt.max_cell_combos,
                  "cap on per-block cell scheme combinations");
}

struct LoadedInputs {
  ModelSpec model;
  BlockSpec block;
  ClusterSpec cluster;
  ProfileStore store;
  Trace trace;
};

LoadedInputs load_inputs(const CommonOptions& opt, bool needs_trace,
                         bool needs_profiles) {
  LoadedInputs in;
  in.model = parse_model_config_file(opt.model_path);
  in.block = to_transformer_ir(in.model);
  in.cluster = parse_cluster_spec_file(opt.cluster_path);
  if (needs_profiles) in.store = ProfileStore::load_file(opt.profiles_path);
  if (needs_trace) in.trace = load_trace_file(opt.trace_path);
  return in;
}

SimConfig make_sim_config(const CommonOptions& opt) {
  SimConfig cfg;
  cfg.policy.mode = opt.batching == "chunked" ? BatchMode::ChunkedPrefill
                                              : BatchMode::Contiguous;
  cfg.policy.chunk_size = opt.chunk_size;
  cfg.policy.max_batch_size = opt.max_batch_size;
  cfg.ttft_anchor = opt.ttft_anchor == "admission" ? TtftAnchor::Admission
                                                   : TtftAnchor::Arrival;
  cfg.emit_iterations = !opt.emit_iterations_path.empty();
  return cfg;
}

PlanOptions make_plan_options(const CommonOptions& opt) {
  PlanOptions p;
  p.activation_reserve = opt.activation_reserve;
  p.include_embedding = !opt.no_count_embedding;
  p.enumeration.max_cell_combinations = opt.max_cell_combos;
  return p;
}

int cmd_search(const CommonOptions& opt, const std::string& out_ranked,
               const std::string& out_best, int top_k) {
  const LoadedInputs in = load_inputs(opt, true, true);
  const std::vector<ExecutionPlan> plans =
      generate_plans(in.model, in.block, in.cluster, make_plan_options(opt));
  const Objective objective =
      opt.objective == "energy" ? Objective::Energy : Objective::Latency;
  const RankedPlans ranked =
      search(plans, in.model, in.cluster, in.trace, in.store, objective,
             opt.frequencies, make_sim_config(opt), std::max(1, opt.jobs));

  nlohmann::ordered_json doc = nlohmann::ordered_json::array();
  for (const auto& e : ranked.entries)
    doc.push_back(nlohmann::ordered_json::parse(report_to_json(e.report)));
  write_file(out_ranked, doc.dump(2) + "\n");

  const SearchEntry& best = ranked.entries.front();
  write_file(out_best, plan_to_json(plans[best.plan_index], in.model));

  std::cout << "ranked " << ranked.entries.size() << " (plan, frequency) pairs by "
            << opt.objective << ":\n";
  std::printf("  %4s  %-44s %5s %12s %14s %10s %10s %9s\n", "rank", "plan",
              "GHz", "e2e_s", "energy_J", "p95_s", "tpot_s", "rejected");
  for (size_t i = 0; i < ranked.entries.size() && i < size_t(top_k); ++i) {
    const SimulationReport& r = ranked.entries[i].report;
    std::printf("  %4zu  %-44s %5.2f %12.4f %14.2f %10.4f %10.6f %9lld\n", i + 1,
                r.plan_encoding.c_str(), r.frequency_ghz, r.e2e_latency,
                r.total_energy, r.p95_latency, r.mean_tpot,
                (long long)r.num_rejected);
  }
  std::cout << "best plan written to " << out_best << ", full ranking to "
            << out_ranked << "\n";
  return kExitOk;
}

int cmd_simulate(const CommonOptions& opt, const std::string& plan_path,
                 const std::string& out_report) {
  const LoadedInputs in = load_inputs(opt, true, true);
  const ExecutionPlan plan = plan_from_json(
      read_file(plan_path), in.model, in.block, in.cluster, make_plan_options(opt));
  SimConfig cfg = make_sim_config(opt);
  if (!opt.frequencies.empty()) cfg.freq_ghz = opt.frequencies.front();
  SimulationReport report =
      simulate_plan(plan, in.model, in.cluster, in.trace, in.store, cfg);
  if (!opt.emit_iterations_path.empty()) {
    write_file(opt.emit_iterations_path, iterations_to_jsonl(report));
    report.iterations.clear();  // records live in the JSONL stream
  }
  write_file(out_report, report_to_json(report));
  std::cout << report_summary_line(report) << "\n";
  return kExitOk;
}

int cmd_sweep(const CommonOptions& opt, const std::string& plan_path,
              int segments, int64_t subset, const std::string& out_path) {
  const LoadedInputs in = load_inputs(opt, true, true);
  const ExecutionPlan plan = plan_from_json(
      read_file(plan_path), in.model, in.block, in.cluster, make_plan_options(opt));
  SimConfig cfg = make_sim_config(opt);
  if (!opt.frequencies.empty()) cfg.freq_ghz = opt.frequencies.front();
  const SweepTable table = sweep_max_batch(plan, in.model, in.cluster, in.trace,
                                           in.store, cfg, segments, subset);

  nlohmann::ordered_json doc;
  doc["observed_max_batch"] = table.observed_max_batch;
  doc["rows"] = nlohmann::ordered_json::array();
  std::cout << "observed max batch " << table.observed_max_batch << "\n";
  std::printf("  %10s %14s %14s %14s\n", "cap", "mean_tpot_s", "mean_ttft_s",
              "e2e_s");
  for (const auto& row : table.rows) {
    doc["rows"].push_back({{"max_batch_size", row.max_batch_size},
                           {"mean_tpot_s", row.mean_tpot},
                           {"mean_ttft_s", row.mean_ttft},
                           {"e2e_latency_s", row.e2e_latency}});
    std::printf("  %10lld %14.6f %14.6f %14.6f\n",
                (long long)row.max_batch_size, row.mean_tpot, row.mean_ttft,
                row.e2e_latency);
  }
  if (!out_path.empty()) write_file(out_path, doc.dump(2) + "\n");
  return kExitOk;
}

int cmd_synth_profile(const CommonOptions& opt, double max_context,
                      const std::string& out_path) {
  const ModelSpec model = parse_model_config_file(opt.model_path);
  const ClusterSpec cluster = parse_cluster_spec_file(opt.cluster_path);
  const GridSpec grid = GridSpec::for_model(model, cluster, max_context);
  const ProfileStore store = synth_profiles(cluster.device, cluster, grid);
  write_file(out_path, store.serialize());
  std::cout << "wrote profiles to " << out_path << "\n";
  return kExitOk;
}

int cmd_synth_trace(double ctx_mean, double ctx_std, double gen_mean,
                    double gen_std, double rate, int64_t n, uint64_t seed,
                    const std::string& out_path) {
  const Trace trace =
      synth_trace({ctx_mean, ctx_std}, {gen_mean, gen_std}, rate, n, seed);
  write_file(out_path, serialize_trace(trace));
  std::cout << "wrote " << trace.requests.size() << " requests to " << out_path
            << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "plansim: parallel execution plan search for LLM serving clusters"};
  app.require_subcommand(1);
  app.set_config("--config", "", "read options from an INI file; flags override");

  CommonOptions opt;

  auto* search_cmd = app.add_subcommand(
      "search", "enumerate plans, simulate the trace, rank by the objective");
  add_input_flags(search_cmd, opt, true, true);
  add_sim_flags(search_cmd, opt);
  std::string out_ranked = "ranked.json";
  std::string out_best = "best_plan.json";
  int top_k = 5;
  search_cmd->add_option("--objective", opt.objective, "latency | energy")
      ->check(CLI::IsMember({"latency", "energy"}));
  search_cmd->add_option("--jobs", opt.jobs, "parallel simulation workers");
  search_cmd->add_option("--out-ranked", out_ranked, "ranked report path");
  search_cmd->add_option("--out-best", out_best, "best plan path");
  search_cmd->add_option("--top-k", top_k, "plans to print");

  auto* sim_cmd = app.add_subcommand("simulate", "replay one plan file");
  add_input_flags(sim_cmd, opt, true, true);
  add_sim_flags(sim_cmd, opt);
  std::string plan_path;
  std::string out_report = "report.json";
  sim_cmd->add_option("--plan", plan_path, "plan JSON")->required();
  sim_cmd->add_option("--out", out_report, "report path");
  sim_cmd->add_option("--emit-iterations", opt.emit_iterations_path,
                      "stream per-iteration records to this JSONL file");

  auto* sweep_cmd = app.add_subcommand(
      "sweep", "sweep max-batch-size caps and report TPOT and latency");
  add_input_flags(sweep_cmd, opt, true, true);
  add_sim_flags(sweep_cmd, opt);
  std::string sweep_plan_path;
  std::string sweep_out;
  int segments = 4;
  int64_t subset = 256;
  sweep_cmd->add_option("--plan", sweep_plan_path, "plan JSON")->required();
  sweep_cmd->add_option("--segments", segments, "number of cap segments");
  sweep_cmd->add_option("--subset", subset,
                        "requests used to find the batch upper bound");
  sweep_cmd->add_option("--out", sweep_out, "sweep table path");

  auto* synthp_cmd = app.add_subcommand(
      "synth-profile", "generate analytical roofline profiles for a cluster");
  add_input_flags(synthp_cmd, opt, false, false);
  double max_context = 131072.0;
  std::string profile_out = "profiles.jsonl";
  synthp_cmd->add_option("--max-context", max_context, "largest context knot");
  synthp_cmd->add_option("--out", profile_out, "output JSONL path");

  auto* syntht_cmd =
      app.add_subcommand("synth-trace", "generate a Poisson-arrival trace");
  double ctx_mean = 512, ctx_std = 128, gen_mean = 128, gen_std = 32, rate = 0.5;
  int64_t num_requests = 256;
  uint64_t seed = 1;
  std::string trace_out = "trace.jsonl";
  syntht_cmd->add_option("--ctx-mean", ctx_mean, "mean context tokens");
  syntht_cmd->add_option("--ctx-std", ctx_std, "context stddev");
  syntht_cmd->add_option("--gen-mean", gen_mean, "mean generation tokens");
  syntht_cmd->add_option("--gen-std", gen_std, "generation stddev");
  syntht_cmd->add_option("--rate", rate, "arrival rate, requests/s");
  syntht_cmd->add_option("--num", num_requests, "request count");
  syntht_cmd->add_option("--seed", seed, "rng seed");
  syntht_cmd->add_option("--out", trace_out, "output JSONL path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (search_cmd->parsed()) return cmd_search(opt, out_ranked, out_best, top_k);
    if (sim_cmd->parsed()) return cmd_simulate(opt, plan_path, out_report);
    if (sweep_cmd->parsed())
      return cmd_sweep(opt, sweep_plan_path, segments, subset, sweep_out);
    if (synthp_cmd->parsed())
      return cmd_synth_profile(opt, max_context, profile_out);
    if (syntht_cmd->parsed())
      return cmd_synth_trace(ctx_mean, ctx_std, gen_mean, gen_std, rate,
                             num_requests, seed, trace_out);
  } catch (const InfeasibleError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInfeasible;
  } catch (const DataError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitDataError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitDataError;
  }
  return kExitUsage;
}
