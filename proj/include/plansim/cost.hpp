// Copyright 2026 The plansim Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <iosfwd>
#include <map>
#include <memory>
#include <mutex>
#include <set>
#include <string>
#include <vector>

#include "plansim/cluster.hpp"
#include "plansim/ir.hpp"

namespace plansim {

enum class OpKind { Attention, GEMM, MoEGEMM };
enum class CollectiveKind { AllReduce, AllGather, ReduceScatter, AllToAll, P2P };

const char* op_kind_str(OpKind k);
const char* collective_kind_str(CollectiveKind k);
OpKind op_kind_from_string(const std::string& s);
CollectiveKind collective_kind_from_string(const std::string& s);

struct OpQuery {
  OpKind op = OpKind::GEMM;
  Dtype dtype = Dtype::FP16;
  double freq_ghz = 1.0;
  double context_tokens = 0.0;   // tokens processed in parallel by this op
  double tasks_on_device = 0.0;  // heads / experts / partitions on one device
  double width = 0.0;            // per-task effective GEMM width
};

struct CollectiveQuery {
  CollectiveKind kind = CollectiveKind::AllReduce;
  double payload_bytes = 0.0;
  int num_devices = 2;
  int num_nodes = 1;
};

// Fixed shape constants behind the closed-form op work model. The three grid
// axes (context, tasks, width) vary; everything else about the op family is
// held here.
struct OpShape {
  double model_hidden = 0.0;
  double head_dim = 0.0;                // attention context-length term
  double kv_elems_per_task_token = 0.0; // attention kv-cache traffic
};

// Dense work per device for one op invocation. Shared between the synthetic
// profile generator and the utilization accounting so the two can never
// disagree.
double op_flops(OpKind op, double tokens, double tasks, double width,
                const OpShape& shape);
double op_bytes(OpKind op, double tokens, double tasks, double width,
                const OpShape& shape, double elem_bytes);

// Time/energy lookup tables for compute ops and collectives. Immutable after
// load apart from the clamp-warning log, which is mutex-guarded.
class ProfileStore {
 public:
  // One JSONL record per table entry.
  static ProfileStore load(std::istream& in);
  static ProfileStore load_file(const std::string& path);
  std::string serialize() const;

  double query_time(const OpQuery& q) const;
  double query_energy(const OpQuery& q) const;
  double query_time(const CollectiveQuery& q) const;
  double query_energy(const CollectiveQuery& q) const;

  size_t warning_count() const;
  std::vector<std::string> warnings() const;

  bool has_compute_table(OpKind op, Dtype dt, double freq_ghz) const;

  struct ComputeGrid {
    std::vector<double> ctx, tasks, width;
    std::vector<double> seconds, joules;  // row-major over (ctx, tasks, width)
  };
  struct CollectiveCurve {
    std::vector<double> payload, seconds, joules;
  };

  // Insertion API used by the generator and tests.
  void add_compute_entry(OpKind op, Dtype dt, double freq_ghz, double ctx,
                         double tasks, double width, double seconds,
                         double joules);
  void add_collective_entry(CollectiveKind kind, int num_devices, int num_nodes,
                            double payload, double seconds, double joules);
  void finalize();  // sorts knots into grids; throws DataError on bad tables

 private:
  struct ComputeKey {
    OpKind op;
    Dtype dtype;
    long long freq_micro;  // GHz * 1e6, exact-match key
    auto operator<=>(const ComputeKey&) const = default;
  };
  struct CollectiveKey {
    CollectiveKind kind;
    int num_devices;
    int num_nodes;
    auto operator<=>(const CollectiveKey&) const = default;
  };
  struct PendingEntry {
    double seconds, joules;
  };

  const ComputeGrid& find_compute(const OpQuery& q) const;
  void warn_once(const std::string& key, const std::string& message) const;

  std::map<ComputeKey, ComputeGrid> compute_;
  std::map<CollectiveKey, CollectiveCurve> collective_;
  std::map<ComputeKey, std::map<std::array<double, 3>, PendingEntry>> pending_compute_;
  std::map<CollectiveKey, std::map<double, PendingEntry>> pending_collective_;
  bool finalized_ = false;

  // Heap-held so the store stays movable; guarded for concurrent queries.
  struct WarnState {
    std::mutex mutex;
    std::set<std::string> keys;
    std::vector<std::string> messages;
  };
  std::unique_ptr<WarnState> warn_ = std::make_unique<WarnState>();
};

// Axes and shape constants for the analytical profile generator.
struct GridSpec {
  std::vector<double> context_knots;
  std::vector<double> task_knots;
  std::vector<double> width_knots;
  std::vector<Dtype> dtypes;
  OpShape shape;
  std::vector<std::pair<int, int>> collective_groups;  // (devices, nodes)
  std::vector<double> payload_knots;

  // Covers every exact (tasks, width) coordinate the model's cells can query
  // and every collective group the cluster can form.
  static GridSpec for_model(const ModelSpec& model, const ClusterSpec& cluster,
                            double max_context = 131072.0);
};

// Deterministic roofline tables in the same format the loader consumes:
// compute time = max(flops / scaled peak, bytes / memory bandwidth),
// collective time = latency term + payload * algorithm factor / link
// bandwidth, energy = time * power with power scaling as frequency cubed.
ProfileStore synth_profiles(const DeviceSpec& hw, const ClusterSpec& net,
                            const GridSpec& grid);

// KV-cache bytes appended per generated (or prompt) token, whole model.
double kv_bytes_per_token(const ModelSpec& model);

}  // namespace plansim
