// Copyright 2026 The plansim Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <optional>
#include <string>
#include <vector>

#include "plansim/cluster.hpp"
#include "plansim/cost.hpp"
#include "plansim/ir.hpp"

namespace plansim {

enum class ParallelMode { TP, EP };

// Task placement of one cell across the devices of one cell replica.
struct TaskMapping {
  int devices = 1;
  std::vector<std::vector<int>> device_tasks;  // task ids per device
  double weight_bytes_per_device = 0.0;
};

// How one cell runs inside a stage: `cell_dp` token-parallel replicas, each
// sharded over `intra_degree` devices (tensor or expert parallel).
struct CellScheme {
  CellSpec cell;
  ParallelMode mode = ParallelMode::TP;
  int cell_dp = 1;
  int intra_degree = 1;
  TaskMapping mapping;

  // Per-device cost-table coordinates. `token_scale` multiplies the iteration
  // token count before the context axis is queried; it folds in cell-level DP
  // token splitting and expert routing fractions.
  OpKind op = OpKind::GEMM;
  double query_tasks = 0.0;
  double query_width = 0.0;
  double token_scale = 1.0;
};

enum class GroupScope { LeftIntra, RightIntra, Stage };

// One reshard collective between adjacent cells. Payload at simulation time is
// payload_bytes_per_token * iteration tokens * token_share.
struct CollectiveOp {
  CollectiveKind kind = CollectiveKind::AllReduce;
  double payload_bytes_per_token = 0.0;
  double token_share = 1.0;
  GroupScope scope = GroupScope::LeftIntra;
};

struct ParallelScheme {
  int model_dp = 1;
  int num_stages = 1;
  int stage_devices = 1;
  int stage_repetitions = 1;  // block repetitions per pipeline stage
  std::vector<CellScheme> cells;
  // reshards[i] converts cell i's output layout to cell (i+1)'s input layout;
  // the last entry is the wrap-around pair between block repetitions.
  std::vector<std::vector<CollectiveOp>> reshards;
  std::string encoding;

  SchemeShape shape() const { return {model_dp, num_stages, stage_devices}; }
};

bool template_valid(const CellSpec& cell, int devices, ParallelMode mode);
TaskMapping apply_template(const CellSpec& cell, int devices, ParallelMode mode);
std::vector<CollectiveOp> get_reshard_collective(const CellScheme& left,
                                                 const CellScheme& right,
                                                 const ModelSpec& model);

struct EnumOptions {
  int max_cell_combinations = 65536;  // cap on the per-(dp, stages) cross product
};

std::vector<ParallelScheme> enumerate_schemes(const ModelSpec& model,
                                              const BlockSpec& block, int n,
                                              const EnumOptions& opts = {});

// A collective with its group resolved against the physical assignment.
struct ResolvedCollective {
  CollectiveKind kind = CollectiveKind::AllReduce;
  double payload_bytes_per_token = 0.0;
  double token_share = 1.0;
  int num_devices = 0;  // 0 when the group degenerated to a single device
  int num_nodes = 1;
  int groups_per_stage = 1;  // parallel group instances, for energy accounting
};

struct ExecutionPlan {
  ParallelScheme scheme;
  DeviceAssignment assignment;
  std::vector<ResolvedCollective> block_collectives;  // all pairs, flattened
  std::vector<int> p2p_boundary_nodes;                // per stage boundary
  double p2p_payload_per_token = 0.0;

  double static_bytes_per_device = 0.0;  // worst device
  double kv_budget_per_replica = 0.0;
  double kv_bytes_per_token = 0.0;  // replication-adjusted, whole model
  Dtype compute_dtype = Dtype::FP16;
  OpShape op_shape;

  std::string encoding() const { return scheme.encoding; }
};

struct PlanOptions {
  double activation_reserve = 0.10;  // fraction of device memory held back
  bool include_embedding = true;
  EnumOptions enumeration;
};

std::vector<ExecutionPlan> generate_plans(const ModelSpec& model,
                                          const BlockSpec& block,
                                          const ClusterSpec& cluster,
                                          const PlanOptions& opts = {});

// Builds the plan for explicitly chosen degrees (used when replaying a plan
// file). Throws DataError if the combination is invalid for the model/cluster.
struct CellChoice {
  ParallelMode mode = ParallelMode::TP;
  int cell_dp = 1;
  int intra_degree = 1;
};
ExecutionPlan build_plan(const ModelSpec& model, const BlockSpec& block,
                         const ClusterSpec& cluster, int model_dp,
                         int num_stages, const std::vector<CellChoice>& cells,
                         const PlanOptions& opts = {});

std::string plan_to_json(const ExecutionPlan& plan, const ModelSpec& model);
ExecutionPlan plan_from_json(const std::string& json_text, const ModelSpec& model,
                             const BlockSpec& block, const ClusterSpec& cluster,
                             const PlanOptions& opts = {});

}  // namespace plansim
