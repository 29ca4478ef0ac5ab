// Copyright 2026 The plansim Authors.
// SPDX-License-Identifier: Apache-2.0

#include "plansim/planner.hpp"

#include <algorithm>
#include <iostream>
#include <set>
#include <sstream>

#include "json.hpp"

namespace plansim {

bool template_valid(const CellSpec& cell, int devices, ParallelMode mode) {
  if (devices < 1) return false;
  if (mode == ParallelMode::EP) {
    if (cell.kind != CellKind::MoE) return false;
    return devices <= cell.num_experts && cell.num_experts % devices == 0;
  }
  if (cell.kind == CellKind::MoE)
    return cell.tp_slices % devices == 0;
  return cell.num_tasks % devices == 0;
}

TaskMapping apply_template(const CellSpec& cell, int devices, ParallelMode mode) {
  if (!template_valid(cell, devices, mode))
    throw DataError(std::string("template: cannot split ") +
                    cell_kind_str(cell.kind) + " cell across " +
                    std::to_string(devices) + " devices");

  TaskMapping m;
  m.devices = devices;
  m.device_tasks.resize(size_t(devices));

  if (mode == ParallelMode::EP) {
    const int per_device = cell.num_experts / devices;
    for (int d = 0; d < devices; ++d)
      for (int e = 0; e < per_device; ++e)
        m.device_tasks[size_t(d)].push_back(d * per_device + e);
    m.weight_bytes_per_device = cell.weight_bytes() / devices;
    return m;
  }

  if (cell.kind == CellKind::MoE) {
    // TP slices every expert; tasks are slice ids.
    const int per_device = cell.tp_slices / devices;
    for (int d = 0; d < devices; ++d)
      for (int s = 0; s < per_device; ++s)
        m.device_tasks[size_t(d)].push_back(d * per_device + s);
    m.weight_bytes_per_device = cell.weight_bytes() / devices;
    return m;
  }

  const int per_device = cell.num_tasks / devices;
  for (int d = 0; d < devices; ++d)
    for (int t = 0; t < per_device; ++t)
      m.device_tasks[size_t(d)].push_back(d * per_device + t);

  if (cell.is_attention()) {
    // kv heads shard with the query heads until the split outruns them, after
    // which each shard keeps a replicated copy.
    const double kv_per_device =
        cell.kv_heads >= devices ? double(cell.kv_heads) / devices : 1.0;
    m.weight_bytes_per_device = per_device * cell.qo_weight_bytes_per_task +
                                kv_per_device * cell.kv_weight_bytes_per_kv_head;
  } else {
    m.weight_bytes_per_device = cell.weight_bytes() / devices;
  }
  return m;
}

namespace {

CellScheme make_cell_scheme(const CellSpec& cell, ParallelMode mode, int cell_dp,
                            int intra_degree) {
  CellScheme s;
  s.cell = cell;
  s.mode = intra_degree == 1 ? ParallelMode::TP : mode;  // EP(1) == TP(1)
  s.cell_dp = cell_dp;
  s.intra_degree = intra_degree;
  s.mapping = apply_template(cell, intra_degree, s.mode);

  const double token_split = 1.0 / cell_dp;
  switch (cell.kind) {
    case CellKind::MHA:
    case CellKind::GQA:
      s.op = OpKind::Attention;
      s.query_tasks = double(cell.num_tasks) / intra_degree;
      s.query_width = cell.task_width;
      s.token_scale = token_split;
      break;
    case CellKind::MLP:
    case CellKind::SwiGLU:
      s.op = OpKind::GEMM;
      s.query_tasks = double(cell.num_tasks) / intra_degree;
      s.query_width = cell.task_width;
      s.token_scale = token_split;
      break;
    case CellKind::MoE: {
      s.op = OpKind::MoEGEMM;
      const double routing = double(cell.experts_per_token) / cell.num_experts;
      if (s.mode == ParallelMode::EP) {
        s.query_tasks = double(cell.num_experts) / intra_degree;
        s.token_scale = token_split * routing;
      } else {
        // Every expert is present, sliced 1/intra; fold the slice into the
        // token axis so the tasks axis stays integral.
        s.query_tasks = double(cell.num_experts);
        s.token_scale = token_split * routing / intra_degree;
      }
      s.query_width = cell.task_width;
      break;
    }
  }
  return s;
}

}  // namespace

std::vector<CollectiveOp> get_reshard_collective(const CellScheme& left,
                                                 const CellScheme& right,
                                                 const ModelSpec& model) {
  std::vector<CollectiveOp> ops;
  const double per_token =
      double(model.hidden_size) * model.activation_dtype.bytes_per_element;
  const bool left_ep = left.mode == ParallelMode::EP && left.intra_degree > 1;
  const bool right_ep = right.mode == ParallelMode::EP && right.intra_degree > 1;

  // Expert-parallel cells exchange tokens with All-to-All on both sides; the
  // dispatch pass also folds in the upstream reduction, which is what makes
  // EP cheaper than slicing the experts with TP.
  if (left_ep)
    ops.push_back({CollectiveKind::AllToAll, per_token, 1.0 / left.cell_dp,
                   GroupScope::LeftIntra});
  if (right_ep) {
    ops.push_back({CollectiveKind::AllToAll, per_token, 1.0 / right.cell_dp,
                   GroupScope::RightIntra});
  } else if (left.cell_dp == right.cell_dp) {
    if (!left_ep && left.intra_degree > 1) {
      // Row-partitioned output, Megatron-style synchronization.
      ops.push_back({CollectiveKind::AllReduce, per_token, 1.0 / left.cell_dp,
                     GroupScope::LeftIntra});
    }
  } else {
    ops.push_back({CollectiveKind::AllToAll, per_token, 1.0, GroupScope::Stage});
    if (right.intra_degree > 1)
      ops.push_back({CollectiveKind::AllGather, per_token, 1.0 / right.cell_dp,
                     GroupScope::RightIntra});
  }
  return ops;
}

namespace {

std::string scheme_encoding(int model_dp, int num_stages,
                            const std::vector<CellScheme>& cells) {
  std::ostringstream ss;
  ss << "dp" << model_dp << ":pp" << num_stages;
  for (const auto& c : cells) {
    ss << ":" << cell_kind_str(c.cell.kind)
       << (c.mode == ParallelMode::EP ? "-ep" : "-tp") << c.intra_degree << "x"
       << c.cell_dp;
  }
  return ss.str();
}

ParallelScheme assemble_scheme(const ModelSpec& model, const BlockSpec& block,
                               int model_dp, int num_stages, int stage_devices,
                               const std::vector<CellScheme>& cells) {
  ParallelScheme s;
  s.model_dp = model_dp;
  s.num_stages = num_stages;
  s.stage_devices = stage_devices;
  s.stage_repetitions = block.repeat_count / num_stages;
  s.cells = cells;
  for (size_t i = 0; i < cells.size(); ++i) {
    const CellScheme& left = cells[i];
    const CellScheme& right = cells[(i + 1) % cells.size()];
    s.reshards.push_back(get_reshard_collective(left, right, model));
  }
  s.encoding = scheme_encoding(model_dp, num_stages, cells);
  return s;
}

}  // namespace

std::vector<ParallelScheme> enumerate_schemes(const ModelSpec& model,
                                              const BlockSpec& block, int n,
                                              const EnumOptions& opts) {
  std::vector<ParallelScheme> out;
  std::set<std::string> seen;
  if (n < 1 || block.repeat_count < 1) return out;

  for (const int model_dp : divisors(n)) {
    const int m = n / model_dp;
    for (const int stages : divisors(m)) {
      if (stages > block.repeat_count || block.repeat_count % stages != 0)
        continue;
      const int s = m / stages;

      // Per-cell scheme options at this stage width.
      std::vector<std::vector<CellScheme>> options(block.cells.size());
      bool viable = true;
      for (size_t ci = 0; ci < block.cells.size(); ++ci) {
        const CellSpec& cell = block.cells[ci];
        for (const int cell_dp : divisors(s)) {
          const int c = s / cell_dp;
          if (template_valid(cell, c, ParallelMode::TP))
            options[ci].push_back(make_cell_scheme(cell, ParallelMode::TP, cell_dp, c));
          if (c > 1 && template_valid(cell, c, ParallelMode::EP))
            options[ci].push_back(make_cell_scheme(cell, ParallelMode::EP, cell_dp, c));
        }
        if (options[ci].empty()) { viable = false; break; }
      }
      if (!viable) continue;

      long long combos = 1;
      for (const auto& o : options) combos *= (long long)o.size();
      if (combos > opts.max_cell_combinations) {
        std::cerr << "warning: capping cell-scheme combinations at "
                  << opts.max_cell_combinations << " (of " << combos << ") for dp="
                  << model_dp << " stages=" << stages << "\n";
        combos = opts.max_cell_combinations;
      }

      std::vector<size_t> idx(block.cells.size(), 0);
      for (long long taken = 0; taken < combos; ++taken) {
        std::vector<CellScheme> cells;
        cells.reserve(idx.size());
        for (size_t ci = 0; ci < idx.size(); ++ci)
          cells.push_back(options[ci][idx[ci]]);
        ParallelScheme scheme =
            assemble_scheme(model, block, model_dp, stages, s, cells);
        if (seen.insert(scheme.encoding).second) out.push_back(std::move(scheme));

        // Odometer increment over the option lists.
        for (size_t ci = idx.size(); ci-- > 0;) {
          if (++idx[ci] < options[ci].size()) break;
          idx[ci] = 0;
        }
      }
    }
  }
  return out;
}

namespace {

// Worst span over every concrete group instance of a collective.
SpanStats worst_group_span(const ClusterSpec& cluster,
                           const DeviceAssignment& assignment, int group_size,
                           int groups_per_stage) {
  SpanStats worst;
  bool first = true;
  for (int r = 0; r < assignment.shape.model_dp; ++r) {
    for (int st = 0; st < assignment.shape.num_stages; ++st) {
      for (int g = 0; g < groups_per_stage; ++g) {
        std::vector<int> ids;
        ids.reserve(size_t(group_size));
        for (int j = 0; j < group_size; ++j)
          ids.push_back(assignment.device_of(r, st, g * group_size + j));
        const SpanStats span = collective_span(cluster, ids);
        if (first || span.highest_level_used > worst.highest_level_used ||
            (span.highest_level_used == worst.highest_level_used &&
             span.num_nodes_spanned > worst.num_nodes_spanned)) {
          worst = span;
          first = false;
        }
      }
    }
  }
  return worst;
}

ResolvedCollective resolve_collective(const CollectiveOp& op,
                                      const ParallelScheme& scheme,
                                      const ClusterSpec& cluster,
                                      const DeviceAssignment& assignment,
                                      const CellScheme& left,
                                      const CellScheme& right) {
  int group_size = 0;
  switch (op.scope) {
    case GroupScope::LeftIntra:  group_size = left.intra_degree; break;
    case GroupScope::RightIntra: group_size = right.intra_degree; break;
    case GroupScope::Stage:      group_size = scheme.stage_devices; break;
  }
  ResolvedCollective rc;
  rc.kind = op.kind;
  rc.payload_bytes_per_token = op.payload_bytes_per_token;
  rc.token_share = op.token_share;
  if (group_size < 2) {
    rc.num_devices = 0;  // elided
    return rc;
  }
  rc.groups_per_stage = scheme.stage_devices / group_size;
  const SpanStats span = worst_group_span(cluster, assignment, group_size,
                                          rc.groups_per_stage);
  rc.num_devices = span.num_devices;
  rc.num_nodes = span.num_nodes_spanned;
  return rc;
}

double plan_kv_bytes_per_token(const ModelSpec& model, const ParallelScheme& scheme) {
  double per_layer = 0.0;
  for (const auto& cs : scheme.cells) {
    if (!cs.cell.is_attention()) continue;
    const double kv_instances = std::max(double(cs.cell.kv_heads), double(cs.intra_degree));
    per_layer += 2.0 * cs.cell.head_dim * kv_instances *
                 model.kv_cache_dtype.bytes_per_element;
  }
  return per_layer * model.num_layers;
}

ExecutionPlan finalize_plan(const ModelSpec& model, const ParallelScheme& scheme,
                            const ClusterSpec& cluster, const PlanOptions& opts) {
  ExecutionPlan plan;
  plan.scheme = scheme;
  plan.assignment = map_devices(scheme.shape(), cluster);
  plan.compute_dtype = model.activation_dtype.name;
  plan.op_shape.model_hidden = model.hidden_size;
  plan.op_shape.head_dim = model.head_dim;
  plan.op_shape.kv_elems_per_task_token =
      2.0 * model.head_dim /
      (model.num_attention_heads / double(model.num_kv_heads));
  plan.p2p_payload_per_token =
      double(model.hidden_size) * model.activation_dtype.bytes_per_element;

  for (size_t i = 0; i < scheme.cells.size(); ++i) {
    const CellScheme& left = scheme.cells[i];
    const CellScheme& right = scheme.cells[(i + 1) % scheme.cells.size()];
    for (const CollectiveOp& op : scheme.reshards[i]) {
      const ResolvedCollective rc =
          resolve_collective(op, scheme, cluster, plan.assignment, left, right);
      if (rc.num_devices >= 2) plan.block_collectives.push_back(rc);
    }
  }

  for (int b = 0; b + 1 < scheme.num_stages; ++b) {
    // Representative pair: first device of each adjacent stage.
    const int a = plan.assignment.device_of(0, b, 0);
    const int c = plan.assignment.device_of(0, b + 1, 0);
    const int per_node = cluster.devices_per_node();
    plan.p2p_boundary_nodes.push_back(a / per_node == c / per_node ? 1 : 2);
  }

  // Static memory: every stage device holds its cell shards for each block
  // repetition in the stage; the tied embedding lives vocab-sharded on the
  // last stage.
  double per_device = 0.0;
  for (const auto& cs : scheme.cells) per_device += cs.mapping.weight_bytes_per_device;
  per_device *= scheme.stage_repetitions;
  double last_stage_device = per_device;
  if (opts.include_embedding)
    last_stage_device += embedding_weight_bytes(model) / scheme.stage_devices;
  plan.static_bytes_per_device = std::max(per_device, last_stage_device);

  const int replica_devices = scheme.num_stages * scheme.stage_devices;
  const double replica_static =
      per_device * replica_devices +
      (opts.include_embedding ? embedding_weight_bytes(model) : 0.0);
  const double replica_capacity = cluster.device.memory_capacity * replica_devices;
  plan.kv_budget_per_replica = std::max(
      0.0, replica_capacity * (1.0 - opts.activation_reserve) - replica_static);
  plan.kv_bytes_per_token = plan_kv_bytes_per_token(model, scheme);
  return plan;
}

}  // namespace

std::vector<ExecutionPlan> generate_plans(const ModelSpec& model,
                                          const BlockSpec& block,
                                          const ClusterSpec& cluster,
                                          const PlanOptions& opts) {
  const int n = cluster.total_devices();
  const std::vector<ParallelScheme> schemes =
      enumerate_schemes(model, block, n, opts.enumeration);

  std::vector<ExecutionPlan> plans;
  for (const auto& scheme : schemes) {
    ExecutionPlan plan = finalize_plan(model, scheme, cluster, opts);
    if (plan.static_bytes_per_device > cluster.device.memory_capacity) continue;
    plans.push_back(std::move(plan));
  }
  if (plans.empty())
    throw InfeasibleError(
        "no parallel execution plan fits the model on this cluster");
  return plans;
}

ExecutionPlan build_plan(const ModelSpec& model, const BlockSpec& block,
                         const ClusterSpec& cluster, int model_dp,
                         int num_stages, const std::vector<CellChoice>& choices,
                         const PlanOptions& opts) {
  const int n = cluster.total_devices();
  if (model_dp < 1 || num_stages < 1 || n % (model_dp * num_stages) != 0)
    throw DataError("plan: degrees do not divide the cluster device count");
  const int s = n / (model_dp * num_stages);
  if (block.repeat_count % num_stages != 0)
    throw DataError("plan: stage count does not divide the layer count");
  if (choices.size() != block.cells.size())
    throw DataError("plan: cell scheme count does not match the block");

  std::vector<CellScheme> cells;
  for (size_t i = 0; i < choices.size(); ++i) {
    const CellChoice& ch = choices[i];
    if (ch.cell_dp * ch.intra_degree != s)
      throw DataError("plan: cell_dp * intra_degree must equal stage devices");
    if (!template_valid(block.cells[i], ch.intra_degree, ch.mode))
      throw DataError("plan: invalid template for cell " +
                      std::string(cell_kind_str(block.cells[i].kind)));
    cells.push_back(
        make_cell_scheme(block.cells[i], ch.mode, ch.cell_dp, ch.intra_degree));
  }
  const ParallelScheme scheme =
      assemble_scheme(model, block, model_dp, num_stages, s, cells);
  return finalize_plan(model, scheme, cluster, opts);
}

std::string plan_to_json(const ExecutionPlan& plan, const ModelSpec& model) {
  nlohmann::ordered_json doc;
  doc["model"] = model.name;
  doc["encoding"] = plan.scheme.encoding;
  doc["model_dp"] = plan.scheme.model_dp;
  doc["num_stages"] = plan.scheme.num_stages;
  doc["stage_devices"] = plan.scheme.stage_devices;
  doc["stage_repetitions"] = plan.scheme.stage_repetitions;
  doc["cells"] = nlohmann::ordered_json::array();
  for (const auto& c : plan.scheme.cells) {
    nlohmann::ordered_json cell;
    cell["kind"] = cell_kind_str(c.cell.kind);
    cell["mode"] = c.mode == ParallelMode::EP ? "ep" : "tp";
    cell["cell_dp"] = c.cell_dp;
    cell["intra_degree"] = c.intra_degree;
    cell["tasks_per_device"] = c.mapping.device_tasks.front().size();
    cell["weight_bytes_per_device"] = c.mapping.weight_bytes_per_device;
    doc["cells"].push_back(cell);
  }
  doc["collectives"] = nlohmann::ordered_json::array();
  for (const auto& rc : plan.block_collectives) {
    nlohmann::ordered_json op;
    op["kind"] = collective_kind_str(rc.kind);
    op["payload_bytes_per_token"] = rc.payload_bytes_per_token;
    op["token_share"] = rc.token_share;
    op["num_devices"] = rc.num_devices;
    op["num_nodes"] = rc.num_nodes;
    doc["collectives"].push_back(op);
  }
  doc["assignment"] = nlohmann::ordered_json::array();
  for (int r = 0; r < plan.assignment.shape.model_dp; ++r)
    for (int st = 0; st < plan.assignment.shape.num_stages; ++st)
      doc["assignment"].push_back(
          {{"replica", r},
           {"stage", st},
           {"devices", plan.assignment.stage_devices_of(r, st)}});
  doc["static_bytes_per_device"] = plan.static_bytes_per_device;
  doc["kv_budget_per_replica"] = plan.kv_budget_per_replica;
  doc["kv_bytes_per_token"] = plan.kv_bytes_per_token;
  return doc.dump(2) + "\n";
}

ExecutionPlan plan_from_json(const std::string& json_text, const ModelSpec& model,
                             const BlockSpec& block, const ClusterSpec& cluster,
                             const PlanOptions& opts) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("plan file: ") + e.what());
  }
  try {
    const int model_dp = doc.at("model_dp").get<int>();
    const int num_stages = doc.at("num_stages").get<int>();
    std::vector<CellChoice> choices;
    for (const auto& c : doc.at("cells")) {
      CellChoice ch;
      ch.mode = c.at("mode").get<std::string>() == "ep" ? ParallelMode::EP
                                                        : ParallelMode::TP;
      ch.cell_dp = c.at("cell_dp").get<int>();
      ch.intra_degree = c.at("intra_degree").get<int>();
      choices.push_back(ch);
    }
    return build_plan(model, block, cluster, model_dp, num_stages, choices, opts);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("plan file: ") + e.what());
  }
}

}  // namespace plansim
