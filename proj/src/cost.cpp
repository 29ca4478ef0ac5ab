// Copyright 2026 The plansim Authors.
// SPDX-License-Identifier: Apache-2.0

#include "plansim/cost.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <sstream>

#include "json.hpp"

namespace plansim {

const char* op_kind_str(OpKind k) {
  switch (k) {
    case OpKind::Attention: return "attention";
    case OpKind::GEMM:      return "gemm";
    case OpKind::MoEGEMM:   return "moe_gemm";
  }
  return "?";
}

const char* collective_kind_str(CollectiveKind k) {
  switch (k) {
    case CollectiveKind::AllReduce:     return "allreduce";
    case CollectiveKind::AllGather:     return "allgather";
    case CollectiveKind::ReduceScatter: return "reduce_scatter";
    case CollectiveKind::AllToAll:      return "all_to_all";
    case CollectiveKind::P2P:           return "p2p";
  }
  return "?";
}

OpKind op_kind_from_string(const std::string& s) {
  if (s == "attention") return OpKind::Attention;
  if (s == "gemm") return OpKind::GEMM;
  if (s == "moe_gemm") return OpKind::MoEGEMM;
  throw DataError("unknown compute op: " + s);
}

CollectiveKind collective_kind_from_string(const std::string& s) {
  if (s == "allreduce") return CollectiveKind::AllReduce;
  if (s == "allgather") return CollectiveKind::AllGather;
  if (s == "reduce_scatter") return CollectiveKind::ReduceScatter;
  if (s == "all_to_all") return CollectiveKind::AllToAll;
  if (s == "p2p") return CollectiveKind::P2P;
  throw DataError("unknown collective op: " + s);
}

double op_flops(OpKind op, double tokens, double tasks, double width,
                const OpShape& shape) {
  double flops = 2.0 * tokens * tasks * shape.model_hidden * width;
  if (op == OpKind::Attention) {
    // Score and value matmuls over the tokens processed in parallel.
    flops += 4.0 * tokens * tokens * tasks * shape.head_dim;
  }
  return flops;
}

double op_bytes(OpKind op, double tokens, double tasks, double width,
                const OpShape& shape, double elem_bytes) {
  double bytes = tasks * shape.model_hidden * width * elem_bytes;  // weights
  bytes += 2.0 * tokens * shape.model_hidden * elem_bytes;         // act in/out
  if (op == OpKind::Attention)
    bytes += tokens * tasks * shape.kv_elems_per_task_token * elem_bytes;
  return bytes;
}

double kv_bytes_per_token(const ModelSpec& m) {
  return 2.0 * m.num_layers * m.num_kv_heads * m.head_dim *
         m.kv_cache_dtype.bytes_per_element;
}

namespace {

long long freq_key(double freq_ghz) { return llround(freq_ghz * 1e6); }

struct AxisPos {
  size_t lo = 0, hi = 0;
  double t = 0.0;
  int clamp = 0;  // -1 below, +1 above, 0 in range
};

AxisPos locate(const std::vector<double>& knots, double x) {
  AxisPos p;
  if (x <= knots.front()) {
    p.lo = p.hi = 0;
    p.clamp = x < knots.front() ? -1 : 0;
    return p;
  }
  if (x >= knots.back()) {
    p.lo = p.hi = knots.size() - 1;
    p.clamp = x > knots.back() ? 1 : 0;
    return p;
  }
  const auto it = std::upper_bound(knots.begin(), knots.end(), x);
  p.hi = size_t(it - knots.begin());
  p.lo = p.hi - 1;
  p.t = (x - knots[p.lo]) / (knots[p.hi] - knots[p.lo]);
  return p;
}

}  // namespace

void ProfileStore::add_compute_entry(OpKind op, Dtype dt, double freq_ghz,
                                     double ctx, double tasks, double width,
                                     double seconds, double joules) {
  if (seconds < 0 || joules < 0)
    throw DataError("profile: negative time or energy entry");
  const ComputeKey key{op, dt, freq_key(freq_ghz)};
  auto [it, inserted] =
      pending_compute_[key].emplace(std::array<double, 3>{ctx, tasks, width},
                                    PendingEntry{seconds, joules});
  if (!inserted)
    throw DataError(std::string("profile: duplicate knot in compute table ") +
                    op_kind_str(op));
  finalized_ = false;
}

void ProfileStore::add_collective_entry(CollectiveKind kind, int num_devices,
                                        int num_nodes, double payload,
                                        double seconds, double joules) {
  if (seconds < 0 || joules < 0)
    throw DataError("profile: negative time or energy entry");
  if (num_devices < 2) throw DataError("profile: collective with < 2 devices");
  const CollectiveKey key{kind, num_devices, num_nodes};
  auto [it, inserted] =
      pending_collective_[key].emplace(payload, PendingEntry{seconds, joules});
  if (!inserted)
    throw DataError(std::string("profile: duplicate knot in collective table ") +
                    collective_kind_str(kind));
  finalized_ = false;
}

void ProfileStore::finalize() {
  compute_.clear();
  collective_.clear();
  for (const auto& [key, entries] : pending_compute_) {
    ComputeGrid g;
    std::set<double> ctx, tasks, width;
    for (const auto& [axes, e] : entries) {
      ctx.insert(axes[0]);
      tasks.insert(axes[1]);
      width.insert(axes[2]);
    }
    g.ctx.assign(ctx.begin(), ctx.end());
    g.tasks.assign(tasks.begin(), tasks.end());
    g.width.assign(width.begin(), width.end());
    const size_t expected = g.ctx.size() * g.tasks.size() * g.width.size();
    if (entries.size() != expected)
      throw DataError(std::string("profile: compute table ") +
                      op_kind_str(key.op) + " is not a complete grid");
    g.seconds.resize(expected);
    g.joules.resize(expected);
    for (const auto& [axes, e] : entries) {
      const size_t i = size_t(std::lower_bound(g.ctx.begin(), g.ctx.end(), axes[0]) - g.ctx.begin());
      const size_t j = size_t(std::lower_bound(g.tasks.begin(), g.tasks.end(), axes[1]) - g.tasks.begin());
      const size_t k = size_t(std::lower_bound(g.width.begin(), g.width.end(), axes[2]) - g.width.begin());
      const size_t idx = (i * g.tasks.size() + j) * g.width.size() + k;
      g.seconds[idx] = e.seconds;
      g.joules[idx] = e.joules;
    }
    compute_.emplace(key, std::move(g));
  }
  for (const auto& [key, entries] : pending_collective_) {
    CollectiveCurve c;
    for (const auto& [payload, e] : entries) {
      c.payload.push_back(payload);
      c.seconds.push_back(e.seconds);
      c.joules.push_back(e.joules);
    }
    collective_.emplace(key, std::move(c));
  }
  finalized_ = true;
}

const ProfileStore::ComputeGrid& ProfileStore::find_compute(const OpQuery& q) const {
  const ComputeKey key{q.op, q.dtype, freq_key(q.freq_ghz)};
  const auto it = compute_.find(key);
  if (it == compute_.end()) {
    std::ostringstream ss;
    ss << "profile: no compute table for op=" << op_kind_str(q.op)
       << " dtype=" << DtypeFormat{q.dtype, 0}.str() << " freq=" << q.freq_ghz
       << " GHz";
    throw DataError(ss.str());
  }
  return it->second;
}

void ProfileStore::warn_once(const std::string& key, const std::string& message) const {
  std::lock_guard<std::mutex> lock(warn_->mutex);
  if (warn_->keys.insert(key).second) warn_->messages.push_back(message);
}

double ProfileStore::query_time(const OpQuery& q) const {
  const ComputeGrid& g = find_compute(q);
  const AxisPos pi = locate(g.ctx, q.context_tokens);
  const AxisPos pj = locate(g.tasks, q.tasks_on_device);
  const AxisPos pk = locate(g.width, q.width);

  const char* axis_names[3] = {"context_tokens", "tasks", "hidden_dim"};
  const AxisPos* pos[3] = {&pi, &pj, &pk};
  for (int a = 0; a < 3; ++a) {
    if (pos[a]->clamp != 0) {
      std::ostringstream ss;
      ss << "compute:" << op_kind_str(q.op) << ":" << DtypeFormat{q.dtype, 0}.str()
         << ":" << freq_key(q.freq_ghz) << ":" << axis_names[a] << ":"
         << (pos[a]->clamp < 0 ? "below" : "above");
      warn_once(ss.str(), "query outside profiled grid, clamped (" + ss.str() + ")");
    }
  }

  auto sample = [&](const std::vector<double>& v) {
    double acc = 0.0;
    for (int ci = 0; ci < 2; ++ci) {
      const double wi = ci ? pi.t : 1.0 - pi.t;
      if (wi == 0.0) continue;
      for (int cj = 0; cj < 2; ++cj) {
        const double wj = cj ? pj.t : 1.0 - pj.t;
        if (wj == 0.0) continue;
        for (int ck = 0; ck < 2; ++ck) {
          const double wk = ck ? pk.t : 1.0 - pk.t;
          if (wk == 0.0) continue;
          const size_t i = ci ? pi.hi : pi.lo;
          const size_t j = cj ? pj.hi : pj.lo;
          const size_t k = ck ? pk.hi : pk.lo;
          acc += wi * wj * wk * v[(i * g.tasks.size() + j) * g.width.size() + k];
        }
      }
    }
    return acc;
  };
  return sample(g.seconds);
}

double ProfileStore::query_energy(const OpQuery& q) const {
  const ComputeGrid& g = find_compute(q);
  const AxisPos pi = locate(g.ctx, q.context_tokens);
  const AxisPos pj = locate(g.tasks, q.tasks_on_device);
  const AxisPos pk = locate(g.width, q.width);
  double acc = 0.0;
  for (int ci = 0; ci < 2; ++ci) {
    const double wi = ci ? pi.t : 1.0 - pi.t;
    if (wi == 0.0) continue;
    for (int cj = 0; cj < 2; ++cj) {
      const double wj = cj ? pj.t : 1.0 - pj.t;
      if (wj == 0.0) continue;
      for (int ck = 0; ck < 2; ++ck) {
        const double wk = ck ? pk.t : 1.0 - pk.t;
        if (wk == 0.0) continue;
        const size_t i = ci ? pi.hi : pi.lo;
        const size_t j = cj ? pj.hi : pj.lo;
        const size_t k = ck ? pk.hi : pk.lo;
        acc += wi * wj * wk * g.joules[(i * g.tasks.size() + j) * g.width.size() + k];
      }
    }
  }
  return acc;
}

double ProfileStore::query_time(const CollectiveQuery& q) const {
  const CollectiveKey key{q.kind, q.num_devices, q.num_nodes};
  const auto it = collective_.find(key);
  if (it == collective_.end()) {
    std::ostringstream ss;
    ss << "profile: no collective table for op=" << collective_kind_str(q.kind)
       << " devices=" << q.num_devices << " nodes=" << q.num_nodes;
    throw DataError(ss.str());
  }
  const CollectiveCurve& c = it->second;
  const AxisPos p = locate(c.payload, q.payload_bytes);
  if (p.clamp != 0) {
    std::ostringstream ss;
    ss << "collective:" << collective_kind_str(q.kind) << ":" << q.num_devices
       << ":" << q.num_nodes << ":payload:" << (p.clamp < 0 ? "below" : "above");
    warn_once(ss.str(), "query outside profiled grid, clamped (" + ss.str() + ")");
  }
  return (1.0 - p.t) * c.seconds[p.lo] + p.t * c.seconds[p.hi];
}

double ProfileStore::query_energy(const CollectiveQuery& q) const {
  const CollectiveKey key{q.kind, q.num_devices, q.num_nodes};
  const auto it = collective_.find(key);
  if (it == collective_.end())
    throw DataError(std::string("profile: no collective table for op=") +
                    collective_kind_str(q.kind));
  const CollectiveCurve& c = it->second;
  const AxisPos p = locate(c.payload, q.payload_bytes);
  return (1.0 - p.t) * c.joules[p.lo] + p.t * c.joules[p.hi];
}

size_t ProfileStore::warning_count() const {
  std::lock_guard<std::mutex> lock(warn_->mutex);
  return warn_->messages.size();
}

std::vector<std::string> ProfileStore::warnings() const {
  std::lock_guard<std::mutex> lock(warn_->mutex);
  return warn_->messages;
}

bool ProfileStore::has_compute_table(OpKind op, Dtype dt, double freq_ghz) const {
  return compute_.count(ComputeKey{op, dt, freq_key(freq_ghz)}) > 0;
}

ProfileStore ProfileStore::load(std::istream& in) {
  ProfileStore store;
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line.find_first_not_of(" \t\r") == std::string::npos)
      continue;
    nlohmann::json rec;
    try {
      rec = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw DataError("profile line " + std::to_string(lineno) + ": " + e.what());
    }
    try {
      const std::string table = rec.at("table").get<std::string>();
      const auto& axes = rec.at("axes");
      const double seconds = rec.at("seconds").get<double>();
      const double joules = rec.at("joules").get<double>();
      if (table == "compute") {
        store.add_compute_entry(
            op_kind_from_string(rec.at("op").get<std::string>()),
            DtypeFormat::from_string(rec.at("dtype").get<std::string>()).name,
            rec.at("freq_ghz").get<double>(),
            axes.at("context_tokens").get<double>(),
            axes.at("tasks").get<double>(), axes.at("hidden_dim").get<double>(),
            seconds, joules);
      } else if (table == "collective") {
        store.add_collective_entry(
            collective_kind_from_string(rec.at("op").get<std::string>()),
            axes.at("num_devices").get<int>(), axes.at("num_nodes").get<int>(),
            axes.at("payload_bytes").get<double>(), seconds, joules);
      } else {
        throw DataError("unknown table kind: " + table);
      }
    } catch (const nlohmann::json::exception& e) {
      throw DataError("profile line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  store.finalize();
  return store;
}

ProfileStore ProfileStore::load_file(const std::string& path) {
  std::istringstream in(read_file(path));
  return load(in);
}

std::string ProfileStore::serialize() const {
  std::ostringstream out;
  for (const auto& [key, entries] : pending_compute_) {
    for (const auto& [axes, e] : entries) {
      nlohmann::ordered_json rec;
      rec["table"] = "compute";
      rec["op"] = op_kind_str(key.op);
      rec["dtype"] = DtypeFormat{key.dtype, 0}.str();
      rec["freq_ghz"] = double(key.freq_micro) / 1e6;
      rec["axes"] = {{"context_tokens", axes[0]}, {"tasks", axes[1]}, {"hidden_dim", axes[2]}};
      rec["seconds"] = e.seconds;
      rec["joules"] = e.joules;
      out << rec.dump() << "\n";
    }
  }
  for (const auto& [key, entries] : pending_collective_) {
    for (const auto& [payload, e] : entries) {
      nlohmann::ordered_json rec;
      rec["table"] = "collective";
      rec["op"] = collective_kind_str(key.kind);
      rec["axes"] = {{"payload_bytes", payload}, {"num_devices", key.num_devices}, {"num_nodes", key.num_nodes}};
      rec["seconds"] = e.seconds;
      rec["joules"] = e.joules;
      out << rec.dump() << "\n";
    }
  }
  return out.str();
}

GridSpec GridSpec::for_model(const ModelSpec& model, const ClusterSpec& cluster,
                             double max_context) {
  GridSpec g;
  const BlockSpec block = to_transformer_ir(model);

  g.shape.model_hidden = model.hidden_size;
  g.shape.head_dim = model.head_dim;
  g.shape.kv_elems_per_task_token =
      2.0 * model.head_dim / (model.num_attention_heads / double(model.num_kv_heads));

  // Fractional context knots cover token shares below one (cell-level DP and
  // expert routing scale the token axis down).
  for (double c = 1.0 / 4096.0; c < 1.0; c *= 2.0) g.context_knots.push_back(c);
  for (double c = 1.0; c <= max_context; c *= 2.0) g.context_knots.push_back(c);
  if (g.context_knots.back() < max_context)
    g.context_knots.push_back(g.context_knots.back() * 2.0);

  std::set<double> tasks, widths;
  for (const auto& cell : block.cells) {
    for (int d : divisors(cell.num_tasks)) tasks.insert(double(d));
    widths.insert(cell.task_width);
    if (cell.kind == CellKind::MoE) {
      for (int d : divisors(cell.num_experts)) tasks.insert(double(d));
      tasks.insert(double(cell.num_experts));
    }
  }
  g.task_knots.assign(tasks.begin(), tasks.end());
  g.width_knots.assign(widths.begin(), widths.end());
  g.dtypes.push_back(model.activation_dtype.name);

  const int n = cluster.total_devices();
  const int per_node = cluster.devices_per_node();
  std::set<std::pair<int, int>> groups;
  std::vector<int> sizes = divisors(n);
  sizes.push_back(2);
  for (int d : sizes) {
    if (d < 2) continue;
    const int min_nodes = (d + per_node - 1) / per_node;
    const int max_nodes = std::min(d, cluster.num_nodes());
    for (int nodes = min_nodes; nodes <= max_nodes; ++nodes)
      groups.insert({d, nodes});
    groups.insert({d, std::min(min_nodes, max_nodes)});
  }
  g.collective_groups.assign(groups.begin(), groups.end());

  g.payload_knots = {1.0, 4096.0, 1 << 20, 1 << 24, double(1 << 28), 4294967296.0};
  return g;
}

namespace {

double collective_algorithm_factor(CollectiveKind kind, int devices) {
  const double d = devices;
  switch (kind) {
    case CollectiveKind::AllReduce:     return 2.0 * (d - 1.0) / d;  // ring
    case CollectiveKind::AllGather:     return (d - 1.0) / d;
    case CollectiveKind::ReduceScatter: return (d - 1.0) / d;
    case CollectiveKind::AllToAll:      return (d - 1.0) / d;
    case CollectiveKind::P2P:           return 1.0;
  }
  return 1.0;
}

// The link level a group spanning `nodes` level-1 subtrees must cross.
int spanning_level(const ClusterSpec& net, int nodes) {
  if (nodes <= 1) return 1;
  for (int level = 2; level <= net.num_levels(); ++level) {
    if (net.subtree_capacity(level) / net.devices_per_node() >= nodes)
      return level;
  }
  return net.num_levels();
}

}  // namespace

ProfileStore synth_profiles(const DeviceSpec& hw, const ClusterSpec& net,
                            const GridSpec& grid) {
  ProfileStore store;
  const double f_max = hw.max_frequency();
  constexpr double kCommPowerFraction = 0.25;

  for (const Dtype dt : grid.dtypes) {
    const double peak = hw.peak_flops_for(dt);
    const double eb = dt == Dtype::FP16 ? 2.0 : dt == Dtype::FP8 ? 1.0 : 0.5;
    for (const double f : hw.frequency_options) {
      const double scale = f / f_max;
      const double power = hw.tdp_watts * scale * scale * scale;
      for (const OpKind op : {OpKind::Attention, OpKind::GEMM, OpKind::MoEGEMM}) {
        for (const double t : grid.context_knots) {
          for (const double k : grid.task_knots) {
            for (const double w : grid.width_knots) {
              const double flops = op_flops(op, t, k, w, grid.shape);
              const double bytes = op_bytes(op, t, k, w, grid.shape, eb);
              const double seconds =
                  std::max(flops / (peak * scale), bytes / hw.peak_mem_bandwidth);
              store.add_compute_entry(op, dt, f, t, k, w, seconds, seconds * power);
            }
          }
        }
      }
    }
  }

  for (const auto& [devices, nodes] : grid.collective_groups) {
    const int level = spanning_level(net, nodes);
    const LevelSpec& link = net.levels[size_t(level - 1)];
    const double hops = 2.0 * std::ceil(std::log2(double(devices)));
    const double lat = link.link_latency * hops;
    for (const CollectiveKind kind :
         {CollectiveKind::AllReduce, CollectiveKind::AllGather,
          CollectiveKind::ReduceScatter, CollectiveKind::AllToAll,
          CollectiveKind::P2P}) {
      if (kind == CollectiveKind::P2P && devices != 2) continue;
      const double factor = collective_algorithm_factor(kind, devices);
      for (const double payload : grid.payload_knots) {
        const double seconds = lat + payload * factor / link.link_bandwidth;
        const double joules =
            seconds * devices * kCommPowerFraction * hw.tdp_watts;
        store.add_collective_entry(kind, devices, nodes, payload, seconds, joules);
      }
    }
  }

  store.finalize();
  return store;
}

}  // namespace plansim
