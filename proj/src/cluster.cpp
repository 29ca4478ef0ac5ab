// Copyright 2026 The plansim Authors.
// SPDX-License-Identifier: Apache-2.0

#include "plansim/cluster.hpp"

#include <algorithm>
#include <iostream>
#include <set>

#include "json.hpp"

namespace plansim {

double DeviceSpec::peak_flops_for(Dtype dt) const {
  auto it = peak_flops.find(dt);
  if (it == peak_flops.end())
    throw DataError(std::string("device has no peak_flops entry for dtype ") +
                    DtypeFormat{dt, 0}.str());
  return it->second;
}

int ClusterSpec::total_devices() const {
  int n = 1;
  for (const auto& l : levels) n *= l.fan_out;
  return n;
}

int ClusterSpec::subtree_capacity(int level) const {
  int n = 1;
  for (int i = 0; i < level && i < int(levels.size()); ++i) n *= levels[i].fan_out;
  return n;
}

ClusterSpec parse_cluster_spec(const std::string& json_text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("cluster spec: ") + e.what());
  }

  ClusterSpec c;
  if (!doc.contains("levels") || !doc["levels"].is_array() || doc["levels"].empty())
    throw DataError("cluster spec: missing levels array");
  for (const auto& l : doc["levels"]) {
    LevelSpec lv;
    lv.fan_out = l.at("fan_out").get<int>();
    lv.link_bandwidth = l.at("link_bandwidth_bytes_per_s").get<double>();
    lv.link_latency = l.value("link_latency_s", 0.0);
    if (lv.fan_out < 1) throw DataError("cluster spec: fan_out must be >= 1");
    if (lv.link_bandwidth <= 0) throw DataError("cluster spec: bandwidth must be > 0");
    if (lv.link_latency < 0) throw DataError("cluster spec: negative latency");
    c.levels.push_back(lv);
  }
  if (c.total_devices() < 1) throw DataError("cluster spec: zero devices");

  if (!doc.contains("device")) throw DataError("cluster spec: missing device");
  const auto& d = doc["device"];
  c.device.name = d.value("name", "device");
  c.device.memory_capacity = d.at("memory_capacity_bytes").get<double>();
  c.device.peak_mem_bandwidth = d.at("peak_mem_bandwidth_bytes_per_s").get<double>();
  c.device.tdp_watts = d.value("tdp_watts", 700.0);
  if (c.device.memory_capacity <= 0)
    throw DataError("cluster spec: memory capacity must be > 0");
  if (c.device.peak_mem_bandwidth <= 0)
    throw DataError("cluster spec: memory bandwidth must be > 0");

  if (!d.contains("peak_flops") || d["peak_flops"].empty())
    throw DataError("cluster spec: missing peak_flops table");
  for (auto it = d["peak_flops"].begin(); it != d["peak_flops"].end(); ++it) {
    const Dtype dt = DtypeFormat::from_string(it.key()).name;
    const double v = it.value().get<double>();
    if (v <= 0) throw DataError("cluster spec: peak_flops must be > 0");
    c.device.peak_flops[dt] = v;
  }

  if (d.contains("frequency_options_ghz")) {
    for (const auto& f : d["frequency_options_ghz"])
      c.device.frequency_options.push_back(f.get<double>());
  }
  if (c.device.frequency_options.empty())
    c.device.frequency_options.push_back(d.value("frequency_ghz", 1.0));
  std::sort(c.device.frequency_options.begin(), c.device.frequency_options.end());
  if (c.device.frequency_options.front() <= 0)
    throw DataError("cluster spec: frequencies must be > 0");

  for (size_t i = 1; i < c.levels.size(); ++i) {
    if (c.levels[i].link_bandwidth > c.levels[i - 1].link_bandwidth) {
      std::cerr << "warning: cluster level " << (i + 1)
                << " has higher bandwidth than level " << i
                << "; expected non-increasing bandwidth up the tree\n";
    }
  }
  return c;
}

ClusterSpec parse_cluster_spec_file(const std::string& path) {
  return parse_cluster_spec(read_file(path));
}

int DeviceAssignment::device_of(int replica, int stage, int slot) const {
  if (replica < 0 || replica >= shape.model_dp || stage < 0 ||
      stage >= shape.num_stages || slot < 0 || slot >= shape.stage_devices)
    throw DataError("device assignment: role out of range");
  return phys[size_t((replica * shape.num_stages + stage) * shape.stage_devices + slot)];
}

std::vector<int> DeviceAssignment::stage_devices_of(int replica, int stage) const {
  std::vector<int> out(size_t(shape.stage_devices));
  for (int j = 0; j < shape.stage_devices; ++j) out[size_t(j)] = device_of(replica, stage, j);
  return out;
}

namespace {

// Picks `size` free devices, preferring the smallest subtree with enough free
// capacity; falls back to the lowest free indices when fragmented.
std::vector<int> allocate_block(int size, std::vector<bool>& taken,
                                const ClusterSpec& cluster) {
  const int n = cluster.total_devices();
  for (int level = 0; level <= cluster.num_levels(); ++level) {
    const int cap = cluster.subtree_capacity(level);
    if (cap < size) continue;
    for (int base = 0; base + cap <= n; base += cap) {
      int free_count = 0;
      for (int i = base; i < base + cap; ++i)
        if (!taken[size_t(i)]) ++free_count;
      if (free_count < size) continue;
      std::vector<int> ids;
      for (int i = base; i < base + cap && int(ids.size()) < size; ++i) {
        if (!taken[size_t(i)]) {
          taken[size_t(i)] = true;
          ids.push_back(i);
        }
      }
      return ids;
    }
  }
  std::vector<int> ids;
  for (int i = 0; i < n && int(ids.size()) < size; ++i) {
    if (!taken[size_t(i)]) {
      taken[size_t(i)] = true;
      ids.push_back(i);
    }
  }
  return ids;
}

}  // namespace

DeviceAssignment map_devices(const SchemeShape& shape, const ClusterSpec& cluster) {
  const int n = cluster.total_devices();
  if (shape.total() != n)
    throw DataError("device mapper: scheme uses " + std::to_string(shape.total()) +
                    " logical devices but the cluster has " + std::to_string(n));

  DeviceAssignment a;
  a.shape = shape;
  a.phys.resize(size_t(n));
  std::vector<bool> taken(size_t(n), false);
  for (int r = 0; r < shape.model_dp; ++r) {
    for (int s = 0; s < shape.num_stages; ++s) {
      const std::vector<int> ids = allocate_block(shape.stage_devices, taken, cluster);
      for (int j = 0; j < shape.stage_devices; ++j)
        a.phys[size_t((r * shape.num_stages + s) * shape.stage_devices + j)] = ids[size_t(j)];
    }
  }
  return a;
}

SpanStats collective_span(const ClusterSpec& cluster, std::span<const int> device_ids) {
  if (device_ids.empty()) throw DataError("collective_span: empty group");
  const int n = cluster.total_devices();
  SpanStats s;
  s.num_devices = int(device_ids.size());

  std::set<int> nodes;
  const int per_node = cluster.devices_per_node();
  for (int id : device_ids) {
    if (id < 0 || id >= n) throw DataError("collective_span: device id out of range");
    nodes.insert(id / per_node);
  }
  s.num_nodes_spanned = int(nodes.size());

  for (int level = 0; level <= cluster.num_levels(); ++level) {
    const int cap = cluster.subtree_capacity(level);
    bool same = true;
    const int first = device_ids.front() / cap;
    for (int id : device_ids)
      if (id / cap != first) { same = false; break; }
    if (same) {
      s.highest_level_used = level;
      return s;
    }
  }
  s.highest_level_used = cluster.num_levels();
  return s;
}

}  // namespace plansim
