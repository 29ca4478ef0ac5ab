// Copyright 2026 The plansim Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <map>
#include <span>
#include <string>
#include <vector>

#include "plansim/ir.hpp"

namespace plansim {

// One level of the tree interconnect. Level 1 is leaf-adjacent; bandwidth and
// latency are uniform within a level.
struct LevelSpec {
  int fan_out = 1;
  double link_bandwidth = 0.0;  // bytes/s
  double link_latency = 0.0;    // seconds
};

struct DeviceSpec {
  std::string name;
  double memory_capacity = 0.0;  // bytes
  std::map<Dtype, double> peak_flops;
  double peak_mem_bandwidth = 0.0;  // bytes/s
  std::vector<double> frequency_options;  // GHz, ascending
  double tdp_watts = 700.0;

  double max_frequency() const { return frequency_options.back(); }
  double peak_flops_for(Dtype dt) const;
};

struct ClusterSpec {
  std::vector<LevelSpec> levels;  // leaf-first
  DeviceSpec device;

  int total_devices() const;
  // A "node" is a level-1 subtree.
  int devices_per_node() const { return levels.front().fan_out; }
  int num_nodes() const { return total_devices() / devices_per_node(); }
  // Leaf count of a level-l subtree; level 0 is a single device.
  int subtree_capacity(int level) const;
  int num_levels() const { return int(levels.size()); }
};

ClusterSpec parse_cluster_spec(const std::string& json_text);
ClusterSpec parse_cluster_spec_file(const std::string& path);

// Logical layout of a parallel scheme: model replicas, pipeline stages per
// replica, devices per stage. Slot j within a stage is the tensor/expert
// shard index.
struct SchemeShape {
  int model_dp = 1;
  int num_stages = 1;
  int stage_devices = 1;

  int total() const { return model_dp * num_stages * stage_devices; }
};

// Bijection from logical (replica, stage, slot) roles to physical device ids.
struct DeviceAssignment {
  SchemeShape shape;
  std::vector<int> phys;  // indexed by ((r * stages) + s) * stage_devices + slot

  int device_of(int replica, int stage, int slot) const;
  std::vector<int> stage_devices_of(int replica, int stage) const;
};

// Maps logical devices bottom-up onto the tree: each stage is packed into the
// smallest free subtree that holds it, lowest index first, so groups with the
// heaviest communication land on the highest-bandwidth links.
DeviceAssignment map_devices(const SchemeShape& shape, const ClusterSpec& cluster);

struct SpanStats {
  int num_devices = 0;
  int num_nodes_spanned = 0;
  int highest_level_used = 0;
};

SpanStats collective_span(const ClusterSpec& cluster, std::span<const int> device_ids);

}  // namespace plansim
