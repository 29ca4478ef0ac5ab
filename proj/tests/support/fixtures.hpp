// Copyright 2026 The plansim Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <fstream>
#include <random>
#include <string>

#include "plansim/cluster.hpp"
#include "plansim/cost.hpp"
#include "plansim/ir.hpp"
#include "plansim/traces.hpp"

namespace plansim::testing {

inline ModelSpec make_dense_model(int layers, int heads, int kv_heads,
                                  int head_dim, int intermediate,
                                  int vocab = 32000,
                                  const std::string& ffn = "silu") {
  ModelSpec m;
  m.name = "fixture";
  m.num_layers = layers;
  m.num_attention_heads = heads;
  m.num_kv_heads = kv_heads;
  m.head_dim = head_dim;
  m.hidden_size = heads * head_dim;
  m.intermediate_size = intermediate;
  m.vocab_size = vocab;
  m.weight_dtype = DtypeFormat::from_string("fp16");
  m.activation_dtype = m.weight_dtype;
  m.kv_cache_dtype = m.weight_dtype;
  m.ffn_activation = ffn;
  return m;
}

inline ModelSpec make_moe_model(int layers, int heads, int kv_heads, int head_dim,
                                int expert_intermediate, int num_experts,
                                int experts_per_token, int vocab = 32000) {
  ModelSpec m = make_dense_model(layers, heads, kv_heads, head_dim,
                                 expert_intermediate, vocab);
  m.num_experts = num_experts;
  m.experts_per_token = experts_per_token;
  return m;
}

struct LevelInit {
  int fan_out;
  double bandwidth;
  double latency;
};

inline ClusterSpec make_cluster(std::vector<LevelInit> levels, double mem_bytes,
                                double peak_fp16, double mem_bw,
                                std::vector<double> freqs = {2.0},
                                double tdp = 700.0) {
  ClusterSpec c;
  for (const auto& l : levels)
    c.levels.push_back({l.fan_out, l.bandwidth, l.latency});
  c.device.name = "fixture-gpu";
  c.device.memory_capacity = mem_bytes;
  c.device.peak_flops[Dtype::FP16] = peak_fp16;
  c.device.peak_flops[Dtype::FP8] = 2.0 * peak_fp16;
  c.device.peak_mem_bandwidth = mem_bw;
  c.device.frequency_options = std::move(freqs);
  c.device.tdp_watts = tdp;
  return c;
}

inline Trace make_trace(std::vector<Request> requests) {
  Trace t;
  for (size_t i = 0; i < requests.size(); ++i)
    if (requests[i].id == 0 && i > 0) requests[i].id = int64_t(i);
  t.requests = std::move(requests);
  std::stable_sort(t.requests.begin(), t.requests.end(),
                   [](const Request& a, const Request& b) { return a.arrival < b.arrival; });
  return t;
}

// n identical requests arriving at t = 0.
inline Trace burst_trace(int64_t n, int64_t ctx, int64_t gen) {
  Trace t;
  for (int64_t i = 0; i < n; ++i) t.requests.push_back({i, ctx, gen, 0.0});
  return t;
}

class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("plansim_" + tag + "_" + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  std::string file(const std::string& name) const { return (path_ / name).string(); }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

inline void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
}

inline std::string model_json(const ModelSpec& m) {
  std::string moe;
  if (m.num_experts > 0) {
    moe = ",\"num_local_experts\":" + std::to_string(m.num_experts) +
          ",\"num_experts_per_tok\":" + std::to_string(m.experts_per_token);
  }
  return "{\"name\":\"" + m.name + "\"," +
         "\"num_hidden_layers\":" + std::to_string(m.num_layers) + "," +
         "\"hidden_size\":" + std::to_string(m.hidden_size) + "," +
         "\"num_attention_heads\":" + std::to_string(m.num_attention_heads) + "," +
         "\"num_key_value_heads\":" + std::to_string(m.num_kv_heads) + "," +
         "\"intermediate_size\":" + std::to_string(m.intermediate_size) + "," +
         "\"vocab_size\":" + std::to_string(m.vocab_size) + "," +
         "\"torch_dtype\":\"" + m.weight_dtype.str() + "\"," +
         "\"hidden_act\":\"" + m.ffn_activation + "\"" + moe + "}";
}

inline std::string cluster_json(const ClusterSpec& c) {
  std::string levels;
  for (size_t i = 0; i < c.levels.size(); ++i) {
    if (i) levels += ",";
    levels += "{\"fan_out\":" + std::to_string(c.levels[i].fan_out) +
              ",\"link_bandwidth_bytes_per_s\":" + std::to_string(c.levels[i].link_bandwidth) +
              ",\"link_latency_s\":" + std::to_string(c.levels[i].link_latency) + "}";
  }
  std::string freqs;
  for (size_t i = 0; i < c.device.frequency_options.size(); ++i) {
    if (i) freqs += ",";
    freqs += std::to_string(c.device.frequency_options[i]);
  }
  std::string flops;
  for (auto it = c.device.peak_flops.begin(); it != c.device.peak_flops.end(); ++it) {
    if (it != c.device.peak_flops.begin()) flops += ",";
    flops += "\"" + std::string(DtypeFormat{it->first, 0}.str()) +
             "\":" + std::to_string(it->second);
  }
  return "{\"levels\":[" + levels + "],\"device\":{" +
         "\"name\":\"" + c.device.name + "\"," +
         "\"memory_capacity_bytes\":" + std::to_string(c.device.memory_capacity) + "," +
         "\"peak_flops\":{" + flops + "}," +
         "\"peak_mem_bandwidth_bytes_per_s\":" + std::to_string(c.device.peak_mem_bandwidth) + "," +
         "\"frequency_options_ghz\":[" + freqs + "]," +
         "\"tdp_watts\":" + std::to_string(c.device.tdp_watts) + "}}";
}

}  // namespace plansim::testing
