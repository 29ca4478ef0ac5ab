// Copyright 2026 The plansim Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <vector>

#include "plansim/common.hpp"

namespace plansim {

enum class Dtype { FP16, FP8, INT4 };

struct DtypeFormat {
  Dtype name = Dtype::FP16;
  double bytes_per_element = 2.0;

  static DtypeFormat from_string(const std::string& s);
  const char* str() const;
};

// Model hyperparameters read from the configuration document.
struct ModelSpec {
  std::string name;
  int num_layers = 0;
  int hidden_size = 0;
  int num_attention_heads = 0;
  int num_kv_heads = 0;
  int head_dim = 0;
  int intermediate_size = 0;
  int vocab_size = 0;
  int num_experts = 0;         // 0 for dense models
  int experts_per_token = 0;   // 0 for dense models
  DtypeFormat weight_dtype;
  DtypeFormat activation_dtype;
  DtypeFormat kv_cache_dtype;
  std::string ffn_activation;  // "silu" -> SwiGLU, "gelu"/"relu" -> MLP

  bool is_moe() const { return num_experts > 0; }
  bool is_gqa() const { return num_kv_heads < num_attention_heads; }
};

enum class CellKind { MHA, GQA, MLP, SwiGLU, MoE };

const char* cell_kind_str(CellKind k);

// One key transformer operation and its parallelizable tasks.
//
// Tasks are attention heads, experts, or feedforward partitions. The shape
// descriptor below is everything downstream consumers need: per-task weight
// bytes for the memory ledger, and the (tasks, width) coordinates the cost
// tables are queried with. `task_width` is the effective per-task GEMM output
// width, so dense projection FLOPs per token are 2 * hidden * task_width for
// every cell kind.
struct CellSpec {
  CellKind kind = CellKind::MHA;
  int num_tasks = 0;
  int kv_group_fanin = 1;  // query heads per kv head (GQA), 1 otherwise
  int tp_slices = 0;       // tensor-parallel partition granularity
  double task_width = 0.0;
  double head_dim = 0.0;   // attention only, drives the context-length term
  int kv_heads = 0;        // attention only

  // Weight accounting, one model layer. Attention splits per-query-head
  // projection bytes from the shared kv projections so sharding with kv
  // replication stays exact.
  double qo_weight_bytes_per_task = 0.0;
  double kv_weight_bytes_per_kv_head = 0.0;

  int num_experts = 0;
  int experts_per_token = 0;

  double weight_bytes() const {
    return num_tasks * qo_weight_bytes_per_task +
           kv_heads * kv_weight_bytes_per_kv_head;
  }
  bool is_attention() const {
    return kind == CellKind::MHA || kind == CellKind::GQA;
  }
};

// The minimal non-repeating cell sequence, repeated `repeat_count` times.
struct BlockSpec {
  std::vector<CellSpec> cells;
  int repeat_count = 0;
};

ModelSpec parse_model_config(const std::string& json_text);
ModelSpec parse_model_config_file(const std::string& path);

BlockSpec to_transformer_ir(const ModelSpec& model);

// Total parameter bytes. Embedding/head bytes (one tied vocab x hidden
// matrix) are included unless disabled.
double model_weight_bytes(const ModelSpec& model, bool include_embedding = true);
double embedding_weight_bytes(const ModelSpec& model);

}  // namespace plansim
