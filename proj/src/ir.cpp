// Copyright 2026 The plansim Authors.
// SPDX-License-Identifier: Apache-2.0

#include "plansim/ir.hpp"

#include <algorithm>
#include <cctype>

#include "json.hpp"

namespace plansim {

namespace {

std::string lowered(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  return s;
}

int require_int(const nlohmann::json& doc, const std::vector<std::string>& keys) {
  for (const auto& k : keys) {
    if (doc.contains(k)) return doc.at(k).get<int>();
  }
  throw DataError("model config: missing required key \"" + keys.front() + "\"");
}

int optional_int(const nlohmann::json& doc, const std::vector<std::string>& keys,
                 int fallback) {
  for (const auto& k : keys) {
    if (doc.contains(k)) return doc.at(k).get<int>();
  }
  return fallback;
}

std::string optional_str(const nlohmann::json& doc,
                         const std::vector<std::string>& keys,
                         const std::string& fallback) {
  for (const auto& k : keys) {
    if (doc.contains(k) && doc.at(k).is_string())
      return doc.at(k).get<std::string>();
  }
  return fallback;
}

void check_positive(int v, const char* what) {
  if (v <= 0) throw DataError(std::string("model config: non-positive ") + what);
}

}  // namespace

DtypeFormat DtypeFormat::from_string(const std::string& s) {
  const std::string t = lowered(s);
  if (t == "fp16" || t == "float16" || t == "half" || t == "bfloat16" ||
      t == "bf16")
    return {Dtype::FP16, 2.0};
  if (t == "fp8" || t == "float8" || t == "float8_e4m3fn" || t == "e4m3")
    return {Dtype::FP8, 1.0};
  if (t == "int4" || t == "uint4" || t == "w4")
    return {Dtype::INT4, 0.5};
  throw DataError("unknown dtype: " + s);
}

const char* DtypeFormat::str() const {
  switch (name) {
    case Dtype::FP16: return "fp16";
    case Dtype::FP8:  return "fp8";
    case Dtype::INT4: return "int4";
  }
  return "?";
}

const char* cell_kind_str(CellKind k) {
  switch (k) {
    case CellKind::MHA:    return "MHA";
    case CellKind::GQA:    return "GQA";
    case CellKind::MLP:    return "MLP";
    case CellKind::SwiGLU: return "SwiGLU";
    case CellKind::MoE:    return "MoE";
  }
  return "?";
}

ModelSpec parse_model_config(const std::string& json_text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("model config: ") + e.what());
  }

  ModelSpec m;
  m.name = optional_str(doc, {"name", "model_name", "model_type"}, "model");
  m.num_layers = require_int(doc, {"num_hidden_layers", "num_layers"});
  m.hidden_size = require_int(doc, {"hidden_size"});
  m.num_attention_heads = require_int(doc, {"num_attention_heads"});
  m.intermediate_size = require_int(doc, {"intermediate_size"});
  m.vocab_size = require_int(doc, {"vocab_size"});
  m.num_kv_heads = optional_int(doc, {"num_key_value_heads", "num_kv_heads"},
                                m.num_attention_heads);
  m.head_dim = optional_int(doc, {"head_dim"},
                            m.num_attention_heads > 0
                                ? m.hidden_size / m.num_attention_heads
                                : 0);
  m.num_experts = optional_int(doc, {"num_local_experts", "num_experts"}, 0);
  m.experts_per_token =
      optional_int(doc, {"num_experts_per_tok", "experts_per_token"}, 0);

  const std::string wd = optional_str(doc, {"weight_dtype", "torch_dtype"}, "fp16");
  m.weight_dtype = DtypeFormat::from_string(wd);
  m.activation_dtype =
      DtypeFormat::from_string(optional_str(doc, {"activation_dtype"}, wd));
  m.kv_cache_dtype = DtypeFormat::from_string(optional_str(
      doc, {"kv_cache_dtype"}, m.activation_dtype.str()));
  m.ffn_activation = lowered(optional_str(doc, {"hidden_act", "hidden_activation"}, "silu"));

  if (m.num_layers < 0) throw DataError("model config: negative num_layers");
  check_positive(m.hidden_size, "hidden_size");
  check_positive(m.num_attention_heads, "num_attention_heads");
  check_positive(m.num_kv_heads, "num_key_value_heads");
  check_positive(m.head_dim, "head_dim");
  check_positive(m.intermediate_size, "intermediate_size");
  check_positive(m.vocab_size, "vocab_size");
  if (m.hidden_size != m.num_attention_heads * m.head_dim)
    throw DataError("model config: hidden_size must equal heads * head_dim");
  if (m.num_attention_heads % m.num_kv_heads != 0)
    throw DataError(
        "model config: num_attention_heads not divisible by num_key_value_heads");
  if (m.num_experts < 0 || m.experts_per_token < 0)
    throw DataError("model config: negative expert count");
  if ((m.num_experts == 0) != (m.experts_per_token == 0))
    throw DataError(
        "model config: num_local_experts and num_experts_per_tok must both be "
        "zero or both be positive");
  if (m.num_experts > 0 && m.experts_per_token > m.num_experts)
    throw DataError("model config: experts_per_token exceeds num_local_experts");
  return m;
}

ModelSpec parse_model_config_file(const std::string& path) {
  return parse_model_config(read_file(path));
}

namespace {

CellSpec make_attention_cell(const ModelSpec& m) {
  CellSpec c;
  c.kind = m.is_gqa() ? CellKind::GQA : CellKind::MHA;
  c.num_tasks = m.num_attention_heads;
  c.kv_group_fanin = m.num_attention_heads / m.num_kv_heads;
  c.tp_slices = m.num_attention_heads;
  c.head_dim = m.head_dim;
  c.kv_heads = m.num_kv_heads;
  // Q and O projections per head, K and V shared per kv group.
  c.task_width = m.head_dim * (2.0 + 2.0 / c.kv_group_fanin);
  const double wb = m.weight_dtype.bytes_per_element;
  c.qo_weight_bytes_per_task = 2.0 * m.hidden_size * m.head_dim * wb;
  c.kv_weight_bytes_per_kv_head = 2.0 * m.hidden_size * m.head_dim * wb;
  return c;
}

CellSpec make_ffn_cell(const ModelSpec& m) {
  CellSpec c;
  const double wb = m.weight_dtype.bytes_per_element;
  if (m.is_moe()) {
    c.kind = CellKind::MoE;
    c.num_tasks = m.num_experts;
    c.tp_slices = m.num_attention_heads;
    c.num_experts = m.num_experts;
    c.experts_per_token = m.experts_per_token;
    c.task_width = 3.0 * m.intermediate_size;  // gate, up, down per expert
    c.qo_weight_bytes_per_task = m.hidden_size * c.task_width * wb;
    return c;
  }
  int mats = 0;
  if (m.ffn_activation == "silu" || m.ffn_activation == "swiglu" ||
      m.ffn_activation == "silu_and_mul") {
    c.kind = CellKind::SwiGLU;
    mats = 3;
  } else if (m.ffn_activation == "gelu" || m.ffn_activation == "relu" ||
             m.ffn_activation == "gelu_new" ||
             m.ffn_activation == "gelu_pytorch_tanh") {
    c.kind = CellKind::MLP;
    mats = 2;
  } else {
    throw DataError("no registered cell for hidden_act \"" + m.ffn_activation +
                    "\"");
  }
  // Partition granularity matches attention so divisibility constraints line
  // up across the block.
  c.num_tasks = m.num_attention_heads;
  c.tp_slices = m.num_attention_heads;
  c.task_width = double(mats) * m.intermediate_size / m.num_attention_heads;
  c.qo_weight_bytes_per_task = m.hidden_size * c.task_width * wb;
  return c;
}

}  // namespace

BlockSpec to_transformer_ir(const ModelSpec& model) {
  BlockSpec block;
  block.cells.push_back(make_attention_cell(model));
  block.cells.push_back(make_ffn_cell(model));
  block.repeat_count = model.num_layers;
  return block;
}

double embedding_weight_bytes(const ModelSpec& model) {
  return double(model.vocab_size) * model.hidden_size *
         model.weight_dtype.bytes_per_element;
}

double model_weight_bytes(const ModelSpec& model, bool include_embedding) {
  double per_layer = 0.0;
  if (model.num_layers > 0) {
    const BlockSpec block = to_transformer_ir(model);
    for (const auto& cell : block.cells) per_layer += cell.weight_bytes();
  }
  double total = per_layer * model.num_layers;
  if (include_embedding) total += embedding_weight_bytes(model);
  return total;
}

}  // namespace plansim
