// Copyright 2026 The plansim Authors.
// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <random>

#include "doctest.h"
#include "plansim/ir.hpp"
#include "support/fixtures.hpp"

using namespace plansim;

namespace {

const char* kLlama70bStyle = R"({
  "name": "llama-70b-style",
  "num_hidden_layers": 80,
  "hidden_size": 8192,
  "num_attention_heads": 64,
  "num_key_value_heads": 8,
  "intermediate_size": 28672,
  "vocab_size": 128256,
  "torch_dtype": "fp16",
  "hidden_act": "silu",
  "rope_theta": 500000.0
})";

}  // namespace

TEST_CASE("parse llama-style config infers GQA") {
  const ModelSpec m = parse_model_config(kLlama70bStyle);
  CHECK(m.num_layers == 80);
  CHECK(m.num_attention_heads == 64);
  CHECK(m.num_kv_heads == 8);
  CHECK(m.head_dim == 128);
  CHECK(m.is_gqa());
  CHECK_FALSE(m.is_moe());
  CHECK(m.weight_dtype.bytes_per_element == 2.0);
  CHECK(m.kv_cache_dtype.name == Dtype::FP16);  // defaults to activation dtype
}

TEST_CASE("kv heads equal to attention heads means MHA") {
  ModelSpec m = parse_model_config(R"({
    "num_hidden_layers": 2, "hidden_size": 64, "num_attention_heads": 4,
    "num_key_value_heads": 4, "intermediate_size": 128, "vocab_size": 100,
    "hidden_act": "gelu"})");
  CHECK_FALSE(m.is_gqa());
  const BlockSpec b = to_transformer_ir(m);
  CHECK(b.cells[0].kind == CellKind::MHA);
  CHECK(b.cells[1].kind == CellKind::MLP);
  CHECK(b.repeat_count == 2);
}

TEST_CASE("mixtral-style config infers MoE") {
  const ModelSpec m = parse_model_config(R"({
    "name": "mixtral-8x22b-style",
    "num_hidden_layers": 56, "hidden_size": 6144, "num_attention_heads": 48,
    "num_key_value_heads": 8, "intermediate_size": 16384, "vocab_size": 32768,
    "num_local_experts": 8, "num_experts_per_tok": 2, "hidden_act": "silu"})");
  CHECK(m.is_moe());
  const BlockSpec b = to_transformer_ir(m);
  REQUIRE(b.cells.size() == 2);
  CHECK(b.cells[0].kind == CellKind::GQA);
  CHECK(b.cells[1].kind == CellKind::MoE);
  CHECK(b.cells[1].num_tasks == 8);
  CHECK(b.cells[1].experts_per_token == 2);
  CHECK(b.repeat_count == 56);
}

TEST_CASE("parse errors") {
  CHECK_THROWS_AS(parse_model_config(R"({"hidden_size": 64})"), DataError);
  // heads not divisible by kv heads
  CHECK_THROWS_AS(parse_model_config(R"({
    "num_hidden_layers": 1, "hidden_size": 64, "num_attention_heads": 4,
    "num_key_value_heads": 3, "intermediate_size": 128, "vocab_size": 100})"),
                  DataError);
  CHECK_THROWS_AS(parse_model_config(R"({
    "num_hidden_layers": 1, "hidden_size": 0, "num_attention_heads": 4,
    "intermediate_size": 128, "vocab_size": 100})"),
                  DataError);
  // experts fields must agree
  CHECK_THROWS_AS(parse_model_config(R"({
    "num_hidden_layers": 1, "hidden_size": 64, "num_attention_heads": 4,
    "intermediate_size": 128, "vocab_size": 100, "num_local_experts": 4})"),
                  DataError);
  // unregistered feedforward cell
  ModelSpec mamba = testing::make_dense_model(2, 4, 4, 16, 128, 100, "mamba");
  CHECK_THROWS_AS(to_transformer_ir(mamba), DataError);
}

TEST_CASE("kv cache dtype can be quantized independently") {
  const ModelSpec m = parse_model_config(R"({
    "num_hidden_layers": 2, "hidden_size": 64, "num_attention_heads": 4,
    "intermediate_size": 128, "vocab_size": 100, "torch_dtype": "float16",
    "kv_cache_dtype": "fp8"})");
  CHECK(m.weight_dtype.name == Dtype::FP16);
  CHECK(m.activation_dtype.name == Dtype::FP16);
  CHECK(m.kv_cache_dtype.name == Dtype::FP8);
  CHECK(m.kv_cache_dtype.bytes_per_element == 1.0);
}

TEST_CASE("unknown keys are ignored") {
  CHECK_NOTHROW(parse_model_config(R"({
    "num_hidden_layers": 1, "hidden_size": 64, "num_attention_heads": 4,
    "intermediate_size": 128, "vocab_size": 100, "rope_scaling": {"type": "x"},
    "tie_word_embeddings": true})"));
}

TEST_CASE("IR structure for a dense GQA model") {
  const ModelSpec m = parse_model_config(kLlama70bStyle);
  const BlockSpec b = to_transformer_ir(m);
  REQUIRE(b.cells.size() == 2);
  CHECK(b.cells[0].kind == CellKind::GQA);
  CHECK(b.cells[0].num_tasks == 64);
  CHECK(b.cells[0].kv_group_fanin == 8);
  CHECK(b.cells[1].kind == CellKind::SwiGLU);
  CHECK(b.cells[1].num_tasks == 64);  // partitions match attention granularity
  CHECK(b.repeat_count == 80);

  // Flattening the block reproduces one attention and one feedforward cell
  // per layer.
  int attn = 0, ffn = 0;
  for (int rep = 0; rep < b.repeat_count; ++rep) {
    for (const auto& c : b.cells) {
      if (c.is_attention()) ++attn;
      else ++ffn;
    }
  }
  CHECK(attn == m.num_layers);
  CHECK(ffn == m.num_layers);
}

TEST_CASE("weight bytes match hand-counted toy model") {
  // H=64, 4 heads (d=16), kv=2, I=128, V=100, 2 layers, fp16.
  const ModelSpec m = testing::make_dense_model(2, 4, 2, 16, 128, 100);
  // Q: 64*64, K: 64*32, V: 64*32, O: 64*64 -> 12288 params
  // SwiGLU: 3*64*128 = 24576 params
  // embedding: 100*64 = 6400 params
  const double expected_params = 2 * (12288 + 24576) + 6400;
  CHECK(model_weight_bytes(m) == expected_params * 2.0);
  CHECK(model_weight_bytes(m, false) == (expected_params - 6400) * 2.0);
}

TEST_CASE("weight bytes scale with dtype") {
  ModelSpec m = testing::make_dense_model(2, 4, 2, 16, 128, 100);
  const double fp16_bytes = model_weight_bytes(m);
  m.weight_dtype = DtypeFormat::from_string("fp8");
  CHECK(model_weight_bytes(m) == doctest::Approx(fp16_bytes / 2).epsilon(1e-12));
  m.weight_dtype = DtypeFormat::from_string("int4");
  CHECK(model_weight_bytes(m) == doctest::Approx(fp16_bytes / 4).epsilon(1e-12));
}

TEST_CASE("zero-layer model keeps only embedding bytes") {
  ModelSpec m = testing::make_dense_model(1, 4, 2, 16, 128, 100);
  m.num_layers = 0;
  CHECK(model_weight_bytes(m) == 100 * 64 * 2.0);
}

TEST_CASE("weight bytes are linear in bytes_per_element") {
  std::mt19937 rng(42);
  for (int i = 0; i < 20; ++i) {
    const int heads = 1 << (rng() % 4);
    const int kv = std::max(1, heads >> (rng() % 2));
    const ModelSpec m = testing::make_dense_model(
        1 + int(rng() % 8), heads, kv, 8 << (rng() % 3), int(64 + rng() % 512),
        int(50 + rng() % 1000));
    ModelSpec half = m;
    half.weight_dtype = DtypeFormat::from_string("fp8");
    CHECK(model_weight_bytes(half) * 2.0 ==
          doctest::Approx(model_weight_bytes(m)).epsilon(1e-12));
  }
}

TEST_CASE("moe weight accounting") {
  // 8 experts, each a SwiGLU of H=64 x I=32: 3*64*32 = 6144 params per expert.
  const ModelSpec m = testing::make_moe_model(1, 4, 4, 16, 32, 8, 2, 100);
  const BlockSpec b = to_transformer_ir(m);
  CHECK(b.cells[1].weight_bytes() == 8 * 6144 * 2.0);
}
