// Copyright 2026 The plansim Authors.
// SPDX-License-Identifier: Apache-2.0

#include "plansim/traces.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "json.hpp"

namespace plansim {

namespace {

int64_t json_int(const nlohmann::json& rec, const std::vector<std::string>& keys,
                 int64_t fallback, bool required, size_t lineno) {
  for (const auto& k : keys) {
    if (!rec.contains(k)) continue;
    const auto& v = rec.at(k);
    if (v.is_string()) return std::stoll(v.get<std::string>());
    return v.get<int64_t>();
  }
  if (required)
    throw DataError("trace line " + std::to_string(lineno) + ": missing " + keys.front());
  return fallback;
}

double json_double(const nlohmann::json& rec, const std::vector<std::string>& keys,
                   double fallback) {
  for (const auto& k : keys) {
    if (rec.contains(k)) return rec.at(k).get<double>();
  }
  return fallback;
}

}  // namespace

Trace load_trace(const std::string& jsonl_text, const std::string& source_name) {
  Trace trace;
  trace.metadata.name = source_name.empty() ? "trace" : source_name;
  trace.metadata.source = source_name;

  std::istringstream in(jsonl_text);
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json rec;
    try {
      rec = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw DataError("trace line " + std::to_string(lineno) + ": " + e.what());
    }
    Request r;
    r.id = json_int(rec, {"id"}, int64_t(trace.requests.size()), false, lineno);
    r.context_len = json_int(rec, {"context_len", "context_tokens", "ContextTokens"},
                             0, true, lineno);
    r.gen_len = json_int(rec, {"gen_len", "generated_tokens", "GeneratedTokens"},
                         0, true, lineno);
    r.arrival = json_double(rec, {"arrival_s", "timestamp", "TIMESTAMP"}, 0.0);
    if (r.context_len < 1 || r.gen_len < 1)
      throw DataError("trace line " + std::to_string(lineno) +
                      ": lengths must be >= 1");
    if (r.arrival < 0)
      throw DataError("trace line " + std::to_string(lineno) + ": negative arrival");
    trace.requests.push_back(r);
  }
  std::stable_sort(trace.requests.begin(), trace.requests.end(),
                   [](const Request& a, const Request& b) { return a.arrival < b.arrival; });
  return trace;
}

Trace load_trace_file(const std::string& path) {
  return load_trace(read_file(path), path);
}

std::string serialize_trace(const Trace& trace) {
  std::ostringstream out;
  for (const auto& r : trace.requests) {
    nlohmann::ordered_json rec;
    rec["id"] = r.id;
    rec["context_len"] = r.context_len;
    rec["gen_len"] = r.gen_len;
    rec["arrival_s"] = r.arrival;
    out << rec.dump() << "\n";
  }
  return out.str();
}

namespace {

// Hand-rolled draws on top of the standardized mt19937_64 stream keep output
// byte-identical across standard library implementations.
double uniform01(std::mt19937_64& rng) {
  return (double(rng() >> 11) + 1.0) * 0x1p-53;  // in (0, 1]
}

double normal(std::mt19937_64& rng, double mean, double stddev) {
  constexpr double kTwoPi = 6.283185307179586476925286766559;
  const double u1 = uniform01(rng);
  const double u2 = uniform01(rng);
  const double z = std::sqrt(-2.0 * std::log(u1)) * std::cos(kTwoPi * u2);
  return mean + stddev * z;
}

int64_t truncated_length(std::mt19937_64& rng, const LengthDistribution& dist) {
  const double x = normal(rng, dist.mean, dist.stddev);
  return std::max<int64_t>(1, llround(x));
}

}  // namespace

Trace synth_trace(const LengthDistribution& ctx_dist,
                  const LengthDistribution& gen_dist, double rate, int64_t n,
                  uint64_t seed) {
  if (rate <= 0) throw DataError("synth_trace: rate must be > 0");
  if (n < 0) throw DataError("synth_trace: negative request count");

  Trace trace;
  trace.metadata.name = "synthetic";
  trace.metadata.seed = seed;
  trace.metadata.source = "truncated-normal lengths, poisson arrivals";

  std::mt19937_64 rng(seed);
  double clock = 0.0;
  for (int64_t i = 0; i < n; ++i) {
    Request r;
    r.id = i;
    clock += -std::log(uniform01(rng)) / rate;
    r.arrival = clock;
    r.context_len = truncated_length(rng, ctx_dist);
    r.gen_len = truncated_length(rng, gen_dist);
    trace.requests.push_back(r);
  }
  return trace;
}

}  // namespace plansim
