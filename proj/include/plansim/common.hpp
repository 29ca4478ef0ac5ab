// Copyright 2026 The plansim Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace plansim {

// Input files or profile tables that fail to parse or validate.
struct DataError : std::runtime_error {
  explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

// The model cannot be served on the cluster under any enumerated plan.
struct InfeasibleError : std::runtime_error {
  explicit InfeasibleError(const std::string& msg) : std::runtime_error(msg) {}
};

// Divisors of n in ascending order. n >= 1.
std::vector<int> divisors(int n);

std::string read_file(const std::string& path);

// Writes the whole file in one shot so a failed run never leaves a
// truncated output behind.
void write_file(const std::string& path, const std::string& contents);

}  // namespace plansim
