// Copyright 2026 The narrablend Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <vector>

namespace nb::cli {

// Exit codes are a stable contract.
inline constexpr int kOk = 0;
inline constexpr int kInvalid = 1;  // validation or configuration
inline constexpr int kIo = 2;
inline constexpr int kRuntime = 3;

/// Entry point of the `nb` tool; returns the process exit code.
int run(int argc, char** argv);
int run(const std::vector<std::string>& args);

}  // namespace nb::cli
