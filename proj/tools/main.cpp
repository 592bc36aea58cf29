// Copyright 2026 The narrablend Authors
// SPDX-License-Identifier: Apache-2.0

#include "cli.hpp"

int main(int argc, char** argv) { return nb::cli::run(argc, argv); }
