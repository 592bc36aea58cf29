// Copyright 2026 The narrablend Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <string_view>

#include "nb/embedding.hpp"

namespace nb {

// Semantic action representation: the boundary blend factor is scaled by
// (1 - S_A), S_A the cosine between two action-space prompt embeddings, so
// similar actions blend less.

enum class SarMode {
  kWithinPair,    // scene vs action prompt of the current segment
  kCrossSegment,  // previous segment's action vs current action
};

const char* to_string(SarMode mode) noexcept;
SarMode sar_mode_from_string(std::string_view name);

struct SarConfig {
  bool enabled = true;
  SarMode mode = SarMode::kWithinPair;
  double clamp_max = 0.5;

  void validate() const;
};

struct SarRecord {
  double similarity = 0;  // S_A
  double alpha_in = 0;
  double alpha_out = 0;
  SarMode mode = SarMode::kWithinPair;
  std::string compared_first;   // prompt identifiers, e.g. "2.scene"
  std::string compared_second;
};

/// a_i = f_A(P_i); delegates to the provider.
EmbeddingVector action_embedding(const EmbeddingProvider& provider, std::string_view prompt);

/// alpha' = clamp(alpha * (1 - S_A), 0, clamp_max). When 1 - S_A <= 1e-12
/// the result is exactly 0.
SarRecord modulate(double alpha, const EmbeddingVector& a_prev, const EmbeddingVector& a_curr,
                   const SarConfig& cfg);

/// Same rule from a precomputed similarity.
double modulated_alpha(double alpha, double similarity, double clamp_max);

}  // namespace nb
