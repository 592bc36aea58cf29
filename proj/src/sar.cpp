// Copyright 2026 The narrablend Authors
// SPDX-License-Identifier: Apache-2.0

#include "nb/sar.hpp"

#include <algorithm>

#include "nb/error.hpp"

namespace nb {

namespace {
constexpr double kSimilarityOneTolerance = 1e-12;
}

const char* to_string(SarMode mode) noexcept {
  return mode == SarMode::kWithinPair ? "within_pair" : "cross_segment";
}

SarMode sar_mode_from_string(std::string_view name) {
  if (name == "within_pair") return SarMode::kWithinPair;
  if (name == "cross_segment") return SarMode::kCrossSegment;
  throw ArgumentError("unknown SAR mode '" + std::string(name) + "'");
}

void SarConfig::validate() const {
  if (!(clamp_max > 0.0 && clamp_max <= 0.5))
    throw ArgumentError("sar.clamp_max must lie in (0, 0.5]");
}

EmbeddingVector action_embedding(const EmbeddingProvider& provider, std::string_view prompt) {
  return provider.embed_text(prompt);
}

double modulated_alpha(double alpha, double similarity, double clamp_max) {
  if (!(alpha >= 0.0 && alpha <= 0.5)) throw ArgumentError("modulate: alpha must lie in [0, 0.5]");
  const double gap = 1.0 - similarity;
  if (gap <= kSimilarityOneTolerance) return 0.0;
  return std::clamp(alpha * gap, 0.0, clamp_max);
}

SarRecord modulate(double alpha, const EmbeddingVector& a_prev, const EmbeddingVector& a_curr,
                   const SarConfig& cfg) {
  SarRecord rec;
  rec.similarity = cosine(a_prev, a_curr);
  rec.alpha_in = alpha;
  rec.alpha_out = modulated_alpha(alpha, rec.similarity, cfg.clamp_max);
  rec.mode = cfg.mode;
  return rec;
}

}  // namespace nb
