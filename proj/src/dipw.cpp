// Copyright 2026 The narrablend Authors
// SPDX-License-Identifier: Apache-2.0

#include "nb/dipw.hpp"

#include <fmt/format.h>

namespace nb {

const char* to_string(Dominant d) noexcept { return d == Dominant::kScene ? "scene" : "action"; }

void DipwConfig::validate() const {
  if (!(tau > 0.0)) throw ArgumentError("dipw.tau must be > 0");
  if (total_steps < 1) throw ArgumentError("dipw total_steps must be >= 1");
  if (lambda1 < 0 || lambda2 < 0 || lambda3 < 0)
    throw ArgumentError("dipw lambdas must be nonnegative");
  if (lambda1 == 0 && lambda2 == 0 && lambda3 == 0)
    throw ArgumentError("dipw needs at least one positive lambda");
}

DipwState DipwState::initial(const EmbeddingVector& e_scene, const EmbeddingVector& e_action) {
  if (e_scene.size() != e_action.size()) throw ArgumentError("DipwState: dimension mismatch");
  return {normalized_or(e_scene + e_action, e_scene)};
}

DipwStepResult dipw_step(const DipwState& state, const EmbeddingVector& frame_probe,
                         const EmbeddingVector& e_scene, const EmbeddingVector& e_action,
                         int step, const DipwConfig& cfg, bool fixed_weights) {
  DipwStepRecord r;
  r.step = step;
  const auto prior = narrative_prior<double>(step, cfg.total_steps);
  r.prior_scene = prior.scene;
  r.prior_action = prior.action;

  if (cfg.similarity == SimilarityMap::kAffine01) {
    r.sim_scene = similarity01(frame_probe, e_scene);
    r.sim_action = similarity01(frame_probe, e_action);
  } else {
    r.sim_scene = cosine(frame_probe, e_scene);
    r.sim_action = cosine(frame_probe, e_action);
  }
  r.prev_sim_scene = cosine(e_scene, state.previous_combined);
  r.prev_sim_action = cosine(e_action, state.previous_combined);

  r.s_scene = score(r.sim_scene, r.prev_sim_scene, r.prior_scene, cfg);
  r.s_action = score(r.sim_action, r.prev_sim_action, r.prior_action, cfg);

  const PromptPairValue<double> alpha =
      fixed_weights ? PromptPairValue<double>{0.5, 0.5}
                    : softmax_weights(r.s_scene, r.s_action, cfg.tau);
  r.alpha_scene = alpha.scene;
  r.alpha_action = alpha.action;

  auto [combined, dominant] = combine(e_scene, e_action, alpha);
  r.dominant = dominant;
  DipwState next{combined};
  return {r, std::move(combined), std::move(next)};
}

std::string weights_csv_row(std::size_t segment, const DipwStepRecord& r) {
  // {} is shortest round-trip formatting, so rows are byte-stable
  return fmt::format("{},{},{},{},{},{},{},{},{},{},{},{},{}", segment, r.step, r.sim_scene,
                     r.sim_action, r.prev_sim_scene, r.prev_sim_action, r.prior_scene,
                     r.prior_action, r.s_scene, r.s_action, r.alpha_scene, r.alpha_action,
                     to_string(r.dominant));
}

}  // namespace nb
