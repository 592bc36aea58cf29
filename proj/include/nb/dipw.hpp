// Copyright 2026 The narrablend Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "nb/embedding.hpp"
#include "nb/error.hpp"

namespace nb {

// Dynamics-informed prompt weighting.
//
// At denoising step i of S each prompt of the (scene, action) pair gets a
// score from three terms: how well the current frame matches it, how close
// it is to the previous step's combined embedding, and a linear narrative
// prior that hands weight from scene to action as denoising progresses.
// A max-shifted temperature softmax turns the two scores into weights.

enum class Dominant { kScene, kAction };

const char* to_string(Dominant d) noexcept;

enum class SimilarityMap {
  kAffine01,  // (1 + cos) / 2
  kCosine,    // raw cosine
};

struct DipwConfig {
  double lambda1 = 1.0;  // frame alignment
  double lambda2 = 1.0;  // smoothness vs previous combined embedding
  double lambda3 = 1.0;  // narrative prior
  double tau = 0.5;
  int total_steps = 64;
  SimilarityMap similarity = SimilarityMap::kAffine01;

  /// Throws ArgumentError naming the first field out of range.
  void validate() const;
};

template <typename Scalar>
struct PromptPairValue {
  Scalar scene;
  Scalar action;
};

/// (1 - i/S, i/S) for 1 <= i <= S.
template <typename Scalar = double>
PromptPairValue<Scalar> narrative_prior(int step, int total_steps) {
  if (total_steps < 1 || step < 1 || step > total_steps)
    throw ArgumentError("narrative_prior: step " + std::to_string(step) + " outside [1, " +
                        std::to_string(total_steps) + "]");
  const Scalar action = Scalar(step) / Scalar(total_steps);
  return {Scalar(1) - action, action};
}

template <typename Scalar>
Scalar score(Scalar sim, Scalar prev_sim, Scalar prior, const DipwConfig& cfg) {
  if (!std::isfinite(sim) || !std::isfinite(prev_sim) || !std::isfinite(prior))
    throw ArgumentError("score: non-finite component");
  return Scalar(cfg.lambda1) * sim + Scalar(cfg.lambda2) * prev_sim + Scalar(cfg.lambda3) * prior;
}

/// Two-way temperature softmax with max subtraction. The action weight is
/// 1 - scene weight, so the pair sums to one by construction.
template <typename Scalar>
PromptPairValue<Scalar> softmax_weights(Scalar s_scene, Scalar s_action, Scalar tau) {
  if (!(tau > Scalar(0))) throw ArgumentError("softmax_weights: tau must be > 0");
  if (!std::isfinite(s_scene) || !std::isfinite(s_action))
    throw ArgumentError("softmax_weights: non-finite score");
  const Scalar top = std::max(s_scene, s_action);
  const Scalar e_scene = std::exp((s_scene - top) / tau);
  const Scalar e_action = std::exp((s_action - top) / tau);
  const Scalar alpha_scene = e_scene / (e_scene + e_action);
  return {alpha_scene, Scalar(1) - alpha_scene};
}

/// Scene wins ties.
template <typename Scalar>
Dominant dominant_of(const PromptPairValue<Scalar>& alpha) noexcept {
  return alpha.scene >= alpha.action ? Dominant::kScene : Dominant::kAction;
}

/// Weighted sum of the two prompt embeddings, renormalized to unit norm.
/// A degenerate (near-zero) sum falls back to the dominant prompt.
template <typename DerivedS, typename DerivedA, typename Scalar>
std::pair<Embedding<typename DerivedS::Scalar>, Dominant> combine(
    const Eigen::MatrixBase<DerivedS>& e_scene, const Eigen::MatrixBase<DerivedA>& e_action,
    const PromptPairValue<Scalar>& alpha) {
  if (e_scene.size() != e_action.size()) throw ArgumentError("combine: dimension mismatch");
  if (std::abs(alpha.scene + alpha.action - Scalar(1)) > Scalar(1e-9))
    throw ArgumentError("combine: weights must sum to 1");
  const Dominant dom = dominant_of(alpha);
  Embedding<typename DerivedS::Scalar> mixed = alpha.scene * e_scene + alpha.action * e_action;
  if (dom == Dominant::kScene) return {normalized_or(mixed, e_scene), dom};
  return {normalized_or(mixed, e_action), dom};
}

struct DipwStepRecord {
  int step = 0;
  double sim_scene = 0, sim_action = 0;
  double prev_sim_scene = 0, prev_sim_action = 0;
  double prior_scene = 0, prior_action = 0;
  double s_scene = 0, s_action = 0;
  double alpha_scene = 0, alpha_action = 0;
  Dominant dominant = Dominant::kScene;
};

using WeightSchedule = std::vector<DipwStepRecord>;

struct DipwState {
  EmbeddingVector previous_combined;

  /// Neutral start: normalize(E_scene + E_action).
  static DipwState initial(const EmbeddingVector& e_scene, const EmbeddingVector& e_action);
};

struct DipwStepResult {
  DipwStepRecord record;
  EmbeddingVector combined;
  DipwState state;
};

/// One full weighting step. `frame_probe` is the frame's embedding-space
/// projection. With `fixed_weights` the softmax is bypassed and (0.5, 0.5)
/// is used (ablation arm); every score term is still recorded.
DipwStepResult dipw_step(const DipwState& state, const EmbeddingVector& frame_probe,
                         const EmbeddingVector& e_scene, const EmbeddingVector& e_action,
                         int step, const DipwConfig& cfg, bool fixed_weights = false);

inline constexpr const char* kWeightsCsvHeader =
    "segment,step,sim_scene,sim_action,prev_sim_scene,prev_sim_action,prior_scene,"
    "prior_action,s_scene,s_action,alpha_scene,alpha_action,dominant";

/// One CSV row (no trailing newline) in kWeightsCsvHeader column order.
std::string weights_csv_row(std::size_t segment, const DipwStepRecord& r);

}  // namespace nb
