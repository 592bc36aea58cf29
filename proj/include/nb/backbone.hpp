// Copyright 2026 The narrablend Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "nb/dipw.hpp"
#include "nb/embedding.hpp"
#include "nb/rng.hpp"

namespace nb {

struct LatentShape {
  int channels = 4;
  int height = 8;
  int width = 8;

  Eigen::Index size() const noexcept {
    return Eigen::Index(channels) * Eigen::Index(height) * Eigen::Index(width);
  }
  bool operator==(const LatentShape&) const = default;
};

/// One latent frame, (C, H, W) flattened row-major.
using LatentFrame = Eigen::VectorXf;

/// All frames of one segment: column j is frame j.
struct SegmentLatents {
  std::size_t segment_index = 0;
  LatentShape shape;
  Eigen::MatrixXf frames;

  Eigen::Index frame_count() const noexcept { return frames.cols(); }
  auto frame(Eigen::Index j) { return frames.col(j); }
  auto frame(Eigen::Index j) const { return frames.col(j); }
};

/// Which prompt's attention mask conditions a step. The toy backbone only
/// routes it; real backbones map `token_count` onto their mask.
struct AttentionMask {
  Dominant source = Dominant::kScene;
  int token_count = 0;
};

struct BackboneConfig {
  int steps = 64;
  double guidance_scale = 4.5;
  double contraction_rate = 0.15;
  double sigma_max = 0.3;             // used when noise_schedule is empty
  std::vector<double> noise_schedule;  // explicit sigma_1..sigma_S, nonincreasing
  LatentShape shape;
  int frames = 8;

  void validate() const;
  /// Explicit schedule, or sigma_max * (S - i) / S for i = 1..S.
  std::vector<double> resolved_schedule() const;
  /// min(guidance_scale, g_max) / g_max with g_max = 10.
  double effective_gain() const noexcept;
};

inline constexpr double kGuidanceGainMax = 10.0;

/// Seed of segment k: seed xor mix64(k).
constexpr std::uint64_t segment_seed(std::uint64_t run_seed, std::size_t segment_index) noexcept {
  return run_seed ^ mix64(segment_index);
}

/// Standard-normal latents, deterministic per (seed, segment_index).
SegmentLatents init_noise(const LatentShape& shape, int frame_count, std::uint64_t seed,
                          std::size_t segment_index);

/// Denoising backbone contract. Implementations must keep frame shape and
/// frame count unchanged across denoise_step.
class Backbone {
 public:
  virtual ~Backbone() = default;
  virtual std::string name() const = 0;
  virtual LatentShape shape() const = 0;

  virtual SegmentLatents init_noise(std::size_t segment_index, int frame_count,
                                    std::uint64_t seed) const {
    return nb::init_noise(shape(), frame_count, seed, segment_index);
  }

  /// Advances all frames by one step (1 <= step <= S) under `conditioning`.
  virtual void denoise_step(SegmentLatents& latents, const EmbeddingVector& conditioning,
                            const AttentionMask& mask, int step, std::uint64_t seed) const = 0;

  /// Unit-norm projection of a frame into embedding space.
  virtual EmbeddingVector frame_probe(const LatentFrame& frame) const = 0;
};

/// One toy update on every column:
/// z <- z + gain * (target - z) + sigma * xi, xi standard normal from `noise`.
/// With sigma == 0 no noise is drawn.
template <typename Derived, typename DerivedT>
void toy_update(Eigen::MatrixBase<Derived>& frames, const Eigen::MatrixBase<DerivedT>& target,
                typename Derived::Scalar gain, typename Derived::Scalar sigma,
                NormalStream& noise) {
  using Scalar = typename Derived::Scalar;
  frames += gain * (target.replicate(1, frames.cols()) - frames);
  if (sigma == Scalar(0)) return;
  for (Eigen::Index j = 0; j < frames.cols(); ++j)
    for (Eigen::Index i = 0; i < frames.rows(); ++i)
      frames(i, j) += sigma * static_cast<Scalar>(noise.next());
}

/// Embedding-targeted contracting stochastic process.
///
/// target(E) = A E with A a seeded (C*H*W x d) Gaussian map. Each step
/// moves every frame toward target(E_i) by rate * g_eff and adds the
/// scheduled noise. Frames evolve independently. The frame probe pools
/// over channels and projects with M = transpose of the channel-averaged
/// A, which lines probe(target(E)) up with E.
class ToyBackbone final : public Backbone {
 public:
  ToyBackbone(BackboneConfig config, int embedding_dim, std::uint64_t model_seed);

  std::string name() const override { return "toy"; }
  LatentShape shape() const override { return config_.shape; }

  void denoise_step(SegmentLatents& latents, const EmbeddingVector& conditioning,
                    const AttentionMask& mask, int step, std::uint64_t seed) const override;
  EmbeddingVector frame_probe(const LatentFrame& frame) const override;

  LatentFrame target(const EmbeddingVector& e) const;
  const BackboneConfig& config() const noexcept { return config_; }
  float gain() const noexcept { return gain_; }

 private:
  BackboneConfig config_;
  std::vector<double> schedule_;
  float gain_;
  Eigen::MatrixXd target_map_;   // (C*H*W) x d
  Eigen::MatrixXd probe_map_;    // d x (H*W)
};

/// Channel mean of a frame: H*W values.
Eigen::VectorXd pool_channels(const LatentFrame& frame, const LatentShape& shape);

}  // namespace nb
