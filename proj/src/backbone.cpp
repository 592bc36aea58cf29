// Copyright 2026 The narrablend Authors
// SPDX-License-Identifier: Apache-2.0

#include "nb/backbone.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "nb/error.hpp"

namespace nb {

void BackboneConfig::validate() const {
  if (steps < 1) throw ArgumentError("backbone.steps must be >= 1");
  if (!(guidance_scale >= 0.0)) throw ArgumentError("backbone.guidance_scale must be >= 0");
  if (!(contraction_rate > 0.0 && contraction_rate <= 1.0))
    throw ArgumentError("backbone.contraction_rate must lie in (0, 1]");
  if (!(sigma_max >= 0.0)) throw ArgumentError("backbone.sigma_max must be >= 0");
  if (shape.channels < 1 || shape.height < 1 || shape.width < 1)
    throw ArgumentError("backbone.shape dimensions must be >= 1");
  if (frames < 1) throw ArgumentError("backbone.frames must be >= 1");
  if (!noise_schedule.empty()) {
    if (noise_schedule.size() != static_cast<std::size_t>(steps))
      throw ArgumentError(fmt::format("backbone.noise_schedule has {} entries, steps is {}",
                                      noise_schedule.size(), steps));
    for (std::size_t i = 0; i < noise_schedule.size(); ++i) {
      if (!(noise_schedule[i] >= 0.0) || !std::isfinite(noise_schedule[i]))
        throw ArgumentError("backbone.noise_schedule entries must be finite and >= 0");
      if (i > 0 && noise_schedule[i] > noise_schedule[i - 1])
        throw ArgumentError("backbone.noise_schedule must be nonincreasing");
    }
  }
}

std::vector<double> BackboneConfig::resolved_schedule() const {
  if (!noise_schedule.empty()) return noise_schedule;
  std::vector<double> out(static_cast<std::size_t>(steps));
  for (int i = 1; i <= steps; ++i) out[i - 1] = sigma_max * double(steps - i) / double(steps);
  return out;
}

double BackboneConfig::effective_gain() const noexcept {
  return std::min(guidance_scale, kGuidanceGainMax) / kGuidanceGainMax;
}

SegmentLatents init_noise(const LatentShape& shape, int frame_count, std::uint64_t seed,
                          std::size_t segment_index) {
  if (frame_count < 1) throw ArgumentError("init_noise: frame count must be >= 1");
  NormalStream normals(derive_seed(segment_seed(seed, segment_index), stream::kInitNoise));
  return {segment_index, shape, normals.matrix<float>(shape.size(), frame_count)};
}

Eigen::VectorXd pool_channels(const LatentFrame& frame, const LatentShape& shape) {
  if (frame.size() != shape.size()) throw ArgumentError("pool_channels: shape mismatch");
  const Eigen::Index plane = Eigen::Index(shape.height) * shape.width;
  // row-major (C, H, W): channel c occupies [c*plane, (c+1)*plane)
  const Eigen::Map<const Eigen::MatrixXf> by_channel(frame.data(), plane, shape.channels);
  return by_channel.cast<double>().rowwise().mean();
}

ToyBackbone::ToyBackbone(BackboneConfig config, int embedding_dim, std::uint64_t model_seed)
    : config_(std::move(config)) {
  config_.validate();
  if (embedding_dim < 2) throw ArgumentError("ToyBackbone: embedding dimension must be >= 2");
  schedule_ = config_.resolved_schedule();
  gain_ = static_cast<float>(config_.contraction_rate * config_.effective_gain());

  NormalStream normals(derive_seed(model_seed, stream::kTargetMap));
  target_map_ = normals.matrix<double>(config_.shape.size(), embedding_dim);

  const Eigen::Index plane = Eigen::Index(config_.shape.height) * config_.shape.width;
  Eigen::MatrixXd pooled_map = Eigen::MatrixXd::Zero(plane, embedding_dim);
  for (int c = 0; c < config_.shape.channels; ++c)
    pooled_map += target_map_.middleRows(c * plane, plane);
  pooled_map /= double(config_.shape.channels);
  probe_map_ = pooled_map.transpose();
}

LatentFrame ToyBackbone::target(const EmbeddingVector& e) const {
  if (e.size() != target_map_.cols()) throw ArgumentError("target: embedding dimension mismatch");
  return (target_map_ * e).cast<float>();
}

void ToyBackbone::denoise_step(SegmentLatents& latents, const EmbeddingVector& conditioning,
                               const AttentionMask& /*mask*/, int step, std::uint64_t seed) const {
  if (step < 1 || step > config_.steps)
    throw ArgumentError(fmt::format("denoise_step: step {} outside [1, {}]", step, config_.steps));
  if (latents.frames.rows() != config_.shape.size())
    throw ArgumentError("denoise_step: latent shape does not match backbone");
  const LatentFrame goal = target(conditioning);
  NormalStream noise(
      derive_seed(derive_seed(segment_seed(seed, latents.segment_index), stream::kStepNoise),
                  static_cast<std::uint64_t>(step)));
  toy_update(latents.frames, goal, gain_, static_cast<float>(schedule_[step - 1]), noise);
}

EmbeddingVector ToyBackbone::frame_probe(const LatentFrame& frame) const {
  const Eigen::VectorXd projected = probe_map_ * pool_channels(frame, config_.shape);
  return normalized_or(projected, EmbeddingVector::Unit(probe_map_.rows(), 0));
}

}  // namespace nb
