// Copyright 2026 The narrablend Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <string>

#include <Eigen/Core>

#include "nb/error.hpp"

namespace nb {

// Time-weighted blending of segment boundaries.
//
// The first latent frame of a new segment is pulled toward the previous
// segment: toward its last frame directly, and toward a geometric-decay
// average of all its frames in which later frames count more.

struct BlendConfig {
  double gamma = 0.25;       // in [0, 0.5]; 1 - 2*gamma weights the fresh frame
  double decay_base = 0.9;   // in (0, 1)
  bool reapply_per_step = false;

  void validate() const;
};

template <typename Scalar>
struct DecayWeights {
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> raw;         // base^(F-i-1)
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> normalized;  // raw / sum(raw)

  Eigen::Index frame_count() const noexcept { return raw.size(); }
};

/// raw[i] = base^(F - i - 1), i = 0..F-1; the last frame has weight 1.
template <typename Scalar = double>
DecayWeights<Scalar> decay_weights(Eigen::Index frame_count, Scalar base) {
  if (frame_count < 1) throw ArgumentError("decay_weights: frame count must be >= 1");
  if (!(base > Scalar(0) && base < Scalar(1)))
    throw ArgumentError("decay_weights: base must lie in (0, 1)");
  DecayWeights<Scalar> w;
  w.raw.resize(frame_count);
  for (Eigen::Index i = 0; i < frame_count; ++i)
    w.raw[i] = std::pow(base, Scalar(frame_count - i - 1));
  w.normalized = w.raw / w.raw.sum();
  return w;
}

/// Convex combination of the previous segment's frames (one per column).
template <typename Derived, typename Scalar>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, 1> blended_init(
    const Eigen::MatrixBase<Derived>& prev_frames, const DecayWeights<Scalar>& weights) {
  using Out = typename Derived::Scalar;
  if (prev_frames.cols() != weights.frame_count())
    throw ArgumentError("blended_init: " + std::to_string(prev_frames.cols()) +
                        " frames but " + std::to_string(weights.frame_count()) + " weights");
  // accumulate in the weight precision, then narrow once
  const Eigen::Matrix<Scalar, Eigen::Dynamic, 1> acc =
      prev_frames.template cast<Scalar>() * weights.normalized;
  return acc.template cast<Out>();
}

/// gamma*prev_last + gamma*blended + (1 - 2*gamma)*first.
/// gamma == 0 returns `first` bit-exactly.
template <typename DerivedF, typename DerivedL, typename DerivedT>
Eigen::Matrix<typename DerivedF::Scalar, Eigen::Dynamic, 1> boundary_update(
    const Eigen::MatrixBase<DerivedF>& first, const Eigen::MatrixBase<DerivedL>& prev_last,
    const Eigen::MatrixBase<DerivedT>& blended, double gamma) {
  using Scalar = typename DerivedF::Scalar;
  if (!(gamma >= 0.0 && gamma <= 0.5))
    throw ArgumentError("boundary_update: gamma must lie in [0, 0.5]");
  if (first.size() != prev_last.size() || first.size() != blended.size())
    throw ArgumentError("boundary_update: shape mismatch");
  if (gamma == 0.0) return first;
  const Scalar g = static_cast<Scalar>(gamma);
  const Scalar keep = static_cast<Scalar>(1.0 - 2.0 * gamma);
  return g * prev_last + g * blended + keep * first;
}

}  // namespace nb

#include <optional>
#include <vector>

#include "nb/sar.hpp"

namespace nb {

enum class BlendMode {
  kInit,     // applied once before the first denoising step
  kPerStep,  // re-asserted after every step as well
  kOff,      // blending disabled (gamma forced to 0)
};

const char* to_string(BlendMode mode) noexcept;

/// Everything decided at one segment boundary.
struct BlendPlan {
  std::size_t segment = 0;  // the segment receiving the blend (>= 2)
  int frame_count = 0;      // F of the previous segment
  double decay_base = 0;
  std::vector<double> weights_normalized;  // empty when blending is off
  double gamma_configured = 0;
  double gamma_effective = 0;
  BlendMode blend_mode = BlendMode::kInit;
  std::optional<SarRecord> sar;  // absent when SAR is disabled
};

}  // namespace nb
