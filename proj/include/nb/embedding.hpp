// Copyright 2026 The narrablend Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "nb/error.hpp"

namespace nb {

template <typename Scalar>
using Embedding = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

/// Unit-norm text or frame embedding.
using EmbeddingVector = Embedding<double>;

inline constexpr double kUnitNormTolerance = 1e-6;

struct ProviderDescriptor {
  std::string name;
  int dimension = 0;
  bool deterministic = false;
  std::uint64_t seed = 0;
};

/// Text encoder contract. Implementations must be callable concurrently.
class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;
  virtual ProviderDescriptor descriptor() const = 0;
  /// Unit-norm embedding of `text`; empty or blank text is an ArgumentError.
  virtual EmbeddingVector embed_text(std::string_view text) const = 0;

  int dimension() const { return descriptor().dimension; }
};

/// Cosine similarity in [-1, 1].
template <typename DerivedA, typename DerivedB>
typename DerivedA::Scalar cosine(const Eigen::MatrixBase<DerivedA>& a,
                                 const Eigen::MatrixBase<DerivedB>& b) {
  using Scalar = typename DerivedA::Scalar;
  if (a.size() != b.size())
    throw ArgumentError("cosine: dimension mismatch (" + std::to_string(a.size()) + " vs " +
                        std::to_string(b.size()) + ")");
  const Scalar denom = std::sqrt(a.squaredNorm() * b.squaredNorm());
  if (denom == Scalar(0)) throw ArgumentError("cosine: zero vector");
  const Scalar c = a.dot(b) / denom;
  return std::clamp(c, Scalar(-1), Scalar(1));
}

/// Affine map (1 + cos) / 2 onto [0, 1].
template <typename DerivedA, typename DerivedB>
typename DerivedA::Scalar similarity01(const Eigen::MatrixBase<DerivedA>& a,
                                       const Eigen::MatrixBase<DerivedB>& b) {
  using Scalar = typename DerivedA::Scalar;
  return (Scalar(1) + cosine(a, b)) / Scalar(2);
}

/// Normalizes `v`, or returns `fallback` when the norm is below 1e-12.
template <typename Derived, typename DerivedFallback>
Embedding<typename Derived::Scalar> normalized_or(const Eigen::MatrixBase<Derived>& v,
                                                  const Eigen::MatrixBase<DerivedFallback>& fallback) {
  const auto n = v.norm();
  if (!(n >= 1e-12)) return fallback;
  return v / n;
}

bool is_unit(const EmbeddingVector& v, double tol = kUnitNormTolerance);

/// Deterministic seeded bag-of-tokens provider.
///
/// Text is lowercased and split on whitespace. Every token hashes (seeded)
/// to its own PRNG stream, which yields a standard-normal vector that is
/// then normalized. Token vectors are averaged and the mean renormalized;
/// if the mean collapses (norm < 1e-12) the first token's vector is used.
/// Shared tokens therefore raise similarity and identical canonical text
/// gives an identical embedding.
class MockEmbeddingProvider final : public EmbeddingProvider {
 public:
  explicit MockEmbeddingProvider(std::uint64_t seed, int dimension = 64);

  ProviderDescriptor descriptor() const override;
  EmbeddingVector embed_text(std::string_view text) const override;

  /// Unit vector assigned to a single (already canonical) token.
  EmbeddingVector token_vector(std::string_view token) const;

 private:
  std::uint64_t seed_;
  int dimension_;
};

/// Lowercase + whitespace tokenization used by the mock provider.
std::vector<std::string> canonical_tokens(std::string_view text);

}  // namespace nb
