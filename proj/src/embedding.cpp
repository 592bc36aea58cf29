// Copyright 2026 The narrablend Authors
// SPDX-License-Identifier: Apache-2.0

#include "nb/embedding.hpp"

#include <cctype>

#include "nb/rng.hpp"
#include "nb/script.hpp"

namespace nb {

bool is_unit(const EmbeddingVector& v, double tol) {
  return v.size() > 0 && std::abs(v.norm() - 1.0) <= tol;
}

std::vector<std::string> canonical_tokens(std::string_view text) {
  std::vector<std::string> tokens;
  std::string current;
  for (char c : trim(text)) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      if (!current.empty()) tokens.push_back(std::move(current));
      current.clear();
    } else {
      current.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    }
  }
  if (!current.empty()) tokens.push_back(std::move(current));
  return tokens;
}

MockEmbeddingProvider::MockEmbeddingProvider(std::uint64_t seed, int dimension)
    : seed_(seed), dimension_(dimension) {
  if (dimension < 2) throw ArgumentError("embedding dimension must be >= 2");
}

ProviderDescriptor MockEmbeddingProvider::descriptor() const {
  return {"mock", dimension_, true, seed_};
}

EmbeddingVector MockEmbeddingProvider::token_vector(std::string_view token) const {
  const std::uint64_t key = hash64(token, derive_seed(seed_, stream::kTokenVector));
  NormalStream normals(key);
  EmbeddingVector v = normals.vector<double>(dimension_);
  return v / v.norm();
}

EmbeddingVector MockEmbeddingProvider::embed_text(std::string_view text) const {
  const auto tokens = canonical_tokens(text);
  if (tokens.empty()) throw ArgumentError("embed_text: empty text");

  const EmbeddingVector first = token_vector(tokens.front());
  EmbeddingVector sum = first;
  for (std::size_t i = 1; i < tokens.size(); ++i) sum += token_vector(tokens[i]);
  sum /= static_cast<double>(tokens.size());
  return normalized_or(sum, first);
}

}  // namespace nb
