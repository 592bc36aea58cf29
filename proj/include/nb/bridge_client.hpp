// Copyright 2026 The narrablend Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <mutex>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

#include "nb/backbone.hpp"
#include "nb/embedding.hpp"

namespace nb {

// Client side of the out-of-process bridge.
//
// Newline-delimited JSON, one request in flight per connection:
//   -> {"id":N,"method":M,"params":{...}}
//   <- {"id":N,"result":{...}}  or  {"id":N,"error":{"message":...}}
// Latents travel as base64 of little-endian f32 (frame-major, C*H*W each).
// `hello` must be the first call; it fixes the embedding dimension and the
// latent shape for the whole session.

std::string base64_encode(std::string_view bytes);
std::string base64_decode(std::string_view text);

std::string encode_f32le(const float* data, std::size_t count);
std::vector<float> decode_f32le(std::string_view base64, std::size_t expected_count);

struct BridgeHello {
  int dim = 0;
  LatentShape latent_shape;
  bool deterministic = false;
};

struct MetricReport {
  double clip_add = 0;
  double clip_combined = 0;
  double dino = 0;
  double lpips_chain = 0;
  std::string model;
};

class BridgeConnection {
 public:
  /// Endpoint forms: "unix:/path/to.sock", "tcp:host:port", "host:port",
  /// "stdio:<shell command>" (spawns the command, talks over its stdio).
  static std::shared_ptr<BridgeConnection> connect(const std::string& endpoint);
  /// Adopts two already-open descriptors (may be the same socket).
  static std::shared_ptr<BridgeConnection> from_fds(int read_fd, int write_fd);

  ~BridgeConnection();
  BridgeConnection(const BridgeConnection&) = delete;
  BridgeConnection& operator=(const BridgeConnection&) = delete;

  /// Sends one request and waits for its response. Throws ProtocolError on
  /// id mismatch or malformed frames, TransportError on I/O failure or an
  /// error response.
  nlohmann::json call(const std::string& method, nlohmann::json params);

  const BridgeHello& hello();
  MetricReport metrics(const std::filesystem::path& run_dir);
  void shutdown();

 private:
  BridgeConnection(int read_fd, int write_fd, int child_pid);
  std::string read_line();
  void write_all(std::string_view data);

  std::mutex mutex_;
  int read_fd_;
  int write_fd_;
  int child_pid_;
  std::int64_t next_id_ = 1;
  std::string buffer_;
  bool closed_ = false;
  std::unique_ptr<BridgeHello> hello_;
};

class BridgeEmbeddingProvider final : public EmbeddingProvider {
 public:
  explicit BridgeEmbeddingProvider(std::shared_ptr<BridgeConnection> conn);
  ProviderDescriptor descriptor() const override;
  EmbeddingVector embed_text(std::string_view text) const override;

 private:
  std::shared_ptr<BridgeConnection> conn_;
  BridgeHello hello_;
};

/// Backbone whose steps and frame probes run remotely. Initial noise stays
/// local so both sides agree on it without shipping it.
class BridgeBackbone final : public Backbone {
 public:
  explicit BridgeBackbone(std::shared_ptr<BridgeConnection> conn);
  std::string name() const override { return "bridge"; }
  LatentShape shape() const override { return hello_.latent_shape; }
  void denoise_step(SegmentLatents& latents, const EmbeddingVector& conditioning,
                    const AttentionMask& mask, int step, std::uint64_t seed) const override;
  EmbeddingVector frame_probe(const LatentFrame& frame) const override;

 private:
  std::shared_ptr<BridgeConnection> conn_;
  BridgeHello hello_;
};

/// Parses an embedding array from a response, checking dimension and unit
/// norm (1e-4).
EmbeddingVector embedding_from_json(const nlohmann::json& values, int dim);

}  // namespace nb
