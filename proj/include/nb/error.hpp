// Copyright 2026 The narrablend Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace nb {

// Bad argument to a pure operation (range, dimension, shape).
class ArgumentError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Malformed JSON; carries the byte offset reported by the parser.
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, std::size_t byte_offset)
      : std::runtime_error(what), byte_offset_(byte_offset) {}
  std::size_t byte_offset() const noexcept { return byte_offset_; }

 private:
  std::size_t byte_offset_;
};

// Well-formed input that violates a domain invariant.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Run configuration outside its allowed range, or unknown key.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(const std::string& key, const std::string& what)
      : std::runtime_error(key + ": " + what), key_(key) {}
  const std::string& key() const noexcept { return key_; }

 private:
  std::string key_;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Failure talking to an out-of-process provider or backbone.
class TransportError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Peer violated the wire contract (id mismatch, missing fields).
class ProtocolError : public TransportError {
 public:
  using TransportError::TransportError;
};

// Story generation aborted; segment() is the 1-based failing segment.
class SegmentError : public std::runtime_error {
 public:
  SegmentError(std::size_t segment, const std::string& what)
      : std::runtime_error("segment " + std::to_string(segment) + ": " + what),
        segment_(segment) {}
  std::size_t segment() const noexcept { return segment_; }

 private:
  std::size_t segment_;
};

}  // namespace nb
