// Copyright 2026 The narrablend Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace nb {

/// One segment of a story: a scene prompt giving context and an action
/// prompt describing the motion inside it. `index` is 1-based.
struct PromptPair {
  std::size_t index = 0;
  std::string scene_text;
  std::string action_text;

  bool operator==(const PromptPair&) const = default;
};

struct StoryScript {
  std::string story_id;
  std::vector<PromptPair> pairs;

  std::size_t size() const noexcept { return pairs.size(); }
  /// 1-based access, throws ArgumentError when out of range.
  const PromptPair& segment(std::size_t index) const;

  bool operator==(const StoryScript&) const = default;
};

struct Diagnostic {
  std::size_t segment = 0;  // 0 = script-level
  std::string message;
};

struct ValidationReport {
  std::vector<Diagnostic> errors;
  std::vector<Diagnostic> notes;

  bool ok() const noexcept { return errors.empty(); }
};

/// Trims ASCII whitespace from both ends.
std::string_view trim(std::string_view text) noexcept;
bool is_blank(std::string_view text) noexcept;

ValidationReport validate_script(const StoryScript& script);

/// Parses either the named form ({"story_id", "segments":[{"scene","action"}]})
/// or the flat form ({"story_id", "prompts":[s1,a1,s2,a2,...]}).
/// Throws ParseError for malformed JSON or a wrong document shape and
/// ValidationError when the parsed script breaks an invariant.
StoryScript parse_script(std::string_view raw);
StoryScript load_script(const std::string& path);

/// Named-form JSON, compact, keys in schema order.
std::string serialize_script(const StoryScript& script);

/// Builds a script from an alternating scene/action list.
StoryScript from_flat_prompts(std::string story_id, const std::vector<std::string>& prompts);

/// Stable content hash of the serialized script, hex-encoded.
std::string script_hash(const StoryScript& script);

}  // namespace nb
