// Copyright 2026 The narrablend Authors
// SPDX-License-Identifier: Apache-2.0

#include "nb/script.hpp"

#include <fstream>
#include <sstream>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "nb/error.hpp"
#include "nb/rng.hpp"

namespace nb {

using json = nlohmann::json;

namespace {

bool is_space(char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

std::string require_string(const json& node, const char* what) {
  if (!node.is_string()) throw ParseError(fmt::format("{} must be a string", what), 0);
  return node.get<std::string>();
}

}  // namespace

const PromptPair& StoryScript::segment(std::size_t index) const {
  if (index == 0 || index > pairs.size())
    throw ArgumentError(fmt::format("segment {} out of range 1..{}", index, pairs.size()));
  return pairs[index - 1];
}

std::string_view trim(std::string_view text) noexcept {
  while (!text.empty() && is_space(text.front())) text.remove_prefix(1);
  while (!text.empty() && is_space(text.back())) text.remove_suffix(1);
  return text;
}

bool is_blank(std::string_view text) noexcept { return trim(text).empty(); }

ValidationReport validate_script(const StoryScript& script) {
  ValidationReport report;
  if (is_blank(script.story_id)) report.errors.push_back({0, "empty story_id"});
  if (script.pairs.empty()) {
    report.errors.push_back({0, "empty segment list"});
    return report;
  }
  for (std::size_t pos = 0; pos < script.pairs.size(); ++pos) {
    const auto& pair = script.pairs[pos];
    const std::size_t expected = pos + 1;
    if (pair.index != expected)
      report.errors.push_back(
          {expected, fmt::format("index {} does not match position {}", pair.index, expected)});
    if (is_blank(pair.scene_text)) report.errors.push_back({expected, "empty scene text"});
    if (is_blank(pair.action_text)) report.errors.push_back({expected, "empty action text"});
    if (pos > 0) {
      const auto& prev = script.pairs[pos - 1];
      if (trim(prev.scene_text) == trim(pair.scene_text) &&
          trim(prev.action_text) == trim(pair.action_text))
        report.notes.push_back({expected, "identical adjacent pair"});
    }
  }
  return report;
}

StoryScript from_flat_prompts(std::string story_id, const std::vector<std::string>& prompts) {
  if (prompts.size() % 2 != 0)
    throw ValidationError(
        fmt::format("flat prompt list has odd length {}", prompts.size()));
  StoryScript script{std::move(story_id), {}};
  for (std::size_t i = 0; i < prompts.size(); i += 2)
    script.pairs.push_back({i / 2 + 1, prompts[i], prompts[i + 1]});
  return script;
}

StoryScript parse_script(std::string_view raw) {
  json doc;
  try {
    doc = json::parse(raw.begin(), raw.end());
  } catch (const json::parse_error& e) {
    throw ParseError(e.what(), e.byte);
  }
  if (!doc.is_object()) throw ParseError("script must be a JSON object", 0);
  if (!doc.contains("story_id")) throw ParseError("missing story_id", 0);

  StoryScript script;
  script.story_id = require_string(doc["story_id"], "story_id");

  const bool named = doc.contains("segments");
  const bool flat = doc.contains("prompts");
  if (named == flat) throw ParseError("exactly one of segments or prompts is required", 0);

  if (named) {
    const auto& segments = doc["segments"];
    if (!segments.is_array()) throw ParseError("segments must be an array", 0);
    for (const auto& seg : segments) {
      if (!seg.is_object() || !seg.contains("scene") || !seg.contains("action"))
        throw ParseError(
            fmt::format("segment {} needs scene and action", script.pairs.size() + 1), 0);
      script.pairs.push_back({script.pairs.size() + 1, require_string(seg["scene"], "scene"),
                              require_string(seg["action"], "action")});
    }
  } else {
    const auto& prompts = doc["prompts"];
    if (!prompts.is_array()) throw ParseError("prompts must be an array", 0);
    std::vector<std::string> texts;
    for (const auto& p : prompts) texts.push_back(require_string(p, "prompt"));
    script = from_flat_prompts(std::move(script.story_id), texts);
  }

  const auto report = validate_script(script);
  if (!report.ok()) {
    const auto& first = report.errors.front();
    if (first.segment == 0) throw ValidationError(first.message);
    throw ValidationError(fmt::format("segment {}: {}", first.segment, first.message));
  }
  return script;
}

StoryScript load_script(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read script " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_script(buf.str());
}

std::string serialize_script(const StoryScript& script) {
  // ordered_json keeps schema key order so the hash is stable
  nlohmann::ordered_json doc;
  doc["story_id"] = script.story_id;
  doc["segments"] = nlohmann::ordered_json::array();
  for (const auto& pair : script.pairs)
    doc["segments"].push_back({{"scene", pair.scene_text}, {"action", pair.action_text}});
  return doc.dump();
}

std::string script_hash(const StoryScript& script) {
  return fmt::format("{:016x}", hash64(serialize_script(script), 0));
}

}  // namespace nb
