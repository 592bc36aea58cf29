// Copyright 2026 The narrablend Authors
// SPDX-License-Identifier: Apache-2.0

#include "nb/config.hpp"

#include <fstream>
#include <functional>
#include <map>

#include "nb/error.hpp"

namespace nb {

using json = nlohmann::json;

const char* to_string(ProbeSource p) noexcept { return p == ProbeSource::kFirst ? "first" : "mean"; }
const char* to_string(BackboneKind k) noexcept { return k == BackboneKind::kToy ? "toy" : "bridge"; }

void RunConfig::validate() const {
  const auto wrap = [](const char* key, auto&& check) {
    try {
      check();
    } catch (const ArgumentError& e) {
      throw ConfigError(key, e.what());
    }
  };
  wrap("dipw", [&] { resolved().dipw.validate(); });
  wrap("twb", [&] { twb.validate(); });
  wrap("sar", [&] { sar.validate(); });
  wrap("backbone", [&] { backbone.validate(); });
  if (embedding_dim < 2) throw ConfigError("embedding.dimension", "must be >= 2");
  if (backbone_kind == BackboneKind::kBridge && bridge_endpoint.empty())
    throw ConfigError("backbone.bridge_endpoint", "required for the bridge backbone");
}

RunConfig RunConfig::resolved() const {
  RunConfig out = *this;
  out.dipw.total_steps = backbone.steps;
  return out;
}

namespace {

using Setter = std::function<void(RunConfig&, const json&)>;

template <typename T>
T typed(const json& v, const std::string& key) {
  try {
    if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) throw ConfigError(key, "expected a boolean");
    } else if constexpr (std::is_integral_v<T>) {
      if (!v.is_number_integer()) throw ConfigError(key, "expected an integer");
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!v.is_number()) throw ConfigError(key, "expected a number");
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!v.is_string()) throw ConfigError(key, "expected a string");
    }
    return v.get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(key, e.what());
  }
}

const std::map<std::string, std::map<std::string, Setter>>& setters() {
  static const std::map<std::string, std::map<std::string, Setter>> table = {
      {"dipw",
       {
           {"enabled", [](RunConfig& c, const json& v) { c.dipw_enabled = typed<bool>(v, "dipw.enabled"); }},
           {"lambda1", [](RunConfig& c, const json& v) { c.dipw.lambda1 = typed<double>(v, "dipw.lambda1"); }},
           {"lambda2", [](RunConfig& c, const json& v) { c.dipw.lambda2 = typed<double>(v, "dipw.lambda2"); }},
           {"lambda3", [](RunConfig& c, const json& v) { c.dipw.lambda3 = typed<double>(v, "dipw.lambda3"); }},
           {"tau", [](RunConfig& c, const json& v) { c.dipw.tau = typed<double>(v, "dipw.tau"); }},
           {"carry_state", [](RunConfig& c, const json& v) { c.dipw_carry_state = typed<bool>(v, "dipw.carry_state"); }},
           {"similarity",
            [](RunConfig& c, const json& v) {
              const auto s = typed<std::string>(v, "dipw.similarity");
              if (s == "affine01") c.dipw.similarity = SimilarityMap::kAffine01;
              else if (s == "cosine") c.dipw.similarity = SimilarityMap::kCosine;
              else throw ConfigError("dipw.similarity", "expected affine01 or cosine");
            }},
           {"probe",
            [](RunConfig& c, const json& v) {
              const auto s = typed<std::string>(v, "dipw.probe");
              if (s == "first") c.probe = ProbeSource::kFirst;
              else if (s == "mean") c.probe = ProbeSource::kMean;
              else throw ConfigError("dipw.probe", "expected first or mean");
            }},
       }},
      {"twb",
       {
           {"enabled", [](RunConfig& c, const json& v) { c.twb_enabled = typed<bool>(v, "twb.enabled"); }},
           {"gamma", [](RunConfig& c, const json& v) { c.twb.gamma = typed<double>(v, "twb.gamma"); }},
           {"decay_base", [](RunConfig& c, const json& v) { c.twb.decay_base = typed<double>(v, "twb.decay_base"); }},
           {"reapply_per_step", [](RunConfig& c, const json& v) { c.twb.reapply_per_step = typed<bool>(v, "twb.reapply_per_step"); }},
       }},
      {"sar",
       {
           {"enabled", [](RunConfig& c, const json& v) { c.sar.enabled = typed<bool>(v, "sar.enabled"); }},
           {"clamp_max", [](RunConfig& c, const json& v) { c.sar.clamp_max = typed<double>(v, "sar.clamp_max"); }},
           {"mode",
            [](RunConfig& c, const json& v) {
              try {
                c.sar.mode = sar_mode_from_string(typed<std::string>(v, "sar.mode"));
              } catch (const ArgumentError& e) {
                throw ConfigError("sar.mode", e.what());
              }
            }},
       }},
      {"backbone",
       {
           {"kind",
            [](RunConfig& c, const json& v) {
              const auto s = typed<std::string>(v, "backbone.kind");
              if (s == "toy") c.backbone_kind = BackboneKind::kToy;
              else if (s == "bridge") c.backbone_kind = BackboneKind::kBridge;
              else throw ConfigError("backbone.kind", "expected toy or bridge");
            }},
           {"bridge_endpoint", [](RunConfig& c, const json& v) { c.bridge_endpoint = typed<std::string>(v, "backbone.bridge_endpoint"); }},
           {"steps", [](RunConfig& c, const json& v) { c.backbone.steps = typed<int>(v, "backbone.steps"); }},
           {"guidance_scale", [](RunConfig& c, const json& v) { c.backbone.guidance_scale = typed<double>(v, "backbone.guidance_scale"); }},
           {"contraction_rate", [](RunConfig& c, const json& v) { c.backbone.contraction_rate = typed<double>(v, "backbone.contraction_rate"); }},
           {"sigma_max", [](RunConfig& c, const json& v) { c.backbone.sigma_max = typed<double>(v, "backbone.sigma_max"); }},
           {"noise_schedule",
            [](RunConfig& c, const json& v) {
              if (v.is_null()) {
                c.backbone.noise_schedule.clear();
                return;
              }
              if (!v.is_array()) throw ConfigError("backbone.noise_schedule", "expected an array or null");
              c.backbone.noise_schedule.clear();
              for (const auto& x : v) c.backbone.noise_schedule.push_back(typed<double>(x, "backbone.noise_schedule"));
            }},
           {"channels", [](RunConfig& c, const json& v) { c.backbone.shape.channels = typed<int>(v, "backbone.channels"); }},
           {"height", [](RunConfig& c, const json& v) { c.backbone.shape.height = typed<int>(v, "backbone.height"); }},
           {"width", [](RunConfig& c, const json& v) { c.backbone.shape.width = typed<int>(v, "backbone.width"); }},
           {"frames", [](RunConfig& c, const json& v) { c.backbone.frames = typed<int>(v, "backbone.frames"); }},
       }},
      {"embedding",
       {
           {"dimension", [](RunConfig& c, const json& v) { c.embedding_dim = typed<int>(v, "embedding.dimension"); }},
       }},
  };
  return table;
}

}  // namespace

RunConfig apply_config_json(RunConfig base, const json& doc) {
  if (!doc.is_object()) throw ConfigError("<root>", "config must be a JSON object");
  const auto& table = setters();
  for (const auto& [section, body] : doc.items()) {
    const auto sec = table.find(section);
    if (sec == table.end()) throw ConfigError(section, "unknown key");
    if (!body.is_object()) throw ConfigError(section, "expected an object");
    for (const auto& [key, value] : body.items()) {
      const auto it = sec->second.find(key);
      if (it == sec->second.end()) throw ConfigError(section + "." + key, "unknown key");
      it->second(base, value);
    }
  }
  base.validate();
  return base;
}

RunConfig load_config(const std::string& path, RunConfig base) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config " + path);
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("<root>", std::string("malformed JSON: ") + e.what());
  }
  return apply_config_json(std::move(base), doc);
}

nlohmann::ordered_json config_to_json(const RunConfig& in) {
  const RunConfig cfg = in.resolved();
  nlohmann::ordered_json j;
  j["dipw"] = {{"enabled", cfg.dipw_enabled},
               {"lambda1", cfg.dipw.lambda1},
               {"lambda2", cfg.dipw.lambda2},
               {"lambda3", cfg.dipw.lambda3},
               {"tau", cfg.dipw.tau},
               {"similarity", cfg.dipw.similarity == SimilarityMap::kAffine01 ? "affine01" : "cosine"},
               {"carry_state", cfg.dipw_carry_state},
               {"probe", to_string(cfg.probe)}};
  j["twb"] = {{"enabled", cfg.twb_enabled},
              {"gamma", cfg.twb.gamma},
              {"decay_base", cfg.twb.decay_base},
              {"reapply_per_step", cfg.twb.reapply_per_step}};
  j["sar"] = {{"enabled", cfg.sar.enabled},
              {"mode", to_string(cfg.sar.mode)},
              {"clamp_max", cfg.sar.clamp_max}};
  j["backbone"] = {{"kind", to_string(cfg.backbone_kind)},
                   {"bridge_endpoint", cfg.bridge_endpoint},
                   {"steps", cfg.backbone.steps},
                   {"guidance_scale", cfg.backbone.guidance_scale},
                   {"contraction_rate", cfg.backbone.contraction_rate},
                   {"sigma_max", cfg.backbone.sigma_max},
                   {"noise_schedule", cfg.backbone.noise_schedule.empty()
                                          ? nlohmann::ordered_json(nullptr)
                                          : nlohmann::ordered_json(cfg.backbone.noise_schedule)},
                   {"channels", cfg.backbone.shape.channels},
                   {"height", cfg.backbone.shape.height},
                   {"width", cfg.backbone.shape.width},
                   {"frames", cfg.backbone.frames}};
  j["embedding"] = {{"dimension", cfg.embedding_dim}};
  return j;
}

}  // namespace nb
