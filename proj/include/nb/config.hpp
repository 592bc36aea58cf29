// Copyright 2026 The narrablend Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>

#include <nlohmann/json.hpp>

#include "nb/backbone.hpp"
#include "nb/dipw.hpp"
#include "nb/sar.hpp"
#include "nb/twb.hpp"

namespace nb {

enum class ProbeSource { kFirst, kMean };
enum class BackboneKind { kToy, kBridge };

const char* to_string(ProbeSource p) noexcept;
const char* to_string(BackboneKind k) noexcept;

/// Every knob of a run. Defaults: 64 steps, guidance 4.5, all lambdas 1.0,
/// tau 0.5.
struct RunConfig {
  DipwConfig dipw;
  bool dipw_enabled = true;
  bool dipw_carry_state = false;
  ProbeSource probe = ProbeSource::kFirst;

  BlendConfig twb;
  bool twb_enabled = true;

  SarConfig sar;

  BackboneConfig backbone;
  BackboneKind backbone_kind = BackboneKind::kToy;
  std::string bridge_endpoint;

  int embedding_dim = 64;

  /// Throws ConfigError naming the offending key (e.g. "twb.gamma").
  void validate() const;
  /// Copy with derived fields synced (dipw.total_steps = backbone.steps).
  RunConfig resolved() const;
};

/// Applies a JSON document on top of `base`. Unknown keys and wrong types
/// are ConfigErrors.
RunConfig apply_config_json(RunConfig base, const nlohmann::json& doc);
RunConfig load_config(const std::string& path, RunConfig base = {});
nlohmann::ordered_json config_to_json(const RunConfig& cfg);

}  // namespace nb
