// Copyright 2026 The narrablend Authors
// SPDX-License-Identifier: Apache-2.0

#include "nb/twb.hpp"

namespace nb {

void BlendConfig::validate() const {
  if (!(gamma >= 0.0 && gamma <= 0.5)) throw ArgumentError("twb.gamma must lie in [0, 0.5]");
  if (!(decay_base > 0.0 && decay_base < 1.0))
    throw ArgumentError("twb.decay_base must lie in (0, 1)");
}

const char* to_string(BlendMode mode) noexcept {
  switch (mode) {
    case BlendMode::kInit: return "init";
    case BlendMode::kPerStep: return "per_step";
    case BlendMode::kOff: return "off";
  }
  return "off";
}

}  // namespace nb
