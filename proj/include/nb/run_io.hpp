// Copyright 2026 The narrablend Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "nb/orchestrator.hpp"

namespace nb {

// Run directory layout:
//   run.json              effective config, seed, script hash
//   weights.csv           one row per DIPW step record
//   blend_plans.json      one object per segment boundary
//   metrics.json          RunMetrics (written when the run completes)
//   segment_<k>.f32le     little-endian f32 latents, (F, C, H, W) row-major
//   segment_<k>.json      sidecar {segment, F, shape, seed, dtype}

nlohmann::ordered_json blend_plan_to_json(const BlendPlan& plan);
nlohmann::ordered_json metrics_to_json(const RunMetrics& metrics);
nlohmann::ordered_json run_manifest(const StoryRun& run, const std::string& backbone_name);

void write_latents(const std::filesystem::path& dir, const SegmentLatents& latents,
                   std::uint64_t seed);
SegmentLatents read_latents(const std::filesystem::path& f32le_path);

/// Streams a run to disk segment by segment so a failed run keeps
/// everything finished before the failure.
class RunWriter {
 public:
  RunWriter(std::filesystem::path dir, std::string backbone_name);

  /// Call before generation; writes run.json and the CSV header.
  void begin(const StoryScript& script, const RunConfig& config, std::uint64_t seed);
  /// Appends segment `k` of `partial` (schedule, latents, blend plans).
  void on_segment(const StoryRun& partial, std::size_t k);
  /// Writes metrics.json.
  void finish(const StoryRun& run);

  const std::filesystem::path& dir() const noexcept { return dir_; }

 private:
  std::filesystem::path dir_;
  std::string backbone_name_;
  std::ofstream weights_;
};

/// Convenience: begin + generate_story + finish.
StoryRun run_to_directory(const Engine& engine, const StoryScript& script,
                          const std::filesystem::path& dir, const std::string& backbone_name);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::string& contents);

}  // namespace nb
