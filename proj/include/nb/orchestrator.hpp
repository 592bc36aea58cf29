// Copyright 2026 The narrablend Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "nb/backbone.hpp"
#include "nb/config.hpp"
#include "nb/dipw.hpp"
#include "nb/embedding.hpp"
#include "nb/script.hpp"
#include "nb/twb.hpp"

namespace nb {

/// Final frame-to-prompt agreement of one segment, in similarity01 units.
struct AlignmentPoint {
  double scene = 0;
  double action = 0;
};

struct RunMetrics {
  std::vector<double> boundary_discontinuity;   // one per boundary
  std::vector<double> intra_segment_smoothness;  // one per segment
  std::vector<AlignmentPoint> alignment_trace;   // one per segment
};

struct StoryRun {
  StoryScript script;
  RunConfig config;
  std::uint64_t seed = 0;
  std::vector<SegmentLatents> segments;
  std::vector<WeightSchedule> schedules;
  std::vector<BlendPlan> blend_plans;
  RunMetrics metrics;
};

/// Everything a segment needs from its predecessor.
struct PreviousSegment {
  const SegmentLatents& latents;
  const PromptPair& pair;
  const DipwState& final_state;
};

struct SegmentResult {
  SegmentLatents latents;
  SegmentLatents initial;  // after boundary blending, before step 1
  WeightSchedule schedule;
  std::optional<BlendPlan> plan;
  DipwState final_state;
  AlignmentPoint alignment;
};

/// Borrowed collaborators plus the run parameters.
struct Engine {
  const EmbeddingProvider& provider;
  const Backbone& backbone;
  RunConfig config;  // resolved on construction by make_engine
  std::uint64_t seed = 0;
};

Engine make_engine(const EmbeddingProvider& provider, const Backbone& backbone,
                   const RunConfig& config, std::uint64_t seed);

/// init_noise -> (boundary blend when `prev`) -> S weighted denoising steps.
SegmentResult generate_segment(const Engine& engine, const PromptPair& pair,
                               const std::optional<PreviousSegment>& prev);

/// Called after each finished segment with the partial run.
using SegmentCallback = std::function<void(const StoryRun& partial, std::size_t segment)>;

/// Generates every segment in order. Failures surface as SegmentError
/// carrying the failing 1-based index; `on_segment` has already seen all
/// earlier segments by then.
StoryRun generate_story(const Engine& engine, const StoryScript& script,
                        const SegmentCallback& on_segment = {});

/// ||a - b||_2 / n.
double frame_distance(const LatentFrame& a, const LatentFrame& b);

RunMetrics compute_metrics(const std::vector<SegmentLatents>& segments,
                           const std::vector<AlignmentPoint>& alignment);

/// Independent stories, each on its own engine, fanned out over `jobs`
/// worker threads. Results are in input order.
std::vector<StoryRun> generate_many(const std::vector<std::function<StoryRun()>>& tasks,
                                    unsigned jobs);

}  // namespace nb
