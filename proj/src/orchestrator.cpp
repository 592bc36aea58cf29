// Copyright 2026 The narrablend Authors
// SPDX-License-Identifier: Apache-2.0

#include "nb/orchestrator.hpp"

#include <atomic>
#include <exception>
#include <thread>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "nb/error.hpp"
#include "nb/sar.hpp"

namespace nb {

namespace {

int token_count(const std::string& text) { return static_cast<int>(canonical_tokens(text).size()); }

LatentFrame probe_frame(const SegmentLatents& latents, ProbeSource source) {
  if (source == ProbeSource::kFirst) return latents.frame(0);
  return latents.frames.rowwise().mean();
}

struct Boundary {
  BlendPlan plan;
  LatentFrame prev_last;
  LatentFrame blended;
};

Boundary plan_boundary(const Engine& engine, const PromptPair& pair, const PreviousSegment& prev) {
  const RunConfig& cfg = engine.config;
  const SegmentLatents& before = prev.latents;

  Boundary b;
  b.plan.segment = pair.index;
  b.plan.frame_count = static_cast<int>(before.frame_count());
  b.plan.decay_base = cfg.twb.decay_base;
  b.plan.gamma_configured = cfg.twb.gamma;

  if (!cfg.twb_enabled) {
    b.plan.blend_mode = BlendMode::kOff;
    b.plan.gamma_effective = 0.0;
    return b;
  }

  const auto weights = decay_weights<double>(before.frame_count(), cfg.twb.decay_base);
  b.plan.weights_normalized.assign(weights.normalized.data(),
                                   weights.normalized.data() + weights.normalized.size());
  b.plan.blend_mode = cfg.twb.reapply_per_step ? BlendMode::kPerStep : BlendMode::kInit;
  b.prev_last = before.frame(before.frame_count() - 1);
  b.blended = blended_init(before.frames, weights);

  double gamma = cfg.twb.gamma;
  if (cfg.sar.enabled) {
    SarRecord rec;
    if (cfg.sar.mode == SarMode::kWithinPair) {
      rec = modulate(gamma, action_embedding(engine.provider, pair.scene_text),
                     action_embedding(engine.provider, pair.action_text), cfg.sar);
      rec.compared_first = fmt::format("{}.scene", pair.index);
      rec.compared_second = fmt::format("{}.action", pair.index);
    } else {
      rec = modulate(gamma, action_embedding(engine.provider, prev.pair.action_text),
                     action_embedding(engine.provider, pair.action_text), cfg.sar);
      rec.compared_first = fmt::format("{}.action", prev.pair.index);
      rec.compared_second = fmt::format("{}.action", pair.index);
    }
    gamma = rec.alpha_out;
    b.plan.sar = std::move(rec);
  }
  b.plan.gamma_effective = gamma;
  return b;
}

}  // namespace

Engine make_engine(const EmbeddingProvider& provider, const Backbone& backbone,
                   const RunConfig& config, std::uint64_t seed) {
  RunConfig cfg = config.resolved();
  cfg.validate();
  if (provider.dimension() != cfg.embedding_dim)
    throw ConfigError("embedding.dimension",
                      fmt::format("provider has dimension {}, config says {}",
                                  provider.dimension(), cfg.embedding_dim));
  if (!(backbone.shape() == cfg.backbone.shape))
    throw ConfigError("backbone.shape", "backbone latent shape differs from configuration");
  return Engine{provider, backbone, std::move(cfg), seed};
}

SegmentResult generate_segment(const Engine& engine, const PromptPair& pair,
                               const std::optional<PreviousSegment>& prev) {
  const RunConfig& cfg = engine.config;
  if (prev.has_value() != (pair.index > 1))
    throw ArgumentError("generate_segment: a previous segment is required iff index > 1");

  SegmentResult out{engine.backbone.init_noise(pair.index, cfg.backbone.frames, engine.seed),
                    {}, {}, std::nullopt, {}, {}};
  SegmentLatents& latents = out.latents;

  std::optional<Boundary> boundary;
  if (prev) {
    if (!(prev->latents.shape == latents.shape) ||
        prev->latents.frames.rows() != latents.frames.rows())
      throw ConfigError("backbone.shape", "latent shape changed between segments");
    boundary = plan_boundary(engine, pair, *prev);
    if (boundary->plan.gamma_effective > 0.0)
      latents.frame(0) = boundary_update(latents.frame(0), boundary->prev_last, boundary->blended,
                                         boundary->plan.gamma_effective);
    out.plan = boundary->plan;
  }
  out.initial = latents;

  const EmbeddingVector e_scene = engine.provider.embed_text(pair.scene_text);
  const EmbeddingVector e_action = engine.provider.embed_text(pair.action_text);
  const AttentionMask scene_mask{Dominant::kScene, token_count(pair.scene_text)};
  const AttentionMask action_mask{Dominant::kAction, token_count(pair.action_text)};

  DipwState state = (cfg.dipw_carry_state && prev) ? prev->final_state
                                                   : DipwState::initial(e_scene, e_action);
  const bool reapply = boundary && boundary->plan.blend_mode == BlendMode::kPerStep &&
                       boundary->plan.gamma_effective > 0.0;

  out.schedule.reserve(static_cast<std::size_t>(cfg.dipw.total_steps));
  for (int step = 1; step <= cfg.dipw.total_steps; ++step) {
    const EmbeddingVector probe = engine.backbone.frame_probe(probe_frame(latents, cfg.probe));
    auto result = dipw_step(state, probe, e_scene, e_action, step, cfg.dipw, !cfg.dipw_enabled);
    const AttentionMask& mask =
        result.record.dominant == Dominant::kScene ? scene_mask : action_mask;
    engine.backbone.denoise_step(latents, result.combined, mask, step, engine.seed);
    if (latents.frames.rows() != out.initial.frames.rows() ||
        latents.frame_count() != out.initial.frame_count())
      throw ArgumentError("backbone changed the latent shape");
    if (reapply)
      latents.frame(0) = boundary_update(latents.frame(0), boundary->prev_last, boundary->blended,
                                         boundary->plan.gamma_effective);
    out.schedule.push_back(result.record);
    state = std::move(result.state);
  }
  out.final_state = std::move(state);

  const EmbeddingVector last_probe =
      engine.backbone.frame_probe(latents.frame(latents.frame_count() - 1));
  out.alignment = {similarity01(last_probe, e_scene), similarity01(last_probe, e_action)};
  return out;
}

StoryRun generate_story(const Engine& engine, const StoryScript& script,
                        const SegmentCallback& on_segment) {
  if (const auto report = validate_script(script); !report.ok())
    throw ValidationError("script failed validation: " + report.errors.front().message);

  StoryRun run;
  run.script = script;
  run.config = engine.config;
  run.seed = engine.seed;

  std::vector<AlignmentPoint> alignment;
  std::optional<DipwState> last_state;
  for (const auto& pair : script.pairs) {
    try {
      std::optional<PreviousSegment> prev;
      if (pair.index > 1)
        prev.emplace(PreviousSegment{run.segments.back(), script.pairs[pair.index - 2], *last_state});
      SegmentResult seg = generate_segment(engine, pair, prev);
      run.segments.push_back(std::move(seg.latents));
      run.schedules.push_back(std::move(seg.schedule));
      if (seg.plan) run.blend_plans.push_back(std::move(*seg.plan));
      alignment.push_back(seg.alignment);
      last_state = std::move(seg.final_state);
    } catch (const SegmentError&) {
      throw;
    } catch (const std::exception& e) {
      spdlog::error("segment {} failed: {}", pair.index, e.what());
      throw SegmentError(pair.index, e.what());
    }
    run.metrics = compute_metrics(run.segments, alignment);
    spdlog::debug("segment {} done", pair.index);
    if (on_segment) on_segment(run, pair.index);
  }
  return run;
}

double frame_distance(const LatentFrame& a, const LatentFrame& b) {
  if (a.size() != b.size()) throw ArgumentError("frame_distance: shape mismatch");
  return (a.cast<double>() - b.cast<double>()).norm() / static_cast<double>(a.size());
}

RunMetrics compute_metrics(const std::vector<SegmentLatents>& segments,
                           const std::vector<AlignmentPoint>& alignment) {
  RunMetrics m;
  for (std::size_t k = 0; k < segments.size(); ++k) {
    const auto& seg = segments[k];
    double total = 0.0;
    for (Eigen::Index j = 1; j < seg.frame_count(); ++j)
      total += frame_distance(seg.frame(j), seg.frame(j - 1));
    m.intra_segment_smoothness.push_back(
        seg.frame_count() > 1 ? total / double(seg.frame_count() - 1) : 0.0);
    if (k > 0) {
      const auto& before = segments[k - 1];
      m.boundary_discontinuity.push_back(
          frame_distance(before.frame(before.frame_count() - 1), seg.frame(0)));
    }
  }
  m.alignment_trace = alignment;
  return m;
}

std::vector<StoryRun> generate_many(const std::vector<std::function<StoryRun()>>& tasks,
                                    unsigned jobs) {
  std::vector<StoryRun> results(tasks.size());
  std::vector<std::exception_ptr> errors(tasks.size());
  std::atomic<std::size_t> next{0};
  const auto worker = [&] {
    for (std::size_t i = next++; i < tasks.size(); i = next++) {
      try {
        results[i] = tasks[i]();
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const unsigned n = std::max(1u, std::min<unsigned>(jobs, static_cast<unsigned>(tasks.size())));
  std::vector<std::thread> pool;
  for (unsigned t = 1; t < n; ++t) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return results;
}

}  // namespace nb
