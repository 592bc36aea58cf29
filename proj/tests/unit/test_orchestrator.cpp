// Copyright 2026 The narrablend Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>
#include <random>

#include <fmt/format.h>

#include "nb/error.hpp"
#include "nb/orchestrator.hpp"
#include "test_util.hpp"

using namespace nb;
using nb::testing::make_script;
using nb::testing::nyc3;

namespace {

RunConfig small_config(int steps = 16) {
  RunConfig cfg;
  cfg.backbone.steps = steps;
  cfg.backbone.frames = 4;
  return cfg;
}

struct Stack {
  MockEmbeddingProvider provider;
  ToyBackbone backbone;
  explicit Stack(const RunConfig& cfg, std::uint64_t seed = 7)
      : provider(seed, cfg.embedding_dim), backbone(cfg.backbone, cfg.embedding_dim, seed) {}
  Engine engine(const RunConfig& cfg, std::uint64_t seed = 7) const {
    return make_engine(provider, backbone, cfg, seed);
  }
};

// Delegates to the toy backbone but fails once `fail_segment` is reached.
class FailingBackbone final : public Backbone {
 public:
  FailingBackbone(const Backbone& inner, std::size_t fail_segment)
      : inner_(inner), fail_segment_(fail_segment) {}
  std::string name() const override { return "failing"; }
  LatentShape shape() const override { return inner_.shape(); }
  void denoise_step(SegmentLatents& latents, const EmbeddingVector& e, const AttentionMask& mask,
                    int step, std::uint64_t seed) const override {
    if (latents.segment_index >= fail_segment_ && step == 3)
      throw TransportError("backend went away");
    inner_.denoise_step(latents, e, mask, step, seed);
  }
  EmbeddingVector frame_probe(const LatentFrame& f) const override { return inner_.frame_probe(f); }

 private:
  const Backbone& inner_;
  std::size_t fail_segment_;
};

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

TEST_CASE("make_engine checks collaborators") {
  const auto cfg = small_config();
  const Stack s(cfg);
  CHECK(s.engine(cfg).config.dipw.total_steps == 16);
  MockEmbeddingProvider narrow(1, 32);
  CHECK_THROWS_AS(make_engine(narrow, s.backbone, cfg, 1), ConfigError);
  RunConfig other = cfg;
  other.backbone.shape.width = 4;
  CHECK_THROWS_AS(make_engine(s.provider, s.backbone, other, 1), ConfigError);
  other = cfg;
  other.twb.gamma = 2;
  CHECK_THROWS_AS(make_engine(s.provider, s.backbone, other, 1), ConfigError);
}

TEST_CASE("story structure") {
  const auto cfg = small_config();
  const Stack s(cfg);
  const auto run = generate_story(s.engine(cfg), nyc3());
  REQUIRE(run.segments.size() == 3);
  REQUIRE(run.schedules.size() == 3);
  REQUIRE(run.blend_plans.size() == 2);
  CHECK(run.metrics.boundary_discontinuity.size() == 2);
  CHECK(run.metrics.intra_segment_smoothness.size() == 3);
  CHECK(run.metrics.alignment_trace.size() == 3);
  for (std::size_t k = 0; k < 3; ++k) {
    CHECK(run.segments[k].segment_index == k + 1);
    CHECK(run.segments[k].frame_count() == 4);
    REQUIRE(run.schedules[k].size() == 16);
    for (int i = 0; i < 16; ++i) {
      const auto& r = run.schedules[k][i];
      CHECK(r.step == i + 1);
      CHECK(std::abs(r.alpha_scene + r.alpha_action - 1.0) < 1e-12);
      CHECK(r.prior_action == doctest::Approx(double(i + 1) / 16));
      CHECK((r.dominant == Dominant::kScene) == (r.alpha_scene >= r.alpha_action));
    }
  }
  for (std::size_t b = 0; b < 2; ++b) {
    const auto& p = run.blend_plans[b];
    CHECK(p.segment == b + 2);
    CHECK(p.frame_count == 4);
    CHECK(p.weights_normalized.size() == 4);
    CHECK(p.blend_mode == BlendMode::kInit);
    REQUIRE(p.sar.has_value());
    CHECK(p.sar->alpha_in == 0.25);
    CHECK(p.gamma_effective == p.sar->alpha_out);
    CHECK(p.sar->compared_first == fmt::format("{}.scene", b + 2));
  }
}

TEST_CASE("determinism") {
  const auto cfg = small_config();
  const Stack s(cfg);
  const auto a = generate_story(s.engine(cfg), nyc3());
  const auto b = generate_story(s.engine(cfg), nyc3());
  for (std::size_t k = 0; k < 3; ++k) CHECK(a.segments[k].frames == b.segments[k].frames);
  const auto c = generate_story(s.engine(cfg, 8), nyc3());
  CHECK(a.segments[0].frames != c.segments[0].frames);
}

TEST_CASE("identical prompts leave only the narrative prior") {
  auto cfg = small_config(64);
  const Stack s(cfg);
  const auto run = generate_story(
      s.engine(cfg), make_script({{"a corgi dog in the park", "a corgi dog in the park"}}));
  const auto& sched = run.schedules[0];
  for (int i = 1; i <= 64; ++i) {
    const double expected = sigmoid((2.0 * i / 64 - 1.0) / 0.5);
    CHECK(std::abs(sched[i - 1].alpha_action - expected) < 1e-9);
  }
  CHECK(std::abs(sched.back().alpha_action - 0.8807970779778823) < 1e-9);
}

TEST_CASE("SAR with identical actions keeps the initial noise bit-exact") {
  auto cfg = small_config();
  const Stack s(cfg);

  SUBCASE("within pair") {
    const auto script = make_script({{"a red ball", "a corgi kicks"}, {"same", "same"}});
    const Engine engine = s.engine(cfg);
    const auto first = generate_segment(engine, script.pairs[0], std::nullopt);
    const auto second = generate_segment(
        engine, script.pairs[1],
        PreviousSegment{first.latents, script.pairs[0], first.final_state});
    REQUIRE(second.plan);
    CHECK(second.plan->sar->alpha_out == 0.0);
    CHECK(second.plan->gamma_effective == 0.0);
    CHECK(second.initial.frames == s.backbone.init_noise(2, 4, 7).frames);
  }

  SUBCASE("cross segment") {
    cfg.sar.mode = SarMode::kCrossSegment;
    const auto script =
        make_script({{"a subway car", "he is walking"}, {"a busy street", "he is walking"}});
    const auto run = generate_story(s.engine(cfg), script);
    const auto& plan = run.blend_plans.at(0);
    CHECK(plan.sar->compared_first == "1.action");
    CHECK(plan.sar->compared_second == "2.action");
    CHECK(plan.gamma_effective == 0.0);
    const Engine engine = s.engine(cfg);
    const auto again = generate_segment(
        engine, script.pairs[1],
        PreviousSegment{run.segments[0], script.pairs[0], DipwState{}});
    CHECK(again.initial.frames == s.backbone.init_noise(2, 4, 7).frames);
  }
}

TEST_CASE("TWB touches only frame 0 at initialization") {
  auto cfg = small_config();
  cfg.sar.enabled = false;
  const Stack s(cfg);
  const Engine engine = s.engine(cfg);
  const auto script = nyc3();
  const auto first = generate_segment(engine, script.pairs[0], std::nullopt);
  const auto second = generate_segment(
      engine, script.pairs[1], PreviousSegment{first.latents, script.pairs[0], first.final_state});
  const auto noise = s.backbone.init_noise(2, 4, 7);
  CHECK(second.initial.frames.rightCols(3) == noise.frames.rightCols(3));

  const auto w = decay_weights<double>(4, 0.9);
  const Eigen::VectorXf blended = blended_init(first.latents.frames, w);
  const Eigen::VectorXf expected =
      0.25f * first.latents.frame(3) + 0.25f * blended + 0.5f * noise.frame(0);
  CHECK((second.initial.frame(0) - expected).cwiseAbs().maxCoeff() < 1e-6f);
  CHECK(second.plan->gamma_effective == 0.25);
  CHECK_FALSE(second.plan->sar.has_value());
}

TEST_CASE("ablation switches") {
  const auto script = nyc3();
  SUBCASE("no dipw gives fixed half weights") {
    auto cfg = small_config();
    cfg.dipw_enabled = false;
    const Stack s(cfg);
    const auto run = generate_story(s.engine(cfg), script);
    for (const auto& sched : run.schedules)
      for (const auto& r : sched) {
        CHECK(r.alpha_scene == 0.5);
        CHECK(r.alpha_action == 0.5);
      }
  }
  SUBCASE("no twb leaves init noise untouched") {
    auto cfg = small_config();
    cfg.twb_enabled = false;
    const Stack s(cfg);
    const Engine engine = s.engine(cfg);
    const auto first = generate_segment(engine, script.pairs[0], std::nullopt);
    const auto second = generate_segment(
        engine, script.pairs[1], PreviousSegment{first.latents, script.pairs[0], first.final_state});
    CHECK(second.plan->blend_mode == BlendMode::kOff);
    CHECK(second.plan->gamma_effective == 0.0);
    CHECK(second.plan->weights_normalized.empty());
    CHECK(second.initial.frames == s.backbone.init_noise(2, 4, 7).frames);
  }
  SUBCASE("per-step blending changes the trajectory") {
    auto cfg = small_config();
    cfg.sar.enabled = false;
    const Stack s(cfg);
    const auto base = generate_story(s.engine(cfg), script);
    cfg.twb.reapply_per_step = true;
    const auto per_step = generate_story(s.engine(cfg), script);
    CHECK(per_step.blend_plans[0].blend_mode == BlendMode::kPerStep);
    CHECK(base.segments[0].frames == per_step.segments[0].frames);
    CHECK(base.segments[1].frames != per_step.segments[1].frames);
    CHECK(per_step.metrics.boundary_discontinuity[0] < base.metrics.boundary_discontinuity[0]);
  }
  SUBCASE("carried state and mean probe are honored") {
    auto cfg = small_config();
    const Stack s(cfg);
    const auto base = generate_story(s.engine(cfg), script);
    cfg.dipw_carry_state = true;
    const auto carried = generate_story(s.engine(cfg), script);
    CHECK(base.schedules[0][0].prev_sim_scene == carried.schedules[0][0].prev_sim_scene);
    CHECK(base.schedules[1][0].prev_sim_scene != carried.schedules[1][0].prev_sim_scene);
    cfg.dipw_carry_state = false;
    cfg.probe = ProbeSource::kMean;
    const auto mean = generate_story(s.engine(cfg), script);
    CHECK(base.schedules[0][0].sim_scene != mean.schedules[0][0].sim_scene);
  }
}

TEST_CASE("frame distance and metrics by hand") {
  LatentFrame a(4), b(4);
  a << 0, 0, 0, 0;
  b << 3, 4, 0, 0;
  CHECK(frame_distance(a, b) == doctest::Approx(5.0 / 4));
  CHECK_THROWS_AS(frame_distance(a, LatentFrame(3)), ArgumentError);

  SegmentLatents s1{1, {1, 1, 4}, Eigen::MatrixXf::Zero(4, 3)};
  s1.frames.col(1) = b;
  s1.frames.col(2) = b;
  SegmentLatents s2{2, {1, 1, 4}, Eigen::MatrixXf::Zero(4, 2)};
  const auto m = compute_metrics({s1, s2}, {{0.5, 0.6}, {0.7, 0.8}});
  REQUIRE(m.boundary_discontinuity.size() == 1);
  CHECK(m.boundary_discontinuity[0] == doctest::Approx(1.25));
  CHECK(m.intra_segment_smoothness[0] == doctest::Approx(0.625));
  CHECK(m.intra_segment_smoothness[1] == 0.0);
  CHECK(m.alignment_trace[1].action == 0.8);
}

TEST_CASE("random scripts satisfy structural invariants (property)") {
  const char* words[] = {"dog", "ball", "park", "runs", "city", "train", "sits", "red", "blue"};
  std::mt19937_64 rng(5);
  auto cfg = small_config(8);
  cfg.backbone.frames = 3;
  const Stack s(cfg);
  for (int trial = 0; trial < 20; ++trial) {
    StoryScript script{"random", {}};
    const std::size_t n = 1 + rng() % 4;
    for (std::size_t k = 1; k <= n; ++k) {
      std::string scene, action;
      for (int w = 0; w < 3; ++w) scene += std::string(words[rng() % 9]) + " ";
      for (int w = 0; w < 2; ++w) action += std::string(words[rng() % 9]) + " ";
      script.pairs.push_back({k, scene, action});
    }
    const auto run = generate_story(s.engine(cfg, rng()), script);
    CHECK(run.segments.size() == n);
    CHECK(run.blend_plans.size() == n - 1);
    for (const auto& plan : run.blend_plans) {
      CHECK(plan.gamma_effective >= 0.0);
      CHECK(plan.gamma_effective <= cfg.sar.clamp_max);
      // dissimilar actions (S_A < 0) may raise gamma up to the clamp
      if (plan.sar->similarity >= 0.0) CHECK(plan.gamma_effective <= 0.25 + 1e-15);
    }
    for (const auto& sched : run.schedules)
      for (const auto& r : sched) {
        CHECK(r.alpha_scene >= 0.0);
        CHECK(r.alpha_action <= 1.0);
      }
  }
}

TEST_CASE("backbone failure names the segment and keeps earlier output") {
  const auto cfg = small_config();
  const Stack s(cfg);
  const FailingBackbone failing(s.backbone, 2);
  const Engine engine = make_engine(s.provider, failing, cfg, 7);
  std::vector<std::size_t> seen;
  try {
    generate_story(engine, nyc3(), [&](const StoryRun& partial, std::size_t k) {
      seen.push_back(k);
      CHECK(partial.segments.size() == k);
    });
    FAIL("expected a SegmentError");
  } catch (const SegmentError& e) {
    CHECK(e.segment() == 2);
  }
  CHECK(seen == std::vector<std::size_t>{1});
}

TEST_CASE("invalid scripts are rejected up front") {
  const auto cfg = small_config();
  const Stack s(cfg);
  CHECK_THROWS_AS(generate_story(s.engine(cfg), StoryScript{"empty", {}}), ValidationError);
}

TEST_CASE("generate_many keeps input order") {
  const auto cfg = small_config(4);
  const Stack s(cfg);
  std::vector<std::function<StoryRun()>> tasks;
  for (std::uint64_t seed = 1; seed <= 6; ++seed)
    tasks.push_back([&, seed] { return generate_story(s.engine(cfg, seed), nyc3()); });
  const auto parallel = generate_many(tasks, 3);
  REQUIRE(parallel.size() == 6);
  for (std::uint64_t seed = 1; seed <= 6; ++seed) {
    CHECK(parallel[seed - 1].seed == seed);
    const auto serial = generate_story(s.engine(cfg, seed), nyc3());
    CHECK(parallel[seed - 1].segments[2].frames == serial.segments[2].frames);
  }
  tasks.push_back([]() -> StoryRun { throw IoError("boom"); });
  CHECK_THROWS_AS(generate_many(tasks, 2), IoError);
}
