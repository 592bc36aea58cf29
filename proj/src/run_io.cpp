// Copyright 2026 The narrablend Authors
// SPDX-License-Identifier: Apache-2.0

#include "nb/run_io.hpp"

#include <bit>
#include <cstring>
#include <sstream>

#include <fmt/format.h>

#include "nb/error.hpp"

namespace nb {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

namespace {

static_assert(sizeof(float) == 4);

void put_f32le(std::string& out, float v) {
  auto bits = std::bit_cast<std::uint32_t>(v);
  for (int b = 0; b < 4; ++b) out.push_back(static_cast<char>((bits >> (8 * b)) & 0xffu));
}

float get_f32le(const unsigned char* p) {
  std::uint32_t bits = 0;
  for (int b = 0; b < 4; ++b) bits |= std::uint32_t(p[b]) << (8 * b);
  return std::bit_cast<float>(bits);
}

std::string segment_stem(std::size_t k) { return fmt::format("segment_{}", k); }

}  // namespace

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_file(const fs::path& path, const std::string& contents) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << contents;
  if (!out) throw IoError("write failed: " + path.string());
}

ojson blend_plan_to_json(const BlendPlan& plan) {
  ojson j;
  j["segment"] = plan.segment;
  j["F"] = plan.frame_count;
  j["decay_base"] = plan.decay_base;
  j["weights_normalized"] = plan.weights_normalized;
  j["gamma_configured"] = plan.gamma_configured;
  j["gamma_effective"] = plan.gamma_effective;
  j["blend"] = to_string(plan.blend_mode);
  if (plan.sar) {
    j["S_A"] = plan.sar->similarity;
    j["alpha_in"] = plan.sar->alpha_in;
    j["alpha_out"] = plan.sar->alpha_out;
    j["mode"] = to_string(plan.sar->mode);
    j["compared"] = {plan.sar->compared_first, plan.sar->compared_second};
  } else {
    j["S_A"] = nullptr;
    j["alpha_in"] = nullptr;
    j["alpha_out"] = nullptr;
    j["mode"] = plan.blend_mode == BlendMode::kOff ? "twb_off" : "sar_off";
  }
  return j;
}

ojson metrics_to_json(const RunMetrics& m) {
  ojson trace = ojson::array();
  for (const auto& a : m.alignment_trace) trace.push_back({{"scene", a.scene}, {"action", a.action}});
  ojson j;
  j["boundary_discontinuity"] = m.boundary_discontinuity;
  j["intra_segment_smoothness"] = m.intra_segment_smoothness;
  j["alignment_trace"] = std::move(trace);
  return j;
}

ojson run_manifest(const StoryRun& run, const std::string& backbone_name) {
  ojson j;
  j["story_id"] = run.script.story_id;
  j["segments"] = run.script.size();
  j["script_hash"] = script_hash(run.script);
  j["seed"] = run.seed;
  j["backbone"] = backbone_name;
  j["config"] = config_to_json(run.config);
  j["derived"] = {{"effective_gain", run.config.backbone.effective_gain()},
                  {"noise_schedule", run.config.backbone.resolved_schedule()}};
  return j;
}

void write_latents(const fs::path& dir, const SegmentLatents& latents, std::uint64_t seed) {
  const std::string stem = segment_stem(latents.segment_index);
  std::string bytes;
  bytes.reserve(static_cast<std::size_t>(latents.frames.size()) * 4);
  // column-major storage with one frame per column is (F, C*H*W) row-major
  for (Eigen::Index i = 0; i < latents.frames.size(); ++i) put_f32le(bytes, latents.frames.data()[i]);
  write_file(dir / (stem + ".f32le"), bytes);

  ojson side;
  side["segment"] = latents.segment_index;
  side["F"] = latents.frame_count();
  side["shape"] = {latents.shape.channels, latents.shape.height, latents.shape.width};
  side["seed"] = segment_seed(seed, latents.segment_index);
  side["dtype"] = "f32le";
  write_file(dir / (stem + ".json"), side.dump(2) + "\n");
}

SegmentLatents read_latents(const fs::path& f32le_path) {
  fs::path sidecar = f32le_path;
  sidecar.replace_extension(".json");
  nlohmann::json side;
  try {
    side = nlohmann::json::parse(read_file(sidecar));
  } catch (const nlohmann::json::exception& e) {
    throw IoError("bad sidecar " + sidecar.string() + ": " + e.what());
  }
  if (side.value("dtype", "") != "f32le") throw IoError("unsupported dtype in " + sidecar.string());
  SegmentLatents out;
  out.segment_index = side.at("segment").get<std::size_t>();
  out.shape = {side.at("shape").at(0).get<int>(), side.at("shape").at(1).get<int>(),
               side.at("shape").at(2).get<int>()};
  const auto frames = side.at("F").get<Eigen::Index>();
  const std::string bytes = read_file(f32le_path);
  if (bytes.size() != static_cast<std::size_t>(frames * out.shape.size() * 4))
    throw IoError("latent file size does not match sidecar: " + f32le_path.string());
  out.frames.resize(out.shape.size(), frames);
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  for (Eigen::Index i = 0; i < out.frames.size(); ++i) out.frames.data()[i] = get_f32le(p + 4 * i);
  return out;
}

RunWriter::RunWriter(fs::path dir, std::string backbone_name)
    : dir_(std::move(dir)), backbone_name_(std::move(backbone_name)) {
  std::error_code ec;
  fs::create_directories(dir_, ec);
  if (ec) throw IoError("cannot create run directory " + dir_.string() + ": " + ec.message());
}

void RunWriter::begin(const StoryScript& script, const RunConfig& config, std::uint64_t seed) {
  StoryRun header;
  header.script = script;
  header.config = config;
  header.seed = seed;
  write_file(dir_ / "run.json", run_manifest(header, backbone_name_).dump(2) + "\n");
  write_file(dir_ / "blend_plans.json", "[]\n");
  weights_.open(dir_ / "weights.csv", std::ios::binary | std::ios::trunc);
  if (!weights_) throw IoError("cannot write weights.csv");
  weights_ << kWeightsCsvHeader << '\n';
  weights_.flush();
}

void RunWriter::on_segment(const StoryRun& partial, std::size_t k) {
  for (const auto& rec : partial.schedules.at(k - 1)) weights_ << weights_csv_row(k, rec) << '\n';
  weights_.flush();
  if (!weights_) throw IoError("write failed: weights.csv");
  write_latents(dir_, partial.segments.at(k - 1), partial.seed);
  ojson plans = ojson::array();
  for (const auto& p : partial.blend_plans) plans.push_back(blend_plan_to_json(p));
  write_file(dir_ / "blend_plans.json", plans.dump(2) + "\n");
}

void RunWriter::finish(const StoryRun& run) {
  write_file(dir_ / "metrics.json", metrics_to_json(run.metrics).dump(2) + "\n");
}

StoryRun run_to_directory(const Engine& engine, const StoryScript& script, const fs::path& dir,
                          const std::string& backbone_name) {
  RunWriter writer(dir, backbone_name);
  writer.begin(script, engine.config, engine.seed);
  StoryRun run = generate_story(engine, script, [&](const StoryRun& partial, std::size_t k) {
    writer.on_segment(partial, k);
  });
  writer.finish(run);
  return run;
}

}  // namespace nb
