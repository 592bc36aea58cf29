// Copyright 2026 The narrablend Authors
// SPDX-License-Identifier: Apache-2.0

#include "cli.hpp"

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <spdlog/sinks/stdout_sinks.h>
#include <spdlog/spdlog.h>

#include "nb/bridge_client.hpp"
#include "nb/config.hpp"
#include "nb/error.hpp"
#include "nb/orchestrator.hpp"
#include "nb/run_io.hpp"
#include "nb/script.hpp"

namespace nb::cli {

namespace fs = std::filesystem;

namespace {

void init_logging() {
  static const bool once = [] {
    auto logger = spdlog::stderr_logger_st("nb");
    spdlog::set_default_logger(logger);
    spdlog::set_pattern("[%l] %v");
    const char* env = std::getenv("NB_LOG");
    spdlog::set_level(env ? spdlog::level::from_str(env) : spdlog::level::warn);
    return true;
  }();
  (void)once;
}

struct RunOptions {
  std::string script_path;
  std::string config_path;
  std::string out_dir;
  std::uint64_t seed = 0;
  bool no_dipw = false;
  bool no_twb = false;
  bool no_sar = false;
  std::string backbone;
  std::string bridge_endpoint;
};

void add_run_flags(CLI::App* cmd, RunOptions& o) {
  cmd->add_option("--script", o.script_path, "story script JSON")->required();
  cmd->add_option("--config", o.config_path, "run configuration JSON");
  cmd->add_option("--out", o.out_dir, "output directory")->required();
  cmd->add_option("--seed", o.seed, "run seed (all randomness derives from it)");
  cmd->add_flag("--no-dipw", o.no_dipw, "fixed (0.5, 0.5) prompt weights");
  cmd->add_flag("--no-twb", o.no_twb, "disable boundary blending");
  cmd->add_flag("--no-sar", o.no_sar, "disable action-similarity modulation");
  cmd->add_option("--backbone", o.backbone, "toy or bridge")
      ->check(CLI::IsMember({"toy", "bridge"}));
  cmd->add_option("--bridge-endpoint", o.bridge_endpoint,
                  "unix:<path>, tcp:<host:port> or stdio:<command>");
}

// flag > config file > default
RunConfig effective_config(const RunOptions& o) {
  RunConfig cfg;
  if (!o.config_path.empty()) cfg = load_config(o.config_path, cfg);
  if (o.no_dipw) cfg.dipw_enabled = false;
  if (o.no_twb) cfg.twb_enabled = false;
  if (o.no_sar) cfg.sar.enabled = false;
  if (o.backbone == "toy") cfg.backbone_kind = BackboneKind::kToy;
  if (o.backbone == "bridge") cfg.backbone_kind = BackboneKind::kBridge;
  if (!o.bridge_endpoint.empty()) cfg.bridge_endpoint = o.bridge_endpoint;
  cfg.validate();
  return cfg;
}

/// Provider + backbone for one run, owned together.
struct Stack {
  std::shared_ptr<BridgeConnection> connection;
  std::unique_ptr<EmbeddingProvider> provider;
  std::unique_ptr<Backbone> backbone;
};

Stack build_stack(RunConfig& cfg, std::uint64_t seed) {
  Stack s;
  if (cfg.backbone_kind == BackboneKind::kBridge) {
    s.connection = BridgeConnection::connect(cfg.bridge_endpoint);
    const BridgeHello& hello = s.connection->hello();
    if (hello.dim != cfg.embedding_dim || !(hello.latent_shape == cfg.backbone.shape))
      spdlog::info("bridge negotiated dim={} shape={}x{}x{}", hello.dim, hello.latent_shape.channels,
                   hello.latent_shape.height, hello.latent_shape.width);
    cfg.embedding_dim = hello.dim;
    cfg.backbone.shape = hello.latent_shape;
    s.provider = std::make_unique<BridgeEmbeddingProvider>(s.connection);
    s.backbone = std::make_unique<BridgeBackbone>(s.connection);
  } else {
    s.provider = std::make_unique<MockEmbeddingProvider>(seed, cfg.embedding_dim);
    s.backbone = std::make_unique<ToyBackbone>(cfg.backbone, cfg.embedding_dim, seed);
  }
  return s;
}

template <typename F>
int guarded(F&& body) {
  try {
    return body();
  } catch (const ConfigError& e) {
    std::cerr << "config error: key=" << e.key() << " " << e.what() << "\n";
    return kInvalid;
  } catch (const ValidationError& e) {
    std::cerr << "invalid script: " << e.what() << "\n";
    return kInvalid;
  } catch (const ParseError& e) {
    std::cerr << "parse error at byte " << e.byte_offset() << ": " << e.what() << "\n";
    return kInvalid;
  } catch (const ArgumentError& e) {
    std::cerr << "invalid argument: " << e.what() << "\n";
    return kInvalid;
  } catch (const IoError& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return kIo;
  } catch (const SegmentError& e) {
    std::cerr << "generation failed at segment " << e.segment() << ": " << e.what() << "\n";
    return kRuntime;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kRuntime;
  }
}

int report_all_errors(const std::string& raw);

int cmd_validate(const std::string& path) {
  std::string raw;
  try {
    raw = read_file(path);
  } catch (const IoError& e) {
    std::cerr << "segment=0 msg=" << e.what() << "\n";
    return kIo;
  }
  // parse failures and invariant violations both surface as diagnostics
  StoryScript script;
  try {
    script = parse_script(raw);
  } catch (const ParseError& e) {
    std::cerr << "segment=0 msg=parse error at byte " << e.byte_offset() << ": " << e.what() << "\n";
    return kInvalid;
  } catch (const ValidationError& e) {
    // re-parse leniently to list every diagnostic, not just the first
    try {
      return report_all_errors(raw);
    } catch (const nlohmann::json::exception&) {
      std::cerr << "segment=0 msg=" << e.what() << "\n";
      return kInvalid;
    }
  }
  for (const auto& d : validate_script(script).notes)
    spdlog::info("segment={} note={}", d.segment, d.message);
  return kOk;
}

int report_all_errors(const std::string& raw) {
  {
    const auto doc = nlohmann::json::parse(raw);
    StoryScript loose;
    loose.story_id = doc.value("story_id", "");
    if (doc.contains("segments")) {
      for (const auto& seg : doc["segments"])
        loose.pairs.push_back({loose.pairs.size() + 1, seg.value("scene", ""), seg.value("action", "")});
    } else if (doc.contains("prompts")) {
      const auto& p = doc["prompts"];
      if (p.size() % 2 != 0) {
        std::cerr << "segment=0 msg=flat prompt list has odd length " << p.size() << "\n";
        return kInvalid;
      }
      for (std::size_t i = 0; i < p.size(); i += 2)
        loose.pairs.push_back({i / 2 + 1, p[i].get<std::string>(), p[i + 1].get<std::string>()});
    }
    for (const auto& d : validate_script(loose).errors)
      std::cerr << "segment=" << d.segment << " msg=" << d.message << "\n";
    return kInvalid;
  }
}

int cmd_generate(const RunOptions& o) {
  const StoryScript script = load_script(o.script_path);
  RunConfig cfg = effective_config(o);
  Stack stack = build_stack(cfg, o.seed);
  const Engine engine = make_engine(*stack.provider, *stack.backbone, cfg, o.seed);

  RunWriter writer(o.out_dir, stack.backbone->name());
  writer.begin(script, engine.config, engine.seed);
  const StoryRun run = generate_story(engine, script, [&](const StoryRun& partial, std::size_t k) {
    writer.on_segment(partial, k);
    const auto& last = partial.schedules[k - 1].back();
    const std::string disc =
        k > 1 ? fmt::format("{}", partial.metrics.boundary_discontinuity[k - 2]) : "none";
    std::cout << fmt::format("segment={} steps={} alpha_final={} boundary_disc={}\n", k,
                             partial.schedules[k - 1].size(), last.alpha_action, disc);
  });
  writer.finish(run);
  return kOk;
}

struct SweepOptions {
  RunOptions base;
  std::vector<double> gammas;
  std::vector<double> taus;
  std::vector<double> decay_bases;
  std::vector<std::string> sar_modes;
  std::vector<std::string> arms;
  unsigned jobs = 1;
};

struct Arm {
  bool dipw = true, twb = true, sar = true;
};

Arm parse_arm(const std::string& text) {
  Arm arm;
  if (text == "full") return arm;
  std::stringstream ss(text);
  std::string part;
  while (std::getline(ss, part, '+')) {
    if (part == "no-dipw") arm.dipw = false;
    else if (part == "no-twb") arm.twb = false;
    else if (part == "no-sar") arm.sar = false;
    else throw ConfigError("--ablation", "unknown arm '" + part + "'");
  }
  return arm;
}

double mean_of(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  double s = 0.0;
  for (double x : v) s += x;
  return s / double(v.size());
}

int cmd_sweep(const SweepOptions& o) {
  const StoryScript script = load_script(o.base.script_path);
  const RunConfig base = effective_config(o.base);

  const auto or_default = [](std::vector<double> v, double d) {
    return v.empty() ? std::vector<double>{d} : v;
  };
  const auto gammas = or_default(o.gammas, base.twb.gamma);
  const auto taus = or_default(o.taus, base.dipw.tau);
  const auto bases = or_default(o.decay_bases, base.twb.decay_base);
  const auto modes = o.sar_modes.empty() ? std::vector<std::string>{to_string(base.sar.mode)} : o.sar_modes;
  const auto arms = o.arms.empty() ? std::vector<std::string>{"full"} : o.arms;

  struct Point {
    RunConfig cfg;
    std::string arm;
    fs::path dir;
  };
  std::vector<Point> points;
  for (const auto& arm_name : arms)
    for (const auto& mode : modes)
      for (double b : bases)
        for (double t : taus)
          for (double g : gammas) {
            Point p{base, arm_name, fs::path(o.base.out_dir) / fmt::format("point_{:03}", points.size())};
            const Arm arm = parse_arm(arm_name);
            p.cfg.dipw_enabled = base.dipw_enabled && arm.dipw;
            p.cfg.twb_enabled = base.twb_enabled && arm.twb;
            p.cfg.sar.enabled = base.sar.enabled && arm.sar;
            p.cfg.twb.gamma = g;
            p.cfg.dipw.tau = t;
            p.cfg.twb.decay_base = b;
            try {
              p.cfg.sar.mode = sar_mode_from_string(mode);
            } catch (const ArgumentError& e) {
              throw ConfigError("--sar-mode", e.what());
            }
            p.cfg.validate();
            points.push_back(std::move(p));
          }

  fs::create_directories(o.base.out_dir);
  std::vector<std::function<StoryRun()>> tasks;
  for (const auto& p : points) {
    tasks.push_back([&p, &script, seed = o.base.seed] {
      RunConfig cfg = p.cfg;
      Stack stack = build_stack(cfg, seed);
      const Engine engine = make_engine(*stack.provider, *stack.backbone, cfg, seed);
      return run_to_directory(engine, script, p.dir, stack.backbone->name());
    });
  }
  const auto runs = generate_many(tasks, o.jobs);

  std::ostringstream csv;
  csv << "point,arm,gamma,tau,decay_base,sar_mode,dipw,twb,sar,mean_boundary_disc,"
         "mean_intra_smoothness,mean_abs_alpha_dev,mean_align_scene,mean_align_action,dir\n";
  for (std::size_t i = 0; i < points.size(); ++i) {
    const auto& p = points[i];
    const auto& run = runs[i];
    double dev = 0.0, align_scene = 0.0, align_action = 0.0;
    std::size_t rows = 0;
    for (const auto& sched : run.schedules)
      for (const auto& r : sched) {
        dev += std::abs(r.alpha_scene - 0.5);
        ++rows;
      }
    for (const auto& a : run.metrics.alignment_trace) {
      align_scene += a.scene;
      align_action += a.action;
    }
    const double nseg = double(run.metrics.alignment_trace.size());
    csv << fmt::format("{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n", i, p.arm, p.cfg.twb.gamma,
                       p.cfg.dipw.tau, p.cfg.twb.decay_base, to_string(p.cfg.sar.mode),
                       int(p.cfg.dipw_enabled), int(p.cfg.twb_enabled), int(p.cfg.sar.enabled),
                       mean_of(run.metrics.boundary_discontinuity),
                       mean_of(run.metrics.intra_segment_smoothness),
                       rows ? dev / double(rows) : 0.0, align_scene / nseg, align_action / nseg,
                       p.dir.filename().string());
  }
  write_file(fs::path(o.base.out_dir) / "sweep_summary.csv", csv.str());
  std::cout << fmt::format("sweep points={} summary={}\n", points.size(),
                           (fs::path(o.base.out_dir) / "sweep_summary.csv").string());
  return kOk;
}

int cmd_inspect(const std::string& run_dir, std::size_t segment) {
  const std::string csv = read_file(fs::path(run_dir) / "weights.csv");
  std::istringstream in(csv);
  std::string line;
  std::getline(in, line);
  std::cout << "segment,step,alpha_scene,alpha_action,dominant\n";
  while (std::getline(in, line)) {
    std::vector<std::string> cols;
    std::stringstream ss(line);
    std::string c;
    while (std::getline(ss, c, ',')) cols.push_back(c);
    if (cols.size() != 13) throw IoError("malformed weights.csv row: " + line);
    if (segment != 0 && std::stoul(cols[0]) != segment) continue;
    std::cout << cols[0] << ',' << cols[1] << ',' << cols[10] << ',' << cols[11] << ',' << cols[12]
              << '\n';
  }
  return kOk;
}

}  // namespace

int run(int argc, char** argv) {
  init_logging();
  CLI::App app{"narrablend: multi-segment latent story generation"};
  app.require_subcommand(1);

  std::string validate_path;
  auto* validate = app.add_subcommand("validate", "check a story script");
  validate->add_option("--script,script", validate_path, "story script JSON")->required();

  RunOptions gen;
  auto* generate = app.add_subcommand("generate", "generate a story into a run directory");
  add_run_flags(generate, gen);

  SweepOptions sweep;
  auto* sweep_cmd = app.add_subcommand("sweep", "run a parameter grid");
  add_run_flags(sweep_cmd, sweep.base);
  sweep_cmd->add_option("--gamma", sweep.gammas, "TWB gamma values")->delimiter(',');
  sweep_cmd->add_option("--tau", sweep.taus, "DIPW temperatures")->delimiter(',');
  sweep_cmd->add_option("--decay-base", sweep.decay_bases, "TWB decay bases")->delimiter(',');
  sweep_cmd->add_option("--sar-mode", sweep.sar_modes, "within_pair,cross_segment")->delimiter(',');
  sweep_cmd->add_option("--ablation", sweep.arms, "arms: full, no-dipw, no-twb+no-sar, ...")
      ->delimiter(',');
  sweep_cmd->add_option("--jobs", sweep.jobs, "parallel grid points")->check(CLI::Range(1u, 256u));

  std::string inspect_dir;
  std::size_t inspect_segment = 0;
  auto* inspect = app.add_subcommand("inspect", "print the weight schedule of a run");
  inspect->add_option("--run", inspect_dir, "run directory")->required();
  inspect->add_option("--segment", inspect_segment, "only this segment (1-based)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kInvalid;
  }

  if (*validate) return cmd_validate(validate_path);
  if (*generate) return guarded([&] { return cmd_generate(gen); });
  if (*sweep_cmd) return guarded([&] { return cmd_sweep(sweep); });
  if (*inspect) return guarded([&] { return cmd_inspect(inspect_dir, inspect_segment); });
  return kInvalid;
}

int run(const std::vector<std::string>& args) {
  std::vector<std::string> copy = args;
  std::vector<char*> argv;
  for (auto& a : copy) argv.push_back(a.data());
  argv.push_back(nullptr);
  return run(static_cast<int>(copy.size()), argv.data());
}

}  // namespace nb::cli
