// Copyright 2026 The narrablend Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <sys/socket.h>
#include <sys/un.h>
#include <unistd.h>

#include <cstring>
#include <random>
#include <thread>

#include "fake_bridge.hpp"
#include "nb/error.hpp"
#include "nb/run_io.hpp"
#include "test_util.hpp"

using namespace nb;
using nb::testing::FakeBridge;
using nb::testing::FakeBridgeOptions;
using nlohmann::json;

namespace {

RunConfig small_config() {
  RunConfig cfg;
  cfg.backbone.steps = 8;
  cfg.backbone.frames = 3;
  return cfg;
}

// A connection to a FakeBridge running on a thread over a socketpair.
struct Session {
  std::shared_ptr<BridgeConnection> conn;
  std::thread server;

  explicit Session(FakeBridgeOptions opts) {
    int fds[2];
    REQUIRE(::socketpair(AF_UNIX, SOCK_STREAM, 0, fds) == 0);
    server = std::thread([opts = std::move(opts), fd = fds[1]] {
      FakeBridge(opts).serve(fd, fd);
      ::close(fd);
    });
    conn = BridgeConnection::from_fds(fds[0], fds[0]);
  }
  ~Session() {
    conn.reset();
    server.join();
  }
};

FakeBridgeOptions options_for(const RunConfig& cfg, std::uint64_t seed) {
  FakeBridgeOptions opts;
  opts.seed = seed;
  opts.dim = cfg.embedding_dim;
  opts.backbone = cfg.backbone;
  return opts;
}

}  // namespace

TEST_CASE("base64 known vectors") {
  CHECK(base64_encode("") == "");
  CHECK(base64_encode("f") == "Zg==");
  CHECK(base64_encode("fo") == "Zm8=");
  CHECK(base64_encode("foo") == "Zm9v");
  CHECK(base64_encode("foobar") == "Zm9vYmFy");
  CHECK(base64_decode("Zm9vYg==") == "foob");
  CHECK_THROWS_AS(base64_decode("Zm9"), ProtocolError);
  CHECK_THROWS_AS(base64_decode("Zm!v"), ProtocolError);
  CHECK_THROWS_AS(base64_decode("Zg==Zg=="), ProtocolError);
}

TEST_CASE("base64 and f32le round trip (property)") {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 300; ++trial) {
    std::string bytes(rng() % 70, '\0');
    for (auto& c : bytes) c = static_cast<char>(rng() & 0xff);
    CHECK(base64_decode(base64_encode(bytes)) == bytes);

    std::vector<float> values(rng() % 40);
    for (auto& v : values) v = std::bit_cast<float>(static_cast<std::uint32_t>(rng()) & 0xff7fffffu);
    const auto back = decode_f32le(encode_f32le(values.data(), values.size()), values.size());
    CHECK(std::memcmp(back.data(), values.data(), values.size() * 4) == 0);
  }
  const float one = 1.0f;
  CHECK(encode_f32le(&one, 1) == "AACAPw==");
  CHECK_THROWS_AS(decode_f32le("AACAPw==", 2), ProtocolError);
}

TEST_CASE("embedding payload checks") {
  CHECK(embedding_from_json(json::array({0.6, 0.8}), 2)[1] == 0.8);
  const auto nearly = embedding_from_json(json::array({0.60003, 0.8}), 2);
  CHECK(std::abs(nearly.norm() - 1.0) < 1e-15);
  CHECK_THROWS_AS(embedding_from_json(json::array({0.6, 0.9}), 2), ProtocolError);
  CHECK_THROWS_AS(embedding_from_json(json::array({1.0}), 2), ProtocolError);
  CHECK_THROWS_AS(embedding_from_json(json::array({1.0, "x"}), 2), ProtocolError);
}

TEST_CASE("hello and provider over the wire") {
  const auto cfg = small_config();
  Session s(options_for(cfg, 7));
  const auto& hello = s.conn->hello();
  CHECK(hello.dim == 64);
  CHECK(hello.latent_shape == cfg.backbone.shape);
  CHECK(hello.deterministic);

  BridgeEmbeddingProvider remote(s.conn);
  const MockEmbeddingProvider local(7, 64);
  CHECK(remote.dimension() == 64);
  CHECK(remote.embed_text("a corgi dog is sitting") == local.embed_text("a corgi dog is sitting"));
  CHECK_THROWS_AS(remote.embed_text("  "), ArgumentError);

  BridgeBackbone backbone(s.conn);
  const ToyBackbone toy(cfg.backbone, 64, 7);
  const auto z = toy.init_noise(1, 3, 5);
  CHECK(backbone.frame_probe(z.frame(1)) == toy.frame_probe(z.frame(1)));
  auto a = z, b = z;
  backbone.denoise_step(a, local.embed_text("x"), {}, 2, 5);
  toy.denoise_step(b, local.embed_text("x"), {}, 2, 5);
  CHECK(a.frames == b.frames);
}

TEST_CASE("bridge-driven run equals the in-process run") {
  const auto cfg = small_config();
  const auto script = testing::nyc3();
  const auto local_dir = testing::scratch_dir("bridge_local");
  const auto remote_dir = testing::scratch_dir("bridge_remote");
  {
    const MockEmbeddingProvider provider(7, 64);
    const ToyBackbone toy(cfg.backbone, 64, 7);
    run_to_directory(make_engine(provider, toy, cfg, 7), script, local_dir, "toy");
  }
  {
    Session s(options_for(cfg, 7));
    const BridgeEmbeddingProvider provider(s.conn);
    const BridgeBackbone backbone(s.conn);
    run_to_directory(make_engine(provider, backbone, cfg, 7), script, remote_dir, "bridge");
  }
  CHECK(read_file(local_dir / "weights.csv") == read_file(remote_dir / "weights.csv"));
  CHECK(read_file(local_dir / "blend_plans.json") == read_file(remote_dir / "blend_plans.json"));
  for (int k = 1; k <= 3; ++k) {
    const auto name = "segment_" + std::to_string(k) + ".f32le";
    CHECK(read_file(local_dir / name) == read_file(remote_dir / name));
  }
}

TEST_CASE("server dying mid-run surfaces as a segment failure") {
  const auto cfg = small_config();
  auto opts = options_for(cfg, 7);
  opts.die_after_steps = 10;  // inside segment 2
  Session s(opts);
  const BridgeEmbeddingProvider provider(s.conn);
  const BridgeBackbone backbone(s.conn);
  const auto dir = testing::scratch_dir("bridge_dies");
  try {
    run_to_directory(make_engine(provider, backbone, cfg, 7), testing::nyc3(), dir, "bridge");
    FAIL("expected a SegmentError");
  } catch (const SegmentError& e) {
    CHECK(e.segment() == 2);
    CHECK(std::string(e.what()).find("closed") != std::string::npos);
  }
  CHECK(std::filesystem::exists(dir / "segment_1.f32le"));
  CHECK_THROWS_AS(s.conn->call("hello", json::object()), TransportError);
}

TEST_CASE("protocol violations") {
  const auto cfg = small_config();
  SUBCASE("mismatched id") {
    auto opts = options_for(cfg, 1);
    opts.wrong_id = true;
    Session s(opts);
    CHECK_THROWS_AS(s.conn->hello(), ProtocolError);
  }
  SUBCASE("error response") {
    auto opts = options_for(cfg, 1);
    opts.fail_embed = true;
    Session s(opts);
    BridgeEmbeddingProvider provider(s.conn);
    try {
      provider.embed_text("hello");
      FAIL("expected a TransportError");
    } catch (const ProtocolError&) {
      FAIL("error responses are not protocol violations");
    } catch (const TransportError& e) {
      CHECK(std::string(e.what()).find("encoder unavailable") != std::string::npos);
    }
    CHECK_THROWS_AS(s.conn->call("no_such_method", json::object()), TransportError);
  }
  SUBCASE("non-unit embeddings") {
    auto opts = options_for(cfg, 1);
    opts.embedding_scale = 1.01;
    Session s(opts);
    BridgeEmbeddingProvider provider(s.conn);
    CHECK_THROWS_AS(provider.embed_text("hello"), ProtocolError);
  }
}

TEST_CASE("metrics report validation") {
  const auto cfg = small_config();
  {
    Session s(options_for(cfg, 1));
    const auto m = s.conn->metrics("/tmp/run");
    CHECK(m.clip_add == 0.31);
    CHECK(m.lpips_chain == 0.18);
    CHECK(m.model == "fake");
  }
  {
    auto opts = options_for(cfg, 1);
    opts.metrics["dino"] = 1.5;
    Session s(opts);
    CHECK_THROWS_AS(s.conn->metrics("/tmp/run"), ProtocolError);
  }
  {
    auto opts = options_for(cfg, 1);
    opts.metrics.erase("lpips_chain");
    Session s(opts);
    CHECK_THROWS_AS(s.conn->metrics("/tmp/run"), ProtocolError);
  }
}

TEST_CASE("endpoints") {
  CHECK_THROWS_AS(BridgeConnection::connect("unix:/nonexistent/narrablend.sock"), TransportError);
  CHECK_THROWS_AS(BridgeConnection::connect("tcp:nohostport"), TransportError);

  SUBCASE("stdio") {
    auto conn = BridgeConnection::connect(std::string("stdio:") + NB_FAKE_BRIDGE + " 3 8 3");
    CHECK(conn->hello().dim == 64);
    conn->shutdown();
    CHECK_THROWS_AS(conn->call("hello", json::object()), TransportError);
  }

  SUBCASE("stdio peer that exits at once") {
    auto conn = BridgeConnection::connect("stdio:exit 0");
    CHECK_THROWS_AS(conn->hello(), TransportError);
  }

  SUBCASE("unix socket") {
    const auto path = testing::scratch_dir("bridge_unix") / "s.sock";
    const int listener = ::socket(AF_UNIX, SOCK_STREAM, 0);
    sockaddr_un addr{};
    addr.sun_family = AF_UNIX;
    std::strncpy(addr.sun_path, path.c_str(), sizeof(addr.sun_path) - 1);
    REQUIRE(::bind(listener, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) == 0);
    REQUIRE(::listen(listener, 1) == 0);
    std::thread server([listener] {
      const int fd = ::accept(listener, nullptr, nullptr);
      FakeBridge(FakeBridgeOptions{}).serve(fd, fd);
      ::close(fd);
    });
    {
      auto conn = BridgeConnection::connect("unix:" + path.string());
      CHECK(conn->hello().latent_shape == LatentShape{});
    }
    server.join();
    ::close(listener);
  }
}
