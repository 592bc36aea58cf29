// Copyright 2026 The narrablend Authors
// SPDX-License-Identifier: Apache-2.0

#include "nb/bridge_client.hpp"

#include <array>
#include <bit>
#include <cerrno>
#include <csignal>
#include <cstring>

#include <netdb.h>
#include <sys/socket.h>
#include <sys/types.h>
#include <sys/un.h>
#include <sys/wait.h>
#include <unistd.h>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "nb/error.hpp"
#include "nb/script.hpp"

namespace nb {

using json = nlohmann::json;

namespace {

constexpr std::string_view kAlphabet =
    "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

void ignore_sigpipe() {
  static const bool done = [] {
    std::signal(SIGPIPE, SIG_IGN);
    return true;
  }();
  (void)done;
}

int connect_unix(const std::string& path) {
  sockaddr_un addr{};
  addr.sun_family = AF_UNIX;
  if (path.size() >= sizeof(addr.sun_path)) throw TransportError("unix socket path too long");
  std::memcpy(addr.sun_path, path.c_str(), path.size() + 1);
  const int fd = ::socket(AF_UNIX, SOCK_STREAM, 0);
  if (fd < 0) throw TransportError(std::string("socket: ") + std::strerror(errno));
  if (::connect(fd, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0) {
    const int err = errno;
    ::close(fd);
    throw TransportError(fmt::format("connect {}: {}", path, std::strerror(err)));
  }
  return fd;
}

int connect_tcp(const std::string& hostport) {
  const auto colon = hostport.rfind(':');
  if (colon == std::string::npos) throw TransportError("tcp endpoint needs host:port");
  const std::string host = hostport.substr(0, colon);
  const std::string port = hostport.substr(colon + 1);
  addrinfo hints{};
  hints.ai_family = AF_UNSPEC;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  if (const int rc = ::getaddrinfo(host.c_str(), port.c_str(), &hints, &res); rc != 0)
    throw TransportError(fmt::format("resolve {}: {}", hostport, gai_strerror(rc)));
  int fd = -1;
  for (addrinfo* p = res; p != nullptr; p = p->ai_next) {
    fd = ::socket(p->ai_family, p->ai_socktype, p->ai_protocol);
    if (fd < 0) continue;
    if (::connect(fd, p->ai_addr, p->ai_addrlen) == 0) break;
    ::close(fd);
    fd = -1;
  }
  ::freeaddrinfo(res);
  if (fd < 0) throw TransportError("cannot connect to " + hostport);
  return fd;
}

}  // namespace

std::string base64_encode(std::string_view bytes) {
  std::string out;
  out.reserve((bytes.size() + 2) / 3 * 4);
  std::size_t i = 0;
  for (; i + 2 < bytes.size(); i += 3) {
    const std::uint32_t v = (std::uint32_t(std::uint8_t(bytes[i])) << 16) |
                            (std::uint32_t(std::uint8_t(bytes[i + 1])) << 8) |
                            std::uint32_t(std::uint8_t(bytes[i + 2]));
    out += kAlphabet[(v >> 18) & 63];
    out += kAlphabet[(v >> 12) & 63];
    out += kAlphabet[(v >> 6) & 63];
    out += kAlphabet[v & 63];
  }
  const std::size_t rest = bytes.size() - i;
  if (rest > 0) {
    std::uint32_t v = std::uint32_t(std::uint8_t(bytes[i])) << 16;
    if (rest == 2) v |= std::uint32_t(std::uint8_t(bytes[i + 1])) << 8;
    out += kAlphabet[(v >> 18) & 63];
    out += kAlphabet[(v >> 12) & 63];
    out += rest == 2 ? kAlphabet[(v >> 6) & 63] : '=';
    out += '=';
  }
  return out;
}

std::string base64_decode(std::string_view text) {
  std::array<int, 256> table;
  table.fill(-1);
  for (std::size_t i = 0; i < kAlphabet.size(); ++i) table[std::uint8_t(kAlphabet[i])] = int(i);
  if (text.size() % 4 != 0) throw ProtocolError("base64 length is not a multiple of 4");
  std::string out;
  out.reserve(text.size() / 4 * 3);
  for (std::size_t i = 0; i < text.size(); i += 4) {
    std::uint32_t v = 0;
    int pad = 0;
    for (int k = 0; k < 4; ++k) {
      const char c = text[i + k];
      if (c == '=' && i + 4 == text.size() && k >= 2) {
        ++pad;
        v <<= 6;
        continue;
      }
      const int d = table[std::uint8_t(c)];
      if (d < 0 || pad > 0) throw ProtocolError("invalid base64 payload");
      v = (v << 6) | std::uint32_t(d);
    }
    out += char((v >> 16) & 0xff);
    if (pad < 2) out += char((v >> 8) & 0xff);
    if (pad < 1) out += char(v & 0xff);
  }
  return out;
}

std::string encode_f32le(const float* data, std::size_t count) {
  std::string bytes;
  bytes.reserve(count * 4);
  for (std::size_t i = 0; i < count; ++i) {
    const auto bits = std::bit_cast<std::uint32_t>(data[i]);
    for (int b = 0; b < 4; ++b) bytes.push_back(char((bits >> (8 * b)) & 0xffu));
  }
  return base64_encode(bytes);
}

std::vector<float> decode_f32le(std::string_view base64, std::size_t expected_count) {
  const std::string bytes = base64_decode(base64);
  if (bytes.size() != expected_count * 4)
    throw ProtocolError(fmt::format("latent payload has {} bytes, expected {}", bytes.size(),
                                    expected_count * 4));
  std::vector<float> out(expected_count);
  for (std::size_t i = 0; i < expected_count; ++i) {
    std::uint32_t bits = 0;
    for (int b = 0; b < 4; ++b) bits |= std::uint32_t(std::uint8_t(bytes[4 * i + b])) << (8 * b);
    out[i] = std::bit_cast<float>(bits);
  }
  return out;
}

BridgeConnection::BridgeConnection(int read_fd, int write_fd, int child_pid)
    : read_fd_(read_fd), write_fd_(write_fd), child_pid_(child_pid) {
  ignore_sigpipe();
}

std::shared_ptr<BridgeConnection> BridgeConnection::from_fds(int read_fd, int write_fd) {
  return std::shared_ptr<BridgeConnection>(new BridgeConnection(read_fd, write_fd, -1));
}

std::shared_ptr<BridgeConnection> BridgeConnection::connect(const std::string& endpoint) {
  if (endpoint.rfind("unix:", 0) == 0) {
    const int fd = connect_unix(endpoint.substr(5));
    return from_fds(fd, fd);
  }
  if (endpoint.rfind("stdio:", 0) == 0) {
    const std::string command = endpoint.substr(6);
    int to_child[2];
    int from_child[2];
    if (::pipe(to_child) != 0 || ::pipe(from_child) != 0)
      throw TransportError(std::string("pipe: ") + std::strerror(errno));
    const pid_t pid = ::fork();
    if (pid < 0) throw TransportError(std::string("fork: ") + std::strerror(errno));
    if (pid == 0) {
      ::dup2(to_child[0], STDIN_FILENO);
      ::dup2(from_child[1], STDOUT_FILENO);
      ::close(to_child[0]);
      ::close(to_child[1]);
      ::close(from_child[0]);
      ::close(from_child[1]);
      ::execl("/bin/sh", "sh", "-c", command.c_str(), static_cast<char*>(nullptr));
      ::_exit(127);
    }
    ::close(to_child[0]);
    ::close(from_child[1]);
    return std::shared_ptr<BridgeConnection>(
        new BridgeConnection(from_child[0], to_child[1], static_cast<int>(pid)));
  }
  const std::string hostport = endpoint.rfind("tcp:", 0) == 0 ? endpoint.substr(4) : endpoint;
  const int fd = connect_tcp(hostport);
  return from_fds(fd, fd);
}

BridgeConnection::~BridgeConnection() {
  try {
    shutdown();
  } catch (const std::exception& e) {
    spdlog::debug("bridge shutdown: {}", e.what());
  }
  if (read_fd_ >= 0) ::close(read_fd_);
  if (write_fd_ >= 0 && write_fd_ != read_fd_) ::close(write_fd_);
  if (child_pid_ > 0) {
    int status = 0;
    ::waitpid(child_pid_, &status, 0);
  }
}

void BridgeConnection::write_all(std::string_view data) {
  while (!data.empty()) {
    const ssize_t n = ::write(write_fd_, data.data(), data.size());
    if (n < 0) {
      if (errno == EINTR) continue;
      closed_ = true;
      throw TransportError(std::string("bridge write: ") + std::strerror(errno));
    }
    data.remove_prefix(static_cast<std::size_t>(n));
  }
}

std::string BridgeConnection::read_line() {
  for (;;) {
    if (const auto nl = buffer_.find('\n'); nl != std::string::npos) {
      std::string line = buffer_.substr(0, nl);
      buffer_.erase(0, nl + 1);
      return line;
    }
    char chunk[65536];
    const ssize_t n = ::read(read_fd_, chunk, sizeof(chunk));
    if (n < 0) {
      if (errno == EINTR) continue;
      closed_ = true;
      throw TransportError(std::string("bridge read: ") + std::strerror(errno));
    }
    if (n == 0) {
      closed_ = true;
      throw TransportError("bridge closed the connection");
    }
    buffer_.append(chunk, static_cast<std::size_t>(n));
  }
}

json BridgeConnection::call(const std::string& method, json params) {
  std::lock_guard lock(mutex_);
  if (closed_) throw TransportError("bridge connection is closed");
  const std::int64_t id = next_id_++;
  json request = {{"id", id}, {"method", method}, {"params", std::move(params)}};
  write_all(request.dump() + "\n");

  json response;
  try {
    response = json::parse(read_line());
  } catch (const json::parse_error& e) {
    throw ProtocolError(std::string("malformed bridge frame: ") + e.what());
  }
  if (!response.is_object() || !response.contains("id") || !response["id"].is_number_integer())
    throw ProtocolError("bridge response without integer id");
  if (response["id"].get<std::int64_t>() != id)
    throw ProtocolError(fmt::format("bridge response id {} does not match request {}",
                                    response["id"].get<std::int64_t>(), id));
  const bool has_result = response.contains("result");
  const bool has_error = response.contains("error");
  if (has_result == has_error) throw ProtocolError("bridge response needs exactly one of result/error");
  if (has_error) {
    const auto& err = response["error"];
    const std::string msg = err.is_object() ? err.value("message", err.dump()) : err.dump();
    throw TransportError(fmt::format("bridge {} failed: {}", method, msg));
  }
  return response["result"];
}

const BridgeHello& BridgeConnection::hello() {
  if (hello_) return *hello_;
  const json r = call("hello", json::object());
  try {
    auto h = std::make_unique<BridgeHello>();
    h->dim = r.at("dim").get<int>();
    const auto& s = r.at("latent_shape");
    h->latent_shape = {s.at(0).get<int>(), s.at(1).get<int>(), s.at(2).get<int>()};
    h->deterministic = r.value("deterministic", false);
    if (h->dim < 2) throw ProtocolError("hello: dimension must be >= 2");
    hello_ = std::move(h);
  } catch (const json::exception& e) {
    throw ProtocolError(std::string("hello: ") + e.what());
  }
  return *hello_;
}

MetricReport BridgeConnection::metrics(const std::filesystem::path& run_dir) {
  const json r = call("metrics", {{"run_dir", run_dir.string()}});
  MetricReport m;
  try {
    m.clip_add = r.at("clip_add").get<double>();
    m.clip_combined = r.at("clip_combined").get<double>();
    m.dino = r.at("dino").get<double>();
    m.lpips_chain = r.at("lpips_chain").get<double>();
    m.model = r.value("model", "");
  } catch (const json::exception& e) {
    throw ProtocolError(std::string("metrics: ") + e.what());
  }
  const auto in_unit = [](double v) { return std::isfinite(v) && v >= -1.0 && v <= 1.0; };
  if (!in_unit(m.clip_add) || !in_unit(m.clip_combined) || !in_unit(m.dino))
    throw ProtocolError("metrics: similarity score outside [-1, 1]");
  if (!std::isfinite(m.lpips_chain) || m.lpips_chain < 0.0)
    throw ProtocolError("metrics: lpips must be finite and >= 0");
  return m;
}

void BridgeConnection::shutdown() {
  {
    std::lock_guard lock(mutex_);
    if (closed_) return;
  }
  try {
    call("shutdown", json::object());
  } catch (const TransportError&) {
    // peer may already be gone
  }
  std::lock_guard lock(mutex_);
  closed_ = true;
}

EmbeddingVector embedding_from_json(const json& values, int dim) {
  if (!values.is_array() || values.size() != static_cast<std::size_t>(dim))
    throw ProtocolError(fmt::format("embedding must be an array of {} numbers", dim));
  EmbeddingVector v(dim);
  for (int i = 0; i < dim; ++i) {
    if (!values[i].is_number()) throw ProtocolError("embedding entry is not a number");
    v[i] = values[i].get<double>();
  }
  const double n = v.norm();
  if (!(std::abs(n - 1.0) <= 1e-4)) throw ProtocolError(fmt::format("embedding norm {} is not 1", n));
  if (std::abs(n - 1.0) > 1e-12) v /= n;
  return v;
}

BridgeEmbeddingProvider::BridgeEmbeddingProvider(std::shared_ptr<BridgeConnection> conn)
    : conn_(std::move(conn)), hello_(conn_->hello()) {}

ProviderDescriptor BridgeEmbeddingProvider::descriptor() const {
  return {"bridge", hello_.dim, hello_.deterministic, 0};
}

EmbeddingVector BridgeEmbeddingProvider::embed_text(std::string_view text) const {
  if (is_blank(text)) throw ArgumentError("embed_text: empty text");
  const json r = conn_->call("embed_text", {{"text", std::string(text)}});
  if (!r.contains("embedding")) throw ProtocolError("embed_text: missing embedding");
  return embedding_from_json(r["embedding"], hello_.dim);
}

BridgeBackbone::BridgeBackbone(std::shared_ptr<BridgeConnection> conn)
    : conn_(std::move(conn)), hello_(conn_->hello()) {}

void BridgeBackbone::denoise_step(SegmentLatents& latents, const EmbeddingVector& conditioning,
                                  const AttentionMask& mask, int step, std::uint64_t seed) const {
  const auto count = static_cast<std::size_t>(latents.frames.size());
  json params = {
      {"segment", latents.segment_index},
      {"step", step},
      {"seed", seed},
      {"frames", latents.frame_count()},
      {"shape", {latents.shape.channels, latents.shape.height, latents.shape.width}},
      {"latents", encode_f32le(latents.frames.data(), count)},
      {"embedding", std::vector<double>(conditioning.data(), conditioning.data() + conditioning.size())},
      {"mask", {{"source", to_string(mask.source)}, {"token_count", mask.token_count}}},
  };
  const json r = conn_->call("denoise_step", std::move(params));
  if (!r.contains("latents") || !r["latents"].is_string())
    throw ProtocolError("denoise_step: missing latents");
  const auto values = decode_f32le(r["latents"].get<std::string>(), count);
  std::copy(values.begin(), values.end(), latents.frames.data());
}

EmbeddingVector BridgeBackbone::frame_probe(const LatentFrame& frame) const {
  const json r = conn_->call(
      "embed_frame",
      {{"shape", {hello_.latent_shape.channels, hello_.latent_shape.height, hello_.latent_shape.width}},
       {"frame", encode_f32le(frame.data(), static_cast<std::size_t>(frame.size()))}});
  if (!r.contains("embedding")) throw ProtocolError("embed_frame: missing embedding");
  return embedding_from_json(r["embedding"], hello_.dim);
}

}  // namespace nb
