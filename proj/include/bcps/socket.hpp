// Copyright (c) bcps contributors.
// Licensed under the Apache 2.0 License.
#pragma once

#include <arpa/inet.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/socket.h>
#include <unistd.h>

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstring>
#include <deque>
#include <limits>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "bcps/client.hpp"
#include "bcps/codec.hpp"
#include "bcps/server.hpp"
#include "bcps/sim.hpp"

namespace bcps {

struct ShardEndpoint {
  std::string host = "127.0.0.1";
  uint16_t port = 0;
};

namespace net {

class Fd {
 public:
  Fd() = default;
  explicit Fd(int fd) : fd_(fd) {}
  Fd(Fd&& o) noexcept : fd_(o.fd_) { o.fd_ = -1; }
  Fd& operator=(Fd&& o) noexcept {
    if (this != &o) {
      close_fd();
      fd_ = o.fd_;
      o.fd_ = -1;
    }
    return *this;
  }
  Fd(const Fd&) = delete;
  Fd& operator=(const Fd&) = delete;
  ~Fd() { close_fd(); }

  int get() const { return fd_; }
  bool valid() const { return fd_ >= 0; }
  void reset(int fd = -1) {
    close_fd();
    fd_ = fd;
  }

 private:
  void close_fd() {
    if (fd_ >= 0) ::close(fd_);
    fd_ = -1;
  }
  int fd_ = -1;
};

inline void write_all(int fd, const uint8_t* p, size_t n) {
  while (n > 0) {
    ssize_t w = ::send(fd, p, n, MSG_NOSIGNAL);
    if (w < 0) {
      if (errno == EINTR) continue;
      throw ProtocolError(std::string("socket write failed: ") + std::strerror(errno));
    }
    p += w;
    n -= static_cast<size_t>(w);
  }
}

// False on clean EOF before the first byte; throws on mid-object EOF or error.
inline bool read_exact(int fd, uint8_t* p, size_t n) {
  size_t got = 0;
  while (got < n) {
    ssize_t r = ::recv(fd, p + got, n - got, 0);
    if (r < 0) {
      if (errno == EINTR) continue;
      throw ProtocolError(std::string("socket read failed: ") + std::strerror(errno));
    }
    if (r == 0) {
      if (got == 0) return false;
      throw ProtocolError("socket closed mid-frame");
    }
    got += static_cast<size_t>(r);
  }
  return true;
}

// Reads one length-prefixed frame; nullopt on clean EOF at a frame boundary.
inline std::optional<Message> read_frame(int fd) {
  uint8_t head[4];
  if (!read_exact(fd, head, 4)) return std::nullopt;
  uint32_t body_len = 0;
  for (int i = 0; i < 4; ++i) body_len = (body_len << 8) | head[i];
  if (body_len > kMaxFrameBody) throw ProtocolError("socket frame too large");
  std::vector<uint8_t> frame(4 + body_len);
  std::memcpy(frame.data(), head, 4);
  if (body_len > 0 && !read_exact(fd, frame.data() + 4, body_len))
    throw ProtocolError("socket closed mid-frame");
  std::string err;
  auto m = decode(frame, &err);
  if (!m) throw ProtocolError("socket frame rejected: " + err);
  return m;
}

inline void send_message(int fd, const Message& m) {
  auto bytes = encode(m);
  write_all(fd, bytes.data(), bytes.size());
}

inline Fd listen_on(const std::string& host, uint16_t port, uint16_t* bound) {
  Fd fd(::socket(AF_INET, SOCK_STREAM, 0));
  if (!fd.valid()) throw ProtocolError(std::string("socket() failed: ") + std::strerror(errno));
  int one = 1;
  ::setsockopt(fd.get(), SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(port);
  if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1)
    throw ConfigError("socket: bad listen address: " + host);
  if (::bind(fd.get(), reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0)
    throw ProtocolError(std::string("bind failed: ") + std::strerror(errno));
  if (::listen(fd.get(), 16) != 0)
    throw ProtocolError(std::string("listen failed: ") + std::strerror(errno));
  if (bound) {
    sockaddr_in got{};
    socklen_t len = sizeof got;
    if (::getsockname(fd.get(), reinterpret_cast<sockaddr*>(&got), &len) != 0)
      throw ProtocolError("getsockname failed");
    *bound = ntohs(got.sin_port);
  }
  return fd;
}

inline Fd connect_to(const ShardEndpoint& ep) {
  Fd fd(::socket(AF_INET, SOCK_STREAM, 0));
  if (!fd.valid()) throw ProtocolError(std::string("socket() failed: ") + std::strerror(errno));
  int one = 1;
  ::setsockopt(fd.get(), IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(ep.port);
  if (::inet_pton(AF_INET, ep.host.c_str(), &addr.sin_addr) != 1)
    throw ConfigError("socket: bad address: " + ep.host);
  for (int attempt = 0;; ++attempt) {
    if (::connect(fd.get(), reinterpret_cast<sockaddr*>(&addr), sizeof addr) == 0) return fd;
    if (attempt >= 50)
      throw ProtocolError(std::string("connect failed: ") + std::strerror(errno));
    std::this_thread::sleep_for(std::chrono::milliseconds(100));
    fd.reset(::socket(AF_INET, SOCK_STREAM, 0));
    ::setsockopt(fd.get(), IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
  }
}

}  // namespace net

// One shard served over TCP. A reader thread per accepted connection feeds a
// single event-loop thread that owns the ShardCore, so core handling stays
// strictly sequential; outbound writes also happen only on the event loop.
// The node quiesces when every client process has disconnected.
class ServerNode {
 public:
  ServerNode(int32_t shard, std::vector<TableSpec> specs, Topology topo, ConsistencyPolicy policy,
             const std::string& host, uint16_t port, int32_t batch_rows = 0,
             int64_t pull_timeout_ms = 30000)
      : topo_(topo), pull_timeout_(pull_timeout_ms),
        fd_of_(static_cast<size_t>(topo.processes), -1),
        core_(shard, std::move(specs), topo, policy,
              [this](Message&& m) { route(std::move(m)); }, batch_rows),
        listener_(net::listen_on(host, port, &port_)) {}

  uint16_t port() const { return port_; }

  // Asks a running serve loop to flush and exit; callable from any thread.
  void request_stop() {
    {
      std::lock_guard<std::mutex> lk(mu_);
      stop_ = true;
    }
    ::shutdown(listener_.get(), SHUT_RDWR);  // unblocks accept
    cv_.notify_all();
  }

  // Serves until every client process has connected and disconnected, or a
  // stop request drains the queue early.
  void run() {
    std::vector<std::thread> readers;
    const int32_t expected = topo_.processes;
    std::thread acceptor([&] {
      for (int32_t i = 0; i < expected; ++i) {
        int fd = ::accept(listener_.get(), nullptr, nullptr);
        if (fd < 0) break;
        int one = 1;
        ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
        std::lock_guard<std::mutex> lk(mu_);
        conns_.emplace_back(fd);
        readers.emplace_back([this, fd] { read_loop(fd); });
      }
    });

    std::unique_lock<std::mutex> lk(mu_);
    int32_t closed = 0;
    auto parked_since = std::chrono::steady_clock::now();
    bool had_parked = false;
    while (!stop_ && (closed < expected || !queue_.empty())) {
      if (queue_.empty()) {
        auto wait = std::chrono::milliseconds(had_parked ? 200 : 60000);
        cv_.wait_for(lk, wait);
      }
      while (!queue_.empty()) {
        Event ev = std::move(queue_.front());
        queue_.pop_front();
        if (ev.eof) {
          ++closed;
          continue;
        }
        if (ev.msg.sender.kind == NodeId::Kind::Client) {
          int32_t p = ev.msg.sender.index;
          if (p >= 0 && p < topo_.processes && fd_of_[static_cast<size_t>(p)] < 0)
            fd_of_[static_cast<size_t>(p)] = ev.fd;
        }
        core_.handle(ev.msg);
        sweep_emissions();
      }
      if (core_.parked_pulls() > 0) {
        if (!had_parked) {
          had_parked = true;
          parked_since = std::chrono::steady_clock::now();
        } else if (std::chrono::steady_clock::now() - parked_since >
                   std::chrono::milliseconds(pull_timeout_)) {
          core_.expire_parked();
          had_parked = false;
        }
      } else {
        had_parked = false;
      }
    }
    if (stop_) {
      // Push what is pending to still-connected clients and answer parked
      // pulls as unavailable. Half-close so each client sees a clean EOF at
      // a frame boundary; our readers keep draining until the clients hang
      // up in response, which keeps their last pushes off the error path.
      sweep_emissions();
      core_.expire_parked();
      for (auto& c : conns_) ::shutdown(c.get(), SHUT_WR);
    }
    lk.unlock();
    acceptor.join();
    for (auto& t : readers) t.join();
    conns_.clear();  // FIN to every client so their readers see EOF and exit
  }

  const ShardCore& core() const { return core_; }

 private:
  struct Event {
    Message msg;
    int fd = -1;
    bool eof = false;
  };

  void read_loop(int fd) {
    try {
      while (auto m = net::read_frame(fd)) {
        std::lock_guard<std::mutex> lk(mu_);
        queue_.push_back({std::move(*m), fd, false});
        cv_.notify_all();
      }
    } catch (const std::exception&) {
      // A dying peer ends its stream; quiescing on EOF covers both cases.
    }
    std::lock_guard<std::mutex> lk(mu_);
    queue_.push_back({{}, fd, true});
    cv_.notify_all();
  }

  // Runs on the event loop with mu_ held.
  void sweep_emissions() {
    for (ProcessId p = 0; p < topo_.processes; ++p) {
      if (fd_of_[static_cast<size_t>(p)] < 0) continue;
      while (core_.emission_pending(p) && core_.emit_push(p)) {
      }
    }
  }

  void route(Message&& m) {
    if (m.dest.kind != NodeId::Kind::Client) throw ContractViolation("server: bad destination");
    int fd = fd_of_[static_cast<size_t>(m.dest.index)];
    if (fd < 0) return;  // never heard from that process yet
    try {
      net::send_message(fd, m);
    } catch (const std::exception&) {
      // Peer already gone; its EOF event will retire the connection.
    }
  }

  Topology topo_;
  int64_t pull_timeout_;
  std::mutex mu_;
  std::condition_variable cv_;
  std::deque<Event> queue_;
  bool stop_ = false;
  std::vector<net::Fd> conns_;
  std::vector<int> fd_of_;
  ShardCore core_;
  uint16_t port_ = 0;  // must precede listener_: listen_on fills it
  net::Fd listener_;
};

// One client process over TCP: worker threads block on a shared ClientCore
// guarded by one mutex; reader threads (one per shard) apply inbound traffic
// and wake waiters. Acknowledgements flush eagerly after every applied batch.
class ClientNode {
 public:
  ClientNode(ProcessId process, std::vector<TableSpec> specs, Topology topo,
             ConsistencyPolicy policy, const std::vector<ShardEndpoint>& shards,
             int32_t auto_flush_incs = 64)
      : topo_(topo),
        core_(process, std::move(specs), topo, policy,
              [this](Message&& m) { route(std::move(m)); }, auto_flush_incs) {
    if (static_cast<int32_t>(shards.size()) != topo.shards)
      throw ConfigError("client: endpoint count must match shard count");
    for (const auto& ep : shards) conns_.push_back(net::connect_to(ep));
    open_readers_ = static_cast<int32_t>(conns_.size());
    readers_.reserve(conns_.size());
    for (size_t s = 0; s < conns_.size(); ++s)
      readers_.emplace_back([this, s] { read_loop(static_cast<int32_t>(s)); });
  }

  ~ClientNode() {
    try {
      shutdown();
    } catch (...) {
    }
  }

  double get(int32_t thread, const ParamKey& key) {
    std::unique_lock<std::mutex> lk(mu_);
    for (;;) {
      double v = 0.0;
      if (core_.try_get(thread, key, &v) == ClientCore::GetStatus::Ready) return v;
      wait_inbound(lk);
    }
  }

  void inc(int32_t thread, const ParamKey& key, double delta) {
    std::unique_lock<std::mutex> lk(mu_);
    while (!core_.try_inc(thread, key, delta)) wait_inbound(lk);
  }

  void clock(int32_t thread) {
    std::unique_lock<std::mutex> lk(mu_);
    while (!core_.try_clock(thread)) wait_inbound(lk);
  }

  void flush(int32_t thread) {
    std::lock_guard<std::mutex> lk(mu_);
    core_.flush(thread);
  }

  void finish(int32_t thread) {
    std::lock_guard<std::mutex> lk(mu_);
    core_.finish(thread);
    core_.ack_flush();
  }

  // Runs one worker program to completion on this node.
  void drive(int32_t thread, WorkerProgram& prog) {
    double v = std::numeric_limits<double>::quiet_NaN();
    for (;;) {
      if (stopping_.load(std::memory_order_relaxed))
        throw PeerShutdown("client: stop requested");
      if (open_readers_.load(std::memory_order_relaxed) == 0)
        throw PeerShutdown("client: every shard closed while operations were pending");
      OpRequest op = prog.next(v);
      v = std::numeric_limits<double>::quiet_NaN();
      switch (op.kind) {
        case OpRequest::Kind::Get:
          v = get(thread, op.key);
          break;
        case OpRequest::Kind::Inc:
          inc(thread, op.key, op.delta);
          break;
        case OpRequest::Kind::Clock:
          clock(thread);
          break;
        case OpRequest::Kind::Flush:
          flush(thread);
          break;
        case OpRequest::Kind::Done:
          finish(thread);
          return;
      }
    }
  }

  // Unblocks every waiting worker with PeerShutdown; the workers' owner then
  // runs shutdown() for the orderly close.
  void request_stop() {
    std::lock_guard<std::mutex> lk(mu_);
    stopping_ = true;
    cv_.notify_all();
  }

  // Final ack flush, then orderly close of the write sides; readers drain the
  // remaining server traffic until EOF.
  void shutdown() {
    {
      std::lock_guard<std::mutex> lk(mu_);
      if (closed_) return;
      closed_ = true;
      core_.ack_flush();
      for (auto& c : conns_) ::shutdown(c.get(), SHUT_WR);
    }
    for (auto& t : readers_)
      if (t.joinable()) t.join();
  }

  ClientCore& core() { return core_; }

 private:
  void wait_inbound(std::unique_lock<std::mutex>& lk) {
    if (stopping_) throw PeerShutdown("client: stop requested");
    if (open_readers_ == 0)
      throw PeerShutdown("client: every shard closed while operations were pending");
    core_.ack_flush();  // free budget before sleeping
    cv_.wait_for(lk, std::chrono::milliseconds(250));
  }

  void read_loop(int32_t shard) {
    try {
      while (auto m = net::read_frame(conns_[static_cast<size_t>(shard)].get())) {
        std::lock_guard<std::mutex> lk(mu_);
        core_.handle(*m);
        if (!closed_) core_.ack_flush();  // write side is gone after shutdown()
        cv_.notify_all();
      }
    } catch (const std::exception&) {
    }
    std::lock_guard<std::mutex> lk(mu_);
    --open_readers_;
    cv_.notify_all();
  }

  void route(Message&& m) {
    if (m.dest.kind != NodeId::Kind::Server) throw ContractViolation("client: bad destination");
    try {
      net::send_message(conns_[static_cast<size_t>(m.dest.index)].get(), m);
    } catch (const std::exception&) {
      // A failed send once a shard has hung up (or a stop was requested) is
      // the close race of an orderly shutdown, not a protocol error.
      if (stopping_.load(std::memory_order_relaxed) ||
          open_readers_ < static_cast<int32_t>(conns_.size()))
        throw PeerShutdown("client: a shard closed while operations were pending");
      throw;
    }
  }

  Topology topo_;
  std::mutex mu_;
  std::condition_variable cv_;
  std::vector<net::Fd> conns_;
  std::vector<std::thread> readers_;
  std::atomic<int32_t> open_readers_{0};
  bool closed_ = false;
  std::atomic<bool> stopping_{false};
  ClientCore core_;
};

}  // namespace bcps
