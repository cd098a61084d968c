// Copyright (c) bcps contributors.
// Licensed under the Apache 2.0 License.
#pragma once

#include <cstdio>
#include <deque>
#include <limits>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "bcps/client.hpp"
#include "bcps/message.hpp"
#include "bcps/server.hpp"
#include "bcps/topology.hpp"

namespace bcps {

// One parameter-server operation a worker wants to perform next.
struct OpRequest {
  enum class Kind { Get, Inc, Clock, Flush, Done };
  Kind kind = Kind::Done;
  ParamKey key;
  double delta = 0.0;

  static OpRequest get(ParamKey k) { return {Kind::Get, k, 0.0}; }
  static OpRequest inc(ParamKey k, double d) { return {Kind::Inc, k, d}; }
  static OpRequest clock() { return {Kind::Clock, {}, 0.0}; }
  static OpRequest flush() { return {Kind::Flush, {}, 0.0}; }
  static OpRequest done() { return {Kind::Done, {}, 0.0}; }
};

// A resumable operation stream. next() yields the following operation; after a
// Get completes, its value is passed in, otherwise the argument is NaN. The
// same programs run under the simulator and the socket transport.
class WorkerProgram {
 public:
  virtual ~WorkerProgram() = default;
  virtual OpRequest next(double get_value) = 0;
  // Workload-defined progress counter (e.g. optimization step), used for
  // schedules and audits.
  virtual int64_t step() const { return 0; }
};

class SimObserver {
 public:
  virtual ~SimObserver() = default;
  // A message leaves a node (already enqueued on its link).
  virtual void on_send(const Message&) {}
  // A message is handed to its destination node.
  virtual void on_deliver(const Message&) {}
  // A worker attempted `op`; `completed` tells whether it finished this step.
  virtual void on_op(WorkerId, const OpRequest&, bool completed, double get_value,
                     Clock worker_clock, int64_t step) {}
  // All workers finished and every queue drained.
  virtual void on_quiesce() {}
};

enum class AdversaryKind { Uniform, LaggardProcess, Burst };

struct AdversaryProfile {
  AdversaryKind kind = AdversaryKind::Uniform;
  ProcessId laggard = 0;       // LaggardProcess: starved client process
  int32_t laggard_factor = 8;  // its workers run ~1/factor as often
  int32_t burst_len = 16;      // Burst: messages drained per delivery pick
};

struct SimConfig {
  Topology topo;
  std::vector<TableSpec> tables;
  ConsistencyPolicy policy;
  uint64_t seed = 1;
  int32_t auto_flush_incs = 64;
  int32_t batch_rows = 0;
  AdversaryProfile adversary{};
  bool log_events = false;
  int64_t deadlock_patience = 200000;  // consecutive no-progress steps tolerated
};

struct RunStats {
  int64_t steps = 0;
  int64_t messages_delivered = 0;
  int64_t worker_retries = 0;
  std::vector<std::string> event_log;
};

// Deterministic discrete-event execution of client processes, shards, and the
// FIFO links between them. Every run is a pure function of (config, programs,
// seed): scheduling choices come from one seeded generator, and node state
// never depends on wall time.
class Simulator {
 public:
  Simulator(SimConfig cfg, std::vector<std::unique_ptr<WorkerProgram>> programs)
      : cfg_(std::move(cfg)), programs_(std::move(programs)), rng_(cfg_.seed) {
    cfg_.topo.validate();
    cfg_.policy.validate();
    if (static_cast<int32_t>(programs_.size()) != cfg_.topo.workers())
      throw ConfigError("sim: need one program per worker");
    const int32_t P = cfg_.topo.processes, S = cfg_.topo.shards;
    c2s_.resize(static_cast<size_t>(P) * S);
    s2c_.resize(static_cast<size_t>(P) * S);
    for (int32_t p = 0; p < P; ++p)
      clients_.push_back(std::make_unique<ClientCore>(
          p, cfg_.tables, cfg_.topo, cfg_.policy,
          [this, p](Message&& m) { enqueue_from_client(p, std::move(m)); },
          cfg_.auto_flush_incs));
    for (int32_t s = 0; s < S; ++s)
      shards_.push_back(std::make_unique<ShardCore>(
          s, cfg_.tables, cfg_.topo, cfg_.policy,
          [this, s](Message&& m) { enqueue_from_shard(s, std::move(m)); }, cfg_.batch_rows));
    drivers_.resize(programs_.size());
  }

  void attach_observer(SimObserver* obs) { observers_.push_back(obs); }

  ClientCore& client(ProcessId p) { return *clients_[static_cast<size_t>(p)]; }
  ShardCore& shard(int32_t s) { return *shards_[static_cast<size_t>(s)]; }
  int32_t num_clients() const { return cfg_.topo.processes; }
  int32_t num_shards() const { return cfg_.topo.shards; }
  const Topology& topology() const { return cfg_.topo; }
  WorkerProgram& program(int32_t flat) { return *programs_[static_cast<size_t>(flat)]; }

  // Runs every worker program to completion, then drains all queues.
  RunStats run() {
    int64_t no_progress = 0;
    while (!all_done()) {
      build_actions();
      if (actions_.empty()) throw ContractViolation("sim: workers pending but nothing enabled");
      const Action& a = pick_action();
      bool progressed = execute(a);
      ++stats_.steps;
      if (progressed) {
        no_progress = 0;
      } else if (++no_progress > cfg_.deadlock_patience) {
        dump_stall();
        throw ContractViolation("sim: no progress, protocol deadlock");
      }
    }
    quiesce();
    for (auto* o : observers_) o->on_quiesce();
    return std::move(stats_);
  }

  // Deterministically drains links, emissions, and acks until a fixpoint.
  void quiesce() {
    bool moved = true;
    while (moved) {
      moved = false;
      for (size_t i = 0; i < c2s_.size(); ++i)
        while (!c2s_[i].empty()) {
          deliver(c2s_[i]);
          moved = true;
        }
      for (int32_t s = 0; s < cfg_.topo.shards; ++s)
        for (int32_t p = 0; p < cfg_.topo.processes; ++p)
          if (shards_[static_cast<size_t>(s)]->emission_pending(p))
            moved |= shards_[static_cast<size_t>(s)]->emit_push(p);
      for (size_t i = 0; i < s2c_.size(); ++i)
        while (!s2c_[i].empty()) {
          deliver(s2c_[i]);
          moved = true;
        }
      for (auto& c : clients_) moved |= c->ack_flush();
    }
    for (auto& s : shards_)
      if (s->parked_pulls() != 0) throw ContractViolation("sim: parked pulls survived quiesce");
  }

 private:
  struct Driver {
    OpRequest current;
    bool started = false;
    bool done = false;
  };
  struct Action {
    enum class Kind { DeliverC2S, DeliverS2C, Run, Emit, AckFlush };
    Kind kind;
    int32_t a = 0;  // process / shard / worker flat index
    int32_t b = 0;  // shard / process
  };

  void enqueue_from_client(ProcessId p, Message&& m) {
    if (m.dest.kind != NodeId::Kind::Server) throw ContractViolation("sim: bad client dest");
    for (auto* o : observers_) o->on_send(m);
    c2s_[link_index(p, m.dest.index)].push_back(std::move(m));
  }

  void enqueue_from_shard(int32_t s, Message&& m) {
    if (m.dest.kind != NodeId::Kind::Client) throw ContractViolation("sim: bad shard dest");
    for (auto* o : observers_) o->on_send(m);
    s2c_[link_index(m.dest.index, s)].push_back(std::move(m));
  }

  size_t link_index(ProcessId p, int32_t s) const {
    return static_cast<size_t>(p) * cfg_.topo.shards + static_cast<size_t>(s);
  }

  bool all_done() const {
    for (const Driver& d : drivers_)
      if (!d.done) return false;
    return true;
  }

  void build_actions() {
    actions_.clear();
    const int32_t P = cfg_.topo.processes, S = cfg_.topo.shards;
    for (int32_t p = 0; p < P; ++p)
      for (int32_t s = 0; s < S; ++s) {
        if (!c2s_[link_index(p, s)].empty())
          actions_.push_back({Action::Kind::DeliverC2S, p, s});
        if (!s2c_[link_index(p, s)].empty())
          actions_.push_back({Action::Kind::DeliverS2C, s, p});
      }
    for (int32_t w = 0; w < cfg_.topo.workers(); ++w)
      if (!drivers_[static_cast<size_t>(w)].done) actions_.push_back({Action::Kind::Run, w, 0});
    for (int32_t s = 0; s < S; ++s)
      for (int32_t p = 0; p < P; ++p)
        if (shards_[static_cast<size_t>(s)]->emission_pending(p))
          actions_.push_back({Action::Kind::Emit, s, p});
    for (int32_t p = 0; p < P; ++p)
      if (clients_[static_cast<size_t>(p)]->acks_dirty())
        actions_.push_back({Action::Kind::AckFlush, p, 0});
  }

  const Action& pick_action() {
    // Starvation guard: a periodic round-robin pick guarantees every enabled
    // action class executes regardless of how the profile skews the draw.
    if (stats_.steps % 61 == 0) {
      rr_cursor_ = (rr_cursor_ + 1) % actions_.size();
      return actions_[rr_cursor_];
    }
    for (int tries = 0; tries < 8; ++tries) {
      size_t i = static_cast<size_t>(rng_() % actions_.size());
      const Action& a = actions_[i];
      if (cfg_.adversary.kind == AdversaryKind::LaggardProcess && a.kind == Action::Kind::Run) {
        ProcessId p = cfg_.topo.worker(a.a).process;
        if (p == cfg_.adversary.laggard &&
            rng_() % static_cast<uint64_t>(cfg_.adversary.laggard_factor) != 0)
          continue;
      }
      return a;
    }
    return actions_[static_cast<size_t>(rng_() % actions_.size())];
  }

  bool execute(const Action& a) {
    switch (a.kind) {
      case Action::Kind::DeliverC2S: {
        int32_t n = cfg_.adversary.kind == AdversaryKind::Burst ? cfg_.adversary.burst_len : 1;
        auto& q = c2s_[link_index(a.a, a.b)];
        for (int32_t i = 0; i < n && !q.empty(); ++i) deliver(q);
        return true;
      }
      case Action::Kind::DeliverS2C: {
        int32_t n = cfg_.adversary.kind == AdversaryKind::Burst ? cfg_.adversary.burst_len : 1;
        auto& q = s2c_[link_index(a.b, a.a)];
        for (int32_t i = 0; i < n && !q.empty(); ++i) deliver(q);
        return true;
      }
      case Action::Kind::Run:
        return run_worker(a.a);
      case Action::Kind::Emit:
        return shards_[static_cast<size_t>(a.a)]->emit_push(a.b);
      case Action::Kind::AckFlush:
        return clients_[static_cast<size_t>(a.a)]->ack_flush();
    }
    return false;
  }

  void deliver(std::deque<Message>& q) {
    Message m = std::move(q.front());
    q.pop_front();
    for (auto* o : observers_) o->on_deliver(m);
    log("deliver %s %c%d->%c%d", message_kind_name(m),
        m.sender.kind == NodeId::Kind::Client ? 'c' : 's', m.sender.index,
        m.dest.kind == NodeId::Kind::Client ? 'c' : 's', m.dest.index);
    if (m.dest.kind == NodeId::Kind::Client)
      clients_[static_cast<size_t>(m.dest.index)]->handle(m);
    else
      shards_[static_cast<size_t>(m.dest.index)]->handle(m);
    ++stats_.messages_delivered;
  }

  bool run_worker(int32_t flat) {
    Driver& d = drivers_[static_cast<size_t>(flat)];
    WorkerId w = cfg_.topo.worker(flat);
    ClientCore& c = *clients_[static_cast<size_t>(w.process)];
    WorkerProgram& prog = *programs_[static_cast<size_t>(flat)];
    if (!d.started) {
      d.current = prog.next(std::numeric_limits<double>::quiet_NaN());
      d.started = true;
    }
    bool completed = false;
    double got = std::numeric_limits<double>::quiet_NaN();
    switch (d.current.kind) {
      case OpRequest::Kind::Get:
        completed = c.try_get(w.thread, d.current.key, &got) == ClientCore::GetStatus::Ready;
        break;
      case OpRequest::Kind::Inc:
        completed = c.try_inc(w.thread, d.current.key, d.current.delta);
        break;
      case OpRequest::Kind::Clock:
        completed = c.try_clock(w.thread);
        break;
      case OpRequest::Kind::Flush:
        c.flush(w.thread);
        completed = true;
        break;
      case OpRequest::Kind::Done:
        c.finish(w.thread);
        d.done = true;
        completed = true;
        break;
    }
    for (auto* o : observers_)
      o->on_op(w, d.current, completed, got, c.worker_clock(w.thread), prog.step());
    if (!completed) {
      ++stats_.worker_retries;
      return false;
    }
    log("op w%d.%d kind=%d", w.process, w.thread, static_cast<int>(d.current.kind));
    if (!d.done) d.current = prog.next(got);
    return true;
  }

  void dump_stall() {
    std::fprintf(stderr, "sim stall: step=%lld\n", static_cast<long long>(stats_.steps));
    for (int32_t i = 0; i < cfg_.topo.workers(); ++i) {
      const Driver& d = drivers_[static_cast<size_t>(i)];
      WorkerId w = cfg_.topo.worker(i);
      std::fprintf(stderr, "  w%d.%d done=%d op=%d key=(%d,%d,%d) clock=%lld gmin=%lld\n",
                   w.process, w.thread, d.done, static_cast<int>(d.current.kind),
                   d.current.key.table, d.current.key.row, d.current.key.col,
                   static_cast<long long>(clients_[static_cast<size_t>(w.process)]->worker_clock(
                       w.thread)),
                   static_cast<long long>(
                       clients_[static_cast<size_t>(w.process)]->global_min_estimate()));
    }
    for (int32_t s = 0; s < cfg_.topo.shards; ++s)
      std::fprintf(stderr, "  shard %d parked=%zu coverage=%lld\n", s,
                   shards_[static_cast<size_t>(s)]->parked_pulls(),
                   static_cast<long long>(shards_[static_cast<size_t>(s)]->coverage_now()));
  }

  template <typename... Args>
  void log(const char* fmt, Args... args) {
    if (!cfg_.log_events) return;
    char buf[160];
    std::snprintf(buf, sizeof buf, fmt, args...);
    stats_.event_log.emplace_back(buf);
  }

  SimConfig cfg_;
  std::vector<std::unique_ptr<WorkerProgram>> programs_;
  std::mt19937_64 rng_;
  std::vector<std::unique_ptr<ClientCore>> clients_;
  std::vector<std::unique_ptr<ShardCore>> shards_;
  std::vector<std::deque<Message>> c2s_;
  std::vector<std::deque<Message>> s2c_;
  std::vector<Driver> drivers_;
  std::vector<Action> actions_;
  std::vector<SimObserver*> observers_;
  RunStats stats_;
  size_t rr_cursor_ = 0;
};

}  // namespace bcps
