// Copyright (c) bcps contributors.
// Licensed under the Apache 2.0 License.
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <deque>
#include <map>
#include <set>
#include <unordered_map>
#include <utility>
#include <vector>

#include "bcps/core.hpp"
#include "bcps/errors.hpp"
#include "bcps/message.hpp"
#include "bcps/policy.hpp"
#include "bcps/topology.hpp"

namespace bcps {

// Threads finished with their program report this clock so they stop holding
// the global minimum back; all their updates are flushed beforehand.
inline constexpr Clock kDoneClock = int64_t{1} << 40;

// One client process: the local cache replica, per-worker write ledgers, and
// the bounded-consistency admission logic. Methods are non-blocking; a caller
// that gets NotReady/false retries after the next inbound message (the
// simulator re-polls, the socket wrapper waits on a condition variable).
//
// A worker's view of a key is always cache + flushed-but-not-yet-echoed
// overlay + unflushed pending, so a worker reads its own writes exactly once
// at every moment of a record's lifecycle.
class ClientCore {
 public:
  struct Counters {
    std::array<int64_t, 6> sent_by_kind{};
    int64_t incs = 0;
    int64_t gets = 0;
    int64_t flushes = 0;
    int64_t blocked_incs = 0;
    int64_t not_ready_gets = 0;
    int64_t clock_waits = 0;
    int64_t records_applied = 0;
    int64_t pulls_sent = 0;
  };

  enum class GetStatus { Ready, NotReady };

  ClientCore(ProcessId process, std::vector<TableSpec> specs, Topology topo,
             ConsistencyPolicy policy, MessageSink sink, int32_t auto_flush_incs = 64)
      : process_(process),
        topo_(topo),
        ctrl_(policy),
        sink_(std::move(sink)),
        auto_flush_incs_(auto_flush_incs) {
    topo_.validate();
    if (process_ < 0 || process_ >= topo_.processes)
      throw ConfigError("client: process index out of range");
    if (auto_flush_incs_ <= 0) throw ConfigError("client: auto flush threshold must be positive");
    for (const TableSpec& s : specs) tables_.emplace(s.id, ParamTable(s.id, s.kind, s.row_len));
    workers_.resize(static_cast<size_t>(topo_.threads_per_process));
    for (auto& w : workers_) w.streams.resize(static_cast<size_t>(topo_.shards));
    applied_.resize(static_cast<size_t>(topo_.shards));
    ack_dirty_.resize(static_cast<size_t>(topo_.shards));
  }

  // ----- worker-facing API (non-blocking) -----

  GetStatus try_get(int32_t thread, const ParamKey& key, double* out) {
    WorkerLedger& wl = worker(thread);
    ++counters_.gets;
    if (!unavailable_.empty() && unavailable_.count({key.table, key.row})) {
      unavailable_.erase({key.table, key.row});
      throw StalenessUnavailable("get: staleness demand expired unanswered");
    }
    auto dec = ctrl_.check_read({process_, thread}, wl.clock, key, known_through(key));
    if (dec.verdict == Verdict::FetchThenProceed) {
      ++counters_.not_ready_gets;
      ensure_pull(thread, wl.clock, key);
      return GetStatus::NotReady;
    }
    double v = table(key.table).read(key);
    auto pit = wl.pending.find(key);
    if (pit != wl.pending.end()) v += pit->second.sum;
    auto kit = wl.keys.find(key);
    if (kit != wl.keys.end()) v += kit->second.overlay_sum;
    *out = v;
    return GetStatus::Ready;
  }

  // False means the write is blocked on the value bound; pending records were
  // flushed so acknowledgements can free budget. Retry after inbound traffic.
  bool try_inc(int32_t thread, const ParamKey& key, double delta) {
    WorkerLedger& wl = worker(thread);
    double accum = write_accum(wl, key);
    auto dec = ctrl_.check_write({process_, thread}, key, delta, accum);
    if (dec.verdict == Verdict::Block) {
      ++counters_.blocked_incs;
      flush_worker(thread);
      return false;
    }
    PendingCell& cell = wl.pending[key];
    cell.sum += delta;
    cell.mag += std::fabs(delta);
    ++wl.seq_total;
    ++wl.pending_incs;
    ++counters_.incs;
    if (wl.pending_incs >= auto_flush_incs_) flush_worker(thread);
    return true;
  }

  // Two-phase: the first call flushes, adopts the next clock, and reports; it
  // and later calls return false until the staleness window readmits the
  // worker. True means the advance completed.
  bool try_clock(int32_t thread) {
    WorkerLedger& wl = worker(thread);
    if (wl.clock_target < 0) {
      flush_worker(thread);
      wl.clock_target = wl.clock + 1;
      wl.clock = wl.clock_target;
      report_process_clock();
    }
    auto dec = ctrl_.check_clock_advance({process_, thread}, wl.clock_target - 1,
                                         wl.clock_target, global_min_est_);
    if (dec.verdict != Verdict::Proceed) {
      ++counters_.clock_waits;
      return false;
    }
    wl.clock_target = -1;
    return true;
  }

  void flush(int32_t thread) { flush_worker(thread); }

  // Final flush; the thread then reports kDoneClock so it never holds the
  // staleness window back again.
  void finish(int32_t thread) {
    WorkerLedger& wl = worker(thread);
    flush_worker(thread);
    wl.done = true;
    wl.clock = kDoneClock;
    report_process_clock();
  }

  // ----- transport-facing API -----

  void handle(const Message& msg) {
    if (msg.sender.kind != NodeId::Kind::Server)
      throw ProtocolError("client: message from non-server node");
    int32_t shard = msg.sender.index;
    if (shard < 0 || shard >= topo_.shards) throw ProtocolError("client: unknown shard");
    std::visit(
        [&](const auto& body) {
          using T = std::decay_t<decltype(body)>;
          if constexpr (std::is_same_v<T, ServerPushMsg>) {
            apply_payload(shard, body.payload);
          } else if constexpr (std::is_same_v<T, PullReplyMsg>) {
            outstanding_pulls_.erase({shard, {body.table, body.row}});
            if (body.status != 0) unavailable_.insert({body.table, body.row});
            apply_payload(shard, body.payload);
          } else if constexpr (std::is_same_v<T, ClockMsg>) {
            fold_global_min(body.value);
          } else {
            throw ProtocolError("client: unexpected message kind");
          }
        },
        msg.body);
  }

  // Batched acknowledgements; the simulator runs this as its own action, the
  // socket client on a pacing thread.
  bool ack_flush() {
    bool sent = false;
    for (int32_t s = 0; s < topo_.shards; ++s) {
      auto& dirty = ack_dirty_[static_cast<size_t>(s)];
      if (dirty.empty()) continue;
      send(NodeId::server(s), AckMsg{take_acks(s)});
      sent = true;
    }
    return sent;
  }

  bool acks_dirty() const {
    for (const auto& d : ack_dirty_)
      if (!d.empty()) return true;
    return false;
  }

  // ----- introspection -----

  Clock worker_clock(int32_t thread) const { return workers_[check_thread(thread)].clock; }
  bool clock_waiting(int32_t thread) const { return workers_[check_thread(thread)].clock_target >= 0; }
  Clock global_min_estimate() const { return global_min_est_; }
  Clock known_through(const ParamKey& key) const {
    auto it = known_.find({key.table, key.row});
    return it == known_.end() ? -1 : it->second;
  }
  const ParamTable& table(TableId id) const {
    auto it = tables_.find(id);
    if (it == tables_.end()) throw ContractViolation("client: unknown table");
    return it->second;
  }
  ConsistencyController& controller() { return ctrl_; }
  const Counters& counters() const { return counters_; }
  ProcessId process() const { return process_; }

  double unsynced_signed(int32_t thread, const ParamKey& key) const {
    const WorkerLedger& wl = workers_[check_thread(thread)];
    double v = 0.0;
    auto kit = wl.keys.find(key);
    if (kit != wl.keys.end()) v += kit->second.unsynced_sum;
    auto pit = wl.pending.find(key);
    if (pit != wl.pending.end()) v += pit->second.sum;
    return v;
  }

 private:
  struct PendingCell {
    double sum = 0.0;
    double mag = 0.0;
  };
  struct InFlight {
    Seq hi = 0;
    ParamKey key;
    double delta = 0.0;
  };
  struct ShardStream {
    Seq flushed_hi = 0;
    std::deque<InFlight> entries;
    size_t base = 0;       // ordinal of entries.front()
    size_t echo_done = 0;  // ordinal consumed by own-process echoes
    size_t full_done = 0;  // ordinal consumed by full-sync marks
  };
  // Exact per-key accumulators: sums are refolded from the live deltas on
  // every change, so an emptied ledger reads exactly zero.
  struct KeyLedger {
    std::deque<double> overlay;
    std::deque<double> unsynced;
    double overlay_sum = 0.0;
    double unsynced_sum = 0.0;
    double unsynced_mag = 0.0;
  };
  struct WorkerLedger {
    Clock clock = 0;
    Clock clock_target = -1;
    Seq seq_total = 0;
    int32_t pending_incs = 0;
    bool done = false;
    std::map<ParamKey, PendingCell> pending;
    std::unordered_map<ParamKey, KeyLedger, ParamKeyHash> keys;
    std::vector<ShardStream> streams;
  };

  size_t check_thread(int32_t thread) const {
    if (thread < 0 || thread >= topo_.threads_per_process)
      throw ContractViolation("client: bad thread index");
    return static_cast<size_t>(thread);
  }

  WorkerLedger& worker(int32_t thread) {
    WorkerLedger& wl = workers_[check_thread(thread)];
    if (wl.done) throw ContractViolation("client: operation on finished worker");
    return wl;
  }

  double write_accum(WorkerLedger& wl, const ParamKey& key) const {
    double flushed = 0.0, flushed_mag = 0.0;
    auto kit = wl.keys.find(key);
    if (kit != wl.keys.end()) {
      flushed = kit->second.unsynced_sum;
      flushed_mag = kit->second.unsynced_mag;
    }
    double pend = 0.0, pend_mag = 0.0;
    auto pit = wl.pending.find(key);
    if (pit != wl.pending.end()) {
      pend = pit->second.sum;
      pend_mag = pit->second.mag;
    }
    return ctrl_.policy().accounting == Accounting::Signed ? flushed + pend
                                                           : flushed_mag + pend_mag;
  }

  void flush_worker(int32_t thread) {
    WorkerLedger& wl = worker(thread);
    if (wl.pending.empty()) return;
    ++counters_.flushes;
    const Seq hi = wl.seq_total;
    const Clock stamp = wl.clock;
    std::map<int32_t, std::vector<WireRecord>> by_shard;
    for (const auto& [key, cell] : wl.pending) {
      if (cell.sum == 0.0) continue;
      by_shard[partition(key.table, key.row, topo_.shards)].push_back({key, cell.sum});
    }
    wl.pending.clear();
    wl.pending_incs = 0;
    for (auto& [shard, records] : by_shard) {
      ShardStream& st = wl.streams[static_cast<size_t>(shard)];
      ClientPushMsg msg;
      PushGroup g{{process_, thread}, st.flushed_hi + 1, hi, stamp, std::move(records)};
      for (const WireRecord& r : g.records) {
        st.entries.push_back({hi, r.key, r.delta});
        KeyLedger& kl = wl.keys[r.key];
        kl.overlay.push_back(r.delta);
        kl.unsynced.push_back(r.delta);
        refold(kl);
      }
      st.flushed_hi = hi;
      msg.groups.push_back(std::move(g));
      msg.acks = take_acks(shard);
      msg.process_clock = last_reported_;
      send(NodeId::server(shard), std::move(msg));
    }
  }

  static void refold(KeyLedger& kl) {
    kl.overlay_sum = 0.0;
    for (double d : kl.overlay) kl.overlay_sum += d;
    kl.unsynced_sum = 0.0;
    kl.unsynced_mag = 0.0;
    for (double d : kl.unsynced) {
      kl.unsynced_sum += d;
      kl.unsynced_mag += std::fabs(d);
    }
  }

  void ensure_pull(int32_t thread, Clock clock, const ParamKey& key) {
    int32_t shard = partition(key.table, key.row, topo_.shards);
    auto pk = std::make_pair(shard, std::make_pair(key.table, key.row));
    if (outstanding_pulls_.count(pk)) return;
    outstanding_pulls_.insert(pk);
    ++counters_.pulls_sent;
    send(NodeId::server(shard),
         ClientPullMsg{key.table, key.row, {process_, thread}, clock, ctrl_.policy().staleness});
  }

  void apply_payload(int32_t shard, const PushPayload& payload) {
    auto& applied = applied_[static_cast<size_t>(shard)];
    for (const PushGroup& g : payload.groups) {
      Seq& mark = applied[g.origin];
      if (g.seq_lo != mark + 1) throw ProtocolError("client: gap in shard stream");
      if (g.seq_hi < g.seq_lo) throw ProtocolError("client: empty covering range");
      if (g.origin.process == process_) pop_overlay(g.origin.thread, shard, g.seq_hi);
      for (const WireRecord& r : g.records) {
        table_mut(r.key.table).apply_delta(r.key, r.delta);
        ++counters_.records_applied;
      }
      mark = g.seq_hi;
      ack_dirty_[static_cast<size_t>(shard)].insert(g.origin);
    }
    for (const AckEntry& a : payload.full_marks)
      if (a.origin.process == process_) pop_unsynced(a.origin.thread, shard, a.mark);
    fold_global_min(payload.global_min_clock);
    for (const RowCoverage& c : payload.covered) {
      auto [it, inserted] = known_.try_emplace({c.table, c.row}, c.through);
      if (!inserted) it->second = std::max(it->second, c.through);
    }
  }

  void pop_overlay(int32_t thread, int32_t shard, Seq hi) {
    WorkerLedger& wl = workers_[check_thread(thread)];
    ShardStream& st = wl.streams[static_cast<size_t>(shard)];
    if (hi > st.flushed_hi) throw ProtocolError("client: echo beyond flushed range");
    while (st.echo_done < st.base + st.entries.size()) {
      const InFlight& e = st.entries[st.echo_done - st.base];
      if (e.hi > hi) break;
      KeyLedger& kl = wl.keys.at(e.key);
      kl.overlay.pop_front();
      refold(kl);
      ++st.echo_done;
    }
    compact(st);
  }

  void pop_unsynced(int32_t thread, int32_t shard, Seq mark) {
    WorkerLedger& wl = workers_[check_thread(thread)];
    ShardStream& st = wl.streams[static_cast<size_t>(shard)];
    if (mark > st.flushed_hi) throw ProtocolError("client: full mark beyond flushed range");
    while (st.full_done < st.base + st.entries.size()) {
      const InFlight& e = st.entries[st.full_done - st.base];
      if (e.hi > mark) break;
      KeyLedger& kl = wl.keys.at(e.key);
      kl.unsynced.pop_front();
      refold(kl);
      ++st.full_done;
    }
    compact(st);
  }

  static void compact(ShardStream& st) {
    while (st.base < std::min(st.echo_done, st.full_done)) {
      st.entries.pop_front();
      ++st.base;
    }
  }

  void fold_global_min(Clock value) { global_min_est_ = std::max(global_min_est_, value); }

  void report_process_clock() {
    Clock pc = kDoneClock;
    for (const WorkerLedger& w : workers_) pc = std::min(pc, w.clock);
    if (pc <= last_reported_) return;
    last_reported_ = pc;
    for (int32_t s = 0; s < topo_.shards; ++s)
      send(NodeId::server(s), ClockMsg{process_, pc});
  }

  std::vector<AckEntry> take_acks(int32_t shard) {
    auto& dirty = ack_dirty_[static_cast<size_t>(shard)];
    std::vector<AckEntry> out;
    const auto& applied = applied_[static_cast<size_t>(shard)];
    for (WorkerId origin : dirty) out.push_back({origin, applied.at(origin)});
    dirty.clear();
    return out;
  }

  ParamTable& table_mut(TableId id) {
    auto it = tables_.find(id);
    if (it == tables_.end()) throw ProtocolError("client: record for unknown table");
    return it->second;
  }

  void send(NodeId dest, MessageBody&& body) {
    Message m{NodeId::client(process_), dest, std::move(body)};
    ++counters_.sent_by_kind[m.body.index()];
    sink_(std::move(m));
  }

  ProcessId process_;
  Topology topo_;
  ConsistencyController ctrl_;
  MessageSink sink_;
  int32_t auto_flush_incs_;

  std::map<TableId, ParamTable> tables_;
  std::vector<WorkerLedger> workers_;
  std::map<std::pair<TableId, RowId>, Clock> known_;
  std::vector<std::map<WorkerId, Seq>> applied_{};
  std::vector<std::set<WorkerId>> ack_dirty_{};
  std::set<std::pair<int32_t, std::pair<TableId, RowId>>> outstanding_pulls_;
  std::set<std::pair<TableId, RowId>> unavailable_;
  Clock global_min_est_ = 0;
  Clock last_reported_ = 0;
  Counters counters_;
};

}  // namespace bcps
