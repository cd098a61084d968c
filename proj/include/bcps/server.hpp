// Copyright (c) bcps contributors.
// Licensed under the Apache 2.0 License.
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <deque>
#include <map>
#include <set>
#include <utility>
#include <vector>

#include "bcps/core.hpp"
#include "bcps/errors.hpp"
#include "bcps/message.hpp"
#include "bcps/policy.hpp"
#include "bcps/sync_tracker.hpp"
#include "bcps/topology.hpp"

namespace bcps {

// One parameter-server shard. Owns the master replica of its rows, ingests
// client pushes, re-emits them to every client process (the origin's own
// process included, so its cache converges on the same stream), answers pulls
// with record drains plus per-row coverage certificates, and maintains the
// synchronization watermarks that drive value-bounded admission.
//
// All outbound traffic leaves through the MessageSink; the core is transport
// agnostic and single-threaded.
class ShardCore {
 public:
  struct Counters {
    std::array<int64_t, 6> sent_by_kind{};
    int64_t records_in = 0;
    int64_t records_out = 0;
    int64_t pulls_parked = 0;
    int64_t pulls_served = 0;
    int64_t emissions = 0;
    int64_t gc_records = 0;
  };

  ShardCore(int32_t index, std::vector<TableSpec> specs, Topology topo,
            ConsistencyPolicy policy, MessageSink sink, int32_t batch_rows = 0)
      : index_(index),
        topo_(topo),
        ctrl_(policy),
        batch_rows_(batch_rows),
        sink_(std::move(sink)),
        tracker_(topo.client_processes()) {
    topo_.validate();
    if (index_ < 0 || index_ >= topo_.shards)
      throw ConfigError("shard: index out of range");
    for (const TableSpec& s : specs) tables_.emplace(s.id, ParamTable(s.id, s.kind, s.row_len));
    for (ProcessId p : topo_.client_processes()) {
      vclock_.register_participant(p, 0);
      dests_.emplace(p, DestState{});
    }
  }

  void handle(const Message& msg) {
    if (msg.sender.kind != NodeId::Kind::Client)
      throw ProtocolError("shard: message from non-client node");
    ProcessId sender = msg.sender.index;
    if (!vclock_.contains(sender)) throw ProtocolError("shard: unknown client process");
    std::visit(
        [&](const auto& body) {
          using T = std::decay_t<decltype(body)>;
          if constexpr (std::is_same_v<T, ClientPushMsg>)
            handle_push(sender, body);
          else if constexpr (std::is_same_v<T, ClientPullMsg>)
            handle_pull(body);
          else if constexpr (std::is_same_v<T, ClockMsg>)
            handle_clock(sender, body);
          else if constexpr (std::is_same_v<T, AckMsg>)
            handle_ack(sender, body);
          else
            throw ProtocolError("shard: unexpected message kind");
        },
        msg.body);
  }

  // Updates stamped at or below this are all ingested, from every process.
  Clock coverage_now() const { return vclock_.min() - 1; }

  bool emission_pending(ProcessId dest) const {
    auto it = dests_.find(dest);
    if (it == dests_.end()) return false;
    if (it->second.dirty_marks || it->second.dirty_min) return true;
    for (const auto& [origin, op] : pools_)
      if (sent_count(it->second, origin) < op.base + op.pool.size()) return true;
    return false;
  }

  // Ships the longest admissible prefix of every origin's un-sent records to
  // `dest`, with coverage certificates for the rows it touches. Returns false
  // when there was nothing to send.
  bool emit_push(ProcessId dest) {
    DestState& ds = dest_state(dest);
    auto frontiers = compute_frontiers(ds, dest, batch_rows_);
    PushPayload payload = build_payload(ds, dest, frontiers);
    if (payload.groups.empty() && !ds.dirty_marks && !ds.dirty_min) return false;
    finish_payload(ds, dest, payload);
    ++counters_.emissions;
    send(NodeId::client(dest), ServerPushMsg{std::move(payload)});
    return true;
  }

  // Socket-mode staleness timeout: answer every parked pull as unavailable so
  // blocked readers surface the failure instead of waiting forever.
  void expire_parked() {
    for (const ClientPullMsg& p : parked_)
      send(NodeId::client(p.requester.process), PullReplyMsg{p.table, p.row, 1, {}});
    parked_.clear();
  }

  const ParamTable& table(TableId id) const {
    auto it = tables_.find(id);
    if (it == tables_.end()) throw ContractViolation("shard: unknown table");
    return it->second;
  }

  ConsistencyController& controller() { return ctrl_; }
  const SyncTracker& tracker() const { return tracker_; }
  const VectorClock& vclock() const { return vclock_; }
  size_t parked_pulls() const { return parked_.size(); }
  const Counters& counters() const { return counters_; }
  int32_t index() const { return index_; }

  // Total |delta| of records already shown to some other process but not yet
  // fully synchronized; the conservative quantity the strong gate bounds.
  double emitted_unacked_magnitude(const ParamKey& key) const {
    double total = 0.0;
    for (const auto& [origin, op] : pools_) {
      Seq full = tracker_.full_watermark(origin);
      for (auto it = op.pool.rbegin(); it != op.pool.rend() && it->seq_hi > full; ++it)
        if (it->entered && it->key == key) total += std::fabs(it->delta);
    }
    return total;
  }

 private:
  struct MasterRec {
    Seq seq_hi = 0;
    Clock clock = 0;
    ParamKey key;
    double delta = 0.0;
    bool entered = false;  // emitted to at least one process other than the origin's
  };
  struct OriginPool {
    std::deque<MasterRec> pool;
    size_t base = 0;  // ordinal of pool.front() in the origin's full record stream
  };
  struct DestState {
    std::map<WorkerId, size_t> sent_count;  // ordinals emitted to this destination
    std::map<WorkerId, Seq> sent_hi;        // covering seq emitted to this destination
    bool dirty_marks = false;
    bool dirty_min = false;
  };

  static size_t sent_count(const DestState& ds, WorkerId origin) {
    auto it = ds.sent_count.find(origin);
    return it == ds.sent_count.end() ? 0 : it->second;
  }

  DestState& dest_state(ProcessId p) {
    auto it = dests_.find(p);
    if (it == dests_.end()) throw ProtocolError("shard: unknown destination process");
    return it->second;
  }

  const MasterRec& rec(const OriginPool& op, size_t ordinal) const {
    return op.pool[ordinal - op.base];
  }

  void handle_push(ProcessId sender, const ClientPushMsg& msg) {
    for (const PushGroup& g : msg.groups) {
      if (g.origin.process != sender)
        throw ProtocolError("shard: push group from foreign origin");
      tracker_.ingest_range(g.origin, g.seq_lo, g.seq_hi, g.clock, g.records);
      OriginPool& op = pools_[g.origin];
      for (const WireRecord& r : g.records) {
        if (partition(r.key.table, r.key.row, topo_.shards) != index_)
          throw ProtocolError("shard: record routed to wrong shard");
        table_mut(r.key.table).apply_delta(r.key, r.delta);
        op.pool.push_back({g.seq_hi, g.clock, r.key, r.delta, false});
        ++counters_.records_in;
      }
    }
    apply_acks(sender, msg.acks);
    advance_clock(sender, msg.process_clock);
    retry_parked();
  }

  void handle_pull(const ClientPullMsg& p) {
    if (!serve_pull(p)) {
      parked_.push_back(p);
      ++counters_.pulls_parked;
    }
  }

  void handle_clock(ProcessId sender, const ClockMsg& m) {
    if (m.reporter != sender) throw ProtocolError("shard: clock report for foreign process");
    advance_clock(sender, m.value);
    retry_parked();
  }

  void handle_ack(ProcessId sender, const AckMsg& m) {
    apply_acks(sender, m.entries);
    retry_parked();
  }

  void apply_acks(ProcessId sender, const std::vector<AckEntry>& acks) {
    for (const AckEntry& a : acks) {
      auto ev = tracker_.record_ack(sender, a.origin, a.mark);
      for (WorkerId origin : ev.full_advanced) {
        dest_state(origin.process).dirty_marks = true;
        gc_origin(origin);
      }
    }
  }

  void advance_clock(ProcessId sender, Clock value) {
    Clock before = vclock_.min();
    vclock_.advance_to(sender, value);
    if (vclock_.min() > before)
      for (auto& [p, ds] : dests_) ds.dirty_min = true;
  }

  // Frontier per origin: ordinal one past the last record emittable to `dest`,
  // cut back so a covering range is never split.
  std::map<WorkerId, size_t> compute_frontiers(const DestState& ds, ProcessId dest,
                                               int32_t batch_rows) {
    std::map<WorkerId, size_t> frontiers;
    std::map<ParamKey, double> batch_mag;  // newly entering magnitude this emission
    const bool gated = is_strong_vap(ctrl_.policy().model);
    for (const auto& [origin, op] : pools_) {
      size_t start = sent_count(ds, origin);
      size_t end = op.base + op.pool.size();
      size_t f = start;
      while (f < end) {
        const MasterRec& r = rec(op, f);
        bool entering = !r.entered && dest != origin.process;
        if (gated && entering) {
          double have = emitted_unacked_magnitude(r.key) + batch_mag[r.key];
          if (ctrl_.gate_propagation(r.key, have, std::fabs(r.delta)).verdict != Verdict::Proceed)
            break;
        }
        if (entering) batch_mag[r.key] += std::fabs(r.delta);
        ++f;
      }
      frontiers[origin] = cut_to_range_boundary(op, start, f);
    }
    if (batch_rows > 0) trim_to_top_rows(ds, frontiers, batch_rows);
    return frontiers;
  }

  size_t cut_to_range_boundary(const OriginPool& op, size_t start, size_t f) const {
    size_t end = op.base + op.pool.size();
    while (f > start && f < end && rec(op, f - 1).seq_hi == rec(op, f).seq_hi) --f;
    return f;
  }

  // Keep only the `batch_rows` rows with the largest aggregate |delta|; each
  // origin's frontier stops at its first record of a dropped row.
  void trim_to_top_rows(const DestState& ds, std::map<WorkerId, size_t>& frontiers,
                        int32_t batch_rows) {
    std::map<std::pair<TableId, RowId>, double> agg;
    for (const auto& [origin, op] : pools_) {
      for (size_t i = sent_count(ds, origin); i < frontiers[origin]; ++i) {
        const MasterRec& r = rec(op, i);
        agg[{r.key.table, r.key.row}] += std::fabs(r.delta);
      }
    }
    if (agg.size() <= static_cast<size_t>(batch_rows)) return;
    std::vector<std::pair<std::pair<TableId, RowId>, double>> ranked(agg.begin(), agg.end());
    std::stable_sort(ranked.begin(), ranked.end(),
                     [](const auto& a, const auto& b) { return a.second > b.second; });
    std::set<std::pair<TableId, RowId>> keep;
    for (int32_t i = 0; i < batch_rows; ++i) keep.insert(ranked[static_cast<size_t>(i)].first);
    for (auto& [origin, f] : frontiers) {
      const OriginPool& op = pools_[origin];
      size_t start = sent_count(ds, origin);
      size_t g = start;
      while (g < f && keep.count({rec(op, g).key.table, rec(op, g).key.row})) ++g;
      f = cut_to_range_boundary(op, start, g);
    }
  }

  PushPayload build_payload(DestState& ds, ProcessId dest,
                            const std::map<WorkerId, size_t>& frontiers) {
    PushPayload payload;
    std::set<std::pair<TableId, RowId>> touched;
    for (const auto& [origin, f] : frontiers) {
      OriginPool& op = pools_[origin];
      size_t start = sent_count(ds, origin);
      if (f <= start) continue;
      PushGroup g;
      g.origin = origin;
      g.seq_lo = (ds.sent_hi.count(origin) ? ds.sent_hi[origin] : 0) + 1;
      g.seq_hi = rec(op, f - 1).seq_hi;
      g.clock = rec(op, f - 1).clock;
      for (size_t i = start; i < f; ++i) {
        MasterRec& r = op.pool[i - op.base];
        g.records.push_back({r.key, r.delta});
        touched.insert({r.key.table, r.key.row});
        if (dest != origin.process) r.entered = true;
        ++counters_.records_out;
      }
      ds.sent_count[origin] = f;
      ds.sent_hi[origin] = g.seq_hi;
      payload.groups.push_back(std::move(g));
    }
    for (const auto& [t, r] : touched)
      payload.covered.push_back({t, r, row_certificate(ds, t, r)});
    return payload;
  }

  void finish_payload(DestState& ds, ProcessId dest, PushPayload& payload) {
    for (int32_t t = 0; t < topo_.threads_per_process; ++t) {
      WorkerId w{dest, t};
      payload.full_marks.push_back({w, tracker_.full_watermark(w)});
    }
    payload.global_min_clock = vclock_.min();
    ds.dirty_marks = false;
    ds.dirty_min = false;
  }

  // After applying everything already emitted to this destination, the row is
  // complete through this clock: master coverage, capped below any retained
  // record of the row (clock stamps never decrease along a stream, so the
  // first retained record per origin gives the cap).
  Clock row_certificate(const DestState& ds, TableId table, RowId row) const {
    Clock cert = coverage_now();
    for (const auto& [origin, op] : pools_) {
      size_t end = op.base + op.pool.size();
      for (size_t i = sent_count(ds, origin); i < end; ++i) {
        const MasterRec& r = rec(op, i);
        if (r.key.table == table && r.key.row == row) {
          cert = std::min(cert, r.clock - 1);
          break;
        }
      }
    }
    return cert;
  }

  bool serve_pull(const ClientPullMsg& p) {
    const Clock needed = p.clock - p.staleness - 1;
    if (coverage_now() < needed) return false;
    DestState& ds = dest_state(p.requester.process);
    auto frontiers = compute_frontiers(ds, p.requester.process, 0);
    if (candidate_certificate(ds, p.table, p.row, frontiers) < needed) return false;

    PushPayload payload = build_payload(ds, p.requester.process, frontiers);
    bool has_cert = false;
    for (const RowCoverage& c : payload.covered)
      has_cert = has_cert || (c.table == p.table && c.row == p.row);
    if (!has_cert) payload.covered.push_back({p.table, p.row, row_certificate(ds, p.table, p.row)});
    finish_payload(ds, p.requester.process, payload);
    ++counters_.pulls_served;
    send(NodeId::client(p.requester.process), PullReplyMsg{p.table, p.row, 0, std::move(payload)});
    return true;
  }

  // Certificate the row would get if `frontiers` were emitted now.
  Clock candidate_certificate(const DestState& ds, TableId table, RowId row,
                              const std::map<WorkerId, size_t>& frontiers) const {
    Clock cert = coverage_now();
    for (const auto& [origin, f] : frontiers) {
      const OriginPool& op = pools_.at(origin);
      size_t end = op.base + op.pool.size();
      for (size_t i = f; i < end; ++i) {
        const MasterRec& r = rec(op, i);
        if (r.key.table == table && r.key.row == row) {
          cert = std::min(cert, r.clock - 1);
          break;
        }
      }
    }
    return cert;
  }

  void retry_parked() {
    if (parked_.empty()) return;
    std::vector<ClientPullMsg> still;
    for (const ClientPullMsg& p : parked_)
      if (!serve_pull(p)) still.push_back(p);
    parked_ = std::move(still);
  }

  void gc_origin(WorkerId origin) {
    auto it = pools_.find(origin);
    if (it == pools_.end()) return;
    OriginPool& op = it->second;
    Seq keep_above = tracker_.min_ack_all(origin);
    while (!op.pool.empty() && op.pool.front().seq_hi <= keep_above) {
      op.pool.pop_front();
      ++op.base;
      ++counters_.gc_records;
    }
    tracker_.gc(origin);
  }

  ParamTable& table_mut(TableId id) {
    auto it = tables_.find(id);
    if (it == tables_.end()) throw ProtocolError("shard: record for unknown table");
    return it->second;
  }

  void send(NodeId dest, MessageBody&& body) {
    Message m{NodeId::server(index_), dest, std::move(body)};
    ++counters_.sent_by_kind[m.body.index()];
    sink_(std::move(m));
  }

  int32_t index_;
  Topology topo_;
  ConsistencyController ctrl_;
  int32_t batch_rows_;
  MessageSink sink_;

  std::map<TableId, ParamTable> tables_;
  VectorClock vclock_;
  SyncTracker tracker_;
  std::map<WorkerId, OriginPool> pools_;
  std::map<ProcessId, DestState> dests_;
  std::vector<ClientPullMsg> parked_;
  Counters counters_;
};

}  // namespace bcps
