// Copyright (c) bcps contributors.
// Licensed under the Apache 2.0 License.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <deque>
#include <map>
#include <string>
#include <vector>

#include "bcps/sim.hpp"

namespace bcps {

// What the auditor measured and whether anything it checked failed.
struct AuditReport {
  int64_t reads_checked = 0;
  int64_t incs_checked = 0;
  int64_t flushes = 0;
  int64_t groups_checked = 0;
  int64_t reads_decomposed = 0;
  double max_divergence = 0.0;  // max pairwise gap between worker views
  double worst_window = 0.0;    // max per-writer unsynchronized accumulation
  double worst_noise = 0.0;     // max half-synced magnitude behind a read
  double worst_local = 0.0;     // max own in-flight + pending mass at a read
  int64_t failures_dropped = 0;
  std::vector<std::string> failures;
  bool ok() const { return failures.empty() && failures_dropped == 0; }
  std::string brief() const { return failures.empty() ? "ok" : failures.front(); }
};

// Replays the observable event stream (worker ops and wire messages) into an
// independent shadow of every node, then checks each read value, write-bound
// decision, stream range, coverage certificate, and the final conservation of
// mass against that shadow. It never inspects client or server internals, so
// agreement means the protocol itself delivered what it promised.
class AuditObserver : public SimObserver {
 public:
  enum class Level { None, Basic, Full };

  explicit AuditObserver(const SimConfig& cfg, Level level = Level::Full, double tol = 0.0)
      : topo_(cfg.topo), policy_(cfg.policy), auto_flush_(cfg.auto_flush_incs),
        level_(level), tol_(tol) {
    const int32_t W = topo_.workers(), P = topo_.processes, S = topo_.shards;
    workers_.resize(static_cast<size_t>(W));
    for (auto& ws : workers_) ws.expect.resize(static_cast<size_t>(S));
    streams_.resize(static_cast<size_t>(W) * S);
    for (auto& st : streams_) {
      st.applied_idx.assign(static_cast<size_t>(P), 0);
      st.applied_hi.assign(static_cast<size_t>(P), 0);
    }
    caches_.resize(static_cast<size_t>(P));
    for (auto& c : caches_)
      for (const TableSpec& t : cfg.tables) c.emplace(t.id, ParamTable(t.id, t.kind, t.row_len));
  }

  // Optional: lets on_quiesce also compare real node tables with the shadow.
  void bind(Simulator* sim) { sim_ = sim; }

  const AuditReport& report() const { return rep_; }

  // Checkpoints where the running max pairwise divergence grew; first is the
  // key-touch ordinal, second the new maximum.
  const std::vector<std::pair<int64_t, double>>& divergence_series() const {
    return divergence_series_;
  }

  void on_send(const Message& m) override {
    if (level_ == Level::None) return;
    if (const auto* push = std::get_if<ClientPushMsg>(&m.body))
      if (m.dest.kind == NodeId::Kind::Server) sent_.push_back({m.dest.index, *push});
  }

  void on_op(WorkerId w, const OpRequest& op, bool completed, double got, Clock wclock,
             int64_t) override {
    if (level_ == Level::None) return;
    WState& ws = workers_[static_cast<size_t>(topo_.flat(w))];
    switch (op.kind) {
      case OpRequest::Kind::Inc:
        handle_inc(w, ws, op.key, op.delta, completed);
        break;
      case OpRequest::Kind::Clock:
        if (!ws.waiting) {
          infer_flush(w, ws);
          if (wclock != ws.clock + 1) fail("worker %d/%d clock step %lld -> %lld", w.process,
                                           w.thread, (long long)ws.clock, (long long)wclock);
          ws.clock = wclock;
          ws.waiting = !completed;
        } else if (completed) {
          ws.waiting = false;
        }
        if (completed && uses_clock_bound(policy_.model)) check_skew(w, ws);
        break;
      case OpRequest::Kind::Flush:
        infer_flush(w, ws);
        break;
      case OpRequest::Kind::Done:
        infer_flush(w, ws);
        ws.clock = kDoneClock;
        break;
      case OpRequest::Kind::Get:
        break;
    }
    drain_sent();
    if (op.kind == OpRequest::Kind::Get && completed && level_ == Level::Full)
      check_read(w, ws, op.key, got);
  }

  void on_deliver(const Message& m) override {
    if (level_ == Level::None) return;
    drain_sent();
    if (m.dest.kind != NodeId::Kind::Client) return;
    const ProcessId p = m.dest.index;
    if (const auto* push = std::get_if<ServerPushMsg>(&m.body))
      apply_payload(p, m.sender.index, push->payload);
    else if (const auto* reply = std::get_if<PullReplyMsg>(&m.body))
      if (reply->status == 0) apply_payload(p, m.sender.index, reply->payload);
  }

  void on_quiesce() override {
    if (level_ == Level::None) return;
    drain_sent();
    const int32_t W = topo_.workers(), P = topo_.processes, S = topo_.shards;
    for (int32_t f = 0; f < W; ++f) {
      const WState& ws = workers_[static_cast<size_t>(f)];
      if (ws.seq != ws.flush_hi) fail("worker %d still has pending updates", f);
      for (const auto& q : ws.expect)
        if (!q.empty()) fail("worker %d flushed records never left the process", f);
      for (const auto& [k, dq] : ws.overlay)
        if (!dq.empty()) fail("worker %d overlay not drained for %s", f, key_str(k).c_str());
      for (const auto& [k, dq] : ws.unsynced)
        if (!dq.empty()) fail("worker %d unsynced not drained for %s", f, key_str(k).c_str());
      for (int32_t s = 0; s < S; ++s) {
        const Stream& st = stream(f, s);
        for (ProcessId p = 0; p < P; ++p)
          if (st.applied_idx[static_cast<size_t>(p)] != st.recs.size())
            fail("worker %d shard %d records undelivered to process %d", f, s, p);
      }
    }
    check_conservation();
  }

 private:
  struct Raw {
    Seq q = 0;
    ParamKey key;
    double delta = 0.0;
    Clock stamp = 0;
  };
  struct Cell {
    Seq hi = 0;
    ParamKey key;
    double delta = 0.0;
    Clock stamp = 0;
  };
  struct ExpGroup {
    Seq lo = 0, hi = 0;
    Clock stamp = 0;
    std::vector<WireRecord> recs;
  };
  struct WState {
    Seq seq = 0;
    Seq flush_hi = 0;
    Clock clock = 0;
    bool waiting = false;
    std::vector<Raw> raws;
    std::vector<std::deque<ExpGroup>> expect;                        // per shard
    std::map<ParamKey, std::deque<Cell>> overlay;                    // sent, not echoed
    std::map<ParamKey, std::deque<Cell>> unsynced;                   // sent, not fully synced
    std::map<ParamKey, std::vector<std::pair<Clock, Seq>>> issued;   // (stamp, seq) per key
  };
  struct Stream {
    Seq sent_hi = 0;
    std::vector<Cell> recs;
    std::vector<size_t> applied_idx;  // per destination process
    std::vector<Seq> applied_hi;
  };
  struct SentMsg {
    int32_t shard = 0;
    ClientPushMsg msg;
  };

  Stream& stream(int32_t flat, int32_t shard) {
    return streams_[static_cast<size_t>(flat) * topo_.shards + shard];
  }

  static std::string key_str(const ParamKey& k) {
    char buf[48];
    std::snprintf(buf, sizeof buf, "(%d,%d,%d)", k.table, k.row, k.col);
    return buf;
  }

  template <typename... Args>
  void fail(const char* fmt, Args... args) {
    if (rep_.failures.size() >= 32) {
      ++rep_.failures_dropped;
      return;
    }
    char buf[256];
    std::snprintf(buf, sizeof buf, fmt, args...);  // NOLINT
    rep_.failures.emplace_back(buf);
  }

  void fail(const char* msg) { fail("%s", msg); }

  static size_t window_start(const WState& ws) {
    size_t start = ws.raws.size();
    while (start > 0 && ws.raws[start - 1].q > ws.flush_hi) --start;
    return start;
  }

  double pending_fold(const WState& ws, const ParamKey& k, int* count = nullptr) const {
    double sum = 0.0;
    if (count) *count = 0;
    for (size_t i = window_start(ws); i < ws.raws.size(); ++i)
      if (ws.raws[i].key == k) {
        sum += ws.raws[i].delta;
        if (count) ++*count;
      }
    return sum;
  }

  double pending_mag(const WState& ws, const ParamKey& k) const {
    double mag = 0.0;
    for (size_t i = window_start(ws); i < ws.raws.size(); ++i)
      if (ws.raws[i].key == k) mag += std::fabs(ws.raws[i].delta);
    return mag;
  }

  static double fold_cells(const std::map<ParamKey, std::deque<Cell>>& m, const ParamKey& k,
                           bool* present = nullptr) {
    auto it = m.find(k);
    if (present) *present = it != m.end();
    double sum = 0.0;
    if (it != m.end())
      for (const Cell& c : it->second) sum += c.delta;
    return sum;
  }

  static double fold_cells_mag(const std::map<ParamKey, std::deque<Cell>>& m, const ParamKey& k) {
    auto it = m.find(k);
    double mag = 0.0;
    if (it != m.end())
      for (const Cell& c : it->second) mag += std::fabs(c.delta);
    return mag;
  }

  // Decaying schedules tighten v mid-run; when bound we mirror the value the
  // client actually consulted.
  double live_value_bound(ProcessId p) const {
    return sim_ ? sim_->client(p).controller().policy().value_bound : policy_.value_bound;
  }

  void handle_inc(WorkerId w, WState& ws, const ParamKey& k, double delta, bool completed) {
    if (std::fabs(delta) > policy_.magnitude_cap)
      fail("inc above magnitude cap slipped through at %s", key_str(k).c_str());
    if (uses_value_bound(policy_.model)) {
      const double vb = live_value_bound(w.process);
      double post;
      if (policy_.accounting == Accounting::Signed) {
        double accum = fold_cells(ws.unsynced, k) + pending_fold(ws, k);
        post = std::fabs(accum + delta);
      } else {
        double accum = fold_cells_mag(ws.unsynced, k) + pending_mag(ws, k);
        post = accum + std::fabs(delta);
      }
      if (completed && post > vb)
        fail("write at %s exceeded the value bound: %.17g > %.17g", key_str(k).c_str(), post, vb);
      if (!completed && post <= vb)
        fail("write at %s blocked spuriously: %.17g <= %.17g", key_str(k).c_str(), post, vb);
      if (completed) rep_.worst_window = std::max(rep_.worst_window, post);
    } else if (!completed) {
      fail("write blocked under a model with no value bound");
    }
    if (!completed) {
      infer_flush(w, ws);  // a blocked write flushes so acks can free budget
      return;
    }
    ++rep_.incs_checked;
    ws.raws.push_back({++ws.seq, k, delta, ws.clock});
    ws.issued[k].push_back({ws.clock, ws.seq});
    if (level_ == Level::Full) touch(k);
    if (ws.seq - ws.flush_hi >= auto_flush_) infer_flush(w, ws);
  }

  // Mirrors one client flush: coalesce pending per key, drop exact zeros,
  // route records by shard, and remember what the wire must now carry.
  void infer_flush(WorkerId w, WState& ws) {
    if (ws.seq == ws.flush_hi) return;
    ++rep_.flushes;
    const Seq hi = ws.seq;
    const Clock stamp = ws.clock;
    std::map<ParamKey, double> cells;
    for (size_t i = window_start(ws); i < ws.raws.size(); ++i)
      cells[ws.raws[i].key] += ws.raws[i].delta;
    std::map<int32_t, std::vector<WireRecord>> by_shard;
    for (const auto& [key, sum] : cells) {
      if (sum == 0.0) continue;
      by_shard[partition(key.table, key.row, topo_.shards)].push_back({key, sum});
    }
    const int32_t flat = topo_.flat(w);
    for (auto& [shard, recs] : by_shard) {
      Stream& st = stream(flat, shard);
      ExpGroup g{st.sent_hi + 1, hi, stamp, recs};
      for (const WireRecord& r : recs) {
        st.recs.push_back({hi, r.key, r.delta, stamp});
        ws.overlay[r.key].push_back({hi, r.key, r.delta, stamp});
        ws.unsynced[r.key].push_back({hi, r.key, r.delta, stamp});
      }
      st.sent_hi = hi;
      ws.expect[static_cast<size_t>(shard)].push_back(std::move(g));
    }
    ws.flush_hi = hi;
  }

  void drain_sent() {
    for (SentMsg& sm : sent_) {
      for (const PushGroup& g : sm.msg.groups) {
        WState& ows = workers_[static_cast<size_t>(topo_.flat(g.origin))];
        auto& q = ows.expect[static_cast<size_t>(sm.shard)];
        if (q.empty()) {
          fail("unexpected push from worker %d/%d", g.origin.process, g.origin.thread);
          continue;
        }
        const ExpGroup& e = q.front();
        bool match = e.lo == g.seq_lo && e.hi == g.seq_hi && e.stamp == g.clock &&
                     e.recs.size() == g.records.size();
        for (size_t i = 0; match && i < e.recs.size(); ++i)
          match = e.recs[i].key == g.records[i].key && e.recs[i].delta == g.records[i].delta;
        if (!match)
          fail("push from worker %d/%d does not match its pending updates", g.origin.process,
               g.origin.thread);
        q.pop_front();
      }
    }
    sent_.clear();
  }

  void apply_payload(ProcessId p, int32_t shard, const PushPayload& payload) {
    for (const PushGroup& g : payload.groups) {
      const int32_t flat = topo_.flat(g.origin);
      Stream& st = stream(flat, shard);
      const size_t pi = static_cast<size_t>(p);
      if (g.seq_lo != st.applied_hi[pi] + 1)
        fail("stream gap for worker %d at process %d: %lld after %lld", flat, p,
             (long long)g.seq_lo, (long long)st.applied_hi[pi]);
      size_t i = st.applied_idx[pi];
      for (const WireRecord& r : g.records) {
        if (i >= st.recs.size() || st.recs[i].key != r.key || st.recs[i].delta != r.delta ||
            st.recs[i].hi > g.seq_hi) {
          fail("relayed record differs from what worker %d sent", flat);
          break;
        }
        caches_[pi].at(r.key.table).apply_delta(r.key, r.delta);
        if (level_ == Level::Full) touch(r.key);
        ++i;
      }
      if (i > st.applied_idx[pi] && st.recs[i - 1].hi != g.seq_hi)
        fail("group range end %lld does not match last record", (long long)g.seq_hi);
      st.applied_idx[pi] = i;
      st.applied_hi[pi] = g.seq_hi;
      if (p == g.origin.process) pop_cells(workers_[static_cast<size_t>(flat)].overlay, shard,
                                           g.seq_hi);
      ++rep_.groups_checked;
    }
    for (const AckEntry& e : payload.full_marks) {
      if (e.origin.process != p) {
        fail("full mark for foreign worker %d/%d delivered to process %d", e.origin.process,
             e.origin.thread, p);
        continue;
      }
      pop_cells(workers_[static_cast<size_t>(topo_.flat(e.origin))].unsynced, shard, e.mark);
    }
    if (level_ == Level::Full)
      for (const RowCoverage& c : payload.covered) check_certificate(p, shard, c);
  }

  void pop_cells(std::map<ParamKey, std::deque<Cell>>& m, int32_t shard, Seq through) {
    for (auto& [k, dq] : m) {
      if (partition(k.table, k.row, topo_.shards) != shard) continue;
      while (!dq.empty() && dq.front().hi <= through) dq.pop_front();
    }
  }

  // A certificate must only be issued once every update of that row stamped at
  // or below it has already been applied at the destination.
  void check_certificate(ProcessId p, int32_t shard, const RowCoverage& c) {
    for (int32_t f = 0; f < topo_.workers(); ++f) {
      const WState& ows = workers_[static_cast<size_t>(f)];
      for (const auto& [k, idx] : ows.issued) {
        if (k.table != c.table || k.row != c.row) continue;
        Seq need = 0;
        for (const auto& [stamp, q] : idx) {
          if (stamp > c.through) break;
          need = q;
        }
        if (need > stream(f, shard).applied_hi[static_cast<size_t>(p)])
          fail("certificate for row (%d,%d) through %lld precedes worker %d seq %lld", c.table,
               c.row, (long long)c.through, f, (long long)need);
      }
    }
  }

  void check_read(WorkerId w, WState& ws, const ParamKey& k, double got) {
    const size_t pi = static_cast<size_t>(w.process);
    ++rep_.reads_checked;
    double expected = caches_[pi].at(k.table).read(k);
    int pend_count = 0;
    double pend = pending_fold(ws, k, &pend_count);
    if (pend_count > 0) expected += pend;
    bool have_overlay = false;
    double ov = fold_cells(ws.overlay, k, &have_overlay);
    if (have_overlay) expected += ov;
    if (!(std::fabs(got - expected) <= tol_))
      fail("read of %s returned %.17g, reconstruction says %.17g", key_str(k).c_str(), got,
           expected);
    rep_.worst_local = std::max(rep_.worst_local, std::fabs(ov + pend));
    if (uses_clock_bound(policy_.model)) check_visibility(w, ws, k);
    if (is_strong_vap(policy_.model)) check_noise(w, k);
  }

  // Everything stamped inside the staleness window must already be applied.
  void check_visibility(WorkerId w, const WState& ws, const ParamKey& k) {
    const Clock bound = ws.clock - policy_.staleness - 1;
    const int32_t self = topo_.flat(w);
    const int32_t shard = partition(k.table, k.row, topo_.shards);
    for (int32_t f = 0; f < topo_.workers(); ++f) {
      if (f == self) continue;
      const WState& ows = workers_[static_cast<size_t>(f)];
      auto it = ows.issued.find(k);
      if (it == ows.issued.end()) continue;
      Seq need = 0;
      for (const auto& [stamp, q] : it->second) {
        if (stamp > bound) break;
        need = q;
      }
      if (need > stream(f, shard).applied_hi[static_cast<size_t>(w.process)])
        fail("read at clock %lld missed worker %d update seq %lld stamped in window",
             (long long)ws.clock, f, (long long)need);
    }
  }

  // Under the strong models the half-synced mass behind any read stays within
  // the propagation gate.
  void check_noise(WorkerId w, const ParamKey& k) {
    const int32_t self = topo_.flat(w);
    const int32_t shard = partition(k.table, k.row, topo_.shards);
    const double gate = std::max(policy_.magnitude_cap, policy_.value_bound);
    for (int32_t f = 0; f < topo_.workers(); ++f) {
      if (f == self) continue;
      Stream& st = stream(f, shard);
      size_t fully = st.recs.size();
      for (size_t idx : st.applied_idx) fully = std::min(fully, idx);
      double noise = 0.0;
      for (size_t i = fully; i < st.applied_idx[static_cast<size_t>(w.process)]; ++i)
        if (st.recs[i].key == k) noise += std::fabs(st.recs[i].delta);
      rep_.worst_noise = std::max(rep_.worst_noise, noise);
      if (noise > gate + 1e-9)
        fail("half-synced mass %.17g behind a read exceeds gate %.17g", noise, gate);
    }
    ++rep_.reads_decomposed;
  }

  void check_skew(WorkerId w, const WState& ws) {
    Clock min_clock = ws.clock;
    for (const WState& o : workers_) min_clock = std::min(min_clock, o.clock);
    if (ws.clock - min_clock > policy_.staleness)
      fail("worker %d/%d advanced to %lld with slowest at %lld", w.process, w.thread,
           (long long)ws.clock, (long long)min_clock);
  }

  double view(int32_t flat, const ParamKey& k) {
    const WState& ws = workers_[static_cast<size_t>(flat)];
    const ProcessId p = topo_.worker(flat).process;
    double v = caches_[static_cast<size_t>(p)].at(k.table).read(k);
    v += pending_fold(ws, k);
    v += fold_cells(ws.overlay, k);
    return v;
  }

  void touch(const ParamKey& k) {
    const int32_t W = topo_.workers();
    double lo = 0.0, hi = 0.0;
    for (int32_t f = 0; f < W; ++f) {
      double v = view(f, k);
      if (f == 0) lo = hi = v;
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    ++touches_;
    if (hi - lo > rep_.max_divergence) divergence_series_.push_back({touches_, hi - lo});
    rep_.max_divergence = std::max(rep_.max_divergence, hi - lo);
  }

  void check_conservation() {
    std::map<ParamKey, double> total;
    for (const WState& ws : workers_)
      for (const Raw& r : ws.raws) total[r.key] += r.delta;
    for (const auto& [k, sum] : total) {
      for (ProcessId p = 0; p < topo_.processes; ++p) {
        double have = caches_[static_cast<size_t>(p)].at(k.table).read(k);
        if (!(std::fabs(have - sum) <= std::max(tol_, 1e-9) * std::max(1.0, std::fabs(sum))))
          fail("process %d ended with %.17g at %s, issued total is %.17g", p, have,
               key_str(k).c_str(), sum);
      }
    }
    if (!sim_) return;
    for (const auto& [k, sum] : total) {
      const int32_t shard = partition(k.table, k.row, topo_.shards);
      double master = sim_->shard(shard).table(k.table).read(k);
      double shadow = caches_[0].at(k.table).read(k);
      if (!(std::fabs(master - shadow) <= std::max(tol_, 1e-9) * std::max(1.0, std::fabs(sum))))
        fail("master %.17g disagrees with shadow %.17g at %s", master, shadow,
             key_str(k).c_str());
    }
    for (ProcessId p = 0; p < topo_.processes; ++p)
      for (auto& [tid, shadow] : caches_[static_cast<size_t>(p)]) {
        const ParamTable& real = sim_->client(p).table(tid);
        shadow.for_each([&](const ParamKey& k, double v) {
          if (real.read(k) != v && std::fabs(real.read(k) - v) > tol_)
            fail("client %d table %d differs from shadow at %s", p, tid, key_str(k).c_str());
        });
      }
  }

  Topology topo_;
  ConsistencyPolicy policy_;
  int32_t auto_flush_ = 64;
  Level level_ = Level::Full;
  double tol_ = 0.0;
  int64_t touches_ = 0;
  std::vector<std::pair<int64_t, double>> divergence_series_;
  Simulator* sim_ = nullptr;
  std::vector<WState> workers_;
  std::vector<Stream> streams_;
  std::vector<std::map<TableId, ParamTable>> caches_;
  std::vector<SentMsg> sent_;
  AuditReport rep_;
};

}  // namespace bcps
