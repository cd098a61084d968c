// Copyright (c) bcps contributors.
// Licensed under the Apache 2.0 License.
#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <span>
#include <unordered_map>
#include <vector>

#include "bcps/core.hpp"
#include "bcps/errors.hpp"
#include "bcps/message.hpp"

namespace bcps {

// Tracks, for one shard's stream, which of each origin's updates every client
// process has applied, and derives the synchronization watermarks:
//   full_watermark    min ack mark over the *other* client processes
//   partial_watermark max ack mark over the *other* client processes
// An update is fully synchronized at seq <= full, half synchronized in
// (full, partial], and local-only above partial. Marks are cumulative and
// never decrease. With no other client process both watermarks equal the
// latest issued seq: everything is instantly fully synchronized.
class SyncTracker {
 public:
  explicit SyncTracker(std::vector<ProcessId> client_processes)
      : clients_(std::move(client_processes)) {
    std::sort(clients_.begin(), clients_.end());
  }

  // Origin-side issue path: seq values must be gap-free from 1 and clock
  // stamps non-decreasing. Returns the unsynchronized signed sum for the
  // record's key after the append.
  double record_issue(const UpdateRecord& rec) {
    auto& o = origin(rec.origin);
    if (rec.seq != o.latest + 1)
      throw ContractViolation("sync tracker: non-consecutive seq on issue");
    if (rec.clock < o.last_clock)
      throw ContractViolation("sync tracker: clock regressed along seq order");
    append(o, rec);
    return unsynced_sum(rec.origin, rec.key);
  }

  // Server-side ingest: `lo..hi` is the contiguous covering range announced by
  // the origin's client; `records` are the coalesced deltas this shard owns.
  void ingest_range(WorkerId origin_id, Seq lo, Seq hi, Clock clock,
                    std::span<const WireRecord> records) {
    auto& o = origin(origin_id);
    if (lo != o.latest + 1) throw ProtocolError("sync tracker: seq range gap on ingest");
    if (hi < lo) throw ProtocolError("sync tracker: empty seq range");
    if (clock < o.last_clock) throw ProtocolError("sync tracker: clock regressed on ingest");
    for (const auto& r : records)
      o.log.push_back({hi, r.key, r.delta});
    o.latest = hi;
    o.last_clock = clock;
    recompute(o, origin_id);
  }

  struct AckEvents {
    std::vector<WorkerId> full_advanced;  // origins whose full watermark moved
  };

  // Records that `client` has applied `origin`'s updates through `mark`.
  // Regression is a contract violation; duplicates are idempotent.
  AckEvents record_ack(ProcessId client, WorkerId origin_id, Seq mark) {
    if (std::find(clients_.begin(), clients_.end(), client) == clients_.end())
      throw ContractViolation("sync tracker: ack from unknown client process");
    auto& o = origin(origin_id);
    Seq& cur = o.acked[client];
    if (mark < cur) throw ContractViolation("sync tracker: ack watermark regressed");
    AckEvents ev;
    if (mark == cur) return ev;
    cur = mark;
    Seq before = full_watermark(origin_id);
    recompute(o, origin_id);
    if (full_watermark(origin_id) > before) ev.full_advanced.push_back(origin_id);
    return ev;
  }

  Seq latest_seq(WorkerId origin_id) const {
    auto it = origins_.find(origin_id);
    return it == origins_.end() ? 0 : it->second.latest;
  }

  Seq full_watermark(WorkerId origin_id) const {
    auto it = origins_.find(origin_id);
    return it == origins_.end() ? 0 : it->second.full;
  }

  Seq partial_watermark(WorkerId origin_id) const {
    auto it = origins_.find(origin_id);
    return it == origins_.end() ? 0 : it->second.partial;
  }

  // Lowest applied mark over every client process, the origin's own included.
  // Records at or below it are globally applied and safe to reclaim.
  Seq min_ack_all(WorkerId origin_id) const {
    auto it = origins_.find(origin_id);
    if (it == origins_.end() || clients_.empty()) return 0;
    Seq m = std::numeric_limits<Seq>::max();
    for (ProcessId c : clients_) {
      auto jt = it->second.acked.find(c);
      m = std::min(m, jt == it->second.acked.end() ? 0 : jt->second);
    }
    return m;
  }

  // Signed sum of the origin's not-fully-synchronized deltas on one key.
  // Unknown (origin, key) pairs sum to zero.
  double unsynced_sum(WorkerId origin_id, const ParamKey& key) const {
    return fold(origin_id, key, [](const Entry&) { return true; },
                [](const Entry& e) { return e.delta; });
  }

  double unsynced_magnitude(WorkerId origin_id, const ParamKey& key) const {
    return fold(origin_id, key, [](const Entry&) { return true; },
                [](const Entry& e) { return std::fabs(e.delta); });
  }

  // Total |delta| over every origin's half-synchronized updates on one key.
  double half_synced_magnitude(const ParamKey& key) const {
    double total = 0.0;
    for (const auto& [id, o] : origins_) {
      for (const auto& e : o.log)
        if (e.seq > o.full && e.seq <= o.partial && e.key == key) total += std::fabs(e.delta);
    }
    return total;
  }

  // Class sums for the conservation identity: fully + half + local == issued.
  struct ClassSums {
    double fully = 0, half = 0, local = 0, issued = 0;
  };
  ClassSums class_sums(WorkerId origin_id, const ParamKey& key) const {
    ClassSums s;
    auto it = origins_.find(origin_id);
    if (it == origins_.end()) return s;
    const auto& o = it->second;
    for (const auto& e : o.log) {
      if (!(e.key == key)) continue;
      s.issued += e.delta;
      if (e.seq <= o.full)
        s.fully += e.delta;
      else if (e.seq <= o.partial)
        s.half += e.delta;
      else
        s.local += e.delta;
    }
    s.fully += gc_fully_.count(origin_id) ? gc_key_sum(origin_id, key) : 0.0;
    s.issued += gc_fully_.count(origin_id) ? gc_key_sum(origin_id, key) : 0.0;
    return s;
  }

  // Drops log entries at or below the origin's full watermark. Their sums move
  // into a retained per-key total so conservation checks keep balancing.
  void gc(WorkerId origin_id) {
    auto it = origins_.find(origin_id);
    if (it == origins_.end()) return;
    auto& o = it->second;
    auto& retained = gc_fully_[origin_id];
    auto keep = o.log.begin();
    for (auto& e : o.log) {
      if (e.seq <= o.full)
        retained[e.key] += e.delta;
      else
        *keep++ = e;
    }
    o.log.erase(keep, o.log.end());
  }

  const std::vector<ProcessId>& clients() const { return clients_; }

 private:
  struct Entry {
    Seq seq;
    ParamKey key;
    double delta;
  };
  struct Origin {
    Seq latest = 0;
    Clock last_clock = 0;
    Seq full = 0;
    Seq partial = 0;
    std::vector<Entry> log;
    std::map<ProcessId, Seq> acked;
  };

  Origin& origin(WorkerId id) {
    auto [it, inserted] = origins_.try_emplace(id);
    if (inserted) recompute(it->second, id);
    return it->second;
  }

  void append(Origin& o, const UpdateRecord& rec) {
    o.log.push_back({rec.seq, rec.key, rec.delta});
    o.latest = rec.seq;
    o.last_clock = rec.clock;
    recompute(o, rec.origin);
  }

  void recompute(Origin& o, WorkerId id) {
    Seq full = std::numeric_limits<Seq>::max();
    Seq partial = 0;
    bool any_other = false;
    for (ProcessId c : clients_) {
      if (c == id.process) continue;
      any_other = true;
      auto it = o.acked.find(c);
      Seq mark = it == o.acked.end() ? 0 : it->second;
      full = std::min(full, mark);
      partial = std::max(partial, mark);
    }
    if (!any_other) {
      o.full = o.latest;
      o.partial = o.latest;
    } else {
      o.full = std::min(full, o.latest);
      o.partial = std::min(partial, o.latest);
    }
  }

  template <typename Pred, typename Val>
  double fold(WorkerId origin_id, const ParamKey& key, Pred pred, Val val) const {
    auto it = origins_.find(origin_id);
    if (it == origins_.end()) return 0.0;
    const auto& o = it->second;
    double sum = 0.0;
    for (const auto& e : o.log)
      if (e.seq > o.full && e.key == key && pred(e)) sum += val(e);
    return sum;
  }

  double gc_key_sum(WorkerId origin_id, const ParamKey& key) const {
    auto it = gc_fully_.find(origin_id);
    if (it == gc_fully_.end()) return 0.0;
    auto jt = it->second.find(key);
    return jt == it->second.end() ? 0.0 : jt->second;
  }

  std::vector<ProcessId> clients_;
  std::unordered_map<WorkerId, Origin, WorkerIdHash> origins_;
  std::unordered_map<WorkerId, std::map<ParamKey, double>, WorkerIdHash> gc_fully_;
};

// Divergence audit report over a set of per-worker views of one key space.
struct DivergenceReport {
  double max_pairwise = 0.0;        // max over keys and worker pairs |theta_A - theta_B|
  double weak_bound = 0.0;          // max(u,v) * P
  double strong_bound = 0.0;        // 2 * max(u,v)
  double max_lemma_coord = 0.0;     // max per-coordinate divergence, recorded vs 2v(P-1)
  double lemma_coord_bound = 0.0;   // 2 * v * (P - 1)
  bool weak_ok = true;
  bool strong_ok = true;
};

// Pairwise view divergence for one key: views[i] is worker i's visible sum.
inline void fold_divergence(DivergenceReport& rep, std::span<const double> views) {
  for (size_t a = 0; a < views.size(); ++a)
    for (size_t b = a + 1; b < views.size(); ++b) {
      double d = std::fabs(views[a] - views[b]);
      rep.max_pairwise = std::max(rep.max_pairwise, d);
      rep.max_lemma_coord = std::max(rep.max_lemma_coord, d);
    }
}

inline void finalize_divergence(DivergenceReport& rep, double u, double v, int workers) {
  rep.weak_bound = std::fmax(u, v) * workers;
  rep.strong_bound = 2.0 * std::fmax(u, v);
  rep.lemma_coord_bound = 2.0 * v * (workers - 1);
  rep.weak_ok = rep.max_pairwise <= rep.weak_bound + 1e-12;
  rep.strong_ok = rep.max_pairwise <= rep.strong_bound + 1e-12;
}

}  // namespace bcps
