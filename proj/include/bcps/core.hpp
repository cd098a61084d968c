// Copyright (c) bcps contributors.
// Licensed under the Apache 2.0 License.
#pragma once

#include <compare>
#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "bcps/errors.hpp"

namespace bcps {

using TableId = int32_t;
using RowId = int32_t;
using ColId = int32_t;
using Seq = int64_t;    // per-origin update sequence number, first update is 1
using Clock = int64_t;  // logical clock; updates are stamped with the issuing clock
using ProcessId = int32_t;

// Identifies one scalar parameter. Ordered by (table, row, col).
struct ParamKey {
  TableId table = 0;
  RowId row = 0;
  ColId col = 0;

  auto operator<=>(const ParamKey&) const = default;
  bool valid() const { return table >= 0 && row >= 0 && col >= 0; }
};

struct ParamKeyHash {
  size_t operator()(const ParamKey& k) const {
    uint64_t h = static_cast<uint32_t>(k.table);
    h = h * 0x9E3779B97F4A7C15ull + static_cast<uint32_t>(k.row);
    h = h * 0x9E3779B97F4A7C15ull + static_cast<uint32_t>(k.col);
    return static_cast<size_t>(h ^ (h >> 32));
  }
};

// A worker thread: (client process, thread within that process).
struct WorkerId {
  ProcessId process = 0;
  int32_t thread = 0;

  auto operator<=>(const WorkerId&) const = default;
};

struct WorkerIdHash {
  size_t operator()(const WorkerId& w) const {
    return std::hash<uint64_t>()((static_cast<uint64_t>(static_cast<uint32_t>(w.process)) << 32) |
                                 static_cast<uint32_t>(w.thread));
  }
};

// One issued delta. seq values are gap-free from 1 per origin; clock stamps are
// non-decreasing along the seq order of one origin.
struct UpdateRecord {
  WorkerId origin;
  Seq seq = 0;
  Clock clock = 0;
  ParamKey key;
  double delta = 0.0;
};

// Monotone per-participant logical clocks. Entries never decrease.
class VectorClock {
 public:
  void register_participant(int32_t id, Clock initial = 0) {
    auto [it, inserted] = entries_.emplace(id, initial);
    if (!inserted && it->second < initial) it->second = initial;
  }

  bool contains(int32_t id) const { return entries_.count(id) != 0; }

  Clock get(int32_t id) const {
    auto it = entries_.find(id);
    if (it == entries_.end()) throw ContractViolation("vector clock: unknown participant");
    return it->second;
  }

  // Increment one entry, returning the new value.
  Clock tick(int32_t id) {
    auto it = entries_.find(id);
    if (it == entries_.end()) throw ContractViolation("vector clock: tick on unknown participant");
    return ++it->second;
  }

  // Raise an entry to `value`; lower values are ignored (never decreases).
  void advance_to(int32_t id, Clock value) {
    auto it = entries_.find(id);
    if (it == entries_.end()) throw ContractViolation("vector clock: advance on unknown participant");
    if (value > it->second) it->second = value;
  }

  Clock min() const {
    if (entries_.empty()) throw ContractViolation("vector clock: min of empty clock");
    Clock m = entries_.begin()->second;
    for (const auto& [id, c] : entries_) m = c < m ? c : m;
    return m;
  }

  size_t size() const { return entries_.size(); }
  const std::map<int32_t, Clock>& entries() const { return entries_; }

 private:
  std::map<int32_t, Clock> entries_;
};

enum class RowKind { Dense, Sparse };

// Values of one table. Dense tables share one row length; sparse rows hold only
// touched columns. Reading an absent key yields 0.0.
class ParamTable {
 public:
  ParamTable(TableId id, RowKind kind, int32_t row_len)
      : id_(id), kind_(kind), row_len_(row_len) {
    if (kind == RowKind::Dense && row_len <= 0)
      throw ConfigError("param table: dense rows need a positive row length");
  }

  TableId id() const { return id_; }
  RowKind kind() const { return kind_; }
  int32_t row_len() const { return row_len_; }

  double apply_delta(const ParamKey& key, double delta) {
    check_key(key);
    if (kind_ == RowKind::Dense) {
      auto& row = dense_row(key.row);
      return row[static_cast<size_t>(key.col)] += delta;
    }
    return sparse_[key.row][key.col] += delta;
  }

  double read(const ParamKey& key) const {
    check_key(key);
    if (kind_ == RowKind::Dense) {
      auto it = dense_.find(key.row);
      if (it == dense_.end()) return 0.0;
      return it->second[static_cast<size_t>(key.col)];
    }
    auto it = sparse_.find(key.row);
    if (it == sparse_.end()) return 0.0;
    auto jt = it->second.find(key.col);
    return jt == it->second.end() ? 0.0 : jt->second;
  }

  // Visits every materialized cell in (row, col) order.
  void for_each(const std::function<void(const ParamKey&, double)>& fn) const {
    if (kind_ == RowKind::Dense) {
      for (const auto& [row, vals] : dense_)
        for (int32_t c = 0; c < static_cast<int32_t>(vals.size()); ++c)
          fn(ParamKey{id_, row, c}, vals[c]);
    } else {
      for (const auto& [row, cols] : sparse_)
        for (const auto& [col, v] : cols) fn(ParamKey{id_, row, col}, v);
    }
  }

  size_t row_count() const { return kind_ == RowKind::Dense ? dense_.size() : sparse_.size(); }

 private:
  void check_key(const ParamKey& key) const {
    if (!key.valid() || key.table != id_) throw ContractViolation("param table: bad key");
    if (kind_ == RowKind::Dense && key.col >= row_len_)
      throw ContractViolation("param table: dense column out of range");
  }

  std::vector<double>& dense_row(RowId row) {
    auto it = dense_.find(row);
    if (it == dense_.end()) it = dense_.emplace(row, std::vector<double>(row_len_, 0.0)).first;
    return it->second;
  }

  TableId id_;
  RowKind kind_;
  int32_t row_len_;
  std::map<RowId, std::vector<double>> dense_;
  std::map<RowId, std::map<ColId, double>> sparse_;
};

// Left-to-right fold of same-key deltas; the empty span folds to 0.
inline double coalesce(std::span<const UpdateRecord> records) {
  double sum = 0.0;
  for (size_t i = 0; i < records.size(); ++i) {
    if (i > 0 && !(records[i].key == records[0].key))
      throw ContractViolation("coalesce: records span more than one key");
    sum += records[i].delta;
  }
  return sum;
}

}  // namespace bcps
