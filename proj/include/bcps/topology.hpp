// Copyright (c) bcps contributors.
// Licensed under the Apache 2.0 License.
#pragma once

#include <vector>

#include "bcps/core.hpp"
#include "bcps/errors.hpp"

namespace bcps {

struct TableSpec {
  TableId id = 0;
  RowKind kind = RowKind::Dense;
  int32_t row_len = 1;
};

// Row ownership: every column of a row lives on one shard.
inline int32_t partition(TableId table, RowId row, int32_t num_shards) {
  if (num_shards <= 0) throw ConfigError("partition: need at least one shard");
  if (table < 0 || row < 0) throw ContractViolation("partition: bad key");
  int64_t mix = static_cast<int64_t>(table) * 1000003 + row;
  return static_cast<int32_t>(mix % num_shards);
}

struct Topology {
  int32_t processes = 1;
  int32_t threads_per_process = 1;
  int32_t shards = 1;

  void validate() const {
    if (processes <= 0 || threads_per_process <= 0 || shards <= 0)
      throw ConfigError("topology: processes, threads, and shards must be positive");
  }

  int32_t workers() const { return processes * threads_per_process; }

  WorkerId worker(int32_t flat) const {
    return {flat / threads_per_process, flat % threads_per_process};
  }

  int32_t flat(WorkerId w) const { return w.process * threads_per_process + w.thread; }

  std::vector<ProcessId> client_processes() const {
    std::vector<ProcessId> out(static_cast<size_t>(processes));
    for (int32_t p = 0; p < processes; ++p) out[static_cast<size_t>(p)] = p;
    return out;
  }
};

}  // namespace bcps
