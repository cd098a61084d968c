// Copyright (c) bcps contributors.
// Licensed under the Apache 2.0 License.
#pragma once

#include <functional>
#include <memory>
#include <utility>
#include <vector>

#include "bcps/sim.hpp"

namespace bcps::testing {

// Coroutine-free scripted worker: a state machine over captured locals.
class FuncProgram : public WorkerProgram {
 public:
  explicit FuncProgram(std::function<OpRequest(double)> fn) : fn_(std::move(fn)) {}
  OpRequest next(double v) override { return fn_(v); }

 private:
  std::function<OpRequest(double)> fn_;
};

inline ConsistencyPolicy make_policy(Model m, Clock s, double v, double u,
                                     Accounting acc = Accounting::Signed) {
  ConsistencyPolicy p;
  p.model = m;
  p.staleness = s;
  p.value_bound = v;
  p.magnitude_cap = u;
  p.accounting = acc;
  return p;
}

inline SimConfig make_config(int32_t procs, int32_t threads, int32_t shards,
                             ConsistencyPolicy pol, uint64_t seed) {
  SimConfig cfg;
  cfg.topo = {procs, threads, shards};
  cfg.tables = {{0, RowKind::Dense, 1}};
  cfg.policy = pol;
  cfg.seed = seed;
  return cfg;
}

}  // namespace bcps::testing
