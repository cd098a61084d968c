// Copyright (c) bcps contributors.
// Licensed under the Apache 2.0 License.
#pragma once

#include <cstdint>
#include <limits>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "bcps/audit.hpp"

namespace bcps {

// Phase-separated increment rounds: all reads of round r happen in clock
// period 2r, all writes in period 2r+1, and each row has exactly one writer
// per round. Under a zero-staleness clock bound nobody can observe a partial
// round, so the whole run folds the same additions in the same order as a
// serial executor and the states match bit for bit.
struct BspSpec {
  int32_t workers = 4;
  int32_t processes = 2;
  int32_t shards = 2;
  int32_t rounds = 8;
  int32_t rows = 8;
  uint64_t seed = 1;
};

// Dyadic, sign-mixed, and distinct across (writer, row, round).
inline double bsp_delta(int32_t writer, int32_t row, int32_t round) {
  int32_t raw = (writer * 31 + row * 17 + round * 13) % 255 - 127;
  return static_cast<double>(raw) / 256.0;
}

inline int32_t bsp_owner(int32_t row, int32_t round, int32_t workers) {
  return (row + round) % workers;
}

// states[r][row] = the table after rounds 0..r-1, folded in round order.
inline std::vector<std::vector<double>> bsp_serial_states(const BspSpec& spec) {
  std::vector<std::vector<double>> states;
  std::vector<double> cur(static_cast<size_t>(spec.rows), 0.0);
  states.push_back(cur);
  for (int32_t r = 0; r < spec.rounds; ++r) {
    for (int32_t row = 0; row < spec.rows; ++row)
      cur[static_cast<size_t>(row)] += bsp_delta(bsp_owner(row, r, spec.workers), row, r);
    states.push_back(cur);
  }
  return states;
}

namespace detail {

class BspWorker : public WorkerProgram {
 public:
  BspWorker(const BspSpec* spec, int32_t rank, std::vector<std::vector<double>>* views)
      : spec_(spec), rank_(rank), views_(views) {}

  OpRequest next(double v) override {
    switch (phase_) {
      case 0:  // start the read pass
        if (round_ == spec_->rounds) return OpRequest::done();
        phase_ = 1;
        row_ = 0;
        return OpRequest::get({0, 0, 0});
      case 1:  // one read landed
        (*views_)[static_cast<size_t>(round_)][static_cast<size_t>(row_)] = v;
        if (++row_ < spec_->rows) return OpRequest::get({0, row_, 0});
        phase_ = 2;
        return OpRequest::clock();
      case 2:  // entered the write period
        phase_ = 3;
        row_ = next_owned(-1);
        if (row_ == spec_->rows) {
          phase_ = 4;
          return OpRequest::clock();
        }
        return OpRequest::inc({0, row_, 0}, bsp_delta(rank_, row_, round_));
      case 3:
        row_ = next_owned(row_);
        if (row_ == spec_->rows) {
          phase_ = 4;
          return OpRequest::clock();
        }
        return OpRequest::inc({0, row_, 0}, bsp_delta(rank_, row_, round_));
      default:
        ++round_;
        if (round_ == spec_->rounds) return OpRequest::done();
        phase_ = 1;
        row_ = 0;
        return OpRequest::get({0, 0, 0});
    }
  }

  int64_t step() const override { return round_; }

 private:
  int32_t next_owned(int32_t after) const {
    for (int32_t row = after + 1; row < spec_->rows; ++row)
      if (bsp_owner(row, round_, spec_->workers) == rank_) return row;
    return spec_->rows;
  }

  const BspSpec* spec_;
  int32_t rank_;
  std::vector<std::vector<double>>* views_;
  int32_t round_ = 0, row_ = 0, phase_ = 0;
};

// Polls each shard's clock floor after every event; whenever a shard reaches
// an even period 2r its slice of the table must equal the serial state after
// r rounds, with zero tolerance.
class BspMasterCheck : public SimObserver {
 public:
  BspMasterCheck(const BspSpec* spec, const std::vector<std::vector<double>>* states)
      : spec_(spec), states_(states) {}

  void bind(Simulator* sim) {
    sim_ = sim;
    floors_.assign(static_cast<size_t>(sim->num_shards()), -1);
  }

  void on_op(WorkerId, const OpRequest&, bool, double, Clock, int64_t) override { poll(); }
  void on_deliver(const Message&) override { poll(); }
  void on_quiesce() override { poll(); }

  bool ok() const { return error_.empty(); }
  const std::string& error() const { return error_; }
  int64_t checks() const { return checks_; }

 private:
  void poll() {
    if (!sim_ || !error_.empty()) return;
    for (int32_t s = 0; s < sim_->num_shards(); ++s) {
      Clock m = sim_->shard(s).vclock().min();
      if (m <= floors_[static_cast<size_t>(s)]) continue;
      floors_[static_cast<size_t>(s)] = m;
      if (m >= kDoneClock) m = 2 * spec_->rounds;
      // Odd periods are write periods; the master may hold a partial round.
      if (m % 2 != 0) continue;
      int64_t r = std::min<int64_t>(m / 2, spec_->rounds);
      const auto& want = (*states_)[static_cast<size_t>(r)];
      for (int32_t row = 0; row < spec_->rows; ++row) {
        ParamKey k{0, row, 0};
        if (partition(k.table, k.row, sim_->num_shards()) != s) continue;
        double got = sim_->shard(s).table(0).read(k);
        if (got != want[static_cast<size_t>(row)]) {
          char buf[160];
          snprintf(buf, sizeof buf,
                   "shard %d row %d at period %lld: master %.17g, serial %.17g", s, row,
                   static_cast<long long>(m), got, want[static_cast<size_t>(row)]);
          error_ = buf;
          return;
        }
        ++checks_;
      }
    }
  }

  const BspSpec* spec_;
  const std::vector<std::vector<double>>* states_;
  Simulator* sim_ = nullptr;
  std::vector<Clock> floors_;
  std::string error_;
  int64_t checks_ = 0;
};

}  // namespace detail

struct BspResult {
  bool ok = true;
  int64_t master_checks = 0;
  int64_t view_checks = 0;
  std::string error;
  RunStats stats;
};

// Runs the round workload under a zero-staleness clock bound and verifies
// both every worker view and every master clock-floor snapshot against the
// serial fold, bit for bit.
inline BspResult run_bsp(const BspSpec& spec) {
  if (spec.workers % spec.processes != 0)
    throw ConfigError("bsp: workers must split evenly across processes");
  SimConfig cfg;
  cfg.topo = {spec.processes, spec.workers / spec.processes, spec.shards};
  cfg.tables = {{0, RowKind::Dense, 1}};
  cfg.policy.model = Model::Cap;
  cfg.policy.staleness = 0;
  cfg.policy.magnitude_cap = 1.0;
  cfg.seed = spec.seed;

  auto states = bsp_serial_states(spec);
  std::vector<std::vector<std::vector<double>>> views(
      static_cast<size_t>(spec.workers),
      std::vector<std::vector<double>>(static_cast<size_t>(spec.rounds),
                                       std::vector<double>(static_cast<size_t>(spec.rows))));
  std::vector<std::unique_ptr<WorkerProgram>> progs;
  for (int32_t f = 0; f < spec.workers; ++f)
    progs.push_back(std::make_unique<detail::BspWorker>(&spec, f, &views[static_cast<size_t>(f)]));

  Simulator sim(cfg, std::move(progs));
  detail::BspMasterCheck master(&spec, &states);
  master.bind(&sim);
  sim.attach_observer(&master);

  BspResult res;
  res.stats = sim.run();
  res.master_checks = master.checks();
  if (!master.ok()) {
    res.ok = false;
    res.error = master.error();
    return res;
  }
  for (int32_t f = 0; f < spec.workers; ++f)
    for (int32_t r = 0; r < spec.rounds; ++r)
      for (int32_t row = 0; row < spec.rows; ++row) {
        double got = views[static_cast<size_t>(f)][static_cast<size_t>(r)][static_cast<size_t>(row)];
        double want = states[static_cast<size_t>(r)][static_cast<size_t>(row)];
        if (got != want) {
          char buf[160];
          snprintf(buf, sizeof buf, "worker %d round %d row %d: view %.17g, serial %.17g", f, r,
                   row, got, want);
          res.ok = false;
          res.error = buf;
          return res;
        }
        ++res.view_checks;
      }
  return res;
}

// A seeded stream of mixed reads, dyadic increments, flushes, and clock
// ticks; the staple workload for schedule sweeps under the auditor.
class RandomMixWorker : public WorkerProgram {
 public:
  RandomMixWorker(uint64_t seed, int64_t rounds, int32_t rows)
      : rng_(seed), rounds_(rounds), rows_(rows) {}

  OpRequest next(double) override {
    if (op_ >= rounds_ * 6) return OpRequest::done();
    ++op_;
    if (op_ % 6 == 0) {
      ++round_;
      return OpRequest::clock();
    }
    ParamKey k{0, static_cast<int32_t>(rng_() % static_cast<uint64_t>(rows_)), 0};
    switch (rng_() % 4) {
      case 0:
        return OpRequest::get(k);
      case 1:
        return OpRequest::inc(k, static_cast<double>(1 + rng_() % 256) / 256.0);
      case 2:
        return OpRequest::inc(k, -static_cast<double>(1 + rng_() % 256) / 256.0);
      default:
        return OpRequest::flush();
    }
  }

  int64_t step() const override { return round_; }

 private:
  std::mt19937_64 rng_;
  int64_t rounds_, op_ = 0, round_ = 0;
  int32_t rows_;
};

inline std::vector<std::unique_ptr<WorkerProgram>> make_random_mix(const SimConfig& cfg,
                                                                   int64_t rounds, int32_t rows) {
  std::vector<std::unique_ptr<WorkerProgram>> progs;
  for (int32_t f = 0; f < cfg.topo.workers(); ++f)
    progs.push_back(std::make_unique<RandomMixWorker>(cfg.seed * 977 + static_cast<uint64_t>(f),
                                                      rounds, rows));
  return progs;
}

// The model grid for schedule sweeps. Value-bound points run magnitude
// accounting so pairwise view divergence provably stays within
// max(u,v)*P (weak) or 2*max(u,v) (strong); clock-bound points leave room
// for large writes instead.
struct SweepPoint {
  const char* label;
  Model model;
  Clock staleness;
  double value_bound;
  double magnitude_cap;
  Accounting accounting;
};

inline std::vector<SweepPoint> safety_sweep_points() {
  return {
      {"cap-s0", Model::Cap, 0, 0.0, 64.0, Accounting::Signed},
      {"cap-s1", Model::Cap, 1, 0.0, 64.0, Accounting::Signed},
      {"cap-s3", Model::Cap, 3, 0.0, 64.0, Accounting::Signed},
      {"vap-weak-v1", Model::VapWeak, 0, 1.0, 1.0, Accounting::Magnitude},
      {"vap-weak-v8", Model::VapWeak, 0, 8.0, 1.0, Accounting::Magnitude},
      {"vap-strong-v1", Model::VapStrong, 0, 1.0, 2.0, Accounting::Magnitude},
      {"vap-strong-v8", Model::VapStrong, 0, 8.0, 16.0, Accounting::Magnitude},
      {"cvap-s1-v1", Model::CvapStrong, 1, 1.0, 2.0, Accounting::Magnitude},
  };
}

// The enforced pairwise view-divergence cap for a sweep point, or infinity
// when the model carries no value bound.
inline double divergence_cap(const SweepPoint& pt, int32_t workers) {
  double uv = std::max(pt.magnitude_cap, pt.value_bound);
  switch (pt.model) {
    case Model::VapWeak:
    case Model::CvapWeak:
      return uv * workers;
    case Model::VapStrong:
    case Model::CvapStrong:
      return 2.0 * uv;
    default:
      return std::numeric_limits<double>::infinity();
  }
}

inline SimConfig sweep_config(const SweepPoint& pt, uint64_t seed, int32_t workers = 4,
                              int32_t processes = 2, int32_t shards = 2) {
  if (workers % processes != 0)
    throw ConfigError("sweep: workers must split evenly across processes");
  SimConfig cfg;
  cfg.topo = {processes, workers / processes, shards};
  cfg.tables = {{0, RowKind::Dense, 1}};
  cfg.policy.model = pt.model;
  cfg.policy.staleness = pt.staleness;
  cfg.policy.value_bound = pt.value_bound;
  cfg.policy.magnitude_cap = pt.magnitude_cap;
  cfg.policy.accounting = pt.accounting;
  cfg.seed = seed;
  cfg.auto_flush_incs = 2;
  switch (seed % 3) {
    case 1:
      cfg.adversary.kind = AdversaryKind::LaggardProcess;
      cfg.adversary.laggard = static_cast<ProcessId>((seed / 3) % processes);
      break;
    case 2:
      cfg.adversary.kind = AdversaryKind::Burst;
      cfg.adversary.burst_len = 4 + static_cast<int32_t>(seed % 29);
      break;
    default:
      cfg.adversary.kind = AdversaryKind::Uniform;
      break;
  }
  return cfg;
}

}  // namespace bcps
