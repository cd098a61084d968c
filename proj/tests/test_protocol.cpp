// Copyright (c) bcps contributors.
// Licensed under the Apache 2.0 License.
#include <cmath>
#include <memory>
#include <vector>

#include "bcps/sim.hpp"
#include "doctest.h"
#include "helpers.hpp"

using namespace bcps;
using bcps::testing::FuncProgram;

namespace {

ConsistencyPolicy policy(Model m, Clock s, double v, double u) {
  return bcps::testing::make_policy(m, s, v, u);
}

SimConfig base_config(int32_t procs, int32_t threads, int32_t shards, ConsistencyPolicy pol,
                      uint64_t seed) {
  return bcps::testing::make_config(procs, threads, shards, pol, seed);
}

}  // namespace

TEST_CASE("single worker reads its own writes immediately") {
  auto cfg = base_config(1, 1, 1, policy(Model::Ssp, 0, 0, 10), 7);
  int step = 0;
  double seen = -1;
  std::vector<std::unique_ptr<WorkerProgram>> progs;
  progs.push_back(std::make_unique<FuncProgram>([&](double v) -> OpRequest {
    switch (step++) {
      case 0: return OpRequest::inc({0, 0, 0}, 2.5);
      case 1: return OpRequest::inc({0, 0, 0}, -0.5);
      case 2: return OpRequest::get({0, 0, 0});
      case 3:
        seen = v;
        return OpRequest::clock();
      case 4: return OpRequest::get({0, 0, 0});
      case 5:
        CHECK(v == 2.0);
        return OpRequest::done();
    }
    return OpRequest::done();
  }));
  Simulator sim(cfg, std::move(progs));
  sim.run();
  CHECK(seen == 2.0);
  CHECK(sim.shard(0).table(0).read({0, 0, 0}) == 2.0);
  CHECK(sim.client(0).table(0).read({0, 0, 0}) == 2.0);
}

TEST_CASE("two processes at staleness zero run rounds in lockstep") {
  // Round r: read the partner's cell in the even period, then write own cell
  // in the odd period. At read time the partner's value must be exactly the
  // sum of its writes from rounds before r: nothing newer exists anywhere.
  const int R = 12;
  for (uint64_t seed : {1ull, 2ull, 3ull, 99ull}) {
    auto cfg = base_config(2, 1, 1, policy(Model::Cap, 0, 0, 100), seed);
    cfg.tables = {{0, RowKind::Dense, 1}};
    struct State {
      int round = 0, phase = 0;
    };
    std::vector<State> st(2);
    std::vector<std::vector<double>> reads(2);
    std::vector<std::unique_ptr<WorkerProgram>> progs;
    for (int me = 0; me < 2; ++me) {
      progs.push_back(std::make_unique<FuncProgram>([&, me](double v) -> OpRequest {
        State& s = st[static_cast<size_t>(me)];
        ParamKey own{0, me, 0}, other{0, 1 - me, 0};
        if (s.round == R) return OpRequest::done();
        switch (s.phase) {
          case 0: s.phase = 1; return OpRequest::get(other);
          case 1:
            reads[static_cast<size_t>(me)].push_back(v);
            s.phase = 2;
            return OpRequest::clock();
          case 2: s.phase = 3; return OpRequest::inc(own, 1.0 + s.round);
          case 3: s.phase = 4; return OpRequest::clock();
          default:
            s.phase = 0;
            ++s.round;
            if (s.round == R) return OpRequest::done();
            return OpRequest::get(other);
        }
      }));
    }
    Simulator sim(cfg, std::move(progs));
    sim.run();
    for (int me = 0; me < 2; ++me) {
      REQUIRE(reads[static_cast<size_t>(me)].size() == R);
      double expect = 0.0;
      for (int r = 0; r < R; ++r) {
        CHECK(reads[static_cast<size_t>(me)][static_cast<size_t>(r)] == expect);
        expect += 1.0 + r;
      }
    }
    CHECK(sim.shard(0).table(0).read({0, 0, 0}) == sim.shard(0).table(0).read({0, 1, 0}));
  }
}

TEST_CASE("staleness window lower-bounds what a reader sees") {
  // Writer pushes 1.0 per round into a shared cell; reader at clock c must see
  // at least the writes stamped <= c - s - 1 and never more than everything.
  const Clock s = 2;
  const int R = 20;
  auto cfg = base_config(2, 1, 2, policy(Model::Ssp, s, 0, 10), 5);
  cfg.tables = {{0, RowKind::Dense, 1}};
  int wstep = 0;
  struct RState {
    int round = 0;
    int phase = 0;
  } rs;
  bool ok = true;
  std::vector<std::unique_ptr<WorkerProgram>> progs;
  progs.push_back(std::make_unique<FuncProgram>([&](double) -> OpRequest {
    int r = wstep / 2;
    if (r >= R) return OpRequest::done();
    return (wstep++ % 2 == 0) ? OpRequest::inc({0, 5, 0}, 1.0) : OpRequest::clock();
  }));
  progs.push_back(std::make_unique<FuncProgram>([&](double v) -> OpRequest {
    switch (rs.phase) {
      case 0:
        rs.phase = 1;
        return OpRequest::get({0, 5, 0});
      case 1: {
        Clock c = rs.round;  // reader clock when the get executed
        double least = std::max<double>(0.0, static_cast<double>(c - s));
        ok = ok && v >= least - 1e-12 && v <= R + 1e-12;
        rs.phase = 2;
        return OpRequest::clock();
      }
      default:
        ++rs.round;
        if (rs.round >= R) return OpRequest::done();
        rs.phase = 1;
        return OpRequest::get({0, 5, 0});
    }
  }));
  Simulator sim(cfg, std::move(progs));
  sim.run();
  CHECK(ok);
}

TEST_CASE("identical seeds replay identical event logs") {
  auto make = [&](uint64_t seed) {
    auto cfg = base_config(2, 2, 2, policy(Model::Ssp, 1, 0, 10), seed);
    cfg.log_events = true;
    std::vector<std::unique_ptr<WorkerProgram>> progs;
    for (int w = 0; w < 4; ++w) {
      auto step = std::make_shared<int>(0);
      progs.push_back(std::make_unique<FuncProgram>([step, w](double) -> OpRequest {
        int s = (*step)++;
        if (s >= 30) return OpRequest::done();
        switch (s % 3) {
          case 0: return OpRequest::inc({0, w % 3, 0}, 0.25 * (w + 1));
          case 1: return OpRequest::get({0, (w + 1) % 3, 0});
          default: return OpRequest::clock();
        }
      }));
    }
    Simulator sim(cfg, std::move(progs));
    return sim.run();
  };
  RunStats a = make(42), b = make(42), c = make(43);
  CHECK(a.event_log == b.event_log);
  CHECK(a.steps == b.steps);
  CHECK(c.steps > 0);
}

TEST_CASE("value bound blocks a writer until acknowledgements return") {
  // One worker hammers a single key with +1 deltas and no clock ticks. The
  // value bound must throttle it (blocked incs observed) yet every write
  // completes once round trips drain the unsynchronized window.
  auto cfg = base_config(2, 1, 1, policy(Model::VapWeak, 0, 2.0, 1.0), 11);
  const int N = 25;
  int a_done = 0, b_done = 0;
  std::vector<std::unique_ptr<WorkerProgram>> progs;
  progs.push_back(std::make_unique<FuncProgram>([&](double) -> OpRequest {
    if (a_done >= N) return OpRequest::done();
    ++a_done;
    return OpRequest::inc({0, 0, 0}, 1.0);
  }));
  progs.push_back(std::make_unique<FuncProgram>([&](double) -> OpRequest {
    if (b_done >= N) return OpRequest::done();
    ++b_done;
    return OpRequest::inc({0, 0, 0}, -1.0);
  }));
  Simulator sim(cfg, std::move(progs));
  sim.run();
  CHECK(sim.client(0).counters().blocked_incs > 0);
  CHECK(sim.shard(0).table(0).read({0, 0, 0}) == 0.0);
  CHECK(sim.client(0).table(0).read({0, 0, 0}) == 0.0);
  CHECK(sim.client(1).table(0).read({0, 0, 0}) == 0.0);
}

TEST_CASE("unsynchronized window never exceeds the value bound") {
  const double v = 2.0;
  auto cfg = base_config(2, 1, 1, policy(Model::VapWeak, 0, v, 1.0), 3);
  const int N = 40;
  int a = 0, b = 0;
  std::vector<std::unique_ptr<WorkerProgram>> progs;
  progs.push_back(std::make_unique<FuncProgram>([&](double) -> OpRequest {
    return a++ < N ? OpRequest::inc({0, 0, 0}, 0.75) : OpRequest::done();
  }));
  progs.push_back(std::make_unique<FuncProgram>([&](double) -> OpRequest {
    return b++ < N ? OpRequest::inc({0, 1, 0}, 0.5) : OpRequest::done();
  }));

  struct Watch : SimObserver {
    Simulator* sim = nullptr;
    double worst = 0.0;
    void on_op(WorkerId w, const OpRequest& op, bool, double, Clock, int64_t) override {
      double u0 = std::fabs(sim->client(0).unsynced_signed(0, {0, 0, 0}));
      double u1 = std::fabs(sim->client(1).unsynced_signed(0, {0, 1, 0}));
      worst = std::max({worst, u0, u1});
    }
  } watch;
  Simulator sim(cfg, std::move(progs));
  watch.sim = &sim;
  sim.attach_observer(&watch);
  sim.run();
  CHECK(watch.worst <= v + 1e-12);
  CHECK(watch.worst > 0.0);
  CHECK(sim.shard(0).table(0).read({0, 0, 0}) == doctest::Approx(N * 0.75));
}

TEST_CASE("pull path serves stale rows on demand") {
  // The reader polls a row nobody writes. Pushes certify only rows they carry
  // records for, so that row's coverage stays at its initial value and every
  // read past the staleness window must round-trip a pull. A second read of
  // the writer's row checks values along the way.
  auto cfg = base_config(2, 1, 1, policy(Model::Cap, 1, 0, 10), 17);
  cfg.adversary = {AdversaryKind::LaggardProcess, 1, 6, 16};
  const int R = 10;
  int wstep = 0;
  int rphase = 0, rround = 0;
  std::vector<double> got;
  std::vector<std::unique_ptr<WorkerProgram>> progs;
  progs.push_back(std::make_unique<FuncProgram>([&](double) -> OpRequest {
    int r = wstep / 2;
    if (r >= R) return OpRequest::done();
    return (wstep++ % 2 == 0) ? OpRequest::inc({0, 3, 0}, 1.0) : OpRequest::clock();
  }));
  progs.push_back(std::make_unique<FuncProgram>([&](double v) -> OpRequest {
    switch (rphase) {
      case 0:
        rphase = 1;
        return OpRequest::get({0, 9, 0});
      case 1:
        CHECK(v == 0.0);
        rphase = 2;
        return OpRequest::get({0, 3, 0});
      case 2:
        got.push_back(v);
        rphase = 3;
        return OpRequest::clock();
      default:
        ++rround;
        if (rround >= R) return OpRequest::done();
        rphase = 1;
        return OpRequest::get({0, 9, 0});
    }
  }));
  Simulator sim(cfg, std::move(progs));
  sim.run();
  REQUIRE(got.size() == R);
  for (size_t i = 0; i < got.size(); ++i) {
    Clock c = static_cast<Clock>(i);
    CHECK(got[i] >= std::max<double>(0.0, static_cast<double>(c - 1)) - 1e-12);
    CHECK(got[i] <= R + 1e-12);
  }
  // A pull reply certifies the polled row only up to the reader's own clock,
  // so at least every other round past the window needs a fresh pull.
  CHECK(sim.shard(0).counters().pulls_served >= (R - 2) / 2);
}

TEST_CASE("multi shard routing keeps per shard streams contiguous") {
  auto cfg = base_config(2, 2, 3, policy(Model::Ssp, 1, 0, 10), 23);
  cfg.tables = {{0, RowKind::Dense, 2}, {1, RowKind::Sparse, 0}};
  std::vector<std::unique_ptr<WorkerProgram>> progs;
  std::vector<int> steps(4, 0);
  for (int w = 0; w < 4; ++w) {
    progs.push_back(std::make_unique<FuncProgram>([&steps, w](double) -> OpRequest {
      int s = steps[static_cast<size_t>(w)]++;
      if (s >= 40) return OpRequest::done();
      if (s % 4 == 3) return OpRequest::clock();
      ParamKey k{s % 2, (w * 7 + s) % 9, s % 2 == 0 ? s % 2 : 0};
      return OpRequest::inc(k, 0.125 * (1 + (s % 5)));
    }));
  }
  Simulator sim(cfg, std::move(progs));
  sim.run();
  // Every client replica of every row equals the master's.
  for (int t = 0; t <= 1; ++t) {
    double total_master = 0, total_c0 = 0, total_c1 = 0;
    for (int s = 0; s < 3; ++s)
      sim.shard(s).table(t).for_each([&](const ParamKey&, double val) { total_master += val; });
    sim.client(0).table(t).for_each([&](const ParamKey&, double val) { total_c0 += val; });
    sim.client(1).table(t).for_each([&](const ParamKey&, double val) { total_c1 += val; });
    CHECK(total_c0 == doctest::Approx(total_master).epsilon(1e-12));
    CHECK(total_c1 == doctest::Approx(total_master).epsilon(1e-12));
  }
}

TEST_CASE("burst and laggard schedules still terminate and agree") {
  for (auto kind : {AdversaryKind::Uniform, AdversaryKind::LaggardProcess, AdversaryKind::Burst}) {
    auto cfg = base_config(2, 1, 2, policy(Model::Ssp, 2, 0, 10), 31);
    cfg.adversary.kind = kind;
    cfg.adversary.laggard = 0;
    std::vector<int> steps(2, 0);
    std::vector<std::unique_ptr<WorkerProgram>> progs;
    for (int w = 0; w < 2; ++w) {
      progs.push_back(std::make_unique<FuncProgram>([&steps, w](double) -> OpRequest {
        int s = steps[static_cast<size_t>(w)]++;
        if (s >= 30) return OpRequest::done();
        if (s % 3 == 2) return OpRequest::clock();
        return OpRequest::inc({0, w, 0}, 0.5);
      }));
    }
    Simulator sim(cfg, std::move(progs));
    sim.run();
    CHECK(sim.shard(0).table(0).read({0, 0, 0}) +
              sim.shard(1).table(0).read({0, 1, 0}) ==
          doctest::Approx(2 * 20 * 0.5));
  }
}
