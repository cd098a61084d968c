// Copyright (c) bcps contributors.
// Licensed under the Apache 2.0 License.
#include <cmath>

#include "bcps/inc_workload.hpp"
#include "doctest.h"

using namespace bcps;

TEST_CASE("round deltas are dyadic and deterministic") {
  for (int32_t w = 0; w < 4; ++w)
    for (int32_t row = 0; row < 8; ++row)
      for (int32_t r = 0; r < 8; ++r) {
        double d = bsp_delta(w, row, r);
        CHECK(d == bsp_delta(w, row, r));
        CHECK(std::fabs(d) <= 127.0 / 256.0);
        CHECK(d * 256.0 == std::nearbyint(d * 256.0));
      }
  BspSpec spec;
  auto a = bsp_serial_states(spec);
  auto b = bsp_serial_states(spec);
  REQUIRE(a.size() == static_cast<size_t>(spec.rounds) + 1);
  CHECK(a == b);
}

TEST_CASE("round-synchronized runs match the serial fold bit for bit") {
  for (int32_t workers : {1, 2, 4}) {
    for (uint64_t seed : {1ull, 2ull, 3ull, 4ull}) {
      BspSpec spec;
      spec.workers = workers;
      spec.processes = workers > 1 ? 2 : 1;
      spec.seed = seed;
      BspResult res = run_bsp(spec);
      INFO("workers ", workers, " seed ", seed, ": ", res.error);
      CHECK(res.ok);
      CHECK(res.view_checks == static_cast<int64_t>(workers) * spec.rounds * spec.rows);
      CHECK(res.master_checks > 0);
    }
  }
}

TEST_CASE("sweep points hold their divergence caps under audit") {
  for (const SweepPoint& pt : safety_sweep_points()) {
    for (uint64_t seed : {5ull, 6ull, 7ull}) {
      SimConfig cfg = sweep_config(pt, seed);
      auto progs = make_random_mix(cfg, 10, 4);
      Simulator sim(cfg, std::move(progs));
      AuditObserver audit(cfg, AuditObserver::Level::Full, 0.0);
      audit.bind(&sim);
      sim.attach_observer(&audit);
      sim.run();
      AuditReport rep = audit.report();
      INFO(pt.label, " seed ", seed, ": ", rep.brief());
      CHECK(rep.ok());
      CHECK(rep.incs_checked > 0);
      CHECK(rep.max_divergence <= divergence_cap(pt, cfg.topo.workers()));
    }
  }
}
