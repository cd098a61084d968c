// Copyright (c) bcps contributors.
// Licensed under the Apache 2.0 License.
#include <memory>
#include <random>
#include <vector>

#include "bcps/audit.hpp"
#include "bcps/inc_workload.hpp"
#include "doctest.h"
#include "helpers.hpp"

using namespace bcps;
using bcps::testing::make_config;
using bcps::testing::make_policy;

namespace {

// Seeded mixes of reads, dyadic writes, and clock ticks; dyadic deltas make
// all folds exact, so the audit can demand bitwise agreement between reads
// and its reconstruction.
AuditReport run_audited(SimConfig cfg, int rounds, int keys) {
  auto progs = make_random_mix(cfg, rounds, keys);
  Simulator sim(cfg, std::move(progs));
  AuditObserver audit(cfg, AuditObserver::Level::Full, 0.0);
  audit.bind(&sim);
  sim.attach_observer(&audit);
  sim.run();
  return audit.report();
}

}  // namespace

TEST_CASE("audit passes clock-bound models on mixed random workloads") {
  for (uint64_t seed : {1ull, 2ull, 3ull}) {
    for (Model m : {Model::Ssp, Model::Cap}) {
      auto cfg = make_config(2, 2, 2, make_policy(m, 2, 0.0, 64.0), seed);
      cfg.auto_flush_incs = 3;
      auto rep = run_audited(cfg, 8, 5);
      INFO(model_name(m), " seed ", seed, ": ", rep.brief());
      CHECK(rep.ok());
      CHECK(rep.reads_checked > 0);
      CHECK(rep.incs_checked > 0);
      CHECK(rep.groups_checked > 0);
      CHECK(rep.flushes > 0);
    }
  }
}

TEST_CASE("audit passes value-bound models under both accountings") {
  for (uint64_t seed : {5ull, 6ull}) {
    for (Model m : {Model::VapWeak, Model::VapStrong}) {
      for (Accounting acc : {Accounting::Signed, Accounting::Magnitude}) {
        auto cfg = make_config(2, 1, 2, make_policy(m, 0, 8.0, 2.0, acc), seed);
        cfg.auto_flush_incs = 2;
        auto rep = run_audited(cfg, 10, 3);
        INFO(model_name(m), " seed ", seed, ": ", rep.brief());
        CHECK(rep.ok());
        CHECK(rep.worst_window <= 8.0);
        if (m == Model::VapStrong) CHECK(rep.reads_decomposed > 0);
      }
    }
  }
}

TEST_CASE("audit passes compound models with staleness and value bounds") {
  for (Model m : {Model::CvapWeak, Model::CvapStrong}) {
    auto cfg = make_config(3, 1, 2, make_policy(m, 1, 6.0, 1.5, Accounting::Magnitude), 11);
    cfg.auto_flush_incs = 2;
    auto rep = run_audited(cfg, 8, 4);
    INFO(model_name(m), ": ", rep.brief());
    CHECK(rep.ok());
  }
}

TEST_CASE("audit holds under adversarial schedules") {
  for (auto kind : {AdversaryKind::LaggardProcess, AdversaryKind::Burst}) {
    auto cfg = make_config(2, 2, 3, make_policy(Model::Cap, 3, 0.0, 64.0), 21);
    cfg.adversary.kind = kind;
    cfg.adversary.laggard = 1;
    auto rep = run_audited(cfg, 10, 6);
    INFO(rep.brief());
    CHECK(rep.ok());
  }
}

TEST_CASE("audit divergence stays within the propagation bounds") {
  // Weak model, magnitude accounting: any two worker views of one key differ
  // by at most the per-writer budget times the number of writers.
  auto pol = make_policy(Model::VapWeak, 0, 1.0, 1.0, Accounting::Magnitude);
  auto cfg = make_config(4, 1, 1, pol, 33);
  cfg.auto_flush_incs = 1;
  auto rep = run_audited(cfg, 12, 2);
  INFO(rep.brief());
  CHECK(rep.ok());
  CHECK(rep.max_divergence <= 1.0 * 4 + 1e-9);
  CHECK(rep.max_divergence > 0.0);
}
