// Copyright (c) bcps contributors.
// Licensed under the Apache 2.0 License.
#include <cmath>

#include "bcps/sgd.hpp"
#include "doctest.h"
#include "helpers.hpp"

using namespace bcps;

namespace {

SgdProblem small_problem(int32_t P, int64_t T, double vap_delta, uint64_t seed) {
  SgdProblem p;
  p.dimension = 4;
  p.steps = T;
  p.workers = P;
  p.sigma = p.diameter / p.lipschitz;
  p.vap_delta = vap_delta;
  p.problem_seed = seed;
  return p;
}

}  // namespace

TEST_CASE("regret bound closed form and guards") {
  CHECK(compute_regret_bound(1.0, 1.0, 1.0, 100, 0.0, 1, 1) == doctest::Approx(20.0).epsilon(1e-12));
  CHECK(compute_regret_bound(1.0, 1.0, 1.0, 100, 0.1, 4, 4) == doctest::Approx(52.0).epsilon(1e-12));
  CHECK_THROWS_AS(compute_regret_bound(0.0, 1.0, 1.0, 100, 0.0, 1, 1), ConfigError);
  CHECK_THROWS_AS(compute_regret_bound(-2.0, 1.0, 1.0, 100, 0.0, 1, 1), ConfigError);
}

TEST_CASE("component gradients are norm-capped") {
  SgdProblem p = small_problem(1, 32, 0.0, 3);
  auto centers = sgd_centers(p);
  std::mt19937_64 rng(11);
  auto u01 = [&] { return static_cast<double>(rng() >> 11) * 0x1.0p-53; };
  std::vector<double> x(4), g(4);
  for (int trial = 0; trial < 200; ++trial) {
    for (double& xk : x) xk = 0.2 * (2.0 * u01() - 1.0);
    const auto& c = centers[static_cast<size_t>(trial % p.steps)];
    sgd_component_grad(c, x, p.lipschitz, g);
    double n = 0.0;
    for (double gk : g) n += gk * gk;
    CHECK(std::sqrt(n) <= p.lipschitz + 1e-15);
  }
  // Far from the center the cap binds exactly.
  std::fill(x.begin(), x.end(), 1.0);
  sgd_component_grad(centers[0], x, p.lipschitz, g);
  double n = 0.0;
  for (double gk : g) n += gk * gk;
  CHECK(std::sqrt(n) == doctest::Approx(p.lipschitz).epsilon(1e-12));
}

TEST_CASE("reference optimum matches the quadratic closed form") {
  // Every center sits within radius of the origin, so the optimum stays in the
  // quadratic region of all components and must equal the center mean.
  for (uint64_t seed : {1ull, 9ull, 40ull}) {
    SgdProblem p = small_problem(2, 60, 0.0, seed);
    auto centers = sgd_centers(p);
    auto x = reference_optimum(p);
    for (int32_t k = 0; k < p.dimension; ++k) {
      double mean = 0.0;
      for (const auto& c : centers) mean += c[static_cast<size_t>(k)];
      mean /= static_cast<double>(p.steps);
      CHECK(x[static_cast<size_t>(k)] == doctest::Approx(mean).epsilon(1e-9));
    }
  }
}

TEST_CASE("single worker replays the serial trajectory bitwise") {
  for (double vap_delta : {0.0, 0.1}) {
    SgdProblem p = small_problem(1, 40, vap_delta, 17);
    SgdResult res = run_sgd(p, 99);
    auto serial = run_sgd_sequential(p);
    REQUIRE(res.trace.size() == serial.size());
    for (size_t i = 0; i < serial.size(); ++i) {
      CHECK(res.trace[i].t == serial[i].t);
      for (size_t k = 0; k < 4; ++k) {
        CHECK(res.trace[i].view[k] == serial[i].view[k]);
        CHECK(res.trace[i].update[k] == serial[i].update[k]);
      }
    }
    CHECK(res.max_delta_norm == 0.0);
    CHECK(res.lemma_ok);
    CHECK(res.diameter_ok);
    CHECK(res.regret <= res.bound);
  }
}

TEST_CASE("parallel runs stay within the regret bound and view-error cap") {
  for (uint64_t seed : {1ull, 2ull, 3ull}) {
    for (double vap_delta : {0.1, 1.0}) {
      SgdProblem p = small_problem(4, 200, vap_delta, seed);
      SgdResult res = run_sgd(p, seed * 31 + 5);
      CHECK(res.regret <= res.bound);
      CHECK(res.lemma_ok);
      CHECK(res.diameter_ok);
      CHECK(res.max_delta_ratio <= 1.0);
    }
  }
}

TEST_CASE("clock-only baseline stays within the two-term bound") {
  for (uint64_t seed : {4ull, 5ull}) {
    SgdProblem p = small_problem(4, 200, 0.0, seed);
    SgdResult res = run_sgd(p, seed);
    CHECK(res.regret <= res.bound);
    CHECK(res.diameter_ok);
  }
}

TEST_CASE("audited value-bound run reconstructs every read") {
  SgdProblem p = small_problem(4, 120, 0.1, 23);
  SgdOptions opt;
  opt.audit = true;
  SgdResult res = run_sgd(p, 77, opt);
  INFO(res.audit.brief());
  CHECK(res.audit.ok());
  CHECK(res.audit.reads_checked > 0);
  CHECK(res.audit.reads_decomposed > 0);
  CHECK(res.regret <= res.bound);
}
