// Copyright (c) bcps contributors.
// Licensed under the Apache 2.0 License.

#include <vector>

#include "bcps/topology.hpp"
#include "doctest.h"

using namespace bcps;

TEST_CASE("partition is deterministic and pinned") {
  CHECK(partition(0, 7, 4) == 3);
  for (int i = 0; i < 100; ++i) CHECK(partition(0, 7, 4) == partition(0, 7, 4));
  CHECK(partition(0, 0, 1) == 0);
  CHECK(partition(5, 123, 1) == 0);
  CHECK_THROWS_AS(partition(0, 0, 0), ConfigError);
  CHECK_THROWS_AS(partition(0, -1, 2), ContractViolation);
  CHECK_THROWS_AS(partition(-1, 0, 2), ContractViolation);
}

TEST_CASE("partition spreads consecutive rows evenly") {
  const int32_t shards = 4;
  std::vector<int> buckets(shards, 0);
  for (RowId r = 0; r < 10000; ++r) ++buckets[static_cast<size_t>(partition(0, r, shards))];
  for (int b : buckets) CHECK(b == 2500);
}

TEST_CASE("topology enumerates workers both ways") {
  Topology topo{3, 2, 2};
  topo.validate();
  REQUIRE(topo.workers() == 6);
  for (int32_t f = 0; f < 6; ++f) {
    WorkerId w = topo.worker(f);
    CHECK(w.process == f / 2);
    CHECK(w.thread == f % 2);
    CHECK(topo.flat(w) == f);
  }
  CHECK(topo.client_processes() == std::vector<ProcessId>{0, 1, 2});
  Topology bad{0, 1, 1};
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}
