// Copyright (c) bcps contributors.
// Licensed under the Apache 2.0 License.
#include <cmath>
#include <map>
#include <thread>

#include "bcps/inc_workload.hpp"
#include "bcps/sgd.hpp"
#include "bcps/socket.hpp"
#include "doctest.h"

using namespace bcps;

TEST_CASE("socket transport runs two processes to quiescence and conserves sums") {
  Topology topo{2, 1, 2};
  std::vector<TableSpec> tables{{0, RowKind::Dense, 1}};
  ConsistencyPolicy policy;
  policy.model = Model::Ssp;
  policy.staleness = 1;
  policy.magnitude_cap = 100.0;

  ServerNode s0(0, tables, topo, policy, "127.0.0.1", 0);
  ServerNode s1(1, tables, topo, policy, "127.0.0.1", 0);
  std::vector<ShardEndpoint> eps{{"127.0.0.1", s0.port()}, {"127.0.0.1", s1.port()}};
  std::thread t0([&] { s0.run(); });
  std::thread t1([&] { s1.run(); });

  SimConfig mix_cfg;
  mix_cfg.topo = topo;
  mix_cfg.seed = 42;
  const int rounds = 12, rows = 4;

  std::vector<std::thread> clients;
  for (ProcessId p = 0; p < 2; ++p)
    clients.emplace_back([&, p] {
      ClientNode node(p, tables, topo, policy, eps);
      auto progs = make_random_mix(mix_cfg, rounds, rows);
      node.drive(0, *progs[static_cast<size_t>(topo.flat({p, 0}))]);
      node.shutdown();
    });
  for (auto& c : clients) c.join();
  t0.join();
  t1.join();

  // Replay the deterministic programs locally to get the exact expected sums.
  std::map<int32_t, double> want;
  auto replay = make_random_mix(mix_cfg, rounds, rows);
  for (auto& prog : replay)
    for (;;) {
      OpRequest op = prog->next(0.0);
      if (op.kind == OpRequest::Kind::Done) break;
      if (op.kind == OpRequest::Kind::Inc) want[op.key.row] += op.delta;
    }
  for (int32_t row = 0; row < rows; ++row) {
    const ServerNode& owner = partition(0, row, topo.shards) == 0 ? s0 : s1;
    CHECK(owner.core().table(0).read({0, row, 0}) == want[row]);
  }
}

TEST_CASE("sim and socket masters agree on a small run") {
  SgdProblem p;
  p.dimension = 4;
  p.steps = 40;
  p.workers = 1;
  p.sigma = p.diameter / p.lipschitz;
  p.vap_delta = 0.0;
  p.problem_seed = 31;

  SimConfig cfg;
  cfg.topo = {1, 1, 1};
  cfg.tables = sgd_tables(p);
  cfg.policy = sgd_policy(p, 1);
  cfg.seed = 7;
  std::vector<SgdStepRecord> sim_trace(static_cast<size_t>(p.steps));
  Simulator sim(cfg, make_sgd_workers(p, &sim_trace));
  sim.run();

  ServerNode server(0, cfg.tables, cfg.topo, cfg.policy, "127.0.0.1", 0);
  std::thread st([&] { server.run(); });
  std::vector<SgdStepRecord> sock_trace(static_cast<size_t>(p.steps));
  {
    ClientNode node(0, cfg.tables, cfg.topo, cfg.policy, {{"127.0.0.1", server.port()}});
    auto progs = make_sgd_workers(p, &sock_trace);
    node.drive(0, *progs[0]);
    node.shutdown();
  }
  st.join();

  for (int32_t k = 0; k < p.dimension; ++k) {
    double a = sim.shard(0).table(0).read({0, 0, k});
    double b = server.core().table(0).read({0, 0, k});
    CHECK(std::fabs(a - b) <= 1e-6);
  }
  for (size_t i = 0; i < sim_trace.size(); ++i)
    for (int32_t k = 0; k < p.dimension; ++k)
      CHECK(sim_trace[i].view[static_cast<size_t>(k)] ==
            sock_trace[i].view[static_cast<size_t>(k)]);
}
