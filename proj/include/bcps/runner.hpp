// Copyright (c) bcps contributors.
// Licensed under the Apache 2.0 License.
#pragma once

#include <atomic>
#include <chrono>
#include <cmath>
#include <csignal>
#include <cstdio>
#include <functional>
#include <limits>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "bcps/config.hpp"
#include "bcps/inc_workload.hpp"
#include "bcps/metrics.hpp"
#include "bcps/socket.hpp"

namespace bcps {

namespace detail {

struct ThreadErrors {
  std::mutex mu;
  std::exception_ptr first;

  void capture() {
    std::lock_guard<std::mutex> lk(mu);
    if (!first) first = std::current_exception();
  }

  void rethrow() {
    if (first) std::rethrow_exception(first);
  }
};

inline std::atomic<bool> g_stop_requested{false};

inline void stop_signal_handler(int) { g_stop_requested.store(true); }

}  // namespace detail

// Translates SIGINT/SIGTERM into one call of the given stop action.
class StopWatcher {
 public:
  explicit StopWatcher(std::function<void()> stop) : stop_(std::move(stop)) {
    detail::g_stop_requested.store(false);
    std::signal(SIGINT, detail::stop_signal_handler);
    std::signal(SIGTERM, detail::stop_signal_handler);
    th_ = std::thread([this] {
      while (!done_.load()) {
        if (detail::g_stop_requested.load()) {
          stop_();
          return;
        }
        std::this_thread::sleep_for(std::chrono::milliseconds(100));
      }
    });
  }

  ~StopWatcher() {
    done_.store(true);
    th_.join();
    std::signal(SIGINT, SIG_DFL);
    std::signal(SIGTERM, SIG_DFL);
  }

 private:
  std::function<void()> stop_;
  std::atomic<bool> done_{false};
  std::thread th_;
};

// Drives every worker thread of one process on its node, then closes it.
inline void drive_process_over_socket(ClientNode& node, const Topology& topo, ProcessId proc,
                                      std::vector<std::unique_ptr<WorkerProgram>>& progs,
                                      detail::ThreadErrors& errs) {
  std::vector<std::thread> workers;
  for (int32_t t = 0; t < topo.threads_per_process; ++t) {
    WorkerProgram* prog = progs[static_cast<size_t>(proc * topo.threads_per_process + t)].get();
    workers.emplace_back([&node, &errs, t, prog] {
      try {
        node.drive(t, *prog);
      } catch (...) {
        errs.capture();
      }
    });
  }
  for (auto& t : workers) t.join();
  try {
    node.shutdown();
  } catch (...) {
    errs.capture();
  }
}

// Runs one program per worker over localhost TCP: a ServerNode per shard and
// a ClientNode per process, everything joined before returning. Nodes stay
// alive in the out parameters so callers can harvest state and counters.
inline void run_programs_over_sockets(const Topology& topo, const std::vector<TableSpec>& specs,
                                      const ConsistencyPolicy& policy, const SocketSection& net,
                                      int32_t auto_flush_incs,
                                      std::vector<std::unique_ptr<WorkerProgram>>& progs,
                                      std::vector<std::unique_ptr<ServerNode>>* servers_out,
                                      std::vector<std::unique_ptr<ClientNode>>* clients_out) {
  auto& servers = *servers_out;
  auto& clients = *clients_out;
  for (int32_t s = 0; s < topo.shards; ++s)
    servers.push_back(std::make_unique<ServerNode>(
        s, specs, topo, policy, net.host,
        static_cast<uint16_t>(net.base_port == 0 ? 0 : net.base_port + s), 0,
        net.pull_timeout_ms));
  std::vector<ShardEndpoint> eps;
  for (auto& sv : servers) eps.push_back({net.host, sv->port()});

  std::vector<std::thread> server_threads;
  for (auto& sv : servers) server_threads.emplace_back([&sv] { sv->run(); });

  try {
    for (ProcessId p = 0; p < topo.processes; ++p)
      clients.push_back(std::make_unique<ClientNode>(p, specs, topo, policy, eps,
                                                     auto_flush_incs));
  } catch (...) {
    for (auto& sv : servers) sv->request_stop();
    for (auto& t : server_threads) t.join();
    throw;
  }

  detail::ThreadErrors errs;
  std::vector<std::thread> client_threads;
  for (ProcessId p = 0; p < topo.processes; ++p)
    client_threads.emplace_back([&, p] {
      drive_process_over_socket(*clients[static_cast<size_t>(p)], topo, p, progs, errs);
    });
  for (auto& t : client_threads) t.join();
  for (auto& t : server_threads) t.join();
  errs.rethrow();
}

// The socket-transport twin of run_sgd. The decaying value-bound schedule is
// a scheduler observer, so only the clock-bound baseline (vap_delta = 0) runs
// here; the guarantees scored are schedule-independent.
inline SgdResult run_sgd_over_sockets(const ExperimentConfig& cfg) {
  SgdProblem p = cfg.sgd_problem();
  p.validate();
  if (p.vap_delta > 0.0)
    throw ConfigError("socket-mode sgd requires vap_delta = 0 (the decaying value-bound "
                      "schedule is simulator-only)");

  SgdResult res;
  res.trace.resize(static_cast<size_t>(p.steps));
  auto progs = make_sgd_workers(p, &res.trace);
  const Topology topo{p.workers, 1, cfg.topo.shards};
  const auto specs = sgd_tables(p);
  const TablePolicy* block = cfg.table(0);
  const ConsistencyPolicy policy = sgd_policy(p, block ? block->policy.staleness : 0);

  std::vector<std::unique_ptr<ServerNode>> servers;
  std::vector<std::unique_ptr<ClientNode>> clients;
  run_programs_over_sockets(topo, specs, policy, cfg.socket, cfg.auto_flush_incs, progs,
                            &servers, &clients);

  const size_t home = static_cast<size_t>(partition(0, 0, topo.shards));
  for (int32_t k = 0; k < p.dimension; ++k)
    res.master.push_back(servers[home]->core().table(0).read({0, 0, k}));
  for (auto& c : clients) res.client_counters.push_back(c->core().counters());
  for (auto& s : servers) res.shard_counters.push_back(s->core().counters());
  score_sgd(p, &res);
  return res;
}

// The socket-transport twin of run_lda.
inline LdaResult run_lda_over_sockets(const Corpus& corpus, const LdaSpec& spec,
                                      const SocketSection& net, int32_t auto_flush_incs) {
  spec.validate();
  LdaResult res = make_lda_result(corpus, spec);
  auto progs = make_lda_workers(corpus, spec, &res);
  const Topology topo{spec.processes, spec.workers / spec.processes, spec.shards};

  std::vector<std::unique_ptr<ServerNode>> servers;
  std::vector<std::unique_ptr<ClientNode>> clients;
  run_programs_over_sockets(topo, lda_tables(spec), lda_policy(spec), net, auto_flush_incs,
                            progs, &servers, &clients);

  for (auto& c : clients) res.client_counters.push_back(c->core().counters());
  for (auto& s : servers) res.shard_counters.push_back(s->core().counters());
  finish_lda(corpus, spec, [&](const ParamKey& k) {
    return servers[static_cast<size_t>(partition(k.table, k.row, spec.shards))]
        ->core()
        .table(k.table)
        .read(k);
  }, &res);
  return res;
}

// What one experiment asserted, recorded, and printed.
struct ExperimentReport {
  std::vector<BoundCheck> bounds;
  std::vector<std::pair<std::string, double>> observations;
  std::vector<std::string> notes;
};

namespace detail {

inline void write_counter_csvs(const MetricsDir& dir,
                               const std::vector<ClientCore::Counters>& clients,
                               const std::vector<ShardCore::Counters>& shards,
                               const RunStats* stats) {
  CsvFile blocking = dir.csv("blocking.csv", "node,counter,value");
  for (size_t p = 0; p < clients.size(); ++p) {
    const ClientCore::Counters& c = clients[p];
    const std::string node = "client" + std::to_string(p);
    blocking.row({node, "blocked_incs", fmt_int(c.blocked_incs)});
    blocking.row({node, "not_ready_gets", fmt_int(c.not_ready_gets)});
    blocking.row({node, "clock_waits", fmt_int(c.clock_waits)});
    blocking.row({node, "incs", fmt_int(c.incs)});
    blocking.row({node, "gets", fmt_int(c.gets)});
    blocking.row({node, "flushes", fmt_int(c.flushes)});
  }
  if (stats) blocking.row({"schedule", "worker_retries", fmt_int(stats->worker_retries)});

  static const char* kKinds[6] = {"client_push", "client_pull", "pull_reply",
                                  "server_push", "clock",       "ack"};
  CsvFile msgs = dir.csv("messages.csv", "node,counter,value");
  for (size_t p = 0; p < clients.size(); ++p) {
    const std::string node = "client" + std::to_string(p);
    for (int k = 0; k < 6; ++k)
      msgs.row({node, std::string("sent_") + kKinds[k], fmt_int(clients[p].sent_by_kind[k])});
    msgs.row({node, "records_applied", fmt_int(clients[p].records_applied)});
    msgs.row({node, "pulls_sent", fmt_int(clients[p].pulls_sent)});
  }
  for (size_t s = 0; s < shards.size(); ++s) {
    const ShardCore::Counters& c = shards[s];
    const std::string node = "shard" + std::to_string(s);
    for (int k = 0; k < 6; ++k)
      msgs.row({node, std::string("sent_") + kKinds[k], fmt_int(c.sent_by_kind[k])});
    msgs.row({node, "records_in", fmt_int(c.records_in)});
    msgs.row({node, "records_out", fmt_int(c.records_out)});
    msgs.row({node, "pulls_parked", fmt_int(c.pulls_parked)});
    msgs.row({node, "pulls_served", fmt_int(c.pulls_served)});
    msgs.row({node, "emissions", fmt_int(c.emissions)});
    msgs.row({node, "gc_records", fmt_int(c.gc_records)});
  }
  if (stats) msgs.row({"schedule", "messages_delivered", fmt_int(stats->messages_delivered)});
}

}  // namespace detail

inline ExperimentReport sgd_experiment(const ExperimentConfig& cfg, const MetricsDir& dir) {
  SgdProblem p = cfg.sgd_problem();
  SgdResult res;
  if (cfg.mode == RunMode::Sim) {
    SgdOptions opt;
    opt.staleness = cfg.table(0)->policy.staleness;
    opt.shards = cfg.topo.shards;
    opt.audit = cfg.sgd.audit;
    opt.adversary = cfg.adversary;
    res = run_sgd(p, cfg.seed, opt);
  } else {
    res = run_sgd_over_sockets(cfg);
  }

  CsvFile regret = dir.csv("regret.csv", "t,step_gap,cumulative_regret");
  double cum = 0.0;
  for (size_t i = 0; i < res.step_gap.size(); ++i) {
    cum += res.step_gap[i];
    regret.row({fmt_int(static_cast<int64_t>(i) + 1), fmt_double(res.step_gap[i]),
                fmt_double(cum)});
  }
  CsvFile deltas = dir.csv("delta_norms.csv", "t,l2,linf,window_cap");
  for (size_t i = 0; i < res.delta_l2.size(); ++i) {
    const int64_t t = static_cast<int64_t>(i) + 1;
    double cap = std::numeric_limits<double>::infinity();
    if (p.vap_delta > 0.0 && p.workers > 1)
      cap = 2.0 * (p.vap_delta / std::sqrt(static_cast<double>(t))) *
            std::sqrt(static_cast<double>(p.dimension)) * (p.workers - 1);
    deltas.row({fmt_int(t), fmt_double(res.delta_l2[i]), fmt_double(res.delta_inf[i]),
                fmt_double(cap)});
  }
  CsvFile master = dir.csv("master_state.csv", "table,row,col,value");
  for (size_t k = 0; k < res.master.size(); ++k)
    master.row({"0", "0", fmt_int(static_cast<int64_t>(k)), fmt_double(res.master[k])});
  detail::write_counter_csvs(dir, res.client_counters, res.shard_counters,
                             cfg.mode == RunMode::Sim ? &res.stats : nullptr);

  ExperimentReport rep;
  rep.bounds.push_back(BoundCheck::within("regret_within_bound", res.regret, res.bound));
  rep.bounds.push_back(BoundCheck::flag("iterates_within_diameter", res.diameter_ok));
  if (p.workers == 1)
    rep.bounds.push_back(
        BoundCheck::within("single_worker_matches_reference", res.max_delta_norm, 0.0));
  else if (p.vap_delta > 0.0)
    rep.bounds.push_back(
        BoundCheck::within("view_error_within_window_cap", res.max_delta_ratio, 1.0));
  if (cfg.mode == RunMode::Sim && cfg.sgd.audit) {
    rep.bounds.push_back(BoundCheck::flag("protocol_audit_clean", res.audit.ok()));
    if (!res.audit.ok()) rep.notes.push_back("audit: " + res.audit.brief());
  }
  rep.observations = {{"regret", res.regret},
                      {"regret_bound", res.bound},
                      {"f_star", res.f_star},
                      {"max_delta_l2", res.max_delta_norm},
                      {"max_delta_linf", res.max_delta_inf}};
  return rep;
}

inline ExperimentReport lda_experiment(const ExperimentConfig& cfg, const MetricsDir& dir) {
  Corpus corpus = cfg.lda_corpus();
  LdaSpec spec = cfg.lda_spec();
  LdaResult par = cfg.mode == RunMode::Sim
                      ? run_lda(corpus, spec)
                      : run_lda_over_sockets(corpus, spec, cfg.socket, cfg.auto_flush_incs);

  ExperimentReport rep;
  CsvFile ll = dir.csv("lda_loglike.csv", "variant,sweeps,loglike");
  ll.row({"protocol", fmt_int(spec.sweeps), fmt_double(par.loglike)});
  rep.bounds.push_back(BoundCheck::flag("counts_conserved", par.conserved));
  if (!par.error.empty()) rep.notes.push_back("conservation: " + par.error);
  rep.observations.push_back({"loglike", par.loglike});
  rep.observations.push_back({"tokens", static_cast<double>(corpus.tokens())});

  if (cfg.lda.compare_serial) {
    LdaResult ser = run_lda_serial(corpus, spec);
    ll.row({"serial", fmt_int(spec.sweeps), fmt_double(ser.loglike)});
    const double gap =
        std::fabs(par.loglike - ser.loglike) / std::max(1.0, std::fabs(ser.loglike));
    rep.bounds.push_back(BoundCheck::within("loglike_gap_within_tol", gap, cfg.lda.loglike_tol));
    rep.observations.push_back({"serial_loglike", ser.loglike});
    rep.observations.push_back({"loglike_rel_gap", gap});
    if (spec.workers == 1 && spec.clock_bound)
      rep.bounds.push_back(BoundCheck::flag("assignments_match_serial",
                                            par.assignments == ser.assignments));
  }
  detail::write_counter_csvs(dir, par.client_counters, par.shard_counters,
                             cfg.mode == RunMode::Sim ? &par.stats : nullptr);
  return rep;
}

inline ExperimentReport audit_experiment(const ExperimentConfig& cfg, const MetricsDir& dir) {
  SimConfig sc;
  sc.topo = cfg.topo;
  sc.tables = cfg.table_specs();
  sc.policy = cfg.uniform_policy();
  sc.seed = cfg.seed;
  sc.auto_flush_incs = cfg.auto_flush_incs;
  sc.adversary = cfg.adversary;

  auto progs = make_random_mix(sc, cfg.audit.rounds, cfg.audit.rows);
  Simulator sim(sc, std::move(progs));
  AuditObserver audit(sc, AuditObserver::Level::Full, 0.0);
  audit.bind(&sim);
  sim.attach_observer(&audit);
  RunStats stats = sim.run();
  const AuditReport& ar = audit.report();

  CsvFile div = dir.csv("divergence.csv", "touch,max_divergence");
  for (const auto& [touch, value] : audit.divergence_series())
    div.row({fmt_int(touch), fmt_double(value)});

  std::vector<ClientCore::Counters> ccs;
  std::vector<ShardCore::Counters> scs;
  for (ProcessId p = 0; p < sim.num_clients(); ++p) ccs.push_back(sim.client(p).counters());
  for (int32_t s = 0; s < sim.num_shards(); ++s) scs.push_back(sim.shard(s).counters());
  detail::write_counter_csvs(dir, ccs, scs, &stats);

  ExperimentReport rep;
  rep.bounds.push_back(BoundCheck::flag("protocol_audit_clean", ar.ok()));
  if (!ar.ok()) rep.notes.push_back("audit: " + ar.brief());

  const ConsistencyPolicy& pol = sc.policy;
  const int32_t W = cfg.topo.workers();
  const SweepPoint pt{"", pol.model, pol.staleness, pol.value_bound, pol.magnitude_cap,
                      pol.accounting};
  const double cap = divergence_cap(pt, W);
  if (std::isfinite(cap)) {
    // The pairwise cap is a theorem only when windows add magnitudes, and for
    // strong models only when the per-update cap leaves room for two windows.
    const bool provable =
        pol.accounting == Accounting::Magnitude &&
        (!is_strong_vap(pol.model) || pol.magnitude_cap >= 2.0 * pol.value_bound);
    rep.bounds.push_back(provable
                             ? BoundCheck::within("divergence_within_cap", ar.max_divergence, cap)
                             : BoundCheck::recorded("divergence_within_cap", ar.max_divergence,
                                                    cap));
  }
  if (uses_value_bound(pol.model) && W > 1)
    rep.bounds.push_back(BoundCheck::recorded("divergence_vs_per_key_window_cap",
                                              ar.max_divergence,
                                              2.0 * pol.value_bound * (W - 1)));
  rep.observations = {{"max_divergence", ar.max_divergence},
                      {"worst_window", ar.worst_window},
                      {"worst_noise", ar.worst_noise},
                      {"reads_checked", static_cast<double>(ar.reads_checked)},
                      {"schedule_steps", static_cast<double>(stats.steps)}};
  return rep;
}

// Runs the configured experiment, writes the metric files, prints one line
// per bound. Exit codes: 0 all asserted bounds held, 1 violation or runtime
// failure, 2 invalid config, 3 transport failure (bind/connect).
inline int cmd_run(const ExperimentConfig& cfg) {
  try {
    cfg.validate();
    MetricsDir dir(cfg.out);
    ExperimentReport rep;
    switch (cfg.workload) {
      case WorkloadKind::Sgd: rep = sgd_experiment(cfg, dir); break;
      case WorkloadKind::Lda: rep = lda_experiment(cfg, dir); break;
      case WorkloadKind::Audit: rep = audit_experiment(cfg, dir); break;
    }
    dir.write_summary(run_mode_name(cfg.mode), workload_name(cfg.workload), cfg.seed, rep.bounds,
                      rep.observations);
    for (const BoundCheck& b : rep.bounds) {
      const char* tag = !b.asserted ? "info" : b.ok ? " ok " : "FAIL";
      if (b.has_values)
        printf("[%s] %s: %.17g vs %.17g\n", tag, b.name.c_str(), b.observed, b.limit);
      else
        printf("[%s] %s\n", tag, b.name.c_str());
    }
    for (const std::string& n : rep.notes) printf("note: %s\n", n.c_str());
    const bool pass = all_bounds_hold(rep.bounds);
    printf("%s; metrics in %s\n", pass ? "all asserted bounds held" : "bound violation",
           cfg.out.c_str());
    return pass ? 0 : 1;
  } catch (const ConfigError& e) {
    fprintf(stderr, "invalid config: %s\n", e.what());
    return 2;
  } catch (const ProtocolError& e) {
    fprintf(stderr, "transport failure: %s\n", e.what());
    return 3;
  } catch (const std::exception& e) {
    fprintf(stderr, "run failed: %s\n", e.what());
    return 1;
  }
}

inline int cmd_validate(const std::string& path) {
  try {
    ExperimentConfig cfg = load_experiment_config(path);
    printf("ok: mode=%s workload=%s seed=%llu out=%s processes=%d threads_per_process=%d "
           "shards=%d tables=%zu\n",
           run_mode_name(cfg.mode), workload_name(cfg.workload),
           static_cast<unsigned long long>(cfg.seed), cfg.out.c_str(), cfg.topo.processes,
           cfg.topo.threads_per_process, cfg.topo.shards, cfg.tables.size());
    return 0;
  } catch (const ConfigError& e) {
    fprintf(stderr, "invalid config: %s\n", e.what());
    return 2;
  }
}

// Serves one shard until every client process disconnects (or a signal asks
// for an early flush-and-stop), then dumps the quiesced master rows.
inline int cmd_serve(const ExperimentConfig& cfg, int32_t shard) {
  try {
    cfg.validate();
    if (cfg.mode != RunMode::Socket) throw ConfigError("serve: config must set mode = socket");
    if (shard < 0 || shard >= cfg.topo.shards)
      throw ConfigError("serve: shard index out of range");
    if (cfg.socket.base_port == 0)
      throw ConfigError("serve: separate server processes need a fixed base_port");
    MetricsDir dir(cfg.out);

    std::unique_ptr<ServerNode> server;
    try {
      server = std::make_unique<ServerNode>(
          shard, cfg.table_specs(), cfg.topo, cfg.uniform_policy(), cfg.socket.host,
          static_cast<uint16_t>(cfg.socket.base_port + shard), 0, cfg.socket.pull_timeout_ms);
    } catch (const ProtocolError& e) {
      fprintf(stderr, "cannot serve shard %d: %s\n", shard, e.what());
      return 3;
    }

    printf("shard %d serving on %s:%u\n", shard, cfg.socket.host.c_str(), server->port());
    fflush(stdout);
    {
      StopWatcher watcher([&server] { server->request_stop(); });
      server->run();
    }

    CsvFile master =
        dir.csv("master_shard" + std::to_string(shard) + ".csv", "table,row,col,value");
    for (const TableSpec& t : cfg.table_specs())
      server->core().table(t.id).for_each([&](const ParamKey& k, double v) {
        master.row({fmt_int(k.table), fmt_int(k.row), fmt_int(k.col), fmt_double(v)});
      });
    printf("shard %d quiesced\n", shard);
    return 0;
  } catch (const ConfigError& e) {
    fprintf(stderr, "invalid config: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    fprintf(stderr, "serve failed: %s\n", e.what());
    return 1;
  }
}

// Runs one client process's workers against already-running shard servers.
inline int cmd_client(const ExperimentConfig& cfg, ProcessId proc) {
  try {
    cfg.validate();
    if (cfg.mode != RunMode::Socket) throw ConfigError("client: config must set mode = socket");
    if (proc < 0 || proc >= cfg.topo.processes)
      throw ConfigError("client: process index out of range");
    if (cfg.socket.base_port == 0)
      throw ConfigError("client: separate client processes need a fixed base_port");

    // Build the full deterministic program set, then drive this process's part.
    std::vector<std::unique_ptr<WorkerProgram>> progs;
    std::vector<SgdStepRecord> trace;
    std::optional<Corpus> corpus;
    std::optional<LdaSpec> lspec;
    std::optional<LdaResult> sink;
    ConsistencyPolicy policy;
    std::vector<TableSpec> specs;
    if (cfg.workload == WorkloadKind::Sgd) {
      SgdProblem p = cfg.sgd_problem();
      trace.resize(static_cast<size_t>(p.steps));
      progs = make_sgd_workers(p, &trace);
      policy = sgd_policy(p, cfg.table(0)->policy.staleness);
      specs = sgd_tables(p);
    } else {
      corpus.emplace(cfg.lda_corpus());
      lspec.emplace(cfg.lda_spec());
      sink.emplace(make_lda_result(*corpus, *lspec));
      progs = make_lda_workers(*corpus, *lspec, &*sink);
      policy = lda_policy(*lspec);
      specs = lda_tables(*lspec);
    }

    std::unique_ptr<ClientNode> node;
    try {
      node = std::make_unique<ClientNode>(proc, specs, cfg.topo, policy, cfg.endpoints(),
                                          cfg.auto_flush_incs);
    } catch (const ProtocolError& e) {
      fprintf(stderr, "cannot reach the shards: %s\n", e.what());
      return 3;
    }

    detail::ThreadErrors errs;
    {
      StopWatcher watcher([&node] { node->request_stop(); });
      drive_process_over_socket(*node, cfg.topo, proc, progs, errs);
    }
    try {
      errs.rethrow();
    } catch (const PeerShutdown& e) {
      printf("stopping early: %s\n", e.what());
    }

    MetricsDir dir(cfg.out);
    CsvFile counters =
        dir.csv("client" + std::to_string(proc) + "_counters.csv", "node,counter,value");
    const ClientCore::Counters& c = node->core().counters();
    const std::string name = "client" + std::to_string(proc);
    counters.row({name, "incs", fmt_int(c.incs)});
    counters.row({name, "gets", fmt_int(c.gets)});
    counters.row({name, "flushes", fmt_int(c.flushes)});
    counters.row({name, "blocked_incs", fmt_int(c.blocked_incs)});
    counters.row({name, "not_ready_gets", fmt_int(c.not_ready_gets)});
    counters.row({name, "clock_waits", fmt_int(c.clock_waits)});
    counters.row({name, "records_applied", fmt_int(c.records_applied)});
    counters.row({name, "pulls_sent", fmt_int(c.pulls_sent)});
    printf("process %d finished\n", proc);
    return 0;
  } catch (const ConfigError& e) {
    fprintf(stderr, "invalid config: %s\n", e.what());
    return 2;
  } catch (const MagnitudeCapError& e) {
    fprintf(stderr, "bound violation: %s\n", e.what());
    return 1;
  } catch (const ProtocolError& e) {
    fprintf(stderr, "transport failure: %s\n", e.what());
    return 3;
  } catch (const std::exception& e) {
    fprintf(stderr, "client failed: %s\n", e.what());
    return 1;
  }
}

}  // namespace bcps
