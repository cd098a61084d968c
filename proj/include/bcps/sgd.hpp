// Copyright (c) bcps contributors.
// Licensed under the Apache 2.0 License.
#pragma once

#include <cmath>
#include <cstdint>
#include <memory>
#include <random>
#include <vector>

#include "bcps/audit.hpp"

namespace bcps {

// A convex objective split into Huber-clipped quadratic components: each piece
// is (1/2)d^2 near its center and L*d - L^2/2 beyond, so gradients never
// exceed L in norm and the minimizer is cheap to find to high precision.
struct SgdProblem {
  int32_t dimension = 4;        // K
  int64_t steps = 1000;         // T, total updates across all workers
  int32_t workers = 1;          // P
  double center_radius = 0.01;  // component centers live in this box
  double lipschitz = 0.03;      // L
  double diameter = 0.04;       // F, checked as (1/2)|x - x*|^2 <= F^2
  double sigma = 4.0 / 3.0;     // step sizes eta_t = sigma / sqrt(t)
  double vap_delta = 0.0;       // value bounds v_t = vap_delta / sqrt(t); 0 = clock-only
  uint64_t problem_seed = 1;

  void validate() const {
    if (dimension <= 0 || steps <= 0 || workers <= 0)
      throw ConfigError("sgd: dimension, steps, and workers must be positive");
    if (steps % workers != 0) throw ConfigError("sgd: steps must split evenly across workers");
    if (lipschitz <= 0.0 || diameter <= 0.0 || sigma <= 0.0)
      throw ConfigError("sgd: lipschitz, diameter, and sigma must be positive");
    if (center_radius < 0.0 || vap_delta < 0.0)
      throw ConfigError("sgd: radius and vap_delta must be non-negative");
  }
};

inline std::vector<std::vector<double>> sgd_centers(const SgdProblem& p) {
  std::mt19937_64 rng(p.problem_seed * 0x9E3779B97F4A7C15ull + 1);
  auto u01 = [&] { return static_cast<double>(rng() >> 11) * 0x1.0p-53; };
  std::vector<std::vector<double>> c(static_cast<size_t>(p.steps));
  for (auto& row : c) {
    row.resize(static_cast<size_t>(p.dimension));
    for (double& x : row) x = p.center_radius * (2.0 * u01() - 1.0);
  }
  return c;
}

inline double sgd_component_value(const std::vector<double>& center,
                                  const std::vector<double>& x, double L) {
  double d2 = 0.0;
  for (size_t k = 0; k < x.size(); ++k) d2 += (x[k] - center[k]) * (x[k] - center[k]);
  double d = std::sqrt(d2);
  return d <= L ? 0.5 * d2 : L * d - 0.5 * L * L;
}

inline void sgd_component_grad(const std::vector<double>& center, const std::vector<double>& x,
                               double L, std::vector<double>& g) {
  double d2 = 0.0;
  for (size_t k = 0; k < x.size(); ++k) {
    g[k] = x[k] - center[k];
    d2 += g[k] * g[k];
  }
  double d = std::sqrt(d2);
  if (d > L)
    for (double& gk : g) gk *= L / d;
}

inline double compute_regret_bound(double sigma, double L, double F, int64_t T, double vap_delta,
                                   int32_t P, int32_t K) {
  if (sigma <= 0.0) throw ConfigError("regret bound: sigma must be positive");
  double sT = std::sqrt(static_cast<double>(T));
  return sigma * L * L * sT + F * F * sT / sigma +
         4.0 * vap_delta * L * P * std::sqrt(static_cast<double>(K) * T);
}

// Full-gradient descent to machine precision; the objective is 1-smooth, so a
// unit step converges. This is the oracle every regret number is measured
// against.
inline std::vector<double> reference_optimum(const SgdProblem& p) {
  auto centers = sgd_centers(p);
  std::vector<double> x(static_cast<size_t>(p.dimension), 0.0);
  std::vector<double> g(x.size()), total(x.size());
  for (int64_t iter = 0; iter < 200000; ++iter) {
    std::fill(total.begin(), total.end(), 0.0);
    for (const auto& c : centers) {
      sgd_component_grad(c, x, p.lipschitz, g);
      for (size_t k = 0; k < x.size(); ++k) total[k] += g[k];
    }
    double norm = 0.0;
    for (size_t k = 0; k < x.size(); ++k) {
      total[k] /= static_cast<double>(p.steps);
      norm += total[k] * total[k];
    }
    if (std::sqrt(norm) <= 1e-12) return x;
    for (size_t k = 0; k < x.size(); ++k) x[k] -= total[k];
  }
  throw ContractViolation("sgd oracle: full-gradient descent did not converge");
}

struct SgdStepRecord {
  int64_t t = 0;                // global step, worker-major
  std::vector<double> view;     // iterate the gradient was taken at
  std::vector<double> update;   // -eta_t * grad
};

struct SgdResult {
  double regret = 0.0;
  double bound = 0.0;
  double f_star = 0.0;
  std::vector<double> x_star;
  double max_delta_norm = 0.0;   // max l2 view error vs the reference sequence
  double max_delta_inf = 0.0;    // max per-coordinate view error
  double max_delta_ratio = 0.0;  // l2 error over 2*v_t*sqrt(K)*(P-1)
  bool lemma_ok = true;          // l2 error within 2*v_t*sqrt(K)*(P-1) at every step
  bool diameter_ok = true;       // (1/2)|view - x*|^2 <= F^2 at every step
  std::vector<SgdStepRecord> trace;  // indexed by t-1
  std::vector<double> step_gap;      // per step: objective at the view minus f_star
  std::vector<double> delta_l2;      // per step: l2 view error vs the reference fold
  std::vector<double> delta_inf;     // per step: max per-coordinate view error
  std::vector<double> master;        // quiesced weights, one per dimension
  std::vector<ClientCore::Counters> client_counters;
  std::vector<ShardCore::Counters> shard_counters;
  AuditReport audit;
  RunStats stats;
};

struct SgdOptions {
  Clock staleness = 1;    // clock window for the compound model (vap_delta > 0)
  int32_t shards = 1;
  bool audit = false;     // attach the omniscient auditor (simulator mode only)
  double audit_tol = 1e-9;
  AdversaryProfile adversary{};
};

namespace detail {

// One worker's side of the run: per epoch it reads the K weights, takes the
// gradient of its assigned component, writes the scaled update back, and
// ticks its clock. With barrier = true (the clock-only baseline) reads and
// writes live in separate clock periods so a round equals a serial round.
class SgdWorker : public WorkerProgram {
 public:
  using Centers = std::shared_ptr<const std::vector<std::vector<double>>>;

  SgdWorker(SgdProblem p, Centers centers, int32_t rank, bool barrier,
            std::vector<SgdStepRecord>* out)
      : prob_(std::move(p)), centers_(std::move(centers)), rank_(rank), barrier_(barrier),
        out_(out), epochs_(prob_.steps / prob_.workers),
        view_(static_cast<size_t>(prob_.dimension)), upd_(static_cast<size_t>(prob_.dimension)) {}

  OpRequest next(double v) override {
    const int32_t K = prob_.dimension;
    switch (phase_) {
      case 0:
        if (epochs_ == 0) return OpRequest::done();
        phase_ = 1;
        k_ = 0;
        return OpRequest::get(key(0));
      case 1: {
        view_[static_cast<size_t>(k_)] = v;
        if (++k_ < K) return OpRequest::get(key(k_));
        const int64_t t = epoch_ * prob_.workers + rank_ + 1;
        std::vector<double> g(static_cast<size_t>(K));
        sgd_component_grad((*centers_)[static_cast<size_t>(t - 1)], view_, prob_.lipschitz, g);
        const double eta = prob_.sigma / std::sqrt(static_cast<double>(t));
        for (size_t k = 0; k < g.size(); ++k) upd_[k] = -eta * g[k];
        (*out_)[static_cast<size_t>(t - 1)] = {t, view_, upd_};
        k_ = 0;
        if (barrier_) {
          phase_ = 2;
          return OpRequest::clock();
        }
        phase_ = 3;
        return OpRequest::inc(key(0), upd_[0]);
      }
      case 2:  // barrier between the read and write periods
        phase_ = 3;
        k_ = 0;
        return OpRequest::inc(key(0), upd_[0]);
      case 3:
        if (++k_ < K) return OpRequest::inc(key(k_), upd_[static_cast<size_t>(k_)]);
        phase_ = 4;
        return OpRequest::clock();
      default:
        if (++epoch_ == epochs_) return OpRequest::done();
        phase_ = 1;
        k_ = 0;
        return OpRequest::get(key(0));
    }
  }

  int64_t step() const override { return epoch_; }

 private:
  ParamKey key(int32_t k) const { return {0, 0, k}; }

  SgdProblem prob_;
  Centers centers_;
  int32_t rank_;
  bool barrier_;
  std::vector<SgdStepRecord>* out_;
  int64_t epochs_, epoch_ = 0;
  int32_t k_ = 0, phase_ = 0;
  std::vector<double> view_, upd_;
};

// Steps the decaying value bound: whenever the slowest worker finishes epoch
// e, every controller tightens to v = vap_delta / sqrt(e*P + 1).
class VapSchedule : public SimObserver {
 public:
  VapSchedule(Simulator* sim, double vap_delta, int32_t workers)
      : sim_(sim), delta_(vap_delta), clocks_(static_cast<size_t>(workers), 0) {}

  void on_op(WorkerId w, const OpRequest& op, bool completed, double, Clock, int64_t) override {
    if (op.kind != OpRequest::Kind::Clock || !completed) return;
    auto& c = clocks_[static_cast<size_t>(sim_->topology().flat(w))];
    ++c;
    int64_t e = clocks_[0];
    for (int64_t v : clocks_) e = std::min(e, v);
    if (e <= applied_) return;
    applied_ = e;
    const int32_t P = static_cast<int32_t>(clocks_.size());
    double v = delta_ / std::sqrt(static_cast<double>(e) * P + 1.0);
    for (ProcessId p = 0; p < sim_->num_clients(); ++p)
      sim_->client(p).controller().set_value_bound(v);
    for (int32_t s = 0; s < sim_->num_shards(); ++s)
      sim_->shard(s).controller().set_value_bound(v);
  }

 private:
  Simulator* sim_;
  double delta_;
  std::vector<int64_t> clocks_;
  int64_t applied_ = 0;
};

}  // namespace detail

// The worker programs for a problem; `trace` must stay alive and sized to
// `steps` for the duration of the run. Shared by the simulator harness and
// the socket drivers.
inline std::vector<std::unique_ptr<WorkerProgram>> make_sgd_workers(
    const SgdProblem& p, std::vector<SgdStepRecord>* trace) {
  p.validate();
  auto centers =
      std::make_shared<const std::vector<std::vector<double>>>(sgd_centers(p));
  std::vector<std::unique_ptr<WorkerProgram>> progs;
  for (int32_t r = 0; r < p.workers; ++r)
    progs.push_back(
        std::make_unique<detail::SgdWorker>(p, centers, r, !(p.vap_delta > 0.0), trace));
  return progs;
}

// Table layout every SGD run uses: one dense row of K weights.
inline std::vector<TableSpec> sgd_tables(const SgdProblem& p) {
  return {{0, RowKind::Dense, p.dimension}};
}

inline ConsistencyPolicy sgd_policy(const SgdProblem& p, Clock staleness) {
  ConsistencyPolicy policy;
  const bool value_bound = p.vap_delta > 0.0;
  policy.model = value_bound ? Model::CvapStrong : Model::Cap;
  policy.staleness = value_bound ? staleness : 0;
  policy.value_bound = value_bound ? p.vap_delta : 0.0;
  policy.magnitude_cap = 0.05;
  policy.accounting = Accounting::Signed;
  return policy;
}

// Scores a completed trace against the oracle optimum and the reference
// sequence (updates folded worker-major). Fills everything in `res` except
// trace, master, counters, audit, and stats; used by both transports.
inline void score_sgd(const SgdProblem& p, SgdResult* res) {
  const bool value_bound = p.vap_delta > 0.0;
  auto centers = sgd_centers(p);
  res->x_star = reference_optimum(p);
  res->f_star = 0.0;
  for (const auto& c : centers) res->f_star += sgd_component_value(c, res->x_star, p.lipschitz);
  res->f_star /= static_cast<double>(p.steps);
  res->bound = compute_regret_bound(p.sigma, p.lipschitz, p.diameter, p.steps, p.vap_delta,
                                    p.workers, p.dimension);

  const size_t K = static_cast<size_t>(p.dimension);
  res->regret = 0.0;
  res->step_gap.clear();
  res->delta_l2.clear();
  res->delta_inf.clear();
  std::vector<double> ref(K, 0.0), diff(K);
  for (const SgdStepRecord& rec : res->trace) {
    const double gap =
        sgd_component_value(centers[static_cast<size_t>(rec.t - 1)], rec.view, p.lipschitz) -
        res->f_star;
    res->regret += gap;
    res->step_gap.push_back(gap);
    double n2 = 0.0, ninf = 0.0, d2 = 0.0;
    for (size_t k = 0; k < K; ++k) {
      diff[k] = rec.view[k] - ref[k];
      n2 += diff[k] * diff[k];
      ninf = std::max(ninf, std::fabs(diff[k]));
      d2 += (rec.view[k] - res->x_star[k]) * (rec.view[k] - res->x_star[k]);
    }
    res->delta_l2.push_back(std::sqrt(n2));
    res->delta_inf.push_back(ninf);
    res->max_delta_norm = std::max(res->max_delta_norm, std::sqrt(n2));
    res->max_delta_inf = std::max(res->max_delta_inf, ninf);
    if (0.5 * d2 > p.diameter * p.diameter) res->diameter_ok = false;
    if (value_bound && p.workers > 1) {
      double v_t = p.vap_delta / std::sqrt(static_cast<double>(rec.t));
      double cap = 2.0 * v_t * std::sqrt(static_cast<double>(K)) * (p.workers - 1);
      double ratio = std::sqrt(n2) / cap;
      res->max_delta_ratio = std::max(res->max_delta_ratio, ratio);
      if (ratio > 1.0) res->lemma_ok = false;
    } else if (p.workers == 1 && std::sqrt(n2) != 0.0) {
      res->lemma_ok = false;  // a lone worker must match the reference exactly
    }
    for (size_t k = 0; k < K; ++k) ref[k] += rec.update[k];
  }
}

// Executes the problem on the simulator and scores the trajectory.
inline SgdResult run_sgd(const SgdProblem& p, uint64_t schedule_seed,
                         const SgdOptions& opt = {}) {
  p.validate();
  const bool value_bound = p.vap_delta > 0.0;

  SimConfig cfg;
  cfg.topo = {p.workers, 1, opt.shards};
  cfg.tables = sgd_tables(p);
  cfg.policy = sgd_policy(p, opt.staleness);
  cfg.seed = schedule_seed;
  cfg.adversary = opt.adversary;

  SgdResult res;
  res.trace.resize(static_cast<size_t>(p.steps));
  Simulator sim(cfg, make_sgd_workers(p, &res.trace));
  detail::VapSchedule sched(&sim, p.vap_delta, p.workers);
  if (value_bound) sim.attach_observer(&sched);
  AuditObserver audit(cfg, opt.audit ? AuditObserver::Level::Full : AuditObserver::Level::None,
                      opt.audit_tol);
  if (opt.audit) {
    audit.bind(&sim);
    sim.attach_observer(&audit);
  }
  res.stats = sim.run();
  if (opt.audit) res.audit = audit.report();

  const int32_t home = partition(0, 0, opt.shards);
  for (int32_t k = 0; k < p.dimension; ++k)
    res.master.push_back(sim.shard(home).table(0).read({0, 0, k}));
  for (ProcessId c = 0; c < sim.num_clients(); ++c)
    res.client_counters.push_back(sim.client(c).counters());
  for (int32_t s = 0; s < sim.num_shards(); ++s)
    res.shard_counters.push_back(sim.shard(s).counters());

  score_sgd(p, &res);
  return res;
}

// The same per-step rule run serially, for oracle comparisons at P = 1.
inline std::vector<SgdStepRecord> run_sgd_sequential(const SgdProblem& p) {
  p.validate();
  auto centers = sgd_centers(p);
  std::vector<SgdStepRecord> trace(static_cast<size_t>(p.steps));
  const size_t K = static_cast<size_t>(p.dimension);
  std::vector<double> x(K, 0.0), g(K);
  for (int64_t t = 1; t <= p.steps; ++t) {
    sgd_component_grad(centers[static_cast<size_t>(t - 1)], x, p.lipschitz, g);
    const double eta = p.sigma / std::sqrt(static_cast<double>(t));
    SgdStepRecord rec{t, x, std::vector<double>(K)};
    for (size_t k = 0; k < K; ++k) {
      rec.update[k] = -eta * g[k];
      x[k] += rec.update[k];
    }
    trace[static_cast<size_t>(t - 1)] = std::move(rec);
  }
  return trace;
}

}  // namespace bcps
