// Copyright (c) bcps contributors.
// Licensed under the Apache 2.0 License.
#pragma once

#include <cmath>
#include <cstdio>
#include <string>

#include "bcps/core.hpp"
#include "bcps/errors.hpp"

namespace bcps {

// Bounded-consistency models. Clock-bounded models gate reads and clock
// advances on staleness s; value-bounded models gate writes on the bound v.
enum class Model { Ssp, Cap, VapWeak, VapStrong, CvapWeak, CvapStrong };

inline bool uses_clock_bound(Model m) {
  return m == Model::Ssp || m == Model::Cap || m == Model::CvapWeak || m == Model::CvapStrong;
}

inline bool uses_value_bound(Model m) {
  return m == Model::VapWeak || m == Model::VapStrong || m == Model::CvapWeak ||
         m == Model::CvapStrong;
}

inline bool is_strong_vap(Model m) { return m == Model::VapStrong || m == Model::CvapStrong; }

inline const char* model_name(Model m) {
  switch (m) {
    case Model::Ssp: return "ssp";
    case Model::Cap: return "cap";
    case Model::VapWeak: return "vap_weak";
    case Model::VapStrong: return "vap_strong";
    case Model::CvapWeak: return "cvap_weak";
    case Model::CvapStrong: return "cvap_strong";
  }
  return "?";
}

// How per-key unsynchronized accumulation is measured at the write gate:
// Signed sums deltas (cancellation allowed), Magnitude sums |delta| (stricter).
enum class Accounting { Signed, Magnitude };

struct ConsistencyPolicy {
  Model model = Model::Ssp;
  Clock staleness = 0;        // s, clock-bounded models only
  double value_bound = 0.0;   // v, value-bounded models only
  double magnitude_cap = 0.0; // u, enforced on every Inc
  Accounting accounting = Accounting::Signed;

  void validate() const {
    if (magnitude_cap <= 0.0) throw ConfigError("policy: magnitude cap u must be positive");
    if (uses_clock_bound(model) && staleness < 0)
      throw ConfigError("policy: staleness s must be non-negative");
    if (uses_value_bound(model) && value_bound <= 0.0)
      throw ConfigError("policy: value bound v must be positive");
  }
};

enum class Verdict { Proceed, FetchThenProceed, Block };

// Monotone predicate a blocked or fetching caller waits on. Once satisfiable it
// stays satisfiable, so event-driven re-evaluation needs no polling.
struct WaitCondition {
  enum class Kind { None, RowCoverageAtLeast, UnsyncedSumFits, GlobalMinAtLeast };
  Kind kind = Kind::None;
  ParamKey key;        // RowCoverageAtLeast / UnsyncedSumFits
  Clock clock = 0;     // RowCoverageAtLeast / GlobalMinAtLeast threshold
  double budget = 0.0; // UnsyncedSumFits: admissible accumulation incl. the delta

  std::string describe() const {
    char buf[96];
    switch (kind) {
      case Kind::None:
        return "none";
      case Kind::RowCoverageAtLeast:
        snprintf(buf, sizeof buf, "row (%d,%d) coverage >= %lld", key.table, key.row,
                 static_cast<long long>(clock));
        return buf;
      case Kind::UnsyncedSumFits:
        snprintf(buf, sizeof buf, "unsynced at (%d,%d,%d) within %.17g", key.table, key.row,
                 key.col, budget);
        return buf;
      case Kind::GlobalMinAtLeast:
        snprintf(buf, sizeof buf, "global min clock >= %lld", static_cast<long long>(clock));
        return buf;
    }
    return "?";
  }
};

struct AccessDecision {
  Verdict verdict = Verdict::Proceed;
  WaitCondition wait;

  static AccessDecision proceed() { return {}; }
  static AccessDecision fetch(WaitCondition c) { return {Verdict::FetchThenProceed, c}; }
  static AccessDecision block(WaitCondition c) { return {Verdict::Block, c}; }
};

// Pure decision functions over state snapshots. All protocol state lives with
// the caller; this class only encodes the model predicates.
class ConsistencyController {
 public:
  explicit ConsistencyController(ConsistencyPolicy p) : p_(p) { p_.validate(); }

  const ConsistencyPolicy& policy() const { return p_; }

  // Decaying-threshold schedules adjust v between steps.
  void set_value_bound(double v) {
    if (uses_value_bound(p_.model) && v <= 0.0)
      throw ConfigError("policy: value bound v must stay positive");
    p_.value_bound = v;
  }

  // A reader at clock c must already see every update stamped <= c - s - 1.
  AccessDecision check_read(WorkerId, Clock reader_clock, const ParamKey& key,
                            Clock row_known_through) const {
    if (reader_clock < 0) throw ContractViolation("check_read: negative reader clock");
    if (!key.valid()) throw ContractViolation("check_read: bad key");
    if (!uses_clock_bound(p_.model)) return AccessDecision::proceed();
    const Clock needed = reader_clock - p_.staleness - 1;
    if (row_known_through >= needed) return AccessDecision::proceed();
    return AccessDecision::fetch(
        {WaitCondition::Kind::RowCoverageAtLeast, ParamKey{key.table, key.row, 0}, needed, 0.0});
  }

  // Admit a write iff the per-key unsynchronized accumulation stays within v
  // (inclusive). `unsynced_accum` is the signed sum or the magnitude sum of the
  // writer's not-yet-fully-synchronized deltas on this key, per `accounting`.
  AccessDecision check_write(WorkerId, const ParamKey& key, double delta,
                             double unsynced_accum) const {
    if (!key.valid()) throw ContractViolation("check_write: bad key");
    if (std::fabs(delta) > p_.magnitude_cap)
      throw MagnitudeCapError("check_write: |delta| exceeds magnitude cap u");
    if (!uses_value_bound(p_.model)) return AccessDecision::proceed();
    const double next = p_.accounting == Accounting::Signed
                            ? std::fabs(unsynced_accum + delta)
                            : unsynced_accum + std::fabs(delta);
    if (next <= p_.value_bound) return AccessDecision::proceed();
    return AccessDecision::block(
        {WaitCondition::Kind::UnsyncedSumFits, key, 0, p_.value_bound});
  }

  // A worker may run at most s clocks ahead of the slowest worker.
  AccessDecision check_clock_advance(WorkerId, Clock current_clock, Clock new_clock,
                                     Clock global_min) const {
    if (new_clock != current_clock + 1)
      throw ContractViolation("check_clock_advance: clock must advance by exactly one");
    if (!uses_clock_bound(p_.model)) return AccessDecision::proceed();
    if (new_clock - global_min <= p_.staleness) return AccessDecision::proceed();
    return AccessDecision::block(
        {WaitCondition::Kind::GlobalMinAtLeast, ParamKey{}, new_clock - p_.staleness, 0.0});
  }

  // Strong VAP only: admit further propagation of a key iff the half-synchronized
  // magnitude plus the newly departing batch stays within max(u, v).
  AccessDecision gate_propagation(const ParamKey& key, double half_synced_magnitude,
                                  double batch_magnitude) const {
    if (!is_strong_vap(p_.model))
      throw ContractViolation("gate_propagation: only strong VAP gates propagation");
    const double cap = std::fmax(p_.magnitude_cap, p_.value_bound);
    if (half_synced_magnitude + batch_magnitude <= cap) return AccessDecision::proceed();
    return AccessDecision::block({WaitCondition::Kind::UnsyncedSumFits, key, 0, cap});
  }

 private:
  ConsistencyPolicy p_;
};

}  // namespace bcps
