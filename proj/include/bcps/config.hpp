// Copyright (c) bcps contributors.
// Licensed under the Apache 2.0 License.
#pragma once

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "bcps/lda.hpp"
#include "bcps/sgd.hpp"
#include "bcps/socket.hpp"

namespace bcps {

enum class RunMode { Sim, Socket };
enum class WorkloadKind { Sgd, Lda, Audit };

inline const char* run_mode_name(RunMode m) { return m == RunMode::Sim ? "sim" : "socket"; }

inline const char* workload_name(WorkloadKind k) {
  switch (k) {
    case WorkloadKind::Sgd: return "sgd";
    case WorkloadKind::Lda: return "lda";
    case WorkloadKind::Audit: return "audit";
  }
  return "?";
}

// One [table N] block: the consistency policy plus the row layout.
struct TablePolicy {
  TableId id = 0;
  ConsistencyPolicy policy;
  RowKind rows = RowKind::Dense;
  int32_t row_length = 1;

  TableSpec spec() const { return {id, rows, row_length}; }
};

struct SgdSection {
  int64_t steps = 200;
  int32_t dimension = 4;
  double center_radius = 0.01;
  double lipschitz = 0.03;
  double diameter = 0.04;
  double sigma = 0.0;  // 0 means the tuned default diameter / lipschitz
  double vap_delta = 0.0;
  bool audit = false;
};

struct LdaSection {
  int32_t topics = 5;
  double alpha = 0.5;
  double beta = 0.1;
  int32_t sweeps = 50;
  int32_t docs = 500;
  int32_t vocab = 1000;
  int32_t doc_len = 100;
  uint64_t corpus_seed = 7;
  std::string corpus;          // optional path; empty means synthesize
  bool compare_serial = true;  // also run the sequential sampler and check the gap
  double loglike_tol = 0.02;   // max relative log-likelihood gap when comparing
};

struct AuditSection {
  int64_t rounds = 64;
  int32_t rows = 8;
};

struct SocketSection {
  std::string host = "127.0.0.1";
  int32_t base_port = 7600;  // shard i listens on base_port + i; 0 = ephemeral
  int64_t pull_timeout_ms = 30000;
};

struct ExperimentConfig {
  RunMode mode = RunMode::Sim;
  uint64_t seed = 1;
  std::string out = "metrics_out";
  Topology topo{1, 1, 1};
  std::vector<TablePolicy> tables;
  WorkloadKind workload = WorkloadKind::Sgd;
  SgdSection sgd;
  LdaSection lda;
  AuditSection audit;
  AdversaryProfile adversary;
  int32_t auto_flush_incs = 64;
  SocketSection socket;

  const TablePolicy* table(TableId id) const {
    for (const TablePolicy& t : tables)
      if (t.id == id) return &t;
    return nullptr;
  }

  std::vector<TableId> referenced_tables() const {
    switch (workload) {
      case WorkloadKind::Lda: return {0, 1};
      case WorkloadKind::Sgd:
      case WorkloadKind::Audit: return {0};
    }
    return {};
  }

  // The one policy every node runs (the engine applies a single controller
  // per node, so blocks must agree; validate() enforces that).
  ConsistencyPolicy uniform_policy() const {
    if (tables.empty()) throw ConfigError("config: at least one [table N] block is required");
    return tables.front().policy;
  }

  std::vector<TableSpec> table_specs() const {
    std::vector<TableSpec> specs;
    for (const TablePolicy& t : tables) specs.push_back(t.spec());
    return specs;
  }

  std::vector<ShardEndpoint> endpoints() const {
    std::vector<ShardEndpoint> eps;
    for (int32_t s = 0; s < topo.shards; ++s)
      eps.push_back({socket.host, static_cast<uint16_t>(socket.base_port + s)});
    return eps;
  }

  SgdProblem sgd_problem() const {
    SgdProblem p;
    p.dimension = sgd.dimension;
    p.steps = sgd.steps;
    p.workers = topo.workers();
    p.center_radius = sgd.center_radius;
    p.lipschitz = sgd.lipschitz;
    p.diameter = sgd.diameter;
    p.sigma = sgd.sigma > 0.0 ? sgd.sigma : sgd.diameter / sgd.lipschitz;
    p.vap_delta = sgd.vap_delta;
    p.problem_seed = seed;
    return p;
  }

  LdaSpec lda_spec() const {
    LdaSpec s;
    s.topics = lda.topics;
    s.alpha = lda.alpha;
    s.beta = lda.beta;
    s.sweeps = lda.sweeps;
    s.workers = topo.workers();
    s.processes = topo.processes;
    s.shards = topo.shards;
    const TablePolicy* t = table(0);
    s.clock_bound = t && t->policy.model == Model::Cap;
    s.value_bound = t ? t->policy.value_bound : 0.0;
    s.seed = seed;
    return s;
  }

  Corpus lda_corpus() const {
    if (!lda.corpus.empty()) return load_corpus(lda.corpus);
    return synth_corpus(lda.topics, lda.docs, lda.vocab, lda.doc_len, lda.corpus_seed);
  }

  void validate() const;
};

namespace detail {

inline std::string trim(const std::string& s) {
  size_t b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  size_t e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace detail

// The flat section/key store behind experiment configs. Grammar (one item per
// line): `# comment` (anywhere in a line), `[section]` or `[section <int>]`,
// `key = value`. Keys before any section header live in the global section.
// Duplicate keys in a section and unknown keys are errors.
class FlatConfig {
 public:
  static FlatConfig parse_text(const std::string& text, const std::string& origin) {
    FlatConfig f;
    f.origin_ = origin;
    std::istringstream in(text);
    std::string line, section;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      size_t hash = line.find('#');
      if (hash != std::string::npos) line.erase(hash);
      line = detail::trim(line);
      if (line.empty()) continue;
      if (line.front() == '[') {
        if (line.back() != ']') f.fail(lineno, "section header must end with ]");
        section = detail::trim(line.substr(1, line.size() - 2));
        if (section.empty()) f.fail(lineno, "empty section name");
        continue;
      }
      size_t eq = line.find('=');
      if (eq == std::string::npos) f.fail(lineno, "expected key = value");
      std::string key = detail::trim(line.substr(0, eq));
      std::string value = detail::trim(line.substr(eq + 1));
      if (key.empty()) f.fail(lineno, "empty key");
      if (value.empty()) f.fail(lineno, "empty value for key '" + key + "'");
      auto [it, fresh] = f.data_[section].emplace(key, Entry{value, lineno});
      if (!fresh)
        f.fail(lineno, "duplicate key '" + key + "' in section [" + section + "] (first at line " +
                           std::to_string(it->second.line) + ")");
    }
    return f;
  }

  static FlatConfig parse_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config: cannot open " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_text(buf.str(), path);
  }

  const std::string& origin() const { return origin_; }

  bool has_section(const std::string& section) const { return data_.count(section) > 0; }

  std::vector<std::string> sections_with_prefix(const std::string& word) const {
    std::vector<std::string> out;
    for (const auto& [name, _] : data_)
      if (name == word || name.rfind(word + " ", 0) == 0) out.push_back(name);
    return out;
  }

  bool has(const std::string& section, const std::string& key) const {
    auto s = data_.find(section);
    return s != data_.end() && s->second.count(key) > 0;
  }

  std::string str(const std::string& section, const std::string& key,
                  const std::string& fallback) const {
    const Entry* e = find(section, key);
    return e ? e->value : fallback;
  }

  std::string require(const std::string& section, const std::string& key) const {
    const Entry* e = find(section, key);
    if (!e)
      throw ConfigError(origin_ + ": missing required key '" + key + "' in section [" + section +
                        "]");
    return e->value;
  }

  int64_t integer(const std::string& section, const std::string& key, int64_t fallback) const {
    const Entry* e = find(section, key);
    return e ? to_int(*e, section, key) : fallback;
  }

  uint64_t unsigned64(const std::string& section, const std::string& key,
                      uint64_t fallback) const {
    const Entry* e = find(section, key);
    if (!e) return fallback;
    errno = 0;
    char* end = nullptr;
    if (!e->value.empty() && e->value.front() == '-')
      fail(e->line, "key '" + key + "' must be a non-negative integer");
    uint64_t v = std::strtoull(e->value.c_str(), &end, 10);
    if (errno != 0 || end == e->value.c_str() || *end != '\0')
      fail(e->line, "key '" + key + "' is not an unsigned integer: '" + e->value + "'");
    return v;
  }

  double number(const std::string& section, const std::string& key, double fallback) const {
    const Entry* e = find(section, key);
    if (!e) return fallback;
    char* end = nullptr;
    double v = std::strtod(e->value.c_str(), &end);
    if (end == e->value.c_str() || *end != '\0')
      fail(e->line, "key '" + key + "' is not a number: '" + e->value + "'");
    return v;
  }

  bool boolean(const std::string& section, const std::string& key, bool fallback) const {
    const Entry* e = find(section, key);
    if (!e) return fallback;
    if (e->value == "true") return true;
    if (e->value == "false") return false;
    fail(e->line, "key '" + key + "' must be true or false, got '" + e->value + "'");
  }

  // Call after extraction: any key never read is a typo worth rejecting.
  void finish() const {
    for (const auto& [section, keys] : data_)
      for (const auto& [key, entry] : keys)
        if (!entry.used)
          throw ConfigError(origin_ + ":" + std::to_string(entry.line) + ": unknown key '" + key +
                            "' in section [" + section + "]");
  }

 private:
  struct Entry {
    std::string value;
    int line = 0;
    mutable bool used = false;
  };

  const Entry* find(const std::string& section, const std::string& key) const {
    auto s = data_.find(section);
    if (s == data_.end()) return nullptr;
    auto k = s->second.find(key);
    if (k == s->second.end()) return nullptr;
    k->second.used = true;
    return &k->second;
  }

  int64_t to_int(const Entry& e, const std::string&, const std::string& key) const {
    errno = 0;
    char* end = nullptr;
    long long v = std::strtoll(e.value.c_str(), &end, 10);
    if (errno != 0 || end == e.value.c_str() || *end != '\0')
      fail(e.line, "key '" + key + "' is not an integer: '" + e.value + "'");
    return v;
  }

  [[noreturn]] void fail(int line, const std::string& msg) const {
    throw ConfigError(origin_ + ":" + std::to_string(line) + ": " + msg);
  }

  std::map<std::string, std::map<std::string, Entry>> data_;
  std::string origin_;
};

namespace detail {

inline Model parse_model(const std::string& s, const std::string& where) {
  for (Model m : {Model::Ssp, Model::Cap, Model::VapWeak, Model::VapStrong, Model::CvapWeak,
                  Model::CvapStrong})
    if (s == model_name(m)) return m;
  throw ConfigError(where + ": unknown model '" + s +
                    "' (ssp, cap, vap_weak, vap_strong, cvap_weak, cvap_strong)");
}

inline Accounting parse_accounting(const std::string& s, const std::string& where) {
  if (s == "signed") return Accounting::Signed;
  if (s == "magnitude") return Accounting::Magnitude;
  throw ConfigError(where + ": unknown accounting '" + s + "' (signed, magnitude)");
}

inline RowKind parse_rows(const std::string& s, const std::string& where) {
  if (s == "dense") return RowKind::Dense;
  if (s == "sparse") return RowKind::Sparse;
  throw ConfigError(where + ": unknown row kind '" + s + "' (dense, sparse)");
}

inline RunMode parse_mode(const std::string& s, const std::string& where) {
  if (s == "sim") return RunMode::Sim;
  if (s == "socket") return RunMode::Socket;
  throw ConfigError(where + ": unknown mode '" + s + "' (sim, socket)");
}

inline WorkloadKind parse_workload(const std::string& s, const std::string& where) {
  if (s == "sgd") return WorkloadKind::Sgd;
  if (s == "lda") return WorkloadKind::Lda;
  if (s == "audit") return WorkloadKind::Audit;
  throw ConfigError(where + ": unknown workload kind '" + s + "' (sgd, lda, audit)");
}

inline AdversaryKind parse_adversary(const std::string& s, const std::string& where) {
  if (s == "uniform") return AdversaryKind::Uniform;
  if (s == "laggard") return AdversaryKind::LaggardProcess;
  if (s == "burst") return AdversaryKind::Burst;
  throw ConfigError(where + ": unknown adversary '" + s + "' (uniform, laggard, burst)");
}

inline TablePolicy extract_table(const FlatConfig& f, const std::string& section) {
  TablePolicy t;
  size_t space = section.find(' ');
  const std::string idx = space == std::string::npos ? "" : trim(section.substr(space + 1));
  char* end = nullptr;
  long id = std::strtol(idx.c_str(), &end, 10);
  if (idx.empty() || *end != '\0' || id < 0)
    throw ConfigError(f.origin() + ": table section needs a non-negative id, got [" + section +
                      "]");
  t.id = static_cast<TableId>(id);
  t.policy.model = parse_model(f.require(section, "model"), f.origin());
  t.policy.staleness = f.integer(section, "staleness", 0);
  t.policy.value_bound = f.number(section, "value_bound", 0.0);
  t.policy.magnitude_cap = f.number(section, "magnitude_cap", 1.0);
  t.policy.accounting = parse_accounting(f.str(section, "accounting", "signed"), f.origin());
  t.rows = parse_rows(f.str(section, "rows", "dense"), f.origin());
  t.row_length = static_cast<int32_t>(f.integer(section, "row_length", 1));
  return t;
}

}  // namespace detail

// Builds a config from parsed text; callers normally use load_experiment_config.
inline ExperimentConfig extract_experiment_config(const FlatConfig& f) {
  ExperimentConfig cfg;
  cfg.mode = detail::parse_mode(f.str("", "mode", "sim"), f.origin());
  cfg.seed = f.unsigned64("", "seed", 1);
  cfg.out = f.str("", "out", "metrics_out");

  cfg.topo.processes = static_cast<int32_t>(f.integer("topology", "processes", 1));
  cfg.topo.threads_per_process =
      static_cast<int32_t>(f.integer("topology", "threads_per_process", 1));
  cfg.topo.shards = static_cast<int32_t>(f.integer("topology", "shards", 1));

  for (const std::string& section : f.sections_with_prefix("table"))
    cfg.tables.push_back(detail::extract_table(f, section));

  cfg.workload = detail::parse_workload(f.require("workload", "kind"), f.origin());
  cfg.sgd.steps = f.integer("workload", "steps", cfg.sgd.steps);
  cfg.sgd.dimension = static_cast<int32_t>(f.integer("workload", "dimension", cfg.sgd.dimension));
  cfg.sgd.center_radius = f.number("workload", "center_radius", cfg.sgd.center_radius);
  cfg.sgd.lipschitz = f.number("workload", "lipschitz", cfg.sgd.lipschitz);
  cfg.sgd.diameter = f.number("workload", "diameter", cfg.sgd.diameter);
  cfg.sgd.sigma = f.number("workload", "sigma", cfg.sgd.sigma);
  cfg.sgd.vap_delta = f.number("workload", "vap_delta", cfg.sgd.vap_delta);
  cfg.sgd.audit = f.boolean("workload", "audit", cfg.sgd.audit);
  cfg.lda.topics = static_cast<int32_t>(f.integer("workload", "topics", cfg.lda.topics));
  cfg.lda.alpha = f.number("workload", "alpha", cfg.lda.alpha);
  cfg.lda.beta = f.number("workload", "beta", cfg.lda.beta);
  cfg.lda.sweeps = static_cast<int32_t>(f.integer("workload", "sweeps", cfg.lda.sweeps));
  cfg.lda.docs = static_cast<int32_t>(f.integer("workload", "docs", cfg.lda.docs));
  cfg.lda.vocab = static_cast<int32_t>(f.integer("workload", "vocab", cfg.lda.vocab));
  cfg.lda.doc_len = static_cast<int32_t>(f.integer("workload", "doc_len", cfg.lda.doc_len));
  cfg.lda.corpus_seed = f.unsigned64("workload", "corpus_seed", cfg.lda.corpus_seed);
  cfg.lda.corpus = f.str("workload", "corpus", cfg.lda.corpus);
  cfg.lda.compare_serial = f.boolean("workload", "compare_serial", cfg.lda.compare_serial);
  cfg.lda.loglike_tol = f.number("workload", "loglike_tol", cfg.lda.loglike_tol);
  cfg.audit.rounds = f.integer("workload", "rounds", cfg.audit.rounds);
  cfg.audit.rows = static_cast<int32_t>(f.integer("workload", "rows", cfg.audit.rows));
  cfg.adversary.kind =
      detail::parse_adversary(f.str("workload", "adversary", "uniform"), f.origin());
  cfg.adversary.laggard = static_cast<ProcessId>(f.integer("workload", "laggard", 0));
  cfg.adversary.laggard_factor =
      static_cast<int32_t>(f.integer("workload", "laggard_factor", 8));
  cfg.adversary.burst_len = static_cast<int32_t>(f.integer("workload", "burst_len", 16));
  cfg.auto_flush_incs =
      static_cast<int32_t>(f.integer("workload", "auto_flush_incs", cfg.auto_flush_incs));

  cfg.socket.host = f.str("socket", "host", cfg.socket.host);
  cfg.socket.base_port = static_cast<int32_t>(f.integer("socket", "base_port", cfg.socket.base_port));
  cfg.socket.pull_timeout_ms = f.integer("socket", "pull_timeout_ms", cfg.socket.pull_timeout_ms);
  return cfg;
}

inline void ExperimentConfig::validate() const {
  topo.validate();
  if (out.empty()) throw ConfigError("config: output path must not be empty");
  if (tables.empty()) throw ConfigError("config: at least one [table N] block is required");
  for (size_t i = 0; i < tables.size(); ++i) {
    for (size_t j = i + 1; j < tables.size(); ++j)
      if (tables[i].id == tables[j].id)
        throw ConfigError("config: duplicate [table " + std::to_string(tables[i].id) + "] block");
    tables[i].policy.validate();
    if (tables[i].rows == RowKind::Dense && tables[i].row_length <= 0)
      throw ConfigError("config: dense tables need a positive row_length");
  }
  const ConsistencyPolicy& base = tables.front().policy;
  for (const TablePolicy& t : tables)
    if (t.policy.model != base.model || t.policy.staleness != base.staleness ||
        t.policy.value_bound != base.value_bound ||
        t.policy.magnitude_cap != base.magnitude_cap ||
        t.policy.accounting != base.accounting)
      throw ConfigError(
          "config: heterogeneous table policies are not supported; every block must state the "
          "same model, staleness, value_bound, magnitude_cap, and accounting");
  for (TableId id : referenced_tables())
    if (!table(id))
      throw ConfigError("config: the " + std::string(workload_name(workload)) +
                        " workload references table " + std::to_string(id) +
                        " but no [table " + std::to_string(id) + "] block defines its policy");

  if (auto_flush_incs <= 0) throw ConfigError("config: auto_flush_incs must be positive");
  if (adversary.kind == AdversaryKind::LaggardProcess &&
      (adversary.laggard < 0 || adversary.laggard >= topo.processes))
    throw ConfigError("config: laggard must name an existing process");
  if (adversary.laggard_factor <= 0 || adversary.burst_len <= 0)
    throw ConfigError("config: laggard_factor and burst_len must be positive");
  if (socket.base_port < 0 || socket.base_port + topo.shards > 65536)
    throw ConfigError("config: shard ports must fit below 65536");
  if (socket.pull_timeout_ms <= 0) throw ConfigError("config: pull_timeout_ms must be positive");
  if (socket.host.empty()) throw ConfigError("config: socket host must not be empty");

  if (workload == WorkloadKind::Sgd) {
    if (topo.threads_per_process != 1)
      throw ConfigError("config: the sgd workload runs one worker thread per process");
    SgdProblem p = sgd_problem();
    p.validate();
    if (mode == RunMode::Socket && p.vap_delta > 0.0)
      throw ConfigError(
          "config: the decaying value-bound schedule needs the simulator; socket-mode sgd "
          "requires vap_delta = 0");
    const TablePolicy& t = *table(0);
    ConsistencyPolicy want = sgd_policy(p, t.policy.staleness);
    if (t.policy.model != want.model || t.policy.value_bound != want.value_bound ||
        t.policy.magnitude_cap != want.magnitude_cap ||
        t.policy.accounting != want.accounting || t.policy.staleness != want.staleness) {
      char buf[256];
      snprintf(buf, sizeof buf,
               "config: the sgd workload with vap_delta %.17g needs table 0 to state model %s, "
               "value_bound %.17g, magnitude_cap %.17g, accounting signed",
               p.vap_delta, model_name(want.model), want.value_bound, want.magnitude_cap);
      throw ConfigError(buf);
    }
    if (t.rows != RowKind::Dense || t.row_length != p.dimension)
      throw ConfigError("config: sgd needs table 0 dense with row_length = dimension");
  } else if (workload == WorkloadKind::Lda) {
    const TablePolicy& t = *table(0);
    if (t.policy.model != Model::VapWeak && t.policy.model != Model::Cap)
      throw ConfigError("config: the lda workload runs vap_weak or cap table policies");
    if (t.policy.model == Model::Cap && t.policy.staleness != 0)
      throw ConfigError("config: clock-bound lda runs at staleness 0");
    if (t.policy.magnitude_cap != 1.0 || t.policy.accounting != Accounting::Signed)
      throw ConfigError(
          "config: lda counts move by one, so table blocks state magnitude_cap 1 and signed "
          "accounting");
    for (TableId id : {0, 1}) {
      const TablePolicy& b = *table(id);
      if (b.rows != RowKind::Dense || b.row_length != lda.topics)
        throw ConfigError("config: lda needs dense tables 0 and 1 with row_length = topics");
    }
    LdaSpec s = lda_spec();
    s.validate();
    if (lda.corpus.empty()) {
      if (lda.docs <= 0 || lda.vocab < lda.topics || lda.doc_len <= 0)
        throw ConfigError("config: synthetic corpus needs docs > 0, vocab >= topics, doc_len > 0");
    }
    if (lda.loglike_tol <= 0.0) throw ConfigError("config: loglike_tol must be positive");
  } else {
    if (audit.rounds <= 0 || audit.rows <= 0)
      throw ConfigError("config: audit rounds and rows must be positive");
    const TablePolicy& t = *table(0);
    if (t.rows != RowKind::Dense || t.row_length != 1)
      throw ConfigError("config: the audit mix writes single cells; table 0 is dense with "
                        "row_length 1");
    if (mode == RunMode::Socket)
      throw ConfigError(
          "config: the audit workload needs the omniscient scheduler observer and runs in sim "
          "mode only");
  }
}

// Parses, applies BCPS_SEED / BCPS_OUT overrides, and validates.
inline ExperimentConfig finalize_experiment_config(const FlatConfig& f) {
  ExperimentConfig cfg = extract_experiment_config(f);
  f.finish();
  if (const char* s = std::getenv("BCPS_SEED")) {
    errno = 0;
    char* end = nullptr;
    uint64_t v = std::strtoull(s, &end, 10);
    if (errno != 0 || end == s || *end != '\0' || *s == '-')
      throw ConfigError(std::string("BCPS_SEED is not an unsigned integer: '") + s + "'");
    cfg.seed = v;
  }
  if (const char* o = std::getenv("BCPS_OUT")) {
    if (*o == '\0') throw ConfigError("BCPS_OUT must not be empty");
    cfg.out = o;
  }
  cfg.validate();
  return cfg;
}

inline ExperimentConfig load_experiment_config(const std::string& path) {
  return finalize_experiment_config(FlatConfig::parse_file(path));
}

inline ExperimentConfig parse_experiment_config(const std::string& text,
                                                const std::string& origin) {
  return finalize_experiment_config(FlatConfig::parse_text(text, origin));
}

}  // namespace bcps
