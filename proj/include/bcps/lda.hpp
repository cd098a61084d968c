// Copyright (c) bcps contributors.
// Licensed under the Apache 2.0 License.
#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <memory>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "bcps/audit.hpp"

namespace bcps {

struct Corpus {
  int32_t vocab = 0;
  std::vector<std::vector<int32_t>> docs;

  int64_t tokens() const {
    int64_t n = 0;
    for (const auto& d : docs) n += static_cast<int64_t>(d.size());
    return n;
  }
};

// Planted-structure corpus: the vocabulary splits into `topics` equal blocks,
// each document draws a Dirichlet(0.3) topic mixture, and every token picks a
// topic from the mixture and a word uniformly from that topic's block.
inline Corpus synth_corpus(int32_t topics, int32_t docs, int32_t vocab, int32_t doc_len,
                           uint64_t seed) {
  if (topics <= 0 || docs <= 0 || vocab < topics || doc_len <= 0)
    throw ConfigError("corpus: need positive sizes and vocab >= topics");
  std::mt19937_64 rng(seed);
  std::gamma_distribution<double> gamma(0.3, 1.0);
  auto u01 = [&] { return static_cast<double>(rng() >> 11) * 0x1.0p-53; };
  const int32_t block = vocab / topics;
  Corpus c;
  c.vocab = vocab;
  c.docs.resize(static_cast<size_t>(docs));
  std::vector<double> theta(static_cast<size_t>(topics));
  for (auto& doc : c.docs) {
    double total = 0.0;
    for (double& t : theta) total += (t = gamma(rng));
    doc.resize(static_cast<size_t>(doc_len));
    for (int32_t& w : doc) {
      double target = u01() * total, cum = 0.0;
      int32_t z = topics - 1;
      for (int32_t k = 0; k < topics; ++k) {
        cum += theta[static_cast<size_t>(k)];
        if (cum >= target) {
          z = k;
          break;
        }
      }
      int32_t lo = z * block;
      int32_t hi = z == topics - 1 ? vocab : lo + block;
      w = lo + static_cast<int32_t>(rng() % static_cast<uint64_t>(hi - lo));
    }
  }
  return c;
}

// One document per line of space-separated token ids, preceded by a header
// line "V=<vocab> D=<docs>".
inline void save_corpus(const std::string& path, const Corpus& c) {
  std::ofstream out(path);
  if (!out) throw ConfigError("corpus: cannot open for writing: " + path);
  out << "V=" << c.vocab << " D=" << c.docs.size() << "\n";
  for (const auto& doc : c.docs) {
    for (size_t i = 0; i < doc.size(); ++i) out << (i ? " " : "") << doc[i];
    out << "\n";
  }
  if (!out) throw ConfigError("corpus: write failed: " + path);
}

inline Corpus load_corpus(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("corpus: cannot open: " + path);
  std::string header;
  std::getline(in, header);
  Corpus c;
  long long ndocs = -1;
  if (sscanf(header.c_str(), "V=%d D=%lld", &c.vocab, &ndocs) != 2 || c.vocab <= 0 || ndocs < 0)
    throw ConfigError("corpus: bad header: " + header);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() && static_cast<int64_t>(c.docs.size()) == ndocs) continue;
    std::istringstream ss(line);
    std::vector<int32_t> doc;
    long long w;
    while (ss >> w) {
      if (w < 0 || w >= c.vocab) throw ConfigError("corpus: token id out of range");
      doc.push_back(static_cast<int32_t>(w));
    }
    c.docs.push_back(std::move(doc));
  }
  if (static_cast<int64_t>(c.docs.size()) != ndocs)
    throw ConfigError("corpus: document count does not match header");
  return c;
}

struct LdaSpec {
  int32_t topics = 5;
  double alpha = 0.5;
  double beta = 0.1;
  int32_t sweeps = 50;
  int32_t workers = 4;
  int32_t processes = 2;
  int32_t shards = 2;
  double value_bound = 32.0;  // weak window on every count key
  bool clock_bound = false;   // run zero-staleness clock gating instead
  uint64_t seed = 1;          // drives both token draws and the schedule

  void validate() const {
    if (topics <= 0 || sweeps < 0 || workers <= 0 || processes <= 0 || shards <= 0)
      throw ConfigError("lda: sizes must be positive");
    if (workers % processes != 0)
      throw ConfigError("lda: workers must split evenly across processes");
    if (alpha <= 0.0 || beta <= 0.0) throw ConfigError("lda: alpha and beta must be positive");
  }
};

namespace detail {

inline uint64_t splitmix64(uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

// Stateless draws keyed by (doc, position, sweep) keep the serial and
// parallel paths sampling identical randomness regardless of scheduling.
inline double lda_u01(uint64_t seed, int64_t doc, int64_t pos, int64_t sweep) {
  uint64_t x = splitmix64(seed ^ (static_cast<uint64_t>(doc) * 0xD1342543DE82EF95ull) ^
                          (static_cast<uint64_t>(pos) * 0xAF251AF3B0F025B5ull) ^
                          (static_cast<uint64_t>(sweep) * 0x9E6C63D0876A9A47ull));
  return static_cast<double>(x >> 11) * 0x1.0p-53;
}

inline int32_t lda_init_topic(uint64_t seed, int64_t doc, int64_t pos, int32_t topics) {
  return static_cast<int32_t>(splitmix64(seed * 0x2545F4914F6CDD1Dull ^
                                         static_cast<uint64_t>(doc * 1000003 + pos)) %
                              static_cast<uint64_t>(topics));
}

// The collapsed-Gibbs pick both executors share: weights are
// (n_dk + alpha) * (floor0(n_wk) + beta) / (floor0(n_k) + V*beta), and the
// chosen topic is the first whose cumulative weight reaches u * total.
inline int32_t lda_pick(const std::vector<double>& wrow, const std::vector<double>& trow,
                        const std::vector<double>& drow, double alpha, double beta, int32_t vocab,
                        double u, std::vector<double>& scratch) {
  const int32_t K = static_cast<int32_t>(wrow.size());
  double total = 0.0;
  for (int32_t k = 0; k < K; ++k) {
    double nw = std::max(wrow[static_cast<size_t>(k)], 0.0);
    double nt = std::max(trow[static_cast<size_t>(k)], 0.0);
    double w = (drow[static_cast<size_t>(k)] + alpha) * (nw + beta) / (nt + vocab * beta);
    scratch[static_cast<size_t>(k)] = w;
    total += w;
  }
  double target = u * total, cum = 0.0;
  for (int32_t k = 0; k < K; ++k) {
    cum += scratch[static_cast<size_t>(k)];
    if (cum >= target) return k;
  }
  return K - 1;
}

}  // namespace detail

// Predictive log-likelihood of the corpus under smoothed count estimates.
inline double lda_loglike(const Corpus& corpus, const LdaSpec& spec,
                          const std::vector<std::vector<double>>& word_topic,
                          const std::vector<double>& totals,
                          const std::vector<std::vector<double>>& doc_topic) {
  const int32_t K = spec.topics, V = corpus.vocab;
  double ll = 0.0;
  for (size_t d = 0; d < corpus.docs.size(); ++d) {
    const auto& doc = corpus.docs[d];
    double nd = static_cast<double>(doc.size());
    for (int32_t w : doc) {
      double p = 0.0;
      for (int32_t k = 0; k < K; ++k) {
        double theta = (doc_topic[d][static_cast<size_t>(k)] + spec.alpha) / (nd + K * spec.alpha);
        double phi = (std::max(word_topic[static_cast<size_t>(w)][static_cast<size_t>(k)], 0.0) +
                      spec.beta) /
                     (std::max(totals[static_cast<size_t>(k)], 0.0) + V * spec.beta);
        p += theta * phi;
      }
      ll += std::log(p);
    }
  }
  return ll;
}

struct LdaResult {
  std::vector<std::vector<int32_t>> assignments;  // final topic per token
  std::vector<std::vector<double>> word_topic;    // V x K counts at quiesce
  std::vector<double> totals;                     // K counts at quiesce
  std::vector<std::vector<double>> doc_topic;     // D x K local counts
  double loglike = 0.0;
  bool conserved = true;  // master counts integral, non-negative, and summing
  std::string error;
  std::vector<ClientCore::Counters> client_counters;
  std::vector<ShardCore::Counters> shard_counters;
  RunStats stats;
};

// Serial collapsed Gibbs on local arrays; the arithmetic per token is the
// shared pick above, so a one-worker protocol run must reproduce it exactly.
inline LdaResult run_lda_serial(const Corpus& corpus, const LdaSpec& spec) {
  spec.validate();
  const int32_t K = spec.topics, V = corpus.vocab;
  const size_t D = corpus.docs.size();
  LdaResult res;
  res.word_topic.assign(static_cast<size_t>(V), std::vector<double>(static_cast<size_t>(K), 0.0));
  res.totals.assign(static_cast<size_t>(K), 0.0);
  res.doc_topic.assign(D, std::vector<double>(static_cast<size_t>(K), 0.0));
  res.assignments.resize(D);
  for (size_t d = 0; d < D; ++d) {
    res.assignments[d].resize(corpus.docs[d].size());
    for (size_t i = 0; i < corpus.docs[d].size(); ++i) {
      int32_t z = detail::lda_init_topic(spec.seed, static_cast<int64_t>(d),
                                         static_cast<int64_t>(i), K);
      res.assignments[d][i] = z;
      res.word_topic[static_cast<size_t>(corpus.docs[d][i])][static_cast<size_t>(z)] += 1.0;
      res.totals[static_cast<size_t>(z)] += 1.0;
      res.doc_topic[d][static_cast<size_t>(z)] += 1.0;
    }
  }
  std::vector<double> wrow(static_cast<size_t>(K)), trow(static_cast<size_t>(K)),
      scratch(static_cast<size_t>(K));
  for (int32_t sweep = 1; sweep <= spec.sweeps; ++sweep) {
    for (size_t d = 0; d < D; ++d) {
      for (size_t i = 0; i < corpus.docs[d].size(); ++i) {
        const int32_t w = corpus.docs[d][i];
        const int32_t old = res.assignments[d][i];
        res.word_topic[static_cast<size_t>(w)][static_cast<size_t>(old)] -= 1.0;
        res.totals[static_cast<size_t>(old)] -= 1.0;
        res.doc_topic[d][static_cast<size_t>(old)] -= 1.0;
        for (int32_t k = 0; k < K; ++k) {
          wrow[static_cast<size_t>(k)] = res.word_topic[static_cast<size_t>(w)][static_cast<size_t>(k)];
          trow[static_cast<size_t>(k)] = res.totals[static_cast<size_t>(k)];
        }
        double u = detail::lda_u01(spec.seed, static_cast<int64_t>(d), static_cast<int64_t>(i),
                                   sweep);
        int32_t z = detail::lda_pick(wrow, trow, res.doc_topic[d], spec.alpha, spec.beta, V, u,
                                     scratch);
        res.assignments[d][i] = z;
        res.word_topic[static_cast<size_t>(w)][static_cast<size_t>(z)] += 1.0;
        res.totals[static_cast<size_t>(z)] += 1.0;
        res.doc_topic[d][static_cast<size_t>(z)] += 1.0;
      }
    }
  }
  res.loglike = lda_loglike(corpus, spec, res.word_topic, res.totals, res.doc_topic);
  return res;
}

namespace detail {

// One worker's share of the Gibbs sweeps over the protocol: documents are
// dealt round-robin, counts live in two shared tables (word-topic rows and
// the topic-totals row), and each token runs the cycle
// dec/dec, 2K reads, shared pick, inc/inc. Sweep 0 counts the initial
// assignments; a clock tick separates sweeps.
class LdaWorker : public WorkerProgram {
 public:
  LdaWorker(const Corpus* corpus, const LdaSpec* spec, int32_t rank, LdaResult* out)
      : corpus_(corpus), spec_(spec), rank_(rank), out_(out),
        wrow_(static_cast<size_t>(spec->topics)), trow_(static_cast<size_t>(spec->topics)),
        scratch_(static_cast<size_t>(spec->topics)) {
    for (size_t d = static_cast<size_t>(rank); d < corpus->docs.size();
         d += static_cast<size_t>(spec->workers))
      docs_.push_back(d);
    skip_empty();
  }

  OpRequest next(double v) override {
    if (slot_) {
      *slot_ = v;
      slot_ = nullptr;
    }
    if (sweep_ == 0) return init_op();
    return gibbs_op();
  }

  int64_t step() const override { return sweep_; }

 private:
  ParamKey word_key(int32_t w, int32_t k) const { return {0, w, k}; }
  ParamKey total_key(int32_t k) const { return {1, 0, k}; }

  void skip_empty() {
    while (di_ < docs_.size() && ti_ >= corpus_->docs[docs_[di_]].size()) {
      ti_ = 0;
      ++di_;
    }
  }

  void advance_token() {
    ++ti_;
    skip_empty();
  }

  OpRequest init_op() {
    if (di_ >= docs_.size()) {
      sweep_ = 1;
      di_ = 0;
      ti_ = 0;
      skip_empty();
      stage_ = 0;
      return OpRequest::clock();
    }
    const size_t d = docs_[di_];
    const int32_t w = corpus_->docs[d][ti_];
    if (stage_ == 0) {
      z_ = lda_init_topic(spec_->seed, static_cast<int64_t>(d), static_cast<int64_t>(ti_),
                          spec_->topics);
      out_->assignments[d][ti_] = z_;
      out_->doc_topic[d][static_cast<size_t>(z_)] += 1.0;
      stage_ = 1;
      return OpRequest::inc(word_key(w, z_), 1.0);
    }
    stage_ = 0;
    const int32_t z = z_;
    advance_token();
    return OpRequest::inc(total_key(z), 1.0);
  }

  OpRequest gibbs_op() {
    if (sweep_ > spec_->sweeps) return OpRequest::done();
    if (di_ >= docs_.size()) {
      ++sweep_;
      di_ = 0;
      ti_ = 0;
      skip_empty();
      stage_ = 0;
      return OpRequest::clock();  // also covers the tick after the last sweep
    }
    const size_t d = docs_[di_];
    const int32_t w = corpus_->docs[d][ti_];
    const int32_t K = spec_->topics;
    if (stage_ == 0) {
      zo_ = out_->assignments[d][ti_];
      out_->doc_topic[d][static_cast<size_t>(zo_)] -= 1.0;
      stage_ = 1;
      return OpRequest::inc(word_key(w, zo_), -1.0);
    }
    if (stage_ == 1) {
      stage_ = 2;
      k_ = 0;
      return OpRequest::inc(total_key(zo_), -1.0);
    }
    if (stage_ == 2) {
      if (k_ < K) {
        slot_ = &wrow_[static_cast<size_t>(k_)];
        return OpRequest::get(word_key(w, k_++));
      }
      stage_ = 3;
      k_ = 0;
    }
    if (stage_ == 3) {
      if (k_ < K) {
        slot_ = &trow_[static_cast<size_t>(k_)];
        return OpRequest::get(total_key(k_++));
      }
      const double u = lda_u01(spec_->seed, static_cast<int64_t>(d), static_cast<int64_t>(ti_),
                               sweep_);
      z_ = lda_pick(wrow_, trow_, out_->doc_topic[d], spec_->alpha, spec_->beta, corpus_->vocab,
                    u, scratch_);
      out_->assignments[d][ti_] = z_;
      out_->doc_topic[d][static_cast<size_t>(z_)] += 1.0;
      stage_ = 4;
      return OpRequest::inc(word_key(w, z_), 1.0);
    }
    stage_ = 0;
    const int32_t z = z_;
    advance_token();
    return OpRequest::inc(total_key(z), 1.0);
  }

  const Corpus* corpus_;
  const LdaSpec* spec_;
  int32_t rank_;
  LdaResult* out_;
  std::vector<size_t> docs_;
  std::vector<double> wrow_, trow_, scratch_;
  double* slot_ = nullptr;
  size_t di_ = 0, ti_ = 0;
  int64_t sweep_ = 0;
  int32_t stage_ = 0, k_ = 0, z_ = 0, zo_ = 0;
};

}  // namespace detail

// A result sized for the corpus, ready for workers to fill.
inline LdaResult make_lda_result(const Corpus& corpus, const LdaSpec& spec) {
  const int32_t K = spec.topics, V = corpus.vocab;
  const size_t D = corpus.docs.size();
  LdaResult res;
  res.assignments.resize(D);
  for (size_t d = 0; d < D; ++d) res.assignments[d].resize(corpus.docs[d].size(), 0);
  res.doc_topic.assign(D, std::vector<double>(static_cast<size_t>(K), 0.0));
  res.word_topic.assign(static_cast<size_t>(V), std::vector<double>(static_cast<size_t>(K), 0.0));
  res.totals.assign(static_cast<size_t>(K), 0.0);
  return res;
}

// Table layout every Gibbs run uses: word-topic rows plus one totals row.
inline std::vector<TableSpec> lda_tables(const LdaSpec& spec) {
  return {{0, RowKind::Dense, spec.topics}, {1, RowKind::Dense, spec.topics}};
}

inline ConsistencyPolicy lda_policy(const LdaSpec& spec) {
  ConsistencyPolicy policy;
  policy.model = spec.clock_bound ? Model::Cap : Model::VapWeak;
  policy.staleness = 0;
  policy.value_bound = spec.clock_bound ? 0.0 : spec.value_bound;
  policy.magnitude_cap = 1.0;
  return policy;
}

// One program per worker; corpus, spec, and res must outlive the run. Workers
// own disjoint documents, so they may fill one shared result concurrently.
inline std::vector<std::unique_ptr<WorkerProgram>> make_lda_workers(const Corpus& corpus,
                                                                    const LdaSpec& spec,
                                                                    LdaResult* res) {
  std::vector<std::unique_ptr<WorkerProgram>> progs;
  for (int32_t r = 0; r < spec.workers; ++r)
    progs.push_back(std::make_unique<detail::LdaWorker>(&corpus, &spec, r, res));
  return progs;
}

// Harvests the quiesced master counts through `read` and cross-checks them
// against a recount of the final assignments: every count must come back
// integral, non-negative, and exactly conserved. Sets the final loglike.
inline void finish_lda(const Corpus& corpus, const LdaSpec& spec,
                       const std::function<double(const ParamKey&)>& read, LdaResult* out) {
  const int32_t K = spec.topics, V = corpus.vocab;
  const size_t D = corpus.docs.size();
  LdaResult& res = *out;

  for (int32_t w = 0; w < V; ++w)
    for (int32_t k = 0; k < K; ++k)
      res.word_topic[static_cast<size_t>(w)][static_cast<size_t>(k)] = read({0, w, k});
  for (int32_t k = 0; k < K; ++k) res.totals[static_cast<size_t>(k)] = read({1, 0, k});

  auto flag = [&](const std::string& msg) {
    res.conserved = false;
    if (res.error.empty()) res.error = msg;
  };
  std::vector<std::vector<double>> recount(static_cast<size_t>(V),
                                           std::vector<double>(static_cast<size_t>(K), 0.0));
  std::vector<double> retotal(static_cast<size_t>(K), 0.0);
  for (size_t d = 0; d < D; ++d)
    for (size_t i = 0; i < corpus.docs[d].size(); ++i) {
      int32_t z = res.assignments[d][i];
      recount[static_cast<size_t>(corpus.docs[d][i])][static_cast<size_t>(z)] += 1.0;
      retotal[static_cast<size_t>(z)] += 1.0;
    }
  for (int32_t w = 0; w < V; ++w)
    for (int32_t k = 0; k < K; ++k) {
      double got = res.word_topic[static_cast<size_t>(w)][static_cast<size_t>(k)];
      if (got != recount[static_cast<size_t>(w)][static_cast<size_t>(k)] || got < 0.0 ||
          got != std::nearbyint(got)) {
        flag("word-topic count mismatch at word " + std::to_string(w));
        break;
      }
    }
  double grand = 0.0;
  for (int32_t k = 0; k < K; ++k) {
    if (res.totals[static_cast<size_t>(k)] != retotal[static_cast<size_t>(k)])
      flag("topic total mismatch at topic " + std::to_string(k));
    grand += res.totals[static_cast<size_t>(k)];
  }
  if (grand != static_cast<double>(corpus.tokens())) flag("topic totals do not sum to the corpus");

  res.loglike = lda_loglike(corpus, spec, res.word_topic, res.totals, res.doc_topic);
}

// Runs the Gibbs workload on the simulator and scores the quiesced master.
inline LdaResult run_lda(const Corpus& corpus, const LdaSpec& spec) {
  spec.validate();
  LdaResult res = make_lda_result(corpus, spec);

  SimConfig cfg;
  cfg.topo = {spec.processes, spec.workers / spec.processes, spec.shards};
  cfg.tables = lda_tables(spec);
  cfg.policy = lda_policy(spec);
  cfg.seed = spec.seed;

  Simulator sim(cfg, make_lda_workers(corpus, spec, &res));
  res.stats = sim.run();
  for (ProcessId c = 0; c < sim.num_clients(); ++c)
    res.client_counters.push_back(sim.client(c).counters());
  for (int32_t s = 0; s < sim.num_shards(); ++s)
    res.shard_counters.push_back(sim.shard(s).counters());

  finish_lda(corpus, spec, [&](const ParamKey& k) {
    return sim.shard(partition(k.table, k.row, spec.shards)).table(k.table).read(k);
  }, &res);
  return res;
}

// Cosine match between learned word-topic columns and the planted vocabulary
// blocks, maximized over topic relabelings greedily; a recovered structure
// scores near 1, chance near 1/sqrt(topics).
inline double planted_topic_score(const Corpus& corpus, int32_t topics,
                                  const std::vector<std::vector<double>>& word_topic) {
  const int32_t V = corpus.vocab, block = V / topics;
  const int32_t K = static_cast<int32_t>(word_topic.empty() ? 0 : word_topic[0].size());
  std::vector<bool> used(static_cast<size_t>(K), false);
  double total = 0.0;
  for (int32_t b = 0; b < topics; ++b) {
    int32_t lo = b * block, hi = b == topics - 1 ? V : lo + block;
    double best = 0.0;
    int32_t best_k = -1;
    for (int32_t k = 0; k < K; ++k) {
      if (used[static_cast<size_t>(k)]) continue;
      double in = 0.0, norm = 0.0;
      for (int32_t w = 0; w < V; ++w) {
        double c = std::max(word_topic[static_cast<size_t>(w)][static_cast<size_t>(k)], 0.0);
        norm += c * c;
        if (w >= lo && w < hi) in += c;
      }
      double cos = norm > 0.0 ? in / (std::sqrt(norm) * std::sqrt(static_cast<double>(hi - lo)))
                              : 0.0;
      if (cos > best) {
        best = cos;
        best_k = k;
      }
    }
    if (best_k >= 0) used[static_cast<size_t>(best_k)] = true;
    total += best;
  }
  return total / static_cast<double>(topics);
}

}  // namespace bcps
