// Copyright (c) bcps contributors.
// Licensed under the Apache 2.0 License.
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>

#include "bcps/runner.hpp"
#include "doctest.h"

using namespace bcps;

namespace {

std::string thrown(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const std::exception& e) {
    return e.what();
  }
  return "";
}

bool contains(const std::string& hay, const std::string& needle) {
  return hay.find(needle) != std::string::npos;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

std::string fresh_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / "bcps_cfg_tests" / name;
  std::filesystem::remove_all(dir);
  return dir.string();
}

std::string write_file(const std::string& name, const std::string& text) {
  auto dir = std::filesystem::temp_directory_path() / "bcps_cfg_tests";
  std::filesystem::create_directories(dir);
  auto path = dir / name;
  std::ofstream out(path);
  out << text;
  return path.string();
}

std::string sgd_text(const std::string& mode, const std::string& out, int64_t steps) {
  std::ostringstream s;
  s << "mode = " << mode << "\nseed = 11\nout = " << out << "\n\n"
    << "[topology]\nprocesses = 1\nthreads_per_process = 1\nshards = 1\n\n"
    << "[table 0]\nmodel = cap\nstaleness = 0\nmagnitude_cap = 0.05\nrow_length = 4\n\n"
    << "[workload]\nkind = sgd\nsteps = " << steps << "\n";
  if (mode == "socket") s << "\n[socket]\nbase_port = 0\n";
  return s.str();
}

std::string audit_text(const std::string& out) {
  std::ostringstream s;
  s << "mode = sim\nseed = 5\nout = " << out << "\n\n"
    << "[topology]\nprocesses = 2\nthreads_per_process = 2\nshards = 2\n\n"
    << "[table 0]\nmodel = vap_weak\nvalue_bound = 1\nmagnitude_cap = 1\n"
    << "accounting = magnitude\nrow_length = 1\n\n"
    << "[workload]\nkind = audit\nrounds = 48\nrows = 8\n"
    << "adversary = laggard\nlaggard = 1\nlaggard_factor = 7\n";
  return s.str();
}

}  // namespace

TEST_CASE("flat config grammar: comments, sections, typed values") {
  FlatConfig f = FlatConfig::parse_text(
      "# leading comment\n"
      "seed = 42   # trailing comment\n"
      "name = hello world\n"
      "\n"
      "[alpha]\n"
      "rate = -2.5\n"
      "on = true\n"
      "off = false\n"
      "[table 3]\n"
      "model = cap\n",
      "mem");
  CHECK(f.unsigned64("", "seed", 0) == 42);
  CHECK(f.str("", "name", "") == "hello world");
  CHECK(f.number("alpha", "rate", 0.0) == doctest::Approx(-2.5));
  CHECK(f.boolean("alpha", "on", false));
  CHECK_FALSE(f.boolean("alpha", "off", true));
  CHECK(f.integer("alpha", "missing", 7) == 7);
  CHECK(f.has_section("table 3"));
  CHECK(f.sections_with_prefix("table") == std::vector<std::string>{"table 3"});
  CHECK(f.require("table 3", "model") == "cap");
  CHECK_NOTHROW(f.finish());
}

TEST_CASE("flat config rejects malformed lines with the offending line number") {
  CHECK(contains(thrown([] { FlatConfig::parse_text("just words\n", "m"); }),
                 "m:1: expected key = value"));
  CHECK(contains(thrown([] { FlatConfig::parse_text("[open\n", "m"); }), "m:1"));
  CHECK(contains(thrown([] { FlatConfig::parse_text("a = 1\na = 2\n", "m"); }),
                 "duplicate key 'a' in section [] (first at line 1)"));
  CHECK(contains(thrown([] { FlatConfig::parse_text("k =\n", "m"); }), "empty value"));

  FlatConfig f = FlatConfig::parse_text("n = 1x\nu = -4\nb = yes\n", "m");
  CHECK(contains(thrown([&] { f.integer("", "n", 0); }), "not an integer"));
  CHECK(contains(thrown([&] { f.unsigned64("", "u", 0); }), "non-negative"));
  CHECK(contains(thrown([&] { f.boolean("", "b", false); }), "true or false"));
  CHECK(contains(thrown([&] { f.require("", "absent"); }), "missing required key"));
}

TEST_CASE("unused keys are reported as unknown after extraction") {
  const std::string msg = thrown([] {
    parse_experiment_config(sgd_text("sim", "x", 40) + "\n[workload]typo\n", "m");
  });
  CHECK(contains(msg, "section header"));
  const std::string msg2 =
      thrown([] { parse_experiment_config(sgd_text("sim", "x", 40) + "stray = 3\n", "m"); });
  CHECK(contains(msg2, "unknown key 'stray'"));
}

TEST_CASE("experiment extraction fills defaults and reads every section") {
  ExperimentConfig cfg = parse_experiment_config(sgd_text("sim", "somewhere", 40), "m");
  CHECK(cfg.mode == RunMode::Sim);
  CHECK(cfg.workload == WorkloadKind::Sgd);
  CHECK(cfg.seed == 11);
  CHECK(cfg.out == "somewhere");
  CHECK(cfg.topo.processes == 1);
  CHECK(cfg.topo.shards == 1);
  CHECK(cfg.tables.size() == 1);
  CHECK(cfg.tables[0].policy.model == Model::Cap);
  CHECK(cfg.tables[0].policy.magnitude_cap == doctest::Approx(0.05));
  CHECK(cfg.tables[0].row_length == 4);
  CHECK(cfg.sgd.steps == 40);
  CHECK(cfg.sgd.dimension == 4);
  CHECK(cfg.auto_flush_incs == 64);
  CHECK(cfg.socket.host == "127.0.0.1");
  SgdProblem p = cfg.sgd_problem();
  CHECK(p.sigma == doctest::Approx(p.diameter / p.lipschitz));
  CHECK(p.problem_seed == 11);
}

TEST_CASE("validation rejects the documented config mistakes") {
  const std::string base = audit_text("x");
  CHECK(contains(thrown([&] {
          std::string bad = base;
          bad.replace(bad.find("[table 0]"), 9, "[table 9]");
          parse_experiment_config(bad, "m");
        }),
        "references table 0 but no [table 0] block defines its policy"));

  CHECK(contains(thrown([&] {
          parse_experiment_config(base + "\n[table 1]\nmodel = cap\nrow_length = 1\n", "m");
        }),
        "same model"));

  CHECK(contains(thrown([&] {
          std::string bad = base;
          bad.replace(bad.find("mode = sim"), 10, "mode = socket");
          parse_experiment_config(bad, "m");
        }),
        "sim mode only"));

  CHECK(contains(thrown([&] {
          std::string bad = base;
          bad.replace(bad.find("laggard = 1"), 11, "laggard = 5");
          parse_experiment_config(bad, "m");
        }),
        "laggard"));

  CHECK(contains(thrown([] {
          std::string bad = sgd_text("socket", "x", 40);
          bad.replace(bad.find("kind = sgd"), 10, "kind = sgd\nvap_delta = 0.1");
          parse_experiment_config(bad, "m");
        }),
        "vap_delta = 0"));

  CHECK(contains(thrown([] {
          std::string bad = sgd_text("sim", "x", 40);
          bad.replace(bad.find("model = cap"), 11, "model = ssp");
          parse_experiment_config(bad, "m");
        }),
        "needs table 0 to state model"));
}

TEST_CASE("seed and output environment overrides apply before validation") {
  ::setenv("BCPS_SEED", "123", 1);
  ::setenv("BCPS_OUT", "elsewhere", 1);
  ExperimentConfig cfg = parse_experiment_config(sgd_text("sim", "somewhere", 40), "m");
  CHECK(cfg.seed == 123);
  CHECK(cfg.out == "elsewhere");
  CHECK(cfg.sgd_problem().problem_seed == 123);

  ::setenv("BCPS_SEED", "12x", 1);
  CHECK(contains(thrown([] { parse_experiment_config(sgd_text("sim", "x", 40), "m"); }),
                 "BCPS_SEED"));
  ::unsetenv("BCPS_SEED");
  ::setenv("BCPS_OUT", "", 1);
  CHECK(contains(thrown([] { parse_experiment_config(sgd_text("sim", "x", 40), "m"); }),
                 "BCPS_OUT"));
  ::unsetenv("BCPS_OUT");
}

TEST_CASE("cmd_run single-worker sgd holds its bounds and writes every family") {
  const std::string out = fresh_dir("run_sgd");
  ExperimentConfig cfg = parse_experiment_config(sgd_text("sim", out, 120), "m");
  CHECK(cmd_run(cfg) == 0);
  for (const char* f : {"regret.csv", "delta_norms.csv", "master_state.csv", "blocking.csv",
                        "messages.csv", "summary.json"})
    CHECK(std::filesystem::exists(std::filesystem::path(out) / f));
  const std::string summary = slurp(out + "/summary.json");
  CHECK(contains(summary, "\"schema_version\":1"));
  CHECK(contains(summary, "\"pass\":true"));
  CHECK(contains(summary, "\"name\":\"regret_within_bound\",\"ok\":true"));
  CHECK(contains(slurp(out + "/regret.csv"), "t,step_gap,cumulative_regret"));
}

TEST_CASE("cmd_run audit laggard stays within the pairwise divergence cap") {
  const std::string out = fresh_dir("run_audit");
  ExperimentConfig cfg = parse_experiment_config(audit_text(out), "m");
  CHECK(cmd_run(cfg) == 0);
  const std::string summary = slurp(out + "/summary.json");
  CHECK(contains(summary, "\"name\":\"divergence_within_cap\",\"ok\":true,\"asserted\":true"));
  CHECK(contains(summary, "divergence_vs_per_key_window_cap"));
  CHECK(contains(slurp(out + "/divergence.csv"), "touch,max_divergence"));
}

TEST_CASE("cmd_run reports invalid configs without throwing") {
  ExperimentConfig cfg = parse_experiment_config(audit_text(fresh_dir("run_bad")), "m");
  cfg.tables.clear();
  CHECK(cmd_run(cfg) == 2);
}

TEST_CASE("sim runs write byte-identical metrics for one config and seed") {
  const std::string out1 = fresh_dir("det1"), out2 = fresh_dir("det2");
  ExperimentConfig cfg = parse_experiment_config(audit_text(out1), "m");
  CHECK(cmd_run(cfg) == 0);
  cfg.out = out2;
  CHECK(cmd_run(cfg) == 0);
  int compared = 0;
  for (const auto& entry : std::filesystem::directory_iterator(out1)) {
    const std::string name = entry.path().filename().string();
    CHECK(slurp(out1 + "/" + name) == slurp(out2 + "/" + name));
    ++compared;
  }
  CHECK(compared >= 4);
}

TEST_CASE("socket and sim transports agree on the sgd master state") {
  const std::string sim_out = fresh_dir("xport_sim"), sock_out = fresh_dir("xport_sock");
  ExperimentConfig sim_cfg = parse_experiment_config(sgd_text("sim", sim_out, 80), "m");
  ExperimentConfig sock_cfg = parse_experiment_config(sgd_text("socket", sock_out, 80), "m");
  CHECK(cmd_run(sim_cfg) == 0);
  CHECK(cmd_run(sock_cfg) == 0);

  auto masters = [](const std::string& out) {
    std::ifstream in(out + "/master_state.csv");
    std::string line;
    std::getline(in, line);
    std::vector<double> vals;
    while (std::getline(in, line)) vals.push_back(std::strtod(line.c_str() + line.rfind(',') + 1,
                                                              nullptr));
    return vals;
  };
  std::vector<double> a = masters(sim_out), b = masters(sock_out);
  REQUIRE(a.size() == 4);
  REQUIRE(b.size() == 4);
  for (size_t k = 0; k < a.size(); ++k) CHECK(std::fabs(a[k] - b[k]) <= 1e-6);
}

TEST_CASE("cmd_validate accepts good configs and rejects missing files") {
  const std::string path = write_file("good.cfg", sgd_text("sim", fresh_dir("val"), 40));
  CHECK(cmd_validate(path) == 0);
  CHECK(cmd_validate("/nonexistent/nowhere.cfg") == 2);
  const std::string bad = write_file("bad.cfg", "mode = sim\n");
  CHECK(cmd_validate(bad) == 2);
}
