// Copyright (c) bcps contributors.
// Licensed under the Apache 2.0 License.
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <string>

#include "bcps/runner.hpp"

namespace {

int usage(FILE* to) {
  std::fprintf(to,
               "usage:\n"
               "  bcps run <config>             run the configured experiment end to end\n"
               "  bcps serve <config> <shard>   serve one shard over TCP until clients finish\n"
               "  bcps client <config> <proc>   drive one client process against the shards\n"
               "  bcps validate <config>        parse and check the config, print a summary\n"
               "\n"
               "environment overrides: BCPS_SEED, BCPS_OUT\n"
               "exit codes: 0 bounds held, 1 bound violation or runtime failure,\n"
               "            2 invalid config or usage, 3 transport failure\n");
  return to == stdout ? 0 : 2;
}

bool parse_index(const char* text, int32_t* out) {
  char* end = nullptr;
  long v = std::strtol(text, &end, 10);
  if (*text == '\0' || *end != '\0' || v < 0 || v > 1'000'000) return false;
  *out = static_cast<int32_t>(v);
  return true;
}

}  // namespace

int main(int argc, char** argv) {
  if (argc >= 2 && (std::strcmp(argv[1], "-h") == 0 || std::strcmp(argv[1], "--help") == 0))
    return usage(stdout);
  if (argc < 3) return usage(stderr);
  const std::string cmd = argv[1];
  const std::string path = argv[2];

  try {
    if (cmd == "validate") return bcps::cmd_validate(path);
    if (cmd == "run") {
      if (argc != 3) return usage(stderr);
      return bcps::cmd_run(bcps::load_experiment_config(path));
    }
    if (cmd == "serve" || cmd == "client") {
      int32_t idx = -1;
      if (argc != 4 || !parse_index(argv[3], &idx)) return usage(stderr);
      bcps::ExperimentConfig cfg = bcps::load_experiment_config(path);
      return cmd == "serve" ? bcps::cmd_serve(cfg, idx) : bcps::cmd_client(cfg, idx);
    }
  } catch (const bcps::ConfigError& e) {
    std::fprintf(stderr, "invalid config: %s\n", e.what());
    return 2;
  }
  std::fprintf(stderr, "unknown command: %s\n", cmd.c_str());
  return usage(stderr);
}
