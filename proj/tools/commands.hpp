#pragma once
// Subcommand implementations behind the windlab CLI. Each command returns a
// process exit code; argument parsing stays in main.cpp.

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace windlab::cli {

struct CommonOptions {
  std::string env_id;
  std::string algo = "ippo";  // ippo | mappo
  std::string scenario;       // empty = whatever the config file / default says
  long long steps = 0;        // 0 = the command's default
  std::string seeds_text = "0";
  std::string out = ".";
  std::string config_path;
  bool force = false;
};

std::vector<std::uint64_t> parse_seed_list(const std::string& text);

// Config-file overrides merged with the --scenario flag (the flag wins).
std::map<std::string, std::string> resolved_overrides(const CommonOptions& opt);

int cmd_train(const CommonOptions& opt);
int cmd_evaluate(const CommonOptions& opt, const std::string& checkpoint);
int cmd_score(const CommonOptions& opt, const std::vector<std::string>& checkpoints);
int cmd_oracle(const CommonOptions& opt, const std::string& mode);
int cmd_transfer(const CommonOptions& opt, const std::string& checkpoint);
int cmd_serve_bridge(const CommonOptions& opt, long long max_sessions);

}  // namespace windlab::cli
