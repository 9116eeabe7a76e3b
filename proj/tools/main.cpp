// windlab CLI entry point: argument parsing and dispatch; the subcommand
// implementations live in commands.cpp.

#include <exception>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "commands.hpp"
#include "windlab/common.hpp"

namespace {

void add_common(CLI::App* cmd, windlab::cli::CommonOptions& opt, bool env_required) {
  CLI::Option* env = cmd->add_option("--env", opt.env_id,
                                     "environment id, e.g. Dec_Turb3_Row1_Static");
  if (env_required) env->required();
  cmd->add_option("--algo", opt.algo, "learning algorithm")
      ->check(CLI::IsMember({"ippo", "mappo"}));
  cmd->add_option("--scenario", opt.scenario, "wind scenario (I, II or III)")
      ->check(CLI::IsMember({"I", "II", "III", "1", "2", "3"}));
  cmd->add_option("--steps", opt.steps, "step budget / episode length for the command");
  cmd->add_option("--seeds", opt.seeds_text, "comma-separated seed list (default 0)");
  cmd->add_option("--out", opt.out, "output directory (default .)");
  cmd->add_option("--config", opt.config_path, "key=value config file with overrides")
      ->check(CLI::ExistingFile);
  cmd->add_flag("--force", opt.force, "overwrite existing run outputs");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"windlab: a wind-farm control laboratory"};
  app.set_version_flag("--version", std::string(windlab::kVersionStamp));
  app.require_subcommand(1);

  windlab::cli::CommonOptions train_opt, eval_opt, score_opt, oracle_opt, transfer_opt,
      bridge_opt;
  std::string eval_ckpt, transfer_ckpt, oracle_mode = "auto";
  std::vector<std::string> score_ckpts;
  long long bridge_sessions = 1;

  CLI::App* train = app.add_subcommand("train", "train IPPO/MAPPO policies, one run per seed");
  add_common(train, train_opt, true);

  CLI::App* evaluate =
      app.add_subcommand("evaluate", "run a checkpoint deterministically, one episode per seed");
  add_common(evaluate, eval_opt, true);
  evaluate->add_option("checkpoint", eval_ckpt, "checkpoint directory")->required();

  CLI::App* score =
      app.add_subcommand("score", "weighted wind-rose score of one or more checkpoints");
  add_common(score, score_opt, true);
  score->add_option("checkpoints", score_ckpts, "checkpoint directories")->required();

  CLI::App* oracle = app.add_subcommand("oracle", "grid-search yaw oracle for a static farm");
  add_common(oracle, oracle_opt, true);
  oracle->add_option("--mode", oracle_mode, "auto | exhaustive | descent")
      ->check(CLI::IsMember({"auto", "exhaustive", "descent"}));

  CLI::App* transfer = app.add_subcommand(
      "transfer", "zero-shot then fine-tune a static checkpoint on a dynamic farm");
  add_common(transfer, transfer_opt, true);
  transfer->add_option("checkpoint", transfer_ckpt, "static (IPPO) checkpoint directory")
      ->required();

  CLI::App* bridge = app.add_subcommand(
      "serve-bridge", "serve the dynamic simulator over the wire protocol");
  add_common(bridge, bridge_opt, true);
  bridge->add_option("--max-sessions", bridge_sessions,
                     "connections to serve before exiting; 0 = forever (default 1)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (train->parsed()) return windlab::cli::cmd_train(train_opt);
    if (evaluate->parsed()) return windlab::cli::cmd_evaluate(eval_opt, eval_ckpt);
    if (score->parsed()) return windlab::cli::cmd_score(score_opt, score_ckpts);
    if (oracle->parsed()) return windlab::cli::cmd_oracle(oracle_opt, oracle_mode);
    if (transfer->parsed()) return windlab::cli::cmd_transfer(transfer_opt, transfer_ckpt);
    if (bridge->parsed()) return windlab::cli::cmd_serve_bridge(bridge_opt, bridge_sessions);
  } catch (const std::exception& e) {
    std::cerr << "windlab: error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
