#include "commands.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <stdexcept>

#include "windlab/cosim.hpp"
#include "windlab/dynsim.hpp"
#include "windlab/env.hpp"
#include "windlab/eval_bench.hpp"
#include "windlab/layouts.hpp"
#include "windlab/marl.hpp"

namespace windlab::cli {

namespace fs = std::filesystem;

std::vector<std::uint64_t> parse_seed_list(const std::string& text) {
  std::vector<std::uint64_t> seeds;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    std::size_t used = 0;
    const unsigned long long v = std::stoull(item, &used);
    if (used != item.size()) throw std::invalid_argument("bad seed '" + item + "'");
    seeds.push_back(v);
  }
  if (seeds.empty()) throw std::invalid_argument("--seeds must name at least one seed");
  return seeds;
}

std::map<std::string, std::string> resolved_overrides(const CommonOptions& opt) {
  std::map<std::string, std::string> overrides;
  if (!opt.config_path.empty()) overrides = read_key_value_file(opt.config_path);
  if (!opt.scenario.empty()) overrides["scenario"] = opt.scenario;
  return overrides;
}

namespace {

void ensure_out_dir(const std::string& out) {
  fs::create_directories(out);
  if (!fs::is_directory(out))
    throw std::runtime_error("output directory " + out + " is not writable");
}

std::string run_dir(const CommonOptions& opt, std::uint64_t seed) {
  return opt.out + "/" + opt.env_id + "_" + opt.algo + "_seed" + std::to_string(seed);
}

// Echo of everything the run depended on, so results are reproducible from
// the file alone.
std::string run_stamp(const CommonOptions& opt, std::uint64_t seed, long long steps,
                      const std::map<std::string, std::string>& overrides) {
  std::string text = std::string("# ") + kVersionStamp + "\n";
  text += "env " + opt.env_id + "\n";
  text += "algo " + opt.algo + "\n";
  text += "steps " + std::to_string(steps) + "\n";
  text += "seed " + std::to_string(seed) + "\n";
  for (const auto& [k, v] : overrides) text += k + " = " + v + "\n";
  return text;
}

double mean_of(const std::vector<double>& xs) {
  double s = 0.0;
  for (const double x : xs) s += x;
  return xs.empty() ? 0.0 : s / static_cast<double>(xs.size());
}

double pop_std_of(const std::vector<double>& xs) {
  if (xs.size() < 2) return 0.0;
  const double m = mean_of(xs);
  double s = 0.0;
  for (const double x : xs) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(xs.size()));
}

double median_of(std::vector<double> xs) {
  std::sort(xs.begin(), xs.end());
  const std::size_t n = xs.size();
  return n % 2 == 1 ? xs[n / 2] : 0.5 * (xs[n / 2 - 1] + xs[n / 2]);
}

}  // namespace

// ---------------------------------------------------------------------------
// train

int cmd_train(const CommonOptions& opt) {
  const auto overrides = resolved_overrides(opt);
  const auto seeds = parse_seed_list(opt.seeds_text);
  const long long steps = opt.steps > 0 ? opt.steps : 200000;
  ensure_out_dir(opt.out);

  const marl::EnvFactory factory = marl::env_factory_from_id(opt.env_id, overrides);
  for (const std::uint64_t seed : seeds) {
    const std::string dir = run_dir(opt, seed);
    if (fs::exists(dir + "/metrics.csv") && !opt.force)
      throw std::runtime_error("refusing to overwrite existing run " + dir +
                               " (pass --force to redo it)");
    fs::create_directories(dir);

    marl::TrainConfig cfg;
    const marl::TrainResult result = opt.algo == "mappo"
                                         ? marl::train_mappo(factory, cfg, steps, seed)
                                         : marl::train_ippo(factory, cfg, steps, seed);
    write_file_atomic(dir + "/metrics.csv", marl::metrics_to_csv(result.metrics));
    marl::save_agents(dir, result.agents);
    write_file_atomic(dir + "/run.txt", run_stamp(opt, seed, steps, overrides));

    const marl::MetricsRow& last = result.metrics.back();
    std::cout << opt.algo << " seed " << seed << ": final score " << fmt_double(last.score)
              << ", episode power sum " << fmt_double(last.power_sum) << " W, "
              << result.metrics.size() << " evaluation rows -> " << dir << "\n";
  }
  return 0;
}

// ---------------------------------------------------------------------------
// evaluate

int cmd_evaluate(const CommonOptions& opt, const std::string& checkpoint) {
  const auto overrides = resolved_overrides(opt);
  const auto seeds = parse_seed_list(opt.seeds_text);
  const int horizon = opt.steps > 0 ? static_cast<int>(opt.steps) : 150;
  ensure_out_dir(opt.out);

  const marl::TrainedAgents agents = marl::load_agents(checkpoint);
  const EnvId id = parse_env_id(opt.env_id);
  const bool adapted =
      agents.kind == SimulatorKind::kStatic && id.simulator == SimulatorKind::kDynamic;

  csv::Table table;
  table.comments = {kVersionStamp,
                    "env " + opt.env_id + " checkpoint " + checkpoint + " horizon " +
                        std::to_string(horizon) + (adapted ? " (static policy adapted)" : "")};
  table.header = {"seed", "episode_return", "power_sum_w", "load_sum"};

  std::vector<double> returns;
  for (const std::uint64_t seed : seeds) {
    std::map<std::string, std::string> forced = overrides;
    forced["horizon"] = std::to_string(horizon);
    const MadeEnv made = make_env(opt.env_id, forced);
    const marl::EpisodeStats s =
        adapted ? eval::run_adapted_episode(*made.agents, agents, seed, horizon)
                : marl::run_deterministic_episode(*made.agents, agents, seed, horizon);
    table.rows.push_back({std::to_string(seed), fmt_double(s.episode_return),
                          fmt_double(s.power_sum_w), fmt_double(s.load_sum)});
    returns.push_back(s.episode_return);
  }
  csv::write(opt.out + "/evaluate.csv", table);

  std::cout << csv::to_string(table);
  std::cout << "return mean " << fmt_double(mean_of(returns)) << " +- "
            << fmt_double(pop_std_of(returns)) << " over " << returns.size() << " seed(s)\n";
  return 0;
}

// ---------------------------------------------------------------------------
// score

int cmd_score(const CommonOptions& opt, const std::vector<std::string>& checkpoints) {
  const auto overrides = resolved_overrides(opt);
  const int horizon = opt.steps > 0 ? static_cast<int>(opt.steps) : 150;
  ensure_out_dir(opt.out);

  const auto series_key = overrides.find("series");
  const WindSeries series = series_key != overrides.end()
                                ? load_wind_series(series_key->second)
                                : load_wind_series(data_dir() + "/wind/synthetic_series.csv");
  const eval::EvalWeights weights = eval::extract_weights(series);

  csv::Table table;
  table.comments = {kVersionStamp, "env " + opt.env_id + " horizon " + std::to_string(horizon)};
  for (std::size_t j = 0; j < weights.size(); ++j)
    table.comments.push_back("weight " + std::to_string(j) + " u " + fmt_double(weights.u[j]) +
                             " phi " + fmt_double(weights.phi[j]) + " rho " +
                             fmt_double(weights.rho[j]));
  table.header = {"checkpoint", "condition", "u_inf",       "phi_inf",
                  "rho",        "episode_return", "power_sum_w", "load_sum"};

  csv::Table summary;
  summary.comments = table.comments;
  summary.header = {"checkpoint", "score", "power_weighted_w", "load_weighted"};

  std::vector<double> scores;
  std::vector<std::string> missing;
  std::ostringstream text;
  for (const std::string& ckpt : checkpoints) {
    if (!fs::exists(ckpt + "/params.bin")) {
      missing.push_back(ckpt);
      summary.rows.push_back({ckpt, "missing", "missing", "missing"});
      text << ckpt << "  [missing checkpoint]\n";
      continue;
    }
    const marl::TrainedAgents agents = marl::load_agents(ckpt);
    const eval::ScoreReport report =
        eval::evaluate_score(eval::policy_from_agents(agents), opt.env_id, overrides, weights,
                             horizon, parse_seed_list(opt.seeds_text)[0]);
    for (std::size_t j = 0; j < report.conditions.size(); ++j) {
      const eval::ConditionScore& c = report.conditions[j];
      table.rows.push_back({ckpt, std::to_string(j), fmt_double(c.u), fmt_double(c.phi),
                            fmt_double(c.rho), fmt_double(c.episode_return),
                            fmt_double(c.power_sum_w), fmt_double(c.load_sum)});
    }
    summary.rows.push_back({ckpt, fmt_double(report.score), fmt_double(report.power_weighted_w),
                            fmt_double(report.load_weighted)});
    scores.push_back(report.score);
    text << ckpt << "  score " << fmt_double(report.score) << "  power "
         << fmt_double(report.power_weighted_w) << "  load "
         << fmt_double(report.load_weighted) << "\n";
  }
  summary.rows.push_back({"mean", fmt_double(mean_of(scores)), "", ""});
  summary.rows.push_back({"std", fmt_double(pop_std_of(scores)), "", ""});

  csv::write(opt.out + "/score.csv", table);
  csv::write(opt.out + "/score_summary.csv", summary);

  std::cout << "weights over " << weights.size() << " wind conditions (" << series.rows()
            << " series rows)\n"
            << text.str() << "score mean " << fmt_double(mean_of(scores)) << " +- "
            << fmt_double(pop_std_of(scores)) << " over " << scores.size()
            << " checkpoint(s)\n";
  for (const std::string& m : missing) std::cerr << "missing checkpoint: " << m << "\n";
  return scores.empty() ? 1 : 0;
}

// ---------------------------------------------------------------------------
// oracle

int cmd_oracle(const CommonOptions& opt, const std::string& mode) {
  const auto overrides = resolved_overrides(opt);
  ensure_out_dir(opt.out);

  const EnvId id = parse_env_id(opt.env_id);
  if (id.simulator != SimulatorKind::kStatic)
    throw std::invalid_argument("oracle: needs a static environment id");
  const FarmLayout layout = load_layout(id.layout_id);

  eval::OracleMode m = eval::OracleMode::kAuto;
  if (mode == "exhaustive")
    m = eval::OracleMode::kExhaustive;
  else if (mode == "descent")
    m = eval::OracleMode::kDescent;
  else if (mode != "auto")
    throw std::invalid_argument("oracle: --mode must be auto, exhaustive or descent");

  // Conditions: the wind rose of a series when one is configured, otherwise a
  // single condition from the overrides / the layout's prevailing wind.
  eval::EvalWeights weights;
  if (const auto it = overrides.find("series"); it != overrides.end()) {
    weights = eval::extract_weights(load_wind_series(it->second));
  } else {
    double u = layout.prevailing_u, phi = layout.prevailing_phi;
    if (const auto uit = overrides.find("u_inf"); uit != overrides.end())
      u = parse_double(uit->second);
    if (const auto pit = overrides.find("phi_inf"); pit != overrides.end())
      phi = parse_double(pit->second);
    weights = eval::single_condition(u, phi);
  }
  double ti = 0.06;
  if (const auto tit = overrides.find("ti_inf"); tit != overrides.end())
    ti = parse_double(tit->second);

  csv::Table table;
  table.comments = {kVersionStamp, "layout " + id.layout_id + " mode " + mode};
  table.header = {"u_inf",        "phi_inf", "rho",  "greedy_power_w", "best_power_w",
                  "gain",         "evaluations", "exhaustive", "yaws_deg"};
  for (std::size_t j = 0; j < weights.size(); ++j) {
    FreeStreamConditions cond;
    cond.u_inf = weights.u[j];
    cond.phi_inf = weights.phi[j];
    cond.ti_inf = ti;
    const eval::OracleResult r = eval::grid_search_oracle(layout, cond, 5.0, 30.0, 0.0, 0.0, m);
    std::string yaws;
    for (std::size_t i = 0; i < r.best_yaws_deg.size(); ++i)
      yaws += (i ? ";" : "") + fmt_double(r.best_yaws_deg[i]);
    table.rows.push_back({fmt_double(cond.u_inf), fmt_double(cond.phi_inf),
                          fmt_double(weights.rho[j]), fmt_double(r.greedy_power_w),
                          fmt_double(r.best_power_w), fmt_double(r.gain()),
                          std::to_string(r.evaluations), r.exhaustive ? "1" : "0", yaws});
    std::cout << "u " << fmt_double(cond.u_inf) << " phi " << fmt_double(cond.phi_inf)
              << ": greedy " << fmt_double(r.greedy_power_w) << " W, best "
              << fmt_double(r.best_power_w) << " W, gain " << fmt_double(100.0 * r.gain())
              << "%, yaws [" << yaws << "]\n";
  }
  csv::write(opt.out + "/oracle.csv", table);
  return 0;
}

// ---------------------------------------------------------------------------
// transfer

int cmd_transfer(const CommonOptions& opt, const std::string& checkpoint) {
  const auto overrides = resolved_overrides(opt);
  const auto seeds = parse_seed_list(opt.seeds_text);
  ensure_out_dir(opt.out);

  const marl::TrainedAgents pretrained = marl::load_agents(checkpoint);
  eval::TransferConfig cfg;
  if (opt.steps > 0) cfg.finetune_steps = opt.steps;

  std::vector<double> gains;
  for (const std::uint64_t seed : seeds) {
    const std::string dir = opt.out + "/transfer_" + opt.env_id + "_seed" + std::to_string(seed);
    if (fs::exists(dir + "/transfer_metrics.csv") && !opt.force)
      throw std::runtime_error("refusing to overwrite existing run " + dir +
                               " (pass --force to redo it)");
    fs::create_directories(dir);

    const eval::TransferResult r =
        eval::transfer_finetune(pretrained, opt.env_id, overrides, cfg, seed);

    csv::Table zs;
    zs.comments = {kVersionStamp, "zero-shot on " + opt.env_id + " from " + checkpoint};
    zs.header = {"horizon",         "policy_power_sum_w", "greedy_power_sum_w",
                 "policy_load_sum", "greedy_load_sum",    "power_gain"};
    zs.rows.push_back({std::to_string(r.zero_shot.horizon),
                       fmt_double(r.zero_shot.policy_power_sum_w),
                       fmt_double(r.zero_shot.greedy_power_sum_w),
                       fmt_double(r.zero_shot.policy_load_sum),
                       fmt_double(r.zero_shot.greedy_load_sum),
                       fmt_double(r.zero_shot.power_gain)});
    csv::write(dir + "/zero_shot.csv", zs);
    write_file_atomic(dir + "/transfer_metrics.csv", marl::metrics_to_csv(r.metrics));
    marl::save_agents(dir, r.agents);
    write_file_atomic(dir + "/run.txt", run_stamp(opt, seed, cfg.finetune_steps, overrides));

    gains.push_back(r.zero_shot.power_gain);
    std::cout << "seed " << seed << ": zero-shot power gain "
              << fmt_double(100.0 * r.zero_shot.power_gain) << "%, fine-tuned "
              << cfg.finetune_steps << " steps -> " << dir << "\n";
  }
  std::cout << "zero-shot gain median " << fmt_double(100.0 * median_of(gains)) << "% over "
            << gains.size() << " seed(s)\n";
  return 0;
}

// ---------------------------------------------------------------------------
// serve-bridge

int cmd_serve_bridge(const CommonOptions& opt, long long max_sessions) {
  const auto overrides = resolved_overrides(opt);
  const auto seeds = parse_seed_list(opt.seeds_text);
  ensure_out_dir(opt.out);

  const EnvId id = parse_env_id(opt.env_id);
  if (id.simulator != SimulatorKind::kDynamic)
    throw std::invalid_argument("serve-bridge: needs a dynamic environment id");

  EnvConfig cfg;
  cfg.layout_id = id.layout_id;
  cfg.simulator = SimulatorKind::kDynamic;
  apply_overrides(cfg, overrides);
  cfg.validate();
  if (cfg.wind.scenario == Scenario::III && !cfg.wind.series) {
    const std::string path = cfg.series_path.empty()
                                 ? data_dir() + "/wind/synthetic_series.csv"
                                 : cfg.series_path;
    cfg.wind.series = std::make_shared<WindSeries>(load_wind_series(path));
  }

  std::string endpoint_text = "127.0.0.1:0";
  if (const auto it = overrides.find("bridge.endpoint"); it != overrides.end())
    endpoint_text = it->second;

  DynFarmSim sim(load_layout(cfg.layout_id), cfg.wind);
  TcpListener listener(parse_endpoint(endpoint_text));
  const std::string bound =
      parse_endpoint(endpoint_text).host + ":" + std::to_string(listener.port());
  write_file_atomic(opt.out + "/endpoint.txt", bound + "\n");
  std::cout << "serving " << opt.env_id << " on " << bound << "\n";

  for (long long session = 0; max_sessions == 0 || session < max_sessions; ++session) {
    std::unique_ptr<Transport> transport = listener.accept();
    sim.reset(seeds[0]);
    const std::uint64_t steps = serve_session(sim, *transport);
    std::cout << "session " << session << ": served " << steps << " steps\n";
  }
  return 0;
}

}  // namespace windlab::cli
