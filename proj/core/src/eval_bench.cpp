// Scoring, wind-rose weights, the wake-interaction DAG, the grid-search yaw
// oracle and the static-to-dynamic transfer harness.

#include "windlab/eval_bench.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace windlab::eval {

using marl::Adam;
using marl::gaussian_log_prob;
using marl::Matrix;
using marl::mlp_forward;
using marl::policy_params;
using marl::value_params;

// ---------------------------------------------------------------------------
// Weights.

void EvalWeights::validate() const {
  if (u.size() != rho.size() || phi.size() != rho.size() || rho.empty())
    throw std::invalid_argument("EvalWeights: u, phi, rho must be non-empty and equal-sized");
  double sum = 0.0;
  for (std::size_t j = 0; j < rho.size(); ++j) {
    if (!(rho[j] > 0.0)) throw std::invalid_argument("EvalWeights: weights must be positive");
    if (!std::isfinite(u[j]) || !std::isfinite(phi[j]))
      throw std::invalid_argument("EvalWeights: conditions must be finite");
    sum += rho[j];
  }
  if (std::abs(sum - 1.0) > 1e-12)
    throw std::invalid_argument("EvalWeights: weights must sum to 1, got " + fmt_double(sum));
}

EvalWeights single_condition(double u, double phi) {
  EvalWeights w;
  w.u = {u};
  w.phi = {phi};
  w.rho = {1.0};
  return w;
}

namespace {

// Equal-width binning of one dimension; zero spread collapses to a single bin.
struct Axis {
  double lo = 0.0;
  double width = 0.0;
  int bins = 1;

  Axis(const std::vector<double>& xs, int requested) {
    const auto [mn, mx] = std::minmax_element(xs.begin(), xs.end());
    lo = *mn;
    if (*mx > *mn) {
      bins = requested;
      width = (*mx - *mn) / requested;
    }
  }
  int index(double x) const {
    if (width == 0.0) return 0;
    return std::min(bins - 1, static_cast<int>((x - lo) / width));
  }
  double center(int i) const { return width == 0.0 ? lo : lo + (i + 0.5) * width; }
};

}  // namespace

EvalWeights extract_weights(const WindSeries& series, int bins) {
  series.validate();
  if (bins < 1) throw std::invalid_argument("extract_weights: bins must be >= 1");
  const Axis au(series.u_inf, bins), aphi(series.phi_inf, bins);

  std::vector<long long> counts(static_cast<std::size_t>(au.bins) * aphi.bins, 0);
  for (std::size_t r = 0; r < series.rows(); ++r)
    ++counts[au.index(series.u_inf[r]) * aphi.bins + aphi.index(series.phi_inf[r])];

  EvalWeights w;
  double total = 0.0;
  for (int i = 0; i < au.bins; ++i)
    for (int j = 0; j < aphi.bins; ++j) {
      const long long c = counts[i * aphi.bins + j];
      if (c == 0) continue;  // dropped; the remaining weights are renormalized
      w.u.push_back(au.center(i));
      w.phi.push_back(aphi.center(j));
      w.rho.push_back(static_cast<double>(c));
      total += static_cast<double>(c);
    }
  for (double& r : w.rho) r /= total;
  w.validate();
  return w;
}

// ---------------------------------------------------------------------------
// Scoring.

JointPolicy policy_from_agents(const TrainedAgents& agents) {
  return [agents](const std::vector<std::vector<double>>& obs) {
    return marl::deterministic_actions(agents, obs);
  };
}

JointPolicy zero_policy(int num_agents, int action_dim) {
  const std::vector<std::vector<double>> zeros(num_agents,
                                               std::vector<double>(action_dim, 0.0));
  return [zeros](const std::vector<std::vector<double>>&) { return zeros; };
}

std::string ScoreReport::to_text() const {
  std::ostringstream out;
  out << std::setprecision(10);
  out << std::setw(10) << "u_inf" << std::setw(12) << "phi_inf" << std::setw(12) << "rho"
      << std::setw(16) << "return" << std::setw(18) << "power_sum_w" << std::setw(16)
      << "load_sum" << "\n";
  for (const ConditionScore& c : conditions)
    out << std::setw(10) << c.u << std::setw(12) << c.phi << std::setw(12) << c.rho
        << std::setw(16) << c.episode_return << std::setw(18) << c.power_sum_w
        << std::setw(16) << c.load_sum << "\n";
  out << "score        " << fmt_double(score) << "\n";
  out << "power_sum_w  " << fmt_double(power_weighted_w) << "\n";
  out << "load_penalty " << fmt_double(load_weighted) << "\n";
  return out.str();
}

ScoreReport evaluate_score(const JointPolicy& policy, const std::string& env_id,
                           const std::map<std::string, std::string>& overrides,
                           const EvalWeights& weights, int horizon, std::uint64_t seed) {
  weights.validate();
  if (horizon < 1) throw std::invalid_argument("evaluate_score: horizon must be >= 1");
  ScoreReport report;
  for (std::size_t j = 0; j < weights.size(); ++j) {
    std::map<std::string, std::string> forced = overrides;
    forced["scenario"] = "I";
    forced["u_inf"] = fmt_double(weights.u[j]);
    forced["phi_inf"] = fmt_double(weights.phi[j]);
    forced["horizon"] = std::to_string(horizon);
    const MadeEnv made = make_env(env_id, forced);
    FarmEnv& env = *made.agents;

    ConditionScore c;
    c.u = weights.u[j];
    c.phi = weights.phi[j];
    c.rho = weights.rho[j];
    std::vector<std::vector<double>> obs = env.reset(seed);
    for (int t = 0; t < horizon && !env.terminated(); ++t) {
      const EnvStepResult res = env.step(policy(obs));
      c.episode_return += res.rewards[0];
      c.power_sum_w += res.info.at("power_total_w");
      c.load_sum += res.info.at("load_raw");
      obs = res.observations;
    }
    report.conditions.push_back(c);
    report.score += c.rho * c.episode_return;
    report.power_weighted_w += c.rho * c.power_sum_w;
    report.load_weighted += c.rho * c.load_sum;
  }
  return report;
}

// ---------------------------------------------------------------------------
// DAG.

bool InteractionDAG::has_edge(int i, int j) const {
  return std::find(edges.begin(), edges.end(), std::make_pair(i, j)) != edges.end();
}

InteractionDAG build_dag(const FarmLayout& layout, double phi_inf,
                         double cone_half_angle_deg, double max_range_diameters) {
  layout.validate();
  const WindFrame frame = WindFrame::from_direction(phi_inf);
  const int m = layout.count();
  std::vector<double> xt(m), yt(m);
  for (int i = 0; i < m; ++i) {
    const auto p = frame.project(layout.positions[i][0], layout.positions[i][1]);
    xt[i] = p[0];
    yt[i] = p[1];
  }

  InteractionDAG dag;
  dag.phi_inf = phi_inf;
  dag.num_turbines = m;
  const double half_angle = cone_half_angle_deg * kPi / 180.0;
  const double max_range = max_range_diameters * layout.turbine.rotor_diameter_m;
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < m; ++j) {
      if (i == j) continue;
      const double dx = xt[j] - xt[i], dy = yt[j] - yt[i];
      if (dx <= 0.0) continue;  // strictly downwind only: guarantees acyclicity
      if (std::atan2(std::abs(dy), dx) > half_angle) continue;
      if (std::hypot(dx, dy) > max_range) continue;
      dag.edges.emplace_back(i, j);
    }

  dag.topological_order.resize(m);
  std::iota(dag.topological_order.begin(), dag.topological_order.end(), 0);
  std::stable_sort(dag.topological_order.begin(), dag.topological_order.end(),
                   [&](int a, int b) { return xt[a] < xt[b]; });
  return dag;
}

// ---------------------------------------------------------------------------
// Oracle.

double OracleResult::gain() const {
  return greedy_power_w > 0.0 ? best_power_w / greedy_power_w - 1.0 : 0.0;
}

namespace {

double farm_power(const SteadyFarmState& state) {
  double sum = 0.0;
  for (const TurbineFlowState& t : state.turbines) sum += t.power_w;
  return sum;
}

}  // namespace

OracleResult grid_search_oracle(const FarmLayout& layout,
                                const FreeStreamConditions& conditions, double step_deg,
                                double max_yaw_deg, double alpha, double c_load,
                                OracleMode mode) {
  layout.validate();
  conditions.validate();
  if (!(step_deg > 0.0) || !(max_yaw_deg >= 0.0))
    throw std::invalid_argument("grid_search_oracle: bad grid parameters");
  const bool exhaustive =
      mode == OracleMode::kAuto ? layout.count() <= 4 : mode == OracleMode::kExhaustive;
  if (exhaustive && layout.count() > 12)
    throw std::invalid_argument(
        "grid_search_oracle: exhaustive search is infeasible for M > 12 turbines; "
        "use coordinate descent");
  const int half = static_cast<int>(std::lround(max_yaw_deg / step_deg));
  std::vector<double> grid;
  for (int k = -half; k <= half; ++k) grid.push_back(k * step_deg);

  const int m = layout.count();
  OracleResult result;
  auto objective = [&](const std::vector<double>& yaws, double* power_out) {
    const SteadyFarmState state = solve_farm(layout, yaws, conditions);
    std::vector<double> powers(m);
    for (int i = 0; i < m; ++i) powers[i] = state.turbines[i].power_w;
    const double power = farm_power(state);
    if (power_out) *power_out = power;
    ++result.evaluations;
    const double rp = reward_production(powers, conditions.u_inf);
    return alpha == 0.0 ? rp
                        : combined_reward(rp, load_proxy_static(state), alpha, c_load);
  };

  std::vector<double> yaws(m, 0.0);
  result.greedy_power_w = farm_power(solve_farm(layout, yaws, conditions));

  if (exhaustive) {
    result.exhaustive = true;
    std::vector<int> idx(m, 0);
    std::vector<double> best = yaws;
    double best_obj = -std::numeric_limits<double>::infinity();
    double best_power = 0.0;
    while (true) {
      for (int i = 0; i < m; ++i) yaws[i] = grid[idx[i]];
      double power = 0.0;
      const double obj = objective(yaws, &power);
      if (obj > best_obj) {
        best_obj = obj;
        best_power = power;
        best = yaws;
      }
      int d = 0;
      while (d < m && ++idx[d] == static_cast<int>(grid.size())) idx[d++] = 0;
      if (d == m) break;
    }
    result.best_yaws_deg = best;
    result.best_power_w = best_power;
    result.best_objective = best_obj;
    return result;
  }

  // Cyclic coordinate descent in downwind order; a coordinate only moves on a
  // strict improvement so the sweep loop terminates.
  const std::vector<int> order =
      build_dag(layout, conditions.phi_inf).topological_order;
  double cur_power = result.greedy_power_w;
  double cur_obj = objective(yaws, &cur_power);
  for (int sweep = 0; sweep < 50; ++sweep) {
    bool changed = false;
    for (const int i : order) {
      const double saved = yaws[i];
      double local_best = cur_obj, local_power = cur_power, local_yaw = saved;
      for (const double g : grid) {
        if (g == saved) continue;
        yaws[i] = g;
        double power = 0.0;
        const double obj = objective(yaws, &power);
        if (obj > local_best + 1e-12) {
          local_best = obj;
          local_power = power;
          local_yaw = g;
        }
      }
      yaws[i] = local_yaw;
      if (local_yaw != saved) {
        changed = true;
        cur_obj = local_best;
        cur_power = local_power;
      }
    }
    if (!changed) break;
  }
  result.best_yaws_deg = yaws;
  result.best_power_w = cur_power;
  result.best_objective = cur_obj;
  return result;
}

// ---------------------------------------------------------------------------
// Transfer.

std::vector<double> adapt_dynamic_observation(const std::vector<double>& dyn_obs) {
  if (dyn_obs.size() != 8)
    throw std::invalid_argument("adapt_dynamic_observation: expected 8 fields, got " +
                                std::to_string(dyn_obs.size()));
  return {dyn_obs[0], dyn_obs[1], dyn_obs[2], dyn_obs[5]};  // u, phi, yaw, target_yaw
}

namespace {

void require_static_agents(const TrainedAgents& agents) {
  if (agents.kind != SimulatorKind::kStatic || agents.obs_dim != 4 || agents.act_dim != 1)
    throw std::invalid_argument(
        "transfer: pretrained agents must come from the static environment "
        "(4 observation fields, 1 action)");
}

std::vector<std::vector<double>> adapt_all(const std::vector<std::vector<double>>& obs) {
  std::vector<std::vector<double>> out(obs.size());
  for (std::size_t i = 0; i < obs.size(); ++i) out[i] = adapt_dynamic_observation(obs[i]);
  return out;
}

std::vector<std::vector<double>> expand_actions(const std::vector<std::vector<double>>& acts) {
  std::vector<std::vector<double>> out(acts.size());
  for (std::size_t i = 0; i < acts.size(); ++i) out[i] = {acts[i][0], 0.0, 0.0};
  return out;
}

// horizon > 0 forces the episode length; 0 leaves the caller's choice alone.
std::shared_ptr<FarmEnv> make_dynamic_env(const std::string& env_id,
                                          std::map<std::string, std::string> overrides,
                                          int horizon) {
  if (horizon > 0) overrides["horizon"] = std::to_string(horizon);
  const MadeEnv made = make_env(env_id, overrides);
  if (made.agents->simulator_kind() != SimulatorKind::kDynamic)
    throw std::invalid_argument("transfer: " + env_id + " is not a dynamic environment");
  return made.agents;
}

}  // namespace

marl::EpisodeStats run_adapted_episode(FarmEnv& env, const TrainedAgents& static_agents,
                                       std::uint64_t seed, int horizon) {
  require_static_agents(static_agents);
  if (env.simulator_kind() != SimulatorKind::kDynamic)
    throw std::invalid_argument("run_adapted_episode: needs a dynamic environment");
  marl::EpisodeStats stats;
  std::vector<std::vector<double>> obs = env.reset(seed);
  for (int t = 0; t < horizon && !env.terminated(); ++t) {
    const EnvStepResult res =
        env.step(expand_actions(marl::deterministic_actions(static_agents, adapt_all(obs))));
    stats.episode_return += res.rewards[0];
    stats.power_sum_w += res.info.at("power_total_w");
    stats.load_sum += res.info.at("load_raw");
    obs = res.observations;
  }
  return stats;
}

ZeroShotReport transfer_zero_shot(const TrainedAgents& pretrained, const std::string& env_id,
                                  const std::map<std::string, std::string>& overrides,
                                  int horizon, std::uint64_t seed) {
  require_static_agents(pretrained);
  if (horizon < 1) throw std::invalid_argument("transfer_zero_shot: horizon must be >= 1");
  ZeroShotReport report;
  report.horizon = horizon;

  std::shared_ptr<FarmEnv> env = make_dynamic_env(env_id, overrides, horizon);
  const marl::EpisodeStats policy = run_adapted_episode(*env, pretrained, seed, horizon);
  report.policy_power_sum_w = policy.power_sum_w;
  report.policy_load_sum = policy.load_sum;

  // The greedy baseline holds every target where it started, on the same seed.
  std::shared_ptr<FarmEnv> base = make_dynamic_env(env_id, overrides, horizon);
  const std::vector<std::vector<double>> zeros(base->num_agents(),
                                               std::vector<double>(base->action_dim(), 0.0));
  base->reset(seed);
  for (int t = 0; t < horizon && !base->terminated(); ++t) {
    const EnvStepResult res = base->step(zeros);
    report.greedy_power_sum_w += res.info.at("power_total_w");
    report.greedy_load_sum += res.info.at("load_raw");
  }
  report.power_gain = report.greedy_power_sum_w > 0.0
                          ? report.policy_power_sum_w / report.greedy_power_sum_w - 1.0
                          : 0.0;
  return report;
}

TransferResult transfer_finetune(const TrainedAgents& pretrained, const std::string& env_id,
                                 const std::map<std::string, std::string>& overrides,
                                 const TransferConfig& cfg, std::uint64_t seed) {
  require_static_agents(pretrained);
  if (pretrained.shared_critic)
    throw std::invalid_argument(
        "transfer_finetune: shared-critic checkpoints are not supported; the critic "
        "was fitted to the static global observation layout");

  TransferResult out;
  out.zero_shot = transfer_zero_shot(pretrained, env_id, overrides, cfg.zero_shot_horizon, seed);

  const int T = cfg.train.num_steps;
  const int mb = std::min(cfg.train.ppo.minibatch_size, T);
  if (T % mb != 0)
    throw std::invalid_argument("transfer_finetune: num_steps must be divisible by the "
                                "minibatch size");
  const long long num_updates = std::max<long long>(1, cfg.finetune_steps / T);
  const long long total_rounds = num_updates * cfg.train.ppo.epochs * (T / mb);

  TrainedAgents agents = pretrained;
  std::shared_ptr<FarmEnv> env = make_dynamic_env(env_id, overrides, 0);
  if (env->num_agents() != agents.num_agents)
    throw std::invalid_argument("transfer_finetune: agent count mismatch between the "
                                "checkpoint and " + env_id);
  const int m_agents = agents.num_agents;

  Rng master(seed);
  Rng action_rng = master.spawn();
  std::vector<Adam> policy_opts, critic_opts;
  for (int i = 0; i < m_agents; ++i) policy_opts.emplace_back(policy_params(agents.policies[i]));
  for (auto& critic : agents.critics) critic_opts.emplace_back(value_params(critic));
  std::vector<marl::LrSchedule> policy_scheds(
      m_agents, marl::LrSchedule(cfg.train.ppo.lr, total_rounds));
  std::vector<Rng> shuffle_rngs;
  for (int i = 0; i < m_agents; ++i) shuffle_rngs.push_back(master.spawn());

  std::vector<marl::AgentBuffer> bufs(m_agents);
  for (marl::AgentBuffer& b : bufs) {
    b.obs = Matrix(T, 4);
    b.actions = Matrix(T, 1);
    b.log_probs.resize(T);
    b.rewards.resize(T);
    b.values.resize(T);
    b.dones.resize(T);
  }
  std::vector<marl::RewardNormalizer> reward_norms(
      m_agents, marl::RewardNormalizer(cfg.train.ppo.gamma));

  std::uint64_t episode_index = 0;
  auto next_episode_seed = [&]() { return seed * 1000003ull + episode_index++; };
  std::vector<std::vector<double>> obs = env->reset(next_episode_seed());

  std::vector<marl::MetricsRow> metrics;
  marl::PpoDiagnostics last_diag{};
  auto evaluate = [&](long long update) {
    std::shared_ptr<FarmEnv> eval_env =
        make_dynamic_env(env_id, overrides, cfg.train.eval_horizon);
    const marl::EpisodeStats s =
        run_adapted_episode(*eval_env, agents, cfg.train.eval_seed, cfg.train.eval_horizon);
    marl::MetricsRow row;
    row.update = static_cast<int>(update);
    row.step = update * T;
    row.score = s.episode_return;
    row.power_sum = s.power_sum_w;
    row.load_raw = s.load_sum;
    row.kl = last_diag.approx_kl;
    row.clipfrac = last_diag.clip_fraction;
    metrics.push_back(row);
  };
  evaluate(0);

  for (long long update = 1; update <= num_updates; ++update) {
    for (int t = 0; t < T; ++t) {
      std::vector<std::vector<double>> env_actions(m_agents);
      for (int i = 0; i < m_agents; ++i) {
        const std::vector<double> adapted = adapt_dynamic_observation(obs[i]);
        Matrix x(1, 4);
        const std::vector<double> nx =
            normalize_local_observation(adapted, SimulatorKind::kStatic);
        for (int d = 0; d < 4; ++d) x(0, d) = nx[d];
        const Matrix mu = mlp_forward(agents.policies[i].mlp, x);
        Matrix action(1, 1);
        action(0, 0) = mu(0, 0) + std::exp(agents.policies[i].log_std(0, 0)) * action_rng.normal();
        bufs[i].obs.row(t) = x.row(0);
        bufs[i].actions.row(t) = action.row(0);
        bufs[i].log_probs[t] = gaussian_log_prob(mu, agents.policies[i].log_std, action)(0);
        bufs[i].values[t] = mlp_forward(agents.critics[i].mlp, x)(0, 0);
        env_actions[i] = {std::clamp(action(0, 0), -1.0, 1.0) * agents.action_scale[0], 0.0,
                          0.0};
      }
      const EnvStepResult res = env->step(env_actions);
      for (int i = 0; i < m_agents; ++i) {
        double r = reward_norms[i].normalize(res.rewards[i], res.terminated);
        if (res.terminated) {
          // Time-limit truncation, not a failure state: bootstrap the successor
          // value so the critic fits the stationary discounted value.
          Matrix x(1, 4);
          const std::vector<double> nx = normalize_local_observation(
              adapt_dynamic_observation(res.observations[i]), SimulatorKind::kStatic);
          for (int d = 0; d < 4; ++d) x(0, d) = nx[d];
          r += cfg.train.ppo.gamma * mlp_forward(agents.critics[i].mlp, x)(0, 0);
        }
        bufs[i].rewards[t] = r;
        bufs[i].dones[t] = res.terminated ? 1.0 : 0.0;
      }
      obs = res.terminated ? env->reset(next_episode_seed()) : res.observations;
    }
    const bool ended = bufs[0].dones[T - 1] != 0.0;
    marl::PpoDiagnostics sum{};
    for (int i = 0; i < m_agents; ++i) {
      if (ended) {
        bufs[i].bootstrap_value = 0.0;
      } else {
        Matrix x(1, 4);
        const std::vector<double> nx = normalize_local_observation(
            adapt_dynamic_observation(obs[i]), SimulatorKind::kStatic);
        for (int d = 0; d < 4; ++d) x(0, d) = nx[d];
        bufs[i].bootstrap_value = mlp_forward(agents.critics[i].mlp, x)(0, 0);
      }
      const marl::PpoDiagnostics d =
          marl::ppo_update(agents.policies[i], agents.critics[i], policy_opts[i],
                           critic_opts[i], bufs[i], cfg.train.ppo, policy_scheds[i],
                           shuffle_rngs[i]);
      sum.policy_loss += d.policy_loss / m_agents;
      sum.value_loss += d.value_loss / m_agents;
      sum.approx_kl += d.approx_kl / m_agents;
      sum.clip_fraction += d.clip_fraction / m_agents;
    }
    last_diag = sum;
    if (update % cfg.train.eval_every == 0 || update == num_updates) evaluate(update);
  }

  out.agents = std::move(agents);
  out.metrics = std::move(metrics);
  return out;
}

}  // namespace windlab::eval
