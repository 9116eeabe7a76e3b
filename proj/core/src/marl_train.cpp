// IPPO / MAPPO training loops, deterministic evaluation, checkpoint io and the
// metrics table. The numeric PPO pieces live in marl.cpp.

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "windlab/marl.hpp"

namespace windlab::marl {

namespace {

Matrix row_from(const std::vector<double>& v) {
  Matrix m(1, static_cast<int>(v.size()));
  for (int i = 0; i < m.cols(); ++i) m(0, i) = v[i];
  return m;
}

std::vector<double> clamp_scale(const Matrix& raw, const std::vector<double>& scale) {
  std::vector<double> out(scale.size());
  for (std::size_t d = 0; d < scale.size(); ++d)
    out[d] = std::clamp(raw(0, static_cast<int>(d)), -1.0, 1.0) * scale[d];
  return out;
}

}  // namespace

EnvFactory env_factory_from_id(const std::string& env_id,
                               const std::map<std::string, std::string>& overrides) {
  const EnvId parsed = parse_env_id(env_id);
  if (!parsed.decentralized)
    throw std::invalid_argument("trainers need a decentralized (Dec_...) env id, got " +
                                env_id);
  return [env_id, overrides]() { return make_env(env_id, overrides).agents; };
}

std::vector<std::vector<double>> deterministic_actions(
    const TrainedAgents& agents, const std::vector<std::vector<double>>& raw_obs) {
  if (static_cast<int>(raw_obs.size()) != agents.num_agents)
    throw std::invalid_argument("deterministic_actions: wrong number of observations");
  std::vector<std::vector<double>> acts(agents.num_agents);
  for (int i = 0; i < agents.num_agents; ++i) {
    const Matrix x = row_from(normalize_local_observation(raw_obs[i], agents.kind));
    acts[i] = clamp_scale(mlp_forward(agents.policies[i].mlp, x), agents.action_scale);
  }
  return acts;
}

EpisodeStats run_deterministic_episode(FarmEnv& env, const TrainedAgents& agents,
                                       std::uint64_t seed, int horizon) {
  EpisodeStats stats;
  std::vector<std::vector<double>> obs = env.reset(seed);
  for (int t = 0; t < horizon && !env.terminated(); ++t) {
    const EnvStepResult res = env.step(deterministic_actions(agents, obs));
    stats.episode_return += res.rewards[0];
    stats.power_sum_w += res.info.at("power_total_w");
    stats.load_sum += res.info.at("load_raw");
    obs = res.observations;
  }
  return stats;
}

// ---------------------------------------------------------------------------
// Metrics table.

std::string metrics_to_csv(const std::vector<MetricsRow>& rows) {
  std::string out = "update,step,score,power_sum,load_raw,kl,clipfrac\n";
  for (const MetricsRow& r : rows) {
    out += std::to_string(r.update) + "," + std::to_string(r.step) + "," +
           fmt_double(r.score) + "," + fmt_double(r.power_sum) + "," +
           fmt_double(r.load_raw) + "," + fmt_double(r.kl) + "," + fmt_double(r.clipfrac) +
           "\n";
  }
  return out;
}

std::vector<MetricsRow> metrics_from_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != "update,step,score,power_sum,load_raw,kl,clipfrac")
    throw std::invalid_argument("metrics_from_csv: bad header");
  std::vector<MetricsRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::size_t start = 0;
    for (std::size_t pos = 0; pos <= line.size(); ++pos) {
      if (pos == line.size() || line[pos] == ',') {
        f.push_back(line.substr(start, pos - start));
        start = pos + 1;
      }
    }
    if (f.size() != 7) throw std::invalid_argument("metrics_from_csv: bad row: " + line);
    MetricsRow r;
    r.update = static_cast<int>(parse_double(f[0]));
    r.step = static_cast<long long>(parse_double(f[1]));
    r.score = parse_double(f[2]);
    r.power_sum = parse_double(f[3]);
    r.load_raw = parse_double(f[4]);
    r.kl = parse_double(f[5]);
    r.clipfrac = parse_double(f[6]);
    rows.push_back(r);
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Checkpoints: params.bin (versioned flat tensor dump) + manifest.txt.

namespace {

constexpr char kBinMagic[4] = {'W', 'L', 'C', 'K'};
constexpr std::uint32_t kBinVersion = 1;

void put_u32(std::string& out, std::uint32_t v) {
  char b[4];
  std::memcpy(b, &v, 4);  // little-endian host, pinned by the wire-format tests
  out.append(b, 4);
}

std::uint32_t get_u32(const std::string& in, std::size_t& off) {
  if (off + 4 > in.size()) throw std::runtime_error("checkpoint: truncated binary");
  std::uint32_t v;
  std::memcpy(&v, in.data() + off, 4);
  off += 4;
  return v;
}

void put_tensor(std::string& bin, std::string& manifest, const std::string& name,
                const Matrix& m) {
  manifest += "tensor " + name + " " + std::to_string(m.rows()) + " " +
              std::to_string(m.cols()) + "\n";
  put_u32(bin, static_cast<std::uint32_t>(m.rows()));
  put_u32(bin, static_cast<std::uint32_t>(m.cols()));
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      char b[8];
      const double v = m(i, j);
      std::memcpy(b, &v, 8);
      bin.append(b, 8);
    }
}

Matrix get_tensor(const std::string& bin, std::size_t& off, int rows, int cols) {
  const std::uint32_t r = get_u32(bin, off), c = get_u32(bin, off);
  if (static_cast<int>(r) != rows || static_cast<int>(c) != cols)
    throw std::runtime_error("checkpoint: tensor shape mismatch with manifest");
  if (off + 8ull * r * c > bin.size()) throw std::runtime_error("checkpoint: truncated binary");
  Matrix m(r, c);
  for (std::uint32_t i = 0; i < r; ++i)
    for (std::uint32_t j = 0; j < c; ++j) {
      double v;
      std::memcpy(&v, bin.data() + off, 8);
      off += 8;
      m(i, j) = v;
    }
  return m;
}

std::vector<std::pair<std::string, const Matrix*>> tensor_list(const TrainedAgents& a) {
  std::vector<std::pair<std::string, const Matrix*>> list;
  auto add_mlp = [&](const std::string& prefix, const Mlp& m) {
    list.emplace_back(prefix + ".w1", &m.w1);
    list.emplace_back(prefix + ".b1", &m.b1);
    list.emplace_back(prefix + ".w2", &m.w2);
    list.emplace_back(prefix + ".b2", &m.b2);
    list.emplace_back(prefix + ".w3", &m.w3);
    list.emplace_back(prefix + ".b3", &m.b3);
  };
  for (int i = 0; i < static_cast<int>(a.policies.size()); ++i) {
    add_mlp("policy" + std::to_string(i), a.policies[i].mlp);
    list.emplace_back("policy" + std::to_string(i) + ".log_std", &a.policies[i].log_std);
  }
  for (int i = 0; i < static_cast<int>(a.critics.size()); ++i)
    add_mlp("critic" + std::to_string(i), a.critics[i].mlp);
  return list;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

void save_agents(const std::string& dir, const TrainedAgents& agents) {
  std::filesystem::create_directories(dir);
  std::string manifest = "windlab-checkpoint v1\n";
  manifest += "kind " + std::string(to_string(agents.kind)) + "\n";
  manifest += "num_agents " + std::to_string(agents.num_agents) + "\n";
  manifest += "obs_dim " + std::to_string(agents.obs_dim) + "\n";
  manifest += "act_dim " + std::to_string(agents.act_dim) + "\n";
  manifest += "shared_critic " + std::string(agents.shared_critic ? "1" : "0") + "\n";
  manifest += "action_scale";
  for (const double s : agents.action_scale) manifest += " " + fmt_double(s);
  manifest += "\n";

  std::string bin;
  bin.append(kBinMagic, 4);
  put_u32(bin, kBinVersion);
  const auto tensors = tensor_list(agents);
  put_u32(bin, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& [name, m] : tensors) put_tensor(bin, manifest, name, *m);

  write_file_atomic(dir + "/params.bin", bin);
  write_file_atomic(dir + "/manifest.txt", manifest);
}

TrainedAgents load_agents(const std::string& dir) {
  const std::string manifest = read_file(dir + "/manifest.txt");
  const std::string bin = read_file(dir + "/params.bin");

  std::istringstream in(manifest);
  std::string line;
  if (!std::getline(in, line) || line != "windlab-checkpoint v1")
    throw std::runtime_error("checkpoint: unsupported manifest version");
  TrainedAgents a;
  std::vector<std::tuple<std::string, int, int>> tensors;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string key;
    ls >> key;
    if (key == "kind") {
      std::string v;
      ls >> v;
      if (v == "Static")
        a.kind = SimulatorKind::kStatic;
      else if (v == "Dynamic")
        a.kind = SimulatorKind::kDynamic;
      else
        throw std::runtime_error("checkpoint: bad kind " + v);
    } else if (key == "num_agents") {
      ls >> a.num_agents;
    } else if (key == "obs_dim") {
      ls >> a.obs_dim;
    } else if (key == "act_dim") {
      ls >> a.act_dim;
    } else if (key == "shared_critic") {
      int v = 0;
      ls >> v;
      a.shared_critic = v != 0;
    } else if (key == "action_scale") {
      double s;
      while (ls >> s) a.action_scale.push_back(s);
    } else if (key == "tensor") {
      std::string name;
      int r = 0, c = 0;
      ls >> name >> r >> c;
      tensors.emplace_back(name, r, c);
    } else {
      throw std::runtime_error("checkpoint: unknown manifest key " + key);
    }
  }

  std::size_t off = 0;
  if (bin.size() < 12 || std::memcmp(bin.data(), kBinMagic, 4) != 0)
    throw std::runtime_error("checkpoint: bad binary magic");
  off = 4;
  if (get_u32(bin, off) != kBinVersion)
    throw std::runtime_error("checkpoint: unsupported binary version");
  if (get_u32(bin, off) != tensors.size())
    throw std::runtime_error("checkpoint: tensor count mismatch with manifest");

  std::size_t idx = 0;
  auto next = [&](const std::string& expect) {
    if (idx >= tensors.size()) throw std::runtime_error("checkpoint: missing tensor " + expect);
    const auto& [name, r, c] = tensors[idx++];
    if (name != expect) throw std::runtime_error("checkpoint: expected " + expect + ", got " + name);
    return get_tensor(bin, off, r, c);
  };
  auto read_mlp = [&](const std::string& prefix) {
    Mlp m;
    m.w1 = next(prefix + ".w1");
    m.b1 = next(prefix + ".b1");
    m.w2 = next(prefix + ".w2");
    m.b2 = next(prefix + ".b2");
    m.w3 = next(prefix + ".w3");
    m.b3 = next(prefix + ".b3");
    return m;
  };
  for (int i = 0; i < a.num_agents; ++i) {
    PolicyNet p;
    const std::string prefix = "policy" + std::to_string(i);
    p.mlp = read_mlp(prefix);
    p.log_std = next(prefix + ".log_std");
    a.policies.push_back(std::move(p));
  }
  const int num_critics = a.shared_critic ? 1 : a.num_agents;
  for (int i = 0; i < num_critics; ++i) {
    ValueNet v;
    v.mlp = read_mlp("critic" + std::to_string(i));
    a.critics.push_back(std::move(v));
  }
  if (idx != tensors.size()) throw std::runtime_error("checkpoint: extra tensors in manifest");
  return a;
}

// ---------------------------------------------------------------------------
// Training loops.

namespace {

struct MappoUpdateState {
  std::vector<Adam>* policy_opts;
  Adam* critic_opt;
  std::vector<LrSchedule>* policy_scheds;
  LrSchedule* critic_sched;
};

PpoDiagnostics mappo_update(TrainedAgents& agents, const std::vector<AgentBuffer>& bufs,
                            const Matrix& global_obs, const PpoConfig& cfg,
                            MappoUpdateState& opt, Rng& rng) {
  const int m_agents = agents.num_agents;
  const int n = bufs[0].size();
  const int mb = std::min(cfg.minibatch_size, n);
  if (n % mb != 0)
    throw std::invalid_argument("mappo update: buffer size not divisible by minibatch size");
  const int num_minibatches = n / mb;

  // Shared-critic GAE per agent, plus the agent-mean return as the critic target.
  std::vector<GaeResult> g(m_agents);
  Eigen::VectorXd critic_target = Eigen::VectorXd::Zero(n);
  for (int i = 0; i < m_agents; ++i) {
    g[i] = gae(bufs[i].rewards, bufs[i].values, bufs[i].dones, bufs[i].bootstrap_value,
               cfg.gamma, cfg.lambda);
    for (int t = 0; t < n; ++t) critic_target(t) += g[i].returns[t] / m_agents;
  }

  std::vector<int> order(n);
  for (int i = 0; i < n; ++i) order[i] = i;

  PpoDiagnostics mean{};
  int rounds = 0;
  const int odim = agents.obs_dim, adim = agents.act_dim;
  Matrix mb_obs(mb, odim), mb_act(mb, adim), mb_gobs(mb, global_obs.cols());
  Eigen::VectorXd mb_logp(mb), mb_adv(mb), mb_ret(mb);
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (int i = n - 1; i > 0; --i)
      std::swap(order[i], order[rng.integer(static_cast<std::uint64_t>(i) + 1)]);
    for (int m = 0; m < num_minibatches; ++m) {
      for (int i = 0; i < m_agents; ++i) {
        for (int r = 0; r < mb; ++r) {
          const int src = order[m * mb + r];
          mb_obs.row(r) = bufs[i].obs.row(src);
          mb_act.row(r) = bufs[i].actions.row(src);
          mb_logp(r) = bufs[i].log_probs[src];
          mb_adv(r) = g[i].advantages[src];
        }
        PolicyGrads pg =
            policy_minibatch_grads(agents.policies[i], mb_obs, mb_act, mb_logp,
                                   normalize_advantages(mb_adv), cfg.clip, cfg.entropy_coef);
        if (!std::isfinite(pg.loss))
          throw std::runtime_error("mappo update: non-finite policy loss");
        clip_global_norm(pg.grads, cfg.max_grad_norm);
        (*opt.policy_opts)[i].step(pg.grads, (*opt.policy_scheds)[i].next());
        mean.policy_loss += pg.loss / m_agents;
        mean.approx_kl += pg.approx_kl / m_agents;
        mean.clip_fraction += pg.clip_fraction / m_agents;
      }
      for (int r = 0; r < mb; ++r) {
        const int src = order[m * mb + r];
        mb_gobs.row(r) = global_obs.row(src);
        mb_ret(r) = critic_target(src);
      }
      ValueGrads vg = value_minibatch_grads(agents.critics[0], mb_gobs, mb_ret, cfg.vf_coef);
      if (!std::isfinite(vg.loss)) throw std::runtime_error("mappo update: non-finite value loss");
      clip_global_norm(vg.grads, cfg.max_grad_norm);
      opt.critic_opt->step(vg.grads, opt.critic_sched->next());
      mean.value_loss += vg.loss;
      ++rounds;
    }
  }
  mean.policy_loss /= rounds;
  mean.value_loss /= rounds;
  mean.approx_kl /= rounds;
  mean.clip_fraction /= rounds;
  return mean;
}

TrainResult train_loop(const EnvFactory& factory, const TrainConfig& cfg,
                       long long total_steps, std::uint64_t seed, bool mappo) {
  std::shared_ptr<FarmEnv> env = factory();
  const int m_agents = env->num_agents();
  const int odim = env->obs_dim(), adim = env->action_dim();
  const SimulatorKind kind = env->simulator_kind();
  const int T = cfg.num_steps;
  const int mb = std::min(cfg.ppo.minibatch_size, T);
  if (T % mb != 0)
    throw std::invalid_argument("train: num_steps must be divisible by the minibatch size");
  const long long num_updates = std::max<long long>(1, total_steps / T);
  const long long total_rounds = num_updates * cfg.ppo.epochs * (T / mb);

  Rng master(seed);
  Rng init_rng = master.spawn();
  Rng action_rng = master.spawn();
  Rng update_rng = master.spawn();

  TrainedAgents agents;
  agents.kind = kind;
  agents.num_agents = m_agents;
  agents.obs_dim = odim;
  agents.act_dim = adim;
  agents.shared_critic = mappo;
  agents.action_scale = env->action_high();
  const int gdim = m_agents * odim + 2;
  for (int i = 0; i < m_agents; ++i) agents.policies.push_back(make_policy(odim, adim, init_rng));
  if (mappo)
    agents.critics.push_back(make_value(gdim, init_rng));
  else
    for (int i = 0; i < m_agents; ++i) agents.critics.push_back(make_value(odim, init_rng));

  // Optimizers hold raw pointers into `agents`; the vectors above are final.
  std::vector<Adam> policy_opts;
  std::vector<Adam> critic_opts;
  for (int i = 0; i < m_agents; ++i) policy_opts.emplace_back(policy_params(agents.policies[i]));
  for (auto& critic : agents.critics) critic_opts.emplace_back(value_params(critic));
  std::vector<LrSchedule> policy_scheds(m_agents, LrSchedule(cfg.ppo.lr, total_rounds));
  LrSchedule critic_sched(cfg.ppo.lr, total_rounds);
  std::vector<Rng> shuffle_rngs;
  for (int i = 0; i < m_agents; ++i) shuffle_rngs.push_back(master.spawn());

  std::vector<AgentBuffer> bufs(m_agents);
  for (AgentBuffer& b : bufs) {
    b.obs = Matrix(T, odim);
    b.actions = Matrix(T, adim);
    b.log_probs.resize(T);
    b.rewards.resize(T);
    b.values.resize(T);
    b.dones.resize(T);
  }
  std::vector<RewardNormalizer> reward_norms(m_agents, RewardNormalizer(cfg.ppo.gamma));
  Matrix global_obs(mappo ? T : 0, mappo ? gdim : 0);

  std::uint64_t episode_index = 0;
  auto next_episode_seed = [&]() { return seed * 1000003ull + episode_index++; };
  std::vector<std::vector<double>> obs = env->reset(next_episode_seed());

  std::vector<MetricsRow> metrics;
  PpoDiagnostics last_diag{};
  auto evaluate = [&](long long update) {
    std::shared_ptr<FarmEnv> eval_env = factory();
    const EpisodeStats s =
        run_deterministic_episode(*eval_env, agents, cfg.eval_seed, cfg.eval_horizon);
    MetricsRow row;
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
      double shared_value = 0.0;
      if (mappo) {
        const Matrix gx =
            row_from(normalize_global_observation(env->global_observation(), m_agents, kind));
        global_obs.row(t) = gx.row(0);
        shared_value = mlp_forward(agents.critics[0].mlp, gx)(0, 0);
      }
      for (int i = 0; i < m_agents; ++i) {
        const Matrix x = row_from(normalize_local_observation(obs[i], kind));
        const Matrix mu = mlp_forward(agents.policies[i].mlp, x);
        Matrix action(1, adim);
        for (int d = 0; d < adim; ++d)
          action(0, d) =
              mu(0, d) + std::exp(agents.policies[i].log_std(0, d)) * action_rng.normal();
        bufs[i].obs.row(t) = x.row(0);
        bufs[i].actions.row(t) = action.row(0);
        bufs[i].log_probs[t] =
            gaussian_log_prob(mu, agents.policies[i].log_std, action)(0);
        bufs[i].values[t] =
            mappo ? shared_value : mlp_forward(agents.critics[i].mlp, x)(0, 0);
        env_actions[i] = clamp_scale(action, agents.action_scale);
      }
      const EnvStepResult res = env->step(env_actions);
      // Episodes end by time-limit truncation only (there is no failure state),
      // so bootstrap the successor value into the boundary reward. The critic
      // then fits the stationary discounted value of the observation instead of
      // a time-to-go that the observation cannot encode. GAE still truncates at
      // the boundary via dones.
      double terminal_boot_shared = 0.0;
      if (res.terminated && mappo) {
        const Matrix gx =
            row_from(normalize_global_observation(env->global_observation(), m_agents, kind));
        terminal_boot_shared = mlp_forward(agents.critics[0].mlp, gx)(0, 0);
      }
      for (int i = 0; i < m_agents; ++i) {
        double r = reward_norms[i].normalize(res.rewards[i], res.terminated);
        if (res.terminated) {
          const double boot =
              mappo ? terminal_boot_shared
                    : mlp_forward(agents.critics[i].mlp,
                                  row_from(normalize_local_observation(res.observations[i],
                                                                       kind)))(0, 0);
          r += cfg.ppo.gamma * boot;
        }
        bufs[i].rewards[t] = r;
        bufs[i].dones[t] = res.terminated ? 1.0 : 0.0;
      }
      obs = res.terminated ? env->reset(next_episode_seed()) : res.observations;
    }
    const bool ended = bufs[0].dones[T - 1] != 0.0;
    if (mappo) {
      double boot = 0.0;
      if (!ended) {
        const Matrix gx =
            row_from(normalize_global_observation(env->global_observation(), m_agents, kind));
        boot = mlp_forward(agents.critics[0].mlp, gx)(0, 0);
      }
      for (AgentBuffer& b : bufs) b.bootstrap_value = boot;
      MappoUpdateState opt{&policy_opts, &critic_opts[0], &policy_scheds, &critic_sched};
      last_diag = mappo_update(agents, bufs, global_obs, cfg.ppo, opt, update_rng);
    } else {
      PpoDiagnostics sum{};
      for (int i = 0; i < m_agents; ++i) {
        bufs[i].bootstrap_value =
            ended ? 0.0
                  : mlp_forward(agents.critics[i].mlp,
                                row_from(normalize_local_observation(obs[i], kind)))(0, 0);
        const PpoDiagnostics d =
            ppo_update(agents.policies[i], agents.critics[i], policy_opts[i], critic_opts[i],
                       bufs[i], cfg.ppo, policy_scheds[i], shuffle_rngs[i]);
        sum.policy_loss += d.policy_loss / m_agents;
        sum.value_loss += d.value_loss / m_agents;
        sum.approx_kl += d.approx_kl / m_agents;
        sum.clip_fraction += d.clip_fraction / m_agents;
      }
      last_diag = sum;
    }
    if (update % cfg.eval_every == 0 || update == num_updates) evaluate(update);
  }

  TrainResult result;
  result.agents = std::move(agents);
  result.metrics = std::move(metrics);
  return result;
}

}  // namespace

TrainResult train_ippo(const EnvFactory& factory, const TrainConfig& cfg,
                       long long total_steps, std::uint64_t seed) {
  return train_loop(factory, cfg, total_steps, seed, false);
}

TrainResult train_mappo(const EnvFactory& factory, const TrainConfig& cfg,
                        long long total_steps, std::uint64_t seed) {
  return train_loop(factory, cfg, total_steps, seed, true);
}

}  // namespace windlab::marl
