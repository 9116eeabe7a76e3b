#pragma once
// From-scratch actor-critic machinery: a small reverse-mode autodiff tape over
// Eigen matrices, (64, 64) tanh networks, Gaussian policies, GAE, the clipped
// PPO update, and the IPPO / MAPPO training loops.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "windlab/common.hpp"
#include "windlab/env.hpp"

namespace windlab::marl {

using Matrix = Eigen::MatrixXd;

// ---------------------------------------------------------------------------
// Reverse-mode tape. Values are dense matrices; rows index batch samples.
// Supported primitives: affine (matmul / add with row-vector broadcast), sub,
// elementwise mul, scalar scale/shift, tanh, exp, log, square, clip (with a
// pass-through-inside subgradient), elementwise min, row sums and full means.

class Tape {
 public:
  using Var = int;

  // Leaf holding a value; gradients accumulate into every node, so constants
  // and parameters share one entry point. For parameters keep the returned id
  // and read grad() after backward().
  Var leaf(Matrix value);

  Var matmul(Var a, Var b);
  // Same-shape add, or broadcast when b is a 1-row matrix.
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);  // elementwise, same shape
  Var scale(Var a, double c);
  Var add_scalar(Var a, double c);
  Var neg(Var a) { return scale(a, -1.0); }
  Var tanh(Var a);
  Var exp(Var a);
  Var log(Var a);
  Var square(Var a);
  // clamp to [lo, hi]; subgradient passes where lo <= x <= hi (inclusive).
  Var clip(Var a, double lo, double hi);
  // elementwise min; ties route the gradient to `a`.
  Var minimum(Var a, Var b);
  Var row_sum(Var a);   // (r x c) -> (r x 1)
  Var mean_all(Var a);  // -> (1 x 1)

  const Matrix& value(Var v) const { return nodes_[v].value; }
  const Matrix& grad(Var v) const { return nodes_[v].grad; }

  // Seeds d(loss)/d(loss) = 1 and sweeps the tape in reverse. The loss node
  // must be 1x1 and finite.
  void backward(Var loss);

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    std::function<void(Tape&, const Node&)> back;  // pulls from node.grad
  };
  Var push(Matrix value, std::function<void(Tape&, const Node&)> back);
  std::vector<Node> nodes_;
};

// ---------------------------------------------------------------------------
// Networks. All parameters are matrices (biases are 1 x n) so one optimizer
// and one checkpoint format cover everything.

struct Mlp {
  Matrix w1, b1, w2, b2, w3, b3;
  int in_dim() const { return static_cast<int>(w1.rows()); }
  int out_dim() const { return static_cast<int>(w3.cols()); }
};

struct PolicyNet {
  Mlp mlp;         // observation -> action mean
  Matrix log_std;  // 1 x act_dim, state-independent
};

struct ValueNet {
  Mlp mlp;  // observation -> scalar value
};

// Orthogonal initialization (QR of a Gaussian matrix, sign-corrected, scaled
// by `gain`); biases start at zero.
Matrix orthogonal(int rows, int cols, double gain, Rng& rng);
Mlp make_mlp(int in, int out, double out_gain, Rng& rng, int hidden = 64);
PolicyNet make_policy(int obs_dim, int act_dim, Rng& rng);  // out gain 0.01, log_std 0
ValueNet make_value(int obs_dim, Rng& rng);                 // out gain 1.0

// Plain forward pass (no tape): rows of x are samples.
Matrix mlp_forward(const Mlp& net, const Matrix& x);
// Tape forward pass; appends the parameter leaf ids (w1,b1,w2,b2,w3,b3) to
// `param_vars` so gradients can be read back after backward().
Tape::Var mlp_forward(Tape& tape, const Mlp& net, Tape::Var x,
                      std::vector<Tape::Var>& param_vars);

// Canonical parameter lists (order matters for Adam state and checkpoints).
std::vector<Matrix*> mlp_params(Mlp& net);
std::vector<Matrix*> policy_params(PolicyNet& net);  // mlp params + log_std
std::vector<Matrix*> value_params(ValueNet& net);

// Diagonal-Gaussian log density of `actions` under mean/log_std, one row per
// sample. This is the pre-clamp convention: the density of the raw sample.
Eigen::VectorXd gaussian_log_prob(const Matrix& mean, const Matrix& log_std,
                                  const Matrix& actions);

// ---------------------------------------------------------------------------
// Generalized advantage estimation. dones[t] = 1 when the transition at t
// ended the episode; the advantage sum truncates there. `bootstrap_value`
// continues the value beyond the buffer when the final transition did not
// terminate.
struct GaeResult {
  std::vector<double> advantages;
  std::vector<double> returns;  // advantage + value
};
GaeResult gae(const std::vector<double>& rewards, const std::vector<double>& values,
              const std::vector<double>& dones, double bootstrap_value, double gamma,
              double lambda);

// ---------------------------------------------------------------------------
// Adam with bias correction; eps defaults to the PPO-standard 1e-5.
class Adam {
 public:
  explicit Adam(const std::vector<Matrix*>& params, double eps = 1e-5);
  void step(const std::vector<Matrix>& grads, double lr);

 private:
  std::vector<Matrix*> params_;
  std::vector<Matrix> m_, v_;
  long long t_ = 0;
  double eps_;
};

// Global L2 norm across a gradient set; clip scales all grads in place when
// the norm exceeds max_norm.
double global_norm(const std::vector<Matrix>& grads);
void clip_global_norm(std::vector<Matrix>& grads, double max_norm);

// Linearly annealed learning rate: lr0 * (1 - used/total), floored at 0. Each
// gradient step consumes one tick, so the final minibatch of a default-config
// training run lands below 1e-6.
class LrSchedule {
 public:
  LrSchedule(double lr0, long long total_steps) : lr0_(lr0), total_(total_steps) {}
  double next();
  long long used() const { return used_; }

 private:
  double lr0_;
  long long total_;
  long long used_ = 0;
};

// ---------------------------------------------------------------------------
// PPO.

struct PpoConfig {
  double lr = 3e-4;
  double clip = 0.2;
  int epochs = 10;
  int minibatch_size = 64;
  double vf_coef = 0.5;
  double max_grad_norm = 0.5;
  double gamma = 0.99;   // beta in the env's reward discount convention
  double lambda = 0.95;  // GAE
  double entropy_coef = 0.0;
};

// One agent's on-policy rollout: obs (T x o), actions (T x a, raw pre-clamp
// samples in normalized units), log-probs, rewards, values, done flags.
struct AgentBuffer {
  Matrix obs, actions;
  std::vector<double> log_probs, rewards, values, dones;
  double bootstrap_value = 0.0;
  int size() const { return static_cast<int>(obs.rows()); }
};

struct PpoDiagnostics {
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double approx_kl = 0.0;
  double clip_fraction = 0.0;
};

// Clipped-surrogate gradients for one actor minibatch, without touching the
// parameters. Advantages must already be normalized.
struct PolicyGrads {
  std::vector<Matrix> grads;  // order of policy_params()
  double loss = 0.0, approx_kl = 0.0, clip_fraction = 0.0, entropy = 0.0;
};
PolicyGrads policy_minibatch_grads(const PolicyNet& policy, const Matrix& obs,
                                   const Matrix& actions, const Eigen::VectorXd& old_log_probs,
                                   const Eigen::VectorXd& advantages, double clip_eps,
                                   double entropy_coef = 0.0);

// coef * 0.5 * mean((V - R)^2) gradients for one critic minibatch; `loss` is
// the unscaled half-MSE.
struct ValueGrads {
  std::vector<Matrix> grads;  // order of value_params()
  double loss = 0.0;
};
ValueGrads value_minibatch_grads(const ValueNet& critic, const Matrix& obs,
                                 const Eigen::VectorXd& returns, double coef);

// Sample-std normalization with a 1e-8 guard; singletons pass through.
Eigen::VectorXd normalize_advantages(const Eigen::VectorXd& adv);

// Running reward normalization as in the common PPO baselines: rewards are
// divided by the standard deviation of a running discounted-return estimate
// (and clipped to [-10, 10]) before entering the rollout buffer, so value
// targets stay O(1) regardless of farm size or wind speed. Evaluation and the
// metrics log always use raw environment rewards. Deterministic: same reward
// stream, same scaling.
class RewardNormalizer {
 public:
  explicit RewardNormalizer(double gamma) : gamma_(gamma) {}

  double normalize(double reward, bool done) {
    ret_ = ret_ * gamma_ + reward;
    count_ += 1.0;
    const double delta = ret_ - mean_;
    mean_ += delta / count_;
    m2_ += delta * (ret_ - mean_);
    if (done) ret_ = 0.0;
    const double var = count_ > 1.0 ? m2_ / count_ : 1.0;
    const double scaled = reward / std::sqrt(var + 1e-8);
    return std::clamp(scaled, -10.0, 10.0);
  }

 private:
  double gamma_;
  double ret_ = 0.0;     // running discounted return
  double mean_ = 0.0;    // Welford state over observed returns
  double m2_ = 0.0;
  double count_ = 0.0;
};

// Both of the above in one call (the single-agent PPO minibatch). Exposed so
// tests can pin the clip semantics directly.
struct MinibatchGrads {
  std::vector<Matrix> policy_grads;  // order of policy_params()
  std::vector<Matrix> value_grads;   // order of value_params()
  PpoDiagnostics diag;
};
MinibatchGrads ppo_minibatch_grads(const PolicyNet& policy, const ValueNet& critic,
                                   const Matrix& obs, const Matrix& actions,
                                   const Eigen::VectorXd& old_log_probs,
                                   const Eigen::VectorXd& advantages,
                                   const Eigen::VectorXd& returns,
                                   const PpoConfig& cfg);

// Full PPO update for one actor-critic pair: GAE, then epochs x minibatches
// with per-minibatch advantage normalization, joint actor+critic gradient-norm
// clipping and one LrSchedule tick per minibatch. Throws std::runtime_error
// (with diagnostics in the message) if any loss goes non-finite.
PpoDiagnostics ppo_update(PolicyNet& policy, ValueNet& critic, Adam& policy_opt,
                          Adam& critic_opt, const AgentBuffer& buffer,
                          const PpoConfig& cfg, LrSchedule& schedule, Rng& rng);

// ---------------------------------------------------------------------------
// Trained-agent bundle + checkpoint io.

struct TrainedAgents {
  SimulatorKind kind = SimulatorKind::kStatic;
  int num_agents = 0;
  int obs_dim = 0;
  int act_dim = 0;
  bool shared_critic = false;            // MAPPO: critics.size() == 1
  std::vector<double> action_scale;      // env action_high per dimension
  std::vector<PolicyNet> policies;       // one per agent
  std::vector<ValueNet> critics;         // M (IPPO) or 1 (MAPPO)
};

// Versioned flat binary of parameter tensors + a text manifest, both under
// `dir`. Round-trips are bit-exact.
void save_agents(const std::string& dir, const TrainedAgents& agents);
TrainedAgents load_agents(const std::string& dir);

// Deterministic env-unit actions: clamp(mean, -1, 1) * action_scale.
std::vector<std::vector<double>> deterministic_actions(
    const TrainedAgents& agents, const std::vector<std::vector<double>>& raw_obs);

// ---------------------------------------------------------------------------
// Trainers.

using EnvFactory = std::function<std::shared_ptr<FarmEnv>()>;
// Factory from a registered decentralized env id (throws if not "Dec_...").
EnvFactory env_factory_from_id(const std::string& env_id,
                               const std::map<std::string, std::string>& overrides = {});

struct TrainConfig {
  PpoConfig ppo;
  int num_steps = 2048;  // rollout length between updates
  int eval_every = 5;    // updates between deterministic evaluations
  int eval_horizon = 150;
  std::uint64_t eval_seed = 0;
};

struct MetricsRow {
  int update = 0;
  long long step = 0;
  double score = 0.0;       // deterministic-policy episode return
  double power_sum = 0.0;   // summed power_total_w over the eval episode
  double load_raw = 0.0;    // summed load_raw over the eval episode
  double kl = 0.0;          // mean approx KL of the latest update
  double clipfrac = 0.0;
};
std::string metrics_to_csv(const std::vector<MetricsRow>& rows);
std::vector<MetricsRow> metrics_from_csv(const std::string& text);

struct TrainResult {
  TrainedAgents agents;
  std::vector<MetricsRow> metrics;
};

TrainResult train_ippo(const EnvFactory& factory, const TrainConfig& cfg,
                       long long total_steps, std::uint64_t seed);
TrainResult train_mappo(const EnvFactory& factory, const TrainConfig& cfg,
                        long long total_steps, std::uint64_t seed);

// Deterministic-policy episode on a fresh env: summed reward, power and load.
struct EpisodeStats {
  double episode_return = 0.0;
  double power_sum_w = 0.0;
  double load_sum = 0.0;
};
EpisodeStats run_deterministic_episode(FarmEnv& env, const TrainedAgents& agents,
                                       std::uint64_t seed, int horizon);

}  // namespace windlab::marl
