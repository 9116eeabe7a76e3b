#include "windlab/marl.hpp"

#include <cmath>
#include <sstream>

namespace windlab::marl {

namespace {
constexpr double kLog2Pi = 1.8378770664093453;  // log(2*pi)
}

// ---------------------------------------------------------------------------
// Tape.

Tape::Var Tape::push(Matrix value, std::function<void(Tape&, const Node&)> back) {
  Node node;
  node.grad = Matrix::Zero(value.rows(), value.cols());
  node.value = std::move(value);
  node.back = std::move(back);
  nodes_.push_back(std::move(node));
  return static_cast<Var>(nodes_.size()) - 1;
}

Tape::Var Tape::leaf(Matrix value) { return push(std::move(value), nullptr); }

Tape::Var Tape::matmul(Var a, Var b) {
  const Matrix& av = nodes_[a].value;
  const Matrix& bv = nodes_[b].value;
  if (av.cols() != bv.rows()) throw std::invalid_argument("matmul: inner dimensions differ");
  return push(av * bv, [a, b](Tape& t, const Node& out) {
    t.nodes_[a].grad.noalias() += out.grad * t.nodes_[b].value.transpose();
    t.nodes_[b].grad.noalias() += t.nodes_[a].value.transpose() * out.grad;
  });
}

Tape::Var Tape::add(Var a, Var b) {
  const Matrix& av = nodes_[a].value;
  const Matrix& bv = nodes_[b].value;
  if (av.rows() == bv.rows() && av.cols() == bv.cols()) {
    return push(av + bv, [a, b](Tape& t, const Node& out) {
      t.nodes_[a].grad += out.grad;
      t.nodes_[b].grad += out.grad;
    });
  }
  if (bv.rows() == 1 && av.cols() == bv.cols()) {  // broadcast row vector
    return push(av.rowwise() + bv.row(0), [a, b](Tape& t, const Node& out) {
      t.nodes_[a].grad += out.grad;
      t.nodes_[b].grad += out.grad.colwise().sum();
    });
  }
  throw std::invalid_argument("add: incompatible shapes");
}

Tape::Var Tape::sub(Var a, Var b) {
  const Matrix& av = nodes_[a].value;
  const Matrix& bv = nodes_[b].value;
  if (av.rows() != bv.rows() || av.cols() != bv.cols())
    throw std::invalid_argument("sub: incompatible shapes");
  return push(av - bv, [a, b](Tape& t, const Node& out) {
    t.nodes_[a].grad += out.grad;
    t.nodes_[b].grad -= out.grad;
  });
}

Tape::Var Tape::mul(Var a, Var b) {
  const Matrix& av = nodes_[a].value;
  const Matrix& bv = nodes_[b].value;
  if (av.rows() != bv.rows() || av.cols() != bv.cols())
    throw std::invalid_argument("mul: incompatible shapes");
  return push(av.cwiseProduct(bv), [a, b](Tape& t, const Node& out) {
    t.nodes_[a].grad.array() += out.grad.array() * t.nodes_[b].value.array();
    t.nodes_[b].grad.array() += out.grad.array() * t.nodes_[a].value.array();
  });
}

Tape::Var Tape::scale(Var a, double c) {
  return push(nodes_[a].value * c,
              [a, c](Tape& t, const Node& out) { t.nodes_[a].grad += c * out.grad; });
}

Tape::Var Tape::add_scalar(Var a, double c) {
  return push(nodes_[a].value.array() + c,
              [a](Tape& t, const Node& out) { t.nodes_[a].grad += out.grad; });
}

Tape::Var Tape::tanh(Var a) {
  return push(nodes_[a].value.array().tanh(), [a](Tape& t, const Node& out) {
    t.nodes_[a].grad.array() += out.grad.array() * (1.0 - out.value.array().square());
  });
}

Tape::Var Tape::exp(Var a) {
  return push(nodes_[a].value.array().exp(), [a](Tape& t, const Node& out) {
    t.nodes_[a].grad.array() += out.grad.array() * out.value.array();
  });
}

Tape::Var Tape::log(Var a) {
  return push(nodes_[a].value.array().log(), [a](Tape& t, const Node& out) {
    t.nodes_[a].grad.array() += out.grad.array() / t.nodes_[a].value.array();
  });
}

Tape::Var Tape::square(Var a) {
  return push(nodes_[a].value.array().square(), [a](Tape& t, const Node& out) {
    t.nodes_[a].grad.array() += out.grad.array() * 2.0 * t.nodes_[a].value.array();
  });
}

Tape::Var Tape::clip(Var a, double lo, double hi) {
  return push(nodes_[a].value.array().max(lo).min(hi), [a, lo, hi](Tape& t, const Node& out) {
    const auto& x = t.nodes_[a].value.array();
    const Eigen::ArrayXXd pass = ((x >= lo) && (x <= hi)).cast<double>();
    t.nodes_[a].grad.array() += out.grad.array() * pass;
  });
}

Tape::Var Tape::minimum(Var a, Var b) {
  const Matrix& av = nodes_[a].value;
  const Matrix& bv = nodes_[b].value;
  if (av.rows() != bv.rows() || av.cols() != bv.cols())
    throw std::invalid_argument("minimum: incompatible shapes");
  return push(av.cwiseMin(bv), [a, b](Tape& t, const Node& out) {
    const Eigen::ArrayXXd take_a =
        (t.nodes_[a].value.array() <= t.nodes_[b].value.array()).cast<double>();
    t.nodes_[a].grad.array() += out.grad.array() * take_a;
    t.nodes_[b].grad.array() += out.grad.array() * (1.0 - take_a);
  });
}

Tape::Var Tape::row_sum(Var a) {
  return push(nodes_[a].value.rowwise().sum(), [a](Tape& t, const Node& out) {
    t.nodes_[a].grad.colwise() += out.grad.col(0);
  });
}

Tape::Var Tape::mean_all(Var a) {
  Matrix m(1, 1);
  m(0, 0) = nodes_[a].value.mean();
  return push(std::move(m), [a](Tape& t, const Node& out) {
    const double g = out.grad(0, 0) / static_cast<double>(t.nodes_[a].value.size());
    t.nodes_[a].grad.array() += g;
  });
}

void Tape::backward(Var loss) {
  Node& top = nodes_[loss];
  if (top.value.rows() != 1 || top.value.cols() != 1)
    throw std::invalid_argument("backward: loss node must be 1x1");
  if (!std::isfinite(top.value(0, 0)))
    throw std::runtime_error("backward: non-finite loss value " +
                             std::to_string(top.value(0, 0)));
  top.grad(0, 0) = 1.0;
  for (int i = static_cast<int>(nodes_.size()) - 1; i >= 0; --i)
    if (nodes_[i].back) nodes_[i].back(*this, nodes_[i]);
}

// ---------------------------------------------------------------------------
// Networks.

Matrix orthogonal(int rows, int cols, double gain, Rng& rng) {
  const int r = std::max(rows, cols), c = std::min(rows, cols);
  Matrix a(r, c);
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) a(i, j) = rng.normal();
  const Eigen::HouseholderQR<Matrix> qr(a);
  Matrix q = qr.householderQ() * Matrix::Identity(r, c);
  const Matrix rmat = qr.matrixQR().topRows(c).triangularView<Eigen::Upper>();
  for (int j = 0; j < c; ++j)
    if (rmat(j, j) < 0.0) q.col(j) = -q.col(j);
  if (rows < cols) q = q.transpose().eval();
  return gain * q;
}

Mlp make_mlp(int in, int out, double out_gain, Rng& rng, int hidden) {
  Mlp net;
  const double g = std::sqrt(2.0);
  net.w1 = orthogonal(in, hidden, g, rng);
  net.b1 = Matrix::Zero(1, hidden);
  net.w2 = orthogonal(hidden, hidden, g, rng);
  net.b2 = Matrix::Zero(1, hidden);
  net.w3 = orthogonal(hidden, out, out_gain, rng);
  net.b3 = Matrix::Zero(1, out);
  return net;
}

PolicyNet make_policy(int obs_dim, int act_dim, Rng& rng) {
  PolicyNet p;
  p.mlp = make_mlp(obs_dim, act_dim, 0.01, rng);
  p.log_std = Matrix::Zero(1, act_dim);
  return p;
}

ValueNet make_value(int obs_dim, Rng& rng) {
  ValueNet v;
  v.mlp = make_mlp(obs_dim, 1, 1.0, rng);
  return v;
}

Matrix mlp_forward(const Mlp& net, const Matrix& x) {
  if (x.cols() != net.w1.rows())
    throw std::invalid_argument("mlp_forward: input dimension mismatch");
  const Matrix h1 = ((x * net.w1).rowwise() + net.b1.row(0)).array().tanh();
  const Matrix h2 = ((h1 * net.w2).rowwise() + net.b2.row(0)).array().tanh();
  return (h2 * net.w3).rowwise() + net.b3.row(0);
}

Tape::Var mlp_forward(Tape& tape, const Mlp& net, Tape::Var x,
                      std::vector<Tape::Var>& param_vars) {
  if (tape.value(x).cols() != net.w1.rows())
    throw std::invalid_argument("mlp_forward: input dimension mismatch");
  const Tape::Var w1 = tape.leaf(net.w1), b1 = tape.leaf(net.b1);
  const Tape::Var w2 = tape.leaf(net.w2), b2 = tape.leaf(net.b2);
  const Tape::Var w3 = tape.leaf(net.w3), b3 = tape.leaf(net.b3);
  param_vars.insert(param_vars.end(), {w1, b1, w2, b2, w3, b3});
  const Tape::Var h1 = tape.tanh(tape.add(tape.matmul(x, w1), b1));
  const Tape::Var h2 = tape.tanh(tape.add(tape.matmul(h1, w2), b2));
  return tape.add(tape.matmul(h2, w3), b3);
}

std::vector<Matrix*> mlp_params(Mlp& net) {
  return {&net.w1, &net.b1, &net.w2, &net.b2, &net.w3, &net.b3};
}

std::vector<Matrix*> policy_params(PolicyNet& net) {
  std::vector<Matrix*> p = mlp_params(net.mlp);
  p.push_back(&net.log_std);
  return p;
}

std::vector<Matrix*> value_params(ValueNet& net) { return mlp_params(net.mlp); }

Eigen::VectorXd gaussian_log_prob(const Matrix& mean, const Matrix& log_std,
                                  const Matrix& actions) {
  if (mean.rows() != actions.rows() || mean.cols() != actions.cols() ||
      log_std.cols() != mean.cols())
    throw std::invalid_argument("gaussian_log_prob: shape mismatch");
  const int d = static_cast<int>(mean.cols());
  Eigen::VectorXd out(mean.rows());
  for (Eigen::Index i = 0; i < mean.rows(); ++i) {
    double lp = -0.5 * d * kLog2Pi;
    for (int j = 0; j < d; ++j) {
      const double z = (actions(i, j) - mean(i, j)) * std::exp(-log_std(0, j));
      lp -= 0.5 * z * z + log_std(0, j);
    }
    out(i) = lp;
  }
  return out;
}

// ---------------------------------------------------------------------------
// GAE.

GaeResult gae(const std::vector<double>& rewards, const std::vector<double>& values,
              const std::vector<double>& dones, double bootstrap_value, double gamma,
              double lambda) {
  const std::size_t n = rewards.size();
  if (values.size() != n || dones.size() != n)
    throw std::invalid_argument("gae: sequence lengths differ");
  GaeResult out;
  out.advantages.resize(n);
  out.returns.resize(n);
  double last = 0.0;
  for (std::size_t k = n; k-- > 0;) {
    const double nonterminal = 1.0 - dones[k];
    const double next_value = (k + 1 < n) ? values[k + 1] : bootstrap_value;
    const double delta = rewards[k] + gamma * next_value * nonterminal - values[k];
    last = delta + gamma * lambda * nonterminal * last;
    out.advantages[k] = last;
    out.returns[k] = last + values[k];
  }
  return out;
}

// ---------------------------------------------------------------------------
// Optimizer.

Adam::Adam(const std::vector<Matrix*>& params, double eps) : params_(params), eps_(eps) {
  for (const Matrix* p : params_) {
    m_.push_back(Matrix::Zero(p->rows(), p->cols()));
    v_.push_back(Matrix::Zero(p->rows(), p->cols()));
  }
}

void Adam::step(const std::vector<Matrix>& grads, double lr) {
  if (grads.size() != params_.size()) throw std::invalid_argument("Adam: gradient count");
  ++t_;
  const double b1 = 0.9, b2 = 0.999;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Matrix& p = *params_[i];
    if (grads[i].rows() != p.rows() || grads[i].cols() != p.cols())
      throw std::invalid_argument("Adam: gradient shape");
    m_[i] = b1 * m_[i] + (1.0 - b1) * grads[i];
    v_[i].array() = b2 * v_[i].array() + (1.0 - b2) * grads[i].array().square();
    p.array() -= lr * (m_[i].array() / c1) / ((v_[i].array() / c2).sqrt() + eps_);
  }
}

double global_norm(const std::vector<Matrix>& grads) {
  double sq = 0.0;
  for (const Matrix& g : grads) sq += g.squaredNorm();
  return std::sqrt(sq);
}

void clip_global_norm(std::vector<Matrix>& grads, double max_norm) {
  const double norm = global_norm(grads);
  if (norm > max_norm && norm > 0.0) {
    const double f = max_norm / norm;
    for (Matrix& g : grads) g *= f;
  }
}

double LrSchedule::next() {
  const double frac =
      total_ > 0 ? std::max(0.0, 1.0 - static_cast<double>(used_) / static_cast<double>(total_))
                 : 1.0;
  ++used_;
  return lr0_ * frac;
}

// ---------------------------------------------------------------------------
// PPO losses.

PolicyGrads policy_minibatch_grads(const PolicyNet& policy, const Matrix& obs,
                                   const Matrix& actions, const Eigen::VectorXd& old_log_probs,
                                   const Eigen::VectorXd& advantages, double clip_eps,
                                   double entropy_coef) {
  const int batch = static_cast<int>(obs.rows());
  const int d = policy.mlp.out_dim();
  Tape t;
  std::vector<Tape::Var> params;
  const Tape::Var x = t.leaf(obs);
  const Tape::Var mu = mlp_forward(t, policy.mlp, x, params);
  const Tape::Var log_std = t.leaf(policy.log_std);
  params.push_back(log_std);

  const Tape::Var log_std_b = t.add(t.leaf(Matrix::Zero(batch, d)), log_std);
  const Tape::Var diff = t.sub(t.leaf(actions), mu);
  const Tape::Var z = t.mul(diff, t.exp(t.neg(log_std_b)));
  const Tape::Var per_dim = t.add(t.scale(t.square(z), 0.5), log_std_b);
  const Tape::Var log_prob = t.add_scalar(t.neg(t.row_sum(per_dim)), -0.5 * d * kLog2Pi);

  const Tape::Var log_ratio = t.sub(log_prob, t.leaf(old_log_probs));
  const Tape::Var ratio = t.exp(log_ratio);
  const Tape::Var adv = t.leaf(advantages);
  const Tape::Var surr1 = t.mul(ratio, adv);
  const Tape::Var surr2 = t.mul(t.clip(ratio, 1.0 - clip_eps, 1.0 + clip_eps), adv);
  Tape::Var loss = t.neg(t.mean_all(t.minimum(surr1, surr2)));
  Tape::Var entropy = -1;
  if (entropy_coef != 0.0) {
    // Diagonal-Gaussian entropy: sum_d(log_std + (1 + log 2*pi)/2) per sample.
    entropy = t.add_scalar(t.mean_all(t.row_sum(log_std_b)), 0.5 * d * (1.0 + kLog2Pi));
    loss = t.add(loss, t.scale(entropy, -entropy_coef));
  }
  t.backward(loss);

  PolicyGrads out;
  for (const Tape::Var v : params) out.grads.push_back(t.grad(v));
  out.loss = t.value(loss)(0, 0);
  const auto ratio_a = t.value(ratio).array();
  const auto logratio_a = t.value(log_ratio).array();
  out.approx_kl = ((ratio_a - 1.0) - logratio_a).mean();
  out.clip_fraction = ((ratio_a - 1.0).abs() > clip_eps).cast<double>().mean();
  out.entropy = entropy >= 0 ? t.value(entropy)(0, 0) : 0.0;
  return out;
}

ValueGrads value_minibatch_grads(const ValueNet& critic, const Matrix& obs,
                                 const Eigen::VectorXd& returns, double coef) {
  Tape t;
  std::vector<Tape::Var> params;
  const Tape::Var x = t.leaf(obs);
  const Tape::Var v = mlp_forward(t, critic.mlp, x, params);
  const Tape::Var err = t.sub(v, t.leaf(returns));
  const Tape::Var half_mse = t.scale(t.mean_all(t.square(err)), 0.5);
  const Tape::Var loss = t.scale(half_mse, coef);
  t.backward(loss);
  ValueGrads out;
  for (const Tape::Var p : params) out.grads.push_back(t.grad(p));
  out.loss = t.value(half_mse)(0, 0);
  return out;
}

Eigen::VectorXd normalize_advantages(const Eigen::VectorXd& adv) {
  if (adv.size() < 2) return adv;  // a singleton has no spread to normalize
  const double mean = adv.mean();
  const double var = (adv.array() - mean).square().sum() / static_cast<double>(adv.size() - 1);
  return (adv.array() - mean) / (std::sqrt(var) + 1e-8);
}

MinibatchGrads ppo_minibatch_grads(const PolicyNet& policy, const ValueNet& critic,
                                   const Matrix& obs, const Matrix& actions,
                                   const Eigen::VectorXd& old_log_probs,
                                   const Eigen::VectorXd& advantages,
                                   const Eigen::VectorXd& returns, const PpoConfig& cfg) {
  PolicyGrads pg = policy_minibatch_grads(policy, obs, actions, old_log_probs, advantages,
                                          cfg.clip, cfg.entropy_coef);
  ValueGrads vg = value_minibatch_grads(critic, obs, returns, cfg.vf_coef);
  MinibatchGrads out;
  out.policy_grads = std::move(pg.grads);
  out.value_grads = std::move(vg.grads);
  out.diag = {pg.loss, vg.loss, pg.approx_kl, pg.clip_fraction};
  return out;
}

PpoDiagnostics ppo_update(PolicyNet& policy, ValueNet& critic, Adam& policy_opt,
                          Adam& critic_opt, const AgentBuffer& buffer, const PpoConfig& cfg,
                          LrSchedule& schedule, Rng& rng) {
  const int n = buffer.size();
  if (n <= 0) throw std::invalid_argument("ppo_update: empty buffer");
  if (static_cast<int>(buffer.log_probs.size()) != n ||
      static_cast<int>(buffer.rewards.size()) != n ||
      static_cast<int>(buffer.values.size()) != n ||
      static_cast<int>(buffer.dones.size()) != n ||
      buffer.actions.rows() != n)
    throw std::invalid_argument("ppo_update: buffer field lengths differ");
  const int mb = std::min(cfg.minibatch_size, n);
  if (n % mb != 0)
    throw std::invalid_argument("ppo_update: buffer size not divisible by minibatch size");
  const int num_minibatches = n / mb;

  const GaeResult g =
      gae(buffer.rewards, buffer.values, buffer.dones, buffer.bootstrap_value, cfg.gamma,
          cfg.lambda);

  std::vector<int> order(n);
  for (int i = 0; i < n; ++i) order[i] = i;

  PpoDiagnostics mean{};
  int rounds = 0;
  Matrix mb_obs(mb, buffer.obs.cols()), mb_act(mb, buffer.actions.cols());
  Eigen::VectorXd mb_logp(mb), mb_adv(mb), mb_ret(mb);
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (int i = n - 1; i > 0; --i)
      std::swap(order[i], order[rng.integer(static_cast<std::uint64_t>(i) + 1)]);
    for (int m = 0; m < num_minibatches; ++m) {
      for (int r = 0; r < mb; ++r) {
        const int src = order[m * mb + r];
        mb_obs.row(r) = buffer.obs.row(src);
        mb_act.row(r) = buffer.actions.row(src);
        mb_logp(r) = buffer.log_probs[src];
        mb_adv(r) = g.advantages[src];
        mb_ret(r) = g.returns[src];
      }
      MinibatchGrads grads = ppo_minibatch_grads(policy, critic, mb_obs, mb_act, mb_logp,
                                                 normalize_advantages(mb_adv), mb_ret, cfg);
      if (!std::isfinite(grads.diag.policy_loss) || !std::isfinite(grads.diag.value_loss)) {
        std::ostringstream msg;
        msg << "ppo_update: non-finite loss (policy " << grads.diag.policy_loss << ", value "
            << grads.diag.value_loss << ", kl " << grads.diag.approx_kl << ")";
        throw std::runtime_error(msg.str());
      }
      // Joint actor+critic gradient clipping, as if both were one parameter set.
      double sq = 0.0;
      for (const Matrix& gm : grads.policy_grads) sq += gm.squaredNorm();
      for (const Matrix& gm : grads.value_grads) sq += gm.squaredNorm();
      const double norm = std::sqrt(sq);
      if (norm > cfg.max_grad_norm && norm > 0.0) {
        const double f = cfg.max_grad_norm / norm;
        for (Matrix& gm : grads.policy_grads) gm *= f;
        for (Matrix& gm : grads.value_grads) gm *= f;
      }
      const double lr = schedule.next();
      policy_opt.step(grads.policy_grads, lr);
      critic_opt.step(grads.value_grads, lr);
      mean.policy_loss += grads.diag.policy_loss;
      mean.value_loss += grads.diag.value_loss;
      mean.approx_kl += grads.diag.approx_kl;
      mean.clip_fraction += grads.diag.clip_fraction;
      ++rounds;
    }
  }
  mean.policy_loss /= rounds;
  mean.value_loss /= rounds;
  mean.approx_kl /= rounds;
  mean.clip_fraction /= rounds;
  return mean;
}

}  // namespace windlab::marl
