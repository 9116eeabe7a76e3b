// Microbenchmarks for the hot paths: steady farm solves, dynamic stepping,
// environment steps, PPO minibatch updates and wire-frame codecs.
#include <benchmark/benchmark.h>

#include "windlab/cosim.hpp"
#include "windlab/dynsim.hpp"
#include "windlab/env.hpp"
#include "windlab/layouts.hpp"
#include "windlab/marl.hpp"
#include "windlab/wake.hpp"

namespace {

using namespace windlab;

void BM_SolveFarmRow(benchmark::State& state) {
  const int m = static_cast<int>(state.range(0));
  const FarmLayout layout = make_row_layout(m);
  const std::vector<double> yaws(m, 10.0);
  const FreeStreamConditions cond{8.0, 270.0, 0.06};
  for (auto _ : state) {
    benchmark::DoNotOptimize(solve_farm(layout, yaws, cond));
  }
  state.SetItemsProcessed(state.iterations() * m);
}
BENCHMARK(BM_SolveFarmRow)->Arg(3)->Arg(12);

void BM_SolveFarmRegistered(benchmark::State& state) {
  const FarmLayout layout =
      load_layout(registered_layouts()[static_cast<std::size_t>(state.range(0))]);
  const std::vector<double> yaws(layout.count(), 0.0);
  const FreeStreamConditions cond{8.0, layout.prevailing_phi, 0.06};
  for (auto _ : state) {
    benchmark::DoNotOptimize(solve_farm(layout, yaws, cond));
  }
  state.SetLabel(layout.name);
  state.SetItemsProcessed(state.iterations() * layout.count());
}
// Index 20 = HornsRev2 (91 turbines), the heaviest registered solve.
BENCHMARK(BM_SolveFarmRegistered)->Arg(20);

void BM_DynSimStep(benchmark::State& state) {
  const int m = static_cast<int>(state.range(0));
  DynFarmSim sim(make_row_layout(m), WindScenarioConfig{});
  sim.reset(1);
  std::vector<TurbineCommand> cmd(m);
  for (int i = 0; i < m; ++i) cmd[i].yaw_target_deg = (i % 2 == 0) ? 15.0 : -15.0;
  for (auto _ : state) {
    sim.apply_commands(cmd);
    benchmark::DoNotOptimize(sim.measures());
  }
  state.SetItemsProcessed(state.iterations() * m);
}
BENCHMARK(BM_DynSimStep)->Arg(3)->Arg(12);

void BM_EnvStep(benchmark::State& state) {
  MadeEnv made = make_env(state.range(0) == 0 ? "Dec_Turb3_Row1_Static"
                                              : "Dec_Turb3_Row1_Dynamic");
  FarmEnv& env = *made.agents;
  env.reset(1);
  const std::vector<std::vector<double>> acts(
      env.num_agents(), std::vector<double>(env.action_dim(), 0.5));
  for (auto _ : state) {
    if (env.terminated()) env.reset(1);
    benchmark::DoNotOptimize(env.step(acts));
  }
  state.SetLabel(state.range(0) == 0 ? "static" : "dynamic");
}
BENCHMARK(BM_EnvStep)->Arg(0)->Arg(1);

void BM_PpoMinibatchGrads(benchmark::State& state) {
  Rng rng(7);
  marl::PolicyNet policy = marl::make_policy(4, 1, rng);
  marl::ValueNet critic = marl::make_value(4, rng);
  const int n = 64;
  marl::Matrix obs(n, 4), act(n, 1);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < 4; ++j) obs(i, j) = rng.normal();
    act(i, 0) = rng.normal();
  }
  const Eigen::VectorXd logp =
      marl::gaussian_log_prob(marl::mlp_forward(policy.mlp, obs), policy.log_std, act);
  Eigen::VectorXd adv(n), ret(n);
  for (int i = 0; i < n; ++i) {
    adv(i) = rng.normal();
    ret(i) = rng.normal();
  }
  const marl::PpoConfig cfg;
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        marl::ppo_minibatch_grads(policy, critic, obs, act, logp, adv, ret, cfg));
  }
  state.SetItemsProcessed(state.iterations() * n);
}
BENCHMARK(BM_PpoMinibatchGrads);

void BM_FrameRoundTrip(benchmark::State& state) {
  const int m = static_cast<int>(state.range(0));
  Rng rng(3);
  MeasureFrame frame;
  frame.step = 42;
  frame.measures.resize(m);
  for (auto& ms : frame.measures) {
    ms.wind_speed = rng.uniform(3.0, 12.0);
    ms.wind_dir = rng.uniform(0.0, 360.0);
    ms.power_w = rng.uniform(0.0, 5e6);
    for (double& v : ms.mop) v = rng.uniform(-1e7, 1e7);
    for (double& v : ms.mip) v = rng.uniform(-1e6, 1e6);
  }
  for (auto _ : state) {
    benchmark::DoNotOptimize(decode_measure(encode(frame)));
  }
  state.SetBytesProcessed(state.iterations() * static_cast<long long>(encode(frame).size()));
}
BENCHMARK(BM_FrameRoundTrip)->Arg(3)->Arg(91);

}  // namespace

BENCHMARK_MAIN();
