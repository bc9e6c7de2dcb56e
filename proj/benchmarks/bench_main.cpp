#include <benchmark/benchmark.h>

#include "score/agent.hpp"
#include "score/bellman.hpp"
#include "score/chain_mdp.hpp"
#include "score/dataset.hpp"
#include "score/nn.hpp"
#include "score/opo.hpp"
#include "score/pessimism.hpp"

namespace score {
namespace {

// Critic shape used in training: [obs; act] -> width x 2 -> 1, one batch.
void BM_CriticForwardBackward(benchmark::State& state) {
  const int width = static_cast<int>(state.range(0));
  Rng rng = make_rng(1);
  Mlp net = Mlp::initialized({6, width, width, 1}, Activation::kIdentity, rng);
  const Eigen::MatrixXd x = Eigen::MatrixXd::Random(6, 256);
  const Eigen::MatrixXd g = Eigen::MatrixXd::Random(1, 256);
  MlpCache cache;
  for (auto _ : state) {
    net.forward(x, cache);
    benchmark::DoNotOptimize(net.backward(cache, g));
  }
}
BENCHMARK(BM_CriticForwardBackward)->Arg(64)->Arg(256);

void BM_TrainerStep(benchmark::State& state) {
  const OfflineDataset data =
      generate_dataset(scripted_policy(BehaviorPolicySpec::default_spec(BehaviorKind::kMediumReplayMix)), 20'000, 0);
  EnvReference ref;
  ref.env_id = PointMassEnv::kEnvId;
  ref.random_ref = -300.0;
  ref.expert_ref = -10.0;
  ScoreConfig c;
  c.steps_per_epoch = 1'000'000;
  ScoreTrainer trainer(data, ref, c, 1);
  for (auto _ : state) trainer.step();
}
BENCHMARK(BM_TrainerStep)->Unit(benchmark::kMillisecond);

void BM_ExactValueIteration(benchmark::State& state) {
  Rng rng = make_rng(2);
  const TabularMdp mdp = random_mdp(static_cast<int>(state.range(0)), 4, rng);
  for (auto _ : state) benchmark::DoNotOptimize(exact_value_iteration(mdp, 1e-10));
}
BENCHMARK(BM_ExactValueIteration)->Arg(10)->Arg(50);

void BM_PessimisticValueIteration(benchmark::State& state) {
  Rng rng = make_rng(3);
  const TabularMdp mdp = random_mdp(20, 4, rng);
  const TabularDataset data = sample_uniform_dataset(mdp, 20, rng);
  const UncertaintyTable u = hoeffding_uncertainty(data, mdp.v_max(), 0.1);
  for (auto _ : state) benchmark::DoNotOptimize(pessimistic_value_iteration(data, u, mdp.gamma(), 1e-10));
}
BENCHMARK(BM_PessimisticValueIteration);

void BM_RunOpo(benchmark::State& state) {
  Rng rng = make_rng(7);
  RandomMdpOptions opt;
  opt.denominator = 10;
  const TabularMdp mdp = random_mdp(5, 3, rng, opt);
  const TabularDataset data = perfect_dataset(mdp, 10);
  OpoConfig c;
  c.K = static_cast<int>(state.range(0));
  c.alpha = 0.7;
  c.zero_uncertainty = true;
  for (auto _ : state) benchmark::DoNotOptimize(run_opo(mdp, data, SoftmaxPolicy::uniform(5, 3), c));
}
BENCHMARK(BM_RunOpo)->Arg(100)->Arg(400)->Unit(benchmark::kMillisecond);

void BM_SpuriousDemo(benchmark::State& state) {
  SpuriousDemoConfig c;
  c.trials = 100;
  for (auto _ : state) benchmark::DoNotOptimize(spurious_correlation_demo(c));
}
BENCHMARK(BM_SpuriousDemo)->Unit(benchmark::kMillisecond);

void BM_GenerateDataset(benchmark::State& state) {
  const ScriptedPolicy policy = scripted_policy(BehaviorPolicySpec::default_spec(BehaviorKind::kMedium));
  for (auto _ : state) benchmark::DoNotOptimize(generate_dataset(policy, 10'000, 4));
}
BENCHMARK(BM_GenerateDataset)->Unit(benchmark::kMillisecond);

}  // namespace
}  // namespace score
BENCHMARK_MAIN();
