#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "score/agent.hpp"
#include "score/error.hpp"
#include "score/stats.hpp"

namespace score {
namespace {

std::vector<Mlp> random_ensemble(int m, int in, Rng& rng, int width = 8) {
  std::vector<Mlp> nets;
  for (int i = 0; i < m; ++i) nets.push_back(Mlp::initialized({in, width, 1}, Activation::kIdentity, rng));
  return nets;
}

Batch random_batch(int obs_dim, int act_dim, int n, Rng& rng) {
  Batch b;
  b.obs = Eigen::MatrixXd::Random(obs_dim, n);
  b.act = Eigen::MatrixXd::Random(act_dim, n);
  b.next_obs = Eigen::MatrixXd::Random(obs_dim, n);
  b.reward = Eigen::RowVectorXd::Random(n);
  b.not_done = Eigen::RowVectorXd::Ones(n);
  std::bernoulli_distribution done(0.2);
  for (int j = 0; j < n; ++j) b.not_done(j) = done(rng) ? 0.0 : 1.0;
  return b;
}

// Two-pass population standard deviation, one sample at a time.
Eigen::RowVectorXd two_pass_std(const std::vector<Mlp>& nets, const Eigen::MatrixXd& in) {
  std::vector<Eigen::MatrixXd> outs;
  for (const auto& n : nets) outs.push_back(n.forward(in));
  Eigen::RowVectorXd sd(in.cols());
  for (Eigen::Index j = 0; j < in.cols(); ++j) {
    double m = 0.0;
    for (const auto& o : outs) m += o(0, j);
    m /= static_cast<double>(outs.size());
    double ss = 0.0;
    for (const auto& o : outs) ss += (o(0, j) - m) * (o(0, j) - m);
    sd(j) = std::sqrt(ss / static_cast<double>(outs.size()));
  }
  return sd;
}

const EnvReference& reference() {
  static const EnvReference ref = EnvRegistry::load(default_registry_path()).at(PointMassEnv::kEnvId);
  return ref;
}

const OfflineDataset& small_dataset() {
  static const OfflineDataset data = generate_dataset(
      scripted_policy(BehaviorPolicySpec::default_spec(BehaviorKind::kMediumReplayMix)), 4000, 3);
  return data;
}

ScoreConfig tiny_config() {
  ScoreConfig c;
  c.hidden_width = 16;
  c.batch_size = 32;
  c.total_steps = 200;
  c.steps_per_epoch = 100;
  c.eval_episodes = 2;
  c.d_bc = 50;
  return c;
}

TEST(SmoothedAction, ZeroSigmaIsTargetOutput) {
  Rng rng = make_rng(1);
  const Mlp actor = Mlp::initialized({4, 8, 2}, Activation::kTanh, rng);
  const Eigen::MatrixXd s = Eigen::MatrixXd::Random(4, 10);
  EXPECT_EQ(smoothed_target_action(actor, s, 0.0, 0.5, 1.0, rng), actor_act(actor, s));
}

TEST(SmoothedAction, NoiseClipDominates) {
  Rng rng = make_rng(2);
  const Mlp actor = Mlp::initialized({4, 8, 2}, Activation::kTanh, rng);
  const Eigen::MatrixXd s = Eigen::MatrixXd::Random(4, 500);
  const Eigen::MatrixXd a = smoothed_target_action(actor, s, 10.0, 0.5, 1.0, rng);
  EXPECT_LE((a - actor_act(actor, s)).cwiseAbs().maxCoeff(), 0.5 + 1e-15);
  EXPECT_LE(a.cwiseAbs().maxCoeff(), 1.0);
}

TEST(SmoothedAction, SeededReplayIsBitIdentical) {
  Rng init = make_rng(3);
  const Mlp actor = Mlp::initialized({4, 8, 2}, Activation::kTanh, init);
  const Eigen::MatrixXd s = Eigen::MatrixXd::Random(4, 50);
  Rng r1 = make_rng(99);
  Rng r2 = make_rng(99);
  EXPECT_EQ(smoothed_target_action(actor, s, 0.2, 0.5, 1.0, r1), smoothed_target_action(actor, s, 0.2, 0.5, 1.0, r2));
}

TEST(EnsembleUncertainty, IdenticalCriticsGiveZero) {
  Rng rng = make_rng(4);
  const Mlp c = Mlp::initialized({6, 8, 1}, Activation::kIdentity, rng);
  const std::vector<Mlp> nets(5, c);
  for (int trial = 0; trial < 200; ++trial) {
    ASSERT_EQ(ensemble_uncertainty(nets, Eigen::MatrixXd::Random(4, 7), Eigen::MatrixXd::Random(2, 7)).maxCoeff(), 0.0);
  }
}

TEST(EnsembleUncertainty, PopulationStdOfTwo) {
  Mlp a({3, 1}, Activation::kIdentity);
  Mlp b({3, 1}, Activation::kIdentity);
  b.bias(0)(0) = 2.0;
  const Eigen::RowVectorXd u = ensemble_uncertainty({a, b}, Eigen::MatrixXd::Random(2, 3), Eigen::MatrixXd::Random(1, 3));
  EXPECT_EQ(u, Eigen::RowVectorXd::Ones(3));
}

TEST(EnsembleUncertainty, MatchesTwoPassOracle) {
  Rng rng = make_rng(5);
  const auto nets = random_ensemble(5, 6, rng);
  const Eigen::MatrixXd s = Eigen::MatrixXd::Random(4, 20);
  const Eigen::MatrixXd a = Eigen::MatrixXd::Random(2, 20);
  const Eigen::RowVectorXd u = ensemble_uncertainty(nets, s, a);
  EXPECT_LT((u - two_pass_std(nets, critic_input(s, a))).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(CriticTargets, NoPenaltyNoDiscountIsReward) {
  Rng rng = make_rng(6);
  const auto online = random_ensemble(3, 6, rng);
  const auto targets = random_ensemble(3, 6, rng);
  const Batch b = random_batch(4, 2, 16, rng);
  ScoreConfig c;
  c.beta = 0.0;
  c.discount = 0.0;
  for (const auto& y : critic_targets(online, targets, b, Eigen::MatrixXd::Random(2, 16), c)) EXPECT_EQ(y, b.reward);
}

TEST(CriticTargets, IdenticalCriticsGivePlainTdTarget) {
  Rng rng = make_rng(7);
  const Mlp c0 = Mlp::initialized({6, 8, 1}, Activation::kIdentity, rng);
  const std::vector<Mlp> nets(4, c0);
  const Batch b = random_batch(4, 2, 16, rng);
  const Eigen::MatrixXd a2 = Eigen::MatrixXd::Random(2, 16);
  ScoreConfig c;
  c.beta = 1.0;
  const Eigen::RowVectorXd td =
      b.reward.array() + c.discount * b.not_done.array() * c0.forward(critic_input(b.next_obs, a2)).array();
  for (const auto& y : critic_targets(nets, nets, b, a2, c)) EXPECT_LT((y - td).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(CriticTargets, MatchesHandComposition) {
  Rng rng = make_rng(8);
  const auto online = random_ensemble(5, 6, rng);
  const auto targets = random_ensemble(5, 6, rng);
  const Batch b = random_batch(4, 2, 32, rng);
  const Eigen::MatrixXd a2 = Eigen::MatrixXd::Random(2, 32);
  ScoreConfig c;
  const auto y = critic_targets(online, targets, b, a2, c);
  const Eigen::RowVectorXd u = two_pass_std(online, critic_input(b.obs, b.act));
  for (int i = 0; i < 5; ++i) {
    const Eigen::RowVectorXd q2 = targets[i].forward(critic_input(b.next_obs, a2));
    const Eigen::RowVectorXd hand =
        b.reward.array() + c.discount * b.not_done.array() * q2.array() - c.beta * u.array();
    EXPECT_LT((y[i] - hand).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(CriticTargets, PerturbingOneTargetLeavesOthersUnchanged) {
  Rng rng = make_rng(9);
  const auto online = random_ensemble(5, 6, rng);
  auto targets = random_ensemble(5, 6, rng);
  const Batch b = random_batch(4, 2, 16, rng);
  const Eigen::MatrixXd a2 = Eigen::MatrixXd::Random(2, 16);
  const ScoreConfig c;
  const auto before = critic_targets(online, targets, b, a2, c);
  for (int j = 0; j < 5; ++j) {
    auto perturbed = targets;
    perturbed[j].params().array() += 0.5;
    const auto after = critic_targets(online, perturbed, b, a2, c);
    for (int i = 0; i < 5; ++i) {
      if (i == j) {
        EXPECT_NE(after[i], before[i]);
      } else {
        EXPECT_EQ(after[i], before[i]);
      }
    }
  }
}

TEST(CriticTargets, PenaltyLowersMeanTarget) {
  Rng rng = make_rng(10);
  for (int trial = 0; trial < 20; ++trial) {
    const auto online = random_ensemble(5, 6, rng);
    const auto targets = random_ensemble(5, 6, rng);
    const Batch b = random_batch(4, 2, 16, rng);
    const Eigen::MatrixXd a2 = Eigen::MatrixXd::Random(2, 16);
    ScoreConfig pess;
    ScoreConfig plain;
    plain.beta = 0.0;
    const auto y = critic_targets(online, targets, b, a2, pess);
    const auto y0 = critic_targets(online, targets, b, a2, plain);
    for (int i = 0; i < 5; ++i) EXPECT_LT(y[i].mean(), y0[i].mean());
  }
}

TEST(CriticTargets, MinEnsembleSharesTarget) {
  Rng rng = make_rng(11);
  const auto online = random_ensemble(3, 6, rng);
  const auto targets = random_ensemble(3, 6, rng);
  const Batch b = random_batch(4, 2, 16, rng);
  const Eigen::MatrixXd a2 = Eigen::MatrixXd::Random(2, 16);
  const ScoreConfig c = apply_variant(ScoreConfig{}, "min-q");
  const auto y = critic_targets(online, targets, b, a2, c);
  Eigen::RowVectorXd qmin = targets[0].forward(critic_input(b.next_obs, a2));
  for (int i = 1; i < 3; ++i) qmin = qmin.cwiseMin(targets[i].forward(critic_input(b.next_obs, a2)));
  const Eigen::RowVectorXd hand = b.reward.array() + c.discount * b.not_done.array() * qmin.array();
  for (const auto& yi : y) EXPECT_LT((yi - hand).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(CriticTargets, PenaltyOnNextUsesSuccessorPair) {
  Rng rng = make_rng(12);
  const auto online = random_ensemble(3, 6, rng);
  const auto targets = random_ensemble(3, 6, rng);
  const Batch b = random_batch(4, 2, 16, rng);
  const Eigen::MatrixXd a2 = Eigen::MatrixXd::Random(2, 16);
  const ScoreConfig c = apply_variant(ScoreConfig{}, "penalty-on-next");
  const auto y = critic_targets(online, targets, b, a2, c);
  const Eigen::RowVectorXd u2 = two_pass_std(online, critic_input(b.next_obs, a2));
  for (int i = 0; i < 3; ++i) {
    const Eigen::RowVectorXd q2 = targets[i].forward(critic_input(b.next_obs, a2));
    const Eigen::RowVectorXd hand =
        b.reward.array() + c.discount * b.not_done.array() * (q2.array() - c.beta * u2.array());
    EXPECT_LT((y[i] - hand).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(ActorLoss, LargeLambdaAlignsWithBehaviorCloning) {
  Rng rng = make_rng(13);
  const auto critics = random_ensemble(5, 6, rng);
  const Mlp actor = Mlp::initialized({4, 8, 2}, Activation::kTanh, rng);
  const Batch b = random_batch(4, 2, 64, rng);
  const ActorObjective full = actor_loss(critics, actor, b, 1e6, 2.5);
  // BC-only ascent direction, chained through the actor by hand.
  MlpCache cache;
  const Eigen::MatrixXd out = actor.forward(b.obs, cache);
  const Eigen::VectorXd bc = -actor.backward(cache, (2.0 / 64.0) * (out - b.act)).params;
  EXPECT_GT(full.grad.dot(bc) / (full.grad.norm() * bc.norm()), 0.999);
}

TEST(ActorLoss, GradientMatchesFiniteDifferences) {
  Rng rng = make_rng(14);
  const auto critics = random_ensemble(3, 6, rng);
  Mlp actor = Mlp::initialized({4, 8, 2}, Activation::kTanh, rng);
  const Batch b = random_batch(4, 2, 16, rng);
  for (double lambda : {0.0, 0.7}) {
    const ActorObjective base = actor_loss(critics, actor, b, lambda, 2.5);
    auto min_q = [&](const Mlp& a) {
      const Eigen::MatrixXd pi = actor_act(a, b.obs);
      Eigen::RowVectorXd qmin = critics[0].forward(critic_input(b.obs, pi));
      for (std::size_t i = 1; i < critics.size(); ++i)
        qmin = qmin.cwiseMin(critics[i].forward(critic_input(b.obs, pi)));
      return qmin;
    };
    // Normalizer frozen at the base point.
    const double scale = 2.5 / min_q(actor).cwiseAbs().mean();
    auto objective = [&](const Mlp& a) {
      const Eigen::MatrixXd pi = actor_act(a, b.obs);
      return scale * min_q(a).mean() - lambda * (pi - b.act).colwise().squaredNorm().mean();
    };
    const double h = 1e-6;
    double worst = 0.0;
    for (Eigen::Index k = 0; k < actor.n_params(); ++k) {
      const double keep = actor.params()(k);
      actor.params()(k) = keep + h;
      const double up = objective(actor);
      actor.params()(k) = keep - h;
      const double down = objective(actor);
      actor.params()(k) = keep;
      const double fd = (up - down) / (2 * h);
      worst = std::max(worst, std::abs(fd - base.grad(k)) / std::max({std::abs(fd), std::abs(base.grad(k)), 1e-6}));
    }
    EXPECT_LT(worst, 1e-4) << "lambda " << lambda;
  }
}

TEST(ActorLoss, PerfectImitationHasNoBcTerm) {
  Rng rng = make_rng(15);
  const auto critics = random_ensemble(3, 6, rng);
  const Mlp actor = Mlp::initialized({4, 8, 2}, Activation::kTanh, rng);
  Batch b = random_batch(4, 2, 16, rng);
  b.act = actor_act(actor, b.obs);
  const ActorObjective r = actor_loss(critics, actor, b, 5.0, 0.0);
  EXPECT_EQ(r.bc_term, 0.0);
  EXPECT_EQ(r.grad.cwiseAbs().maxCoeff(), 0.0);
}

TEST(LambdaSchedule, Examples) {
  ScoreConfig c;
  c.lambda0 = 2.0;
  EXPECT_EQ(lambda_schedule(1, c), 2.0);
  EXPECT_EQ(lambda_schedule(9'999, c), 2.0);
  EXPECT_EQ(lambda_schedule(10'000, c), 0.96 * 2.0);
  EXPECT_EQ(lambda_schedule(25'000, c), 0.96 * (0.96 * 2.0));
  c.gamma_bc = 1.0;
  EXPECT_EQ(lambda_schedule(1'000'000, c), 2.0);
}

TEST(LambdaSchedule, MatchesLoopTraceAndIsMonotone) {
  for (double g : {0.96, 0.98, 1.0}) {
    ScoreConfig c;
    c.gamma_bc = g;
    double lambda = c.lambda0;
    double prev = lambda;
    for (long t = 1; t <= 100'000; ++t) {
      if (t % c.d_bc == 0) lambda = c.gamma_bc * lambda;
      ASSERT_EQ(lambda_schedule(t, c), lambda) << t;
      ASSERT_LE(lambda, prev);
      prev = lambda;
    }
  }
}

TEST(Config, ValidationRejectsBadFields) {
  auto bad = [](auto mutate) {
    ScoreConfig c;
    mutate(c);
    return c;
  };
  EXPECT_THROW(bad([](ScoreConfig& c) { c.m_critics = 1; }).validate(), Error);
  EXPECT_THROW(bad([](ScoreConfig& c) { c.gamma_bc = 0.0; }).validate(), Error);
  EXPECT_THROW(bad([](ScoreConfig& c) { c.gamma_bc = 1.01; }).validate(), Error);
  EXPECT_THROW(bad([](ScoreConfig& c) { c.beta = -0.1; }).validate(), Error);
  EXPECT_NO_THROW(ScoreConfig{}.validate());
}

TEST(Config, DefaultsFollowHyperparameterTable) {
  const ScoreConfig c;
  EXPECT_EQ(c.m_critics, 5);
  EXPECT_EQ(c.d_bc, 10'000);
  EXPECT_EQ(c.policy_delay, 2);
  EXPECT_EQ(c.tau, 0.005);
  EXPECT_EQ(c.smoothing_sigma, 0.2);
  EXPECT_EQ(c.noise_clip, 0.5);
  EXPECT_EQ(c.qnorm_alpha, 2.5);
  EXPECT_EQ(c.actor_lr, 3e-4);
  EXPECT_EQ(c.critic_lr, 3e-4);
}

TEST(Config, JsonRoundTripAndUnknownKeys) {
  ScoreConfig c = apply_variant(ScoreConfig{}, "penalty-both");
  c.bootstrap_prob = 0.8;
  c.uncertainty_source = UncertaintySource::kTarget;
  EXPECT_EQ(ScoreConfig::from_json(c.to_json()).to_json(), c.to_json());
  nlohmann::json partial = {{"beta", 0.5}};
  EXPECT_EQ(ScoreConfig::from_json(partial).beta, 0.5);
  EXPECT_EQ(ScoreConfig::from_json(partial).m_critics, 5);
  EXPECT_THROW(ScoreConfig::from_json({{"betta", 0.5}}), Error);
}

TEST(Ablation, SevenNamedVariants) {
  const auto v = ablation_variants(ScoreConfig{});
  ASSERT_EQ(v.size(), 7u);
  std::vector<std::string> names;
  for (const auto& n : v) names.push_back(n.name);
  EXPECT_EQ(names, (std::vector<std::string>{"baseline", "no-bc", "no-pessimism", "fixed-bc", "min-q",
                                             "penalty-on-next", "penalty-both"}));
  EXPECT_THROW(apply_variant(ScoreConfig{}, "no-such"), Error);
}

TEST(Ablation, NoPessimismChangesOnlyBeta) {
  const ScoreConfig base;
  nlohmann::json a = apply_variant(base, "no-pessimism").to_json();
  nlohmann::json b = base.to_json();
  EXPECT_EQ(a["beta"], 0.0);
  a.erase("beta");
  a.erase("variant");
  b.erase("beta");
  b.erase("variant");
  EXPECT_EQ(a, b);
}

TEST(Ablation, PenaltyBothSplitsBeta) {
  const PenaltyWeights w = penalty_weights(apply_variant(ScoreConfig{}, "penalty-both"));
  EXPECT_DOUBLE_EQ(w.current, 0.1);
  EXPECT_DOUBLE_EQ(w.next, 0.1);
  const PenaltyWeights m = penalty_weights(apply_variant(ScoreConfig{}, "min-q"));
  EXPECT_EQ(m.current + m.next, 0.0);
}

TEST(Evaluate, ExpertControllerScoresHundred) {
  const EnvReference& ref = reference();
  const auto returns = rollout_returns(
      [&](const Eigen::MatrixXd& obs) {
        Eigen::MatrixXd a(2, obs.cols());
        for (Eigen::Index j = 0; j < obs.cols(); ++j) a.col(j) = pd_action(ref.expert_gains, obs.col(j));
        return a;
      },
      100, 12345);
  EXPECT_NEAR(ref.normalize(mean(returns)), 100.0, 2.0);
}

TEST(Evaluate, RandomPolicyScoresZeroOnReferenceProtocol) {
  const EnvReference& ref = reference();
  const auto returns = rollout_returns(scripted_policy(BehaviorPolicySpec::default_spec(BehaviorKind::kRandom)),
                                       ref.reference_episodes, ref.reference_seed);
  EXPECT_NEAR(ref.normalize(mean(returns)), 0.0, 2.0);
}

TEST(Evaluate, FixedSeedIsRepeatable) {
  Rng rng = make_rng(16);
  const Mlp actor = Mlp::initialized({4, 8, 2}, Activation::kTanh, rng);
  const Eigen::VectorXd mu = Eigen::VectorXd::Zero(4);
  const Eigen::VectorXd sd = Eigen::VectorXd::Ones(4);
  const EvalResult a = evaluate(actor, mu, sd, reference(), 5, 77);
  const EvalResult b = evaluate(actor, mu, sd, reference(), 5, 77);
  EXPECT_EQ(a.returns, b.returns);
  EXPECT_EQ(a.returns.size(), 5u);
  EXPECT_THROW(evaluate(actor, mu, sd, reference(), 0, 77), Error);
}

TEST(Evaluate, UnknownEnvironmentIsMissingReference) {
  try {
    EnvRegistry::load(default_registry_path()).at("no-such-env");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kMissingReference);
  }
}

TEST(Trainer, ZeroStepsLeavesInitialization) {
  ScoreConfig c = tiny_config();
  c.total_steps = 0;
  ScoreTrainer t(small_dataset(), reference(), c, 5);
  const Eigen::VectorXd actor0 = t.actor().params();
  EXPECT_TRUE(t.run().epochs.empty());
  EXPECT_EQ(t.actor().params(), actor0);
  for (std::size_t i = 0; i < t.critics().size(); ++i)
    EXPECT_EQ(t.critics()[i].params(), t.critic_targets_nets()[i].params());
}

TEST(Trainer, SameSeedIsBitIdentical) {
  const ScoreConfig c = tiny_config();
  ScoreTrainer a(small_dataset(), reference(), c, 21);
  ScoreTrainer b(small_dataset(), reference(), c, 21);
  a.run();
  b.run();
  ASSERT_EQ(a.log().epochs.size(), 2u);
  for (std::size_t e = 0; e < 2; ++e) {
    const EpochRecord& x = a.log().epochs[e];
    const EpochRecord& y = b.log().epochs[e];
    EXPECT_EQ(x.mean_return, y.mean_return);
    EXPECT_EQ(x.q_mean, y.q_mean);
    EXPECT_EQ(x.u_mean, y.u_mean);
    EXPECT_EQ(x.critic_loss, y.critic_loss);
  }
  EXPECT_EQ(a.actor().params(), b.actor().params());
  ScoreTrainer other(small_dataset(), reference(), c, 22);
  EXPECT_NE(other.actor().params(), a.actor().params());
}

TEST(Trainer, DelayedActorAndLambdaDecay) {
  ScoreConfig c = tiny_config();
  ScoreTrainer t(small_dataset(), reference(), c, 23);
  const Eigen::VectorXd actor0 = t.actor().params();
  t.step();
  EXPECT_EQ(t.actor().params(), actor0);
  t.step();
  EXPECT_NE(t.actor().params(), actor0);
  while (t.current_step() < 100) t.step();
  EXPECT_EQ(t.lambda(), lambda_schedule(100, c));
  EXPECT_EQ(t.log().epochs.size(), 1u);
  EXPECT_EQ(t.log().epochs[0].lambda_t, c.gamma_bc * c.gamma_bc * c.lambda0);
}

TEST(Trainer, GuardAbortsWithStep) {
  ScoreConfig c = tiny_config();
  c.divergence_factor = 1e-9;
  ScoreTrainer t(small_dataset(), reference(), c, 24);
  try {
    t.run();
    FAIL();
  } catch (const DivergenceError& e) {
    EXPECT_EQ(e.step(), 1);
    EXPECT_TRUE(t.log().diverged);
    EXPECT_EQ(t.log().divergence_step, 1);
  }
}

TEST(Trainer, CsvHasContractColumns) {
  EXPECT_EQ(TrainingLog::csv_header(),
            "epoch,step,mean_return,normalized_score,q_mean,q_min,q_max,u_mean,lambda_t,critic_loss,actor_obj");
  ScoreConfig c = tiny_config();
  ScoreTrainer t(small_dataset(), reference(), c, 25);
  t.run();
  const auto path = std::filesystem::temp_directory_path() / "score_agent_log.csv";
  t.log().write_csv(path);
  std::ifstream in(path);
  std::string line;
  int rows = 0;
  while (std::getline(in, line)) ++rows;
  EXPECT_EQ(rows, 3);
  std::filesystem::remove(path);
}

TEST(Trainer, SavesEveryNetwork) {
  ScoreConfig c = tiny_config();
  c.total_steps = 2;
  ScoreTrainer t(small_dataset(), reference(), c, 26);
  t.run();
  const auto dir = std::filesystem::temp_directory_path() / "score_agent_ckpt";
  const auto paths = t.save(dir);
  for (const auto& p : paths) EXPECT_TRUE(std::filesystem::exists(p)) << p;
  const Mlp back = load_checkpoint(dir / "actor.json");
  EXPECT_EQ(back.params(), t.actor().params());
  std::filesystem::remove_all(dir);
}

TEST(Coverage, ReportShapes) {
  ScoreConfig c = tiny_config();
  c.total_steps = 10;
  ScoreTrainer t(small_dataset(), reference(), c, 27);
  t.run();
  CoverageOptions opt;
  opt.grid = 6;
  const CoverageReport r = uncertainty_coverage(t, small_dataset(), opt);
  EXPECT_EQ(r.cell_counts.size(), 36u);
  EXPECT_EQ(r.cell_bins.size(), 36u);
  long total = 0;
  for (long n : r.cell_counts) total += n;
  EXPECT_LE(total, small_dataset().size());
  EXPECT_GE(r.spearman, -1.0);
  EXPECT_LE(r.spearman, 1.0);
}

}  // namespace
}  // namespace score
