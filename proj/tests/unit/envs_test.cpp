#include <cmath>
#include <filesystem>
#include <fstream>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "score/chain_mdp.hpp"
#include "score/dataset.hpp"
#include "score/error.hpp"
#include "score/stats.hpp"

namespace score {
namespace {

const EnvReference& reference() {
  static const EnvReference ref = EnvRegistry::load(default_registry_path()).at(PointMassEnv::kEnvId);
  return ref;
}

double policy_mean_return(BehaviorKind kind, std::uint64_t seed, int episodes = 100) {
  return mean(rollout_returns(scripted_policy(BehaviorPolicySpec::default_spec(kind)), episodes, seed));
}

std::filesystem::path temp_file(const std::string& name) {
  return std::filesystem::temp_directory_path() / name;
}

TEST(Chain, NearDeterministicValue) {
  const SocietyChain c = chain_mdp_build(3, 0.999, 0.9);
  const OptimalSolution opt = exact_value_iteration(c.mdp(), 1e-13);
  const double v = greedy_values(opt.q)(c.state(0, SocietyChain::kGood));
  EXPECT_NEAR(v, std::pow(0.9, 3), 0.01);
}

TEST(Chain, SingleStageHandBellman) {
  const double g = 0.95;
  const SocietyChain c = chain_mdp_build(1, 0.7, g);
  const OptimalSolution opt = exact_value_iteration(c.mdp(), 1e-13);
  EXPECT_NEAR(greedy_values(opt.q)(c.state(0, SocietyChain::kGood)), g * 0.7, 1e-10);
  EXPECT_NEAR(greedy_values(opt.q)(c.state(0, SocietyChain::kBad)), g * 0.5, 1e-10);
}

TEST(Chain, GoodDeedOptimalEverywhere) {
  for (int stages : {1, 2, 3, 4}) {
    const SocietyChain c = chain_mdp_build(stages, 0.7, 0.99);
    const Eigen::VectorXd v_star = oracle::enumerate_optimal_values(c.mdp());
    const Eigen::MatrixXd q_star = oracle::q_from_v(c.mdp(), v_star);
    const PolicyTable pi = exact_value_iteration(c.mdp(), 1e-13).policy;
    for (int s = 0; s < c.mdp().n_states(); ++s) {
      if (!c.is_decision_state(s)) continue;
      EXPECT_GT(q_star(s, SocietyChain::kGoodDeed), q_star(s, SocietyChain::kBadDeed) + 1e-6);
      EXPECT_EQ(pi(s, SocietyChain::kGoodDeed), 1.0);
    }
  }
}

TEST(Chain, RewardsOnlyAtTerminal) {
  const SocietyChain c = chain_mdp_build(3, 0.7);
  for (int s = 0; s < c.mdp().n_states(); ++s) {
    const double r = c.mdp().reward().row(s).maxCoeff();
    EXPECT_EQ(r, s == c.terminal(SocietyChain::kGood) ? 1.0 : 0.0) << s;
  }
  EXPECT_EQ(c.mdp().init_dist()(c.state(0, SocietyChain::kGood)), 0.5);
  EXPECT_EQ(c.mdp().init_dist()(c.state(0, SocietyChain::kBad)), 0.5);
}

TEST(Chain, InvalidParametersRejected) {
  EXPECT_THROW(chain_mdp_build(0, 0.7), Error);
  EXPECT_THROW(chain_mdp_build(3, 0.5), Error);
  EXPECT_THROW(chain_mdp_build(3, 1.0), Error);
}

TEST(SpuriousDemo, PessimismFlipsLessOften) {
  SpuriousDemoConfig cfg;
  const SpuriousDemoReport r = spurious_correlation_demo(cfg);
  EXPECT_LT(r.f_pess, r.f_greedy);
  EXPECT_GT(r.f_greedy, 0.0);
  const nlohmann::json j = r.to_json();
  for (const char* key : {"f_greedy", "f_pess", "decomposition_greedy", "decomposition_pess"}) EXPECT_TRUE(j.contains(key));
}

TEST(SpuriousDemo, LargeSamplesRemoveFlips) {
  SpuriousDemoConfig cfg;
  cfg.samples_per_pair = 10'000;
  cfg.trials = 20;
  const SpuriousDemoReport r = spurious_correlation_demo(cfg);
  EXPECT_LT(r.f_greedy, 0.05);
  EXPECT_LT(r.f_pess, 0.05);
}

TEST(SpuriousDemo, MaximalPenaltyTiesGoToFirstAction) {
  const SocietyChain c = chain_mdp_build(3, 0.7);
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng = make_rng(seed);
    const TabularDataset data = sample_uniform_dataset(c.mdp(), 2, rng);
    const auto u = UncertaintyTable::constant(c.mdp().n_states(), 2, 1.0, 1.0);
    const PessimisticSolution sol = pessimistic_value_iteration(data, u, c.mdp().gamma(), 1e-12);
    EXPECT_EQ(sol.q.cwiseAbs().maxCoeff(), 0.0);
    EXPECT_EQ(sol.policy.col(SocietyChain::kGoodDeed).minCoeff(), 1.0);
  }
}

TEST(PointMass, TransitionIsPureAndRewardNonPositive) {
  Rng rng = make_rng(1);
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  for (int i = 0; i < 200; ++i) {
    const Eigen::Vector4d s(u(rng), u(rng), u(rng) / 2, u(rng) / 2);
    const Eigen::Vector2d a(u(rng), u(rng));
    const auto x = PointMassEnv::transition(s, a);
    const auto y = PointMassEnv::transition(s, a);
    EXPECT_EQ(x.obs, y.obs);
    EXPECT_EQ(x.reward, y.reward);
    EXPECT_LE(x.reward, 0.0);
    EXPECT_LE(x.obs.tail<2>().cwiseAbs().maxCoeff(), PointMassEnv::kMaxSpeed);
  }
}

TEST(PointMass, HandStep) {
  const Eigen::Vector4d s(1.0, -1.0, 0.5, 0.0);
  const auto next = PointMassEnv::transition(s, Eigen::Vector2d(1.0, -5.0));
  EXPECT_DOUBLE_EQ(next.obs(0), 1.0 + 0.05 * 0.5);
  EXPECT_DOUBLE_EQ(next.obs(1), -1.0);
  EXPECT_DOUBLE_EQ(next.obs(2), 0.5 + 0.05 * 1.0);
  EXPECT_DOUBLE_EQ(next.obs(3), -0.05);
  EXPECT_DOUBLE_EQ(next.reward, -std::hypot(1.025, 1.0));
}

TEST(PointMass, ExpertNearRandomSearchOptimum) {
  const EnvReference& ref = reference();
  const double expert = policy_mean_return(BehaviorKind::kExpert, ref.reference_seed, ref.reference_episodes);
  EXPECT_LE(std::abs(expert - ref.expert_ref), 0.05 * std::abs(ref.expert_ref));
  EXPECT_GT(ref.expert_ref, ref.random_ref);
}

TEST(PointMass, QualityOrdering) {
  std::vector<double> random, medium, expert;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    random.push_back(policy_mean_return(BehaviorKind::kRandom, seed, 20));
    medium.push_back(policy_mean_return(BehaviorKind::kMedium, seed, 20));
    expert.push_back(policy_mean_return(BehaviorKind::kExpert, seed, 20));
  }
  EXPECT_LT(median(random), median(medium));
  EXPECT_LT(median(medium), median(expert));
  const EnvReference& ref = reference();
  EXPECT_GT(median(medium), ref.random_ref);
  EXPECT_LT(median(medium), ref.expert_ref);
}

TEST(PointMass, MixProportionsSumToOne) {
  for (BehaviorKind k : {BehaviorKind::kMediumReplayMix, BehaviorKind::kMediumExpertMix}) {
    double total = 0.0;
    for (const auto& [component, w] : BehaviorPolicySpec::default_spec(k).mix) total += w;
    EXPECT_DOUBLE_EQ(total, 1.0);
  }
  BehaviorPolicySpec bad = BehaviorPolicySpec::default_spec(BehaviorKind::kMediumExpertMix);
  bad.mix[0].second = 0.9;
  EXPECT_THROW(ScriptedPolicy{bad}, Error);
}

TEST(PointMass, RandomActionsStayInBox) {
  const ScriptedPolicy p = scripted_policy(BehaviorPolicySpec::default_spec(BehaviorKind::kMedium));
  Rng rng = make_rng(2);
  for (int i = 0; i < 1000; ++i) {
    const Eigen::Vector2d a = p.act(Eigen::Vector4d::Random() * 3.0, rng);
    EXPECT_LE(a.cwiseAbs().maxCoeff(), PointMassEnv::kMaxAction);
  }
}

TEST(Dataset, SingleTransitionFile) {
  const OfflineDataset d =
      generate_dataset(scripted_policy(BehaviorPolicySpec::default_spec(BehaviorKind::kMedium)), 1, 4);
  EXPECT_EQ(d.size(), 1);
  const auto path = temp_file("score_one.bin");
  save_dataset(d, path);
  EXPECT_EQ(load_dataset(path).size(), 1);
  std::filesystem::remove(path);
}

TEST(Dataset, RoundTripIsBitwise) {
  const OfflineDataset d =
      generate_dataset(scripted_policy(BehaviorPolicySpec::default_spec(BehaviorKind::kMediumReplayMix)), 1500, 5);
  const auto path = temp_file("score_rt.bin");
  save_dataset(d, path);
  const OfflineDataset back = load_dataset(path);
  EXPECT_TRUE(back.same_content(d));
  EXPECT_EQ(back.behavior_tag, d.behavior_tag);
  EXPECT_EQ(back.env_id, PointMassEnv::kEnvId);
  std::filesystem::remove(path);
}

TEST(Dataset, FileLayoutMatchesFormat) {
  const OfflineDataset d =
      generate_dataset(scripted_policy(BehaviorPolicySpec::default_spec(BehaviorKind::kExpert)), 3, 6);
  const auto path = temp_file("score_layout.bin");
  save_dataset(d, path);
  std::ifstream in(path, std::ios::binary);
  std::string magic(8, '\0');
  in.read(magic.data(), 8);
  EXPECT_EQ(magic, "SCORDATA");
  unsigned char len_bytes[4];
  in.read(reinterpret_cast<char*>(len_bytes), 4);
  const std::uint32_t len = len_bytes[0] | (len_bytes[1] << 8) | (len_bytes[2] << 16) |
                            (static_cast<std::uint32_t>(len_bytes[3]) << 24);
  std::string header(len, '\0');
  in.read(header.data(), len);
  const nlohmann::json h = nlohmann::json::parse(header);
  EXPECT_EQ(h["version"], 1);
  EXPECT_EQ(h["obs_dim"], 4);
  EXPECT_EQ(h["act_dim"], 2);
  EXPECT_EQ(h["n"], 3);
  EXPECT_EQ(h["discrete"], false);
  const auto record = static_cast<std::uintmax_t>(4 + 2 + 4 + 1 + 1) * 8;
  EXPECT_EQ(std::filesystem::file_size(path), 12 + len + 3 * record);
  std::filesystem::remove(path);
}

TEST(Dataset, BadMagicIsRejected) {
  const auto path = temp_file("score_bad.bin");
  std::ofstream(path) << "NOTADATASET";
  EXPECT_THROW(load_dataset(path), Error);
  std::filesystem::remove(path);
  try {
    load_dataset("/nonexistent/score/data.bin");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kIo);
  }
}

TEST(Dataset, GenerationIsDeterministic) {
  const ScriptedPolicy p = scripted_policy(BehaviorPolicySpec::default_spec(BehaviorKind::kMediumReplayMix));
  EXPECT_TRUE(generate_dataset(p, 800, 9).same_content(generate_dataset(p, 800, 9)));
  EXPECT_FALSE(generate_dataset(p, 800, 9).same_content(generate_dataset(p, 800, 10)));
}

TEST(Dataset, TabularCountsMatchTally) {
  const SocietyChain c = chain_mdp_build(3, 0.7);
  const OfflineDataset d =
      generate_dataset(c.mdp(), uniform_policy(c.mdp().n_states(), 2), 5000, 11, 6, "chain", "uniform");
  EXPECT_TRUE(d.discrete);
  Eigen::MatrixXi tally = Eigen::MatrixXi::Zero(c.mdp().n_states(), 2);
  for (Eigen::Index j = 0; j < d.size(); ++j) ++tally(static_cast<int>(d.obs(0, j)), static_cast<int>(d.act(0, j)));
  const TabularDataset t = to_tabular(d, c.mdp().n_states(), 2);
  EXPECT_EQ(t.counts(), tally);
  EXPECT_EQ(tally.sum(), 5000);

  const auto path = temp_file("score_chain.bin");
  save_dataset(d, path);
  EXPECT_TRUE(load_dataset(path).same_content(d));
  std::filesystem::remove(path);
}

TEST(Registry, RoundTripAndMissing) {
  EnvRegistry reg;
  EnvReference r;
  r.env_id = "toy";
  r.random_ref = -5.0;
  r.expert_ref = -1.0;
  reg.put(r);
  const auto path = temp_file("score_registry.json");
  reg.save(path);
  const EnvRegistry back = EnvRegistry::load(path);
  EXPECT_EQ(back.at("toy").random_ref, -5.0);
  EXPECT_EQ(back.at("toy").normalize(-1.0), 100.0);
  EXPECT_THROW(back.at("point-mass"), Error);
  std::filesystem::remove(path);
}

}  // namespace
}  // namespace score
