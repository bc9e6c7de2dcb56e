#include <cmath>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "score/bellman.hpp"
#include "score/error.hpp"
#include "score/pessimism.hpp"

namespace score {
namespace {

TabularMdp one_state(double reward, double gamma) {
  return TabularMdp(1, 1, Eigen::MatrixXd::Ones(1, 1), Eigen::MatrixXd::Constant(1, 1, reward), gamma,
                    Eigen::VectorXd::Ones(1));
}

QTable random_q(int S, int A, Rng& rng, double scale = 5.0) {
  std::uniform_real_distribution<double> u(-scale, scale);
  QTable q(S, A);
  for (Eigen::Index i = 0; i < q.size(); ++i) q.data()[i] = u(rng);
  return q;
}

TEST(TabularMdp, RejectsNonStochasticRows) {
  Eigen::MatrixXd p(2, 2);
  p << 0.5, 0.6, 1.0, 0.0;
  try {
    TabularMdp(2, 1, p, Eigen::MatrixXd::Zero(2, 1), 0.9, Eigen::VectorXd::Constant(2, 0.5));
    FAIL() << "expected invalid-input";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kInvalidInput);
  }
}

TEST(TabularMdp, JsonRoundTripIsExact) {
  Rng rng = make_rng(3);
  const TabularMdp mdp = random_mdp(4, 3, rng);
  const TabularMdp back = TabularMdp::from_json(nlohmann::json::parse(mdp.to_json().dump()));
  EXPECT_EQ(back.transition(), mdp.transition());
  EXPECT_EQ(back.reward(), mdp.reward());
  EXPECT_EQ(back.init_dist(), mdp.init_dist());
  EXPECT_EQ(back.gamma(), mdp.gamma());
}

TEST(BellmanOptimality, ZeroDiscountReturnsReward) {
  Rng rng = make_rng(1);
  RandomMdpOptions opt;
  opt.gamma = 0.0;
  const TabularMdp mdp = random_mdp(4, 3, rng, opt);
  EXPECT_EQ(bellman_optimality_apply(mdp, random_q(4, 3, rng)), mdp.reward());
}

TEST(BellmanOptimality, SingleStateStep) {
  const QTable bq = bellman_optimality_apply(one_state(1.0, 0.5), QTable::Zero(1, 1));
  EXPECT_EQ(bq(0, 0), 1.0);
}

TEST(BellmanOptimality, NonFiniteInputRejected) {
  QTable q = QTable::Zero(1, 1);
  q(0, 0) = std::nan("");
  try {
    bellman_optimality_apply(one_state(1.0, 0.5), q);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kInvalidInput);
  }
}

TEST(BellmanOptimality, FixedPointMatchesPolicyEnumeration) {
  Rng rng = make_rng(11);
  const TabularMdp mdp = random_mdp(5, 3, rng);
  const OptimalSolution sol = exact_value_iteration(mdp, 1e-11);
  const QTable q_star = oracle::q_from_v(mdp, oracle::enumerate_optimal_values(mdp));
  EXPECT_LT((sol.q - q_star).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(BellmanOptimality, MonotoneProperty) {
  Rng rng = make_rng(12);
  for (int trial = 0; trial < 200; ++trial) {
    const TabularMdp mdp = random_mdp(4, 3, rng);
    const QTable q1 = random_q(4, 3, rng);
    QTable q2 = q1;
    std::uniform_real_distribution<double> bump(0.0, 1.0);
    for (Eigen::Index i = 0; i < q2.size(); ++i) q2.data()[i] += bump(rng);
    const QTable diff = bellman_optimality_apply(mdp, q2) - bellman_optimality_apply(mdp, q1);
    ASSERT_GE(diff.minCoeff(), -1e-12);
  }
}

TEST(BellmanOptimality, ContractionProperty) {
  Rng rng = make_rng(13);
  for (int trial = 0; trial < 200; ++trial) {
    const TabularMdp mdp = random_mdp(5, 2, rng);
    const QTable q1 = random_q(5, 2, rng);
    const QTable q2 = random_q(5, 2, rng);
    const double lhs =
        (bellman_optimality_apply(mdp, q1) - bellman_optimality_apply(mdp, q2)).cwiseAbs().maxCoeff();
    ASSERT_LE(lhs, mdp.gamma() * (q1 - q2).cwiseAbs().maxCoeff() + 1e-12);
  }
}

TEST(EmpiricalBellman, PerfectDatasetEqualsTrueOperator) {
  Rng rng = make_rng(4);
  RandomMdpOptions opt;
  opt.denominator = 8;
  const TabularMdp mdp = random_mdp(5, 3, rng, opt);
  const TabularDataset data = perfect_dataset(mdp, 8);
  const QTable q = random_q(5, 3, rng);
  EXPECT_LT((empirical_bellman_apply(data, q, mdp.gamma()) - bellman_optimality_apply(mdp, q))
                .cwiseAbs()
                .maxCoeff(),
            1e-12);
}

TEST(EmpiricalBellman, UnvisitedPairUsesDefault) {
  const TabularDataset data(2, 2, {{0, 0, 1, 1.0}, {1, 1, 0, 0.5}});
  const QTable bq = empirical_bellman_apply(data, QTable::Ones(2, 2), 0.9, 0.0);
  EXPECT_EQ(bq(0, 1), 0.0);
  EXPECT_EQ(bq(1, 0), 0.0);
  EXPECT_DOUBLE_EQ(bq(0, 0), 1.0 + 0.9);
}

TEST(EmpiricalBellman, MatchesHandRecount) {
  Rng rng = make_rng(5);
  const TabularMdp mdp = random_mdp(4, 2, rng);
  const TabularDataset data = sample_uniform_dataset(mdp, 10, rng);
  const QTable q = random_q(4, 2, rng);
  QTable expected = QTable::Zero(4, 2);
  Eigen::MatrixXd n = Eigen::MatrixXd::Zero(4, 2);
  for (const auto& t : data.transitions()) {
    expected(t.state, t.action) += t.reward + mdp.gamma() * q.row(t.next_state).maxCoeff();
    n(t.state, t.action) += 1.0;
  }
  expected.array() /= n.array();
  EXPECT_LT((empirical_bellman_apply(data, q, mdp.gamma()) - expected).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(EpistemicError, VanishesOnPerfectData) {
  Rng rng = make_rng(6);
  RandomMdpOptions opt;
  opt.denominator = 4;
  const TabularMdp mdp = random_mdp(4, 2, rng, opt);
  const Eigen::MatrixXd iota = epistemic_error(mdp, perfect_dataset(mdp, 4), random_q(4, 2, rng));
  EXPECT_LT(iota.cwiseAbs().maxCoeff(), 1e-12);
}

TEST(EpistemicError, VanishesWithoutDiscountWhenRewardsExact) {
  Rng rng = make_rng(7);
  RandomMdpOptions opt;
  opt.gamma = 0.0;
  const TabularMdp mdp = random_mdp(4, 2, rng, opt);
  const TabularDataset data = sample_uniform_dataset(mdp, 3, rng);
  EXPECT_LT(epistemic_error(mdp, data, random_q(4, 2, rng)).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(EpistemicError, IsDifferenceOfOperators) {
  Rng rng = make_rng(8);
  const TabularMdp mdp = random_mdp(4, 3, rng);
  const TabularDataset data = sample_uniform_dataset(mdp, 5, rng);
  const QTable q = random_q(4, 3, rng);
  const Eigen::MatrixXd direct =
      bellman_optimality_apply(mdp, q) - empirical_bellman_apply(data, q, mdp.gamma());
  EXPECT_LT((epistemic_error(mdp, data, q) - direct).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(PolicyValue, GeometricSeries) {
  const VTable v = policy_value(one_state(1.0, 0.9), PolicyTable::Ones(1, 1), 1e-10);
  EXPECT_NEAR(v(0), 10.0, 1e-9);
}

TEST(PolicyValue, SymmetricMdpGivesEqualValues) {
  Eigen::MatrixXd p(4, 2);
  p << 0.2, 0.8, 0.6, 0.4, 0.8, 0.2, 0.4, 0.6;
  Eigen::MatrixXd r(2, 2);
  r << 1.0, 0.3, 1.0, 0.3;
  const TabularMdp mdp(2, 2, p, r, 0.9, Eigen::VectorXd::Constant(2, 0.5));
  const VTable v = policy_value(mdp, uniform_policy(2, 2), 1e-12);
  EXPECT_NEAR(v(0), v(1), 1e-10);
}

TEST(PolicyValue, NonPositiveToleranceRejected) {
  EXPECT_THROW(policy_value(one_state(1.0, 0.9), PolicyTable::Ones(1, 1), 0.0), Error);
}

TEST(PolicyValue, OptimalPolicyAttainsEnumerationMaximum) {
  Rng rng = make_rng(9);
  const TabularMdp mdp = random_mdp(4, 3, rng);
  const OptimalSolution sol = exact_value_iteration(mdp, 1e-12);
  const VTable v = policy_value(mdp, sol.policy, 1e-12);
  EXPECT_LT((v - oracle::enumerate_optimal_values(mdp)).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(ExactValueIteration, ZeroDiscountPicksBestReward) {
  Rng rng = make_rng(10);
  RandomMdpOptions opt;
  opt.gamma = 0.0;
  const TabularMdp mdp = random_mdp(6, 4, rng, opt);
  const OptimalSolution sol = exact_value_iteration(mdp, 1e-10);
  for (int s = 0; s < 6; ++s) {
    Eigen::Index best = 0;
    mdp.reward().row(s).maxCoeff(&best);
    EXPECT_EQ(sol.policy(s, best), 1.0);
  }
}

TEST(ExactValueIteration, OptimalPolicyHasZeroSuboptimality) {
  Rng rng = make_rng(14);
  const TabularMdp mdp = random_mdp(5, 3, rng);
  const double tol = 1e-9;
  const OptimalSolution sol = exact_value_iteration(mdp, tol);
  const double j = expected_return(mdp, oracle::solve_policy_value(mdp, sol.policy));
  const double j_star = expected_return(mdp, oracle::enumerate_optimal_values(mdp));
  EXPECT_LE(std::abs(j_star - j), 2.0 * tol / (1.0 - mdp.gamma()));
}

TEST(Decomposition, OptimalPolicyOnPerfectDataIsAllZero) {
  Rng rng = make_rng(15);
  RandomMdpOptions opt;
  opt.denominator = 5;
  const TabularMdp mdp = random_mdp(4, 2, rng, opt);
  const OptimalSolution sol = exact_value_iteration(mdp, 1e-13);
  DecompositionOptions d;
  d.iota_source = IotaSource::kEmpiricalOperator;
  const SuboptimalityReport rep = suboptimality_decompose(mdp, perfect_dataset(mdp, 5), sol.policy, sol.q, d);
  EXPECT_NEAR(rep.term_spurious, 0.0, 1e-9);
  EXPECT_NEAR(rep.term_intrinsic, 0.0, 1e-9);
  EXPECT_NEAR(rep.term_optim, 0.0, 1e-9);
  EXPECT_NEAR(rep.total, 0.0, 1e-9);
}

TEST(Decomposition, GreedyPolicyHasNonPositiveOptimizationTerm) {
  Rng rng = make_rng(16);
  for (int trial = 0; trial < 30; ++trial) {
    const TabularMdp mdp = random_mdp(5, 3, rng);
    const QTable q_hat = random_q(5, 3, rng);
    const SuboptimalityReport rep =
        suboptimality_decompose(mdp, sample_uniform_dataset(mdp, 2, rng), greedy_policy(q_hat), q_hat);
    ASSERT_LE(rep.term_optim, 1e-10);
    ASSERT_LE(rep.optimization_per_state.maxCoeff(), 1e-10);
  }
}

TEST(Decomposition, TermsSumToDirectGapForPessimisticPolicy) {
  Rng rng = make_rng(17);
  const TabularMdp mdp = random_mdp(6, 2, rng);
  Eigen::MatrixXi counts(6, 2);
  std::uniform_int_distribution<int> c(0, 3);
  for (Eigen::Index i = 0; i < counts.size(); ++i) counts.data()[i] = c(rng);
  const TabularDataset data = sample_dataset(mdp, counts, rng);
  const UncertaintyTable u = hoeffding_uncertainty(data, mdp.v_max(), 0.1);
  const PessimisticSolution pess = pessimistic_value_iteration(data, u, mdp.gamma(), 1e-10);
  const SuboptimalityReport rep = suboptimality_decompose(mdp, data, pess.policy, pess.q);

  const double direct = expected_return(mdp, oracle::enumerate_optimal_values(mdp)) -
                        expected_return(mdp, oracle::solve_policy_value(mdp, pess.policy));
  EXPECT_NEAR(rep.total, direct, 1e-8);
  EXPECT_LE(std::abs(rep.terms_sum() - direct), 2.0 * rep.truncation_bound + 1e-8);
}

TEST(Decomposition, IdentityHoldsOnRandomGreedyInstances) {
  Rng rng = make_rng(18);
  for (int trial = 0; trial < 25; ++trial) {
    const TabularMdp mdp = random_mdp(4, 3, rng);
    const TabularDataset data = sample_uniform_dataset(mdp, 3, rng);
    const QTable q_hat = random_q(4, 3, rng, 3.0).cwiseAbs();
    const SuboptimalityReport rep = suboptimality_decompose(mdp, data, greedy_policy(q_hat), q_hat);
    ASSERT_LE(std::abs(rep.terms_sum() - rep.total), 2.0 * rep.truncation_bound + 1e-8);
  }
}

TEST(Decomposition, PerfectDataCollapsesEpistemicTerms) {
  Rng rng = make_rng(19);
  RandomMdpOptions opt;
  opt.denominator = 6;
  const TabularMdp mdp = random_mdp(4, 3, rng, opt);
  const QTable q_hat = random_q(4, 3, rng);
  DecompositionOptions d;
  d.iota_source = IotaSource::kEmpiricalOperator;
  const SuboptimalityReport rep =
      suboptimality_decompose(mdp, perfect_dataset(mdp, 6), greedy_policy(q_hat), q_hat, d);
  EXPECT_NEAR(rep.term_spurious, 0.0, 1e-10);
  EXPECT_NEAR(rep.term_intrinsic, 0.0, 1e-10);
}

TEST(OccupancySum, MatchesExplicitMatrixPowers) {
  Rng rng = make_rng(20);
  const TabularMdp mdp = random_mdp(3, 2, rng);
  const PolicyTable pi = uniform_policy(3, 2);
  const Eigen::MatrixXd f = random_q(3, 2, rng);
  const int H = 30;
  Eigen::MatrixXd p_pi = Eigen::MatrixXd::Zero(3, 3);
  Eigen::VectorXd f_pi = Eigen::VectorXd::Zero(3);
  for (int s = 0; s < 3; ++s) {
    for (int a = 0; a < 2; ++a) {
      f_pi(s) += 0.5 * f(s, a);
      for (int n = 0; n < 3; ++n) p_pi(s, n) += 0.5 * mdp.p(s, a, n);
    }
  }
  Eigen::VectorXd expected = Eigen::VectorXd::Zero(3);
  Eigen::MatrixXd power = Eigen::MatrixXd::Identity(3, 3);
  for (int t = 0; t < H; ++t) {
    expected += std::pow(mdp.gamma(), t) * power * f_pi;
    power = power * p_pi;
  }
  EXPECT_LT((discounted_occupancy_sum(mdp, pi, f, H) - expected).cwiseAbs().maxCoeff(), 1e-12);
}

}  // namespace
}  // namespace score
