#include "score/chain_mdp.hpp"

#include "score/error.hpp"

namespace score {

namespace {

TabularMdp build_chain(int stages, double p, double gamma) {
  const int n_states = 2 * stages + 3;
  const int n_actions = 2;
  const int sink = 2 * stages + 2;
  Eigen::MatrixXd transition = Eigen::MatrixXd::Zero(n_states * n_actions, n_states);
  Eigen::MatrixXd reward = Eigen::MatrixXd::Zero(n_states, n_actions);
  auto row = [&](int s, int a) { return s * n_actions + a; };

  for (int stage = 0; stage < stages; ++stage) {
    const bool last = stage + 1 == stages;
    const int next_good = last ? 2 * stages + SocietyChain::kGood : 2 * (stage + 1) + SocietyChain::kGood;
    const int next_bad = last ? 2 * stages + SocietyChain::kBad : 2 * (stage + 1) + SocietyChain::kBad;
    for (int status : {SocietyChain::kGood, SocietyChain::kBad}) {
      const int s = 2 * stage + status;
      const double penalty = status == SocietyChain::kGood ? 0.0 : SocietyChain::kBadStatusPenalty;
      const double good_after_good_deed = p - penalty;
      const double bad_after_bad_deed = p - (SocietyChain::kBadStatusPenalty - penalty);
      transition(row(s, SocietyChain::kGoodDeed), next_good) = good_after_good_deed;
      transition(row(s, SocietyChain::kGoodDeed), next_bad) = 1.0 - good_after_good_deed;
      transition(row(s, SocietyChain::kBadDeed), next_bad) = bad_after_bad_deed;
      transition(row(s, SocietyChain::kBadDeed), next_good) = 1.0 - bad_after_bad_deed;
    }
  }
  for (int status : {SocietyChain::kGood, SocietyChain::kBad}) {
    const int s = 2 * stages + status;
    for (int a = 0; a < n_actions; ++a) {
      transition(row(s, a), sink) = 1.0;
      reward(s, a) = status == SocietyChain::kGood ? 1.0 : 0.0;
    }
  }
  for (int a = 0; a < n_actions; ++a) transition(row(sink, a), sink) = 1.0;

  Eigen::VectorXd init = Eigen::VectorXd::Zero(n_states);
  init(SocietyChain::kGood) = 0.5;
  init(SocietyChain::kBad) = 0.5;
  return TabularMdp(n_states, n_actions, std::move(transition), std::move(reward), gamma,
                    std::move(init));
}

}  // namespace

SocietyChain::SocietyChain(int stages, double p_stay_good, double gamma)
    : stages_(stages), p_stay_good_(p_stay_good), mdp_(build_chain(stages, p_stay_good, gamma)) {}

SocietyChain chain_mdp_build(int stages, double p_stay_good, double gamma) {
  require(stages >= 1, "chain_mdp_build: stages must be >= 1");
  require(p_stay_good > 0.5 && p_stay_good < 1.0, "chain_mdp_build: p_stay_good must lie in (0.5, 1)");
  require(gamma > 0.0 && gamma < 1.0, "chain_mdp_build: gamma must lie in (0, 1)");
  return SocietyChain(stages, p_stay_good, gamma);
}

nlohmann::json suboptimality_to_json(const SuboptimalityReport& report) {
  return {{"term_spurious", report.term_spurious},
          {"term_intrinsic", report.term_intrinsic},
          {"term_optim", report.term_optim},
          {"total", report.total},
          {"horizon_truncation", report.horizon_truncation},
          {"truncation_bound", report.truncation_bound}};
}

nlohmann::json SpuriousDemoReport::to_json() const {
  return {{"stages", config.stages},
          {"p_stay_good", config.p_stay_good},
          {"gamma", config.gamma},
          {"samples_per_pair", config.samples_per_pair},
          {"trials", config.trials},
          {"seed", config.seed},
          {"xi", config.xi},
          {"v_max", config.v_max},
          {"f_greedy", f_greedy},
          {"f_pess", f_pess},
          {"mean_subopt_greedy", mean_subopt_greedy},
          {"mean_subopt_pess", mean_subopt_pess},
          {"decomposition_greedy", suboptimality_to_json(decomposition_greedy)},
          {"decomposition_pess", suboptimality_to_json(decomposition_pess)}};
}

SpuriousDemoReport spurious_correlation_demo(const SpuriousDemoConfig& config) {
  require(config.trials >= 1, "spurious_correlation_demo: trials must be >= 1");
  require(config.samples_per_pair >= 1, "spurious_correlation_demo: samples_per_pair must be >= 1");
  const SocietyChain chain = chain_mdp_build(config.stages, config.p_stay_good, config.gamma);
  const TabularMdp& mdp = chain.mdp();
  const double solve_tol = 1e-10;
  const double j_star = expected_return(mdp, policy_value(mdp, exact_value_iteration(mdp, solve_tol).policy, solve_tol));
  const UncertaintyTable no_penalty =
      UncertaintyTable::constant(mdp.n_states(), mdp.n_actions(), 0.0, config.v_max, config.xi);

  SpuriousDemoReport report;
  report.config = config;
  long bad_greedy = 0;
  long bad_pess = 0;
  double subopt_greedy = 0.0;
  double subopt_pess = 0.0;
  const int starts[] = {chain.state(0, SocietyChain::kGood), chain.state(0, SocietyChain::kBad)};
  for (int trial = 0; trial < config.trials; ++trial) {
    Rng rng = make_rng(config.seed, static_cast<std::uint64_t>(trial));
    const TabularDataset data = sample_uniform_dataset(mdp, config.samples_per_pair, rng);
    const UncertaintyTable u = hoeffding_uncertainty(data, config.v_max, config.xi);
    const PessimisticSolution greedy = pessimistic_value_iteration(data, no_penalty, mdp.gamma(), solve_tol);
    const PessimisticSolution pess = pessimistic_value_iteration(data, u, mdp.gamma(), solve_tol);
    for (int s : starts) {
      if (greedy.policy(s, SocietyChain::kBadDeed) > 0.5) ++bad_greedy;
      if (pess.policy(s, SocietyChain::kBadDeed) > 0.5) ++bad_pess;
    }
    subopt_greedy += j_star - expected_return(mdp, policy_value(mdp, greedy.policy, solve_tol));
    subopt_pess += j_star - expected_return(mdp, policy_value(mdp, pess.policy, solve_tol));
    if (trial == 0) {
      report.decomposition_greedy = suboptimality_decompose(mdp, data, greedy.policy, greedy.q);
      report.decomposition_pess = suboptimality_decompose(mdp, data, pess.policy, pess.q);
    }
  }
  const double draws = 2.0 * config.trials;
  report.f_greedy = bad_greedy / draws;
  report.f_pess = bad_pess / draws;
  report.mean_subopt_greedy = subopt_greedy / config.trials;
  report.mean_subopt_pess = subopt_pess / config.trials;
  return report;
}

}  // namespace score
