#pragma once

#include <cstdint>

#include <nlohmann/json.hpp>

#include "score/bellman.hpp"
#include "score/pessimism.hpp"

namespace score {

/// Society chain: `stages` decision stages, each with a good or bad status,
/// followed by a terminal stage that pays 1 for good status and 0 for bad, and
/// an absorbing zero-reward sink. Agents are born good or bad with probability 1/2.
///
/// good_deed moves to good status with probability p_stay_good from a good
/// status and p_stay_good - 0.2 from a bad status; bad_deed mirrors this toward
/// bad status.
class SocietyChain {
 public:
  static constexpr int kGood = 0;
  static constexpr int kBad = 1;
  static constexpr int kGoodDeed = 0;
  static constexpr int kBadDeed = 1;
  static constexpr double kBadStatusPenalty = 0.2;

  SocietyChain(int stages, double p_stay_good, double gamma);

  const TabularMdp& mdp() const { return mdp_; }
  int stages() const { return stages_; }
  double p_stay_good() const { return p_stay_good_; }

  int state(int stage, int status) const { return 2 * stage + status; }
  int terminal(int status) const { return 2 * stages_ + status; }
  int sink() const { return 2 * stages_ + 2; }
  bool is_decision_state(int s) const { return s < 2 * stages_; }

 private:
  int stages_;
  double p_stay_good_;
  TabularMdp mdp_;
};

/// Builds the chain MDP; rejects stages < 1 or p_stay_good outside (0.5, 1).
SocietyChain chain_mdp_build(int stages, double p_stay_good, double gamma = 0.99);

struct SpuriousDemoConfig {
  int stages = 3;
  double p_stay_good = 0.7;
  double gamma = 0.99;
  int samples_per_pair = 2;
  int trials = 1000;
  std::uint64_t seed = 0;
  double xi = 0.1;
  /// Returns in the chain never exceed one terminal reward.
  double v_max = 1.0;
};

struct SpuriousDemoReport {
  SpuriousDemoConfig config;
  /// Fraction of (trial, birth status) draws where the greedy-on-empirical-Q
  /// agent picks bad_deed at stage 0.
  double f_greedy = 0.0;
  /// Same for the pessimistic value-iteration agent.
  double f_pess = 0.0;
  /// Mean true suboptimality J(pi*) - J(pi_hat) over trials.
  double mean_subopt_greedy = 0.0;
  double mean_subopt_pess = 0.0;
  /// Decomposition of the first trial's policies.
  SuboptimalityReport decomposition_greedy;
  SuboptimalityReport decomposition_pess;

  nlohmann::json to_json() const;
};

SpuriousDemoReport spurious_correlation_demo(const SpuriousDemoConfig& config);

nlohmann::json suboptimality_to_json(const SuboptimalityReport& report);

}  // namespace score
