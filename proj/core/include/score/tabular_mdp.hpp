#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "score/rng.hpp"

namespace score {

/// Q(s, a): rows are states, columns are actions.
using QTable = Eigen::MatrixXd;
/// V(s).
using VTable = Eigen::VectorXd;
/// pi(a | s): rows are states and each row is a distribution over actions.
using PolicyTable = Eigen::MatrixXd;

/// Exact finite MDP (S, A, P, R, gamma, d0).
///
/// Transitions are stored as an (S*A) x S row-stochastic matrix where row
/// s * A + a holds P(. | s, a). Rewards are non-negative.
class TabularMdp {
 public:
  TabularMdp(int n_states, int n_actions, Eigen::MatrixXd transition, Eigen::MatrixXd reward,
             double gamma, Eigen::VectorXd init_dist);

  int n_states() const { return n_states_; }
  int n_actions() const { return n_actions_; }
  double gamma() const { return gamma_; }
  const Eigen::MatrixXd& transition() const { return transition_; }
  const Eigen::MatrixXd& reward() const { return reward_; }
  const Eigen::VectorXd& init_dist() const { return init_dist_; }

  int row(int s, int a) const { return s * n_actions_ + a; }
  double p(int s, int a, int next) const { return transition_(row(s, a), next); }
  double r(int s, int a) const { return reward_(s, a); }
  double r_max() const { return reward_.maxCoeff(); }
  /// r_max / (1 - gamma), the range of any discounted return.
  double v_max() const { return r_max() / (1.0 - gamma_); }

  /// P_pi(s, s') = sum_a pi(a|s) P(s'|s, a).
  Eigen::MatrixXd policy_transition(const PolicyTable& policy) const;
  /// r_pi(s) = sum_a pi(a|s) R(s, a).
  VTable policy_reward(const PolicyTable& policy) const;

  nlohmann::json to_json() const;
  static TabularMdp from_json(const nlohmann::json& doc);

 private:
  int n_states_;
  int n_actions_;
  Eigen::MatrixXd transition_;
  Eigen::MatrixXd reward_;
  double gamma_;
  Eigen::VectorXd init_dist_;
};

/// {"n_states", "n_actions", "values": [[...], ...]} envelope shared by Q, policy
/// and uncertainty tables.
nlohmann::json table_to_json(const Eigen::MatrixXd& table);
Eigen::MatrixXd table_from_json(const nlohmann::json& doc);

void save_mdp(const TabularMdp& mdp, const std::filesystem::path& path);
TabularMdp load_mdp(const std::filesystem::path& path);

struct TabularTransition {
  int state;
  int action;
  int next_state;
  double reward;
  bool done = false;

  friend bool operator==(const TabularTransition&, const TabularTransition&) = default;
};

/// Offline dataset over a finite MDP together with per-pair visit counts.
class TabularDataset {
 public:
  TabularDataset(int n_states, int n_actions, std::vector<TabularTransition> transitions,
                 std::string behavior_tag = {});

  int n_states() const { return n_states_; }
  int n_actions() const { return n_actions_; }
  const std::vector<TabularTransition>& transitions() const { return transitions_; }
  std::size_t size() const { return transitions_.size(); }
  const Eigen::MatrixXi& counts() const { return counts_; }
  int count(int s, int a) const { return counts_(s, a); }
  const std::string& behavior_tag() const { return behavior_tag_; }

 private:
  int n_states_;
  int n_actions_;
  std::vector<TabularTransition> transitions_;
  Eigen::MatrixXi counts_;
  std::string behavior_tag_;
};

/// Sample-average model of a tabular dataset.
struct EmpiricalModel {
  int n_states = 0;
  int n_actions = 0;
  Eigen::MatrixXi counts;        // S x A
  Eigen::MatrixXd mean_reward;   // S x A, 0 where count is 0
  Eigen::MatrixXd next_freq;     // (S*A) x S, zero rows where count is 0

  bool covered(int s, int a) const { return counts(s, a) > 0; }
};

EmpiricalModel estimate_model(const TabularDataset& dataset);

struct RandomMdpOptions {
  double gamma = 0.9;
  double r_max = 1.0;
  /// When positive, every transition probability is a multiple of 1/denominator
  /// so that perfect_dataset() can reproduce P exactly.
  int denominator = 0;
  /// Number of reachable successors per (s, a); 0 means all states.
  int support = 0;
};

TabularMdp random_mdp(int n_states, int n_actions, Rng& rng, const RandomMdpOptions& options = {});

/// Dataset whose empirical model equals the true model exactly. Requires every
/// P(s'|s,a) * denominator to be an integer; each pair gets `denominator` samples.
TabularDataset perfect_dataset(const TabularMdp& mdp, int denominator);

/// Generative-model sampling: counts(s, a) independent draws of s' ~ P(.|s, a).
TabularDataset sample_dataset(const TabularMdp& mdp, const Eigen::MatrixXi& counts, Rng& rng,
                              const std::string& behavior_tag = "generative");

/// Same number of samples for every pair.
TabularDataset sample_uniform_dataset(const TabularMdp& mdp, int samples_per_pair, Rng& rng);

/// Episodic rollouts of `behavior` from d0, each truncated at `episode_length`,
/// stopping once `n_transitions` have been collected.
TabularDataset rollout_dataset(const TabularMdp& mdp, const PolicyTable& behavior,
                               std::size_t n_transitions, int episode_length, Rng& rng,
                               const std::string& behavior_tag = "rollout");

int sample_index(const Eigen::Ref<const Eigen::RowVectorXd>& probs, Rng& rng);

}  // namespace score
