#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "score/point_mass.hpp"
#include "score/tabular_mdp.hpp"

namespace score {

/// Column-per-transition offline dataset. Discrete datasets store state and
/// action indices as doubles with obs_dim = act_dim = 1.
struct OfflineDataset {
  int obs_dim = 0;
  int act_dim = 0;
  bool discrete = false;
  std::string env_id;
  std::string behavior_tag;
  Eigen::MatrixXd obs;       // obs_dim x n
  Eigen::MatrixXd act;       // act_dim x n
  Eigen::MatrixXd next_obs;  // obs_dim x n
  Eigen::VectorXd reward;    // n
  Eigen::VectorXd done;      // n, 0.0 or 1.0
  /// Returns of the complete episodes generated; not serialized.
  std::vector<double> episode_returns;

  OfflineDataset() = default;
  OfflineDataset(int obs_dim, int act_dim, Eigen::Index n);

  Eigen::Index size() const { return reward.size(); }
  void resize(Eigen::Index n);

  /// Bitwise equality of header fields and every stored float.
  bool same_content(const OfflineDataset& other) const;
};

OfflineDataset from_tabular(const TabularDataset& data, const std::string& env_id);
TabularDataset to_tabular(const OfflineDataset& data, int n_states, int n_actions);

/// "SCORDATA", u32 LE header length, JSON header, then n records of LE f64
/// [obs | act | next_obs | reward | done].
void save_dataset(const OfflineDataset& data, const std::filesystem::path& path);
OfflineDataset load_dataset(const std::filesystem::path& path);

/// Point-mass rollouts of `policy`, each truncated at the horizon, stopping at
/// n_transitions. Time-limit truncation is not a terminal, so done is 0.
OfflineDataset generate_dataset(const ScriptedPolicy& policy, std::size_t n_transitions,
                                std::uint64_t seed);

/// Tabular rollouts of `behavior` from d0.
OfflineDataset generate_dataset(const TabularMdp& mdp, const PolicyTable& behavior,
                                std::size_t n_transitions, std::uint64_t seed,
                                int episode_length, const std::string& env_id,
                                const std::string& behavior_tag);

}  // namespace score
