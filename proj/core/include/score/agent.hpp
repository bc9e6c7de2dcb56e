#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "score/dataset.hpp"
#include "score/nn.hpp"
#include "score/point_mass.hpp"

namespace score {

/// Which critics the uncertainty u is read from.
enum class UncertaintySource { kOnline, kTarget };
/// kPerCritic: y_i bootstraps from critic i's own target. kMinEnsemble: every
/// y_i uses min_j Q'_j and no uncertainty penalty.
enum class TargetMode { kPerCritic, kMinEnsemble };
/// Where the penalty is evaluated: u(s,a), u(s',a') or half of beta on each.
enum class PenaltyPlacement { kCurrent, kNext, kBoth };

const char* to_string(UncertaintySource v);
const char* to_string(TargetMode v);
const char* to_string(PenaltyPlacement v);

struct ScoreConfig {
  int m_critics = 5;
  double beta = 0.2;
  double lambda0 = 1.0;
  double gamma_bc = 0.96;
  long d_bc = 10'000;
  int policy_delay = 2;
  double tau = 0.005;
  double smoothing_sigma = 0.2;
  double noise_clip = 0.5;
  double qnorm_alpha = 2.5;
  int batch_size = 256;
  long total_steps = 50'000;
  double discount = 0.99;
  double actor_lr = 3e-4;
  double critic_lr = 3e-4;
  int hidden_width = 64;
  int hidden_layers = 2;
  long steps_per_epoch = 1'000;
  int eval_episodes = 10;
  UncertaintySource uncertainty_source = UncertaintySource::kOnline;
  TargetMode target_mode = TargetMode::kPerCritic;
  PenaltyPlacement penalty_placement = PenaltyPlacement::kCurrent;
  SoftUpdateConvention soft_update = SoftUpdateConvention::kOnlineWeighted;
  /// Probability that a critic sees a given sample; 1 disables bootstrap masks.
  double bootstrap_prob = 1.0;
  /// Standardize observations with dataset mean and std before every network.
  bool normalize_obs = false;
  /// Abort when any |Q| exceeds this multiple of max|r| / (1 - discount).
  double divergence_factor = 10.0;
  std::string variant = "baseline";

  /// Throws invalid-input on out-of-range fields.
  void validate() const;
  nlohmann::json to_json() const;
  /// Missing keys keep their defaults; unknown keys are rejected.
  static ScoreConfig from_json(const nlohmann::json& doc, const ScoreConfig& base);
  static ScoreConfig from_json(const nlohmann::json& doc);
};

/// lambda0 * gamma_bc^floor(step / d_bc), computed by the same repeated
/// multiplication as the training loop.
double lambda_schedule(long step, const ScoreConfig& config);

/// Mini-batch with one column per sample.
struct Batch {
  Eigen::MatrixXd obs;
  Eigen::MatrixXd act;
  Eigen::MatrixXd next_obs;
  Eigen::RowVectorXd reward;
  Eigen::RowVectorXd not_done;
};

/// Uniform sampling with replacement.
Batch sample_batch(const OfflineDataset& data, int batch_size, Rng& rng);

/// Critic inputs [obs; act].
Eigen::MatrixXd critic_input(const Eigen::MatrixXd& obs, const Eigen::MatrixXd& act);

/// pi'(s') + clip(N(0, sigma^2), -c, c), clipped to [-max_action, max_action].
Eigen::MatrixXd smoothed_target_action(const Mlp& actor_target, const Eigen::MatrixXd& next_obs,
                                       double sigma, double noise_clip, double max_action, Rng& rng);

/// Per-sample population standard deviation of the critics' outputs.
Eigen::RowVectorXd ensemble_uncertainty(const std::vector<Mlp>& critics, const Eigen::MatrixXd& obs,
                                        const Eigen::MatrixXd& act);

struct PenaltyWeights {
  double current = 0.0;  // multiplies u(s, a)
  double next = 0.0;     // multiplies u(s', a') inside the discounted bootstrap
};

/// Zero for the min-ensemble target; beta split by penalty placement otherwise.
PenaltyWeights penalty_weights(const ScoreConfig& config);

/// y_i for every critic. `next_action` is shared across critics.
std::vector<Eigen::RowVectorXd> critic_targets(const std::vector<Mlp>& online,
                                               const std::vector<Mlp>& targets, const Batch& batch,
                                               const Eigen::MatrixXd& next_action,
                                               const ScoreConfig& config);

struct ActorObjective {
  double objective = 0.0;
  double q_term = 0.0;
  double bc_term = 0.0;
  /// Gradient of the objective (ascent direction) w.r.t. actor parameters.
  Eigen::VectorXd grad;
};

/// objective = qnorm_alpha / mean|min_i Q_i| * mean(min_i Q_i(s, pi(s)))
///             - lambda * mean ||pi(s) - a||^2, normalizer held constant.
ActorObjective actor_loss(const std::vector<Mlp>& critics, const Mlp& actor, const Batch& batch,
                          double lambda, double qnorm_alpha, double max_action = 1.0);

/// Scaled actor output max_action * tanh(.) for a batch of observations.
Eigen::MatrixXd actor_act(const Mlp& actor, const Eigen::MatrixXd& obs, double max_action = 1.0);

struct EpochRecord {
  long epoch = 0;
  long step = 0;
  double mean_return = 0.0;
  double normalized_score = 0.0;
  double q_mean = 0.0;
  double q_min = 0.0;
  double q_max = 0.0;
  double u_mean = 0.0;
  double lambda_t = 0.0;
  double critic_loss = 0.0;
  double actor_obj = 0.0;
};

struct TrainingLog {
  std::vector<EpochRecord> epochs;
  bool diverged = false;
  long divergence_step = 0;
  std::string divergence_message;

  void write_csv(const std::filesystem::path& path) const;
  static std::string csv_header();
};

struct EvalResult {
  double mean_return = 0.0;
  double normalized_score = 0.0;
  std::vector<double> returns;
};

/// Deterministic rollouts of the online actor on the point mass.
EvalResult evaluate(const Mlp& actor, const Eigen::VectorXd& obs_mean, const Eigen::VectorXd& obs_std,
                    const EnvReference& ref, int episodes, std::uint64_t seed);

/// Algorithm 1 state: ensemble, actor, targets, optimizers and lambda.
class ScoreTrainer {
 public:
  ScoreTrainer(const OfflineDataset& data, EnvReference ref, ScoreConfig config, std::uint64_t seed);

  /// One iteration of the Algorithm 1 loop body. Throws DivergenceError.
  void step();
  /// Runs to total_steps with epoch-boundary evaluation. Divergence is
  /// recorded in the log and rethrown.
  const TrainingLog& run();

  long current_step() const { return step_; }
  double lambda() const { return lambda_; }
  const ScoreConfig& config() const { return config_; }
  const TrainingLog& log() const { return log_; }
  const std::vector<Mlp>& critics() const { return critics_; }
  const std::vector<Mlp>& critic_targets_nets() const { return targets_; }
  const Mlp& actor() const { return actor_; }
  const Mlp& actor_target() const { return actor_target_; }
  const Eigen::VectorXd& obs_mean() const { return obs_mean_; }
  const Eigen::VectorXd& obs_std() const { return obs_std_; }
  double v_max() const { return v_max_; }

  EvalResult evaluate_now(std::uint64_t eval_seed, int episodes) const;
  /// Checkpoints of every network under `dir`; returns written paths.
  std::vector<std::filesystem::path> save(const std::filesystem::path& dir) const;

 private:
  struct EpochAccumulator {
    double q_sum = 0.0, q_min = 0.0, q_max = 0.0, u_sum = 0.0, loss_sum = 0.0, actor_sum = 0.0;
    long q_count = 0, steps = 0, actor_updates = 0;
  };

  void close_epoch();

  ScoreConfig config_;
  EnvReference ref_;
  std::uint64_t seed_;
  OfflineDataset data_;
  Eigen::VectorXd obs_mean_;
  Eigen::VectorXd obs_std_;
  double max_action_ = 1.0;
  double v_max_ = 0.0;
  std::vector<Mlp> critics_;
  std::vector<Mlp> targets_;
  std::vector<AdamState> critic_opt_;
  Mlp actor_;
  Mlp actor_target_;
  AdamState actor_opt_;
  double lambda_ = 0.0;
  long step_ = 0;
  Rng rng_;
  TrainingLog log_;
  EpochAccumulator acc_;
  std::vector<Eigen::RowVectorXd> masks_;
  std::vector<MlpCache> caches_;
  MlpGradients grads_;
};

/// Convenience wrapper: ScoreTrainer(...).run().
TrainingLog train(const OfflineDataset& data, const EnvReference& ref, const ScoreConfig& config,
                  std::uint64_t seed);

struct NamedConfig {
  std::string name;
  ScoreConfig config;
};

/// Baseline plus no-bc, no-pessimism, fixed-bc, min-q, penalty-on-next, penalty-both.
std::vector<NamedConfig> ablation_variants(const ScoreConfig& base);
ScoreConfig apply_variant(const ScoreConfig& base, const std::string& name);

struct CoverageOptions {
  int grid = 12;
  double extent = 3.0;
  /// Velocity used for probe states.
  double probe_speed = 0.0;
  int probe_actions_per_axis = 3;
};

struct CoverageReport {
  double spearman = 0.0;
  /// Per grid cell: visit count, count bin (0 for empty, else 1 + floor(log10 n)) and mean u.
  std::vector<long> cell_counts;
  std::vector<int> cell_bins;
  std::vector<double> cell_u;

  nlohmann::json to_json() const;
};

/// Bins dataset positions on a grid, probes the ensemble uncertainty at each
/// cell centre and rank-correlates it with the cell's count bin.
CoverageReport uncertainty_coverage(const ScoreTrainer& trainer, const OfflineDataset& data,
                                    const CoverageOptions& options = {});

}  // namespace score
