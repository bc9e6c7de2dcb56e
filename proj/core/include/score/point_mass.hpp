#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "score/rng.hpp"

namespace score {

/// Deterministic 2-D point mass. Observation (px, py, vx, vy); action is an
/// acceleration in [-1, 1]^2. pos += dt vel, then vel += dt a clipped to
/// [-2, 2]^2; reward is -||pos - goal|| at the new position.
class PointMassEnv {
 public:
  static constexpr int kObsDim = 4;
  static constexpr int kActDim = 2;
  static constexpr double kDt = 0.05;
  static constexpr double kMaxSpeed = 2.0;
  static constexpr double kMaxAction = 1.0;
  static constexpr int kHorizon = 200;
  static constexpr double kStartBox = 1.0;
  static inline const std::string kEnvId = "point-mass";

  struct Step {
    Eigen::Vector4d obs;
    double reward;
  };

  /// Pure transition function; the action is clipped to the action box first.
  static Step transition(const Eigen::Vector4d& obs, const Eigen::Vector2d& action);
  /// Start position uniform in [-1, 1]^2 with zero velocity.
  static Eigen::Vector4d sample_start(Rng& rng);
  static Eigen::Vector2d goal() { return Eigen::Vector2d::Zero(); }
};

/// Proportional-derivative controller a = clip(-kp (pos - goal) - kd vel).
struct PdGains {
  double kp = 10.0;
  double kd = 5.0;
};

Eigen::Vector2d pd_action(const PdGains& gains, const Eigen::Vector4d& obs);

enum class BehaviorKind { kRandom, kMedium, kExpert, kMediumReplayMix, kMediumExpertMix };

const char* to_string(BehaviorKind kind);
BehaviorKind behavior_kind_from_string(const std::string& name);

struct BehaviorPolicySpec {
  BehaviorKind kind = BehaviorKind::kMedium;
  PdGains expert_gains;
  double noise_std = 0.3;
  double random_prob = 0.2;
  /// Per-episode component proportions; filled by default_spec() for mixes.
  std::vector<std::pair<BehaviorKind, double>> mix;

  static BehaviorPolicySpec default_spec(BehaviorKind kind);
  nlohmann::json to_json() const;
};

/// Stateful scripted policy. Mixtures draw one component per episode.
class ScriptedPolicy {
 public:
  explicit ScriptedPolicy(BehaviorPolicySpec spec);

  void begin_episode(Rng& rng);
  Eigen::Vector2d act(const Eigen::Vector4d& obs, Rng& rng) const;
  BehaviorKind active_component() const { return active_; }
  const BehaviorPolicySpec& spec() const { return spec_; }

 private:
  BehaviorPolicySpec spec_;
  BehaviorKind active_;
};

ScriptedPolicy scripted_policy(const BehaviorPolicySpec& spec);

/// Returns of `episodes` rollouts whose start states come from `seed`.
/// `act` maps an observation batch (4 x n) to actions (2 x n); all episodes
/// advance in lockstep so one call serves every episode at a time step.
using BatchActor = std::function<Eigen::MatrixXd(const Eigen::MatrixXd&)>;
std::vector<double> rollout_returns(const BatchActor& act, int episodes, std::uint64_t seed);
std::vector<double> rollout_returns(const ScriptedPolicy& policy, int episodes, std::uint64_t seed);

/// Reference returns used for score normalization.
struct EnvReference {
  std::string env_id;
  double random_ref = 0.0;
  double expert_ref = 0.0;
  PdGains expert_gains;
  int reference_episodes = 100;
  std::uint64_t reference_seed = 0;
  int search_samples = 0;

  double normalize(double ret) const { return 100.0 * (ret - random_ref) / (expert_ref - random_ref); }
  nlohmann::json to_json() const;
  static EnvReference from_json(const std::string& env_id, const nlohmann::json& doc);
};

struct CalibrationOptions {
  int search_samples = 10'000;
  int reference_episodes = 100;
  std::uint64_t reference_seed = 20240601;
  std::uint64_t search_seed = 1;
  double kp_max = 20.0;
  double kd_max = 10.0;
};

/// random_ref: uniform-random policy mean return on the reference protocol.
/// expert_ref: best mean return over `search_samples` random PD gains on the
/// same protocol.
EnvReference calibrate_point_mass(const CalibrationOptions& options = {});

class EnvRegistry {
 public:
  EnvRegistry() = default;
  explicit EnvRegistry(std::vector<EnvReference> refs) : refs_(std::move(refs)) {}

  static EnvRegistry load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;
  /// Throws kMissingReference for unknown ids.
  const EnvReference& at(const std::string& env_id) const;
  void put(EnvReference ref);
  nlohmann::json to_json() const;

 private:
  std::vector<EnvReference> refs_;
};

/// $SCORE_ENV_REGISTRY if set, otherwise the registry shipped with the sources.
std::filesystem::path default_registry_path();

}  // namespace score
