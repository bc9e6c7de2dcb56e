#include "score/point_mass.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <numeric>

#include "score/error.hpp"

#ifndef SCORE_SOURCE_REGISTRY
#define SCORE_SOURCE_REGISTRY "data/env_registry.json"
#endif

namespace score {

PointMassEnv::Step PointMassEnv::transition(const Eigen::Vector4d& obs, const Eigen::Vector2d& action) {
  const Eigen::Vector2d a = action.cwiseMax(-kMaxAction).cwiseMin(kMaxAction);
  Step out;
  out.obs.head<2>() = obs.head<2>() + kDt * obs.tail<2>();
  out.obs.tail<2>() = (obs.tail<2>() + kDt * a).cwiseMax(-kMaxSpeed).cwiseMin(kMaxSpeed);
  out.reward = -(out.obs.head<2>() - goal()).norm();
  return out;
}

Eigen::Vector4d PointMassEnv::sample_start(Rng& rng) {
  std::uniform_real_distribution<double> box(-kStartBox, kStartBox);
  Eigen::Vector4d obs = Eigen::Vector4d::Zero();
  obs(0) = box(rng);
  obs(1) = box(rng);
  return obs;
}

Eigen::Vector2d pd_action(const PdGains& gains, const Eigen::Vector4d& obs) {
  const Eigen::Vector2d raw =
      -gains.kp * (obs.head<2>() - PointMassEnv::goal()) - gains.kd * obs.tail<2>();
  return raw.cwiseMax(-PointMassEnv::kMaxAction).cwiseMin(PointMassEnv::kMaxAction);
}

const char* to_string(BehaviorKind kind) {
  switch (kind) {
    case BehaviorKind::kRandom: return "random";
    case BehaviorKind::kMedium: return "medium";
    case BehaviorKind::kExpert: return "expert";
    case BehaviorKind::kMediumReplayMix: return "medium_replay_mix";
    case BehaviorKind::kMediumExpertMix: return "medium_expert_mix";
  }
  return "unknown";
}

BehaviorKind behavior_kind_from_string(const std::string& name) {
  for (BehaviorKind k : {BehaviorKind::kRandom, BehaviorKind::kMedium, BehaviorKind::kExpert,
                         BehaviorKind::kMediumReplayMix, BehaviorKind::kMediumExpertMix}) {
    if (name == to_string(k)) return k;
  }
  fail(ErrorKind::kInvalidInput, "unknown behavior '" + name + "'");
}

BehaviorPolicySpec BehaviorPolicySpec::default_spec(BehaviorKind kind) {
  BehaviorPolicySpec spec;
  spec.kind = kind;
  if (kind == BehaviorKind::kMediumReplayMix) {
    spec.mix = {{BehaviorKind::kRandom, 0.3}, {BehaviorKind::kMedium, 0.7}};
  } else if (kind == BehaviorKind::kMediumExpertMix) {
    spec.mix = {{BehaviorKind::kMedium, 0.5}, {BehaviorKind::kExpert, 0.5}};
  }
  return spec;
}

nlohmann::json BehaviorPolicySpec::to_json() const {
  nlohmann::json mix_doc = nlohmann::json::array();
  for (const auto& [k, w] : mix) mix_doc.push_back({{"kind", to_string(k)}, {"weight", w}});
  return {{"kind", to_string(kind)},
          {"expert_gains", {{"kp", expert_gains.kp}, {"kd", expert_gains.kd}}},
          {"noise_std", noise_std},
          {"random_prob", random_prob},
          {"mix", mix_doc}};
}

ScriptedPolicy::ScriptedPolicy(BehaviorPolicySpec spec) : spec_(std::move(spec)), active_(spec_.kind) {
  require(spec_.noise_std >= 0.0, "scripted policy: noise_std must be non-negative");
  require(spec_.random_prob >= 0.0 && spec_.random_prob <= 1.0,
          "scripted policy: random_prob must lie in [0, 1]");
  const bool is_mix =
      spec_.kind == BehaviorKind::kMediumReplayMix || spec_.kind == BehaviorKind::kMediumExpertMix;
  if (is_mix) {
    require(!spec_.mix.empty(), "scripted policy: mixture without components");
    double total = 0.0;
    for (const auto& [k, w] : spec_.mix) {
      require(w >= 0.0, "scripted policy: negative mixture weight");
      require(k == BehaviorKind::kRandom || k == BehaviorKind::kMedium || k == BehaviorKind::kExpert,
              "scripted policy: mixture components must be random, medium or expert");
      total += w;
    }
    require(std::abs(total - 1.0) <= 1e-12, "scripted policy: mixture proportions must sum to 1");
    active_ = spec_.mix.front().first;
  }
}

void ScriptedPolicy::begin_episode(Rng& rng) {
  if (spec_.mix.empty()) return;
  const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  double acc = 0.0;
  active_ = spec_.mix.back().first;
  for (const auto& [k, w] : spec_.mix) {
    acc += w;
    if (u < acc) {
      active_ = k;
      break;
    }
  }
}

Eigen::Vector2d ScriptedPolicy::act(const Eigen::Vector4d& obs, Rng& rng) const {
  std::uniform_real_distribution<double> box(-PointMassEnv::kMaxAction, PointMassEnv::kMaxAction);
  switch (active_) {
    case BehaviorKind::kRandom: {
      const double x = box(rng);
      return {x, box(rng)};
    }
    case BehaviorKind::kExpert:
      return pd_action(spec_.expert_gains, obs);
    case BehaviorKind::kMedium: {
      if (std::uniform_real_distribution<double>(0.0, 1.0)(rng) < spec_.random_prob) {
        const double x = box(rng);
        return {x, box(rng)};
      }
      std::normal_distribution<double> noise(0.0, spec_.noise_std);
      Eigen::Vector2d a = pd_action(spec_.expert_gains, obs);
      a(0) += noise(rng);
      a(1) += noise(rng);
      return a.cwiseMax(-PointMassEnv::kMaxAction).cwiseMin(PointMassEnv::kMaxAction);
    }
    default:
      fail(ErrorKind::kInvalidInput, "scripted policy: mixture was not resolved to a component");
  }
}

ScriptedPolicy scripted_policy(const BehaviorPolicySpec& spec) { return ScriptedPolicy(spec); }

std::vector<double> rollout_returns(const BatchActor& act, int episodes, std::uint64_t seed) {
  require(episodes >= 1, "rollout_returns: episodes must be >= 1");
  Eigen::MatrixXd obs(PointMassEnv::kObsDim, episodes);
  for (int e = 0; e < episodes; ++e) {
    Rng rng = make_rng(seed, static_cast<std::uint64_t>(e));
    obs.col(e) = PointMassEnv::sample_start(rng);
  }
  std::vector<double> returns(episodes, 0.0);
  for (int t = 0; t < PointMassEnv::kHorizon; ++t) {
    const Eigen::MatrixXd actions = act(obs);
    require(actions.rows() == PointMassEnv::kActDim && actions.cols() == episodes,
            "rollout_returns: actor returned the wrong shape");
    for (int e = 0; e < episodes; ++e) {
      const auto step = PointMassEnv::transition(obs.col(e), actions.col(e));
      obs.col(e) = step.obs;
      returns[e] += step.reward;
    }
  }
  return returns;
}

std::vector<double> rollout_returns(const ScriptedPolicy& policy, int episodes, std::uint64_t seed) {
  require(episodes >= 1, "rollout_returns: episodes must be >= 1");
  std::vector<double> returns;
  returns.reserve(episodes);
  ScriptedPolicy local = policy;
  for (int e = 0; e < episodes; ++e) {
    Rng rng = make_rng(seed, static_cast<std::uint64_t>(e));
    Eigen::Vector4d obs = PointMassEnv::sample_start(rng);
    local.begin_episode(rng);
    double ret = 0.0;
    for (int t = 0; t < PointMassEnv::kHorizon; ++t) {
      const auto step = PointMassEnv::transition(obs, local.act(obs, rng));
      obs = step.obs;
      ret += step.reward;
    }
    returns.push_back(ret);
  }
  return returns;
}

nlohmann::json EnvReference::to_json() const {
  return {{"random_ref", random_ref},
          {"expert_ref", expert_ref},
          {"expert_gains", {{"kp", expert_gains.kp}, {"kd", expert_gains.kd}}},
          {"reference_episodes", reference_episodes},
          {"reference_seed", reference_seed},
          {"search_samples", search_samples}};
}

EnvReference EnvReference::from_json(const std::string& env_id, const nlohmann::json& doc) {
  EnvReference ref;
  ref.env_id = env_id;
  try {
    ref.random_ref = doc.at("random_ref").get<double>();
    ref.expert_ref = doc.at("expert_ref").get<double>();
    if (doc.contains("expert_gains")) {
      ref.expert_gains.kp = doc["expert_gains"].at("kp").get<double>();
      ref.expert_gains.kd = doc["expert_gains"].at("kd").get<double>();
    }
    ref.reference_episodes = doc.value("reference_episodes", 100);
    ref.reference_seed = doc.value("reference_seed", std::uint64_t{0});
    ref.search_samples = doc.value("search_samples", 0);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::kInvalidInput, "registry entry '" + env_id + "': " + e.what());
  }
  require(ref.expert_ref > ref.random_ref, "registry entry '" + env_id + "': expert_ref <= random_ref");
  return ref;
}

EnvReference calibrate_point_mass(const CalibrationOptions& options) {
  require(options.search_samples >= 1 && options.reference_episodes >= 1,
          "calibrate_point_mass: need positive sample counts");
  EnvReference ref;
  ref.env_id = PointMassEnv::kEnvId;
  ref.reference_episodes = options.reference_episodes;
  ref.reference_seed = options.reference_seed;
  ref.search_samples = options.search_samples;

  const auto mean_of = [](const std::vector<double>& xs) {
    return std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
  };
  ref.random_ref = mean_of(rollout_returns(scripted_policy(BehaviorPolicySpec::default_spec(BehaviorKind::kRandom)),
                                           options.reference_episodes, options.reference_seed));

  Rng rng = make_rng(options.search_seed);
  std::uniform_real_distribution<double> kp_dist(0.0, options.kp_max);
  std::uniform_real_distribution<double> kd_dist(0.0, options.kd_max);
  ref.expert_ref = -std::numeric_limits<double>::infinity();
  for (int i = 0; i < options.search_samples; ++i) {
    BehaviorPolicySpec spec = BehaviorPolicySpec::default_spec(BehaviorKind::kExpert);
    spec.expert_gains.kp = kp_dist(rng);
    spec.expert_gains.kd = kd_dist(rng);
    const double ret = mean_of(rollout_returns(scripted_policy(spec), options.reference_episodes,
                                               options.reference_seed));
    if (ret > ref.expert_ref) {
      ref.expert_ref = ret;
      ref.expert_gains = spec.expert_gains;
    }
  }
  return ref;
}

EnvRegistry EnvRegistry::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::kIo, "cannot read env registry " + path.string());
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::kInvalidInput, "env registry " + path.string() + ": " + e.what());
  }
  require(doc.is_object(), "env registry " + path.string() + ": expected an object");
  EnvRegistry reg;
  for (const auto& [id, entry] : doc.items()) reg.put(EnvReference::from_json(id, entry));
  return reg;
}

void EnvRegistry::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) fail(ErrorKind::kIo, "cannot write env registry " + path.string());
  out << to_json().dump(2) << '\n';
  if (!out) fail(ErrorKind::kIo, "short write for env registry " + path.string());
}

const EnvReference& EnvRegistry::at(const std::string& env_id) const {
  for (const auto& r : refs_) {
    if (r.env_id == env_id) return r;
  }
  fail(ErrorKind::kMissingReference, "no reference returns registered for env '" + env_id + "'");
}

void EnvRegistry::put(EnvReference ref) {
  for (auto& r : refs_) {
    if (r.env_id == ref.env_id) {
      r = std::move(ref);
      return;
    }
  }
  refs_.push_back(std::move(ref));
}

nlohmann::json EnvRegistry::to_json() const {
  nlohmann::json doc = nlohmann::json::object();
  for (const auto& r : refs_) doc[r.env_id] = r.to_json();
  return doc;
}

std::filesystem::path default_registry_path() {
  if (const char* env = std::getenv("SCORE_ENV_REGISTRY"); env && *env) return env;
  return SCORE_SOURCE_REGISTRY;
}

}  // namespace score
