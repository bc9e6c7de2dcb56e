#include "score/agent.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include "score/error.hpp"
#include "score/stats.hpp"

namespace score {

namespace {

template <typename Enum, std::size_t N>
Enum enum_from(const std::string& name, const std::pair<const char*, Enum> (&table)[N],
               const char* field) {
  for (const auto& [key, value] : table) {
    if (name == key) return value;
  }
  fail(ErrorKind::kInvalidInput, std::string("unknown ") + field + " '" + name + "'");
}

constexpr std::pair<const char*, UncertaintySource> kSources[] = {
    {"online", UncertaintySource::kOnline}, {"target", UncertaintySource::kTarget}};
constexpr std::pair<const char*, TargetMode> kTargetModes[] = {
    {"per-critic", TargetMode::kPerCritic}, {"min-ensemble", TargetMode::kMinEnsemble}};
constexpr std::pair<const char*, PenaltyPlacement> kPlacements[] = {
    {"current", PenaltyPlacement::kCurrent},
    {"next", PenaltyPlacement::kNext},
    {"both", PenaltyPlacement::kBoth}};

// Deviations are taken from the first member so identical members give exactly 0.
Eigen::RowVectorXd population_std(const std::vector<Eigen::RowVectorXd>& values) {
  const auto m = static_cast<double>(values.size());
  const Eigen::RowVectorXd& pivot = values.front();
  Eigen::RowVectorXd shift = Eigen::RowVectorXd::Zero(pivot.size());
  for (const auto& v : values) shift += v - pivot;
  shift /= m;
  Eigen::RowVectorXd var = Eigen::RowVectorXd::Zero(pivot.size());
  for (const auto& v : values) var.array() += (v - pivot - shift).array().square();
  return (var / m).array().sqrt().matrix();
}

std::vector<Eigen::RowVectorXd> forward_all(const std::vector<Mlp>& nets, const Eigen::MatrixXd& input) {
  std::vector<Eigen::RowVectorXd> out;
  out.reserve(nets.size());
  for (const auto& net : nets) out.emplace_back(net.forward(input));
  return out;
}

// Composes y_i from already evaluated target-critic values and uncertainties.
std::vector<Eigen::RowVectorXd> compose_targets(const std::vector<Eigen::RowVectorXd>& q_next,
                                                const Eigen::RowVectorXd& u_current,
                                                const Eigen::RowVectorXd& u_next, const Batch& batch,
                                                const ScoreConfig& config) {
  const PenaltyWeights w = penalty_weights(config);
  const Eigen::ArrayXXd discount = config.discount * batch.not_done.array();
  std::vector<Eigen::RowVectorXd> y;
  y.reserve(q_next.size());
  if (config.target_mode == TargetMode::kMinEnsemble) {
    Eigen::RowVectorXd q_min = q_next.front();
    for (const auto& q : q_next) q_min = q_min.cwiseMin(q);
    const Eigen::RowVectorXd shared = batch.reward.array() + discount * q_min.array();
    y.assign(q_next.size(), shared);
    return y;
  }
  for (const auto& q : q_next) {
    Eigen::ArrayXXd next = q.array();
    if (w.next != 0.0) next -= w.next * u_next.array();
    Eigen::RowVectorXd yi = batch.reward.array() + discount * next;
    if (w.current != 0.0) yi.array() -= w.current * u_current.array();
    y.push_back(std::move(yi));
  }
  return y;
}

std::vector<Mlp> build_critics(int m, const std::vector<int>& dims, Rng& rng) {
  std::vector<Mlp> nets;
  nets.reserve(m);
  for (int i = 0; i < m; ++i) nets.push_back(Mlp::initialized(dims, Activation::kIdentity, rng));
  return nets;
}

Eigen::MatrixXd standardize(const Eigen::MatrixXd& obs, const Eigen::VectorXd& mean,
                            const Eigen::VectorXd& std) {
  return ((obs.colwise() - mean).array().colwise() / std.array()).matrix();
}

}  // namespace

const char* to_string(UncertaintySource v) {
  for (const auto& [key, value] : kSources) {
    if (value == v) return key;
  }
  return "unknown";
}
const char* to_string(TargetMode v) {
  for (const auto& [key, value] : kTargetModes) {
    if (value == v) return key;
  }
  return "unknown";
}
const char* to_string(PenaltyPlacement v) {
  for (const auto& [key, value] : kPlacements) {
    if (value == v) return key;
  }
  return "unknown";
}

void ScoreConfig::validate() const {
  require(m_critics >= 2, "m_critics must be >= 2");
  require(beta >= 0.0, "beta must be >= 0");
  require(lambda0 >= 0.0, "lambda0 must be >= 0");
  require(gamma_bc > 0.0 && gamma_bc <= 1.0, "gamma_bc must lie in (0, 1]");
  require(d_bc >= 1, "d_bc must be >= 1");
  require(policy_delay >= 1, "policy_delay must be >= 1");
  require(tau > 0.0 && tau < 1.0, "tau must lie in (0, 1)");
  require(smoothing_sigma >= 0.0, "smoothing_sigma must be >= 0");
  require(noise_clip >= 0.0, "noise_clip must be >= 0");
  require(qnorm_alpha >= 0.0, "qnorm_alpha must be >= 0");
  require(batch_size >= 1, "batch_size must be >= 1");
  require(total_steps >= 0, "total_steps must be >= 0");
  require(discount >= 0.0 && discount < 1.0, "discount must lie in [0, 1)");
  require(actor_lr > 0.0 && critic_lr > 0.0, "learning rates must be positive");
  require(hidden_width >= 1 && hidden_layers >= 1, "hidden_width and hidden_layers must be >= 1");
  require(steps_per_epoch >= 1, "steps_per_epoch must be >= 1");
  require(eval_episodes >= 1, "eval_episodes must be >= 1");
  require(bootstrap_prob > 0.0 && bootstrap_prob <= 1.0, "bootstrap_prob must lie in (0, 1]");
  require(divergence_factor > 0.0, "divergence_factor must be positive");
}

nlohmann::json ScoreConfig::to_json() const {
  return {{"m_critics", m_critics},
          {"beta", beta},
          {"lambda0", lambda0},
          {"gamma_bc", gamma_bc},
          {"d_bc", d_bc},
          {"policy_delay", policy_delay},
          {"tau", tau},
          {"smoothing_sigma", smoothing_sigma},
          {"noise_clip", noise_clip},
          {"qnorm_alpha", qnorm_alpha},
          {"batch_size", batch_size},
          {"total_steps", total_steps},
          {"discount", discount},
          {"actor_lr", actor_lr},
          {"critic_lr", critic_lr},
          {"hidden_width", hidden_width},
          {"hidden_layers", hidden_layers},
          {"steps_per_epoch", steps_per_epoch},
          {"eval_episodes", eval_episodes},
          {"uncertainty_source", to_string(uncertainty_source)},
          {"target_mode", to_string(target_mode)},
          {"penalty_placement", to_string(penalty_placement)},
          {"soft_update", to_string(soft_update)},
          {"bootstrap_prob", bootstrap_prob},
          {"normalize_obs", normalize_obs},
          {"divergence_factor", divergence_factor},
          {"variant", variant}};
}

ScoreConfig ScoreConfig::from_json(const nlohmann::json& doc, const ScoreConfig& base) {
  require(doc.is_object(), "ScoreConfig: expected a JSON object");
  ScoreConfig c = base;
  const nlohmann::json known = c.to_json();
  for (const auto& [key, value] : doc.items()) {
    require(known.contains(key), "ScoreConfig: unknown key '" + key + "'");
  }
  try {
    auto get = [&doc](const char* key, auto& field) {
      if (doc.contains(key)) field = doc.at(key).get<std::decay_t<decltype(field)>>();
    };
    get("m_critics", c.m_critics);
    get("beta", c.beta);
    get("lambda0", c.lambda0);
    get("gamma_bc", c.gamma_bc);
    get("d_bc", c.d_bc);
    get("policy_delay", c.policy_delay);
    get("tau", c.tau);
    get("smoothing_sigma", c.smoothing_sigma);
    get("noise_clip", c.noise_clip);
    get("qnorm_alpha", c.qnorm_alpha);
    get("batch_size", c.batch_size);
    get("total_steps", c.total_steps);
    get("discount", c.discount);
    get("actor_lr", c.actor_lr);
    get("critic_lr", c.critic_lr);
    get("hidden_width", c.hidden_width);
    get("hidden_layers", c.hidden_layers);
    get("steps_per_epoch", c.steps_per_epoch);
    get("eval_episodes", c.eval_episodes);
    get("bootstrap_prob", c.bootstrap_prob);
    get("normalize_obs", c.normalize_obs);
    get("divergence_factor", c.divergence_factor);
    get("variant", c.variant);
    if (doc.contains("uncertainty_source")) {
      c.uncertainty_source =
          enum_from(doc.at("uncertainty_source").get<std::string>(), kSources, "uncertainty_source");
    }
    if (doc.contains("target_mode")) {
      c.target_mode = enum_from(doc.at("target_mode").get<std::string>(), kTargetModes, "target_mode");
    }
    if (doc.contains("penalty_placement")) {
      c.penalty_placement =
          enum_from(doc.at("penalty_placement").get<std::string>(), kPlacements, "penalty_placement");
    }
    if (doc.contains("soft_update")) {
      c.soft_update = soft_update_convention_from_string(doc.at("soft_update").get<std::string>());
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::kInvalidInput, std::string("ScoreConfig: ") + e.what());
  }
  c.validate();
  return c;
}

ScoreConfig ScoreConfig::from_json(const nlohmann::json& doc) { return from_json(doc, ScoreConfig{}); }

double lambda_schedule(long step, const ScoreConfig& config) {
  require(step >= 0, "lambda_schedule: step must be >= 0");
  require(config.d_bc >= 1, "lambda_schedule: d_bc must be >= 1");
  double lambda = config.lambda0;
  for (long k = step / config.d_bc; k > 0; --k) lambda = config.gamma_bc * lambda;
  return lambda;
}

PenaltyWeights penalty_weights(const ScoreConfig& config) {
  if (config.target_mode == TargetMode::kMinEnsemble) return {};
  switch (config.penalty_placement) {
    case PenaltyPlacement::kCurrent: return {config.beta, 0.0};
    case PenaltyPlacement::kNext: return {0.0, config.beta};
    case PenaltyPlacement::kBoth: return {0.5 * config.beta, 0.5 * config.beta};
  }
  return {};
}

Batch sample_batch(const OfflineDataset& data, int batch_size, Rng& rng) {
  require(data.size() >= 1, "sample_batch: dataset is empty");
  require(batch_size >= 1, "sample_batch: batch_size must be >= 1");
  std::uniform_int_distribution<Eigen::Index> pick(0, data.size() - 1);
  Batch b;
  b.obs.resize(data.obs_dim, batch_size);
  b.act.resize(data.act_dim, batch_size);
  b.next_obs.resize(data.obs_dim, batch_size);
  b.reward.resize(batch_size);
  b.not_done.resize(batch_size);
  for (int j = 0; j < batch_size; ++j) {
    const Eigen::Index i = pick(rng);
    b.obs.col(j) = data.obs.col(i);
    b.act.col(j) = data.act.col(i);
    b.next_obs.col(j) = data.next_obs.col(i);
    b.reward(j) = data.reward(i);
    b.not_done(j) = 1.0 - data.done(i);
  }
  return b;
}

Eigen::MatrixXd critic_input(const Eigen::MatrixXd& obs, const Eigen::MatrixXd& act) {
  require(obs.cols() == act.cols(), "critic_input: observation and action batch sizes differ");
  Eigen::MatrixXd in(obs.rows() + act.rows(), obs.cols());
  in.topRows(obs.rows()) = obs;
  in.bottomRows(act.rows()) = act;
  return in;
}

Eigen::MatrixXd actor_act(const Mlp& actor, const Eigen::MatrixXd& obs, double max_action) {
  return max_action * actor.forward(obs);
}

Eigen::MatrixXd smoothed_target_action(const Mlp& actor_target, const Eigen::MatrixXd& next_obs,
                                       double sigma, double noise_clip, double max_action, Rng& rng) {
  require(sigma >= 0.0, "smoothed_target_action: sigma must be >= 0");
  Eigen::MatrixXd a = actor_act(actor_target, next_obs, max_action);
  if (sigma > 0.0) {
    std::normal_distribution<double> noise(0.0, sigma);
    for (Eigen::Index j = 0; j < a.cols(); ++j) {
      for (Eigen::Index d = 0; d < a.rows(); ++d) {
        a(d, j) += std::clamp(noise(rng), -noise_clip, noise_clip);
      }
    }
  }
  return a.cwiseMax(-max_action).cwiseMin(max_action);
}

Eigen::RowVectorXd ensemble_uncertainty(const std::vector<Mlp>& critics, const Eigen::MatrixXd& obs,
                                        const Eigen::MatrixXd& act) {
  require(critics.size() >= 2, "ensemble_uncertainty: need at least two critics");
  return population_std(forward_all(critics, critic_input(obs, act)));
}

std::vector<Eigen::RowVectorXd> critic_targets(const std::vector<Mlp>& online,
                                               const std::vector<Mlp>& targets, const Batch& batch,
                                               const Eigen::MatrixXd& next_action,
                                               const ScoreConfig& config) {
  require(online.size() == targets.size() && online.size() >= 2,
          "critic_targets: online and target ensembles must match and hold >= 2 critics");
  const std::vector<Mlp>& source =
      config.uncertainty_source == UncertaintySource::kOnline ? online : targets;
  const Eigen::MatrixXd next_in = critic_input(batch.next_obs, next_action);
  const PenaltyWeights w = penalty_weights(config);
  const Eigen::Index n = batch.reward.size();
  Eigen::RowVectorXd u_cur = Eigen::RowVectorXd::Zero(n);
  Eigen::RowVectorXd u_next = Eigen::RowVectorXd::Zero(n);
  if (w.current != 0.0) u_cur = ensemble_uncertainty(source, batch.obs, batch.act);
  if (w.next != 0.0) u_next = population_std(forward_all(source, next_in));
  return compose_targets(forward_all(targets, next_in), u_cur, u_next, batch, config);
}

ActorObjective actor_loss(const std::vector<Mlp>& critics, const Mlp& actor, const Batch& batch,
                          double lambda, double qnorm_alpha, double max_action) {
  require(lambda >= 0.0, "actor_loss: lambda must be >= 0");
  require(!critics.empty(), "actor_loss: empty ensemble");
  const Eigen::Index n = batch.obs.cols();
  const auto bn = static_cast<double>(n);

  MlpCache actor_cache;
  const Eigen::MatrixXd a_pi = max_action * actor.forward(batch.obs, actor_cache);
  const Eigen::MatrixXd in = critic_input(batch.obs, a_pi);

  std::vector<MlpCache> caches(critics.size());
  Eigen::RowVectorXd q_min = Eigen::RowVectorXd::Constant(n, std::numeric_limits<double>::infinity());
  std::vector<int> argmin(n, 0);
  for (std::size_t i = 0; i < critics.size(); ++i) {
    const Eigen::MatrixXd& q = critics[i].forward(in, caches[i]);
    for (Eigen::Index j = 0; j < n; ++j) {
      if (q(0, j) < q_min(j)) {
        q_min(j) = q(0, j);
        argmin[j] = static_cast<int>(i);
      }
    }
  }
  const double scale = qnorm_alpha / std::max(q_min.cwiseAbs().mean(), 1e-12);
  const Eigen::MatrixXd diff = a_pi - batch.act;

  ActorObjective out;
  out.q_term = scale * q_min.mean();
  out.bc_term = diff.colwise().squaredNorm().mean();
  out.objective = out.q_term - lambda * out.bc_term;

  // dJ/da_pi, then chain through max_action * tanh.
  Eigen::MatrixXd grad_a = (-2.0 * lambda / bn) * diff;
  MlpGradients g;
  for (std::size_t i = 0; i < critics.size(); ++i) {
    Eigen::MatrixXd grad_q = Eigen::MatrixXd::Zero(1, n);
    bool used = false;
    for (Eigen::Index j = 0; j < n; ++j) {
      if (argmin[j] == static_cast<int>(i)) {
        grad_q(0, j) = scale / bn;
        used = true;
      }
    }
    if (!used) continue;
    critics[i].backward(caches[i], grad_q, g, true);
    grad_a += g.input.bottomRows(a_pi.rows());
  }
  MlpGradients ga;
  actor.backward(actor_cache, max_action * grad_a, ga, false);
  out.grad = std::move(ga.params);
  return out;
}

void TrainingLog::write_csv(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) fail(ErrorKind::kIo, "cannot write training log '" + path.string() + "'");
  out << csv_header() << '\n';
  out.precision(17);
  for (const auto& r : epochs) {
    out << r.epoch << ',' << r.step << ',' << r.mean_return << ',' << r.normalized_score << ','
        << r.q_mean << ',' << r.q_min << ',' << r.q_max << ',' << r.u_mean << ',' << r.lambda_t << ','
        << r.critic_loss << ',' << r.actor_obj << '\n';
  }
  if (!out) fail(ErrorKind::kIo, "failed writing training log '" + path.string() + "'");
}

std::string TrainingLog::csv_header() {
  return "epoch,step,mean_return,normalized_score,q_mean,q_min,q_max,u_mean,lambda_t,critic_loss,"
         "actor_obj";
}

EvalResult evaluate(const Mlp& actor, const Eigen::VectorXd& obs_mean, const Eigen::VectorXd& obs_std,
                    const EnvReference& ref, int episodes, std::uint64_t seed) {
  require(episodes >= 1, "evaluate: episodes must be >= 1");
  require(actor.input_dim() == PointMassEnv::kObsDim && actor.output_dim() == PointMassEnv::kActDim,
          "evaluate: actor shape does not match the point mass");
  require(ref.expert_ref != ref.random_ref, "evaluate: degenerate reference returns");
  EvalResult r;
  r.returns = rollout_returns(
      [&](const Eigen::MatrixXd& obs) {
        return actor_act(actor, standardize(obs, obs_mean, obs_std), PointMassEnv::kMaxAction);
      },
      episodes, seed);
  r.mean_return = mean(r.returns);
  r.normalized_score = ref.normalize(r.mean_return);
  return r;
}

ScoreTrainer::ScoreTrainer(const OfflineDataset& data, EnvReference ref, ScoreConfig config,
                           std::uint64_t seed)
    : config_(std::move(config)), ref_(std::move(ref)), seed_(seed), data_(data), rng_(make_rng(seed)) {
  config_.validate();
  require(data_.size() >= 1, "train: dataset is empty");
  require(!data_.discrete, "train: the actor-critic needs a continuous dataset");
  const int obs_dim = data_.obs_dim;
  const int act_dim = data_.act_dim;

  obs_mean_ = Eigen::VectorXd::Zero(obs_dim);
  obs_std_ = Eigen::VectorXd::Ones(obs_dim);
  if (config_.normalize_obs) {
    obs_mean_ = data_.obs.rowwise().mean();
    obs_std_ = ((data_.obs.colwise() - obs_mean_).array().square().rowwise().mean().sqrt() + 1e-3)
                   .matrix();
    data_.obs = standardize(data_.obs, obs_mean_, obs_std_);
    data_.next_obs = standardize(data_.next_obs, obs_mean_, obs_std_);
  }
  max_action_ = PointMassEnv::kMaxAction;
  const double r_max = data_.reward.cwiseAbs().maxCoeff();
  v_max_ = std::max(r_max, 1e-12) / (1.0 - config_.discount);

  Rng init = make_rng(seed, 1);
  std::vector<int> critic_dims{obs_dim + act_dim};
  std::vector<int> actor_dims{obs_dim};
  for (int l = 0; l < config_.hidden_layers; ++l) {
    critic_dims.push_back(config_.hidden_width);
    actor_dims.push_back(config_.hidden_width);
  }
  critic_dims.push_back(1);
  actor_dims.push_back(act_dim);
  critics_ = build_critics(config_.m_critics, critic_dims, init);
  targets_ = critics_;
  for (const auto& c : critics_) critic_opt_.emplace_back(c.n_params(), config_.critic_lr);
  actor_ = Mlp::initialized(actor_dims, Activation::kTanh, init);
  actor_target_ = actor_;
  actor_opt_ = AdamState(actor_.n_params(), config_.actor_lr);
  lambda_ = config_.lambda0;
  caches_.resize(critics_.size());
  if (config_.bootstrap_prob < 1.0) {
    // Fixed per-transition masks: critic i trains on a Bernoulli subset.
    Rng mask_rng = make_rng(seed, 2);
    std::bernoulli_distribution keep(config_.bootstrap_prob);
    for (std::size_t i = 0; i < critics_.size(); ++i) {
      Eigen::RowVectorXd m(data_.size());
      for (Eigen::Index k = 0; k < m.size(); ++k) m(k) = keep(mask_rng) ? 1.0 : 0.0;
      masks_.push_back(std::move(m));
    }
  }
}

void ScoreTrainer::step() {
  const long t = step_ + 1;
  const int n = config_.batch_size;

  // Sample indices so masks can be looked up per transition.
  std::uniform_int_distribution<Eigen::Index> pick(0, data_.size() - 1);
  std::vector<Eigen::Index> idx(n);
  for (auto& i : idx) i = pick(rng_);
  Batch b;
  b.obs.resize(data_.obs_dim, n);
  b.act.resize(data_.act_dim, n);
  b.next_obs.resize(data_.obs_dim, n);
  b.reward.resize(n);
  b.not_done.resize(n);
  for (int j = 0; j < n; ++j) {
    b.obs.col(j) = data_.obs.col(idx[j]);
    b.act.col(j) = data_.act.col(idx[j]);
    b.next_obs.col(j) = data_.next_obs.col(idx[j]);
    b.reward(j) = data_.reward(idx[j]);
    b.not_done(j) = 1.0 - data_.done(idx[j]);
  }

  const Eigen::MatrixXd next_action = smoothed_target_action(
      actor_target_, b.next_obs, config_.smoothing_sigma, config_.noise_clip, max_action_, rng_);
  const Eigen::MatrixXd in = critic_input(b.obs, b.act);
  const Eigen::MatrixXd next_in = critic_input(b.next_obs, next_action);

  std::vector<Eigen::RowVectorXd> q(critics_.size());
  for (std::size_t i = 0; i < critics_.size(); ++i) q[i] = critics_[i].forward(in, caches_[i]);

  const PenaltyWeights w = penalty_weights(config_);
  const bool online_u = config_.uncertainty_source == UncertaintySource::kOnline;
  const Eigen::RowVectorXd u_cur =
      online_u ? population_std(q) : population_std(forward_all(targets_, in));
  Eigen::RowVectorXd u_next = Eigen::RowVectorXd::Zero(n);
  if (w.next != 0.0) u_next = population_std(forward_all(online_u ? critics_ : targets_, next_in));
  const std::vector<Eigen::RowVectorXd> y =
      compose_targets(forward_all(targets_, next_in), u_cur, u_next, b, config_);

  const double limit = config_.divergence_factor * v_max_;
  double loss_total = 0.0;
  double q_lo = std::numeric_limits<double>::infinity();
  double q_hi = -q_lo;
  double q_sum = 0.0;
  for (std::size_t i = 0; i < critics_.size(); ++i) {
    const double lo = q[i].minCoeff();
    const double hi = q[i].maxCoeff();
    if (!std::isfinite(lo) || !std::isfinite(hi) || std::max(-lo, hi) > limit) {
      throw DivergenceError("critic " + std::to_string(i) + " produced |Q| = " +
                                std::to_string(std::max(std::abs(lo), std::abs(hi))) +
                                " beyond the guard " + std::to_string(limit) + " at step " +
                                std::to_string(t),
                            t);
    }
    q_lo = std::min(q_lo, lo);
    q_hi = std::max(q_hi, hi);
    q_sum += q[i].sum();

    Eigen::RowVectorXd resid = q[i] - y[i];
    double weight_sum = static_cast<double>(n);
    if (!masks_.empty()) {
      weight_sum = 0.0;
      for (int j = 0; j < n; ++j) {
        resid(j) *= masks_[i](idx[j]);
        weight_sum += masks_[i](idx[j]);
      }
      weight_sum = std::max(1.0, weight_sum);
    }
    const double loss = resid.squaredNorm() / weight_sum;
    if (!std::isfinite(loss)) {
      throw DivergenceError("non-finite critic loss at step " + std::to_string(t), t);
    }
    loss_total += loss;
    critics_[i].backward(caches_[i], (2.0 / weight_sum) * resid, grads_, false);
    adam_step(critic_opt_[i], critics_[i].params(), grads_.params);
  }

  acc_.q_sum += q_sum;
  acc_.q_count += static_cast<long>(critics_.size()) * n;
  acc_.q_min = acc_.steps == 0 ? q_lo : std::min(acc_.q_min, q_lo);
  acc_.q_max = acc_.steps == 0 ? q_hi : std::max(acc_.q_max, q_hi);
  acc_.u_sum += u_cur.mean();
  acc_.loss_sum += loss_total / static_cast<double>(critics_.size());
  ++acc_.steps;

  if (t % config_.policy_delay == 0) {
    const ActorObjective obj = actor_loss(critics_, actor_, b, lambda_, config_.qnorm_alpha, max_action_);
    if (!std::isfinite(obj.objective)) {
      throw DivergenceError("non-finite actor objective at step " + std::to_string(t), t);
    }
    // Ascent on the objective.
    adam_step(actor_opt_, actor_.params(), -obj.grad);
    acc_.actor_sum += obj.objective;
    ++acc_.actor_updates;
    for (std::size_t i = 0; i < critics_.size(); ++i) {
      soft_update(targets_[i], critics_[i], config_.tau, config_.soft_update);
    }
    soft_update(actor_target_, actor_, config_.tau, config_.soft_update);
  }
  if (t % config_.d_bc == 0) lambda_ = config_.gamma_bc * lambda_;

  step_ = t;
  if (t % config_.steps_per_epoch == 0) close_epoch();
}

void ScoreTrainer::close_epoch() {
  EpochRecord r;
  r.epoch = step_ / config_.steps_per_epoch;
  r.step = step_;
  const EvalResult ev =
      evaluate_now(mix_seed(seed_, 0x6576616cULL + static_cast<std::uint64_t>(r.epoch)),
                   config_.eval_episodes);
  r.mean_return = ev.mean_return;
  r.normalized_score = ev.normalized_score;
  const double steps = static_cast<double>(std::max(1L, acc_.steps));
  r.q_mean = acc_.q_count > 0 ? acc_.q_sum / static_cast<double>(acc_.q_count) : 0.0;
  r.q_min = acc_.q_min;
  r.q_max = acc_.q_max;
  r.u_mean = acc_.u_sum / steps;
  r.lambda_t = lambda_;
  r.critic_loss = acc_.loss_sum / steps;
  r.actor_obj = acc_.actor_updates > 0 ? acc_.actor_sum / static_cast<double>(acc_.actor_updates)
                                       : std::numeric_limits<double>::quiet_NaN();
  log_.epochs.push_back(r);
  acc_ = {};
}

const TrainingLog& ScoreTrainer::run() {
  try {
    while (step_ < config_.total_steps) step();
  } catch (const DivergenceError& e) {
    log_.diverged = true;
    log_.divergence_step = e.step();
    log_.divergence_message = e.what();
    throw;
  }
  return log_;
}

EvalResult ScoreTrainer::evaluate_now(std::uint64_t eval_seed, int episodes) const {
  return evaluate(actor_, obs_mean_, obs_std_, ref_, episodes, eval_seed);
}

std::vector<std::filesystem::path> ScoreTrainer::save(const std::filesystem::path& dir) const {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) fail(ErrorKind::kIo, "cannot create checkpoint directory '" + dir.string() + "'");
  std::vector<std::filesystem::path> out;
  auto add = [&out](std::vector<std::filesystem::path> paths) {
    out.insert(out.end(), paths.begin(), paths.end());
  };
  add(save_checkpoint(actor_, step_, dir / "actor"));
  add(save_checkpoint(actor_target_, step_, dir / "actor_target"));
  for (std::size_t i = 0; i < critics_.size(); ++i) {
    add(save_checkpoint(critics_[i], step_, dir / ("critic_" + std::to_string(i))));
    add(save_checkpoint(targets_[i], step_, dir / ("critic_target_" + std::to_string(i))));
  }
  const auto norm_path = dir / "obs_normalizer.json";
  std::ofstream norm(norm_path);
  if (!norm) fail(ErrorKind::kIo, "cannot write '" + norm_path.string() + "'");
  nlohmann::json doc = {{"mean", std::vector<double>(obs_mean_.data(), obs_mean_.data() + obs_mean_.size())},
                        {"std", std::vector<double>(obs_std_.data(), obs_std_.data() + obs_std_.size())}};
  norm << doc.dump(2) << '\n';
  out.push_back(norm_path);
  return out;
}

TrainingLog train(const OfflineDataset& data, const EnvReference& ref, const ScoreConfig& config,
                  std::uint64_t seed) {
  ScoreTrainer trainer(data, ref, config, seed);
  return trainer.run();
}

ScoreConfig apply_variant(const ScoreConfig& base, const std::string& name) {
  ScoreConfig c = base;
  c.variant = name;
  if (name == "baseline") return c;
  if (name == "no-bc") {
    c.lambda0 = 0.0;
  } else if (name == "no-pessimism") {
    c.beta = 0.0;
  } else if (name == "fixed-bc") {
    c.gamma_bc = 1.0;
  } else if (name == "min-q") {
    c.target_mode = TargetMode::kMinEnsemble;
    c.beta = 0.0;
  } else if (name == "penalty-on-next") {
    c.penalty_placement = PenaltyPlacement::kNext;
  } else if (name == "penalty-both") {
    c.penalty_placement = PenaltyPlacement::kBoth;
  } else {
    fail(ErrorKind::kInvalidInput, "unknown variant '" + name + "'");
  }
  return c;
}

std::vector<NamedConfig> ablation_variants(const ScoreConfig& base) {
  std::vector<NamedConfig> out;
  for (const char* name : {"baseline", "no-bc", "no-pessimism", "fixed-bc", "min-q", "penalty-on-next",
                           "penalty-both"}) {
    out.push_back({name, apply_variant(base, name)});
  }
  return out;
}

nlohmann::json CoverageReport::to_json() const {
  return {{"spearman", spearman}, {"cell_counts", cell_counts}, {"cell_bins", cell_bins}, {"cell_u", cell_u}};
}

CoverageReport uncertainty_coverage(const ScoreTrainer& trainer, const OfflineDataset& data,
                                    const CoverageOptions& options) {
  require(options.grid >= 2 && options.extent > 0.0 && options.probe_actions_per_axis >= 1,
          "uncertainty_coverage: invalid options");
  require(data.obs_dim == PointMassEnv::kObsDim, "uncertainty_coverage: expects point-mass data");
  const int g = options.grid;
  const double cell = 2.0 * options.extent / g;
  CoverageReport rep;
  rep.cell_counts.assign(static_cast<std::size_t>(g) * g, 0);
  for (Eigen::Index k = 0; k < data.size(); ++k) {
    const int ix = static_cast<int>(std::floor((data.obs(0, k) + options.extent) / cell));
    const int iy = static_cast<int>(std::floor((data.obs(1, k) + options.extent) / cell));
    if (ix < 0 || iy < 0 || ix >= g || iy >= g) continue;
    ++rep.cell_counts[static_cast<std::size_t>(iy) * g + ix];
  }

  const int na = options.probe_actions_per_axis;
  const int probes_per_cell = na * na;
  Eigen::MatrixXd obs(PointMassEnv::kObsDim, static_cast<Eigen::Index>(g) * g * probes_per_cell);
  Eigen::MatrixXd act(PointMassEnv::kActDim, obs.cols());
  Eigen::Index col = 0;
  for (int iy = 0; iy < g; ++iy) {
    for (int ix = 0; ix < g; ++ix) {
      for (int ay = 0; ay < na; ++ay) {
        for (int ax = 0; ax < na; ++ax) {
          const double cx = -options.extent + (ix + 0.5) * cell;
          const double cy = -options.extent + (iy + 0.5) * cell;
          obs.col(col) << cx, cy, options.probe_speed, options.probe_speed;
          const auto level = [na](int i) { return na == 1 ? 0.0 : -1.0 + 2.0 * i / (na - 1); };
          act.col(col) << level(ax), level(ay);
          ++col;
        }
      }
    }
  }
  const Eigen::RowVectorXd u = ensemble_uncertainty(
      trainer.critics(), standardize(obs, trainer.obs_mean(), trainer.obs_std()), act);

  std::vector<double> bins;
  for (std::size_t c = 0; c < rep.cell_counts.size(); ++c) {
    const long n = rep.cell_counts[c];
    const int bin = n == 0 ? 0 : 1 + static_cast<int>(std::floor(std::log10(static_cast<double>(n))));
    rep.cell_bins.push_back(bin);
    bins.push_back(bin);
    rep.cell_u.push_back(u.segment(static_cast<Eigen::Index>(c) * probes_per_cell, probes_per_cell).mean());
  }
  rep.spearman = spearman(bins, rep.cell_u);
  return rep;
}

}  // namespace score
