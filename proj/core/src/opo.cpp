#include "score/opo.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "score/error.hpp"

namespace score {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double row_log_sum_exp(const Eigen::Ref<const Eigen::RowVectorXd>& row) {
  const double m = row.maxCoeff();
  if (!std::isfinite(m)) return m;
  return m + std::log((row.array() - m).exp().sum());
}

// P_pi for an (S*A) x S row-stochastic (or sub-stochastic) matrix.
Eigen::MatrixXd mix_rows(const Eigen::MatrixXd& rows, const PolicyTable& pi) {
  const int S = static_cast<int>(pi.rows());
  const int A = static_cast<int>(pi.cols());
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(S, rows.cols());
  for (int s = 0; s < S; ++s) {
    for (int a = 0; a < A; ++a) {
      if (pi(s, a) != 0.0) out.row(s) += pi(s, a) * rows.row(s * A + a);
    }
  }
  return out;
}

// Q(s,a) = base(s,a) + gamma * (rows * v) reshaped to S x A.
QTable backup(const Eigen::MatrixXd& base, const Eigen::MatrixXd& rows, const VTable& v,
              double gamma) {
  const int S = static_cast<int>(base.rows());
  const int A = static_cast<int>(base.cols());
  const Eigen::VectorXd next = rows * v;
  QTable q = base;
  for (int s = 0; s < S; ++s) {
    for (int a = 0; a < A; ++a) q(s, a) += gamma * next(s * A + a);
  }
  return q;
}

void require_policy_shape(const SoftmaxPolicy& p, int S, int A, const char* what) {
  require(p.n_states() == S && p.n_actions() == A, std::string(what) + ": policy shape mismatch");
}

double dot_d0(const TabularMdp& mdp, const VTable& v) { return mdp.init_dist().dot(v); }

}  // namespace

SoftmaxPolicy::SoftmaxPolicy(Eigen::MatrixXd energy) : energy_(std::move(energy)) {
  require(energy_.rows() > 0 && energy_.cols() > 0, "SoftmaxPolicy: empty energy table");
  for (Eigen::Index s = 0; s < energy_.rows(); ++s) {
    bool any_finite = false;
    for (Eigen::Index a = 0; a < energy_.cols(); ++a) {
      const double e = energy_(s, a);
      require(!std::isnan(e) && e != kInf, "SoftmaxPolicy: energies must be finite or -inf");
      any_finite = any_finite || std::isfinite(e);
    }
    require(any_finite, "SoftmaxPolicy: every state needs an action with finite energy");
  }
}

SoftmaxPolicy SoftmaxPolicy::from_probabilities(const PolicyTable& probs) {
  for (Eigen::Index s = 0; s < probs.rows(); ++s) {
    require((probs.row(s).array() >= 0.0).all(), "SoftmaxPolicy: negative probability");
    require(std::abs(probs.row(s).sum() - 1.0) <= 1e-12, "SoftmaxPolicy: row does not sum to 1");
  }
  return SoftmaxPolicy(probs.array().log().matrix());
}

SoftmaxPolicy SoftmaxPolicy::from_features(int n_states, int n_actions,
                                           const Eigen::MatrixXd& psi,
                                           const Eigen::VectorXd& phi) {
  require(psi.rows() == static_cast<Eigen::Index>(n_states) * n_actions,
          "SoftmaxPolicy: feature rows must equal S*A");
  require(psi.cols() == phi.size(), "SoftmaxPolicy: feature dimension mismatch");
  const Eigen::VectorXd flat = psi * phi;
  Eigen::MatrixXd energy(n_states, n_actions);
  for (int s = 0; s < n_states; ++s) {
    for (int a = 0; a < n_actions; ++a) energy(s, a) = flat(s * n_actions + a);
  }
  return SoftmaxPolicy(std::move(energy));
}

SoftmaxPolicy SoftmaxPolicy::uniform(int n_states, int n_actions) {
  return SoftmaxPolicy(Eigen::MatrixXd::Zero(n_states, n_actions));
}

Eigen::MatrixXd SoftmaxPolicy::log_probs() const {
  Eigen::MatrixXd out = energy_;
  for (Eigen::Index s = 0; s < out.rows(); ++s) out.row(s).array() -= row_log_sum_exp(out.row(s));
  return out;
}

PolicyTable SoftmaxPolicy::probs() const {
  PolicyTable p = log_probs().array().exp().matrix();
  // exp of normalized log-probs can drift by a few ulps; renormalize.
  for (Eigen::Index s = 0; s < p.rows(); ++s) p.row(s) /= p.row(s).sum();
  return p;
}

Eigen::VectorXd kl_rows(const PolicyTable& p, const PolicyTable& q) {
  require(p.rows() == q.rows() && p.cols() == q.cols(), "kl_rows: shape mismatch");
  Eigen::VectorXd kl = Eigen::VectorXd::Zero(p.rows());
  for (Eigen::Index s = 0; s < p.rows(); ++s) {
    for (Eigen::Index a = 0; a < p.cols(); ++a) {
      if (p(s, a) <= 0.0) continue;
      if (q(s, a) <= 0.0) {
        kl(s) = kInf;
        break;
      }
      kl(s) += p(s, a) * std::log(p(s, a) / q(s, a));
    }
  }
  return kl;
}

RegularizedValues regularized_policy_value(const TabularMdp& mdp, const SoftmaxPolicy& policy,
                                           const SoftmaxPolicy& reference, double lambda,
                                           double tol) {
  require(lambda >= 0.0, "regularized_policy_value: lambda must be non-negative");
  require(tol > 0.0, "regularized_policy_value: tol must be positive");
  const int S = mdp.n_states();
  const int A = mdp.n_actions();
  require_policy_shape(policy, S, A, "regularized_policy_value");
  require_policy_shape(reference, S, A, "regularized_policy_value");
  const PolicyTable pi = policy.probs();
  VTable reg = mdp.policy_reward(pi);
  if (lambda > 0.0) {
    const Eigen::VectorXd kl = kl_rows(pi, reference.probs());
    if (!kl.allFinite()) {
      fail(ErrorKind::kDivergentKl,
           "regularized_policy_value: policy has mass where the reference has none");
    }
    reg -= lambda * kl;
  }
  const Eigen::MatrixXd p_pi = mdp.policy_transition(pi);
  const Eigen::MatrixXd system = Eigen::MatrixXd::Identity(S, S) - mdp.gamma() * p_pi;
  RegularizedValues out;
  out.v_lambda = system.partialPivLu().solve(reg);
  // One refinement step keeps the residual at rounding level.
  out.v_lambda += system.partialPivLu().solve(reg - system * out.v_lambda);
  const double residual = (reg + mdp.gamma() * p_pi * out.v_lambda - out.v_lambda).cwiseAbs().maxCoeff();
  if (residual > std::max(tol, 1e3 * std::numeric_limits<double>::epsilon() *
                                   (1.0 + out.v_lambda.cwiseAbs().maxCoeff()))) {
    throw ConvergenceError("regularized_policy_value: linear solve residual too large", residual);
  }
  out.q_lambda = backup(mdp.reward(), mdp.transition(), out.v_lambda, mdp.gamma());
  out.lambda = lambda;
  out.reference_policy = reference;
  return out;
}

RegularizedOptimum regularized_optimal(const TabularMdp& mdp, const SoftmaxPolicy& reference,
                                       double lambda, double tol) {
  require(lambda > 0.0, "regularized_optimal: lambda must be positive");
  require(tol > 0.0, "regularized_optimal: tol must be positive");
  const int S = mdp.n_states();
  const int A = mdp.n_actions();
  require_policy_shape(reference, S, A, "regularized_optimal");
  const Eigen::MatrixXd log_ref = reference.log_probs();
  const double gamma = mdp.gamma();

  auto soft_values = [&](const QTable& q) {
    VTable v(S);
    for (int s = 0; s < S; ++s) v(s) = lambda * row_log_sum_exp(log_ref.row(s) + q.row(s) / lambda);
    return v;
  };

  RegularizedOptimum out;
  VTable v = VTable::Zero(S);
  QTable q = mdp.reward();
  constexpr int kMaxSweeps = 10'000'000;
  for (;;) {
    q = backup(mdp.reward(), mdp.transition(), v, gamma);
    VTable next = soft_values(q);
    const double step = (next - v).cwiseAbs().maxCoeff();
    v = std::move(next);
    ++out.iterations;
    const double floor = 16.0 * std::numeric_limits<double>::epsilon() * (1.0 + v.cwiseAbs().maxCoeff());
    // ||V - V*|| <= gamma/(1-gamma) * step.
    if (step * gamma <= std::max(tol * (1.0 - gamma), floor)) break;
    if (out.iterations >= kMaxSweeps) {
      throw ConvergenceError("regularized_optimal: soft value iteration did not converge", step);
    }
  }
  q = backup(mdp.reward(), mdp.transition(), v, gamma);
  Eigen::MatrixXd energy = log_ref + q / lambda;
  out.policy = SoftmaxPolicy(std::move(energy));
  out.values = regularized_policy_value(mdp, out.policy, reference, lambda, tol);
  return out;
}

SoftmaxPolicy opo_update(const QTable& q_k, const SoftmaxPolicy& pi_k, const SoftmaxPolicy& pi_0,
                         double eta_k, double lambda_k) {
  require(eta_k >= 0.0 && lambda_k >= 0.0, "opo_update: eta_k and lambda_k must be non-negative");
  require(eta_k + lambda_k > 0.0, "opo_update: eta_k + lambda_k must be positive");
  require(q_k.allFinite(), "opo_update: Q_k must be finite");
  const int S = static_cast<int>(q_k.rows());
  const int A = static_cast<int>(q_k.cols());
  require_policy_shape(pi_k, S, A, "opo_update");
  require_policy_shape(pi_0, S, A, "opo_update");
  Eigen::MatrixXd energy = q_k;
  // Zero weights drop the term so that -inf energies never meet 0.
  if (eta_k > 0.0) energy += eta_k * pi_k.log_probs();
  if (lambda_k > 0.0) energy += lambda_k * pi_0.log_probs();
  energy /= eta_k + lambda_k;
  SoftmaxPolicy next(std::move(energy));
  return SoftmaxPolicy(next.log_probs());
}

Eigen::VectorXd opo_objective(const QTable& q_k, const PolicyTable& pi, const PolicyTable& pi_k,
                              const PolicyTable& pi_0, double eta_k, double lambda_k) {
  require(pi.rows() == q_k.rows() && pi.cols() == q_k.cols(), "opo_objective: shape mismatch");
  Eigen::VectorXd value = (q_k.array() * pi.array()).rowwise().sum().matrix();
  if (lambda_k > 0.0) value -= lambda_k * kl_rows(pi, pi_0);
  if (eta_k > 0.0) value -= eta_k * kl_rows(pi, pi_k);
  return value;
}

std::string OpoSchedule::warning() const {
  if (clamped.empty()) return {};
  return "schedule-infeasible: sqrt(zeta/K) < lambda_k at " + std::to_string(clamped.size()) +
         " iteration(s) starting at k=" + std::to_string(clamped.front()) + "; eta_k clamped to 0";
}

OpoSchedule theorem1_schedule(int K, double alpha, double zeta) {
  require(K >= 1, "theorem1_schedule: K must be >= 1");
  require(alpha > 0.0 && alpha < 1.0, "theorem1_schedule: alpha must lie in (0, 1)");
  require(zeta >= 0.0 && std::isfinite(zeta), "theorem1_schedule: zeta must be finite and >= 0");
  OpoSchedule sched;
  sched.alpha = alpha;
  sched.zeta = zeta;
  const double step = std::sqrt(zeta / K);
  double lambda = 1.0;
  for (int k = 0; k < K; ++k) {
    sched.lambda_k.push_back(lambda);
    double eta = step - lambda;
    if (eta < 0.0) {
      eta = 0.0;
      sched.clamped.push_back(k);
    }
    sched.eta_k.push_back(eta);
    lambda *= alpha;
  }
  return sched;
}

double zeta_prefactor(double alpha) {
  require(alpha > 0.0 && alpha < 1.0, "zeta_prefactor: alpha must lie in (0, 1)");
  const double ratio = alpha / (1.0 - alpha);
  const double r2 = ratio * ratio;
  const double base = 1.0 + r2 * r2;
  return base * base;
}

ZetaResult compute_zeta(const TabularMdp& mdp, const PolicyTable& pi_star,
                        const SoftmaxPolicy& pi_0, double alpha, int horizon) {
  require(horizon >= 1, "compute_zeta: horizon must be >= 1");
  require_policy_shape(pi_0, mdp.n_states(), mdp.n_actions(), "compute_zeta");
  const Eigen::VectorXd kl = kl_rows(pi_star, pi_0.probs());
  if (!kl.allFinite()) {
    fail(ErrorKind::kDivergentKl, "compute_zeta: reference lacks support where pi* has mass");
  }
  const Eigen::MatrixXd f = kl.replicate(1, mdp.n_actions());
  ZetaResult out;
  out.prefactor = zeta_prefactor(alpha);
  out.kl_sum.value = dot_d0(mdp, discounted_occupancy_sum(mdp, pi_star, f, horizon));
  out.kl_sum.tail_bound = kl.maxCoeff() * std::pow(mdp.gamma(), horizon) / (1.0 - mdp.gamma());
  out.zeta = out.prefactor * out.kl_sum.value;
  return out;
}

TruncatedSum pessimistic_error(const TabularMdp& mdp, const UncertaintyTable& u,
                               const PolicyTable& pi_star, int horizon) {
  require(u.u.rows() == mdp.n_states() && u.u.cols() == mdp.n_actions(),
          "pessimistic_error: uncertainty shape mismatch");
  require(horizon >= 1, "pessimistic_error: horizon must be >= 1");
  TruncatedSum out;
  out.value = dot_d0(mdp, discounted_occupancy_sum(mdp, pi_star, 2.0 * u.u, horizon));
  out.tail_bound = 2.0 * u.u.maxCoeff() * std::pow(mdp.gamma(), horizon) / (1.0 - mdp.gamma());
  return out;
}

QTable pessimistic_regularized_q(const EmpiricalModel& model, const UncertaintyTable& u,
                                 const SoftmaxPolicy& pi_k, const SoftmaxPolicy& pi_0,
                                 double lambda, double gamma) {
  const int S = model.n_states;
  const int A = model.n_actions;
  require(u.u.rows() == S && u.u.cols() == A, "pessimistic_regularized_q: uncertainty shape mismatch");
  require_policy_shape(pi_k, S, A, "pessimistic_regularized_q");
  const PolicyTable pi = pi_k.probs();
  const Eigen::MatrixXd base = model.mean_reward - u.u;
  VTable reg = (base.array() * pi.array()).rowwise().sum().matrix();
  if (lambda > 0.0) {
    const Eigen::VectorXd kl = kl_rows(pi, pi_0.probs());
    if (!kl.allFinite()) {
      fail(ErrorKind::kDivergentKl, "pessimistic_regularized_q: pi_k leaves the reference support");
    }
    reg -= lambda * kl;
  }
  // Uncovered pairs have zero rows, so P^_pi is sub-stochastic and the system is regular.
  const Eigen::MatrixXd system = Eigen::MatrixXd::Identity(S, S) - gamma * mix_rows(model.next_freq, pi);
  const VTable v = system.partialPivLu().solve(reg);
  return backup(base, model.next_freq, v, gamma);
}

nlohmann::json OpoRunReport::to_json() const {
  return {{"K", static_cast<int>(gap_per_iter.size())},
          {"alpha", schedule.alpha},
          {"gap_per_iter", gap_per_iter},
          {"lambda_k", schedule.lambda_k},
          {"eta_k", schedule.eta_k},
          {"clamped_iterations", schedule.clamped},
          {"zeta", zeta},
          {"eps_pess", eps_pess},
          {"eps_pess_tail_bound", eps_pess_tail},
          {"suboptgap", suboptgap_K},
          {"avegap", avegap_K},
          {"warnings", warnings}};
}

OpoRunReport run_opo(const TabularMdp& mdp, const TabularDataset& dataset,
                     const SoftmaxPolicy& pi_0, const OpoConfig& config) {
  require(config.K >= 2, "run_opo: K must be >= 2");
  require(dataset.n_states() == mdp.n_states() && dataset.n_actions() == mdp.n_actions(),
          "run_opo: dataset shape does not match the mdp");
  require_policy_shape(pi_0, mdp.n_states(), mdp.n_actions(), "run_opo");
  const EmpiricalModel model = estimate_model(dataset);
  const double v_max = config.v_max > 0.0 ? config.v_max : mdp.v_max();
  const UncertaintyTable u =
      config.zero_uncertainty
          ? UncertaintyTable::constant(mdp.n_states(), mdp.n_actions(), 0.0, v_max, config.xi)
          : hoeffding_uncertainty(dataset, v_max, config.xi);
  const OptimalSolution star = exact_value_iteration(mdp, config.tol);

  OpoRunReport report;
  report.zeta = config.zeta ? *config.zeta
                            : compute_zeta(mdp, star.policy, pi_0, config.alpha, config.horizon).zeta;
  report.schedule = theorem1_schedule(config.K, config.alpha, report.zeta);
  if (report.schedule.infeasible()) report.warnings.push_back(report.schedule.warning());
  const TruncatedSum eps = pessimistic_error(mdp, u, star.policy, config.horizon);
  report.eps_pess = eps.value;
  report.eps_pess_tail = eps.tail_bound;

  SoftmaxPolicy pi_k = pi_0;
  for (int k = 0; k < config.K; ++k) {
    const double lambda = report.schedule.lambda_k[k];
    const double eta = report.schedule.eta_k[k];
    const double v_star = lambda > 0.0
                              ? dot_d0(mdp, regularized_optimal(mdp, pi_0, lambda, config.tol).values.v_lambda)
                              : dot_d0(mdp, greedy_values(star.q));
    const double v_k = dot_d0(mdp, regularized_policy_value(mdp, pi_k, pi_0, lambda, config.tol).v_lambda);
    report.gap_per_iter.push_back(v_star - v_k);
    const QTable q_k = pessimistic_regularized_q(model, u, pi_k, pi_0, lambda, mdp.gamma());
    pi_k = opo_update(q_k, pi_k, pi_0, eta, lambda);
  }
  report.suboptgap_K = *std::min_element(report.gap_per_iter.begin(), report.gap_per_iter.end());
  report.avegap_K = std::accumulate(report.gap_per_iter.begin(), report.gap_per_iter.end(), 0.0) /
                    static_cast<double>(report.gap_per_iter.size());
  report.final_policy = pi_k;
  return report;
}

double GaussianEnergy::kl(const Eigen::Vector2d& p, const Eigen::Vector2d& q) {
  require(p(1) > 0.0 && q(1) > 0.0, "GaussianEnergy: precision phi_2 must be positive");
  const double vp = variance(p);
  const double vq = variance(q);
  const double dm = mean(p) - mean(q);
  return 0.5 * (std::log(vq / vp) + (vp + dm * dm) / vq - 1.0);
}

double gaussian_opo_objective(const LinearQ& q_k, const Eigen::Vector2d& phi,
                              const Eigen::Vector2d& phi_k, const Eigen::Vector2d& phi_0,
                              double eta_k, double lambda_k) {
  require(q_k.theta.cols() == 1 && q_k.theta.rows() >= 1,
          "gaussian_opo_objective: expects a scalar action");
  const double theta_bar = q_k.theta.col(0).mean();
  return theta_bar * GaussianEnergy::mean(phi) - lambda_k * GaussianEnergy::kl(phi, phi_0) -
         eta_k * GaussianEnergy::kl(phi, phi_k);
}

Lemma1Result lemma1_residual(const LinearQ& q_k, const Eigen::Vector2d& phi_next,
                             const Eigen::Vector2d& phi_k, const Eigen::Vector2d& phi_0,
                             double eta_k, double lambda_k, int mc_samples, std::uint64_t seed,
                             int batches) {
  require(mc_samples >= 10'000, "lemma1_residual: mc_samples must be >= 1e4");
  require(batches >= 2 && mc_samples / batches >= 8, "lemma1_residual: too many batches");
  require(eta_k >= 0.0 && lambda_k >= 0.0 && eta_k + lambda_k > 0.0,
          "lemma1_residual: need eta_k, lambda_k >= 0 with positive sum");
  require(phi_next(1) > 0.0, "lemma1_residual: phi_next must have positive precision");
  require(q_k.theta.cols() == 1 && q_k.theta.rows() >= 1, "lemma1_residual: expects a scalar action");

  const double theta_bar = q_k.theta.col(0).mean();
  const double total = eta_k + lambda_k;
  const Eigen::Vector2d prox = (eta_k * phi_k + lambda_k * phi_0) / total;
  const int per_batch = mc_samples / batches;
  const int half = per_batch / 2;
  std::normal_distribution<double> normal(GaussianEnergy::mean(phi_next),
                                          std::sqrt(GaussianEnergy::variance(phi_next)));

  Eigen::MatrixXd residuals(2, batches);
  for (int b = 0; b < batches; ++b) {
    Rng rng = make_rng(seed, static_cast<std::uint64_t>(b));
    // First half estimates I = Var[psi]; second half estimates Cov(psi, a).
    Eigen::Vector2d mean_a = Eigen::Vector2d::Zero();
    Eigen::Matrix2d second_a = Eigen::Matrix2d::Zero();
    for (int i = 0; i < half; ++i) {
      const Eigen::Vector2d psi = GaussianEnergy::features(normal(rng));
      mean_a += psi;
      second_a += psi * psi.transpose();
    }
    mean_a /= half;
    const Eigen::Matrix2d info = (second_a - half * mean_a * mean_a.transpose()) / (half - 1);

    Eigen::Vector2d mean_psi = Eigen::Vector2d::Zero();
    Eigen::Vector2d cross = Eigen::Vector2d::Zero();
    double mean_act = 0.0;
    const int rest = per_batch - half;
    for (int i = 0; i < rest; ++i) {
      const double a = normal(rng);
      const Eigen::Vector2d psi = GaussianEnergy::features(a);
      mean_psi += psi;
      mean_act += a;
      cross += psi * a;
    }
    mean_psi /= rest;
    mean_act /= rest;
    const Eigen::Vector2d grad_pi = (cross - rest * mean_psi * mean_act) / (rest - 1);

    Eigen::JacobiSVD<Eigen::Matrix2d> svd(info);
    const double smin = svd.singularValues()(1);
    if (!(smin > 0.0) || svd.singularValues()(0) / smin > 1e12) {
      fail(ErrorKind::kSingularInformation, "lemma1_residual: information matrix is singular");
    }
    const Eigen::Vector2d rhs = prox + info.partialPivLu().solve(theta_bar * grad_pi) / total;
    residuals.col(b) = phi_next - rhs;
  }

  Lemma1Result out;
  out.batches = batches;
  out.residual_vector = residuals.rowwise().mean();
  for (int i = 0; i < 2; ++i) {
    const double var = (residuals.row(i).array() - out.residual_vector(i)).square().sum() / (batches - 1);
    out.component_se(i) = std::sqrt(var / batches);
  }
  out.residual = out.residual_vector.norm();
  out.standard_error = out.component_se.norm();
  return out;
}

}  // namespace score
