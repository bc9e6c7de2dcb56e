#pragma once

#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "score/bellman.hpp"
#include "score/pessimism.hpp"

namespace score {

/// Energy-based tabular policy pi(a|s) = exp(f(s,a)) / sum_a' exp(f(s,a')).
/// Energies may be -inf for zero-probability actions but every row needs at
/// least one finite entry.
class SoftmaxPolicy {
 public:
  SoftmaxPolicy() = default;
  explicit SoftmaxPolicy(Eigen::MatrixXd energy);

  /// Energy = log(probs); zero probabilities become -inf.
  static SoftmaxPolicy from_probabilities(const PolicyTable& probs);
  /// Featurized energy f(s,a) = psi(s,a)^T phi with psi stored as an (S*A) x d
  /// matrix in the same row order as TabularMdp transitions.
  static SoftmaxPolicy from_features(int n_states, int n_actions, const Eigen::MatrixXd& psi,
                                     const Eigen::VectorXd& phi);
  static SoftmaxPolicy uniform(int n_states, int n_actions);

  int n_states() const { return static_cast<int>(energy_.rows()); }
  int n_actions() const { return static_cast<int>(energy_.cols()); }
  const Eigen::MatrixXd& energy() const { return energy_; }
  /// log pi(a|s); rows log-sum-exp to 0.
  Eigen::MatrixXd log_probs() const;
  PolicyTable probs() const;

 private:
  Eigen::MatrixXd energy_;
};

/// Q(s,a) = theta(s)^T a for a continuous action, or a plain table.
struct LinearQ {
  /// S x action_dim; row s holds theta(s).
  Eigen::MatrixXd theta;

  double operator()(int s, const Eigen::VectorXd& a) const { return theta.row(s).dot(a); }
  /// grad_a Q(s, .) is theta(s) everywhere.
  Eigen::VectorXd action_gradient(int s) const { return theta.row(s).transpose(); }
};

/// KL(p || q) per state; +inf rows flag missing support.
Eigen::VectorXd kl_rows(const PolicyTable& p, const PolicyTable& q);

struct RegularizedValues {
  VTable v_lambda;
  QTable q_lambda;
  double lambda = 0.0;
  SoftmaxPolicy reference_policy;
};

/// V_lambda^pi with per-step reward r - lambda * log(pi / pi_0). Solved exactly
/// by a linear solve; throws kDivergentKl when pi puts mass where pi_0 has none.
RegularizedValues regularized_policy_value(const TabularMdp& mdp, const SoftmaxPolicy& policy,
                                           const SoftmaxPolicy& reference, double lambda,
                                           double tol);

struct RegularizedOptimum {
  RegularizedValues values;
  SoftmaxPolicy policy;
  int iterations = 0;
};

/// Soft value iteration V(s) = lambda log sum_a pi_0(a|s) exp(Q(s,a)/lambda);
/// the optimum is pi(a|s) proportional to pi_0(a|s) exp(Q(s,a)/lambda).
RegularizedOptimum regularized_optimal(const TabularMdp& mdp, const SoftmaxPolicy& reference,
                                       double lambda, double tol);

/// f_{k+1} = (Q_k + eta f_k + lambda f_0) / (eta + lambda), renormalized per state.
SoftmaxPolicy opo_update(const QTable& q_k, const SoftmaxPolicy& pi_k, const SoftmaxPolicy& pi_0,
                         double eta_k, double lambda_k);

/// Per-state OPO objective <Q - lambda log(pi/pi_0), pi> - eta KL(pi || pi_k).
Eigen::VectorXd opo_objective(const QTable& q_k, const PolicyTable& pi, const PolicyTable& pi_k,
                              const PolicyTable& pi_0, double eta_k, double lambda_k);

struct OpoSchedule {
  double alpha = 0.0;
  double zeta = 0.0;
  std::vector<double> lambda_k;
  std::vector<double> eta_k;
  /// Iterations where sqrt(zeta/K) < lambda_k forced eta_k = 0.
  std::vector<int> clamped;

  bool infeasible() const { return !clamped.empty(); }
  std::string warning() const;
};

/// lambda_k = alpha^k, eta_k = sqrt(zeta/K) - lambda_k clamped at 0.
OpoSchedule theorem1_schedule(int K, double alpha, double zeta);

/// Discounted sum with the analytic bound on the part beyond the horizon.
struct TruncatedSum {
  double value = 0.0;
  double tail_bound = 0.0;
};

/// (1 + alpha^4 (1-alpha)^-4)^2.
double zeta_prefactor(double alpha);

struct ZetaResult {
  double zeta = 0.0;
  double prefactor = 0.0;
  TruncatedSum kl_sum;
};

/// zeta = prefactor * sum_t gamma^t E_{pi*}[KL(pi*(s_t) || pi_0(s_t))], d0-averaged.
ZetaResult compute_zeta(const TabularMdp& mdp, const PolicyTable& pi_star,
                        const SoftmaxPolicy& pi_0, double alpha, int horizon = 200);

/// eps_Pess = sum_t 2 gamma^t E_{pi*}[U(s_t, a_t)], d0-averaged.
TruncatedSum pessimistic_error(const TabularMdp& mdp, const UncertaintyTable& u,
                               const PolicyTable& pi_star, int horizon = 200);

struct OpoConfig {
  int K = 200;
  double alpha = 0.9;
  double xi = 0.1;
  double tol = 1e-10;
  int horizon = 200;
  /// Unset means the oracle compute_zeta against the unregularized pi*.
  std::optional<double> zeta;
  /// Skip the Hoeffding penalty; valid when the dataset reproduces the model.
  bool zero_uncertainty = false;
  /// Hoeffding scale; 0 means r_max / (1 - gamma) of the dataset.
  double v_max = 0.0;
};

struct OpoRunReport {
  std::vector<double> gap_per_iter;
  double suboptgap_K = 0.0;
  double avegap_K = 0.0;
  double zeta = 0.0;
  double eps_pess = 0.0;
  double eps_pess_tail = 0.0;
  OpoSchedule schedule;
  std::vector<std::string> warnings;
  SoftmaxPolicy final_policy;

  nlohmann::json to_json() const;
};

/// Pessimistic evaluation of pi_k on the empirical model:
/// Q = r^ - u + gamma P^ (<Q, pi_k> - lambda KL(pi_k || pi_0)).
QTable pessimistic_regularized_q(const EmpiricalModel& model, const UncertaintyTable& u,
                                 const SoftmaxPolicy& pi_k, const SoftmaxPolicy& pi_0,
                                 double lambda, double gamma);

OpoRunReport run_opo(const TabularMdp& mdp, const TabularDataset& dataset,
                     const SoftmaxPolicy& pi_0, const OpoConfig& config);

/// Gaussian energy f_phi(a) = phi_1 a - phi_2 a^2 / 2 over a scalar action,
/// i.e. psi(a) = (a, -a^2/2) and pi_phi = N(phi_1/phi_2, 1/phi_2).
struct GaussianEnergy {
  static Eigen::Vector2d features(double a) { return {a, -0.5 * a * a}; }
  static double mean(const Eigen::Vector2d& phi) { return phi(0) / phi(1); }
  static double variance(const Eigen::Vector2d& phi) { return 1.0 / phi(1); }
  /// KL(pi_p || pi_q) in closed form.
  static double kl(const Eigen::Vector2d& p, const Eigen::Vector2d& q);
};

/// OPO objective for the Gaussian family with Q(s,a) = theta(s) a averaged
/// uniformly over the states of `q_k`.
double gaussian_opo_objective(const LinearQ& q_k, const Eigen::Vector2d& phi,
                              const Eigen::Vector2d& phi_k, const Eigen::Vector2d& phi_0,
                              double eta_k, double lambda_k);

struct Lemma1Result {
  double residual = 0.0;
  double standard_error = 0.0;
  Eigen::Vector2d residual_vector = Eigen::Vector2d::Zero();
  Eigen::Vector2d component_se = Eigen::Vector2d::Zero();
  int batches = 0;
};

/// Monte-Carlo check of the stationarity identity
///   phi_{k+1} = (eta phi_k + lambda phi_0)/(eta + lambda)
///             + (eta + lambda)^-1 I^-1 E_s[grad_a Q_k grad_phi Pi(s)]
/// for the Gaussian energy. I and grad_phi Pi = Cov(psi, a) are estimated from
/// independent halves of each batch; the standard error comes from batch means.
Lemma1Result lemma1_residual(const LinearQ& q_k, const Eigen::Vector2d& phi_next,
                             const Eigen::Vector2d& phi_k, const Eigen::Vector2d& phi_0,
                             double eta_k, double lambda_k, int mc_samples, std::uint64_t seed,
                             int batches = 20);

}  // namespace score
