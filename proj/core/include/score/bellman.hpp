#pragma once

#include "score/tabular_mdp.hpp"

namespace score {

/// (BQ)(s,a) = R(s,a) + gamma * sum_s' P(s'|s,a) max_a' Q(s',a').
QTable bellman_optimality_apply(const TabularMdp& mdp, const QTable& q);

/// (B^pi Q)(s,a) = R(s,a) + gamma * sum_s' P(s'|s,a) <Q(s',.), pi(.|s')>.
QTable bellman_policy_apply(const TabularMdp& mdp, const QTable& q, const PolicyTable& policy);

/// Empirical optimality operator built from sample means. Pairs without data
/// evaluate to `default_value`.
QTable empirical_bellman_apply(const EmpiricalModel& model, const QTable& q, double gamma,
                               double default_value = 0.0);
QTable empirical_bellman_apply(const TabularDataset& dataset, const QTable& q, double gamma,
                               double default_value = 0.0);

/// iota = BQ - B^Q, the epistemic error of the dataset at q.
Eigen::MatrixXd epistemic_error(const TabularMdp& mdp, const TabularDataset& dataset,
                                const QTable& q, double default_value = 0.0);

/// Row-wise max over actions.
VTable greedy_values(const QTable& q);
/// Deterministic greedy policy; ties go to the lowest action index.
PolicyTable greedy_policy(const QTable& q);
PolicyTable uniform_policy(int n_states, int n_actions);

/// Iterative policy evaluation until ||V - T^pi V||_inf <= tol.
VTable policy_value(const TabularMdp& mdp, const PolicyTable& policy, double tol);
/// J(pi) = <d0, V>.
double expected_return(const TabularMdp& mdp, const VTable& v);

struct OptimalSolution {
  QTable q;
  PolicyTable policy;
  int iterations = 0;
  double residual = 0.0;
};

/// Value iteration until ||Q - BQ||_inf <= tol; returns the greedy policy.
OptimalSolution exact_value_iteration(const TabularMdp& mdp, double tol);

/// sum_{t<horizon} gamma^t E_pi[f(s_t, a_t) | s_0 = s] for every start state s,
/// computed by forward occupancy recursion on the true model.
VTable discounted_occupancy_sum(const TabularMdp& mdp, const PolicyTable& policy,
                                const Eigen::MatrixXd& f, int horizon);

/// Which Q-residual the decomposition uses as iota.
enum class IotaSource {
  /// iota = B^{pi_hat} Q_hat - Q_hat, i.e. the empirical update is taken to be
  /// Q_hat itself (Q_hat is the fixed point of whatever estimator produced it).
  kFixedPointResidual,
  /// iota = B Q_hat - B^ Q_hat with B^ the sample-mean operator of the dataset.
  kEmpiricalOperator,
};

struct DecompositionOptions {
  int horizon = 200;
  IotaSource iota_source = IotaSource::kFixedPointResidual;
  double default_value = 0.0;
  double optimal_tol = 1e-12;
};

/// Three-term split of V*(s0) - V^pi_hat(s0). Per-start-state vectors plus
/// d0-averaged scalars.
struct SuboptimalityReport {
  VTable spurious_per_state;
  VTable intrinsic_per_state;
  VTable optimization_per_state;
  VTable total_per_state;

  double term_spurious = 0.0;
  double term_intrinsic = 0.0;
  double term_optim = 0.0;
  double total = 0.0;
  int horizon_truncation = 0;
  double truncation_bound = 0.0;

  double terms_sum() const { return term_spurious + term_intrinsic + term_optim; }
};

SuboptimalityReport suboptimality_decompose(const TabularMdp& mdp, const TabularDataset& dataset,
                                            const PolicyTable& learned_policy, const QTable& q_hat,
                                            const DecompositionOptions& options = {});

}  // namespace score
