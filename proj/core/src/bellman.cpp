#include "score/bellman.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "score/error.hpp"

namespace score {

namespace {

void require_shape(const QTable& q, int n_states, int n_actions, const char* what) {
  require(q.rows() == n_states && q.cols() == n_actions,
          std::string(what) + ": table shape does not match the model");
}

void require_finite(const QTable& q, const char* what) {
  require(q.allFinite(), std::string(what) + ": non-finite Q entries");
}

// Reshape an (S*A)-vector laid out as row s*A + a into an S x A table.
QTable to_table(const Eigen::VectorXd& flat, int n_states, int n_actions) {
  QTable q(n_states, n_actions);
  for (int s = 0; s < n_states; ++s)
    for (int a = 0; a < n_actions; ++a) q(s, a) = flat(s * n_actions + a);
  return q;
}

constexpr long kMaxSweeps = 10'000'000;

// Residuals below a few ulps of the table magnitude cannot be reduced further.
double precision_floor(const Eigen::MatrixXd& values) {
  return 16.0 * std::numeric_limits<double>::epsilon() * (1.0 + values.cwiseAbs().maxCoeff());
}

}  // namespace

VTable greedy_values(const QTable& q) { return q.rowwise().maxCoeff(); }

PolicyTable greedy_policy(const QTable& q) {
  PolicyTable pi = PolicyTable::Zero(q.rows(), q.cols());
  for (int s = 0; s < q.rows(); ++s) {
    int best = 0;
    for (int a = 1; a < q.cols(); ++a)
      if (q(s, a) > q(s, best)) best = a;
    pi(s, best) = 1.0;
  }
  return pi;
}

PolicyTable uniform_policy(int n_states, int n_actions) {
  return PolicyTable::Constant(n_states, n_actions, 1.0 / n_actions);
}

QTable bellman_optimality_apply(const TabularMdp& mdp, const QTable& q) {
  require_shape(q, mdp.n_states(), mdp.n_actions(), "bellman_optimality_apply");
  require_finite(q, "bellman_optimality_apply");
  const Eigen::VectorXd next = mdp.transition() * greedy_values(q);
  return mdp.reward() + mdp.gamma() * to_table(next, mdp.n_states(), mdp.n_actions());
}

QTable bellman_policy_apply(const TabularMdp& mdp, const QTable& q, const PolicyTable& policy) {
  require_shape(q, mdp.n_states(), mdp.n_actions(), "bellman_policy_apply");
  require_shape(policy, mdp.n_states(), mdp.n_actions(), "bellman_policy_apply");
  require_finite(q, "bellman_policy_apply");
  const VTable v = (q.array() * policy.array()).rowwise().sum();
  const Eigen::VectorXd next = mdp.transition() * v;
  return mdp.reward() + mdp.gamma() * to_table(next, mdp.n_states(), mdp.n_actions());
}

QTable empirical_bellman_apply(const EmpiricalModel& model, const QTable& q, double gamma,
                               double default_value) {
  require_shape(q, model.n_states, model.n_actions, "empirical_bellman_apply");
  require_finite(q, "empirical_bellman_apply");
  const Eigen::VectorXd next = model.next_freq * greedy_values(q);
  QTable out = model.mean_reward + gamma * to_table(next, model.n_states, model.n_actions);
  for (int s = 0; s < model.n_states; ++s)
    for (int a = 0; a < model.n_actions; ++a)
      if (!model.covered(s, a)) out(s, a) = default_value;
  return out;
}

QTable empirical_bellman_apply(const TabularDataset& dataset, const QTable& q, double gamma,
                               double default_value) {
  return empirical_bellman_apply(estimate_model(dataset), q, gamma, default_value);
}

Eigen::MatrixXd epistemic_error(const TabularMdp& mdp, const TabularDataset& dataset,
                                const QTable& q, double default_value) {
  require(dataset.n_states() == mdp.n_states() && dataset.n_actions() == mdp.n_actions(),
          "epistemic_error: dataset and mdp sizes differ");
  return bellman_optimality_apply(mdp, q) -
         empirical_bellman_apply(dataset, q, mdp.gamma(), default_value);
}

VTable policy_value(const TabularMdp& mdp, const PolicyTable& policy, double tol) {
  require(tol > 0.0, "policy_value: tol must be positive");
  require_shape(policy, mdp.n_states(), mdp.n_actions(), "policy_value");
  for (int s = 0; s < policy.rows(); ++s) {
    require((policy.row(s).array() >= 0.0).all() && std::abs(policy.row(s).sum() - 1.0) <= 1e-12,
            "policy_value: policy row " + std::to_string(s) + " is not a distribution");
  }
  const Eigen::MatrixXd p_pi = mdp.policy_transition(policy);
  const VTable r_pi = mdp.policy_reward(policy);
  VTable v = VTable::Zero(mdp.n_states());
  for (long it = 0; it < kMaxSweeps; ++it) {
    VTable next = r_pi + mdp.gamma() * (p_pi * v);
    const double residual = (next - v).cwiseAbs().maxCoeff();
    v = std::move(next);
    if (residual <= std::max(tol, precision_floor(v))) return v;
  }
  throw ConvergenceError("policy_value: no convergence", tol);
}

double expected_return(const TabularMdp& mdp, const VTable& v) { return mdp.init_dist().dot(v); }

OptimalSolution exact_value_iteration(const TabularMdp& mdp, double tol) {
  require(tol > 0.0, "exact_value_iteration: tol must be positive");
  OptimalSolution sol;
  sol.q = QTable::Zero(mdp.n_states(), mdp.n_actions());
  for (;;) {
    QTable next = bellman_optimality_apply(mdp, sol.q);
    sol.residual = (next - sol.q).cwiseAbs().maxCoeff();
    ++sol.iterations;
    if (sol.residual <= std::max(tol, precision_floor(next))) break;
    if (sol.iterations >= kMaxSweeps)
      throw ConvergenceError("exact_value_iteration: no convergence", sol.residual);
    sol.q = std::move(next);
  }
  sol.policy = greedy_policy(sol.q);
  return sol;
}

VTable discounted_occupancy_sum(const TabularMdp& mdp, const PolicyTable& policy,
                                const Eigen::MatrixXd& f, int horizon) {
  require(horizon >= 1, "discounted_occupancy_sum: horizon must be >= 1");
  require_shape(policy, mdp.n_states(), mdp.n_actions(), "discounted_occupancy_sum");
  require_shape(f, mdp.n_states(), mdp.n_actions(), "discounted_occupancy_sum");
  const Eigen::MatrixXd p_pi = mdp.policy_transition(policy);
  const VTable f_pi = (policy.array() * f.array()).rowwise().sum();
  // Backward accumulation: x_t = f_pi + gamma * P_pi x_{t+1} gives, per start
  // state, the same sum as propagating occupancy forward from each s0.
  VTable acc = f_pi;
  for (int t = 1; t < horizon; ++t) acc = f_pi + mdp.gamma() * (p_pi * acc);
  return acc;
}

SuboptimalityReport suboptimality_decompose(const TabularMdp& mdp, const TabularDataset& dataset,
                                            const PolicyTable& learned_policy, const QTable& q_hat,
                                            const DecompositionOptions& options) {
  require(options.horizon >= 1, "suboptimality_decompose: horizon must be >= 1");
  require(dataset.n_states() == mdp.n_states() && dataset.n_actions() == mdp.n_actions(),
          "suboptimality_decompose: dataset and mdp sizes differ");
  require_shape(learned_policy, mdp.n_states(), mdp.n_actions(), "suboptimality_decompose");
  require_shape(q_hat, mdp.n_states(), mdp.n_actions(), "suboptimality_decompose");

  const OptimalSolution opt = exact_value_iteration(mdp, options.optimal_tol);
  const PolicyTable& pi_star = opt.policy;

  Eigen::MatrixXd iota;
  if (options.iota_source == IotaSource::kFixedPointResidual) {
    iota = bellman_policy_apply(mdp, q_hat, learned_policy) - q_hat;
  } else {
    iota = epistemic_error(mdp, dataset, q_hat, options.default_value);
  }

  // <Q_hat(s,.), pi*(.|s) - pi_hat(.|s)> does not depend on the action taken
  // under pi*, so it is broadcast across the action columns.
  const VTable gap_inner = ((pi_star - learned_policy).array() * q_hat.array()).rowwise().sum();
  const Eigen::MatrixXd gap_table = gap_inner.replicate(1, mdp.n_actions());

  SuboptimalityReport report;
  report.horizon_truncation = options.horizon;
  report.truncation_bound = std::pow(mdp.gamma(), options.horizon) * mdp.r_max() / (1.0 - mdp.gamma());
  report.spurious_per_state = -discounted_occupancy_sum(mdp, learned_policy, iota, options.horizon);
  report.intrinsic_per_state = discounted_occupancy_sum(mdp, pi_star, iota, options.horizon);
  report.optimization_per_state = discounted_occupancy_sum(mdp, pi_star, gap_table, options.horizon);

  const double eval_tol = 1e-13;
  report.total_per_state = policy_value(mdp, pi_star, eval_tol) - policy_value(mdp, learned_policy, eval_tol);

  const auto& d0 = mdp.init_dist();
  report.term_spurious = d0.dot(report.spurious_per_state);
  report.term_intrinsic = d0.dot(report.intrinsic_per_state);
  report.term_optim = d0.dot(report.optimization_per_state);
  report.total = d0.dot(report.total_per_state);
  return report;
}

}  // namespace score
