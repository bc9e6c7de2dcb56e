#include "score/pessimism.hpp"

#include <algorithm>
#include <cmath>

#include "score/error.hpp"

namespace score {

const char* to_string(UncertaintyConstruction c) {
  switch (c) {
    case UncertaintyConstruction::kHoeffdingCount: return "hoeffding-count";
    case UncertaintyConstruction::kEnsembleStd: return "ensemble-std";
    case UncertaintyConstruction::kOracleExact: return "oracle-exact";
  }
  return "unknown";
}

UncertaintyConstruction uncertainty_construction_from_string(const std::string& name) {
  if (name == "hoeffding-count") return UncertaintyConstruction::kHoeffdingCount;
  if (name == "ensemble-std") return UncertaintyConstruction::kEnsembleStd;
  if (name == "oracle-exact") return UncertaintyConstruction::kOracleExact;
  fail(ErrorKind::kInvalidInput, "unknown uncertainty construction '" + name + "'");
}

UncertaintyTable UncertaintyTable::constant(int n_states, int n_actions, double value,
                                            double v_max, double xi) {
  require(value >= 0.0, "UncertaintyTable: penalty must be non-negative");
  UncertaintyTable t;
  t.u = Eigen::MatrixXd::Constant(n_states, n_actions, value);
  t.xi = xi;
  t.construction = UncertaintyConstruction::kOracleExact;
  t.v_max = v_max;
  return t;
}

nlohmann::json UncertaintyTable::to_json() const {
  nlohmann::json doc = table_to_json(u);
  doc["xi"] = xi;
  doc["construction"] = to_string(construction);
  doc["v_max"] = v_max;
  return doc;
}

UncertaintyTable UncertaintyTable::from_json(const nlohmann::json& doc) {
  UncertaintyTable t;
  t.u = table_from_json(doc);
  try {
    t.xi = doc.at("xi").get<double>();
    t.construction = uncertainty_construction_from_string(doc.at("construction").get<std::string>());
    t.v_max = doc.value("v_max", t.u.maxCoeff());
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::kInvalidInput, std::string("uncertainty json: ") + e.what());
  }
  require((t.u.array() >= 0.0).all(), "uncertainty json: negative penalty");
  return t;
}

double hoeffding_bonus(long n, long n_pairs, double v_max, double xi) {
  require(xi > 0.0 && xi < 1.0, "hoeffding: xi must lie in (0, 1)");
  require(v_max > 0.0, "hoeffding: v_max must be positive");
  require(n >= 0 && n_pairs >= 1, "hoeffding: invalid count");
  if (n == 0) return v_max;
  // Union bound over all pairs.
  const double log_term = std::log(2.0 * static_cast<double>(n_pairs) / xi);
  return std::min(v_max, v_max * std::sqrt(log_term / (2.0 * static_cast<double>(n))));
}

UncertaintyTable hoeffding_uncertainty(const TabularDataset& dataset, double v_max, double xi) {
  const int S = dataset.n_states();
  const int A = dataset.n_actions();
  UncertaintyTable t;
  t.u.resize(S, A);
  for (int s = 0; s < S; ++s) {
    for (int a = 0; a < A; ++a) t.u(s, a) = hoeffding_bonus(dataset.count(s, a), 1L * S * A, v_max, xi);
  }
  t.xi = xi;
  t.construction = UncertaintyConstruction::kHoeffdingCount;
  t.v_max = v_max;
  return t;
}

QTable pessimistic_bellman_apply(const EmpiricalModel& model, const QTable& q,
                                 const UncertaintyTable& u, double gamma) {
  require(u.u.rows() == model.n_states && u.u.cols() == model.n_actions,
          "pessimistic_bellman_apply: uncertainty shape mismatch");
  const QTable raw = empirical_bellman_apply(model, q, gamma, 0.0) - u.u;
  return raw.cwiseMax(0.0).cwiseMin(u.v_max);
}

QTable pessimistic_bellman_apply(const TabularDataset& dataset, const QTable& q,
                                 const UncertaintyTable& u, double gamma) {
  return pessimistic_bellman_apply(estimate_model(dataset), q, u, gamma);
}

PessimisticSolution pessimistic_value_iteration(const TabularDataset& dataset,
                                                const UncertaintyTable& u, double gamma,
                                                double tol, int max_iterations) {
  require(tol > 0.0, "pessimistic_value_iteration: tol must be positive");
  require(gamma > 0.0 && gamma < 1.0, "pessimistic_value_iteration: gamma must lie in (0, 1)");
  const EmpiricalModel model = estimate_model(dataset);
  PessimisticSolution sol;
  sol.q = QTable::Zero(dataset.n_states(), dataset.n_actions());
  for (;;) {
    QTable next = pessimistic_bellman_apply(model, sol.q, u, gamma);
    sol.residual = (next - sol.q).cwiseAbs().maxCoeff();
    ++sol.iterations;
    // ||Q - B^-Q|| for the returned Q equals the step just measured.
    if (sol.residual <= tol) break;
    if (sol.iterations >= max_iterations) {
      throw ConvergenceError("pessimistic_value_iteration: residual " +
                                 std::to_string(sol.residual) + " after " +
                                 std::to_string(sol.iterations) + " sweeps",
                             sol.residual);
    }
    sol.q = std::move(next);
  }
  sol.policy = greedy_policy(sol.q);
  return sol;
}

bool xi_event_holds(const TabularMdp& mdp, const TabularDataset& dataset, const QTable& q,
                    const UncertaintyTable& u) {
  const QTable gap =
      (empirical_bellman_apply(dataset, q, mdp.gamma(), 0.0) - bellman_optimality_apply(mdp, q))
          .cwiseAbs();
  return (gap.array() <= u.u.array()).all();
}

XiEventResult verify_xi_event(const TabularMdp& mdp, const DatasetSampler& sampler,
                              const QTable& q, const UncertaintyBuilder& u_builder, int trials,
                              std::uint64_t seed) {
  require(trials >= 1, "verify_xi_event: trials must be positive");
  XiEventResult result;
  for (int trial = 0; trial < trials; ++trial) {
    Rng rng = make_rng(seed, static_cast<std::uint64_t>(trial));
    const TabularDataset dataset = sampler(rng);
    const UncertaintyTable u = u_builder(dataset);
    ++result.trials;
    if (xi_event_holds(mdp, dataset, q, u)) ++result.held;
  }
  return result;
}

EpistemicBoundCheck epistemic_error_bound_detail(const TabularMdp& mdp,
                                                 const TabularDataset& dataset,
                                                 const UncertaintyTable& u, double tol) {
  EpistemicBoundCheck check;
  const double solve_tol = std::max(1e-13, 1e-3 * tol * (1.0 - mdp.gamma()));
  check.solution = pessimistic_value_iteration(dataset, u, mdp.gamma(), solve_tol);
  const QTable& q_hat = check.solution.q;
  check.iota = bellman_optimality_apply(mdp, q_hat) -
               pessimistic_bellman_apply(dataset, q_hat, u, mdp.gamma());
  check.min_iota = check.iota.minCoeff();
  check.max_excess = (check.iota - 2.0 * u.u).maxCoeff();
  check.holds = check.min_iota >= -tol && check.max_excess <= tol;
  return check;
}

bool epistemic_error_bound_check(const TabularMdp& mdp, const TabularDataset& dataset,
                                 const UncertaintyTable& u, double tol) {
  return epistemic_error_bound_detail(mdp, dataset, u, tol).holds;
}

}  // namespace score
