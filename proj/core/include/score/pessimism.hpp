#pragma once

#include <cstdint>
#include <functional>
#include <string>

#include <nlohmann/json.hpp>

#include "score/bellman.hpp"

namespace score {

enum class UncertaintyConstruction { kHoeffdingCount, kEnsembleStd, kOracleExact };

const char* to_string(UncertaintyConstruction c);
UncertaintyConstruction uncertainty_construction_from_string(const std::string& name);

/// Penalty table U(s, a) >= 0 with its confidence level xi. `v_max` is both the
/// value-range cap used by the pessimistic operator and the penalty given to
/// unvisited pairs.
struct UncertaintyTable {
  Eigen::MatrixXd u;
  double xi = 0.1;
  UncertaintyConstruction construction = UncertaintyConstruction::kHoeffdingCount;
  double v_max = 0.0;

  static UncertaintyTable constant(int n_states, int n_actions, double value, double v_max,
                                   double xi = 0.1);

  nlohmann::json to_json() const;
  static UncertaintyTable from_json(const nlohmann::json& doc);
};

/// v_max * sqrt(ln(2 n_pairs / xi) / (2 n)) capped at v_max; n = 0 gives v_max.
double hoeffding_bonus(long n, long n_pairs, double v_max, double xi);

/// u(s,a) = hoeffding_bonus(n(s,a), |S||A|, v_max, xi).
UncertaintyTable hoeffding_uncertainty(const TabularDataset& dataset, double v_max, double xi);

/// clip(B^Q - u, 0, v_max).
QTable pessimistic_bellman_apply(const EmpiricalModel& model, const QTable& q,
                                 const UncertaintyTable& u, double gamma);
QTable pessimistic_bellman_apply(const TabularDataset& dataset, const QTable& q,
                                 const UncertaintyTable& u, double gamma);

struct PessimisticSolution {
  QTable q;
  PolicyTable policy;
  int iterations = 0;
  double residual = 0.0;
};

/// Synchronous fixed-point iteration of the pessimistic operator from Q = 0.
/// Throws ConvergenceError carrying the residual after max_iterations sweeps.
PessimisticSolution pessimistic_value_iteration(const TabularDataset& dataset,
                                                const UncertaintyTable& u, double gamma,
                                                double tol, int max_iterations = 100'000);

using DatasetSampler = std::function<TabularDataset(Rng&)>;
using UncertaintyBuilder = std::function<UncertaintyTable(const TabularDataset&)>;

struct XiEventResult {
  int trials = 0;
  int held = 0;
  double frequency() const { return trials > 0 ? static_cast<double>(held) / trials : 0.0; }
};

/// Fraction of resampled datasets on which |B^q - Bq| <= u holds for every pair.
XiEventResult verify_xi_event(const TabularMdp& mdp, const DatasetSampler& sampler,
                              const QTable& q, const UncertaintyBuilder& u_builder, int trials,
                              std::uint64_t seed);

/// True when |B^q - Bq| <= u for every (s, a) on this one dataset.
bool xi_event_holds(const TabularMdp& mdp, const TabularDataset& dataset, const QTable& q,
                    const UncertaintyTable& u);

struct EpistemicBoundCheck {
  bool holds = false;
  Eigen::MatrixXd iota;   // B Q_hat - B^- Q_hat
  double min_iota = 0.0;
  double max_excess = 0.0;  // max over pairs of iota - 2u
  PessimisticSolution solution;
};

/// Runs pessimistic value iteration on (dataset, u) and checks
/// -tol <= B Q_hat - B^- Q_hat <= 2u + tol elementwise.
EpistemicBoundCheck epistemic_error_bound_detail(const TabularMdp& mdp,
                                                 const TabularDataset& dataset,
                                                 const UncertaintyTable& u, double tol);
bool epistemic_error_bound_check(const TabularMdp& mdp, const TabularDataset& dataset,
                                 const UncertaintyTable& u, double tol);

}  // namespace score
