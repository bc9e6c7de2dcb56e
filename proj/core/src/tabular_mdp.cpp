#include "score/tabular_mdp.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "score/error.hpp"

namespace score {

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kInvalidInput: return "invalid-input";
    case ErrorKind::kConvergenceFailure: return "convergence-failure";
    case ErrorKind::kDivergentKl: return "divergent-kl";
    case ErrorKind::kSingularInformation: return "singular-information";
    case ErrorKind::kTrainingDivergence: return "training-divergence";
    case ErrorKind::kMissingReference: return "missing-reference";
    case ErrorKind::kIo: return "io";
  }
  return "unknown";
}

namespace {

constexpr double kStochasticTol = 1e-12;

}  // namespace

TabularMdp::TabularMdp(int n_states, int n_actions, Eigen::MatrixXd transition,
                       Eigen::MatrixXd reward, double gamma, Eigen::VectorXd init_dist)
    : n_states_(n_states),
      n_actions_(n_actions),
      transition_(std::move(transition)),
      reward_(std::move(reward)),
      gamma_(gamma),
      init_dist_(std::move(init_dist)) {
  require(n_states > 0 && n_actions > 0, "TabularMdp: n_states and n_actions must be positive");
  require(transition_.rows() == n_states * n_actions && transition_.cols() == n_states,
          "TabularMdp: transition must be (S*A) x S");
  require(reward_.rows() == n_states && reward_.cols() == n_actions,
          "TabularMdp: reward must be S x A");
  require(init_dist_.size() == n_states, "TabularMdp: init_dist must have S entries");
  require(gamma >= 0.0 && gamma < 1.0, "TabularMdp: gamma must lie in [0, 1)");
  require(transition_.allFinite() && reward_.allFinite() && init_dist_.allFinite(),
          "TabularMdp: non-finite entries");
  require((transition_.array() >= 0.0).all(), "TabularMdp: negative transition probability");
  for (int r = 0; r < transition_.rows(); ++r) {
    require(std::abs(transition_.row(r).sum() - 1.0) <= kStochasticTol,
            "TabularMdp: transition row " + std::to_string(r) + " does not sum to 1");
  }
  require((init_dist_.array() >= 0.0).all() && std::abs(init_dist_.sum() - 1.0) <= kStochasticTol,
          "TabularMdp: init_dist is not a distribution");
  require((reward_.array() >= 0.0).all(), "TabularMdp: rewards must be non-negative");
}

Eigen::MatrixXd TabularMdp::policy_transition(const PolicyTable& policy) const {
  Eigen::MatrixXd p_pi = Eigen::MatrixXd::Zero(n_states_, n_states_);
  for (int s = 0; s < n_states_; ++s) {
    for (int a = 0; a < n_actions_; ++a) {
      if (policy(s, a) != 0.0) p_pi.row(s) += policy(s, a) * transition_.row(row(s, a));
    }
  }
  return p_pi;
}

VTable TabularMdp::policy_reward(const PolicyTable& policy) const {
  return (policy.array() * reward_.array()).rowwise().sum();
}

nlohmann::json TabularMdp::to_json() const {
  nlohmann::json transition = nlohmann::json::array();
  nlohmann::json reward = nlohmann::json::array();
  for (int s = 0; s < n_states_; ++s) {
    nlohmann::json per_action = nlohmann::json::array();
    nlohmann::json reward_row = nlohmann::json::array();
    for (int a = 0; a < n_actions_; ++a) {
      std::vector<double> next(transition_.cols());
      for (int n = 0; n < n_states_; ++n) next[n] = p(s, a, n);
      per_action.push_back(next);
      reward_row.push_back(reward_(s, a));
    }
    transition.push_back(per_action);
    reward.push_back(reward_row);
  }
  std::vector<double> init(init_dist_.data(), init_dist_.data() + init_dist_.size());
  return {{"n_states", n_states_}, {"n_actions", n_actions_}, {"gamma", gamma_},
          {"transition", transition}, {"reward", reward}, {"init_dist", init}};
}

TabularMdp TabularMdp::from_json(const nlohmann::json& doc) {
  try {
    const int n_states = doc.at("n_states").get<int>();
    const int n_actions = doc.at("n_actions").get<int>();
    require(n_states > 0 && n_actions > 0, "mdp json: sizes must be positive");
    const auto& tr = doc.at("transition");
    const auto& rw = doc.at("reward");
    const auto& init = doc.at("init_dist");
    require(tr.size() == static_cast<std::size_t>(n_states) &&
                rw.size() == static_cast<std::size_t>(n_states) &&
                init.size() == static_cast<std::size_t>(n_states),
            "mdp json: outer array lengths must equal n_states");
    Eigen::MatrixXd transition(n_states * n_actions, n_states);
    Eigen::MatrixXd reward(n_states, n_actions);
    Eigen::VectorXd init_dist(n_states);
    for (int s = 0; s < n_states; ++s) {
      require(tr[s].size() == static_cast<std::size_t>(n_actions) &&
                  rw[s].size() == static_cast<std::size_t>(n_actions),
              "mdp json: per-state arrays must have n_actions entries");
      for (int a = 0; a < n_actions; ++a) {
        require(tr[s][a].size() == static_cast<std::size_t>(n_states),
                "mdp json: next-state arrays must have n_states entries");
        for (int n = 0; n < n_states; ++n) transition(s * n_actions + a, n) = tr[s][a][n].get<double>();
        reward(s, a) = rw[s][a].get<double>();
      }
      init_dist(s) = init[s].get<double>();
    }
    return TabularMdp(n_states, n_actions, std::move(transition), std::move(reward),
                      doc.at("gamma").get<double>(), std::move(init_dist));
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::kInvalidInput, std::string("mdp json: ") + e.what());
  }
}

nlohmann::json table_to_json(const Eigen::MatrixXd& table) {
  nlohmann::json values = nlohmann::json::array();
  for (int s = 0; s < table.rows(); ++s) {
    std::vector<double> row(table.cols());
    for (int a = 0; a < table.cols(); ++a) row[a] = table(s, a);
    values.push_back(row);
  }
  return {{"n_states", table.rows()}, {"n_actions", table.cols()}, {"values", values}};
}

Eigen::MatrixXd table_from_json(const nlohmann::json& doc) {
  try {
    const int rows = doc.at("n_states").get<int>();
    const int cols = doc.at("n_actions").get<int>();
    const auto& values = doc.at("values");
    require(rows > 0 && cols > 0 && values.size() == static_cast<std::size_t>(rows),
            "table json: shape mismatch");
    Eigen::MatrixXd table(rows, cols);
    for (int s = 0; s < rows; ++s) {
      require(values[s].size() == static_cast<std::size_t>(cols), "table json: shape mismatch");
      for (int a = 0; a < cols; ++a) table(s, a) = values[s][a].get<double>();
    }
    return table;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::kInvalidInput, std::string("table json: ") + e.what());
  }
}

void save_mdp(const TabularMdp& mdp, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) fail(ErrorKind::kIo, "cannot open " + path.string() + " for writing");
  out << mdp.to_json().dump(2) << '\n';
  if (!out) fail(ErrorKind::kIo, "write failed: " + path.string());
}

TabularMdp load_mdp(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::kIo, "cannot open " + path.string());
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::kInvalidInput, path.string() + ": " + e.what());
  }
  return TabularMdp::from_json(doc);
}

TabularDataset::TabularDataset(int n_states, int n_actions,
                               std::vector<TabularTransition> transitions,
                               std::string behavior_tag)
    : n_states_(n_states),
      n_actions_(n_actions),
      transitions_(std::move(transitions)),
      counts_(Eigen::MatrixXi::Zero(n_states, n_actions)),
      behavior_tag_(std::move(behavior_tag)) {
  require(n_states > 0 && n_actions > 0, "TabularDataset: sizes must be positive");
  for (const auto& t : transitions_) {
    require(t.state >= 0 && t.state < n_states && t.next_state >= 0 && t.next_state < n_states &&
                t.action >= 0 && t.action < n_actions,
            "TabularDataset: transition index out of range");
    require(std::isfinite(t.reward), "TabularDataset: non-finite reward");
    ++counts_(t.state, t.action);
  }
}

EmpiricalModel estimate_model(const TabularDataset& dataset) {
  const int S = dataset.n_states();
  const int A = dataset.n_actions();
  EmpiricalModel model;
  model.n_states = S;
  model.n_actions = A;
  model.counts = dataset.counts();
  model.mean_reward = Eigen::MatrixXd::Zero(S, A);
  model.next_freq = Eigen::MatrixXd::Zero(S * A, S);
  for (const auto& t : dataset.transitions()) {
    model.mean_reward(t.state, t.action) += t.reward;
    model.next_freq(t.state * A + t.action, t.next_state) += 1.0;
  }
  for (int s = 0; s < S; ++s) {
    for (int a = 0; a < A; ++a) {
      const int n = model.counts(s, a);
      if (n == 0) continue;
      model.mean_reward(s, a) /= n;
      model.next_freq.row(s * A + a) /= n;
    }
  }
  return model;
}

int sample_index(const Eigen::Ref<const Eigen::RowVectorXd>& probs, Rng& rng) {
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const double u = unif(rng);
  double acc = 0.0;
  int last_positive = 0;
  for (int i = 0; i < probs.size(); ++i) {
    if (probs(i) <= 0.0) continue;
    acc += probs(i);
    last_positive = i;
    if (u < acc) return i;
  }
  return last_positive;
}

TabularMdp random_mdp(int n_states, int n_actions, Rng& rng, const RandomMdpOptions& options) {
  require(n_states > 0 && n_actions > 0, "random_mdp: sizes must be positive");
  const int support = options.support > 0 ? std::min(options.support, n_states) : n_states;
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  Eigen::MatrixXd transition = Eigen::MatrixXd::Zero(n_states * n_actions, n_states);
  std::vector<int> order(n_states);
  for (int row = 0; row < n_states * n_actions; ++row) {
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    if (options.denominator > 0) {
      // Distribute `denominator` unit masses over the chosen successors.
      std::uniform_int_distribution<int> pick(0, support - 1);
      for (int k = 0; k < options.denominator; ++k) transition(row, order[pick(rng)]) += 1.0;
      transition.row(row) /= options.denominator;
    } else {
      double total = 0.0;
      for (int k = 0; k < support; ++k) {
        const double w = -std::log(1.0 - unif(rng));
        transition(row, order[k]) = w;
        total += w;
      }
      transition.row(row) /= total;
    }
  }
  Eigen::MatrixXd reward(n_states, n_actions);
  for (int s = 0; s < n_states; ++s)
    for (int a = 0; a < n_actions; ++a) reward(s, a) = options.r_max * unif(rng);
  Eigen::VectorXd init(n_states);
  for (int s = 0; s < n_states; ++s) init(s) = 0.5 + unif(rng);
  init /= init.sum();
  return TabularMdp(n_states, n_actions, std::move(transition), std::move(reward), options.gamma,
                    std::move(init));
}

TabularDataset perfect_dataset(const TabularMdp& mdp, int denominator) {
  require(denominator > 0, "perfect_dataset: denominator must be positive");
  std::vector<TabularTransition> transitions;
  for (int s = 0; s < mdp.n_states(); ++s) {
    for (int a = 0; a < mdp.n_actions(); ++a) {
      int emitted = 0;
      for (int n = 0; n < mdp.n_states(); ++n) {
        const double scaled = mdp.p(s, a, n) * denominator;
        const double rounded = std::round(scaled);
        require(std::abs(scaled - rounded) <= 1e-9,
                "perfect_dataset: P(s'|s,a) is not a multiple of 1/denominator");
        for (int k = 0; k < static_cast<int>(rounded); ++k) {
          transitions.push_back({s, a, n, mdp.r(s, a)});
          ++emitted;
        }
      }
      require(emitted == denominator, "perfect_dataset: sample count mismatch");
    }
  }
  return TabularDataset(mdp.n_states(), mdp.n_actions(), std::move(transitions), "perfect");
}

TabularDataset sample_dataset(const TabularMdp& mdp, const Eigen::MatrixXi& counts, Rng& rng,
                              const std::string& behavior_tag) {
  require(counts.rows() == mdp.n_states() && counts.cols() == mdp.n_actions(),
          "sample_dataset: counts shape mismatch");
  std::vector<TabularTransition> transitions;
  transitions.reserve(static_cast<std::size_t>(counts.sum()));
  for (int s = 0; s < mdp.n_states(); ++s) {
    for (int a = 0; a < mdp.n_actions(); ++a) {
      require(counts(s, a) >= 0, "sample_dataset: negative count");
      for (int k = 0; k < counts(s, a); ++k) {
        const int next = sample_index(mdp.transition().row(mdp.row(s, a)), rng);
        transitions.push_back({s, a, next, mdp.r(s, a)});
      }
    }
  }
  return TabularDataset(mdp.n_states(), mdp.n_actions(), std::move(transitions), behavior_tag);
}

TabularDataset sample_uniform_dataset(const TabularMdp& mdp, int samples_per_pair, Rng& rng) {
  require(samples_per_pair >= 0, "sample_uniform_dataset: samples_per_pair must be >= 0");
  return sample_dataset(mdp, Eigen::MatrixXi::Constant(mdp.n_states(), mdp.n_actions(), samples_per_pair),
                        rng);
}

TabularDataset rollout_dataset(const TabularMdp& mdp, const PolicyTable& behavior,
                               std::size_t n_transitions, int episode_length, Rng& rng,
                               const std::string& behavior_tag) {
  require(behavior.rows() == mdp.n_states() && behavior.cols() == mdp.n_actions(),
          "rollout_dataset: policy shape mismatch");
  require(episode_length > 0, "rollout_dataset: episode_length must be positive");
  std::vector<TabularTransition> transitions;
  transitions.reserve(n_transitions);
  while (transitions.size() < n_transitions) {
    int s = sample_index(mdp.init_dist().transpose(), rng);
    for (int t = 0; t < episode_length && transitions.size() < n_transitions; ++t) {
      const int a = sample_index(behavior.row(s), rng);
      const int next = sample_index(mdp.transition().row(mdp.row(s, a)), rng);
      transitions.push_back({s, a, next, mdp.r(s, a)});
      s = next;
    }
  }
  return TabularDataset(mdp.n_states(), mdp.n_actions(), std::move(transitions), behavior_tag);
}

}  // namespace score
