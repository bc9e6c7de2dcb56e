#include <iostream>
#include <memory>
#include <optional>

#include "commands.hpp"
#include "manifest.hpp"
#include "score/chain_mdp.hpp"
#include "score/opo.hpp"
#include "score/stats.hpp"

namespace score::cli {

namespace {

struct OpoOptions {
  std::filesystem::path mdp;
  int states = 5;
  int actions = 3;
  std::uint64_t mdp_seed = 7;
  int denominator = 10;
  std::string data = "perfect";
  int samples_per_pair = 100;
  int K = 200;
  std::vector<int> k_sweep;
  double alpha = 0.9;
  double xi = 0.1;
  std::optional<double> zeta;
};

int run_opo_cmd(const Context& ctx, const OpoOptions& o) {
  RunManifest m;
  m.command = ctx.command;
  m.started = utc_timestamp();
  require(o.data == "perfect" || o.data == "sampled", "--data must be 'perfect' or 'sampled'");
  require(o.samples_per_pair >= 1, "--samples_per_pair must be >= 1");
  const std::vector<int> ks = o.k_sweep.empty() ? std::vector<int>{o.K} : o.k_sweep;
  for (int k : ks) require(k >= 1, "--K must be >= 1");

  const TabularMdp mdp = [&o] {
    if (!o.mdp.empty()) return load_mdp(o.mdp);
    Rng rng = make_rng(o.mdp_seed);
    RandomMdpOptions ro;
    ro.denominator = o.denominator;
    return random_mdp(o.states, o.actions, rng, ro);
  }();
  const std::uint64_t seed = ctx.seeds_or(0).front();
  m.seeds = {seed};
  const TabularDataset data = [&] {
    if (o.data == "perfect") return perfect_dataset(mdp, o.denominator);
    Rng rng = make_rng(seed);
    return sample_uniform_dataset(mdp, o.samples_per_pair, rng);
  }();

  OpoConfig base;
  base.alpha = o.alpha;
  base.xi = o.xi;
  base.zeta = o.zeta;
  base.zero_uncertainty = o.data == "perfect";
  m.config = {{"mdp", o.mdp.empty() ? nlohmann::json{{"random", {{"states", o.states},
                                                                 {"actions", o.actions},
                                                                 {"seed", o.mdp_seed},
                                                                 {"denominator", o.denominator}}}}
                                    : nlohmann::json(o.mdp.string())},
              {"data", o.data},
              {"samples_per_pair", o.samples_per_pair},
              {"denominator", o.denominator},
              {"K", ks},
              {"alpha", o.alpha},
              {"xi", o.xi},
              {"zeta", o.zeta ? nlohmann::json(*o.zeta) : nlohmann::json(nullptr)},
              {"reference_policy", "uniform"}};

  const SoftmaxPolicy pi_0 = SoftmaxPolicy::uniform(mdp.n_states(), mdp.n_actions());
  std::vector<OpoRunReport> reports(ks.size());
  run_pool(ks.size(), ctx.jobs, [&](std::size_t i) {
    OpoConfig c = base;
    c.K = ks[i];
    reports[i] = run_opo(mdp, data, pi_0, c);
  });

  const auto dir = ensure_dir(ctx.out_dir);
  std::vector<double> kd, ave, final_gap;
  for (std::size_t i = 0; i < ks.size(); ++i) {
    const auto path = dir / ("opo_K" + std::to_string(ks[i]) + ".json");
    nlohmann::json j = reports[i].to_json();
    j["K"] = ks[i];
    write_json(path, j);
    m.add_output(path);
    for (const auto& w : reports[i].warnings) std::cerr << "warning (K=" << ks[i] << "): " << w << '\n';
    std::cout << "K " << ks[i] << " subopt " << reports[i].suboptgap_K << " ave " << reports[i].avegap_K << '\n';
    kd.push_back(ks[i]);
    ave.push_back(reports[i].avegap_K);
    final_gap.push_back(reports[i].gap_per_iter.back());
  }
  if (ks.size() >= 2) {
    const LinearFit fit = log_log_fit(kd, ave);
    const auto path = dir / "sweep.json";
    write_json(path, {{"K", ks},
                      {"avegap", ave},
                      {"final_gap", final_gap},
                      {"loglog_slope", fit.slope},
                      {"loglog_intercept", fit.intercept},
                      {"final_gap_ratio", final_gap.back() / final_gap.front()}});
    m.add_output(path);
    std::cout << "log-log slope " << fit.slope << '\n';
  }
  m.write(dir);
  return 0;
}

struct DemoOptions {
  SpuriousDemoConfig config;
  std::string name = "demo.json";
};

int run_demo(const Context& ctx, const DemoOptions& o) {
  RunManifest m;
  m.command = ctx.command;
  m.started = utc_timestamp();
  require(o.config.trials >= 1, "--trials must be >= 1");
  require(o.config.samples_per_pair >= 1, "--samples-per-pair must be >= 1");
  SpuriousDemoConfig c = o.config;
  c.seed = ctx.seeds_or(c.seed).front();
  m.seeds = {c.seed};
  const SpuriousDemoReport r = spurious_correlation_demo(c);
  const auto dir = ensure_dir(ctx.out_dir);
  const auto path = dir / o.name;
  const nlohmann::json j = r.to_json();
  write_json(path, j);
  m.config = {{"stages", c.stages},   {"p_stay_good", c.p_stay_good}, {"gamma", c.gamma},
              {"samples_per_pair", c.samples_per_pair}, {"trials", c.trials}, {"seed", c.seed},
              {"xi", c.xi},         {"v_max", c.v_max}};
  m.add_output(path);
  m.write(dir);
  std::cout << "f_greedy " << r.f_greedy << " f_pess " << r.f_pess << '\n';
  return 0;
}

}  // namespace

void add_opo(CLI::App& app, Context& ctx, Action& action) {
  auto o = std::make_shared<OpoOptions>();
  CLI::App* sub = app.add_subcommand("opo", "Run optimistic-pessimistic policy optimization on a tabular MDP");
  sub->add_option("--mdp", o->mdp, "MDP JSON file (default: a seeded random MDP)");
  sub->add_option("--states", o->states, "Random MDP: states");
  sub->add_option("--actions", o->actions, "Random MDP: actions");
  sub->add_option("--mdp-seed,--mdp_seed", o->mdp_seed, "Random MDP: seed");
  sub->add_option("--denominator", o->denominator, "Probability grid of the random MDP and perfect-data samples per pair");
  sub->add_option("--data", o->data, "perfect or sampled");
  sub->add_option("--samples_per_pair,--samples-per-pair", o->samples_per_pair, "Sampled data: draws per pair");
  sub->add_option("--K", o->K, "Iterations");
  sub->add_option("--K-sweep,--K_sweep", o->k_sweep, "Iteration counts, comma separated")->delimiter(',');
  sub->add_option("--alpha", o->alpha, "lambda_k = alpha^k");
  sub->add_option("--xi", o->xi, "Failure probability of the uncertainty bound");
  sub->add_option("--zeta", o->zeta, "Override the schedule constant zeta");
  sub->callback([&ctx, &action, o] { action = [&ctx, o] { return run_opo_cmd(ctx, *o); }; });
}

void add_tabular_demo(CLI::App& app, Context& ctx, Action& action) {
  auto o = std::make_shared<DemoOptions>();
  CLI::App* sub = app.add_subcommand("tabular-demo", "Greedy vs pessimistic agents on the society chain");
  sub->add_option("--stages", o->config.stages, "Decision stages");
  sub->add_option("--p_stay_good,--p-stay-good", o->config.p_stay_good, "Good-status probability");
  sub->add_option("--gamma", o->config.gamma, "Discount");
  sub->add_option("--samples-per-pair,--samples_per_pair", o->config.samples_per_pair, "Dataset draws per pair");
  sub->add_option("--trials", o->config.trials, "Resampled datasets");
  sub->add_option("--xi", o->config.xi, "Failure probability of the uncertainty bound");
  sub->add_option("--name", o->name, "Report file name inside --out-dir");
  sub->callback([&ctx, &action, o] { action = [&ctx, o] { return run_demo(ctx, *o); }; });
}

}  // namespace score::cli
