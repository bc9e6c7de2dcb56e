#include <algorithm>
#include <iostream>
#include <memory>

#include "commands.hpp"
#include "manifest.hpp"
#include "score/chain_mdp.hpp"
#include "score/dataset.hpp"

namespace score::cli {

namespace {

// Accepts medium-replay, medium_replay and medium_replay_mix alike.
BehaviorKind parse_behavior(std::string name) {
  std::replace(name.begin(), name.end(), '-', '_');
  if (name == "medium_replay" || name == "medium_expert") name += "_mix";
  try {
    return behavior_kind_from_string(name);
  } catch (const Error&) {
    fail(ErrorKind::kInvalidInput, "--behavior: unknown behavior '" + name +
                                       "' (random, medium, expert, medium-replay, medium-expert)");
  }
}

struct GenDataOptions {
  std::string env = "point-mass";
  /// Empty means medium for the point mass and uniform for the chain.
  std::string behavior;
  long n = 100'000;
  std::string name = "dataset.bin";
  int stages = 3;
  double p_stay_good = 0.7;
  double gamma = 0.99;
  int episode_length = 0;
};

int run_gen_data(const Context& ctx, const GenDataOptions& o) {
  RunManifest m;
  m.command = ctx.command;
  m.started = utc_timestamp();
  require(o.n >= 1, "--n must be >= 1");
  const std::uint64_t seed = ctx.seeds_or(0).front();
  m.seeds = {seed};
  const auto dir = ensure_dir(ctx.out_dir);
  const auto path = dir / o.name;

  OfflineDataset data;
  if (o.env == PointMassEnv::kEnvId) {
    const BehaviorKind kind = parse_behavior(o.behavior.empty() ? "medium" : o.behavior);
    data = generate_dataset(scripted_policy(BehaviorPolicySpec::default_spec(kind)), static_cast<std::size_t>(o.n), seed);
    m.config = {{"env", o.env}, {"behavior", to_string(kind)}, {"n", o.n}, {"seed", seed},
                {"policy", BehaviorPolicySpec::default_spec(kind).to_json()}};
  } else if (o.env == "chain") {
    require(o.behavior.empty() || o.behavior == "uniform",
            "--behavior: the chain environment supports 'uniform' only");
    const SocietyChain chain = chain_mdp_build(o.stages, o.p_stay_good, o.gamma);
    const int episode = o.episode_length > 0 ? o.episode_length : o.stages + 1;
    data = generate_dataset(chain.mdp(), uniform_policy(chain.mdp().n_states(), chain.mdp().n_actions()),
                            static_cast<std::size_t>(o.n), seed, episode, "chain", "uniform");
    const auto mdp_path = dir / "chain_mdp.json";
    save_mdp(chain.mdp(), mdp_path);
    m.add_output(mdp_path);
    m.config = {{"env", o.env}, {"behavior", "uniform"}, {"n", o.n}, {"seed", seed}, {"stages", o.stages},
                {"p_stay_good", o.p_stay_good}, {"gamma", o.gamma}, {"episode_length", episode}};
  } else {
    fail(ErrorKind::kInvalidInput, "--env: unknown environment '" + o.env + "' (point-mass, chain)");
  }
  save_dataset(data, path);
  m.add_output(path);
  m.dataset_sha1 = git_blob_sha1(path);
  m.write(dir);
  std::cout << path.string() << ' ' << data.size() << " transitions sha1 " << m.dataset_sha1 << '\n';
  return 0;
}

struct CalibrateOptions {
  int search_samples = 10'000;
  int episodes = 100;
  std::uint64_t reference_seed = CalibrationOptions{}.reference_seed;
  std::string name = "env_registry.json";
};

int run_calibrate(const Context& ctx, const CalibrateOptions& o) {
  RunManifest m;
  m.command = ctx.command;
  m.started = utc_timestamp();
  CalibrationOptions c;
  c.search_samples = o.search_samples;
  c.reference_episodes = o.episodes;
  c.reference_seed = o.reference_seed;
  c.search_seed = ctx.seeds_or(c.search_seed).front();
  m.seeds = {c.search_seed};
  const EnvReference ref = calibrate_point_mass(c);
  const auto dir = ensure_dir(ctx.out_dir);
  const auto path = dir / o.name;
  EnvRegistry reg;
  reg.put(ref);
  reg.save(path);
  m.config = {{"search_samples", o.search_samples}, {"episodes", o.episodes}, {"reference_seed", o.reference_seed}};
  m.add_output(path);
  m.write(dir);
  std::cout << "random_ref " << ref.random_ref << " expert_ref " << ref.expert_ref << '\n';
  return 0;
}

}  // namespace

void add_gen_data(CLI::App& app, Context& ctx, Action& action) {
  auto o = std::make_shared<GenDataOptions>();
  CLI::App* sub = app.add_subcommand("gen-data", "Generate an offline dataset file");
  sub->add_option("--env", o->env, "point-mass or chain");
  sub->add_option("--behavior", o->behavior, "random, medium, expert, medium-replay, medium-expert");
  sub->add_option("--n", o->n, "Number of transitions");
  sub->add_option("--name", o->name, "Dataset file name inside --out-dir");
  sub->add_option("--stages", o->stages, "Chain: decision stages");
  sub->add_option("--p_stay_good,--p-stay-good", o->p_stay_good, "Chain: good-status probability");
  sub->add_option("--gamma", o->gamma, "Chain: discount");
  sub->add_option("--episode_length,--episode-length", o->episode_length, "Chain: rollout length (0 = stages + 1)");
  sub->callback([&ctx, &action, o] { action = [&ctx, o] { return run_gen_data(ctx, *o); }; });
}

void add_calibrate(CLI::App& app, Context& ctx, Action& action) {
  auto o = std::make_shared<CalibrateOptions>();
  CLI::App* sub = app.add_subcommand("calibrate", "Recompute the point-mass reference returns");
  sub->add_option("--search-samples,--search_samples", o->search_samples, "Random PD gains tried");
  sub->add_option("--episodes", o->episodes, "Episodes per reference estimate");
  sub->add_option("--reference-seed,--reference_seed", o->reference_seed, "Start-state seed of the protocol");
  sub->add_option("--name", o->name, "Registry file name inside --out-dir");
  sub->callback([&ctx, &action, o] { action = [&ctx, o] { return run_calibrate(ctx, *o); }; });
}

}  // namespace score::cli
