#include <iostream>
#include <memory>
#include <mutex>

#include "cli.hpp"
#include "commands.hpp"
#include "manifest.hpp"
#include "score/dataset.hpp"

namespace score::cli {

namespace {

struct SeedOutcome {
  std::uint64_t seed = 0;
  bool diverged = false;
  long divergence_step = 0;
  std::string message;
  double final_score = 0.0;
  double final_return = 0.0;
  std::vector<std::filesystem::path> outputs;
};

struct RunOptions {
  bool checkpoints = true;
  bool coverage = false;
};

// One isolated single-threaded training run writing under `dir`.
SeedOutcome train_one(const OfflineDataset& data, const EnvReference& ref, const ScoreConfig& config,
                      std::uint64_t seed, const std::filesystem::path& dir, const RunOptions& opt) {
  SeedOutcome out;
  out.seed = seed;
  ensure_dir(dir);
  ScoreTrainer trainer(data, ref, config, seed);
  try {
    trainer.run();
  } catch (const DivergenceError& e) {
    out.diverged = true;
    out.divergence_step = e.step();
    out.message = e.what();
  }
  const TrainingLog& log = trainer.log();
  const auto csv = dir / "log.csv";
  log.write_csv(csv);
  out.outputs.push_back(csv);
  if (!log.epochs.empty()) {
    out.final_score = log.epochs.back().normalized_score;
    out.final_return = log.epochs.back().mean_return;
  }
  if (opt.checkpoints && !out.diverged) {
    const auto paths = trainer.save(dir / "checkpoint");
    out.outputs.insert(out.outputs.end(), paths.begin(), paths.end());
  }
  if (opt.coverage && !out.diverged) {
    const auto path = dir / "coverage.json";
    write_json(path, uncertainty_coverage(trainer, data).to_json());
    out.outputs.push_back(path);
  }
  return out;
}

nlohmann::json outcome_json(const SeedOutcome& o) {
  nlohmann::json j = {{"seed", o.seed}, {"diverged", o.diverged}};
  if (o.diverged) {
    j["divergence_step"] = o.divergence_step;
    j["message"] = o.message;
  } else {
    j["final_normalized_score"] = o.final_score;
    j["final_return"] = o.final_return;
  }
  return j;
}

// Median and IQR over the seeds that finished; diverged seeds are listed apart.
nlohmann::json aggregate(const std::vector<SeedOutcome>& outcomes) {
  std::vector<double> scores;
  nlohmann::json diverged = nlohmann::json::array();
  nlohmann::json seeds = nlohmann::json::array();
  for (const auto& o : outcomes) {
    seeds.push_back(outcome_json(o));
    if (o.diverged) {
      diverged.push_back(o.seed);
    } else {
      scores.push_back(o.final_score);
    }
  }
  return {{"final_normalized_score", summarize(scores)}, {"diverged_seeds", diverged}, {"seeds", seeds}};
}

std::vector<SeedOutcome> run_seeds(const Context& ctx, const OfflineDataset& data, const EnvReference& ref,
                                   const ScoreConfig& config, const std::vector<std::uint64_t>& seeds,
                                   const std::filesystem::path& dir, const RunOptions& opt) {
  std::vector<SeedOutcome> outcomes(seeds.size());
  std::mutex print;
  run_pool(seeds.size(), ctx.jobs, [&](std::size_t i) {
    outcomes[i] = train_one(data, ref, config, seeds[i], dir / ("seed_" + std::to_string(seeds[i])), opt);
    const std::lock_guard<std::mutex> lock(print);
    std::cout << config.variant << " seed " << seeds[i] << ": "
              << (outcomes[i].diverged ? "diverged at step " + std::to_string(outcomes[i].divergence_step)
                                       : "normalized " + std::to_string(outcomes[i].final_score))
              << '\n';
  });
  return outcomes;
}

bool any_diverged(const std::vector<SeedOutcome>& outcomes) {
  for (const auto& o : outcomes) {
    if (o.diverged) return true;
  }
  return false;
}

struct TrainOptions {
  std::filesystem::path dataset;
  RunOptions run;
  ScoreConfigFlags flags;
};

int run_train(const Context& ctx, const TrainOptions& o) {
  RunManifest m;
  m.command = ctx.command;
  m.started = utc_timestamp();
  const ScoreConfig config = o.flags.resolve();
  config.validate();
  const OfflineDataset data = load_dataset(o.dataset);
  const EnvReference ref = ctx.env_reference(data.env_id);
  m.seeds = ctx.seeds_or(0);
  m.dataset_sha1 = git_blob_sha1(o.dataset);
  m.config = {{"dataset", o.dataset.string()}, {"score", config.to_json()},
              {"checkpoints", o.run.checkpoints}, {"coverage", o.run.coverage}};
  const auto dir = ensure_dir(ctx.out_dir);

  const auto outcomes = run_seeds(ctx, data, ref, config, m.seeds, dir, o.run);
  for (const auto& out : outcomes) m.add_outputs(out.outputs);
  const auto config_path = dir / "config.json";
  write_json(config_path, config.to_json());
  m.add_output(config_path);
  const auto summary_path = dir / "summary.json";
  nlohmann::json summary = aggregate(outcomes);
  summary["variant"] = config.variant;
  write_json(summary_path, summary);
  m.add_output(summary_path);
  m.write(dir);
  std::cout << "summary " << summary_path.string() << '\n';
  return any_diverged(outcomes) ? kExitDivergence : kExitOk;
}

struct EvalOptions {
  std::filesystem::path checkpoint;
  int episodes = 10;
  std::string name = "eval.json";
};

int run_eval(const Context& ctx, const EvalOptions& o) {
  RunManifest m;
  m.command = ctx.command;
  m.started = utc_timestamp();
  require(o.episodes >= 1, "--episodes must be >= 1");
  require(!o.checkpoint.empty(), "--checkpoint is required");
  const Mlp actor = load_checkpoint(o.checkpoint / "actor.json");
  const nlohmann::json norm = read_json(o.checkpoint / "obs_normalizer.json");
  const auto mean_v = norm.at("mean").get<std::vector<double>>();
  const auto std_v = norm.at("std").get<std::vector<double>>();
  const Eigen::VectorXd mean = Eigen::Map<const Eigen::VectorXd>(mean_v.data(), static_cast<Eigen::Index>(mean_v.size()));
  const Eigen::VectorXd stdev = Eigen::Map<const Eigen::VectorXd>(std_v.data(), static_cast<Eigen::Index>(std_v.size()));
  const EnvReference ref = ctx.env_reference(PointMassEnv::kEnvId);
  const std::uint64_t seed = ctx.seeds_or(0).front();
  m.seeds = {seed};
  m.config = {{"checkpoint", o.checkpoint.string()}, {"episodes", o.episodes}, {"env", ref.env_id}};

  const EvalResult r = evaluate(actor, mean, stdev, ref, o.episodes, seed);
  const auto dir = ensure_dir(ctx.out_dir);
  const auto path = dir / o.name;
  write_json(path, {{"mean_return", r.mean_return},
                    {"normalized_score", r.normalized_score},
                    {"returns", r.returns},
                    {"episodes", o.episodes},
                    {"seed", seed}});
  m.add_output(path);
  m.write(dir);
  std::cout << "return " << r.mean_return << " normalized " << r.normalized_score << '\n';
  return 0;
}

struct AblateOptions {
  std::filesystem::path dataset;
  std::vector<std::string> variants;
  RunOptions run{false, false};
  ScoreConfigFlags flags;
};

int run_ablate(const Context& ctx, const AblateOptions& o) {
  RunManifest m;
  m.command = ctx.command;
  m.started = utc_timestamp();
  const ScoreConfig base = o.flags.resolve();
  std::vector<NamedConfig> variants;
  if (o.variants.empty()) {
    variants = ablation_variants(base);
  } else {
    for (const auto& name : o.variants) variants.push_back({name, apply_variant(base, name)});
  }
  for (const auto& v : variants) v.config.validate();
  const OfflineDataset data = load_dataset(o.dataset);
  const EnvReference ref = ctx.env_reference(data.env_id);
  m.seeds = ctx.seeds_or(0);
  m.dataset_sha1 = git_blob_sha1(o.dataset);
  const auto dir = ensure_dir(ctx.out_dir);

  // Flatten (variant, seed) so every run shares one worker pool.
  struct Job {
    std::size_t variant;
    std::uint64_t seed;
  };
  std::vector<Job> jobs;
  for (std::size_t v = 0; v < variants.size(); ++v) {
    for (std::uint64_t s : m.seeds) jobs.push_back({v, s});
  }
  std::vector<SeedOutcome> outcomes(jobs.size());
  std::mutex print;
  run_pool(jobs.size(), ctx.jobs, [&](std::size_t i) {
    const auto& cfg = variants[jobs[i].variant];
    outcomes[i] = train_one(data, ref, cfg.config, jobs[i].seed,
                            dir / cfg.name / ("seed_" + std::to_string(jobs[i].seed)), o.run);
    const std::lock_guard<std::mutex> lock(print);
    std::cout << cfg.name << " seed " << jobs[i].seed << ": "
              << (outcomes[i].diverged ? "diverged" : "normalized " + std::to_string(outcomes[i].final_score))
              << '\n';
  });

  nlohmann::json summary = nlohmann::json::object();
  nlohmann::json configs = nlohmann::json::object();
  for (std::size_t v = 0; v < variants.size(); ++v) {
    std::vector<SeedOutcome> mine;
    for (std::size_t i = 0; i < jobs.size(); ++i) {
      if (jobs[i].variant == v) mine.push_back(outcomes[i]);
    }
    for (const auto& out : mine) m.add_outputs(out.outputs);
    summary[variants[v].name] = aggregate(mine);
    configs[variants[v].name] = variants[v].config.to_json();
  }
  m.config = {{"dataset", o.dataset.string()}, {"variants", configs}};
  const auto path = dir / "ablation_summary.json";
  write_json(path, summary);
  m.add_output(path);
  m.write(dir);
  std::cout << "summary " << path.string() << '\n';
  // Divergence is an expected ablation outcome; the summary lists it per variant.
  return kExitOk;
}

}  // namespace

void add_train(CLI::App& app, Context& ctx, Action& action) {
  auto o = std::make_shared<TrainOptions>();
  CLI::App* sub = app.add_subcommand("train", "Train SCORE on an offline dataset, one run per seed");
  sub->add_option("--dataset", o->dataset, "Dataset file written by gen-data")->required();
  sub->add_flag("--checkpoints,!--no-checkpoints", o->run.checkpoints, "Save final networks per seed");
  sub->add_flag("--coverage", o->run.coverage, "Write the uncertainty-coverage report per seed");
  o->flags.attach(*sub);
  sub->callback([&ctx, &action, o] { action = [&ctx, o] { return run_train(ctx, *o); }; });
}

void add_eval(CLI::App& app, Context& ctx, Action& action) {
  auto o = std::make_shared<EvalOptions>();
  CLI::App* sub = app.add_subcommand("eval", "Evaluate a saved actor on the point mass");
  sub->add_option("--checkpoint", o->checkpoint, "Checkpoint directory written by train")->required();
  sub->add_option("--episodes", o->episodes, "Evaluation episodes");
  sub->add_option("--name", o->name, "Report file name inside --out-dir");
  sub->callback([&ctx, &action, o] { action = [&ctx, o] { return run_eval(ctx, *o); }; });
}

void add_ablate(CLI::App& app, Context& ctx, Action& action) {
  auto o = std::make_shared<AblateOptions>();
  CLI::App* sub = app.add_subcommand("ablate", "Train every ablation variant on one dataset");
  sub->add_option("--dataset", o->dataset, "Dataset file written by gen-data")->required();
  sub->add_option("--variants", o->variants, "Variant names, comma separated (default: all)")->delimiter(',');
  sub->add_flag("--checkpoints", o->run.checkpoints, "Save final networks per run");
  sub->add_flag("--coverage", o->run.coverage, "Write the uncertainty-coverage report per run");
  o->flags.attach(*sub);
  sub->callback([&ctx, &action, o] { action = [&ctx, o] { return run_ablate(ctx, *o); }; });
}

}  // namespace score::cli
