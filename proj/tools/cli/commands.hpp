#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "score/agent.hpp"
#include "score/error.hpp"
#include "score/point_mass.hpp"

namespace score::cli {

/// Flags shared by every command.
struct Context {
  std::filesystem::path out_dir = ".";
  std::vector<std::uint64_t> seeds;
  std::filesystem::path registry;
  int jobs = 1;
  std::string command;

  std::vector<std::uint64_t> seeds_or(std::uint64_t fallback) const {
    return seeds.empty() ? std::vector<std::uint64_t>{fallback} : seeds;
  }
  EnvReference env_reference(const std::string& env_id) const;
};

using Action = std::function<int()>;

void add_gen_data(CLI::App& app, Context& ctx, Action& action);
void add_calibrate(CLI::App& app, Context& ctx, Action& action);
void add_train(CLI::App& app, Context& ctx, Action& action);
void add_eval(CLI::App& app, Context& ctx, Action& action);
void add_ablate(CLI::App& app, Context& ctx, Action& action);
void add_opo(CLI::App& app, Context& ctx, Action& action);
void add_tabular_demo(CLI::App& app, Context& ctx, Action& action);

/// One `--<field>` flag per ScoreConfig field; `--steps` aliases total_steps.
class ScoreConfigFlags {
 public:
  void attach(CLI::App& sub);
  /// Defaults, then --variant, then every flag that was set.
  ScoreConfig resolve() const;

 private:
  std::map<std::string, std::string> values_;
  std::map<std::string, CLI::Option*> options_;
};

/// Runs task(i) for i in [0, n) on `jobs` threads; the first exception is rethrown.
void run_pool(std::size_t n, int jobs, const std::function<void(std::size_t)>& task);

std::filesystem::path ensure_dir(const std::filesystem::path& dir);

/// Median and quartiles of `xs`; null fields when empty.
nlohmann::json summarize(const std::vector<double>& xs);

}  // namespace score::cli
