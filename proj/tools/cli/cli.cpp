#include "cli.hpp"

#include <atomic>
#include <exception>
#include <iostream>
#include <mutex>
#include <set>
#include <thread>

#include "commands.hpp"
#include "score/stats.hpp"

namespace score::cli {

namespace {

/// JSON config source for CLI11. Nested objects named after a subcommand
/// scope their keys to it; other top-level keys go to the active subcommand
/// unless they name a global flag. Command-line values win over the file.
class JsonConfig : public CLI::Config {
 public:
  JsonConfig(std::string section, std::set<std::string> globals, std::set<std::string> sections)
      : section_(std::move(section)), globals_(std::move(globals)), sections_(std::move(sections)) {}

  std::string to_config(const CLI::App*, bool, bool, std::string) const override { return "{}"; }

  std::vector<CLI::ConfigItem> from_config(std::istream& in) const override {
    nlohmann::json doc;
    try {
      doc = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
      throw CLI::ConversionError(std::string("config file: ") + e.what());
    }
    if (!doc.is_object()) throw CLI::ConversionError("config file: expected a JSON object");
    std::vector<CLI::ConfigItem> items;
    for (const auto& [key, value] : doc.items()) {
      if (value.is_object() && sections_.contains(key)) {
        for (const auto& [k, v] : value.items()) items.push_back(item({key}, k, v));
      } else if (globals_.contains(key) || section_.empty()) {
        items.push_back(item({}, key, value));
      } else {
        items.push_back(item({section_}, key, value));
      }
    }
    return items;
  }

 private:
  static std::string scalar(const nlohmann::json& v) {
    if (v.is_string()) return v.get<std::string>();
    if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
    if (v.is_number()) return v.dump();
    throw CLI::ConversionError("config file: unsupported value " + v.dump());
  }

  static CLI::ConfigItem item(std::vector<std::string> parents, const std::string& name, const nlohmann::json& v) {
    CLI::ConfigItem it;
    it.parents = std::move(parents);
    it.name = name;
    if (v.is_array()) {
      for (const auto& e : v) it.inputs.push_back(scalar(e));
    } else {
      it.inputs.push_back(scalar(v));
    }
    return it;
  }

  std::string section_;
  std::set<std::string> globals_;
  std::set<std::string> sections_;
};

// The subcommand must be known before parsing so flat config keys can be
// routed to it.
std::string find_subcommand(int argc, const char* const* argv, const std::set<std::string>& names) {
  for (int i = 1; i < argc; ++i) {
    if (names.contains(argv[i])) return argv[i];
  }
  return {};
}

}  // namespace

int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kInvalidInput:
    case ErrorKind::kMissingReference:
      return kExitInvalidInput;
    case ErrorKind::kTrainingDivergence:
    case ErrorKind::kConvergenceFailure:
    case ErrorKind::kDivergentKl:
    case ErrorKind::kSingularInformation:
      return kExitDivergence;
    case ErrorKind::kIo:
      return kExitIo;
  }
  return 1;
}

EnvReference Context::env_reference(const std::string& env_id) const {
  return EnvRegistry::load(registry.empty() ? default_registry_path() : registry).at(env_id);
}

void ScoreConfigFlags::attach(CLI::App& sub) {
  const nlohmann::json defaults = ScoreConfig{}.to_json();
  for (const auto& [key, value] : defaults.items()) {
    std::string names = "--" + key;
    if (key == "total_steps") names += ",--steps";
    std::string help = "ScoreConfig." + key + " (default " + (value.is_string() ? value.get<std::string>() : value.dump()) + ")";
    if (key == "variant") help = "Ablation variant applied before the other flags (default baseline)";
    options_[key] = sub.add_option(names, values_[key], help);
  }
}

ScoreConfig ScoreConfigFlags::resolve() const {
  const nlohmann::json defaults = ScoreConfig{}.to_json();
  ScoreConfig base;
  if (options_.at("variant")->count() > 0) base = apply_variant(base, values_.at("variant"));
  nlohmann::json overrides = nlohmann::json::object();
  for (const auto& [key, opt] : options_) {
    if (key == "variant" || opt->count() == 0) continue;
    const std::string& text = values_.at(key);
    const nlohmann::json& d = defaults.at(key);
    try {
      std::size_t used = 0;
      if (d.is_boolean()) {
        require(text == "true" || text == "false" || text == "1" || text == "0",
                "--" + key + " expects true or false, got '" + text + "'");
        overrides[key] = text == "true" || text == "1";
        continue;
      } else if (d.is_number_integer()) {
        overrides[key] = std::stoll(text, &used);
      } else if (d.is_number_float()) {
        overrides[key] = std::stod(text, &used);
      } else {
        overrides[key] = text;
        continue;
      }
      require(used == text.size(), "--" + key + ": trailing characters in '" + text + "'");
    } catch (const std::logic_error&) {
      fail(ErrorKind::kInvalidInput, "--" + key + ": cannot parse '" + text + "'");
    }
  }
  return ScoreConfig::from_json(overrides, base);
}

void run_pool(std::size_t n, int jobs, const std::function<void(std::size_t)>& task) {
  const std::size_t workers = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(1, jobs)));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) task(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr first;
  std::mutex guard;
  std::vector<std::thread> threads;
  for (std::size_t w = 0; w < workers; ++w) {
    threads.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          task(i);
        } catch (...) {
          const std::lock_guard<std::mutex> lock(guard);
          if (!first) first = std::current_exception();
        }
      }
    });
  }
  for (auto& t : threads) t.join();
  if (first) std::rethrow_exception(first);
}

std::filesystem::path ensure_dir(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) fail(ErrorKind::kIo, "cannot create directory '" + dir.string() + "': " + ec.message());
  return dir;
}

nlohmann::json summarize(const std::vector<double>& xs) {
  if (xs.empty()) return {{"n", 0}, {"median", nullptr}, {"q25", nullptr}, {"q75", nullptr}, {"iqr", nullptr}};
  return {{"n", xs.size()},
          {"values", xs},
          {"median", median(xs)},
          {"q25", quantile(xs, 0.25)},
          {"q75", quantile(xs, 0.75)},
          {"iqr", iqr(xs)}};
}

int run(int argc, const char* const* argv) {
  CLI::App app{"Offline RL with ensemble pessimism and annealed behavior cloning"};
  app.require_subcommand(1);
  app.fallthrough();

  Context ctx;
  app.add_option("--out-dir,--out_dir", ctx.out_dir, "Directory for every output file");
  app.add_option("--seed,--seeds", ctx.seeds, "Seed list, comma separated")->delimiter(',');
  app.add_option("--registry", ctx.registry, "Environment reference registry (JSON)");
  app.add_option("--jobs", ctx.jobs, "Worker threads for independent runs")->check(CLI::PositiveNumber);

  Action action;
  add_gen_data(app, ctx, action);
  add_calibrate(app, ctx, action);
  add_train(app, ctx, action);
  add_eval(app, ctx, action);
  add_ablate(app, ctx, action);
  add_opo(app, ctx, action);
  add_tabular_demo(app, ctx, action);

  std::set<std::string> sections;
  for (const CLI::App* sub : app.get_subcommands({})) sections.insert(sub->get_name());
  const std::set<std::string> globals = {"out-dir", "out_dir", "seed", "seeds", "registry", "jobs"};
  app.config_formatter(std::make_shared<JsonConfig>(find_subcommand(argc, argv, sections), globals, sections));
  app.set_config("--config", "", "JSON file of flag values; command-line flags take precedence");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitInvalidInput;
  }
  for (const CLI::App* sub : app.get_subcommands()) ctx.command = sub->get_name();

  try {
    return action();
  } catch (const Error& e) {
    std::cerr << "error (" << to_string(e.kind()) << "): " << e.what() << '\n';
    return exit_code_for(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}

}  // namespace score::cli
