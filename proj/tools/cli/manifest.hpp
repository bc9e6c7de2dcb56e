#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace score::cli {

/// sha1("blob <size>\0" + content), the hash `git hash-object` prints.
std::string git_blob_sha1(const std::filesystem::path& path);

/// ISO-8601 UTC wall-clock time.
std::string utc_timestamp();

struct OutputFile {
  std::filesystem::path path;
  std::string sha1;
};

/// Record of one command invocation. Every output path must exist when the
/// manifest is written; write() re-hashes each one.
struct RunManifest {
  std::string command;
  nlohmann::json config = nlohmann::json::object();
  std::vector<std::uint64_t> seeds;
  std::string dataset_sha1;
  std::vector<std::filesystem::path> outputs;
  std::string started;
  std::string finished;

  void add_output(const std::filesystem::path& path) { outputs.push_back(path); }
  void add_outputs(const std::vector<std::filesystem::path>& paths) {
    outputs.insert(outputs.end(), paths.begin(), paths.end());
  }

  /// Stamps `finished`, hashes outputs and writes `<dir>/manifest.json`.
  std::filesystem::path write(const std::filesystem::path& dir);
};

/// Pretty JSON followed by a newline; io error when the file cannot be written.
void write_json(const std::filesystem::path& path, const nlohmann::json& doc);
nlohmann::json read_json(const std::filesystem::path& path);

}  // namespace score::cli
