#include "manifest.hpp"

#include <array>
#include <chrono>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <iterator>
#include <sstream>

#include <openssl/evp.h>

#include "score/error.hpp"

namespace score::cli {

std::string git_blob_sha1(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::kIo, "cannot read '" + path.string() + "' for hashing");
  const std::string content{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  const std::string header = "blob " + std::to_string(content.size()) + '\0';

  std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
  unsigned int len = 0;
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  const bool ok = ctx != nullptr && EVP_DigestInit_ex(ctx, EVP_sha1(), nullptr) == 1 &&
                  EVP_DigestUpdate(ctx, header.data(), header.size()) == 1 &&
                  EVP_DigestUpdate(ctx, content.data(), content.size()) == 1 &&
                  EVP_DigestFinal_ex(ctx, digest.data(), &len) == 1;
  EVP_MD_CTX_free(ctx);
  if (!ok) fail(ErrorKind::kIo, "SHA-1 failed for '" + path.string() + "'");

  std::ostringstream hex;
  for (unsigned int i = 0; i < len; ++i) hex << std::hex << std::setw(2) << std::setfill('0') << int{digest[i]};
  return hex.str();
}

std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::ostringstream out;
  out << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return out.str();
}

void write_json(const std::filesystem::path& path, const nlohmann::json& doc) {
  std::ofstream out(path);
  if (!out) fail(ErrorKind::kIo, "cannot write '" + path.string() + "'");
  out << doc.dump(2) << '\n';
  if (!out) fail(ErrorKind::kIo, "short write to '" + path.string() + "'");
}

nlohmann::json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::kIo, "cannot read '" + path.string() + "'");
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::kInvalidInput, "'" + path.string() + "': " + e.what());
  }
}

std::filesystem::path RunManifest::write(const std::filesystem::path& dir) {
  finished = utc_timestamp();
  nlohmann::json files = nlohmann::json::array();
  for (const auto& p : outputs) {
    if (!std::filesystem::exists(p)) fail(ErrorKind::kIo, "manifest output '" + p.string() + "' is missing");
    files.push_back({{"path", std::filesystem::relative(p, dir).generic_string()}, {"sha1", git_blob_sha1(p)}});
  }
  const nlohmann::json doc = {{"command", command},   {"config", config},     {"seeds", seeds},
                              {"dataset_sha1", dataset_sha1}, {"outputs", files}, {"started", started},
                              {"finished", finished}};
  const auto path = dir / "manifest.json";
  write_json(path, doc);
  return path;
}

}  // namespace score::cli
