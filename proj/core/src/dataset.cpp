#include "score/dataset.hpp"

#include <cstring>
#include <fstream>

#include <nlohmann/json.hpp>

#include "score/error.hpp"
#include "score/nn.hpp"

namespace score {

namespace {

constexpr char kMagic[8] = {'S', 'C', 'O', 'R', 'D', 'A', 'T', 'A'};
constexpr int kFormatVersion = 1;

bool bitwise_equal(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  return a.rows() == b.rows() && a.cols() == b.cols() &&
         std::memcmp(a.data(), b.data(), sizeof(double) * static_cast<std::size_t>(a.size())) == 0;
}

void write_u32_le(std::ostream& out, std::uint32_t v) {
  const unsigned char bytes[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                                  static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  out.write(reinterpret_cast<const char*>(bytes), 4);
}

std::uint32_t read_u32_le(std::istream& in) {
  unsigned char bytes[4] = {0, 0, 0, 0};
  in.read(reinterpret_cast<char*>(bytes), 4);
  return static_cast<std::uint32_t>(bytes[0]) | (static_cast<std::uint32_t>(bytes[1]) << 8) |
         (static_cast<std::uint32_t>(bytes[2]) << 16) | (static_cast<std::uint32_t>(bytes[3]) << 24);
}

}  // namespace

OfflineDataset::OfflineDataset(int obs_dim_, int act_dim_, Eigen::Index n)
    : obs_dim(obs_dim_), act_dim(act_dim_) {
  require(obs_dim > 0 && act_dim > 0, "OfflineDataset: dimensions must be positive");
  resize(n);
}

void OfflineDataset::resize(Eigen::Index n) {
  obs.conservativeResize(obs_dim, n);
  act.conservativeResize(act_dim, n);
  next_obs.conservativeResize(obs_dim, n);
  reward.conservativeResize(n);
  done.conservativeResize(n);
}

bool OfflineDataset::same_content(const OfflineDataset& o) const {
  return obs_dim == o.obs_dim && act_dim == o.act_dim && discrete == o.discrete &&
         env_id == o.env_id && behavior_tag == o.behavior_tag && bitwise_equal(obs, o.obs) &&
         bitwise_equal(act, o.act) && bitwise_equal(next_obs, o.next_obs) &&
         bitwise_equal(reward, o.reward) && bitwise_equal(done, o.done);
}

OfflineDataset from_tabular(const TabularDataset& data, const std::string& env_id) {
  OfflineDataset out(1, 1, static_cast<Eigen::Index>(data.size()));
  out.discrete = true;
  out.env_id = env_id;
  out.behavior_tag = data.behavior_tag();
  Eigen::Index i = 0;
  for (const auto& t : data.transitions()) {
    out.obs(0, i) = t.state;
    out.act(0, i) = t.action;
    out.next_obs(0, i) = t.next_state;
    out.reward(i) = t.reward;
    out.done(i) = t.done ? 1.0 : 0.0;
    ++i;
  }
  return out;
}

TabularDataset to_tabular(const OfflineDataset& data, int n_states, int n_actions) {
  require(data.discrete && data.obs_dim == 1 && data.act_dim == 1,
          "to_tabular: dataset is not a discrete single-index dataset");
  std::vector<TabularTransition> transitions;
  transitions.reserve(static_cast<std::size_t>(data.size()));
  for (Eigen::Index i = 0; i < data.size(); ++i) {
    transitions.push_back({static_cast<int>(data.obs(0, i)), static_cast<int>(data.act(0, i)),
                           static_cast<int>(data.next_obs(0, i)), data.reward(i), data.done(i) != 0.0});
  }
  return TabularDataset(n_states, n_actions, std::move(transitions), data.behavior_tag);
}

void save_dataset(const OfflineDataset& data, const std::filesystem::path& path) {
  const nlohmann::json header = {{"version", kFormatVersion},  {"obs_dim", data.obs_dim},
                                 {"act_dim", data.act_dim},    {"n", data.size()},
                                 {"behavior_tag", data.behavior_tag}, {"env_id", data.env_id},
                                 {"discrete", data.discrete}};
  const std::string text = header.dump();
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::kIo, "cannot write dataset " + path.string());
  out.write(kMagic, sizeof kMagic);
  write_u32_le(out, static_cast<std::uint32_t>(text.size()));
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  const int width = 2 * data.obs_dim + data.act_dim + 2;
  std::vector<double> record(static_cast<std::size_t>(width));
  for (Eigen::Index i = 0; i < data.size(); ++i) {
    double* r = record.data();
    for (int d = 0; d < data.obs_dim; ++d) *r++ = data.obs(d, i);
    for (int d = 0; d < data.act_dim; ++d) *r++ = data.act(d, i);
    for (int d = 0; d < data.obs_dim; ++d) *r++ = data.next_obs(d, i);
    *r++ = data.reward(i);
    *r++ = data.done(i);
    write_f64_le(out, record.data(), record.size());
  }
  out.flush();
  if (!out) fail(ErrorKind::kIo, "short write for dataset " + path.string());
}

OfflineDataset load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::kIo, "cannot read dataset " + path.string());
  char magic[8] = {};
  in.read(magic, sizeof magic);
  if (!in || std::memcmp(magic, kMagic, sizeof kMagic) != 0) {
    fail(ErrorKind::kInvalidInput, "dataset " + path.string() + ": bad magic");
  }
  const std::uint32_t header_len = read_u32_le(in);
  std::string text(header_len, '\0');
  in.read(text.data(), header_len);
  if (!in) fail(ErrorKind::kIo, "dataset " + path.string() + ": truncated header");
  OfflineDataset data;
  Eigen::Index n = 0;
  try {
    const nlohmann::json header = nlohmann::json::parse(text);
    require(header.at("version").get<int>() == kFormatVersion,
            "dataset " + path.string() + ": unsupported version");
    data.obs_dim = header.at("obs_dim").get<int>();
    data.act_dim = header.at("act_dim").get<int>();
    n = header.at("n").get<Eigen::Index>();
    data.behavior_tag = header.at("behavior_tag").get<std::string>();
    data.env_id = header.at("env_id").get<std::string>();
    data.discrete = header.at("discrete").get<bool>();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::kInvalidInput, "dataset " + path.string() + ": " + e.what());
  }
  require(data.obs_dim > 0 && data.act_dim > 0 && n >= 0,
          "dataset " + path.string() + ": invalid header dimensions");
  data.resize(n);
  const int width = 2 * data.obs_dim + data.act_dim + 2;
  std::vector<double> record(static_cast<std::size_t>(width));
  for (Eigen::Index i = 0; i < n; ++i) {
    read_f64_le(in, record.data(), record.size());
    if (!in) fail(ErrorKind::kIo, "dataset " + path.string() + ": truncated at record " + std::to_string(i));
    const double* r = record.data();
    for (int d = 0; d < data.obs_dim; ++d) data.obs(d, i) = *r++;
    for (int d = 0; d < data.act_dim; ++d) data.act(d, i) = *r++;
    for (int d = 0; d < data.obs_dim; ++d) data.next_obs(d, i) = *r++;
    data.reward(i) = *r++;
    data.done(i) = *r++;
  }
  return data;
}

OfflineDataset generate_dataset(const ScriptedPolicy& policy, std::size_t n_transitions,
                                std::uint64_t seed) {
  require(n_transitions >= 1, "generate_dataset: n_transitions must be >= 1");
  const auto n = static_cast<Eigen::Index>(n_transitions);
  OfflineDataset data(PointMassEnv::kObsDim, PointMassEnv::kActDim, n);
  data.env_id = PointMassEnv::kEnvId;
  data.behavior_tag = to_string(policy.spec().kind);
  data.done.setZero();
  ScriptedPolicy local = policy;
  Eigen::Index i = 0;
  for (std::uint64_t episode = 0; i < n; ++episode) {
    Rng rng = make_rng(seed, episode);
    Eigen::Vector4d obs = PointMassEnv::sample_start(rng);
    local.begin_episode(rng);
    double ret = 0.0;
    int t = 0;
    for (; t < PointMassEnv::kHorizon && i < n; ++t, ++i) {
      const Eigen::Vector2d a = local.act(obs, rng);
      const auto step = PointMassEnv::transition(obs, a);
      data.obs.col(i) = obs;
      data.act.col(i) = a;
      data.next_obs.col(i) = step.obs;
      data.reward(i) = step.reward;
      ret += step.reward;
      obs = step.obs;
    }
    if (t == PointMassEnv::kHorizon) data.episode_returns.push_back(ret);
  }
  return data;
}

OfflineDataset generate_dataset(const TabularMdp& mdp, const PolicyTable& behavior,
                                std::size_t n_transitions, std::uint64_t seed,
                                int episode_length, const std::string& env_id,
                                const std::string& behavior_tag) {
  require(n_transitions >= 1, "generate_dataset: n_transitions must be >= 1");
  Rng rng = make_rng(seed);
  return from_tabular(rollout_dataset(mdp, behavior, n_transitions, episode_length, rng, behavior_tag),
                      env_id);
}

}  // namespace score
