#include "score/nn.hpp"

#include <bit>
#include <cmath>
#include <fstream>

#include <nlohmann/json.hpp>

#include "score/error.hpp"

namespace score {

namespace {

std::uint64_t byteswap64(std::uint64_t x) {
  x = ((x & 0x00000000FFFFFFFFULL) << 32) | ((x & 0xFFFFFFFF00000000ULL) >> 32);
  x = ((x & 0x0000FFFF0000FFFFULL) << 16) | ((x & 0xFFFF0000FFFF0000ULL) >> 16);
  return ((x & 0x00FF00FF00FF00FFULL) << 8) | ((x & 0xFF00FF00FF00FF00ULL) >> 8);
}

}  // namespace

const char* to_string(Activation a) {
  switch (a) {
    case Activation::kIdentity: return "identity";
    case Activation::kTanh: return "tanh";
  }
  return "unknown";
}

Activation activation_from_string(const std::string& name) {
  if (name == "identity") return Activation::kIdentity;
  if (name == "tanh") return Activation::kTanh;
  fail(ErrorKind::kInvalidInput, "unknown activation '" + name + "'");
}

Mlp::Mlp(std::vector<int> layer_dims, Activation output)
    : dims_(std::move(layer_dims)), output_(output) {
  require(dims_.size() >= 2, "Mlp: need at least input and output widths");
  Eigen::Index offset = 0;
  for (std::size_t l = 0; l + 1 < dims_.size(); ++l) {
    require(dims_[l] > 0 && dims_[l + 1] > 0, "Mlp: layer widths must be positive");
    w_offset_.push_back(offset);
    offset += static_cast<Eigen::Index>(dims_[l]) * dims_[l + 1];
    b_offset_.push_back(offset);
    offset += dims_[l + 1];
  }
  params_ = Eigen::VectorXd::Zero(offset);
}

Mlp Mlp::initialized(std::vector<int> layer_dims, Activation output, Rng& rng) {
  Mlp net(std::move(layer_dims), output);
  for (int l = 0; l < net.n_layers(); ++l) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(net.dims_[l]));
    std::uniform_real_distribution<double> dist(-bound, bound);
    auto w = net.weight(l);
    for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = dist(rng);
    auto b = net.bias(l);
    for (Eigen::Index i = 0; i < b.size(); ++i) b(i) = dist(rng);
  }
  return net;
}

Eigen::Map<const Mlp::RowMajor> Mlp::weight(int layer) const {
  return {params_.data() + w_offset_[layer], dims_[layer + 1], dims_[layer]};
}
Eigen::Map<Mlp::RowMajor> Mlp::weight(int layer) {
  return {params_.data() + w_offset_[layer], dims_[layer + 1], dims_[layer]};
}
Eigen::Map<const Eigen::VectorXd> Mlp::bias(int layer) const {
  return {params_.data() + b_offset_[layer], dims_[layer + 1]};
}
Eigen::Map<Eigen::VectorXd> Mlp::bias(int layer) {
  return {params_.data() + b_offset_[layer], dims_[layer + 1]};
}

Eigen::MatrixXd Mlp::forward(const Eigen::MatrixXd& input) const {
  MlpCache cache;
  return forward(input, cache);
}

const Eigen::MatrixXd& Mlp::forward(const Eigen::MatrixXd& input, MlpCache& cache) const {
  require(input.rows() == input_dim(), "Mlp::forward: input width " + std::to_string(input.rows()) +
                                           " does not match " + std::to_string(input_dim()));
  cache.acts.resize(dims_.size());
  cache.acts[0] = input;
  const int L = n_layers();
  for (int l = 0; l < L; ++l) {
    Eigen::MatrixXd& z = cache.acts[l + 1];
    z.noalias() = weight(l) * cache.acts[l];
    z.colwise() += bias(l);
    if (l + 1 < L) {
      z = z.cwiseMax(0.0);
    } else if (output_ == Activation::kTanh) {
      // Saturated tanh rounds to +-1; keep outputs strictly inside the bounds.
      constexpr double kBound = 1.0 - 0x1p-53;
      z = z.array().tanh().cwiseMin(kBound).cwiseMax(-kBound).matrix();
    }
  }
  return cache.acts.back();
}

void Mlp::backward(const MlpCache& cache, const Eigen::MatrixXd& grad_output, MlpGradients& grads,
                   bool need_input_grad) const {
  const int L = n_layers();
  require(cache.acts.size() == dims_.size(), "Mlp::backward: cache does not belong to this network");
  const Eigen::MatrixXd& out = cache.acts.back();
  require(grad_output.rows() == out.rows() && grad_output.cols() == out.cols(),
          "Mlp::backward: output gradient shape mismatch");
  if (grads.params.size() != params_.size()) grads.params.resize(params_.size());

  Eigen::MatrixXd delta = grad_output;
  if (output_ == Activation::kTanh) delta.array() *= 1.0 - out.array().square();
  for (int l = L - 1; l >= 0; --l) {
    const Eigen::MatrixXd& in = cache.acts[l];
    Eigen::Map<RowMajor> gw(grads.params.data() + w_offset_[l], dims_[l + 1], dims_[l]);
    gw.noalias() = delta * in.transpose();
    Eigen::Map<Eigen::VectorXd>(grads.params.data() + b_offset_[l], dims_[l + 1]) =
        delta.rowwise().sum();
    if (l == 0 && !need_input_grad) break;
    Eigen::MatrixXd prev;
    prev.noalias() = weight(l).transpose() * delta;
    if (l == 0) {
      grads.input = std::move(prev);
    } else {
      // ReLU derivative: post-activation > 0 iff pre-activation > 0.
      delta = (in.array() > 0.0).select(prev, 0.0);
    }
  }
}

MlpGradients Mlp::backward(const MlpCache& cache, const Eigen::MatrixXd& grad_output) const {
  MlpGradients grads;
  backward(cache, grad_output, grads, true);
  return grads;
}

AdamState::AdamState(Eigen::Index n_params, double lr)
    : m(Eigen::VectorXd::Zero(n_params)), v(Eigen::VectorXd::Zero(n_params)), learning_rate(lr) {}

void adam_step(AdamState& state, Eigen::VectorXd& params, const Eigen::VectorXd& grads) {
  require(params.size() == grads.size() && state.m.size() == params.size(),
          "adam_step: parameter, gradient and moment sizes differ");
  if (!grads.allFinite()) {
    throw DivergenceError("adam_step: non-finite gradient at optimizer step " +
                              std::to_string(state.step + 1),
                          state.step + 1);
  }
  ++state.step;
  state.m = state.beta1 * state.m + (1.0 - state.beta1) * grads;
  state.v = state.beta2 * state.v + (1.0 - state.beta2) * grads.cwiseProduct(grads);
  const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  params.array() -= state.learning_rate * (state.m.array() / c1) /
                    ((state.v.array() / c2).sqrt() + state.epsilon);
}

const char* to_string(SoftUpdateConvention c) {
  switch (c) {
    case SoftUpdateConvention::kAsPrinted: return "as-printed";
    case SoftUpdateConvention::kOnlineWeighted: return "online-weighted";
  }
  return "unknown";
}

SoftUpdateConvention soft_update_convention_from_string(const std::string& name) {
  if (name == "as-printed") return SoftUpdateConvention::kAsPrinted;
  if (name == "online-weighted") return SoftUpdateConvention::kOnlineWeighted;
  fail(ErrorKind::kInvalidInput, "unknown soft-update convention '" + name + "'");
}

void soft_update(Mlp& target, const Mlp& online, double tau, SoftUpdateConvention convention) {
  require(target.same_shape(online), "soft_update: target and online shapes differ");
  require(tau > 0.0 && tau < 1.0, "soft_update: tau must lie in (0, 1)");
  const double w_target = convention == SoftUpdateConvention::kAsPrinted ? tau : 1.0 - tau;
  target.params() = w_target * target.params() + (1.0 - w_target) * online.params();
}

void write_f64_le(std::ostream& out, const double* data, std::size_t n) {
  if constexpr (std::endian::native == std::endian::little) {
    out.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(n * sizeof(double)));
  } else {
    for (std::size_t i = 0; i < n; ++i) {
      const std::uint64_t le = byteswap64(std::bit_cast<std::uint64_t>(data[i]));
      out.write(reinterpret_cast<const char*>(&le), sizeof le);
    }
  }
}

void read_f64_le(std::istream& in, double* data, std::size_t n) {
  in.read(reinterpret_cast<char*>(data), static_cast<std::streamsize>(n * sizeof(double)));
  if constexpr (std::endian::native != std::endian::little) {
    for (std::size_t i = 0; i < n; ++i) {
      data[i] = std::bit_cast<double>(byteswap64(std::bit_cast<std::uint64_t>(data[i])));
    }
  }
}

std::vector<std::filesystem::path> save_checkpoint(const Mlp& net, long step,
                                                   const std::filesystem::path& stem) {
  std::filesystem::path json_path = stem;
  json_path += ".json";
  std::filesystem::path blob_path = stem;
  blob_path += ".bin";
  const nlohmann::json doc = {{"layer_dims", net.layer_dims()},
                              {"hidden_activation", "relu"},
                              {"output_activation", to_string(net.output_activation())},
                              {"step", step},
                              {"n_params", net.n_params()},
                              {"blob", blob_path.filename().string()}};
  std::ofstream meta(json_path);
  if (!meta) fail(ErrorKind::kIo, "cannot write checkpoint " + json_path.string());
  meta << doc.dump(2) << '\n';
  std::ofstream blob(blob_path, std::ios::binary);
  if (!blob) fail(ErrorKind::kIo, "cannot write checkpoint blob " + blob_path.string());
  write_f64_le(blob, net.params().data(), static_cast<std::size_t>(net.n_params()));
  if (!meta || !blob) fail(ErrorKind::kIo, "short write for checkpoint " + stem.string());
  return {json_path, blob_path};
}

Mlp load_checkpoint(const std::filesystem::path& json_path, long* step) {
  std::ifstream meta(json_path);
  if (!meta) fail(ErrorKind::kIo, "cannot read checkpoint " + json_path.string());
  nlohmann::json doc;
  try {
    meta >> doc;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::kInvalidInput, "checkpoint " + json_path.string() + ": " + e.what());
  }
  Mlp net;
  std::filesystem::path blob_path;
  try {
    net = Mlp(doc.at("layer_dims").get<std::vector<int>>(),
              activation_from_string(doc.at("output_activation").get<std::string>()));
    if (step) *step = doc.at("step").get<long>();
    blob_path = json_path.parent_path() / doc.at("blob").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::kInvalidInput, "checkpoint " + json_path.string() + ": " + e.what());
  }
  std::ifstream blob(blob_path, std::ios::binary);
  if (!blob) fail(ErrorKind::kIo, "cannot read checkpoint blob " + blob_path.string());
  read_f64_le(blob, net.params().data(), static_cast<std::size_t>(net.n_params()));
  if (!blob) fail(ErrorKind::kIo, "checkpoint blob " + blob_path.string() + " is truncated");
  return net;
}

}  // namespace score
