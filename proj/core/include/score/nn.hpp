#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "score/rng.hpp"

namespace score {

enum class Activation { kIdentity, kTanh };

const char* to_string(Activation a);
Activation activation_from_string(const std::string& name);

/// Forward-pass intermediates needed by backward(). acts[0] is the input and
/// acts[l + 1] the post-activation output of layer l.
struct MlpCache {
  std::vector<Eigen::MatrixXd> acts;
};

struct MlpGradients {
  Eigen::VectorXd params;
  Eigen::MatrixXd input;
};

/// Fully connected network, ReLU on hidden layers. Parameters live in one flat
/// vector: for each layer, W (out x in, row-major) followed by b (out).
/// Batches are column-major: features x batch.
class Mlp {
 public:
  using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

  Mlp() = default;
  Mlp(std::vector<int> layer_dims, Activation output);

  /// W and b uniform in +-1/sqrt(fan_in).
  static Mlp initialized(std::vector<int> layer_dims, Activation output, Rng& rng);

  const std::vector<int>& layer_dims() const { return dims_; }
  Activation output_activation() const { return output_; }
  int n_layers() const { return static_cast<int>(dims_.size()) - 1; }
  int input_dim() const { return dims_.front(); }
  int output_dim() const { return dims_.back(); }
  Eigen::Index n_params() const { return params_.size(); }

  Eigen::VectorXd& params() { return params_; }
  const Eigen::VectorXd& params() const { return params_; }

  Eigen::Map<const RowMajor> weight(int layer) const;
  Eigen::Map<RowMajor> weight(int layer);
  Eigen::Map<const Eigen::VectorXd> bias(int layer) const;
  Eigen::Map<Eigen::VectorXd> bias(int layer);

  Eigen::MatrixXd forward(const Eigen::MatrixXd& input) const;
  const Eigen::MatrixXd& forward(const Eigen::MatrixXd& input, MlpCache& cache) const;

  /// Reverse-mode gradients of sum(output .* grad_output); overwrites `grads`.
  /// The input gradient is skipped when need_input_grad is false.
  void backward(const MlpCache& cache, const Eigen::MatrixXd& grad_output, MlpGradients& grads,
                bool need_input_grad = true) const;
  MlpGradients backward(const MlpCache& cache, const Eigen::MatrixXd& grad_output) const;

  bool same_shape(const Mlp& other) const {
    return dims_ == other.dims_ && output_ == other.output_;
  }

 private:
  std::vector<int> dims_;
  Activation output_ = Activation::kIdentity;
  std::vector<Eigen::Index> w_offset_;
  std::vector<Eigen::Index> b_offset_;
  Eigen::VectorXd params_;
};

struct AdamState {
  Eigen::VectorXd m;
  Eigen::VectorXd v;
  long step = 0;
  double learning_rate = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  explicit AdamState(Eigen::Index n_params = 0, double lr = 3e-4);
};

/// Bias-corrected Adam; throws DivergenceError on non-finite gradients.
void adam_step(AdamState& state, Eigen::VectorXd& params, const Eigen::VectorXd& grads);

enum class SoftUpdateConvention {
  /// target <- tau * target + (1 - tau) * online.
  kAsPrinted,
  /// target <- tau * online + (1 - tau) * target.
  kOnlineWeighted,
};

const char* to_string(SoftUpdateConvention c);
SoftUpdateConvention soft_update_convention_from_string(const std::string& name);

void soft_update(Mlp& target, const Mlp& online, double tau,
                 SoftUpdateConvention convention = SoftUpdateConvention::kAsPrinted);

/// Writes `<stem>.json` (layer_dims, output activation, step, blob name) and
/// `<stem>.bin` (little-endian f64 parameters in layer order, W then b).
/// Returns both paths.
std::vector<std::filesystem::path> save_checkpoint(const Mlp& net, long step,
                                                   const std::filesystem::path& stem);
Mlp load_checkpoint(const std::filesystem::path& json_path, long* step = nullptr);

/// Little-endian f64 helpers shared by the checkpoint and dataset formats.
void write_f64_le(std::ostream& out, const double* data, std::size_t n);
void read_f64_le(std::istream& in, double* data, std::size_t n);

}  // namespace score
