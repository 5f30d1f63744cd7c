#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"

// Residual multi-head network: learned input projection, residual blocks
// (linear -> batchnorm -> swish -> dropout, identity or projected skip),
// and three output heads (mean, log-variance, Sips parameters). Forward
// and reverse-mode gradients are implemented directly per layer.

namespace pisorb {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

struct NetworkConfig {
  int input_dim = 12;
  int projection_dim = 25;
  std::vector<int> hidden_widths = {64, 128, 64, 32, 16};
  double dropout_p = 0.1;
  double bn_momentum = 0.1;
  std::uint64_t seed = 0;
};

/// Named tensor store. Biases and batchnorm vectors are 1 x n row matrices.
using ParameterSet = std::map<std::string, Matrix>;

enum class Mode { Train, Eval, McDropout };

struct ForwardOutput {
  Vector mean;      // log1p-adsorption
  Vector log_var;   // log aleatoric variance, log1p space
  Matrix sips;      // n x 3: (q_max, K, n) after the bounded head transform
  Matrix sips_raw;  // n x 3: pre-squash activations
};

double swish(double x);
double sigmoid(double x);

/// Bounded Sips head transform and its inverse (used by the physics-head
/// initialization): q_max = 100 s(a), K = 0.01 + 9.99 s(b), n = 0.5 + 9.5 s(c).
Eigen::Vector3d sips_transform(const Eigen::Vector3d& raw);
Eigen::Vector3d sips_transform_inverse(const Eigen::Vector3d& params);

struct BlockCache {
  Matrix h_in, z, xhat, bn_out, act, dropped;
  Eigen::RowVectorXd mu, var;  // batch statistics (Train mode)
  Matrix mask;                 // inverted-dropout mask (already scaled)
  bool used_batch_stats = false;
};

struct ForwardCache {
  Matrix input;
  Mode mode = Mode::Eval;
  Matrix proj_out;
  std::vector<BlockCache> blocks;
  Matrix final_h;
  ForwardOutput out;
};

class Network {
 public:
  explicit Network(NetworkConfig cfg);

  const NetworkConfig& config() const { return cfg_; }
  int n_blocks() const { return static_cast<int>(cfg_.hidden_widths.size()); }

  /// Xavier-uniform initialization; projection uses gain 0.5, all other
  /// linear layers gain 1.0. Deterministic under cfg.seed.
  static ParameterSet init(const NetworkConfig& cfg);

  /// Train mode uses batch statistics (batch size >= 2) and updates running
  /// stats unless update_running is false or the tensor is listed in
  /// frozen_stats. Eval uses running stats, no dropout. McDropout uses
  /// running stats with active dropout; masks are seeded by rng_seed.
  ForwardOutput forward(ParameterSet& params, const Matrix& X, Mode mode,
                        std::uint64_t rng_seed = 0, ForwardCache* cache = nullptr,
                        bool update_running = true,
                        const std::set<std::string>* frozen_stats = nullptr) const;

  /// Reverse-mode gradients of a scalar loss given its gradients with
  /// respect to the head outputs (d_sips against the transformed Sips
  /// parameters). Returns one tensor per trainable parameter; batchnorm
  /// running statistics carry no gradient.
  ParameterSet backward(const ParameterSet& params, const ForwardCache& cache,
                        const Vector& d_mean, const Vector& d_logvar,
                        const Matrix& d_sips) const;

  std::vector<std::string> tensor_names() const;
  std::vector<std::string> trainable_names() const;

  /// Trainable encoder tensors for blocks [from_block, to_block] (1-based);
  /// optionally including the batchnorm running statistics.
  std::vector<std::string> encoder_block_names(int from_block, int to_block,
                                               bool include_running_stats) const;

  long parameter_count(const ParameterSet& params) const;

  void validate_shapes(const ParameterSet& params) const;

 private:
  NetworkConfig cfg_;
  int block_in_dim(int b) const;  // 0-based block index
};

// --- model file (JSON) ------------------------------------------------------

struct ModelFile {
  NetworkConfig config;
  nlohmann::json metadata;
  ParameterSet params;
  ParameterSet fisher;  // tensors stored under reserved "fisher." names
};

nlohmann::json config_to_json(const NetworkConfig& cfg);
NetworkConfig config_from_json(const nlohmann::json& j);

void save_model(const std::string& path, const ParameterSet& params,
                const NetworkConfig& cfg, const nlohmann::json& metadata,
                const ParameterSet& fisher = {});
ModelFile load_model(const std::string& path);

}  // namespace pisorb
