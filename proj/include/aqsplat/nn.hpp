#pragma once

#include "aqsplat/math.hpp"

#include <random>
#include <span>
#include <vector>

namespace aqsp {

inline constexpr double kLeakySlope = 0.01;

/// Dense perceptron with leaky-ReLU between layers and a linear output.
/// Batches are column-major: one sample per column. Parameters live in one
/// flat vector, per layer [W (out x in, column-major), b].
class Mlp {
 public:
  struct Cache {
    std::vector<Eigen::MatrixXd> inputs;  ///< input of each layer
    std::vector<Eigen::MatrixXd> pre;     ///< pre-activation of each layer
  };

  Mlp() = default;
  explicit Mlp(std::vector<int> widths);

  int input_dim() const { return widths_.front(); }
  int output_dim() const { return widths_.back(); }
  int layer_count() const { return static_cast<int>(widths_.size()) - 1; }
  const std::vector<int>& widths() const { return widths_; }

  std::vector<double>& params() { return params_; }
  const std::vector<double>& params() const { return params_; }

  Eigen::Map<Eigen::MatrixXd> weight(int layer);
  Eigen::Map<const Eigen::MatrixXd> weight(int layer) const;
  Eigen::Map<Eigen::VectorXd> bias(int layer);
  Eigen::Map<const Eigen::VectorXd> bias(int layer) const;

  /// U(-1/sqrt(fan_in), 1/sqrt(fan_in)) for weights and biases.
  void init_uniform(std::mt19937_64& rng);

  Eigen::MatrixXd forward(const Eigen::MatrixXd& x, Cache* cache = nullptr, Fingerprint* fp = nullptr) const;
  /// Accumulates parameter gradients into grad (same layout as params) and returns dL/dx.
  Eigen::MatrixXd backward(const Eigen::MatrixXd& grad_out, const Cache& cache, std::span<double> grad) const;

 private:
  std::vector<int> widths_;
  std::vector<std::size_t> offsets_;  // start of W for each layer
  std::vector<double> params_;
};

/// Stack of 3x3, stride-1, zero-padded convolutions with leaky-ReLU between
/// layers. Feature maps are (channels x pixels), pixels row-major.
class ConvNet {
 public:
  struct Cache {
    std::vector<Eigen::MatrixXd> columns;  ///< im2col of each layer input
    std::vector<Eigen::MatrixXd> pre;
    int width = 0, height = 0;
  };

  ConvNet() = default;
  explicit ConvNet(std::vector<int> channels);

  int input_channels() const { return channels_.front(); }
  int output_channels() const { return channels_.back(); }
  int layer_count() const { return static_cast<int>(channels_.size()) - 1; }

  std::vector<double>& params() { return params_; }
  const std::vector<double>& params() const { return params_; }
  Eigen::Map<Eigen::MatrixXd> weight(int layer);
  Eigen::Map<const Eigen::MatrixXd> weight(int layer) const;
  Eigen::Map<Eigen::VectorXd> bias(int layer);
  Eigen::Map<const Eigen::VectorXd> bias(int layer) const;

  void init_uniform(std::mt19937_64& rng);

  Eigen::MatrixXd forward(const Eigen::MatrixXd& x, int width, int height, Cache* cache = nullptr,
                          Fingerprint* fp = nullptr) const;
  Eigen::MatrixXd backward(const Eigen::MatrixXd& grad_out, const Cache& cache, std::span<double> grad) const;

 private:
  std::vector<int> channels_;
  std::vector<std::size_t> offsets_;
  std::vector<double> params_;
};

Eigen::MatrixXd im2col3x3(const Eigen::MatrixXd& x, int width, int height);
Eigen::MatrixXd col2im3x3(const Eigen::MatrixXd& cols, int channels, int width, int height);

}  // namespace aqsp
