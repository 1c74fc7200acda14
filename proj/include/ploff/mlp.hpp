#pragma once

#include "ploff/container.hpp"
#include "ploff/rng.hpp"

#include <Eigen/Core>
#include <Eigen/SparseCore>

#include <optional>
#include <string>
#include <vector>

namespace ploff::nn {

enum class Activation { identity, relu, tanh, elu };

std::string to_string(Activation a);
Activation parse_activation(const std::string& name);

struct DenseLayer {
  Eigen::MatrixXd weight;  // out x in
  Eigen::VectorXd bias;
  Activation activation = Activation::identity;
};

class Mlp;

struct MlpGradients {
  std::vector<Eigen::MatrixXd> weight;
  std::vector<Eigen::VectorXd> bias;

  static MlpGradients zeros_like(const Mlp& net);
  void add(const MlpGradients& other, double scale = 1.0);
  void scale(double factor);
};

// Activations recorded by a forward pass, consumed by backward().
struct MlpTape {
  std::vector<Eigen::MatrixXd> inputs;   // input of each layer
  std::vector<Eigen::MatrixXd> outputs;  // post-activation output of each layer
  std::optional<Eigen::SparseMatrix<double>> sparse_input;  // set when the network input is mostly zeros
};

// Fully connected network; samples are columns.
class Mlp {
 public:
  Mlp() = default;
  // widths.back() is the output dimension; activations has one entry per layer.
  Mlp(int input_dim, const std::vector<int>& widths, const std::vector<Activation>& activations, Rng& rng);

  int input_dim() const { return layers.empty() ? 0 : static_cast<int>(layers.front().weight.cols()); }
  int output_dim() const { return layers.empty() ? 0 : static_cast<int>(layers.back().weight.rows()); }
  std::size_t parameter_count() const;
  std::vector<int> widths() const;

  Eigen::MatrixXd forward(const Eigen::MatrixXd& x) const;
  Eigen::MatrixXd forward(const Eigen::MatrixXd& x, MlpTape& tape) const;
  Eigen::VectorXd forward_one(const Eigen::VectorXd& x) const;

  // Back-propagates d(loss)/d(output). Parameter gradients are accumulated into
  // `grads` when given; returns d(loss)/d(input) when `want_input_grad`.
  Eigen::MatrixXd backward(const MlpTape& tape, const Eigen::MatrixXd& grad_output, MlpGradients* grads,
                           bool want_input_grad = true) const;

  // Visits every scalar parameter (layer by layer, weights column-major, then bias).
  template <typename F>
  void for_each_parameter(F&& fn) {
    for (auto& layer : layers) {
      for (Eigen::Index i = 0; i < layer.weight.size(); ++i) fn(layer.weight.data()[i]);
      for (Eigen::Index i = 0; i < layer.bias.size(); ++i) fn(layer.bias.data()[i]);
    }
  }

  bool all_finite() const;
  bool operator==(const Mlp& other) const;

  std::vector<DenseLayer> layers;
};

// Flattens gradients in the same order as Mlp::for_each_parameter.
std::vector<double> flatten(const MlpGradients& grads);

// target <- (1 - tau) * target + tau * online
void soft_update(Mlp& target, const Mlp& online, double tau);

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

class Adam {
 public:
  Adam() = default;
  Adam(const Mlp& net, AdamConfig config);
  // Descent step on `grads`.
  void step(Mlp& net, const MlpGradients& grads);
  long steps() const { return t_; }

 private:
  AdamConfig config_;
  MlpGradients m_;
  MlpGradients v_;
  long t_ = 0;
};

void append_tensors(io::Checkpoint& ckpt, const std::string& prefix, const Mlp& net);
Mlp read_tensors(const io::Checkpoint& ckpt, const std::string& prefix);

}  // namespace ploff::nn
