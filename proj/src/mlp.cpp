#include "ploff/mlp.hpp"

#include "ploff/errors.hpp"

#include <cmath>

namespace ploff::nn {

std::string to_string(Activation a) {
  switch (a) {
    case Activation::identity: return "identity";
    case Activation::relu: return "relu";
    case Activation::tanh: return "tanh";
    case Activation::elu: return "elu";
  }
  return "identity";
}

Activation parse_activation(const std::string& name) {
  if (name == "identity") return Activation::identity;
  if (name == "relu") return Activation::relu;
  if (name == "tanh") return Activation::tanh;
  if (name == "elu") return Activation::elu;
  throw ValidationError("unknown activation '" + name + "'");
}

namespace {

void activate(Eigen::MatrixXd& z, Activation a) {
  switch (a) {
    case Activation::identity: break;
    case Activation::relu: z = z.cwiseMax(0.0); break;
    case Activation::tanh: z = z.array().tanh().matrix(); break;
    case Activation::elu: z = (z.array() > 0.0).select(z.array(), z.array().min(0.0).exp() - 1.0).matrix(); break;
  }
}

// Derivative of the activation expressed through its output y.
Eigen::MatrixXd activation_grad(const Eigen::MatrixXd& y, Activation a) {
  switch (a) {
    case Activation::identity: return Eigen::MatrixXd::Ones(y.rows(), y.cols());
    case Activation::relu: return (y.array() > 0.0).cast<double>().matrix();
    case Activation::tanh: return (1.0 - y.array().square()).matrix();
    case Activation::elu: return y.unaryExpr([](double v) { return v > 0.0 ? 1.0 : v + 1.0; });
  }
  return Eigen::MatrixXd::Ones(y.rows(), y.cols());
}

bool mostly_zero(const Eigen::MatrixXd& x) {
  if (x.size() < 1024) return false;
  const auto nonzeros = (x.array() != 0.0).count();
  return nonzeros * 8 < x.size();
}

}  // namespace

MlpGradients MlpGradients::zeros_like(const Mlp& net) {
  MlpGradients g;
  for (const auto& layer : net.layers) {
    g.weight.push_back(Eigen::MatrixXd::Zero(layer.weight.rows(), layer.weight.cols()));
    g.bias.push_back(Eigen::VectorXd::Zero(layer.bias.size()));
  }
  return g;
}

void MlpGradients::add(const MlpGradients& other, double factor) {
  for (std::size_t l = 0; l < weight.size(); ++l) {
    weight[l] += factor * other.weight[l];
    bias[l] += factor * other.bias[l];
  }
}

void MlpGradients::scale(double factor) {
  for (std::size_t l = 0; l < weight.size(); ++l) {
    weight[l] *= factor;
    bias[l] *= factor;
  }
}

Mlp::Mlp(int input_dim, const std::vector<int>& widths, const std::vector<Activation>& activations, Rng& rng) {
  if (input_dim <= 0) throw ValidationError("network input dimension must be positive");
  if (widths.empty() || widths.size() != activations.size())
    throw ValidationError("network needs one activation per layer");
  int fan_in = input_dim;
  for (std::size_t l = 0; l < widths.size(); ++l) {
    if (widths[l] <= 0) throw ValidationError("layer widths must be positive");
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::uniform_real_distribution<double> init(-bound, bound);
    DenseLayer layer;
    layer.weight.resize(widths[l], fan_in);
    layer.bias.resize(widths[l]);
    for (Eigen::Index i = 0; i < layer.weight.size(); ++i) layer.weight.data()[i] = init(rng);
    for (Eigen::Index i = 0; i < layer.bias.size(); ++i) layer.bias[i] = init(rng);
    layer.activation = activations[l];
    layers.push_back(std::move(layer));
    fan_in = widths[l];
  }
}

std::size_t Mlp::parameter_count() const {
  std::size_t count = 0;
  for (const auto& layer : layers) count += static_cast<std::size_t>(layer.weight.size() + layer.bias.size());
  return count;
}

std::vector<int> Mlp::widths() const {
  std::vector<int> out;
  for (const auto& layer : layers) out.push_back(static_cast<int>(layer.weight.rows()));
  return out;
}

Eigen::MatrixXd Mlp::forward(const Eigen::MatrixXd& x) const {
  if (x.rows() != input_dim()) throw ValidationError("network input dimension mismatch");
  Eigen::MatrixXd h;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto& layer = layers[l];
    Eigen::MatrixXd z;
    if (l == 0 && mostly_zero(x)) {
      const Eigen::SparseMatrix<double> xs = x.sparseView();
      z = layer.weight * xs;
    } else {
      z = layer.weight * (l == 0 ? x : h);
    }
    z.colwise() += layer.bias;
    activate(z, layer.activation);
    h = std::move(z);
  }
  return h;
}

Eigen::MatrixXd Mlp::forward(const Eigen::MatrixXd& x, MlpTape& tape) const {
  if (x.rows() != input_dim()) throw ValidationError("network input dimension mismatch");
  tape.inputs.clear();
  tape.outputs.clear();
  tape.sparse_input.reset();
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto& layer = layers[l];
    const Eigen::MatrixXd& in = l == 0 ? x : tape.outputs.back();
    Eigen::MatrixXd z;
    if (l == 0 && mostly_zero(x)) {
      tape.sparse_input = x.sparseView();
      z = layer.weight * *tape.sparse_input;
    } else {
      z = layer.weight * in;
    }
    z.colwise() += layer.bias;
    activate(z, layer.activation);
    tape.inputs.push_back(in);
    tape.outputs.push_back(std::move(z));
  }
  return tape.outputs.back();
}

Eigen::VectorXd Mlp::forward_one(const Eigen::VectorXd& x) const {
  Eigen::MatrixXd out = forward(Eigen::MatrixXd(x));
  return out.col(0);
}

Eigen::MatrixXd Mlp::backward(const MlpTape& tape, const Eigen::MatrixXd& grad_output, MlpGradients* grads,
                              bool want_input_grad) const {
  Eigen::MatrixXd delta = grad_output;
  for (std::size_t l = layers.size(); l-- > 0;) {
    const auto& layer = layers[l];
    delta = delta.cwiseProduct(activation_grad(tape.outputs[l], layer.activation));
    if (grads) {
      if (l == 0 && tape.sparse_input) {
        grads->weight[l] += delta * tape.sparse_input->transpose();
      } else {
        grads->weight[l].noalias() += delta * tape.inputs[l].transpose();
      }
      grads->bias[l] += delta.rowwise().sum();
    }
    if (l > 0 || want_input_grad) delta = layer.weight.transpose() * delta;
  }
  return want_input_grad ? delta : Eigen::MatrixXd();
}

bool Mlp::all_finite() const {
  for (const auto& layer : layers)
    if (!layer.weight.allFinite() || !layer.bias.allFinite()) return false;
  return true;
}

bool Mlp::operator==(const Mlp& other) const {
  if (layers.size() != other.layers.size()) return false;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto& a = layers[l];
    const auto& b = other.layers[l];
    if (a.activation != b.activation || a.weight.rows() != b.weight.rows() || a.weight.cols() != b.weight.cols() ||
        a.weight != b.weight || a.bias != b.bias)
      return false;
  }
  return true;
}

std::vector<double> flatten(const MlpGradients& grads) {
  std::vector<double> out;
  for (std::size_t l = 0; l < grads.weight.size(); ++l) {
    out.insert(out.end(), grads.weight[l].data(), grads.weight[l].data() + grads.weight[l].size());
    out.insert(out.end(), grads.bias[l].data(), grads.bias[l].data() + grads.bias[l].size());
  }
  return out;
}

void soft_update(Mlp& target, const Mlp& online, double tau) {
  if (!(tau >= 0.0 && tau <= 1.0)) throw ValidationError("tau must lie in [0, 1]");
  if (target.layers.size() != online.layers.size()) throw ValidationError("target/online shape mismatch");
  for (std::size_t l = 0; l < target.layers.size(); ++l) {
    auto& t = target.layers[l];
    const auto& o = online.layers[l];
    if (t.weight.rows() != o.weight.rows() || t.weight.cols() != o.weight.cols())
      throw ValidationError("target/online shape mismatch");
    if (tau == 1.0) {
      t.weight = o.weight;
      t.bias = o.bias;
    } else if (tau != 0.0) {
      t.weight = (1.0 - tau) * t.weight + tau * o.weight;
      t.bias = (1.0 - tau) * t.bias + tau * o.bias;
    }
  }
}

Adam::Adam(const Mlp& net, AdamConfig config)
    : config_(config), m_(MlpGradients::zeros_like(net)), v_(MlpGradients::zeros_like(net)) {}

void Adam::step(Mlp& net, const MlpGradients& grads) {
  ++t_;
  const double c1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
  const double b1 = config_.beta1;
  const double b2 = config_.beta2;
  const double lr = config_.learning_rate;
  const double eps = config_.epsilon;
  auto update = [&](auto& param, auto& m, auto& v, const auto& g) {
    m = b1 * m + (1.0 - b1) * g;
    v = b2 * v + (1.0 - b2) * g.cwiseProduct(g);
    param.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + eps);
  };
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    update(net.layers[l].weight, m_.weight[l], v_.weight[l], grads.weight[l]);
    update(net.layers[l].bias, m_.bias[l], v_.bias[l], grads.bias[l]);
  }
}

void append_tensors(io::Checkpoint& ckpt, const std::string& prefix, const Mlp& net) {
  nlohmann::json acts = nlohmann::json::array();
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    ckpt.tensors.push_back(io::tensor_from_matrix(prefix + ".w" + std::to_string(l), net.layers[l].weight));
    ckpt.tensors.push_back(io::tensor_from_vector(prefix + ".b" + std::to_string(l), net.layers[l].bias));
    acts.push_back(to_string(net.layers[l].activation));
  }
  ckpt.meta["networks"][prefix] = {{"layers", net.layers.size()}, {"activations", acts}};
}

Mlp read_tensors(const io::Checkpoint& ckpt, const std::string& prefix) {
  Mlp net;
  try {
    const auto& info = ckpt.meta.at("networks").at(prefix);
    const auto count = info.at("layers").get<std::size_t>();
    for (std::size_t l = 0; l < count; ++l) {
      DenseLayer layer;
      layer.weight = io::matrix_from_tensor(ckpt.get(prefix + ".w" + std::to_string(l)));
      layer.bias = io::vector_from_tensor(ckpt.get(prefix + ".b" + std::to_string(l)));
      layer.activation = parse_activation(info.at("activations").at(l).get<std::string>());
      if (layer.bias.size() != layer.weight.rows()) throw ValidationError("bias/weight mismatch in " + prefix);
      if (l > 0 && layer.weight.cols() != net.layers.back().weight.rows())
        throw ValidationError("layer shape mismatch in " + prefix);
      net.layers.push_back(std::move(layer));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("checkpoint is missing network '" + prefix + "': " + e.what());
  }
  return net;
}

}  // namespace ploff::nn
