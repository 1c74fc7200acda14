#pragma once

#include "ploff/dataset.hpp"
#include "ploff/mlp.hpp"

#include <Eigen/Core>

#include <filesystem>
#include <span>
#include <vector>

namespace ploff::approx {

// Support of the uniform action distribution used by the bootstrap term.
struct ActionSpace {
  enum class Kind { discrete, box };
  Kind kind = Kind::box;
  int dim = 0;  // number of actions (discrete, one-hot encoded) or box dimension
  Eigen::VectorXd low;
  Eigen::VectorXd high;

  static ActionSpace discrete(int num_actions);
  static ActionSpace box(Eigen::VectorXd low, Eigen::VectorXd high);
  Eigen::VectorXd sample(Rng& rng) const;
};

// Discrete one-hot actions for gridworld datasets, the [-1, 1] box otherwise.
ActionSpace action_space_for(const data::TransitionDataset& d);

struct EmbedderWidths {
  int hidden = 1024;
  int embed = 32;
};

// Siamese embedders: phi over concatenated (s, a), psi over s, plus target
// copies used for every bootstrap term.
struct EmbedderPair {
  nn::Mlp phi;
  nn::Mlp psi;
  nn::Mlp phi_target;
  nn::Mlp psi_target;
  int state_dim = 0;
  int action_dim = 0;
  ActionSpace actions;
  double tau = 0.005;
  double gamma = 0.9;
  int n_action_samples = 256;
  // Feed the same sampled action to both states in the psi target.
  bool shared_action_samples = true;

  int embed_dim() const { return phi.output_dim(); }
};

EmbedderPair init_embedders(int state_dim, int action_dim, const ActionSpace& actions, EmbedderWidths widths,
                            std::uint64_t seed);

Eigen::MatrixXd concat_rows(const Eigen::MatrixXd& top, const Eigen::MatrixXd& bottom);

double d_phi(const EmbedderPair& pair, const Eigen::VectorXd& s1, const Eigen::VectorXd& a1, const Eigen::VectorXd& s2,
             const Eigen::VectorXd& a2);
double d_psi(const EmbedderPair& pair, const Eigen::VectorXd& s1, const Eigen::VectorXd& s2);
double d_phi_target(const EmbedderPair& pair, const Eigen::VectorXd& s1, const Eigen::VectorXd& a1,
                    const Eigen::VectorXd& s2, const Eigen::VectorXd& a2);

// Column-per-sample view of a set of transitions.
struct TransitionBatch {
  Eigen::MatrixXd states;
  Eigen::MatrixXd actions;
  Eigen::MatrixXd next_states;
  Eigen::VectorXd rewards;

  Eigen::Index size() const { return states.cols(); }
};

TransitionBatch gather(const std::vector<data::Transition>& transitions, std::span<const std::size_t> indices);

struct LossResult {
  double loss = 0.0;
  nn::MlpGradients grads;
};

// Mean over the batch of (d_phi(x1; x2) - |r1 - r2| - gamma * ||psi_target(s1') - psi_target(s2')||)^2.
// Gradients are w.r.t. phi only.
LossResult loss_phi(const EmbedderPair& pair, const TransitionBatch& first, const TransitionBatch& second);

// Mean over the batch of (||psi(s1) - psi(s2)|| - mean_j ||phi_target(s1, u_j) - phi_target(s2, u_j)||)^2.
// Finite action sets are enumerated exactly when n_action_samples >= |A|.
// Gradients are w.r.t. psi only.
LossResult loss_psi(const EmbedderPair& pair, const Eigen::MatrixXd& s1, const Eigen::MatrixXd& s2, Rng& rng);

// The psi regression target alone, for inspection and tests.
Eigen::VectorXd psi_bootstrap_target(const EmbedderPair& pair, const Eigen::MatrixXd& s1, const Eigen::MatrixXd& s2,
                                     Rng& rng);

void target_update(EmbedderPair& pair, double tau);

struct MetricTrainConfig {
  long steps = 2'000'000;
  double learning_rate = 1e-3;
  int batch = 256;
  int n_action_samples = 256;
  double tau = 0.005;
  double gamma = 0.9;
  EmbedderWidths widths;
  std::uint64_t seed = 0;
  int log_every = 1000;
  bool shared_action_samples = true;
  // Add an absorbing zero-reward self transition for every terminal
  // transition so terminal states get trained embeddings.
  bool absorbing_terminals = true;
};

struct MetricLogRow {
  long step = 0;
  double loss_phi = 0.0;  // mean batch loss since the previous row
  double loss_psi = 0.0;
};

struct MetricTrainResult {
  EmbedderPair pair;
  std::vector<MetricLogRow> log;
};

std::vector<data::Transition> metric_training_pool(const data::TransitionDataset& d, const ActionSpace& actions,
                                                   bool absorbing_terminals, Rng& rng);

MetricTrainResult train_metric(const data::TransitionDataset& d, const MetricTrainConfig& cfg);
MetricTrainResult train_metric(const data::TransitionDataset& d, const MetricTrainConfig& cfg, EmbedderPair init);

io::Checkpoint to_checkpoint(const EmbedderPair& pair);
EmbedderPair from_checkpoint(const io::Checkpoint& ckpt);
void save_metric(const EmbedderPair& pair, const std::filesystem::path& path);
EmbedderPair load_metric(const std::filesystem::path& path);
void save_loss_csv(const std::vector<MetricLogRow>& log, const std::filesystem::path& path);

}  // namespace ploff::approx
