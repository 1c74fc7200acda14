#pragma once

#include "ploff/bonus_index.hpp"
#include "ploff/dataset.hpp"
#include "ploff/env.hpp"
#include "ploff/mlp.hpp"

#include <Eigen/Core>

#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace ploff::agent {

enum class Variant { ploff, td3_off, ploff_l2 };

std::string to_string(Variant v);
Variant parse_variant(const std::string& tag);

struct AgentArch {
  std::vector<int> hidden{256, 256};
  double tau = 0.005;
  double actor_lr = 3e-4;
  double critic_lr = 3e-4;
  double gamma = 0.99;
  bool twin_critics = true;
  // Target policy smoothing (off by default; deterministic targets).
  double target_noise = 0.0;
  double noise_clip = 0.5;
};

struct AgentParams {
  nn::Mlp actor;
  nn::Mlp critic1;
  nn::Mlp critic2;
  nn::Mlp actor_target;
  nn::Mlp critic1_target;
  nn::Mlp critic2_target;
  int state_dim = 0;
  int action_dim = 0;
  Eigen::VectorXd action_low;
  Eigen::VectorXd action_high;
  AgentArch arch;

  // Deterministic actions, columns in, columns out, inside the action box.
  Eigen::MatrixXd act(const Eigen::MatrixXd& states) const;
  Eigen::MatrixXd act_target(const Eigen::MatrixXd& states) const;
  Eigen::VectorXd act_one(const Eigen::VectorXd& state) const;
  Eigen::VectorXd q1(const Eigen::MatrixXd& states, const Eigen::MatrixXd& actions) const;
};

AgentParams init_agent(int state_dim, int action_dim, const Eigen::VectorXd& low, const Eigen::VectorXd& high,
                       const AgentArch& arch, std::uint64_t seed);

struct AgentBatch {
  Eigen::MatrixXd states;
  Eigen::MatrixXd actions;
  Eigen::VectorXd rewards;
  Eigen::MatrixXd next_states;
  Eigen::VectorXd dones;  // 1 for terminal transitions
  std::vector<std::size_t> indices;  // dataset rows

  Eigen::Index size() const { return states.cols(); }
};

AgentBatch gather_batch(const data::TransitionDataset& d, std::span<const std::size_t> indices);

// Where bonus values come from. A null index means the bonus is identically 0.
struct BonusSource {
  const bonus::NeighborIndex* index = nullptr;
  bonus::BonusSpec spec;
};

// y = r + (1 - done) * gamma * min_q + alpha_c * b
double td_target(double reward, bool done, double gamma, double min_target_q, double bonus, double alpha_c);

struct CriticTargets {
  Eigen::VectorXd y;
  Eigen::VectorXd bonus;  // b(s', pi_target(s'))
};

// Uses only target networks. Candidate sets for s' come from the index's
// precomputed next-state lists.
CriticTargets critic_targets(const AgentParams& agent, const AgentBatch& batch, const BonusSource& source, Rng* noise_rng);

struct CriticLoss {
  double loss = 0.0;  // mean over critics of the mean squared error
  double max_abs_q = 0.0;
  nn::MlpGradients grad1;
  nn::MlpGradients grad2;
};

CriticLoss critic_loss(const AgentParams& agent, const AgentBatch& batch, const Eigen::VectorXd& y);

struct ActorObjective {
  double objective = 0.0;  // mean of Q1(s, pi(s)) + alpha_a * b(s, pi(s))
  double mean_bonus = 0.0;
  nn::MlpGradients grad;  // d(objective)/d(actor params), filled when requested
};

// Bonus for the actor step is evaluated against the candidate lists of the
// batch's dataset states.
ActorObjective actor_objective(const AgentParams& agent, const AgentBatch& batch, const BonusSource& source,
                               bool want_grad);

void update_agent_targets(AgentParams& agent, double tau);

struct AgentTrainConfig {
  long steps = 500'000;
  int batch = 256;
  bonus::BonusSpec bonus;
  Variant variant = Variant::ploff;
  int policy_delay = 2;
  std::uint64_t seed = 0;
  AgentArch arch;
  int log_every = 1000;
};

struct AgentLogRow {
  long step = 0;
  double critic_loss = 0.0;
  double actor_objective = 0.0;
  double mean_bonus = 0.0;
};

struct AgentTrainResult {
  AgentParams agent;
  std::vector<AgentLogRow> log;
};

// |Q| bound that aborts training: 10 / (1 - gamma) scaled by the largest
// per-step reward plus bonus contribution.
double divergence_threshold(const AgentTrainConfig& cfg);

// `index` must be a learned index for ploff and a euclidean one for
// ploff_l2; it is ignored for td3_off. Throws DivergenceError.
AgentTrainResult train_agent(const data::TransitionDataset& d, const bonus::NeighborIndex* index,
                             const AgentTrainConfig& cfg);

struct EvalStats {
  double mean_return = 0.0;
  double std_return = 0.0;
  double normalized_score = 0.0;
  std::vector<double> returns;
};

double normalized_score(const env::ContinuousEnv& env, double raw_return);

using Policy = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;

EvalStats evaluate_policy(const env::ContinuousEnv& env, const Policy& policy, int episodes, std::uint64_t seed);
EvalStats evaluate_policy(const env::ContinuousEnv& env, const AgentParams& agent, int episodes, std::uint64_t seed);

struct SweepGrid {
  std::vector<double> alpha_actor{1.0, 5.0, 10.0};
  std::vector<double> alpha_critic{1.0, 5.0, 10.0};
  std::vector<double> beta{0.1, 0.25, 0.5};
  std::vector<std::uint64_t> seeds{0};
};

struct SweepRow {
  double alpha_actor = 0.0;
  double alpha_critic = 0.0;
  double beta = 0.0;
  std::uint64_t seed = 0;
  double mean_return = 0.0;       // NaN when the run diverged
  double normalized_score = 0.0;  // NaN when the run diverged
  bool diverged = false;
};

// One agent per grid point and seed; rows sorted by normalized score,
// best first, diverged runs last.
std::vector<SweepRow> hyperparameter_sweep(const data::TransitionDataset& d, const bonus::NeighborIndex* index,
                                           const env::ContinuousEnv& env, const SweepGrid& grid,
                                           const AgentTrainConfig& base, int eval_episodes);

void save_sweep_csv(const std::vector<SweepRow>& rows, const std::filesystem::path& path);
void save_agent_log_csv(const std::vector<AgentLogRow>& log, const std::filesystem::path& path);

io::Checkpoint to_checkpoint(const AgentParams& agent);
AgentParams agent_from_checkpoint(const io::Checkpoint& ckpt);
void save_agent(const AgentParams& agent, const std::filesystem::path& path, const nlohmann::json& extra = {});
AgentParams load_agent(const std::filesystem::path& path);

}  // namespace ploff::agent
