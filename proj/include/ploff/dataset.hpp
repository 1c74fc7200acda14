#pragma once

#include "ploff/env.hpp"
#include "ploff/rng.hpp"

#include <Eigen/Core>
#include "json.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace ploff::data {

struct Transition {
  Eigen::VectorXd s;
  Eigen::VectorXd a;
  double r = 0.0;
  Eigen::VectorXd s_next;
  bool done = false;  // true terminal only; time-limit truncation stays false
};

struct TransitionDataset {
  std::string env_id;
  int state_dim = 0;
  int action_dim = 0;
  std::vector<Transition> transitions;
  double reward_min = 0.0;
  double reward_max = 0.0;
  bool scaled = false;
  // Collection metadata (collector, hyperparameters, episode count).
  nlohmann::json meta = nlohmann::json::object();

  std::size_t n() const { return transitions.size(); }
  void validate() const;
};

bool operator==(const TransitionDataset& lhs, const TransitionDataset& rhs);

struct QLearningConfig {
  int episodes = 500;
  double epsilon = 0.1;
  double gamma = 0.99;
  double learning_rate = 0.1;
  std::uint64_t seed = 0;
};

// Logs every transition visited by epsilon-greedy tabular Q-learning
// (zero-initialized table, random tie-breaking). Rewards are left unscaled.
TransitionDataset collect_qlearning_dataset(const env::TabularMDP& mdp, const QLearningConfig& config,
                                            const std::string& env_id = "gridworld");

enum class ScriptedPolicy { random, medium, expert, mixture };

ScriptedPolicy parse_policy(const std::string& tag);
std::string to_string(ScriptedPolicy policy);

// Gain scale of the "medium" controller relative to the expert.
inline constexpr double kMediumGainScale = 0.1;

// random: uniform actions; expert: the environment's PD controller plus
// Gaussian noise of std `noise_scale`; medium: the same controller with gains
// scaled by kMediumGainScale plus noise; mixture: expert episodes followed by
// random episodes (`episodes` of each).
TransitionDataset collect_scripted_dataset(const env::ContinuousEnv& env, ScriptedPolicy policy, double noise_scale,
                                           int episodes, std::uint64_t seed);

// r := (r - min r) / (max r - min r); records the raw extrema.
TransitionDataset scale_rewards(const TransitionDataset& d);
TransitionDataset unscale_rewards(const TransitionDataset& d);
double unscale_reward(const TransitionDataset& d, double r);

struct PairIndices {
  std::vector<std::size_t> first;
  std::vector<std::size_t> second;
};

// Uniform with-replacement indices.
std::vector<std::size_t> sample_indices(std::size_t n, std::size_t batch, Rng& rng);
// Two independent uniform with-replacement draws of `batch` transitions.
PairIndices sample_pair_batch(const TransitionDataset& d, std::size_t batch, Rng& rng);

// Mean undiscounted raw return per logged episode (uses meta["episodes"]).
double behavior_mean_return(const TransitionDataset& d);

// "PLDS1" container: magic, one JSON header line, then n little-endian
// float32 records [s | a | r | s_next | done].
std::string encode_dataset(const TransitionDataset& d);
void save_dataset(const TransitionDataset& d, const std::filesystem::path& path);
TransitionDataset load_dataset(const std::filesystem::path& path);
// Hash of the encoded file bytes; ties derived artifacts to their dataset.
std::uint64_t dataset_hash(const TransitionDataset& d);

}  // namespace ploff::data
