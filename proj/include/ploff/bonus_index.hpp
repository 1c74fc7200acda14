#pragma once

#include "ploff/dataset.hpp"
#include "ploff/kdtree.hpp"
#include "ploff/metric_approx.hpp"
#include "ploff/mlp.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace ploff::bonus {

// learned: neighbors under d_psi, projection under d_phi.
// euclidean: both on raw vectors (states, and concatenated state-actions).
enum class IndexKind { learned, euclidean };

std::string to_string(IndexKind kind);

struct NeighborIndex {
  IndexKind kind = IndexKind::learned;
  std::size_t k = 50;
  int state_dim = 0;
  int action_dim = 0;
  Eigen::MatrixXd state_embeddings;  // column j: psi(s_j)
  Eigen::MatrixXd pair_embeddings;   // column j: phi(s_j, a_j)
  // Row-major n x list_size() candidate lists for s_j and for s'_j.
  std::vector<std::uint32_t> neighbors;
  std::vector<std::uint32_t> next_neighbors;
  std::uint64_t metric_hash = 0;
  std::uint64_t dataset_hash = 0;
  nn::Mlp phi;  // attached online embedders (learned kind)
  nn::Mlp psi;
  knn::KdTree tree;

  std::size_t n() const { return static_cast<std::size_t>(pair_embeddings.cols()); }
  std::size_t list_size() const { return std::min(k, n()); }
  std::span<const std::uint32_t> candidates(std::size_t j) const;
  std::span<const std::uint32_t> next_candidates(std::size_t j) const;

  Eigen::VectorXd embed_state(const Eigen::VectorXd& s) const;
  Eigen::VectorXd embed_pair(const Eigen::VectorXd& s, const Eigen::VectorXd& a) const;
};

std::uint64_t metric_hash(const approx::EmbedderPair& pair);

NeighborIndex build_neighbor_index(const approx::EmbedderPair& pair, const data::TransitionDataset& d, std::size_t k);
NeighborIndex build_euclidean_index(const data::TransitionDataset& d, std::size_t k);

// k nearest dataset states to an arbitrary state, ties by lowest index.
std::vector<std::uint32_t> query_candidates(const NeighborIndex& idx, const Eigen::VectorXd& s);

struct Projection {
  double distance = 0.0;
  std::uint32_t argmin = 0;
};

Projection project(const NeighborIndex& idx, const Eigen::VectorXd& s, const Eigen::VectorXd& a,
                   std::span<const std::uint32_t> candidates);
// min over H(s) of the pair distance.
double projection_distance(const NeighborIndex& idx, const Eigen::VectorXd& s, const Eigen::VectorXd& a);
// min over the whole dataset.
double exact_projection_distance(const NeighborIndex& idx, const Eigen::VectorXd& s, const Eigen::VectorXd& a);
// d(distance)/d(a) with the argmin candidate held fixed; zero at distance 0.
Eigen::VectorXd projection_distance_grad(const NeighborIndex& idx, const Eigen::VectorXd& s, const Eigen::VectorXd& a,
                                         std::uint32_t argmin);

enum class BonusForm { q_scaled_exp, exp, one_minus_exp };

std::string to_string(BonusForm form);
BonusForm parse_bonus_form(const std::string& tag);

struct BonusSpec {
  BonusForm form = BonusForm::q_scaled_exp;
  double beta = 0.5;
  double alpha_actor = 5.0;
  double alpha_critic = 1.0;

  void validate() const;
};

// The exp factor times the critic value (q_scaled_exp), the bare exp factor,
// or the penalty 1 - exp(beta * d).
double bonus_from_distance(const BonusSpec& spec, double distance, std::optional<double> critic = std::nullopt);

using CriticEvaluator = std::function<double(const Eigen::VectorXd& s, const Eigen::VectorXd& a)>;

double bonus(const NeighborIndex& idx, const BonusSpec& spec, const Eigen::VectorXd& s, const Eigen::VectorXd& a,
             const CriticEvaluator* critic = nullptr);

// Projection distances for the columns of (states, actions) against the
// given candidate lists, optionally with d(distance)/d(action) per column.
struct BatchProjection {
  Eigen::VectorXd distance;
  Eigen::MatrixXd action_grad;  // action_dim x batch, empty unless requested
};

BatchProjection batch_projection(const NeighborIndex& idx, const Eigen::MatrixXd& states, const Eigen::MatrixXd& actions,
                                 const std::vector<std::span<const std::uint32_t>>& candidates, bool want_grad);

struct BatchBonus {
  Eigen::VectorXd value;
  Eigen::MatrixXd action_grad;  // empty unless requested
};

// Combines distances (and critic values / action gradients for the
// q_scaled_exp form) into bonus values and action gradients.
BatchBonus combine_bonus(const BonusSpec& spec, const BatchProjection& projection, const Eigen::VectorXd* critic,
                         const Eigen::MatrixXd* critic_action_grad);

// "PLNN1": magic, JSON header line, u32 candidate lists (states, then next
// states), float64 embedding columns (states, then pairs).
void save_index(const NeighborIndex& idx, const std::filesystem::path& path);
// `metric` must be the checkpoint the index was built from (learned kind).
NeighborIndex load_index(const std::filesystem::path& path, const approx::EmbedderPair* metric);

}  // namespace ploff::bonus
