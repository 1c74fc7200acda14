#pragma once

#include "ploff/dataset.hpp"
#include "ploff/env.hpp"
#include "ploff/metric_approx.hpp"

#include <Eigen/Core>

#include <filesystem>
#include <string>
#include <vector>

namespace ploff::figures {

// Rebuilds the gridworld a dataset was collected on from the map text and
// settings stored in its metadata.
env::TabularMDP gridworld_from_dataset(const data::TransitionDataset& d);

// d_psi from every walkable cell's state to the anchor state; NaN on walls.
Eigen::MatrixXd state_distance_heatmap(const approx::EmbedderPair& pair, const env::TabularMDP& mdp, int anchor_state);
void save_heatmap_csv(const Eigen::MatrixXd& heatmap, const std::filesystem::path& path);

struct NoiseRow {
  double lambda = 0.0;
  std::string kind;  // "state" or "action"
  double mean = 0.0;
  double q10 = 0.0;
  double q50 = 0.0;
  double q90 = 0.0;
};

// d_phi between dataset pairs and copies with Gaussian noise of scale lambda
// added to the state or to the action.
std::vector<NoiseRow> noise_perturbation(const approx::EmbedderPair& pair, const data::TransitionDataset& d,
                                         const std::vector<double>& lambdas, int samples, std::uint64_t seed);
void save_noise_csv(const std::vector<NoiseRow>& rows, const std::filesystem::path& path);

}  // namespace ploff::figures
