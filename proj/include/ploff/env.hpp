#pragma once

#include <Eigen/Core>

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace ploff::env {

enum class CellKind : char { free = '.', wall = '#', goal = 'G', start = 'S' };

// Rectangular ASCII map: '#' wall, '.' free, 'G' goal, 'S' start.
struct GridMap {
  int rows = 0;
  int cols = 0;
  std::vector<CellKind> cells;  // row-major

  CellKind at(int row, int col) const { return cells[static_cast<std::size_t>(row * cols + col)]; }
  bool walkable(int row, int col) const;

  static GridMap parse(std::string_view text);
  static GridMap load(const std::filesystem::path& path);
  void validate() const;
};

struct TabularMDP {
  int num_states = 0;
  int num_actions = 0;
  std::vector<int> next_state;  // [s * num_actions + a]
  std::vector<double> reward;   // [s * num_actions + a]
  std::vector<char> terminal;   // [s]
  int time_limit = 1;
  std::vector<int> start_states;

  // Populated by build_gridworld: grid cell of each state, and the inverse map
  // (-1 for walls).
  int grid_rows = 0;
  int grid_cols = 0;
  std::vector<std::pair<int, int>> cell_of_state;
  std::vector<int> state_of_cell;

  int next(int s, int a) const { return next_state[static_cast<std::size_t>(s * num_actions + a)]; }
  double r(int s, int a) const { return reward[static_cast<std::size_t>(s * num_actions + a)]; }
  bool is_terminal(int s) const { return terminal[static_cast<std::size_t>(s)] != 0; }
  int num_pairs() const { return num_states * num_actions; }

  // Successor and reward under the absorbing-terminal convention: a terminal
  // state loops to itself with zero reward whatever the stored tables say.
  int effective_next(int s, int a) const { return is_terminal(s) ? s : next(s, a); }
  double effective_reward(int s, int a) const { return is_terminal(s) ? 0.0 : r(s, a); }

  int goal_state() const;  // first terminal state, -1 if none
  void validate() const;
};

enum GridAction : int { up = 0, down = 1, left = 2, right = 3 };

TabularMDP build_gridworld(const GridMap& map, int time_limit, double goal_reward);

struct TabularStep {
  int next_state;
  double reward;
  bool done;
};

TabularStep step_tabular(const TabularMDP& mdp, int s, int a);

Eigen::VectorXd encode_state(int s, const TabularMDP& mdp);
Eigen::VectorXd encode_action(int a, const TabularMDP& mdp);
// Concatenated one-hot encoding of (s, a); length num_states + num_actions.
Eigen::VectorXd one_hot(int s, int a, const TabularMDP& mdp);
// Inverse of encode_state / encode_action: index of the largest entry.
int decode_one_hot(const Eigen::VectorXd& v);

// Wall-respecting breadth-first distances (in moves) from (row, col) to every
// cell; -1 for walls and unreachable cells.
std::vector<int> grid_bfs(const GridMap& map, int row, int col);

// Shortest path of states from `from` to `to` over the MDP transition graph.
std::vector<int> shortest_path(const TabularMDP& mdp, int from, int to);

struct PointMassConfig {
  double dt = 0.05;
  double max_speed = 2.0;
  Eigen::Vector2d start{0.0, 0.0};
  Eigen::Vector2d goal{1.0, 1.0};
  int time_limit = 100;
  // Proportional-derivative gains of the scripted expert.
  double kp = 4.0;
  double kd = 4.5;
};

// Deterministic continuous environment. The only kind shipped is "pointmass":
// state [x, y, vx, vy], action [ax, ay] in [-1, 1]^2.
struct ContinuousEnv {
  std::string kind;
  int state_dim = 0;
  int action_dim = 0;
  Eigen::VectorXd action_low;
  Eigen::VectorXd action_high;
  double dt = 0.05;
  double max_speed = 2.0;
  std::string reward_tag;  // "neg_goal_distance"
  Eigen::VectorXd goal;
  int time_limit = 100;
  Eigen::VectorXd start_state;
  double kp = 4.0;
  double kd = 4.5;
  // Undiscounted returns of the uniform-random and scripted expert policies,
  // used to normalize scores.
  double reference_random_return = 0.0;
  double reference_expert_return = 0.0;

  Eigen::VectorXd clip_action(const Eigen::VectorXd& a) const;
};

struct ContinuousStep {
  Eigen::VectorXd next_state;
  double reward;
};

ContinuousEnv build_pointmass(const PointMassConfig& config = {});
ContinuousStep step(const ContinuousEnv& env, const Eigen::VectorXd& state, const Eigen::VectorXd& action);

// Proportional-derivative controller toward the goal, gains scaled by
// `gain_scale`, clipped to the action box.
Eigen::VectorXd expert_action(const ContinuousEnv& env, const Eigen::VectorXd& state, double gain_scale = 1.0);

double goal_distance(const ContinuousEnv& env, const Eigen::VectorXd& state);

}  // namespace ploff::env
