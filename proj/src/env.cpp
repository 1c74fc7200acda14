#include "ploff/env.hpp"

#include "ploff/errors.hpp"
#include "ploff/rng.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <fstream>
#include <sstream>

namespace ploff::env {

bool GridMap::walkable(int row, int col) const {
  if (row < 0 || col < 0 || row >= rows || col >= cols) return false;
  return at(row, col) != CellKind::wall;
}

GridMap GridMap::parse(std::string_view text) {
  std::vector<std::string> lines;
  std::string current;
  for (char c : text) {
    if (c == '\r') continue;
    if (c == '\n') {
      lines.push_back(current);
      current.clear();
    } else {
      current.push_back(c);
    }
  }
  if (!current.empty()) lines.push_back(current);
  while (!lines.empty() && lines.back().empty()) lines.pop_back();
  if (lines.empty()) throw ValidationError("grid map is empty");

  GridMap map;
  map.rows = static_cast<int>(lines.size());
  map.cols = static_cast<int>(lines.front().size());
  for (const auto& line : lines) {
    if (static_cast<int>(line.size()) != map.cols) throw ValidationError("grid map is not rectangular");
    for (char c : line) {
      switch (c) {
        case '#': map.cells.push_back(CellKind::wall); break;
        case '.': map.cells.push_back(CellKind::free); break;
        case 'G': map.cells.push_back(CellKind::goal); break;
        case 'S': map.cells.push_back(CellKind::start); break;
        default: throw ValidationError(std::string("unknown grid map character '") + c + "'");
      }
    }
  }
  map.validate();
  return map;
}

GridMap GridMap::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open grid map " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse(buffer.str());
}

void GridMap::validate() const {
  if (rows <= 0 || cols <= 0) throw ValidationError("grid map has no cells");
  const auto goals = std::count(cells.begin(), cells.end(), CellKind::goal);
  const auto starts = std::count(cells.begin(), cells.end(), CellKind::start);
  const auto walls = std::count(cells.begin(), cells.end(), CellKind::wall);
  if (goals != 1) throw ValidationError("grid map must contain exactly one goal");
  if (starts < 1) throw ValidationError("grid map must contain at least one start");
  if (walls == static_cast<long>(cells.size())) throw ValidationError("grid map has zero free cells");
}

int TabularMDP::goal_state() const {
  for (int s = 0; s < num_states; ++s)
    if (is_terminal(s)) return s;
  return -1;
}

void TabularMDP::validate() const {
  if (num_states <= 0 || num_actions <= 0) throw ValidationError("MDP needs at least one state and action");
  const auto pairs = static_cast<std::size_t>(num_pairs());
  if (next_state.size() != pairs || reward.size() != pairs) throw ValidationError("MDP table size mismatch");
  if (terminal.size() != static_cast<std::size_t>(num_states)) throw ValidationError("MDP terminal table size mismatch");
  for (int s : next_state)
    if (s < 0 || s >= num_states) throw ValidationError("MDP successor out of range");
  for (double r : reward)
    if (!std::isfinite(r)) throw ValidationError("MDP reward is not finite");
  if (time_limit < 1) throw ValidationError("MDP time limit must be >= 1");
  if (start_states.empty()) throw ValidationError("MDP needs a start state");
  for (int s : start_states)
    if (s < 0 || s >= num_states) throw ValidationError("MDP start state out of range");
}

TabularMDP build_gridworld(const GridMap& map, int time_limit, double goal_reward) {
  map.validate();
  if (time_limit < 1) throw ValidationError("time limit must be >= 1");
  if (!std::isfinite(goal_reward)) throw ValidationError("goal reward must be finite");

  TabularMDP mdp;
  mdp.num_actions = 4;
  mdp.time_limit = time_limit;
  mdp.grid_rows = map.rows;
  mdp.grid_cols = map.cols;
  mdp.state_of_cell.assign(map.cells.size(), -1);
  for (int row = 0; row < map.rows; ++row) {
    for (int col = 0; col < map.cols; ++col) {
      if (map.at(row, col) == CellKind::wall) continue;
      mdp.state_of_cell[static_cast<std::size_t>(row * map.cols + col)] = mdp.num_states++;
      mdp.cell_of_state.emplace_back(row, col);
    }
  }

  constexpr int drow[4] = {-1, 1, 0, 0};
  constexpr int dcol[4] = {0, 0, -1, 1};
  const auto pairs = static_cast<std::size_t>(mdp.num_pairs());
  mdp.next_state.resize(pairs);
  mdp.reward.assign(pairs, 0.0);
  mdp.terminal.assign(static_cast<std::size_t>(mdp.num_states), 0);
  for (int s = 0; s < mdp.num_states; ++s) {
    const auto [row, col] = mdp.cell_of_state[static_cast<std::size_t>(s)];
    const bool is_goal = map.at(row, col) == CellKind::goal;
    if (is_goal) mdp.terminal[static_cast<std::size_t>(s)] = 1;
    if (map.at(row, col) == CellKind::start) mdp.start_states.push_back(s);
    for (int a = 0; a < 4; ++a) {
      const auto idx = static_cast<std::size_t>(s * 4 + a);
      if (is_goal) {
        mdp.next_state[idx] = s;
        continue;
      }
      const int nr = row + drow[a];
      const int nc = col + dcol[a];
      const int next = map.walkable(nr, nc) ? mdp.state_of_cell[static_cast<std::size_t>(nr * map.cols + nc)] : s;
      mdp.next_state[idx] = next;
      const auto [gr, gc] = mdp.cell_of_state[static_cast<std::size_t>(next)];
      if (map.at(gr, gc) == CellKind::goal) mdp.reward[idx] = goal_reward;
    }
  }
  mdp.validate();
  return mdp;
}

TabularStep step_tabular(const TabularMDP& mdp, int s, int a) {
  if (s < 0 || s >= mdp.num_states) throw ValidationError("state index out of range");
  if (a < 0 || a >= mdp.num_actions) throw ValidationError("action index out of range");
  if (mdp.is_terminal(s)) return {s, 0.0, true};
  const int next = mdp.next(s, a);
  return {next, mdp.r(s, a), mdp.is_terminal(next)};
}

Eigen::VectorXd encode_state(int s, const TabularMDP& mdp) {
  if (s < 0 || s >= mdp.num_states) throw ValidationError("state index out of range");
  Eigen::VectorXd v = Eigen::VectorXd::Zero(mdp.num_states);
  v[s] = 1.0;
  return v;
}

Eigen::VectorXd encode_action(int a, const TabularMDP& mdp) {
  if (a < 0 || a >= mdp.num_actions) throw ValidationError("action index out of range");
  Eigen::VectorXd v = Eigen::VectorXd::Zero(mdp.num_actions);
  v[a] = 1.0;
  return v;
}

Eigen::VectorXd one_hot(int s, int a, const TabularMDP& mdp) {
  Eigen::VectorXd v(mdp.num_states + mdp.num_actions);
  v << encode_state(s, mdp), encode_action(a, mdp);
  return v;
}

int decode_one_hot(const Eigen::VectorXd& v) {
  Eigen::Index idx = 0;
  v.maxCoeff(&idx);
  return static_cast<int>(idx);
}

std::vector<int> grid_bfs(const GridMap& map, int row, int col) {
  std::vector<int> dist(map.cells.size(), -1);
  if (!map.walkable(row, col)) return dist;
  std::deque<std::pair<int, int>> queue{{row, col}};
  dist[static_cast<std::size_t>(row * map.cols + col)] = 0;
  constexpr int drow[4] = {-1, 1, 0, 0};
  constexpr int dcol[4] = {0, 0, -1, 1};
  while (!queue.empty()) {
    const auto [r, c] = queue.front();
    queue.pop_front();
    const int d = dist[static_cast<std::size_t>(r * map.cols + c)];
    for (int k = 0; k < 4; ++k) {
      const int nr = r + drow[k];
      const int nc = c + dcol[k];
      if (!map.walkable(nr, nc)) continue;
      auto& slot = dist[static_cast<std::size_t>(nr * map.cols + nc)];
      if (slot >= 0) continue;
      slot = d + 1;
      queue.emplace_back(nr, nc);
    }
  }
  return dist;
}

std::vector<int> shortest_path(const TabularMDP& mdp, int from, int to) {
  std::vector<int> parent(static_cast<std::size_t>(mdp.num_states), -1);
  std::vector<char> seen(static_cast<std::size_t>(mdp.num_states), 0);
  std::deque<int> queue{from};
  seen[static_cast<std::size_t>(from)] = 1;
  while (!queue.empty()) {
    const int s = queue.front();
    queue.pop_front();
    if (s == to) break;
    for (int a = 0; a < mdp.num_actions; ++a) {
      const int n = mdp.effective_next(s, a);
      if (seen[static_cast<std::size_t>(n)]) continue;
      seen[static_cast<std::size_t>(n)] = 1;
      parent[static_cast<std::size_t>(n)] = s;
      queue.push_back(n);
    }
  }
  if (!seen[static_cast<std::size_t>(to)]) return {};
  std::vector<int> path{to};
  while (path.back() != from) path.push_back(parent[static_cast<std::size_t>(path.back())]);
  std::reverse(path.begin(), path.end());
  return path;
}

Eigen::VectorXd ContinuousEnv::clip_action(const Eigen::VectorXd& a) const {
  return a.cwiseMax(action_low).cwiseMin(action_high);
}

namespace {

double rollout_return(const ContinuousEnv& env, Rng* rng) {
  Eigen::VectorXd state = env.start_state;
  double total = 0.0;
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int t = 0; t < env.time_limit; ++t) {
    Eigen::VectorXd action(env.action_dim);
    if (rng) {
      for (int i = 0; i < env.action_dim; ++i)
        action[i] = env.action_low[i] + unit(*rng) * (env.action_high[i] - env.action_low[i]);
    } else {
      action = expert_action(env, state);
    }
    auto result = step(env, state, action);
    total += result.reward;
    state = std::move(result.next_state);
  }
  return total;
}

}  // namespace

ContinuousEnv build_pointmass(const PointMassConfig& config) {
  if (!(config.dt > 0.0)) throw ValidationError("point-mass dt must be positive");
  if (!(config.max_speed > 0.0)) throw ValidationError("point-mass max speed must be positive");
  if (config.time_limit < 1) throw ValidationError("time limit must be >= 1");

  ContinuousEnv env;
  env.kind = "pointmass";
  env.state_dim = 4;
  env.action_dim = 2;
  env.action_low = Eigen::VectorXd::Constant(2, -1.0);
  env.action_high = Eigen::VectorXd::Constant(2, 1.0);
  env.dt = config.dt;
  env.max_speed = config.max_speed;
  env.reward_tag = "neg_goal_distance";
  env.goal = config.goal;
  env.time_limit = config.time_limit;
  env.start_state = Eigen::VectorXd::Zero(4);
  env.start_state.head<2>() = config.start;
  env.kp = config.kp;
  env.kd = config.kd;

  env.reference_expert_return = rollout_return(env, nullptr);
  Rng rng = make_rng(0, "pointmass-reference");
  constexpr int kReferenceEpisodes = 100;
  double acc = 0.0;
  for (int e = 0; e < kReferenceEpisodes; ++e) acc += rollout_return(env, &rng);
  env.reference_random_return = acc / kReferenceEpisodes;
  return env;
}

ContinuousStep step(const ContinuousEnv& env, const Eigen::VectorXd& state, const Eigen::VectorXd& action) {
  if (state.size() != env.state_dim || action.size() != env.action_dim)
    throw ValidationError("state/action dimension mismatch for " + env.kind);
  const Eigen::VectorXd a = env.clip_action(action);
  Eigen::VectorXd next(4);
  next.head<2>() = state.head<2>() + state.tail<2>() * env.dt;
  next.tail<2>() = (state.tail<2>() + a * env.dt).cwiseMax(-env.max_speed).cwiseMin(env.max_speed);
  const double reward = -(next.head<2>() - env.goal).norm();
  return {std::move(next), reward};
}

Eigen::VectorXd expert_action(const ContinuousEnv& env, const Eigen::VectorXd& state, double gain_scale) {
  const Eigen::VectorXd error = env.goal - state.head<2>();
  const Eigen::VectorXd raw = gain_scale * (env.kp * error - env.kd * state.tail<2>());
  return env.clip_action(raw);
}

double goal_distance(const ContinuousEnv& env, const Eigen::VectorXd& state) {
  return (state.head<2>() - env.goal).norm();
}

}  // namespace ploff::env
