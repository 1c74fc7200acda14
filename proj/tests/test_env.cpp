#include "ploff/env.hpp"
#include "ploff/errors.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <deque>
#include <set>

using namespace ploff;
using namespace ploff::env;

namespace {

const char* kOpenRoom =
    "S....\n"
    ".....\n"
    ".....\n"
    ".....\n"
    "....G\n";

// Interior wall row with a single gap in the last column.
const char* kWallRow =
    "#######\n"
    "#S....#\n"
    "#####.#\n"
    "#....G#\n"
    "#######\n";

GridMap two_room() { return GridMap::load(std::filesystem::path(PLOFF_SOURCE_DIR) / "assets" / "two_room.txt"); }

// Independent BFS over grid cells, written against the raw character map.
std::vector<int> bfs_cells(const GridMap& m, int r0, int c0) {
  std::vector<int> dist(static_cast<std::size_t>(m.rows * m.cols), -1);
  std::deque<std::pair<int, int>> q{{r0, c0}};
  dist[static_cast<std::size_t>(r0 * m.cols + c0)] = 0;
  while (!q.empty()) {
    auto [r, c] = q.front();
    q.pop_front();
    const int dr[] = {1, -1, 0, 0}, dc[] = {0, 0, 1, -1};
    for (int i = 0; i < 4; ++i) {
      int nr = r + dr[i], nc = c + dc[i];
      if (nr < 0 || nc < 0 || nr >= m.rows || nc >= m.cols) continue;
      if (m.at(nr, nc) == CellKind::wall) continue;
      auto& slot = dist[static_cast<std::size_t>(nr * m.cols + nc)];
      if (slot >= 0) continue;
      slot = dist[static_cast<std::size_t>(r * m.cols + c)] + 1;
      q.emplace_back(nr, nc);
    }
  }
  return dist;
}

}  // namespace

TEST(GridMap, ParsesOpenRoom) {
  auto m = GridMap::parse(kOpenRoom);
  EXPECT_EQ(m.rows, 5);
  EXPECT_EQ(m.cols, 5);
  EXPECT_EQ(m.at(4, 4), CellKind::goal);
  EXPECT_EQ(m.at(0, 0), CellKind::start);
}

TEST(GridMap, RejectsMalformedMaps) {
  EXPECT_THROW(GridMap::parse("S..\n..\n").validate(), ValidationError);
  EXPECT_THROW(build_gridworld(GridMap::parse("S..\n...\n"), 50, 1.0), ValidationError);      // no goal
  EXPECT_THROW(build_gridworld(GridMap::parse("SG.\n..G\n"), 50, 1.0), ValidationError);      // two goals
  EXPECT_THROW(build_gridworld(GridMap::parse("..G\n...\n"), 50, 1.0), ValidationError);      // no start
  EXPECT_THROW(GridMap::parse("S.x\n..G\n"), ValidationError);
  EXPECT_THROW(GridMap::parse(""), ValidationError);
}

TEST(Gridworld, OpenRoomHas25States) {
  auto mdp = build_gridworld(GridMap::parse(kOpenRoom), 50, 1.0);
  EXPECT_EQ(mdp.num_states, 25);
  EXPECT_EQ(mdp.num_actions, 4);
  int terminals = 0;
  for (int s = 0; s < mdp.num_states; ++s) terminals += mdp.is_terminal(s);
  EXPECT_EQ(terminals, 1);
  EXPECT_EQ(mdp.time_limit, 50);
}

TEST(Gridworld, MovesIntoWallsAreNoOps) {
  for (const char* text : {kOpenRoom, kWallRow}) {
    auto map = GridMap::parse(text);
    auto mdp = build_gridworld(map, 50, 1.0);
    const int dr[] = {-1, 1, 0, 0}, dc[] = {0, 0, -1, 1};
    int checked = 0;
    for (int s = 0; s < mdp.num_states; ++s) {
      if (mdp.is_terminal(s)) continue;
      auto [r, c] = mdp.cell_of_state[static_cast<std::size_t>(s)];
      for (int a = 0; a < 4; ++a) {
        int nr = r + dr[a], nc = c + dc[a];
        bool blocked = nr < 0 || nc < 0 || nr >= map.rows || nc >= map.cols || map.at(nr, nc) == CellKind::wall;
        if (!blocked) continue;
        EXPECT_EQ(step_tabular(mdp, s, a).next_state, s);
        ++checked;
      }
    }
    EXPECT_GT(checked, 0);
  }
}

TEST(Gridworld, InteriorWallBlocksDownMove) {
  auto map = GridMap::parse(kWallRow);
  auto mdp = build_gridworld(map, 50, 1.0);
  int s = mdp.state_of_cell[static_cast<std::size_t>(1 * map.cols + 2)];
  EXPECT_EQ(step_tabular(mdp, s, down).next_state, s);
  int gap = mdp.state_of_cell[static_cast<std::size_t>(1 * map.cols + 5)];
  EXPECT_EQ(step_tabular(mdp, gap, down).next_state, mdp.state_of_cell[static_cast<std::size_t>(2 * map.cols + 5)]);
}

TEST(Gridworld, StepSemantics) {
  auto map = GridMap::parse(kOpenRoom);
  auto mdp = build_gridworld(map, 50, 1.0);
  const int goal = mdp.goal_state();
  for (int a = 0; a < 4; ++a) {
    auto t = step_tabular(mdp, goal, a);
    EXPECT_EQ(t.next_state, goal);
    EXPECT_EQ(t.reward, 0.0);
    EXPECT_TRUE(t.done);
  }
  auto t = step_tabular(mdp, 0, right);
  EXPECT_EQ(t.next_state, 1);
  EXPECT_EQ(t.reward, 0.0);
  EXPECT_FALSE(t.done);

  int left_of_goal = mdp.state_of_cell[static_cast<std::size_t>(4 * 5 + 3)];
  t = step_tabular(mdp, left_of_goal, right);
  EXPECT_EQ(t.next_state, goal);
  EXPECT_EQ(t.reward, 1.0);
  EXPECT_TRUE(t.done);

  EXPECT_THROW(step_tabular(mdp, -1, 0), ValidationError);
  EXPECT_THROW(step_tabular(mdp, 0, 4), ValidationError);
}

TEST(Gridworld, TwoRoomShortestPathUsesDoorway) {
  auto map = two_room();
  auto mdp = build_gridworld(map, 50, 1.0);
  const int start = mdp.start_states.front();
  const int goal = mdp.goal_state();
  auto path = shortest_path(mdp, start, goal);
  ASSERT_FALSE(path.empty());
  EXPECT_EQ(path.front(), start);
  EXPECT_EQ(path.back(), goal);

  auto [gr, gc] = mdp.cell_of_state[static_cast<std::size_t>(goal)];
  auto [sr, sc] = mdp.cell_of_state[static_cast<std::size_t>(start)];
  auto oracle = bfs_cells(map, gr, gc);
  EXPECT_EQ(static_cast<int>(path.size()) - 1, oracle[static_cast<std::size_t>(sr * map.cols + sc)]);

  // The dividing wall column has exactly one gap; the path must go through it.
  int wall_col = -1;
  for (int c = 1; c + 1 < map.cols && wall_col < 0; ++c) {
    int walls = 0;
    for (int r = 1; r + 1 < map.rows; ++r) walls += map.at(r, c) == CellKind::wall;
    if (walls == map.rows - 3) wall_col = c;
  }
  ASSERT_GE(wall_col, 0);
  int door_row = -1;
  for (int r = 1; r + 1 < map.rows; ++r)
    if (map.at(r, wall_col) != CellKind::wall) door_row = r;
  int door = mdp.state_of_cell[static_cast<std::size_t>(door_row * map.cols + wall_col)];
  EXPECT_NE(std::find(path.begin(), path.end(), door), path.end());

  for (std::size_t i = 1; i < path.size(); ++i) {
    bool adjacent = false;
    for (int a = 0; a < 4; ++a) adjacent |= mdp.next(path[i - 1], a) == path[i];
    EXPECT_TRUE(adjacent);
  }
}

TEST(Gridworld, GridBfsMatchesIndependentOracle) {
  auto map = two_room();
  for (auto [r, c] : std::vector<std::pair<int, int>>{{1, 1}, {6, 10}, {4, 6}}) {
    EXPECT_EQ(grid_bfs(map, r, c), bfs_cells(map, r, c));
  }
}

TEST(OneHot, Encoding) {
  TabularMDP mdp;
  mdp.num_states = 3;
  mdp.num_actions = 2;
  Eigen::VectorXd v = one_hot(0, 0, mdp);
  Eigen::VectorXd expect(5);
  expect << 1, 0, 0, 1, 0;
  EXPECT_EQ(v, expect);

  std::set<std::vector<double>> seen;
  for (int s = 0; s < 3; ++s)
    for (int a = 0; a < 2; ++a) {
      Eigen::VectorXd x = one_hot(s, a, mdp);
      EXPECT_EQ(x.sum(), 2.0);
      EXPECT_EQ((x.array() == 1.0).count(), 2);
      seen.insert(std::vector<double>(x.data(), x.data() + x.size()));
      EXPECT_EQ(decode_one_hot(encode_state(s, mdp)), s);
      EXPECT_EQ(decode_one_hot(encode_action(a, mdp)), a);
    }
  EXPECT_EQ(seen.size(), 6u);
  EXPECT_DOUBLE_EQ((one_hot(0, 0, mdp) - one_hot(2, 1, mdp)).norm(), 2.0);
  EXPECT_THROW(one_hot(3, 0, mdp), ValidationError);
}

TEST(PointMass, ZeroActionFromRestIsStationary) {
  auto env = build_pointmass();
  Eigen::VectorXd s = env.start_state;
  auto out = step(env, s, Eigen::VectorXd::Zero(2));
  EXPECT_EQ(out.next_state, s);
}

TEST(PointMass, RewardZeroAtGoal) {
  auto env = build_pointmass();
  Eigen::VectorXd s(4);
  s << 1.0, 1.0, 0.0, 0.0;
  EXPECT_EQ(step(env, s, Eigen::VectorXd::Zero(2)).reward, 0.0);
}

TEST(PointMass, ClipsActions) {
  auto env = build_pointmass();
  Eigen::VectorXd s = env.start_state;
  Eigen::VectorXd big(2), unit(2);
  big << 7.0, -3.0;
  unit << 1.0, -1.0;
  auto a = step(env, s, big);
  auto b = step(env, s, unit);
  EXPECT_EQ(a.next_state, b.next_state);
  EXPECT_EQ(a.reward, b.reward);
}

TEST(PointMass, FullThrustReturnMatchesScalarRollout) {
  auto env = build_pointmass();
  Eigen::VectorXd a = Eigen::VectorXd::Constant(2, 1.0);
  Eigen::VectorXd s = env.start_state;
  double ret = 0.0;
  for (int t = 0; t < env.time_limit; ++t) {
    auto out = step(env, s, a);
    ret += out.reward;
    s = out.next_state;
  }
  // Diagonal motion: track one coordinate with plain scalars.
  double x = 0.0, v = 0.0, oracle = 0.0;
  for (int t = 0; t < 100; ++t) {
    x += v * 0.05;
    v = std::min(v + 0.05, 2.0);
    oracle -= std::sqrt(2.0) * std::abs(x - 1.0);
  }
  EXPECT_NEAR(ret, oracle, 1e-9);
}

TEST(PointMass, StepIsDeterministic) {
  auto env = build_pointmass();
  Eigen::VectorXd s(4), a(2);
  s << 0.3, -0.2, 0.7, 0.1;
  a << 0.4, -0.9;
  auto first = step(env, s, a);
  for (int i = 0; i < 1000; ++i) {
    auto again = step(env, s, a);
    ASSERT_EQ(0, std::memcmp(again.next_state.data(), first.next_state.data(), sizeof(double) * 4));
    ASSERT_EQ(0, std::memcmp(&again.reward, &first.reward, sizeof(double)));
  }
}

TEST(PointMass, RejectsBadConfig) {
  PointMassConfig cfg;
  cfg.dt = 0.0;
  EXPECT_THROW(build_pointmass(cfg), ValidationError);
  auto env = build_pointmass();
  EXPECT_THROW(step(env, Eigen::VectorXd::Zero(3), Eigen::VectorXd::Zero(2)), ValidationError);
}

TEST(PointMass, ReferenceReturnsOrdered) {
  auto env = build_pointmass();
  EXPECT_GT(env.reference_expert_return, env.reference_random_return);
  EXPECT_LE(env.reference_expert_return, 0.0);
}
