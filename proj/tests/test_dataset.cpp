#include "ploff/dataset.hpp"
#include "ploff/container.hpp"
#include "ploff/errors.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>

using namespace ploff;
using namespace ploff::data;

namespace {

std::filesystem::path temp_path(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / "ploff_test_dataset";
  std::filesystem::create_directories(dir);
  return dir / name;
}

TransitionDataset with_rewards(std::vector<double> rewards) {
  TransitionDataset d;
  d.env_id = "toy";
  d.state_dim = 1;
  d.action_dim = 1;
  for (std::size_t i = 0; i < rewards.size(); ++i) {
    Transition t;
    t.s = Eigen::VectorXd::Constant(1, static_cast<double>(i));
    t.a = Eigen::VectorXd::Zero(1);
    t.r = rewards[i];
    t.s_next = t.s;
    d.transitions.push_back(t);
  }
  return d;
}

// Random dataset whose payload is exactly representable in float32.
TransitionDataset random_dataset(Rng& rng, int n) {
  std::uniform_int_distribution<int> dim(1, 5);
  std::normal_distribution<float> normal(0.0f, 3.0f);
  TransitionDataset d;
  d.env_id = "random";
  d.state_dim = dim(rng);
  d.action_dim = dim(rng);
  auto vec = [&](int k) {
    Eigen::VectorXd v(k);
    for (int i = 0; i < k; ++i) v[i] = static_cast<double>(normal(rng));
    return v;
  };
  for (int i = 0; i < n; ++i) {
    Transition t{vec(d.state_dim), vec(d.action_dim), static_cast<double>(normal(rng)), vec(d.state_dim),
                 (rng() & 3) == 0};
    d.transitions.push_back(t);
  }
  d.reward_min = -1.5;
  d.reward_max = 2.25;
  d.meta = {{"episodes", 3}};
  return d;
}

env::TabularMDP single_state_mdp() {
  env::TabularMDP mdp;
  mdp.num_states = 1;
  mdp.num_actions = 3;
  mdp.next_state = {0, 0, 0};
  mdp.reward = {0.0, 0.0, 0.0};
  mdp.terminal = {0};
  mdp.time_limit = 10;
  mdp.start_states = {0};
  return mdp;
}

}  // namespace

TEST(QLearning, DatasetSizeBoundedByEpisodesTimesHorizon) {
  auto map = env::GridMap::load(std::filesystem::path(PLOFF_SOURCE_DIR) / "assets" / "two_room.txt");
  auto mdp = env::build_gridworld(map, 50, 1.0);
  QLearningConfig cfg;
  cfg.episodes = 500;
  cfg.epsilon = 0.1;
  cfg.gamma = 0.99;
  auto d = collect_qlearning_dataset(mdp, cfg);
  EXPECT_LE(d.n(), 500u * 50u);
  EXPECT_GT(d.n(), 0u);
  EXPECT_EQ(d.state_dim, mdp.num_states);
  EXPECT_EQ(d.action_dim, 4);
  EXPECT_FALSE(d.scaled);
  for (const auto& t : d.transitions) {
    EXPECT_EQ(t.s.sum(), 1.0);
    EXPECT_EQ(t.a.sum(), 1.0);
  }
}

TEST(QLearning, FullyRandomOnSingleStateDiffersOnlyInAction) {
  QLearningConfig cfg;
  cfg.episodes = 5;
  cfg.epsilon = 1.0;
  auto d = collect_qlearning_dataset(single_state_mdp(), cfg);
  ASSERT_EQ(d.n(), 50u);
  for (const auto& t : d.transitions) {
    EXPECT_EQ(t.s, d.transitions[0].s);
    EXPECT_EQ(t.s_next, d.transitions[0].s_next);
    EXPECT_EQ(t.r, 0.0);
    EXPECT_FALSE(t.done);
  }
}

TEST(QLearning, SameSeedSameBytes) {
  auto mdp = env::build_gridworld(env::GridMap::parse("S...\n....\n...G\n"), 20, 1.0);
  QLearningConfig cfg;
  cfg.episodes = 30;
  cfg.seed = 7;
  auto a = collect_qlearning_dataset(mdp, cfg);
  auto b = collect_qlearning_dataset(mdp, cfg);
  EXPECT_TRUE(a == b);
  EXPECT_EQ(encode_dataset(a), encode_dataset(b));
}

TEST(QLearning, RejectsBadConfig) {
  auto mdp = single_state_mdp();
  QLearningConfig cfg;
  cfg.episodes = 0;
  EXPECT_THROW(collect_qlearning_dataset(mdp, cfg), ValidationError);
  cfg.episodes = 1;
  cfg.epsilon = 1.5;
  EXPECT_THROW(collect_qlearning_dataset(mdp, cfg), ValidationError);
  cfg.epsilon = 0.1;
  cfg.gamma = 1.0;
  EXPECT_THROW(collect_qlearning_dataset(mdp, cfg), ValidationError);
}

TEST(Scripted, RandomPolicyCount) {
  auto env = env::build_pointmass();
  auto d = collect_scripted_dataset(env, ScriptedPolicy::random, 0.0, 10, 0);
  EXPECT_EQ(d.n(), 1000u);
  for (const auto& t : d.transitions) {
    EXPECT_LE(t.a.cwiseAbs().maxCoeff(), 1.0);
    EXPECT_FALSE(t.done);
  }
}

TEST(Scripted, NoiselessExpertApproachesGoalMonotonically) {
  auto env = env::build_pointmass();
  auto d = collect_scripted_dataset(env, ScriptedPolicy::expert, 0.0, 3, 0);
  ASSERT_EQ(d.n(), 300u);
  for (int e = 0; e < 3; ++e) {
    // Oracle: replay the PD law with plain arithmetic.
    double x = 0, y = 0, vx = 0, vy = 0;
    double prev = std::hypot(x - 1.0, y - 1.0);
    for (int t = 0; t < 100; ++t) {
      const auto& tr = d.transitions[static_cast<std::size_t>(e * 100 + t)];
      double ax = std::clamp(4.0 * (1.0 - x) - 4.5 * vx, -1.0, 1.0);
      double ay = std::clamp(4.0 * (1.0 - y) - 4.5 * vy, -1.0, 1.0);
      EXPECT_NEAR(tr.a[0], ax, 1e-12);
      EXPECT_NEAR(tr.a[1], ay, 1e-12);
      x += vx * 0.05;
      y += vy * 0.05;
      vx = std::clamp(vx + ax * 0.05, -2.0, 2.0);
      vy = std::clamp(vy + ay * 0.05, -2.0, 2.0);
      double dist = std::hypot(x - 1.0, y - 1.0);
      EXPECT_LE(dist, prev + 1e-12);
      EXPECT_NEAR(-tr.r, dist, 1e-12);
      prev = dist;
    }
  }
}

TEST(Scripted, MixtureIsSumOfParts) {
  auto env = env::build_pointmass();
  auto expert = collect_scripted_dataset(env, ScriptedPolicy::expert, 0.1, 4, 1);
  auto random = collect_scripted_dataset(env, ScriptedPolicy::random, 0.1, 4, 1);
  auto mix = collect_scripted_dataset(env, ScriptedPolicy::mixture, 0.1, 4, 1);
  EXPECT_EQ(mix.n(), expert.n() + random.n());
  EXPECT_EQ(mix.meta.at("episodes").get<int>(), 8);
}

TEST(Scripted, UnknownTagRejected) { EXPECT_THROW(parse_policy("heroic"), ValidationError); }

TEST(Scaling, AffineMap) {
  auto s = scale_rewards(with_rewards({-2.0, 0.0, 2.0}));
  EXPECT_TRUE(s.scaled);
  EXPECT_EQ(s.transitions[0].r, 0.0);
  EXPECT_EQ(s.transitions[1].r, 0.5);
  EXPECT_EQ(s.transitions[2].r, 1.0);
  EXPECT_EQ(s.reward_min, -2.0);
  EXPECT_EQ(s.reward_max, 2.0);
}

TEST(Scaling, UnitRangeUnchanged) {
  auto s = scale_rewards(with_rewards({0.0, 1.0, 1.0, 0.0}));
  EXPECT_TRUE(s.scaled);
  EXPECT_EQ(s.transitions[1].r, 1.0);
  EXPECT_EQ(s.transitions[3].r, 0.0);
}

TEST(Scaling, RoundTripAndExtremes) {
  Rng rng(3);
  std::uniform_real_distribution<double> u(-1e3, 1e3);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> raw(40);
    for (auto& r : raw) r = u(rng);
    auto s = scale_rewards(with_rewards(raw));
    double lo = 2, hi = -1;
    for (const auto& t : s.transitions) {
      lo = std::min(lo, t.r);
      hi = std::max(hi, t.r);
    }
    EXPECT_EQ(lo, 0.0);
    EXPECT_EQ(hi, 1.0);
    auto back = unscale_rewards(s);
    for (std::size_t i = 0; i < raw.size(); ++i)
      EXPECT_LE(std::abs(back.transitions[i].r - raw[i]), 1e-12 * std::max(1.0, std::abs(raw[i])));
  }
}

TEST(Scaling, Guards) {
  EXPECT_THROW(scale_rewards(with_rewards({1.0, 1.0})), ValidationError);
  auto s = scale_rewards(with_rewards({0.0, 3.0}));
  EXPECT_THROW(scale_rewards(s), ValidationError);
}

TEST(Sampling, PairBatchShapes) {
  auto d = with_rewards(std::vector<double>(20, 0.0));
  Rng rng(0);
  auto p = sample_pair_batch(d, 256, rng);
  EXPECT_EQ(p.first.size(), 256u);
  EXPECT_EQ(p.second.size(), 256u);
  EXPECT_NE(p.first, p.second);
}

TEST(Sampling, SingletonDataset) {
  auto d = with_rewards({0.5});
  Rng rng(0);
  auto p = sample_pair_batch(d, 32, rng);
  for (std::size_t i = 0; i < 32; ++i) {
    EXPECT_EQ(p.first[i], 0u);
    EXPECT_EQ(p.second[i], 0u);
  }
}

TEST(Sampling, ReproducibleWithSeed) {
  auto d = with_rewards(std::vector<double>(100, 0.0));
  Rng a = make_rng(11, "batch"), b = make_rng(11, "batch");
  for (int i = 0; i < 5; ++i) {
    auto pa = sample_pair_batch(d, 64, a);
    auto pb = sample_pair_batch(d, 64, b);
    EXPECT_EQ(pa.first, pb.first);
    EXPECT_EQ(pa.second, pb.second);
  }
}

TEST(Sampling, Uniformity) {
  Rng rng(5);
  auto idx = sample_indices(10, 100000, rng);
  std::vector<int> counts(10, 0);
  for (auto i : idx) ++counts[i];
  for (int c : counts) {
    EXPECT_GE(c, 9500);
    EXPECT_LE(c, 10500);
  }
}

TEST(Sampling, RejectsEmpty) {
  Rng rng(0);
  EXPECT_THROW(sample_indices(0, 4, rng), ValidationError);
  EXPECT_THROW(sample_indices(4, 0, rng), ValidationError);
}

TEST(Storage, RoundTripRandomDatasets) {
  Rng rng(17);
  for (int trial = 0; trial < 25; ++trial) {
    auto d = random_dataset(rng, 1 + trial * 7);
    auto path = temp_path("rt.plds");
    save_dataset(d, path);
    auto back = load_dataset(path);
    EXPECT_TRUE(back == d) << "trial " << trial;
  }
}

TEST(Storage, HeaderLayout) {
  auto d = scale_rewards(with_rewards({-1.0, 1.0}));
  auto bytes = encode_dataset(d);
  ASSERT_EQ(bytes.substr(0, 5), "PLDS1");
  auto eol = bytes.find('\n', 5);
  auto header = nlohmann::json::parse(bytes.substr(5, eol - 5));
  EXPECT_EQ(header.at("n").get<int>(), 2);
  EXPECT_EQ(header.at("state_dim").get<int>(), 1);
  EXPECT_EQ(header.at("scaled").get<bool>(), true);
  // [s | a | r | s_next | done] float32 records.
  EXPECT_EQ(bytes.size() - eol - 1, 2u * 5u * 4u);
  float r1;
  std::memcpy(&r1, bytes.data() + eol + 1 + 5 * 4 + 2 * 4, 4);
  EXPECT_EQ(r1, 1.0f);
}

TEST(Storage, CorruptMagicRejected) {
  auto d = with_rewards({0.0, 1.0});
  auto bytes = encode_dataset(d);
  bytes[0] = 'X';
  auto path = temp_path("bad_magic.plds");
  io::write_file(path, bytes);
  EXPECT_THROW(load_dataset(path), ValidationError);
}

TEST(Storage, CountMismatchRejected) {
  auto d = with_rewards({0.0, 1.0, 2.0});
  auto bytes = encode_dataset(d);
  auto path = temp_path("short.plds");
  io::write_file(path, bytes.substr(0, bytes.size() - 4));
  EXPECT_THROW(load_dataset(path), ValidationError);

  auto eol = bytes.find('\n', 5);
  auto header = nlohmann::json::parse(bytes.substr(5, eol - 5));
  header["n"] = 4;
  io::write_file(path, bytes.substr(0, 5) + header.dump() + bytes.substr(eol));
  EXPECT_THROW(load_dataset(path), ValidationError);
}

TEST(Storage, VersionMismatchRejected) {
  auto bytes = encode_dataset(with_rewards({0.0, 1.0}));
  auto eol = bytes.find('\n', 5);
  auto header = nlohmann::json::parse(bytes.substr(5, eol - 5));
  header["version"] = 99;
  auto path = temp_path("version.plds");
  io::write_file(path, bytes.substr(0, 5) + header.dump() + bytes.substr(eol));
  EXPECT_THROW(load_dataset(path), ValidationError);
}

TEST(BehaviorReturn, UsesRawRewards) {
  auto d = with_rewards({-1.0, -3.0, 0.0, -2.0});
  d.meta = {{"episodes", 2}};
  auto s = scale_rewards(d);
  EXPECT_NEAR(behavior_mean_return(s), -3.0, 1e-12);
  EXPECT_NEAR(behavior_mean_return(d), -3.0, 1e-12);
}
