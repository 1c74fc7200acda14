#include "ploff/dataset.hpp"

#include "ploff/container.hpp"
#include "ploff/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace ploff::data {

void TransitionDataset::validate() const {
  if (transitions.empty()) throw ValidationError("dataset must contain at least one transition");
  if (state_dim <= 0 || action_dim <= 0) throw ValidationError("dataset dimensions must be positive");
  for (const auto& t : transitions) {
    if (t.s.size() != state_dim || t.s_next.size() != state_dim || t.a.size() != action_dim)
      throw ValidationError("transition dimensions do not match the dataset header");
    if (!std::isfinite(t.r)) throw ValidationError("transition reward is not finite");
    if (scaled && (t.r < 0.0 || t.r > 1.0)) throw ValidationError("scaled reward outside [0, 1]");
  }
  if (scaled && !(reward_min < reward_max)) throw ValidationError("scaled dataset needs reward_min < reward_max");
}

bool operator==(const TransitionDataset& lhs, const TransitionDataset& rhs) {
  if (lhs.env_id != rhs.env_id || lhs.state_dim != rhs.state_dim || lhs.action_dim != rhs.action_dim ||
      lhs.reward_min != rhs.reward_min || lhs.reward_max != rhs.reward_max || lhs.scaled != rhs.scaled ||
      lhs.n() != rhs.n())
    return false;
  for (std::size_t i = 0; i < lhs.n(); ++i) {
    const auto& a = lhs.transitions[i];
    const auto& b = rhs.transitions[i];
    if (a.s != b.s || a.a != b.a || a.r != b.r || a.s_next != b.s_next || a.done != b.done) return false;
  }
  return true;
}

namespace {

void record_reward_range(TransitionDataset& d) {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  for (const auto& t : d.transitions) {
    lo = std::min(lo, t.r);
    hi = std::max(hi, t.r);
  }
  d.reward_min = lo;
  d.reward_max = hi;
}

int greedy_action(const std::vector<double>& q, int s, int num_actions, Rng& rng) {
  const double* row = q.data() + static_cast<std::ptrdiff_t>(s) * num_actions;
  const double best = *std::max_element(row, row + num_actions);
  int ties = 0;
  for (int a = 0; a < num_actions; ++a) ties += row[a] == best ? 1 : 0;
  int pick = std::uniform_int_distribution<int>(0, ties - 1)(rng);
  for (int a = 0; a < num_actions; ++a) {
    if (row[a] != best) continue;
    if (pick-- == 0) return a;
  }
  return 0;
}

}  // namespace

TransitionDataset collect_qlearning_dataset(const env::TabularMDP& mdp, const QLearningConfig& config,
                                            const std::string& env_id) {
  mdp.validate();
  if (config.episodes <= 0) throw ValidationError("number of episodes must be positive");
  if (!(config.epsilon >= 0.0 && config.epsilon <= 1.0)) throw ValidationError("epsilon must lie in [0, 1]");
  if (!(config.gamma >= 0.0 && config.gamma < 1.0)) throw ValidationError("gamma must lie in [0, 1)");
  if (!(config.learning_rate > 0.0 && config.learning_rate <= 1.0))
    throw ValidationError("learning rate must lie in (0, 1]");

  Rng rng = make_rng(config.seed, "data");
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_int_distribution<int> random_action(0, mdp.num_actions - 1);
  std::uniform_int_distribution<std::size_t> random_start(0, mdp.start_states.size() - 1);
  std::vector<double> q(static_cast<std::size_t>(mdp.num_pairs()), 0.0);

  TransitionDataset d;
  d.env_id = env_id;
  d.state_dim = mdp.num_states;
  d.action_dim = mdp.num_actions;
  for (int episode = 0; episode < config.episodes; ++episode) {
    int s = mdp.start_states[random_start(rng)];
    for (int t = 0; t < mdp.time_limit; ++t) {
      const int a = unit(rng) < config.epsilon ? random_action(rng) : greedy_action(q, s, mdp.num_actions, rng);
      const auto step = env::step_tabular(mdp, s, a);
      d.transitions.push_back(
          {env::encode_state(s, mdp), env::encode_action(a, mdp), step.reward, env::encode_state(step.next_state, mdp), step.done});
      double bootstrap = 0.0;
      if (!step.done) {
        const double* row = q.data() + static_cast<std::ptrdiff_t>(step.next_state) * mdp.num_actions;
        bootstrap = config.gamma * *std::max_element(row, row + mdp.num_actions);
      }
      double& entry = q[static_cast<std::size_t>(s * mdp.num_actions + a)];
      entry += config.learning_rate * (step.reward + bootstrap - entry);
      s = step.next_state;
      if (step.done) break;
    }
  }
  record_reward_range(d);
  d.meta = {{"collector", "q_learning"},       {"episodes", config.episodes},
            {"epsilon", config.epsilon},       {"gamma", config.gamma},
            {"learning_rate", config.learning_rate}, {"q_init", 0.0},
            {"seed", config.seed},             {"time_limit", mdp.time_limit}};
  return d;
}

ScriptedPolicy parse_policy(const std::string& tag) {
  if (tag == "random") return ScriptedPolicy::random;
  if (tag == "medium") return ScriptedPolicy::medium;
  if (tag == "expert") return ScriptedPolicy::expert;
  if (tag == "mixture") return ScriptedPolicy::mixture;
  throw ValidationError("unknown policy tag '" + tag + "'");
}

std::string to_string(ScriptedPolicy policy) {
  switch (policy) {
    case ScriptedPolicy::random: return "random";
    case ScriptedPolicy::medium: return "medium";
    case ScriptedPolicy::expert: return "expert";
    case ScriptedPolicy::mixture: return "mixture";
  }
  return "unknown";
}

namespace {

void rollout_episodes(const env::ContinuousEnv& env, ScriptedPolicy policy, double noise_scale, int episodes,
                      Rng& rng, std::vector<Transition>& out) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (int e = 0; e < episodes; ++e) {
    Eigen::VectorXd state = env.start_state;
    for (int t = 0; t < env.time_limit; ++t) {
      Eigen::VectorXd action(env.action_dim);
      if (policy == ScriptedPolicy::random) {
        for (int i = 0; i < env.action_dim; ++i)
          action[i] = env.action_low[i] + unit(rng) * (env.action_high[i] - env.action_low[i]);
      } else {
        const double gain = policy == ScriptedPolicy::medium ? kMediumGainScale : 1.0;
        action = env::expert_action(env, state, gain);
        if (noise_scale > 0.0)
          for (int i = 0; i < env.action_dim; ++i) action[i] += noise_scale * gauss(rng);
      }
      action = env.clip_action(action);
      auto step = env::step(env, state, action);
      out.push_back({state, action, step.reward, step.next_state, false});
      state = std::move(step.next_state);
    }
  }
}

}  // namespace

TransitionDataset collect_scripted_dataset(const env::ContinuousEnv& env, ScriptedPolicy policy, double noise_scale,
                                           int episodes, std::uint64_t seed) {
  if (episodes <= 0) throw ValidationError("number of episodes must be positive");
  if (!(noise_scale >= 0.0)) throw ValidationError("noise scale must be non-negative");
  TransitionDataset d;
  d.env_id = env.kind;
  d.state_dim = env.state_dim;
  d.action_dim = env.action_dim;
  int logged_episodes = episodes;
  if (policy == ScriptedPolicy::mixture) {
    Rng expert_rng = make_rng(seed, "data/expert");
    Rng random_rng = make_rng(seed, "data/random");
    rollout_episodes(env, ScriptedPolicy::expert, noise_scale, episodes, expert_rng, d.transitions);
    rollout_episodes(env, ScriptedPolicy::random, noise_scale, episodes, random_rng, d.transitions);
    logged_episodes = 2 * episodes;
  } else {
    Rng rng = make_rng(seed, "data");
    rollout_episodes(env, policy, noise_scale, episodes, rng, d.transitions);
  }
  record_reward_range(d);
  d.meta = {{"collector", "scripted"}, {"policy", to_string(policy)}, {"noise_scale", noise_scale},
            {"episodes", logged_episodes}, {"seed", seed},          {"time_limit", env.time_limit}};
  return d;
}

TransitionDataset scale_rewards(const TransitionDataset& d) {
  if (d.scaled) throw ValidationError("dataset rewards are already scaled");
  if (d.transitions.empty()) throw ValidationError("cannot scale an empty dataset");
  TransitionDataset out = d;
  record_reward_range(out);
  if (!(out.reward_min < out.reward_max)) throw ValidationError("constant rewards: degenerate scale");
  const double span = out.reward_max - out.reward_min;
  for (auto& t : out.transitions) {
    if (t.r == out.reward_min) t.r = 0.0;
    else if (t.r == out.reward_max) t.r = 1.0;
    else t.r = (t.r - out.reward_min) / span;
  }
  out.scaled = true;
  return out;
}

double unscale_reward(const TransitionDataset& d, double r) {
  if (!d.scaled) return r;
  return d.reward_min + r * (d.reward_max - d.reward_min);
}

TransitionDataset unscale_rewards(const TransitionDataset& d) {
  if (!d.scaled) throw ValidationError("dataset rewards are not scaled");
  TransitionDataset out = d;
  for (auto& t : out.transitions) t.r = unscale_reward(d, t.r);
  out.scaled = false;
  return out;
}

std::vector<std::size_t> sample_indices(std::size_t n, std::size_t batch, Rng& rng) {
  if (n == 0) throw ValidationError("cannot sample from an empty dataset");
  if (batch == 0) throw ValidationError("batch size must be positive");
  std::uniform_int_distribution<std::size_t> pick(0, n - 1);
  std::vector<std::size_t> out(batch);
  for (auto& i : out) i = pick(rng);
  return out;
}

PairIndices sample_pair_batch(const TransitionDataset& d, std::size_t batch, Rng& rng) {
  PairIndices out;
  out.first = sample_indices(d.n(), batch, rng);
  out.second = sample_indices(d.n(), batch, rng);
  return out;
}

double behavior_mean_return(const TransitionDataset& d) {
  const int episodes = d.meta.value("episodes", 0);
  if (episodes <= 0) throw ValidationError("dataset metadata does not record an episode count");
  double total = 0.0;
  for (const auto& t : d.transitions) total += unscale_reward(d, t.r);
  return total / episodes;
}

namespace {
constexpr std::string_view kDatasetMagic = "PLDS1";
constexpr int kDatasetVersion = 1;
}  // namespace

std::string encode_dataset(const TransitionDataset& d) {
  d.validate();
  io::ByteWriter w;
  w.raw(kDatasetMagic);
  nlohmann::json header = {{"version", kDatasetVersion}, {"env_id", d.env_id},       {"state_dim", d.state_dim},
                           {"action_dim", d.action_dim}, {"n", d.n()},               {"reward_min", d.reward_min},
                           {"reward_max", d.reward_max}, {"scaled", d.scaled},       {"meta", d.meta}};
  w.json_line(header);
  for (const auto& t : d.transitions) {
    for (double v : t.s) w.f32(static_cast<float>(v));
    for (double v : t.a) w.f32(static_cast<float>(v));
    w.f32(static_cast<float>(t.r));
    for (double v : t.s_next) w.f32(static_cast<float>(v));
    w.f32(t.done ? 1.0f : 0.0f);
  }
  return w.bytes();
}

void save_dataset(const TransitionDataset& d, const std::filesystem::path& path) {
  io::write_file(path, encode_dataset(d));
}

std::uint64_t dataset_hash(const TransitionDataset& d) { return io::hash_bytes(encode_dataset(d)); }

TransitionDataset load_dataset(const std::filesystem::path& path) {
  io::ByteReader r(io::read_file(path));
  r.expect_magic(kDatasetMagic, "PLDS1 dataset");
  const auto header = r.json_line();
  TransitionDataset d;
  std::size_t n = 0;
  try {
    if (header.at("version").get<int>() != kDatasetVersion) throw ValidationError("dataset version mismatch");
    d.env_id = header.at("env_id").get<std::string>();
    d.state_dim = header.at("state_dim").get<int>();
    d.action_dim = header.at("action_dim").get<int>();
    n = header.at("n").get<std::size_t>();
    d.reward_min = header.at("reward_min").get<double>();
    d.reward_max = header.at("reward_max").get<double>();
    d.scaled = header.at("scaled").get<bool>();
    d.meta = header.value("meta", nlohmann::json::object());
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed dataset header: ") + e.what());
  }
  if (d.state_dim <= 0 || d.action_dim <= 0) throw ValidationError("dataset dimensions must be positive");
  const std::size_t record = 4 * static_cast<std::size_t>(2 * d.state_dim + d.action_dim + 2);
  if (r.remaining() != n * record)
    throw ValidationError("dataset header n=" + std::to_string(n) + " does not match the record payload");
  d.transitions.resize(n);
  for (auto& t : d.transitions) {
    t.s.resize(d.state_dim);
    t.a.resize(d.action_dim);
    t.s_next.resize(d.state_dim);
    for (auto& v : t.s) v = r.f32();
    for (auto& v : t.a) v = r.f32();
    t.r = r.f32();
    for (auto& v : t.s_next) v = r.f32();
    t.done = r.f32() != 0.0f;
  }
  d.validate();
  return d;
}

}  // namespace ploff::data
