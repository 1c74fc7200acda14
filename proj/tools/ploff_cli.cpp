#include "CLI11.hpp"
#include "json.hpp"

#include "ploff/agent.hpp"
#include "ploff/bonus_index.hpp"
#include "ploff/container.hpp"
#include "ploff/dataset.hpp"
#include "ploff/env.hpp"
#include "ploff/errors.hpp"
#include "ploff/figures.hpp"
#include "ploff/metric_approx.hpp"
#include "ploff/verify.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace ploff;

namespace {

struct GenDataOpts {
  std::string env = "gridworld";
  std::string map;
  int episodes = 500;
  double epsilon = 0.1;
  double gamma = 0.99;
  double learning_rate = 0.1;
  std::optional<int> time_limit;  // 50 for gridworld, the env default for pointmass
  double goal_reward = 1.0;
  std::string policy = "medium";
  double noise = 0.1;
  std::uint64_t seed = 0;
  std::string out = "data.plds";
};

struct MetricOpts {
  std::string data;
  long steps = 2'000'000;
  double lr = 1e-3;
  int batch = 256;
  int n_action_samples = 256;
  double tau = 0.005;
  double gamma = 0.9;
  int hidden = 1024;
  int embed = 32;
  int log_every = 1000;
  bool independent_actions = false;
  bool no_absorbing = false;
  std::uint64_t seed = 0;
  std::string out = "metric.plck";
  std::string loss_csv;
};

struct KnnOpts {
  std::string data;
  std::string metric;
  std::size_t k = 50;
  bool euclidean = false;
  std::string out = "index.plnn";
};

struct AgentOpts {
  std::string data;
  std::string metric;
  std::string index;
  std::string variant = "ploff";
  std::string form = "q_scaled_exp";
  double alpha_a = 5.0;
  double alpha_c = 1.0;
  double beta = 0.5;
  long steps = 500'000;
  int batch = 256;
  std::vector<int> hidden{256, 256};
  double gamma = 0.99;
  double tau = 0.005;
  double lr = 3e-4;
  int policy_delay = 2;
  bool single_critic = false;
  double target_noise = 0.0;
  int log_every = 1000;
  std::uint64_t seed = 0;
  std::string out = "agent.plck";
  std::string log_csv;
};

struct EvalOpts {
  std::string agent;
  std::string env = "pointmass";
  int episodes = 10;
  std::uint64_t seed = 0;
  std::string out;
};

struct SweepOpts {
  AgentOpts agent;
  std::vector<double> alpha_a_grid{1.0, 5.0, 10.0};
  std::vector<double> alpha_c_grid{1.0, 5.0, 10.0};
  std::vector<double> beta_grid{0.1, 0.25, 0.5};
  std::vector<std::uint64_t> seeds{0};
  int eval_episodes = 10;
  std::string out = "sweep.csv";
};

struct FigureOpts {
  std::string what = "heatmap";
  std::string data;
  std::string metric;
  std::string anchor = "goal";
  std::vector<double> lambdas{0.0, 0.05, 0.1, 0.2, 0.4};
  int samples = 1000;
  std::string loss_csv;
  std::uint64_t seed = 0;
  std::string out;
};

struct VerifyOpts {
  std::uint64_t seed = 0;
  int trials = 100;
  int sampled_seeds = 10;
  std::string check_metric;
  std::string json;
};

void require_file(const std::string& path, const std::string& what) {
  if (path.empty()) throw ValidationError(what + " path is required");
  if (!fs::exists(path)) throw ValidationError(what + " not found: " + path);
}

data::TransitionDataset load_scaled(const std::string& path) {
  require_file(path, "dataset");
  auto d = data::load_dataset(path);
  if (!d.scaled) throw ValidationError("dataset " + path + " has unscaled rewards");
  return d;
}

// Metric checkpoint plus the dataset hash recorded at training time.
struct LoadedMetric {
  approx::EmbedderPair pair;
  std::uint64_t dataset_hash = 0;
};

LoadedMetric load_metric_for(const std::string& path, const data::TransitionDataset& d) {
  require_file(path, "metric checkpoint");
  const auto ckpt = io::load_checkpoint(path);
  LoadedMetric out{approx::from_checkpoint(ckpt), 0};
  if (out.pair.state_dim != d.state_dim || out.pair.action_dim != d.action_dim)
    throw ValidationError("metric dims (" + std::to_string(out.pair.state_dim) + ", " +
                          std::to_string(out.pair.action_dim) + ") do not match the dataset");
  out.dataset_hash = std::stoull(ckpt.meta.value("dataset_hash", std::string("0")), nullptr, 16);
  if (out.dataset_hash != data::dataset_hash(d))
    throw ValidationError("metric checkpoint was trained on a different dataset");
  return out;
}

int cmd_gen_data(const GenDataOpts& o) {
  data::TransitionDataset d;
  if (o.env == "gridworld") {
    require_file(o.map, "grid map");
    std::ifstream in(o.map);
    std::stringstream text;
    text << in.rdbuf();
    const auto map = env::GridMap::parse(text.str());
    const int time_limit = o.time_limit.value_or(50);
    const auto mdp = env::build_gridworld(map, time_limit, o.goal_reward);
    data::QLearningConfig cfg;
    cfg.episodes = o.episodes;
    cfg.epsilon = o.epsilon;
    cfg.gamma = o.gamma;
    cfg.learning_rate = o.learning_rate;
    cfg.seed = o.seed;
    d = data::collect_qlearning_dataset(mdp, cfg);
    d.meta["map"] = text.str();
    d.meta["time_limit"] = time_limit;
    d.meta["goal_reward"] = o.goal_reward;
  } else if (o.env == "pointmass") {
    env::PointMassConfig pm;
    pm.time_limit = o.time_limit.value_or(pm.time_limit);
    const auto env = env::build_pointmass(pm);
    d = data::collect_scripted_dataset(env, data::parse_policy(o.policy), o.noise, o.episodes, o.seed);
    d.meta["time_limit"] = pm.time_limit;
  } else {
    throw ValidationError("unknown env: " + o.env);
  }
  d = data::scale_rewards(d);
  data::save_dataset(d, o.out);
  std::cout << "wrote " << o.out << " (" << d.n() << " transitions, hash " << io::hex64(data::dataset_hash(d))
            << ")\n";
  return 0;
}

int cmd_train_metric(const MetricOpts& o) {
  const auto d = load_scaled(o.data);
  approx::MetricTrainConfig cfg;
  cfg.steps = o.steps;
  cfg.learning_rate = o.lr;
  cfg.batch = o.batch;
  cfg.n_action_samples = o.n_action_samples;
  cfg.tau = o.tau;
  cfg.gamma = o.gamma;
  cfg.widths = {o.hidden, o.embed};
  cfg.seed = o.seed;
  cfg.log_every = o.log_every;
  cfg.shared_action_samples = !o.independent_actions;
  cfg.absorbing_terminals = !o.no_absorbing;
  const auto result = approx::train_metric(d, cfg);
  auto ckpt = approx::to_checkpoint(result.pair);
  ckpt.meta["dataset_hash"] = io::hex64(data::dataset_hash(d));
  ckpt.meta["train"] = {{"steps", o.steps}, {"lr", o.lr}, {"batch", o.batch}, {"seed", o.seed}};
  io::save_checkpoint(ckpt, o.out);
  const std::string loss_csv = o.loss_csv.empty() ? fs::path(o.out).replace_extension(".loss.csv").string() : o.loss_csv;
  approx::save_loss_csv(result.log, loss_csv);
  std::cout << "wrote " << o.out << " and " << loss_csv << " (" << result.log.size() << " log rows)\n";
  return 0;
}

int cmd_build_knn(const KnnOpts& o) {
  const auto d = load_scaled(o.data);
  bonus::NeighborIndex idx;
  if (o.euclidean) {
    idx = bonus::build_euclidean_index(d, o.k);
  } else {
    const auto metric = load_metric_for(o.metric, d);
    idx = bonus::build_neighbor_index(metric.pair, d, o.k);
  }
  bonus::save_index(idx, o.out);
  std::cout << "wrote " << o.out << " (" << bonus::to_string(idx.kind) << ", n=" << idx.n()
            << ", lists of " << idx.list_size() << ")\n";
  return 0;
}

agent::AgentTrainConfig agent_config(const AgentOpts& o) {
  agent::AgentTrainConfig cfg;
  cfg.steps = o.steps;
  cfg.batch = o.batch;
  cfg.bonus = {bonus::parse_bonus_form(o.form), o.beta, o.alpha_a, o.alpha_c};
  cfg.variant = agent::parse_variant(o.variant);
  cfg.policy_delay = o.policy_delay;
  cfg.seed = o.seed;
  cfg.arch.hidden = o.hidden;
  cfg.arch.gamma = o.gamma;
  cfg.arch.tau = o.tau;
  cfg.arch.actor_lr = cfg.arch.critic_lr = o.lr;
  cfg.arch.twin_critics = !o.single_critic;
  cfg.arch.target_noise = o.target_noise;
  cfg.log_every = o.log_every;
  return cfg;
}

// Loads whatever index the variant needs and checks it against the dataset.
std::optional<bonus::NeighborIndex> load_index_for(const AgentOpts& o, const data::TransitionDataset& d,
                                                   agent::Variant variant) {
  if (variant == agent::Variant::td3_off) return std::nullopt;
  require_file(o.index, "neighbor index");
  std::optional<approx::EmbedderPair> metric;
  if (variant == agent::Variant::ploff) metric = load_metric_for(o.metric, d).pair;
  auto idx = bonus::load_index(o.index, metric ? &*metric : nullptr);
  if (idx.dataset_hash != data::dataset_hash(d) || idx.n() != d.n())
    throw ValidationError("neighbor index was built from a different dataset");
  return idx;
}

nlohmann::json run_record(const AgentOpts& o, const data::TransitionDataset& d) {
  return {{"variant", o.variant}, {"form", o.form},   {"alpha_a", o.alpha_a},
          {"alpha_c", o.alpha_c}, {"beta", o.beta},   {"steps", o.steps},
          {"seed", o.seed},       {"env_id", d.env_id}, {"dataset_hash", io::hex64(data::dataset_hash(d))}};
}

int cmd_train_agent(const AgentOpts& o) {
  const auto d = load_scaled(o.data);
  const auto cfg = agent_config(o);
  const auto idx = load_index_for(o, d, cfg.variant);
  const auto result = agent::train_agent(d, idx ? &*idx : nullptr, cfg);
  agent::save_agent(result.agent, o.out, run_record(o, d));
  const std::string log_csv = o.log_csv.empty() ? fs::path(o.out).replace_extension(".log.csv").string() : o.log_csv;
  agent::save_agent_log_csv(result.log, log_csv);
  std::cout << "wrote " << o.out << " and " << log_csv << '\n';
  return 0;
}

env::ContinuousEnv eval_env(const std::string& name, int time_limit) {
  if (name != "pointmass") throw ValidationError("evaluation supports the pointmass env only, got " + name);
  env::PointMassConfig pm;
  pm.time_limit = time_limit;
  return env::build_pointmass(pm);
}

int cmd_eval(const EvalOpts& o) {
  require_file(o.agent, "agent checkpoint");
  const auto ckpt = io::load_checkpoint(o.agent);
  const auto params = agent::agent_from_checkpoint(ckpt);
  const auto env = eval_env(o.env, env::PointMassConfig{}.time_limit);
  const auto stats = agent::evaluate_policy(env, params, o.episodes, o.seed);
  const nlohmann::json report = {{"mean", stats.mean_return},
                                 {"std", stats.std_return},
                                 {"normalized", stats.normalized_score},
                                 {"episodes", o.episodes},
                                 {"returns", stats.returns}};
  std::cout << report.dump(2) << '\n';
  if (!o.out.empty()) io::write_file(o.out, report.dump(2) + "\n");
  return 0;
}

int cmd_sweep(const SweepOpts& o) {
  const auto d = load_scaled(o.agent.data);
  const auto cfg = agent_config(o.agent);
  const auto idx = load_index_for(o.agent, d, cfg.variant);
  agent::SweepGrid grid;
  grid.alpha_actor = o.alpha_a_grid;
  grid.alpha_critic = o.alpha_c_grid;
  grid.beta = o.beta_grid;
  grid.seeds = o.seeds;
  const auto env = eval_env("pointmass", d.meta.value("time_limit", env::PointMassConfig{}.time_limit));
  const auto rows = agent::hyperparameter_sweep(d, idx ? &*idx : nullptr, env, grid, cfg, o.eval_episodes);
  agent::save_sweep_csv(rows, o.out);
  std::cout << "wrote " << o.out << " (" << rows.size() << " rows)\n";
  if (!rows.empty() && !rows.front().diverged)
    std::cout << "best: alpha_a=" << rows.front().alpha_actor << " alpha_c=" << rows.front().alpha_critic
              << " beta=" << rows.front().beta << " normalized=" << rows.front().normalized_score << '\n';
  return 0;
}

int anchor_state(const std::string& anchor, const env::TabularMDP& mdp) {
  if (anchor == "goal") return mdp.goal_state();
  const auto comma = anchor.find(',');
  if (comma == std::string::npos) throw ValidationError("anchor must be 'goal' or 'row,col'");
  int row = 0;
  int col = 0;
  try {
    row = std::stoi(anchor.substr(0, comma));
    col = std::stoi(anchor.substr(comma + 1));
  } catch (const std::logic_error&) {
    throw ValidationError("anchor must be 'goal' or 'row,col'");
  }
  if (row < 0 || col < 0 || row >= mdp.grid_rows || col >= mdp.grid_cols)
    throw ValidationError("anchor " + anchor + " lies outside the grid");
  const int s = mdp.state_of_cell[static_cast<std::size_t>(row * mdp.grid_cols + col)];
  if (s < 0) throw ValidationError("anchor " + anchor + " is a wall");
  return s;
}

int cmd_export_figures(const FigureOpts& o) {
  if (o.out.empty()) throw ValidationError("--out is required");
  if (o.what == "curves") {
    require_file(o.loss_csv, "loss CSV");
    io::write_file(o.out, io::read_file(o.loss_csv));
  } else if (o.what == "heatmap") {
    const auto d = load_scaled(o.data);
    const auto metric = load_metric_for(o.metric, d);
    const auto mdp = figures::gridworld_from_dataset(d);
    figures::save_heatmap_csv(figures::state_distance_heatmap(metric.pair, mdp, anchor_state(o.anchor, mdp)), o.out);
  } else if (o.what == "noise") {
    const auto d = load_scaled(o.data);
    const auto metric = load_metric_for(o.metric, d);
    figures::save_noise_csv(figures::noise_perturbation(metric.pair, d, o.lambdas, o.samples, o.seed), o.out);
  } else {
    throw ValidationError("unknown figure: " + o.what + " (heatmap, noise, curves)");
  }
  std::cout << "wrote " << o.out << '\n';
  return 0;
}

int cmd_verify(const VerifyOpts& o) {
  verify::VerifyOptions opts;
  opts.seed = o.seed;
  opts.trials = o.trials;
  opts.sampled_seeds = o.sampled_seeds;
  if (!o.check_metric.empty()) {
    require_file(o.check_metric, "metric CSV");
    opts.metric_csv = o.check_metric;
  }
  const auto results = verify::run_all(opts);
  bool ok = true;
  for (const auto& r : results) {
    std::cout << (r.ok() ? "PASS " : "FAIL ") << r.name << " (" << r.passed << " passed, " << r.failed << " failed)\n";
    for (const auto& f : r.failures) std::cout << "  " << f << '\n';
    ok = ok && r.ok();
  }
  if (!o.json.empty()) io::write_file(o.json, verify::to_json(results).dump(2) + "\n");
  return ok ? 0 : 2;
}

void add_agent_flags(CLI::App* cmd, AgentOpts& o) {
  cmd->add_option("--data", o.data, "PLDS1 dataset")->required();
  cmd->add_option("--metric", o.metric, "metric checkpoint (ploff)");
  cmd->add_option("--index", o.index, "PLNN1 neighbor index (ploff, ploff-l2)");
  cmd->add_option("--variant", o.variant, "ploff | td3-off | ploff-l2");
  cmd->add_option("--form", o.form, "bonus form: q_scaled_exp | exp | one_minus_exp");
  cmd->add_option("--alpha-a", o.alpha_a, "actor bonus weight");
  cmd->add_option("--alpha-c", o.alpha_c, "critic bonus weight");
  cmd->add_option("--beta", o.beta, "bonus temperature");
  cmd->add_option("--steps", o.steps);
  cmd->add_option("--batch", o.batch);
  cmd->add_option("--hidden", o.hidden, "hidden widths")->delimiter(',');
  cmd->add_option("--gamma", o.gamma);
  cmd->add_option("--tau", o.tau);
  cmd->add_option("--lr", o.lr);
  cmd->add_option("--policy-delay", o.policy_delay);
  cmd->add_flag("--single-critic", o.single_critic);
  cmd->add_option("--target-noise", o.target_noise, "target policy smoothing std (0 = off)");
  cmd->add_option("--log-every", o.log_every);
  cmd->add_option("--seed", o.seed);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Pseudometric-regularized offline RL toolkit"};
  app.require_subcommand(1);

  GenDataOpts gen;
  auto* gen_cmd = app.add_subcommand("gen-data", "collect an offline dataset");
  gen_cmd->add_option("--env", gen.env, "gridworld | pointmass");
  gen_cmd->add_option("--map", gen.map, "grid map file (gridworld)");
  gen_cmd->add_option("--episodes", gen.episodes);
  gen_cmd->add_option("--epsilon", gen.epsilon);
  gen_cmd->add_option("--gamma", gen.gamma);
  gen_cmd->add_option("--lr", gen.learning_rate, "Q-learning step size");
  gen_cmd->add_option("--time-limit", gen.time_limit);
  gen_cmd->add_option("--goal-reward", gen.goal_reward);
  gen_cmd->add_option("--policy", gen.policy, "random | medium | expert | mixture (pointmass)");
  gen_cmd->add_option("--noise", gen.noise, "action noise std (pointmass)");
  gen_cmd->add_option("--seed", gen.seed);
  gen_cmd->add_option("--out,-o", gen.out);

  MetricOpts met;
  auto* met_cmd = app.add_subcommand("train-metric", "train the state and state-action embedders");
  met_cmd->add_option("--data", met.data)->required();
  met_cmd->add_option("--steps", met.steps);
  met_cmd->add_option("--lr", met.lr);
  met_cmd->add_option("--batch", met.batch);
  met_cmd->add_option("--n-action-samples", met.n_action_samples);
  met_cmd->add_option("--tau", met.tau);
  met_cmd->add_option("--gamma", met.gamma);
  met_cmd->add_option("--hidden", met.hidden);
  met_cmd->add_option("--embed", met.embed);
  met_cmd->add_option("--log-every", met.log_every);
  met_cmd->add_flag("--independent-actions", met.independent_actions, "sample separate actions per state");
  met_cmd->add_flag("--no-absorbing", met.no_absorbing, "skip absorbing terminal transitions");
  met_cmd->add_option("--seed", met.seed);
  met_cmd->add_option("--out,-o", met.out);
  met_cmd->add_option("--loss-csv", met.loss_csv);

  KnnOpts knn;
  auto* knn_cmd = app.add_subcommand("build-knn", "precompute neighbor candidate sets");
  knn_cmd->add_option("--data", knn.data)->required();
  knn_cmd->add_option("--metric", knn.metric);
  knn_cmd->add_option("--k", knn.k);
  knn_cmd->add_flag("--euclidean", knn.euclidean, "raw Euclidean index for the L2 ablation");
  knn_cmd->add_option("--out,-o", knn.out);

  AgentOpts ag;
  auto* ag_cmd = app.add_subcommand("train-agent", "train an offline actor-critic agent");
  add_agent_flags(ag_cmd, ag);
  ag_cmd->add_option("--out,-o", ag.out);
  ag_cmd->add_option("--log-csv", ag.log_csv);

  EvalOpts ev;
  auto* ev_cmd = app.add_subcommand("eval", "evaluate an agent checkpoint");
  ev_cmd->add_option("--agent", ev.agent)->required();
  ev_cmd->add_option("--env", ev.env);
  ev_cmd->add_option("--episodes", ev.episodes);
  ev_cmd->add_option("--seed", ev.seed);
  ev_cmd->add_option("--out,-o", ev.out, "JSON report path");

  SweepOpts sw;
  auto* sw_cmd = app.add_subcommand("sweep", "grid search over bonus weights and temperature");
  add_agent_flags(sw_cmd, sw.agent);
  sw_cmd->add_option("--alpha-a-grid", sw.alpha_a_grid)->delimiter(',');
  sw_cmd->add_option("--alpha-c-grid", sw.alpha_c_grid)->delimiter(',');
  sw_cmd->add_option("--beta-grid", sw.beta_grid)->delimiter(',');
  sw_cmd->add_option("--seeds", sw.seeds)->delimiter(',');
  sw_cmd->add_option("--eval-episodes", sw.eval_episodes);
  sw_cmd->add_option("--out,-o", sw.out);

  FigureOpts fig;
  auto* fig_cmd = app.add_subcommand("export-figures", "export figure data as CSV");
  fig_cmd->add_option("--what", fig.what, "heatmap | noise | curves");
  fig_cmd->add_option("--data", fig.data);
  fig_cmd->add_option("--metric", fig.metric);
  fig_cmd->add_option("--anchor", fig.anchor, "'goal' or row,col");
  fig_cmd->add_option("--lambdas", fig.lambdas)->delimiter(',');
  fig_cmd->add_option("--samples", fig.samples);
  fig_cmd->add_option("--loss-csv", fig.loss_csv);
  fig_cmd->add_option("--seed", fig.seed);
  fig_cmd->add_option("--out,-o", fig.out);

  VerifyOpts ver;
  auto* ver_cmd = app.add_subcommand("verify", "run the property suites");
  ver_cmd->add_option("--seed", ver.seed);
  ver_cmd->add_option("--trials", ver.trials);
  ver_cmd->add_option("--sampled-seeds", ver.sampled_seeds);
  ver_cmd->add_option("--check-metric", ver.check_metric, "also check a tabular metric CSV");
  ver_cmd->add_option("--json", ver.json, "write the report as JSON");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    if (*gen_cmd) return cmd_gen_data(gen);
    if (*met_cmd) return cmd_train_metric(met);
    if (*knn_cmd) return cmd_build_knn(knn);
    if (*ag_cmd) return cmd_train_agent(ag);
    if (*ev_cmd) return cmd_eval(ev);
    if (*sw_cmd) return cmd_sweep(sw);
    if (*fig_cmd) return cmd_export_figures(fig);
    if (*ver_cmd) return cmd_verify(ver);
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
