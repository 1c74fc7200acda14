#include "ploff/agent.hpp"

#include "ploff/container.hpp"
#include "ploff/errors.hpp"
#include "ploff/parallel.hpp"
#include "ploff/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace ploff::agent {

std::string to_string(Variant v) {
  switch (v) {
    case Variant::ploff: return "ploff";
    case Variant::td3_off: return "td3-off";
    case Variant::ploff_l2: return "ploff-l2";
  }
  return "unknown";
}

Variant parse_variant(const std::string& tag) {
  if (tag == "ploff") return Variant::ploff;
  if (tag == "td3-off" || tag == "td3_off") return Variant::td3_off;
  if (tag == "ploff-l2" || tag == "ploff_l2") return Variant::ploff_l2;
  throw ValidationError("unknown variant: " + tag);
}

namespace {

Eigen::MatrixXd scale_actions(const AgentParams& agent, const Eigen::MatrixXd& squashed) {
  const Eigen::VectorXd center = (agent.action_high + agent.action_low) / 2.0;
  const Eigen::VectorXd half = (agent.action_high - agent.action_low) / 2.0;
  return (squashed.array().colwise() * half.array()).colwise() + center.array();
}

std::vector<nn::Activation> hidden_activations(std::size_t hidden_layers, nn::Activation last) {
  // saturating first layer, exponential-linear after
  std::vector<nn::Activation> acts;
  for (std::size_t i = 0; i < hidden_layers; ++i) acts.push_back(i == 0 ? nn::Activation::tanh : nn::Activation::elu);
  acts.push_back(last);
  return acts;
}

void validate_arch(const AgentArch& arch) {
  if (arch.hidden.empty()) throw ValidationError("agent needs at least one hidden layer");
  for (int w : arch.hidden)
    if (w <= 0) throw ValidationError("agent widths must be positive");
  if (!(arch.gamma >= 0.0 && arch.gamma < 1.0)) throw ValidationError("agent gamma must lie in [0, 1)");
  if (!(arch.tau >= 0.0 && arch.tau <= 1.0)) throw ValidationError("tau must lie in [0, 1]");
  if (!(arch.actor_lr > 0.0) || !(arch.critic_lr > 0.0)) throw ValidationError("learning rates must be positive");
  if (arch.target_noise < 0.0 || arch.noise_clip < 0.0) throw ValidationError("target noise must be nonnegative");
}

}  // namespace

Eigen::MatrixXd AgentParams::act(const Eigen::MatrixXd& states) const {
  return scale_actions(*this, actor.forward(states));
}

Eigen::MatrixXd AgentParams::act_target(const Eigen::MatrixXd& states) const {
  return scale_actions(*this, actor_target.forward(states));
}

Eigen::VectorXd AgentParams::act_one(const Eigen::VectorXd& state) const {
  if (state.size() != state_dim) throw ValidationError("state dimension does not match the agent");
  return scale_actions(*this, actor.forward_one(state)).col(0);
}

Eigen::VectorXd AgentParams::q1(const Eigen::MatrixXd& states, const Eigen::MatrixXd& actions) const {
  return critic1.forward(approx::concat_rows(states, actions)).row(0).transpose();
}

AgentParams init_agent(int state_dim, int action_dim, const Eigen::VectorXd& low, const Eigen::VectorXd& high,
                       const AgentArch& arch, std::uint64_t seed) {
  if (state_dim <= 0 || action_dim <= 0) throw ValidationError("agent dimensions must be positive");
  if (low.size() != action_dim || high.size() != action_dim || (high.array() <= low.array()).any())
    throw ValidationError("action box does not match the action dimension");
  validate_arch(arch);
  Rng rng = make_rng(seed, "init");
  AgentParams agent;
  agent.state_dim = state_dim;
  agent.action_dim = action_dim;
  agent.action_low = low;
  agent.action_high = high;
  agent.arch = arch;

  std::vector<int> actor_widths = arch.hidden;
  actor_widths.push_back(action_dim);
  std::vector<int> critic_widths = arch.hidden;
  critic_widths.push_back(1);
  agent.actor = nn::Mlp(state_dim, actor_widths, hidden_activations(arch.hidden.size(), nn::Activation::tanh), rng);
  const auto critic_acts = hidden_activations(arch.hidden.size(), nn::Activation::identity);
  agent.critic1 = nn::Mlp(state_dim + action_dim, critic_widths, critic_acts, rng);
  agent.critic2 = nn::Mlp(state_dim + action_dim, critic_widths, critic_acts, rng);
  agent.actor_target = agent.actor;
  agent.critic1_target = agent.critic1;
  agent.critic2_target = agent.critic2;
  return agent;
}

AgentBatch gather_batch(const data::TransitionDataset& d, std::span<const std::size_t> indices) {
  const auto count = static_cast<Eigen::Index>(indices.size());
  AgentBatch batch;
  batch.states.resize(d.state_dim, count);
  batch.actions.resize(d.action_dim, count);
  batch.rewards.resize(count);
  batch.next_states.resize(d.state_dim, count);
  batch.dones.resize(count);
  batch.indices.assign(indices.begin(), indices.end());
  for (Eigen::Index c = 0; c < count; ++c) {
    const auto& t = d.transitions.at(indices[static_cast<std::size_t>(c)]);
    batch.states.col(c) = t.s;
    batch.actions.col(c) = t.a;
    batch.rewards[c] = t.r;
    batch.next_states.col(c) = t.s_next;
    batch.dones[c] = t.done ? 1.0 : 0.0;
  }
  return batch;
}

double td_target(double reward, bool done, double gamma, double min_target_q, double bonus, double alpha_c) {
  return reward + (done ? 0.0 : gamma * min_target_q) + alpha_c * bonus;
}

namespace {

bool bonus_active(const BonusSource& source, double alpha) { return source.index != nullptr && alpha != 0.0; }

std::vector<std::span<const std::uint32_t>> candidate_lists(const bonus::NeighborIndex& index,
                                                            const std::vector<std::size_t>& rows, bool next) {
  std::vector<std::span<const std::uint32_t>> lists;
  lists.reserve(rows.size());
  for (auto j : rows) lists.push_back(next ? index.next_candidates(j) : index.candidates(j));
  return lists;
}

}  // namespace

CriticTargets critic_targets(const AgentParams& agent, const AgentBatch& batch, const BonusSource& source, Rng* noise_rng) {
  const Eigen::Index n = batch.size();
  Eigen::MatrixXd next_actions = agent.act_target(batch.next_states);
  if (agent.arch.target_noise > 0.0) {
    if (noise_rng == nullptr) throw ValidationError("target policy smoothing needs a noise stream");
    std::normal_distribution<double> gauss(0.0, agent.arch.target_noise);
    for (Eigen::Index i = 0; i < next_actions.size(); ++i)
      next_actions.data()[i] += std::clamp(gauss(*noise_rng), -agent.arch.noise_clip, agent.arch.noise_clip);
    for (Eigen::Index c = 0; c < n; ++c)
      next_actions.col(c) = next_actions.col(c).cwiseMax(agent.action_low).cwiseMin(agent.action_high);
  }
  const Eigen::MatrixXd inputs = approx::concat_rows(batch.next_states, next_actions);
  const Eigen::VectorXd q1 = agent.critic1_target.forward(inputs).row(0).transpose();
  const Eigen::VectorXd min_q =
      agent.arch.twin_critics ? q1.cwiseMin(agent.critic2_target.forward(inputs).row(0).transpose()).eval() : q1;

  CriticTargets out;
  out.bonus = Eigen::VectorXd::Zero(n);
  const double alpha_c = source.spec.alpha_critic;
  if (bonus_active(source, alpha_c)) {
    const auto projection = bonus::batch_projection(*source.index, batch.next_states, next_actions,
                                                    candidate_lists(*source.index, batch.indices, true), false);
    out.bonus = bonus::combine_bonus(source.spec, projection, &q1, nullptr).value;
  }
  out.y.resize(n);
  for (Eigen::Index i = 0; i < n; ++i)
    out.y[i] = bonus_active(source, alpha_c)
                   ? td_target(batch.rewards[i], batch.dones[i] != 0.0, agent.arch.gamma, min_q[i], out.bonus[i], alpha_c)
                   : td_target(batch.rewards[i], batch.dones[i] != 0.0, agent.arch.gamma, min_q[i], 0.0, 0.0);
  return out;
}

CriticLoss critic_loss(const AgentParams& agent, const AgentBatch& batch, const Eigen::VectorXd& y) {
  const Eigen::Index n = batch.size();
  if (y.size() != n || n == 0) throw ValidationError("critic targets do not match the batch");
  const Eigen::MatrixXd inputs = approx::concat_rows(batch.states, batch.actions);
  CriticLoss out;
  out.max_abs_q = y.cwiseAbs().maxCoeff();
  auto one = [&](const nn::Mlp& critic, nn::MlpGradients& grads) {
    nn::MlpTape tape;
    const Eigen::MatrixXd q = critic.forward(inputs, tape);
    const Eigen::RowVectorXd diff = q.row(0) - y.transpose();
    out.max_abs_q = std::max(out.max_abs_q, q.cwiseAbs().maxCoeff());
    grads = nn::MlpGradients::zeros_like(critic);
    critic.backward(tape, (2.0 / static_cast<double>(n)) * diff, &grads, false);
    return diff.squaredNorm() / static_cast<double>(n);
  };
  const double l1 = one(agent.critic1, out.grad1);
  if (agent.arch.twin_critics) {
    const double l2 = one(agent.critic2, out.grad2);
    out.loss = 0.5 * (l1 + l2);
  } else {
    out.loss = l1;
  }
  return out;
}

ActorObjective actor_objective(const AgentParams& agent, const AgentBatch& batch, const BonusSource& source,
                               bool want_grad) {
  const Eigen::Index n = batch.size();
  if (n == 0) throw ValidationError("empty actor batch");
  const double inv_n = 1.0 / static_cast<double>(n);
  nn::MlpTape actor_tape;
  const Eigen::MatrixXd squashed = agent.actor.forward(batch.states, actor_tape);
  const Eigen::MatrixXd actions = scale_actions(agent, squashed);

  nn::MlpTape critic_tape;
  const Eigen::MatrixXd q = agent.critic1.forward(approx::concat_rows(batch.states, actions), critic_tape);
  ActorObjective out;
  out.objective = q.mean();
  Eigen::MatrixXd grad_actions;
  if (want_grad) {
    const Eigen::MatrixXd input_grad =
        agent.critic1.backward(critic_tape, Eigen::RowVectorXd::Constant(n, inv_n), nullptr, true);
    grad_actions = input_grad.bottomRows(agent.action_dim);
  }

  const double alpha_a = source.spec.alpha_actor;
  if (bonus_active(source, alpha_a)) {
    const auto projection = bonus::batch_projection(*source.index, batch.states, actions,
                                                    candidate_lists(*source.index, batch.indices, false), want_grad);
    std::optional<Eigen::VectorXd> q_target;
    std::optional<Eigen::MatrixXd> q_target_grad;
    if (source.spec.form == bonus::BonusForm::q_scaled_exp) {
      nn::MlpTape target_tape;
      q_target = agent.critic1_target.forward(approx::concat_rows(batch.states, actions), target_tape).row(0).transpose();
      if (want_grad)
        q_target_grad = agent.critic1_target.backward(target_tape, Eigen::RowVectorXd::Ones(n), nullptr, true)
                            .bottomRows(agent.action_dim);
    }
    const auto b = bonus::combine_bonus(source.spec, projection, q_target ? &*q_target : nullptr,
                                        q_target_grad ? &*q_target_grad : nullptr);
    out.mean_bonus = b.value.mean();
    out.objective += alpha_a * out.mean_bonus;
    if (want_grad) grad_actions += (alpha_a * inv_n) * b.action_grad;
  }
  if (want_grad) {
    const Eigen::VectorXd half = (agent.action_high - agent.action_low) / 2.0;
    const Eigen::MatrixXd grad_squashed = grad_actions.array().colwise() * half.array();
    out.grad = nn::MlpGradients::zeros_like(agent.actor);
    agent.actor.backward(actor_tape, grad_squashed, &out.grad, false);
  }
  return out;
}

void update_agent_targets(AgentParams& agent, double tau) {
  nn::soft_update(agent.actor_target, agent.actor, tau);
  nn::soft_update(agent.critic1_target, agent.critic1, tau);
  nn::soft_update(agent.critic2_target, agent.critic2, tau);
}

double divergence_threshold(const AgentTrainConfig& cfg) {
  double per_step = 1.0;
  if (cfg.variant != Variant::td3_off && cfg.bonus.form == bonus::BonusForm::exp) per_step += cfg.bonus.alpha_critic;
  return 10.0 * per_step / (1.0 - cfg.arch.gamma);
}

AgentTrainResult train_agent(const data::TransitionDataset& d, const bonus::NeighborIndex* index,
                             const AgentTrainConfig& cfg) {
  if (!d.scaled) throw ValidationError("agent training needs a reward-scaled dataset");
  if (d.n() == 0) throw ValidationError("agent training needs a non-empty dataset");
  if (cfg.steps < 0 || cfg.batch <= 0 || cfg.policy_delay <= 0 || cfg.log_every <= 0)
    throw ValidationError("agent training configuration values must be positive");
  cfg.bonus.validate();

  BonusSource source;
  source.spec = cfg.bonus;
  if (cfg.variant != Variant::td3_off) {
    if (index == nullptr) throw ValidationError(to_string(cfg.variant) + " needs a neighbor index");
    const auto wanted = cfg.variant == Variant::ploff ? bonus::IndexKind::learned : bonus::IndexKind::euclidean;
    if (index->kind != wanted)
      throw ValidationError(to_string(cfg.variant) + " needs a " + bonus::to_string(wanted) + " index");
    if (index->n() != d.n() || index->dataset_hash != data::dataset_hash(d))
      throw ValidationError("neighbor index was built from a different dataset");
    source.index = index;
  }

  const Eigen::VectorXd low = Eigen::VectorXd::Constant(d.action_dim, -1.0);
  const Eigen::VectorXd high = Eigen::VectorXd::Constant(d.action_dim, 1.0);
  AgentTrainResult result{init_agent(d.state_dim, d.action_dim, low, high, cfg.arch, cfg.seed), {}};
  AgentParams& agent = result.agent;
  if (cfg.steps == 0) return result;

  Rng batch_rng = make_rng(cfg.seed, "batch");
  Rng noise_rng = make_rng(cfg.seed, "noise");
  nn::Adam critic1_opt(agent.critic1, {.learning_rate = cfg.arch.critic_lr});
  nn::Adam critic2_opt(agent.critic2, {.learning_rate = cfg.arch.critic_lr});
  nn::Adam actor_opt(agent.actor, {.learning_rate = cfg.arch.actor_lr});
  const double threshold = divergence_threshold(cfg);

  double window_critic = 0.0;
  double window_actor = 0.0;
  double window_bonus = 0.0;
  long critic_steps = 0;
  long actor_steps = 0;
  for (long step = 1; step <= cfg.steps; ++step) {
    const auto rows = data::sample_indices(d.n(), static_cast<std::size_t>(cfg.batch), batch_rng);
    const AgentBatch batch = gather_batch(d, rows);
    const auto targets = critic_targets(agent, batch, source, &noise_rng);
    if (!targets.y.allFinite()) throw DivergenceError("non-finite critic target at step " + std::to_string(step), step);
    const auto closs = critic_loss(agent, batch, targets.y);
    if (!std::isfinite(closs.loss) || closs.max_abs_q > threshold) {
      std::ostringstream msg;
      msg << "divergence guard: |Q| = " << closs.max_abs_q << " exceeds " << threshold << " at step " << step;
      throw DivergenceError(msg.str(), step);
    }
    critic1_opt.step(agent.critic1, closs.grad1);
    if (agent.arch.twin_critics) critic2_opt.step(agent.critic2, closs.grad2);
    window_critic += closs.loss;
    ++critic_steps;

    if (step % cfg.policy_delay == 0) {
      auto actor = actor_objective(agent, batch, source, true);
      actor.grad.scale(-1.0);  // ascent
      actor_opt.step(agent.actor, actor.grad);
      update_agent_targets(agent, cfg.arch.tau);
      window_actor += actor.objective;
      window_bonus += actor.mean_bonus;
      ++actor_steps;
    }

    if (step % cfg.log_every == 0) {
      result.log.push_back({step, window_critic / static_cast<double>(critic_steps),
                            actor_steps ? window_actor / static_cast<double>(actor_steps) : 0.0,
                            actor_steps ? window_bonus / static_cast<double>(actor_steps) : 0.0});
      window_critic = window_actor = window_bonus = 0.0;
      critic_steps = actor_steps = 0;
    }
  }
  return result;
}

double normalized_score(const env::ContinuousEnv& env, double raw_return) {
  const double span = env.reference_expert_return - env.reference_random_return;
  if (span == 0.0) throw ValidationError("reference returns coincide; cannot normalize");
  return (raw_return - env.reference_random_return) / span;
}

EvalStats evaluate_policy(const env::ContinuousEnv& env, const Policy& policy, int episodes, std::uint64_t seed) {
  if (episodes <= 0) throw ValidationError("evaluation needs at least one episode");
  (void)seed;  // the environment and policy are deterministic
  EvalStats stats;
  stats.returns.assign(static_cast<std::size_t>(episodes), 0.0);
  for (auto& episode_return : stats.returns) {
    Eigen::VectorXd state = env.start_state;
    double total = 0.0;
    for (int t = 0; t < env.time_limit; ++t) {
      auto result = env::step(env, state, policy(state));
      total += result.reward;
      state = std::move(result.next_state);
    }
    episode_return = total;
  }
  stats.mean_return = mean(stats.returns);
  stats.std_return = stddev(stats.returns);
  stats.normalized_score = normalized_score(env, stats.mean_return);
  return stats;
}

EvalStats evaluate_policy(const env::ContinuousEnv& env, const AgentParams& agent, int episodes, std::uint64_t seed) {
  if (agent.state_dim != env.state_dim || agent.action_dim != env.action_dim)
    throw ValidationError("agent dimensions do not match the environment");
  return evaluate_policy(env, [&](const Eigen::VectorXd& s) { return agent.act_one(s); }, episodes, seed);
}

std::vector<SweepRow> hyperparameter_sweep(const data::TransitionDataset& d, const bonus::NeighborIndex* index,
                                           const env::ContinuousEnv& env, const SweepGrid& grid,
                                           const AgentTrainConfig& base, int eval_episodes) {
  if (grid.alpha_actor.empty() || grid.alpha_critic.empty() || grid.beta.empty() || grid.seeds.empty())
    throw ValidationError("sweep grid must be nonempty along every axis");
  std::vector<SweepRow> rows;
  for (double aa : grid.alpha_actor)
    for (double ac : grid.alpha_critic)
      for (double beta : grid.beta)
        for (auto seed : grid.seeds) rows.push_back({aa, ac, beta, seed, 0.0, 0.0, false});

  parallel_for(rows.size(), [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      SweepRow& row = rows[i];
      AgentTrainConfig cfg = base;
      cfg.bonus.alpha_actor = row.alpha_actor;
      cfg.bonus.alpha_critic = row.alpha_critic;
      cfg.bonus.beta = row.beta;
      cfg.seed = row.seed;
      try {
        const auto trained = train_agent(d, index, cfg);
        const auto stats = evaluate_policy(env, trained.agent, eval_episodes, row.seed);
        row.mean_return = stats.mean_return;
        row.normalized_score = stats.normalized_score;
      } catch (const DivergenceError&) {
        row.diverged = true;
        row.mean_return = row.normalized_score = std::numeric_limits<double>::quiet_NaN();
      }
    }
  });
  std::stable_sort(rows.begin(), rows.end(), [](const SweepRow& a, const SweepRow& b) {
    if (a.diverged != b.diverged) return !a.diverged;
    return !a.diverged && a.normalized_score > b.normalized_score;
  });
  return rows;
}

void save_sweep_csv(const std::vector<SweepRow>& rows, const std::filesystem::path& path) {
  std::ostringstream out;
  out.precision(10);
  out << "alpha_a,alpha_c,beta,seed,mean_return,normalized_score\n";
  for (const auto& r : rows)
    out << r.alpha_actor << ',' << r.alpha_critic << ',' << r.beta << ',' << r.seed << ',' << r.mean_return << ','
        << r.normalized_score << '\n';
  io::write_file(path, out.str());
}

void save_agent_log_csv(const std::vector<AgentLogRow>& log, const std::filesystem::path& path) {
  std::ostringstream out;
  out.precision(10);
  out << "step,critic_loss,actor_objective,mean_bonus\n";
  for (const auto& r : log) out << r.step << ',' << r.critic_loss << ',' << r.actor_objective << ',' << r.mean_bonus << '\n';
  io::write_file(path, out.str());
}

namespace {

std::vector<double> to_std(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

Eigen::VectorXd from_std(const std::vector<double>& v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

}  // namespace

io::Checkpoint to_checkpoint(const AgentParams& agent) {
  io::Checkpoint ckpt;
  ckpt.meta = {{"kind", "agent"},
               {"state_dim", agent.state_dim},
               {"action_dim", agent.action_dim},
               {"action_low", to_std(agent.action_low)},
               {"action_high", to_std(agent.action_high)},
               {"arch",
                {{"hidden", agent.arch.hidden},
                 {"tau", agent.arch.tau},
                 {"actor_lr", agent.arch.actor_lr},
                 {"critic_lr", agent.arch.critic_lr},
                 {"gamma", agent.arch.gamma},
                 {"twin_critics", agent.arch.twin_critics},
                 {"target_noise", agent.arch.target_noise},
                 {"noise_clip", agent.arch.noise_clip}}}};
  nn::append_tensors(ckpt, "actor", agent.actor);
  nn::append_tensors(ckpt, "critic1", agent.critic1);
  nn::append_tensors(ckpt, "critic2", agent.critic2);
  nn::append_tensors(ckpt, "actor_target", agent.actor_target);
  nn::append_tensors(ckpt, "critic1_target", agent.critic1_target);
  nn::append_tensors(ckpt, "critic2_target", agent.critic2_target);
  return ckpt;
}

AgentParams agent_from_checkpoint(const io::Checkpoint& ckpt) {
  if (ckpt.meta.value("kind", std::string()) != "agent") throw ValidationError("checkpoint is not an agent checkpoint");
  AgentParams agent;
  try {
    agent.state_dim = ckpt.meta.at("state_dim").get<int>();
    agent.action_dim = ckpt.meta.at("action_dim").get<int>();
    agent.action_low = from_std(ckpt.meta.at("action_low").get<std::vector<double>>());
    agent.action_high = from_std(ckpt.meta.at("action_high").get<std::vector<double>>());
    const auto& arch = ckpt.meta.at("arch");
    agent.arch.hidden = arch.at("hidden").get<std::vector<int>>();
    agent.arch.tau = arch.at("tau").get<double>();
    agent.arch.actor_lr = arch.at("actor_lr").get<double>();
    agent.arch.critic_lr = arch.at("critic_lr").get<double>();
    agent.arch.gamma = arch.at("gamma").get<double>();
    agent.arch.twin_critics = arch.at("twin_critics").get<bool>();
    agent.arch.target_noise = arch.at("target_noise").get<double>();
    agent.arch.noise_clip = arch.at("noise_clip").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed agent checkpoint metadata: ") + e.what());
  }
  agent.actor = nn::read_tensors(ckpt, "actor");
  agent.critic1 = nn::read_tensors(ckpt, "critic1");
  agent.critic2 = nn::read_tensors(ckpt, "critic2");
  agent.actor_target = nn::read_tensors(ckpt, "actor_target");
  agent.critic1_target = nn::read_tensors(ckpt, "critic1_target");
  agent.critic2_target = nn::read_tensors(ckpt, "critic2_target");
  if (agent.actor.input_dim() != agent.state_dim || agent.actor.output_dim() != agent.action_dim ||
      agent.critic1.input_dim() != agent.state_dim + agent.action_dim)
    throw ValidationError("agent checkpoint network shapes do not match its dimensions");
  return agent;
}

void save_agent(const AgentParams& agent, const std::filesystem::path& path, const nlohmann::json& extra) {
  auto ckpt = to_checkpoint(agent);
  if (!extra.is_null()) ckpt.meta["run"] = extra;
  io::save_checkpoint(ckpt, path);
}

AgentParams load_agent(const std::filesystem::path& path) { return agent_from_checkpoint(io::load_checkpoint(path)); }

}  // namespace ploff::agent
