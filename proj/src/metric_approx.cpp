#include "ploff/metric_approx.hpp"

#include "ploff/errors.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

namespace ploff::approx {

ActionSpace ActionSpace::discrete(int num_actions) {
  if (num_actions <= 0) throw ValidationError("discrete action space needs at least one action");
  ActionSpace space;
  space.kind = Kind::discrete;
  space.dim = num_actions;
  return space;
}

ActionSpace ActionSpace::box(Eigen::VectorXd low, Eigen::VectorXd high) {
  if (low.size() == 0 || low.size() != high.size()) throw ValidationError("action box bounds mismatch");
  if ((high.array() < low.array()).any()) throw ValidationError("action box has high < low");
  ActionSpace space;
  space.kind = Kind::box;
  space.dim = static_cast<int>(low.size());
  space.low = std::move(low);
  space.high = std::move(high);
  return space;
}

Eigen::VectorXd ActionSpace::sample(Rng& rng) const {
  if (kind == Kind::discrete) {
    Eigen::VectorXd v = Eigen::VectorXd::Zero(dim);
    v[std::uniform_int_distribution<int>(0, dim - 1)(rng)] = 1.0;
    return v;
  }
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Eigen::VectorXd v(dim);
  for (int i = 0; i < dim; ++i) v[i] = low[i] + unit(rng) * (high[i] - low[i]);
  return v;
}

ActionSpace action_space_for(const data::TransitionDataset& d) {
  if (d.env_id.rfind("gridworld", 0) == 0) return ActionSpace::discrete(d.action_dim);
  return ActionSpace::box(Eigen::VectorXd::Constant(d.action_dim, -1.0), Eigen::VectorXd::Constant(d.action_dim, 1.0));
}

EmbedderPair init_embedders(int state_dim, int action_dim, const ActionSpace& actions, EmbedderWidths widths,
                            std::uint64_t seed) {
  if (state_dim <= 0 || action_dim <= 0) throw ValidationError("embedder dimensions must be positive");
  if (actions.dim != action_dim) throw ValidationError("action space does not match the action dimension");
  Rng rng = make_rng(seed, "init");
  const std::vector<int> layer_widths{widths.hidden, widths.embed};
  const std::vector<nn::Activation> acts{nn::Activation::relu, nn::Activation::identity};
  EmbedderPair pair;
  pair.phi = nn::Mlp(state_dim + action_dim, layer_widths, acts, rng);
  pair.psi = nn::Mlp(state_dim, layer_widths, acts, rng);
  pair.phi_target = pair.phi;
  pair.psi_target = pair.psi;
  pair.state_dim = state_dim;
  pair.action_dim = action_dim;
  pair.actions = actions;
  return pair;
}

Eigen::MatrixXd concat_rows(const Eigen::MatrixXd& top, const Eigen::MatrixXd& bottom) {
  if (top.cols() != bottom.cols()) throw ValidationError("column count mismatch");
  Eigen::MatrixXd out(top.rows() + bottom.rows(), top.cols());
  out << top, bottom;
  return out;
}

namespace {

Eigen::VectorXd concat(const Eigen::VectorXd& s, const Eigen::VectorXd& a) {
  Eigen::VectorXd x(s.size() + a.size());
  x << s, a;
  return x;
}

void check_pair_dims(const EmbedderPair& pair, const Eigen::VectorXd& s, const Eigen::VectorXd& a) {
  if (s.size() != pair.state_dim || a.size() != pair.action_dim)
    throw ValidationError("state/action dimension mismatch for the embedder");
}

// Column norms of a difference, and the unit directions (zero where the
// difference vanishes).
struct ColumnDistances {
  Eigen::VectorXd norm;
  Eigen::MatrixXd direction;
};

ColumnDistances column_distances(const Eigen::MatrixXd& diff) {
  ColumnDistances out;
  out.norm = diff.colwise().norm().transpose();
  out.direction = diff;
  for (Eigen::Index c = 0; c < diff.cols(); ++c) {
    if (out.norm[c] > 0.0) out.direction.col(c) /= out.norm[c];
    else out.direction.col(c).setZero();
  }
  return out;
}

}  // namespace

double d_phi(const EmbedderPair& pair, const Eigen::VectorXd& s1, const Eigen::VectorXd& a1, const Eigen::VectorXd& s2,
             const Eigen::VectorXd& a2) {
  check_pair_dims(pair, s1, a1);
  check_pair_dims(pair, s2, a2);
  return (pair.phi.forward_one(concat(s1, a1)) - pair.phi.forward_one(concat(s2, a2))).norm();
}

double d_phi_target(const EmbedderPair& pair, const Eigen::VectorXd& s1, const Eigen::VectorXd& a1,
                    const Eigen::VectorXd& s2, const Eigen::VectorXd& a2) {
  check_pair_dims(pair, s1, a1);
  check_pair_dims(pair, s2, a2);
  return (pair.phi_target.forward_one(concat(s1, a1)) - pair.phi_target.forward_one(concat(s2, a2))).norm();
}

double d_psi(const EmbedderPair& pair, const Eigen::VectorXd& s1, const Eigen::VectorXd& s2) {
  if (s1.size() != pair.state_dim || s2.size() != pair.state_dim)
    throw ValidationError("state dimension mismatch for the embedder");
  return (pair.psi.forward_one(s1) - pair.psi.forward_one(s2)).norm();
}

TransitionBatch gather(const std::vector<data::Transition>& transitions, std::span<const std::size_t> indices) {
  if (transitions.empty()) throw ValidationError("cannot gather from an empty transition set");
  const auto& first = transitions.front();
  const auto count = static_cast<Eigen::Index>(indices.size());
  TransitionBatch batch;
  batch.states.resize(first.s.size(), count);
  batch.actions.resize(first.a.size(), count);
  batch.next_states.resize(first.s.size(), count);
  batch.rewards.resize(count);
  for (Eigen::Index c = 0; c < count; ++c) {
    const auto& t = transitions.at(indices[static_cast<std::size_t>(c)]);
    batch.states.col(c) = t.s;
    batch.actions.col(c) = t.a;
    batch.next_states.col(c) = t.s_next;
    batch.rewards[c] = t.r;
  }
  return batch;
}

LossResult loss_phi(const EmbedderPair& pair, const TransitionBatch& first, const TransitionBatch& second) {
  const Eigen::Index batch = first.size();
  if (batch == 0 || second.size() != batch) throw ValidationError("loss_phi needs two non-empty batches of equal size");

  Eigen::MatrixXd inputs(pair.state_dim + pair.action_dim, 2 * batch);
  inputs.leftCols(batch) = concat_rows(first.states, first.actions);
  inputs.rightCols(batch) = concat_rows(second.states, second.actions);
  nn::MlpTape tape;
  const Eigen::MatrixXd emb = pair.phi.forward(inputs, tape);
  const auto online = column_distances(emb.leftCols(batch) - emb.rightCols(batch));

  Eigen::MatrixXd next(pair.state_dim, 2 * batch);
  next.leftCols(batch) = first.next_states;
  next.rightCols(batch) = second.next_states;
  const Eigen::MatrixXd next_emb = pair.psi_target.forward(next);
  const Eigen::VectorXd bootstrap = (next_emb.leftCols(batch) - next_emb.rightCols(batch)).colwise().norm().transpose();

  const Eigen::VectorXd residual =
      online.norm - (first.rewards - second.rewards).cwiseAbs() - pair.gamma * bootstrap;
  LossResult result;
  result.loss = residual.squaredNorm() / static_cast<double>(batch);

  Eigen::MatrixXd grad_out(emb.rows(), 2 * batch);
  const Eigen::VectorXd coeff = (2.0 / static_cast<double>(batch)) * residual;
  for (Eigen::Index c = 0; c < batch; ++c) {
    grad_out.col(c) = coeff[c] * online.direction.col(c);
    grad_out.col(batch + c) = -coeff[c] * online.direction.col(c);
  }
  result.grads = nn::MlpGradients::zeros_like(pair.phi);
  pair.phi.backward(tape, grad_out, &result.grads, false);
  return result;
}

namespace {

// Action columns for the psi bootstrap: one block of `m` actions per state
// pair. Returns the actions for the first and second state.
std::pair<Eigen::MatrixXd, Eigen::MatrixXd> bootstrap_actions(const EmbedderPair& pair, Eigen::Index batch, Rng& rng,
                                                              int& per_pair) {
  const ActionSpace& space = pair.actions;
  const bool enumerate = space.kind == ActionSpace::Kind::discrete && pair.n_action_samples >= space.dim &&
                         pair.shared_action_samples;
  per_pair = enumerate ? space.dim : pair.n_action_samples;
  if (per_pair <= 0) throw ValidationError("n_action_samples must be >= 1");
  Eigen::MatrixXd u1(pair.action_dim, batch * per_pair);
  Eigen::MatrixXd u2;
  if (enumerate) {
    u1.setZero();
    for (Eigen::Index i = 0; i < batch; ++i)
      for (int j = 0; j < per_pair; ++j) u1(j, i * per_pair + j) = 1.0;
    return {u1, u1};
  }
  for (Eigen::Index c = 0; c < u1.cols(); ++c) u1.col(c) = space.sample(rng);
  if (pair.shared_action_samples) return {u1, u1};
  u2.resize(pair.action_dim, u1.cols());
  for (Eigen::Index c = 0; c < u2.cols(); ++c) u2.col(c) = space.sample(rng);
  return {u1, u2};
}

Eigen::MatrixXd repeat_columns(const Eigen::MatrixXd& m, int times) {
  Eigen::MatrixXd out(m.rows(), m.cols() * times);
  for (Eigen::Index c = 0; c < m.cols(); ++c)
    for (int j = 0; j < times; ++j) out.col(c * times + j) = m.col(c);
  return out;
}

}  // namespace

Eigen::VectorXd psi_bootstrap_target(const EmbedderPair& pair, const Eigen::MatrixXd& s1, const Eigen::MatrixXd& s2,
                                     Rng& rng) {
  const Eigen::Index batch = s1.cols();
  int per_pair = 0;
  const auto [u1, u2] = bootstrap_actions(pair, batch, rng, per_pair);
  const Eigen::MatrixXd e1 = pair.phi_target.forward(concat_rows(repeat_columns(s1, per_pair), u1));
  const Eigen::MatrixXd e2 = pair.phi_target.forward(concat_rows(repeat_columns(s2, per_pair), u2));
  const Eigen::VectorXd dist = (e1 - e2).colwise().norm().transpose();
  Eigen::VectorXd target(batch);
  for (Eigen::Index i = 0; i < batch; ++i) target[i] = dist.segment(i * per_pair, per_pair).mean();
  return target;
}

LossResult loss_psi(const EmbedderPair& pair, const Eigen::MatrixXd& s1, const Eigen::MatrixXd& s2, Rng& rng) {
  const Eigen::Index batch = s1.cols();
  if (batch == 0 || s2.cols() != batch) throw ValidationError("loss_psi needs two non-empty batches of equal size");
  if (s1.rows() != pair.state_dim || s2.rows() != pair.state_dim) throw ValidationError("loss_psi state dimension mismatch");

  const Eigen::VectorXd target = psi_bootstrap_target(pair, s1, s2, rng);
  Eigen::MatrixXd states(pair.state_dim, 2 * batch);
  states.leftCols(batch) = s1;
  states.rightCols(batch) = s2;
  nn::MlpTape tape;
  const Eigen::MatrixXd emb = pair.psi.forward(states, tape);
  const auto online = column_distances(emb.leftCols(batch) - emb.rightCols(batch));
  const Eigen::VectorXd residual = online.norm - target;

  LossResult result;
  result.loss = residual.squaredNorm() / static_cast<double>(batch);
  Eigen::MatrixXd grad_out(emb.rows(), 2 * batch);
  const Eigen::VectorXd coeff = (2.0 / static_cast<double>(batch)) * residual;
  for (Eigen::Index c = 0; c < batch; ++c) {
    grad_out.col(c) = coeff[c] * online.direction.col(c);
    grad_out.col(batch + c) = -coeff[c] * online.direction.col(c);
  }
  result.grads = nn::MlpGradients::zeros_like(pair.psi);
  pair.psi.backward(tape, grad_out, &result.grads, false);
  return result;
}

void target_update(EmbedderPair& pair, double tau) {
  nn::soft_update(pair.phi_target, pair.phi, tau);
  nn::soft_update(pair.psi_target, pair.psi, tau);
}

std::vector<data::Transition> metric_training_pool(const data::TransitionDataset& d, const ActionSpace& actions,
                                                   bool absorbing_terminals, Rng& rng) {
  std::vector<data::Transition> pool = d.transitions;
  if (!absorbing_terminals) return pool;
  for (const auto& t : d.transitions) {
    if (!t.done) continue;
    pool.push_back({t.s_next, actions.sample(rng), 0.0, t.s_next, true});
  }
  return pool;
}

MetricTrainResult train_metric(const data::TransitionDataset& d, const MetricTrainConfig& cfg) {
  const ActionSpace actions = action_space_for(d);
  return train_metric(d, cfg, init_embedders(d.state_dim, d.action_dim, actions, cfg.widths, cfg.seed));
}

MetricTrainResult train_metric(const data::TransitionDataset& d, const MetricTrainConfig& cfg, EmbedderPair init) {
  if (!d.scaled) throw ValidationError("metric training needs a reward-scaled dataset");
  d.validate();
  if (cfg.steps < 0 || cfg.batch <= 0 || cfg.n_action_samples <= 0 || cfg.log_every <= 0 ||
      !(cfg.learning_rate > 0.0))
    throw ValidationError("metric training configuration values must be positive");
  if (!(cfg.tau > 0.0 && cfg.tau <= 1.0)) throw ValidationError("tau must lie in (0, 1]");
  if (!(cfg.gamma >= 0.0 && cfg.gamma < 1.0)) throw ValidationError("metric gamma must lie in [0, 1)");
  if (init.state_dim != d.state_dim || init.action_dim != d.action_dim)
    throw ValidationError("embedder dimensions do not match the dataset");

  MetricTrainResult result{std::move(init), {}};
  EmbedderPair& pair = result.pair;
  pair.tau = cfg.tau;
  pair.gamma = cfg.gamma;
  pair.n_action_samples = cfg.n_action_samples;
  pair.shared_action_samples = cfg.shared_action_samples;
  if (cfg.steps == 0) return result;

  Rng pool_rng = make_rng(cfg.seed, "pool");
  Rng batch_rng = make_rng(cfg.seed, "batch");
  Rng action_rng = make_rng(cfg.seed, "actions");
  const auto pool = metric_training_pool(d, pair.actions, cfg.absorbing_terminals, pool_rng);
  nn::Adam phi_opt(pair.phi, {.learning_rate = cfg.learning_rate});
  nn::Adam psi_opt(pair.psi, {.learning_rate = cfg.learning_rate});
  const auto batch = static_cast<std::size_t>(cfg.batch);

  double window_phi = 0.0;
  double window_psi = 0.0;
  long window = 0;
  for (long step = 1; step <= cfg.steps; ++step) {
    const auto phi_idx1 = data::sample_indices(pool.size(), batch, batch_rng);
    const auto phi_idx2 = data::sample_indices(pool.size(), batch, batch_rng);
    const auto phi_loss = loss_phi(pair, gather(pool, phi_idx1), gather(pool, phi_idx2));
    if (!std::isfinite(phi_loss.loss))
      throw NumericalError("non-finite phi loss at metric step " + std::to_string(step));
    phi_opt.step(pair.phi, phi_loss.grads);

    const auto psi_idx1 = data::sample_indices(pool.size(), batch, batch_rng);
    const auto psi_idx2 = data::sample_indices(pool.size(), batch, batch_rng);
    const auto psi_loss =
        loss_psi(pair, gather(pool, psi_idx1).states, gather(pool, psi_idx2).states, action_rng);
    if (!std::isfinite(psi_loss.loss))
      throw NumericalError("non-finite psi loss at metric step " + std::to_string(step));
    psi_opt.step(pair.psi, psi_loss.grads);

    target_update(pair, cfg.tau);

    window_phi += phi_loss.loss;
    window_psi += psi_loss.loss;
    ++window;
    if (step % cfg.log_every == 0) {
      result.log.push_back({step, window_phi / static_cast<double>(window), window_psi / static_cast<double>(window)});
      window_phi = window_psi = 0.0;
      window = 0;
    }
  }
  return result;
}

io::Checkpoint to_checkpoint(const EmbedderPair& pair) {
  io::Checkpoint ckpt;
  nlohmann::json actions = {{"kind", pair.actions.kind == ActionSpace::Kind::discrete ? "discrete" : "box"},
                            {"dim", pair.actions.dim}};
  if (pair.actions.kind == ActionSpace::Kind::box) {
    actions["low"] = std::vector<double>(pair.actions.low.data(), pair.actions.low.data() + pair.actions.low.size());
    actions["high"] = std::vector<double>(pair.actions.high.data(), pair.actions.high.data() + pair.actions.high.size());
  }
  ckpt.meta = {{"kind", "metric"},
               {"state_dim", pair.state_dim},
               {"action_dim", pair.action_dim},
               {"widths", pair.phi.widths()},
               {"tau", pair.tau},
               {"gamma", pair.gamma},
               {"n_action_samples", pair.n_action_samples},
               {"shared_action_samples", pair.shared_action_samples},
               {"action_space", actions}};
  nn::append_tensors(ckpt, "phi", pair.phi);
  nn::append_tensors(ckpt, "psi", pair.psi);
  nn::append_tensors(ckpt, "phi_target", pair.phi_target);
  nn::append_tensors(ckpt, "psi_target", pair.psi_target);
  return ckpt;
}

EmbedderPair from_checkpoint(const io::Checkpoint& ckpt) {
  if (ckpt.meta.value("kind", std::string()) != "metric") throw ValidationError("checkpoint is not a metric checkpoint");
  EmbedderPair pair;
  try {
    pair.state_dim = ckpt.meta.at("state_dim").get<int>();
    pair.action_dim = ckpt.meta.at("action_dim").get<int>();
    pair.tau = ckpt.meta.at("tau").get<double>();
    pair.gamma = ckpt.meta.at("gamma").get<double>();
    pair.n_action_samples = ckpt.meta.at("n_action_samples").get<int>();
    pair.shared_action_samples = ckpt.meta.at("shared_action_samples").get<bool>();
    const auto& actions = ckpt.meta.at("action_space");
    if (actions.at("kind").get<std::string>() == "discrete") {
      pair.actions = ActionSpace::discrete(actions.at("dim").get<int>());
    } else {
      const auto low = actions.at("low").get<std::vector<double>>();
      const auto high = actions.at("high").get<std::vector<double>>();
      pair.actions = ActionSpace::box(Eigen::Map<const Eigen::VectorXd>(low.data(), static_cast<Eigen::Index>(low.size())),
                                      Eigen::Map<const Eigen::VectorXd>(high.data(), static_cast<Eigen::Index>(high.size())));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed metric checkpoint metadata: ") + e.what());
  }
  pair.phi = nn::read_tensors(ckpt, "phi");
  pair.psi = nn::read_tensors(ckpt, "psi");
  pair.phi_target = nn::read_tensors(ckpt, "phi_target");
  pair.psi_target = nn::read_tensors(ckpt, "psi_target");
  if (pair.phi.input_dim() != pair.state_dim + pair.action_dim || pair.psi.input_dim() != pair.state_dim)
    throw ValidationError("metric checkpoint network shapes do not match its dimensions");
  return pair;
}

void save_metric(const EmbedderPair& pair, const std::filesystem::path& path) {
  io::save_checkpoint(to_checkpoint(pair), path);
}

EmbedderPair load_metric(const std::filesystem::path& path) { return from_checkpoint(io::load_checkpoint(path)); }

void save_loss_csv(const std::vector<MetricLogRow>& log, const std::filesystem::path& path) {
  std::ostringstream out;
  out.precision(10);
  out << "step,loss_phi,loss_psi\n";
  for (const auto& row : log) out << row.step << ',' << row.loss_phi << ',' << row.loss_psi << '\n';
  io::write_file(path, out.str());
}

}  // namespace ploff::approx
