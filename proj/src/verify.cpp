#include "ploff/verify.hpp"

#include "ploff/agent.hpp"
#include "ploff/bonus_index.hpp"
#include "ploff/dataset.hpp"
#include "ploff/errors.hpp"
#include "ploff/kdtree.hpp"
#include "ploff/metric_approx.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace ploff::verify {

void SuiteResult::record(bool pass, const std::string& what) {
  if (pass) {
    ++passed;
    return;
  }
  ++failed;
  if (failures.size() < 8) failures.push_back(what);
}

env::TabularMDP random_mdp(Rng& rng, int max_states, int max_actions) {
  if (max_states < 2 || max_actions < 1) throw ValidationError("random MDP needs >= 2 states and >= 1 action");
  env::TabularMDP mdp;
  mdp.num_states = std::uniform_int_distribution<int>(2, max_states)(rng);
  mdp.num_actions = std::uniform_int_distribution<int>(1, max_actions)(rng);
  std::uniform_int_distribution<int> state(0, mdp.num_states - 1);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int p = 0; p < mdp.num_pairs(); ++p) {
    mdp.next_state.push_back(state(rng));
    mdp.reward.push_back(unit(rng));
  }
  mdp.terminal.assign(static_cast<std::size_t>(mdp.num_states), 0);
  for (int s = 1; s < mdp.num_states; ++s) mdp.terminal[static_cast<std::size_t>(s)] = unit(rng) < 0.2 ? 1 : 0;
  mdp.time_limit = 100;
  mdp.start_states = {0};
  mdp.validate();
  return mdp;
}

exact::TabularPseudometric random_pseudometric(int num_pairs, Rng& rng) {
  const int dim = std::uniform_int_distribution<int>(1, 4)(rng);
  std::uniform_real_distribution<double> unit(0.0, 3.0);
  Eigen::MatrixXd points(dim, num_pairs);
  for (int p = 0; p < num_pairs; ++p) {
    // occasional duplicates give distinct pairs at distance zero
    if (p > 0 && unit(rng) < 0.3) points.col(p) = points.col(std::uniform_int_distribution<int>(0, p - 1)(rng));
    else
      for (int k = 0; k < dim; ++k) points(k, p) = unit(rng);
  }
  Eigen::MatrixXd values(num_pairs, num_pairs);
  for (int i = 0; i < num_pairs; ++i)
    for (int j = 0; j < num_pairs; ++j) values(i, j) = i == j ? 0.0 : (points.col(i) - points.col(j)).norm();
  return exact::TabularPseudometric(values);
}

env::TabularMDP two_state_self_loop() {
  env::TabularMDP mdp;
  mdp.num_states = 2;
  mdp.num_actions = 1;
  mdp.next_state = {0, 1};
  mdp.reward = {0.0, 1.0};
  mdp.terminal = {0, 0};
  mdp.time_limit = 100;
  mdp.start_states = {0};
  return mdp;
}

namespace {

constexpr double kGammas[] = {0.5, 0.9, 0.99};

double pick_gamma(Rng& rng) { return kGammas[std::uniform_int_distribution<int>(0, 2)(rng)]; }

std::string describe(int trial, const std::string& detail) {
  return "trial " + std::to_string(trial) + ": " + detail;
}

}  // namespace

SuiteResult suite_axioms(const VerifyOptions& opts) {
  SuiteResult out("axioms");
  Rng rng = make_rng(opts.seed, "verify/axioms");
  for (int t = 0; t < opts.trials; ++t) {
    const auto mdp = random_mdp(rng, 12, 4);
    const double gamma = pick_gamma(rng);
    const auto d = random_pseudometric(mdp.num_pairs(), rng);
    const auto report = exact::check_pseudometric_axioms(exact::apply_operator_f(mdp, d, gamma), 1e-9);
    out.record(report.ok, describe(t, report.examples.empty() ? "" : exact::to_string(report.examples[0].kind)));
  }
  return out;
}

SuiteResult suite_contraction(const VerifyOptions& opts) {
  SuiteResult out("contraction");
  Rng rng = make_rng(opts.seed, "verify/contraction");
  for (int t = 0; t < opts.trials; ++t) {
    const auto mdp = random_mdp(rng, 12, 4);
    const double gamma = pick_gamma(rng);
    const auto d1 = random_pseudometric(mdp.num_pairs(), rng);
    const auto d2 = random_pseudometric(mdp.num_pairs(), rng);
    const double lhs =
        exact::sup_distance(exact::apply_operator_f(mdp, d1, gamma), exact::apply_operator_f(mdp, d2, gamma));
    const double rhs = gamma * exact::sup_distance(d1, d2) + 1e-12;
    std::ostringstream msg;
    msg << lhs << " > " << rhs;
    out.record(lhs <= rhs, describe(t, msg.str()));
  }
  return out;
}

SuiteResult suite_fixed_point(const VerifyOptions& opts) {
  SuiteResult out("fixed_point");
  Rng rng = make_rng(opts.seed, "verify/fixed-point");
  for (int t = 0; t < opts.trials; ++t) {
    const auto mdp = random_mdp(rng, 12, 4);
    const double gamma = pick_gamma(rng);
    const auto d0 = random_pseudometric(mdp.num_pairs(), rng);
    bool ok = true;
    try {
      const auto result = exact::iterate_to_fixed_point(mdp, d0, gamma, 1e-9, 5000);
      const auto& r = result.diagnostics.residuals;
      for (std::size_t n = 0; n < r.size(); ++n)
        ok = ok && r[n] <= std::pow(gamma, static_cast<double>(n)) * r[0] + 1e-9;
    } catch (const NonConvergenceError&) {
      ok = false;
    }
    out.record(ok, describe(t, "residual bound violated or no convergence"));
  }
  for (double gamma : kGammas) {
    const auto mdp = two_state_self_loop();
    const auto result = exact::iterate_to_fixed_point(mdp, exact::zero_metric(mdp), gamma, 1e-13, 100000);
    const double expected = 1.0 / (1.0 - gamma);
    std::ostringstream msg;
    msg << "two-state closed form at gamma " << gamma << ": " << result.metric(0, 1) << " vs " << expected;
    out.record(std::abs(result.metric(0, 1) - expected) <= 1e-9, msg.str());
  }
  return out;
}

SuiteResult suite_sampled(const VerifyOptions& opts) {
  SuiteResult out("sampled");
  constexpr double gamma = 0.9;
  for (int seed = 0; seed < opts.sampled_seeds; ++seed) {
    Rng rng = make_rng(opts.seed + static_cast<std::uint64_t>(seed), "verify/sampled");
    const auto mdp = random_mdp(rng, 6, 3);
    const auto exact_d = exact::iterate_to_fixed_point(mdp, exact::zero_metric(mdp), gamma, 1e-13, 100000).metric;
    try {
      const auto sampled = exact::sampled_fixed_point(mdp, {}, gamma, 1e-7, static_cast<std::uint64_t>(seed));
      const double gap = exact::sup_distance(sampled.metric, exact_d);
      out.record(gap <= 1e-6, describe(seed, "sup distance " + std::to_string(gap)));
    } catch (const NonConvergenceError& e) {
      out.record(false, describe(seed, e.what()));
    }
  }
  return out;
}

double max_relative_error(const std::vector<double>& analytic, const std::vector<double>& numeric, double floor) {
  if (analytic.size() != numeric.size()) throw ValidationError("gradient length mismatch");
  double worst = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    const double scale = std::max({std::abs(analytic[i]), std::abs(numeric[i]), floor});
    worst = std::max(worst, std::abs(analytic[i] - numeric[i]) / scale);
  }
  return worst;
}

namespace {

template <typename Loss>
std::vector<double> central_differences(nn::Mlp& net, Loss&& loss, double h) {
  std::vector<double> grad;
  net.for_each_parameter([&](double& p) {
    const double saved = p;
    p = saved + h;
    const double up = loss();
    p = saved - h;
    const double down = loss();
    p = saved;
    grad.push_back((up - down) / (2.0 * h));
  });
  return grad;
}

data::TransitionDataset random_box_dataset(Rng& rng, int n, int state_dim, int action_dim) {
  data::TransitionDataset d;
  d.env_id = "synthetic";
  d.state_dim = state_dim;
  d.action_dim = action_dim;
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  for (int i = 0; i < n; ++i) {
    data::Transition t;
    t.s = Eigen::VectorXd::NullaryExpr(state_dim, [&] { return unit(rng); });
    t.a = Eigen::VectorXd::NullaryExpr(action_dim, [&] { return unit(rng); });
    t.s_next = Eigen::VectorXd::NullaryExpr(state_dim, [&] { return unit(rng); });
    t.r = unit(rng);
    d.transitions.push_back(t);
  }
  d.meta["episodes"] = 1;
  return data::scale_rewards(d);
}

}  // namespace

SuiteResult suite_gradients(const VerifyOptions& opts) {
  SuiteResult out("gradients");
  Rng rng = make_rng(opts.seed, "verify/gradients");
  const auto d = random_box_dataset(rng, 40, 3, 2);
  const auto actions = approx::action_space_for(d);
  auto pair = approx::init_embedders(3, 2, actions, {8, 4}, opts.seed);
  pair.n_action_samples = 6;
  // move the targets off the online nets so both terms are exercised
  Rng jitter = make_rng(opts.seed, "verify/jitter");
  std::normal_distribution<double> noise(0.0, 0.1);
  pair.phi_target.for_each_parameter([&](double& p) { p += noise(jitter); });
  pair.psi_target.for_each_parameter([&](double& p) { p += noise(jitter); });

  std::vector<std::size_t> first_idx{0, 1, 2, 3, 4, 5};
  std::vector<std::size_t> second_idx{6, 7, 8, 9, 10, 11};
  const auto first = approx::gather(d.transitions, first_idx);
  const auto second = approx::gather(d.transitions, second_idx);

  const auto phi = approx::loss_phi(pair, first, second);
  const auto phi_numeric = central_differences(pair.phi, [&] { return approx::loss_phi(pair, first, second).loss; }, 1e-6);
  const double phi_err = max_relative_error(nn::flatten(phi.grads), phi_numeric, 1e-6);
  out.record(phi_err <= 1e-4, "loss_phi relative error " + std::to_string(phi_err));

  const Rng psi_rng = make_rng(opts.seed, "verify/psi-actions");
  Rng psi_copy = psi_rng;
  const auto psi = approx::loss_psi(pair, first.states, second.states, psi_copy);
  const auto psi_numeric = central_differences(
      pair.psi,
      [&] {
        Rng r = psi_rng;
        return approx::loss_psi(pair, first.states, second.states, r).loss;
      },
      1e-6);
  const double psi_err = max_relative_error(nn::flatten(psi.grads), psi_numeric, 1e-6);
  out.record(psi_err <= 1e-4, "loss_psi relative error " + std::to_string(psi_err));

  const auto index = bonus::build_neighbor_index(pair, d, 5);
  agent::AgentArch arch;
  arch.hidden = {8, 8};
  auto params = agent::init_agent(3, 2, actions.low, actions.high, arch, opts.seed);
  const auto batch = agent::gather_batch(d, first_idx);
  for (auto form : {bonus::BonusForm::exp, bonus::BonusForm::q_scaled_exp}) {
    agent::BonusSource source{&index, {form, 0.5, 2.0, 1.0}};
    const auto analytic = agent::actor_objective(params, batch, source, true);
    const auto numeric = central_differences(
        params.actor, [&] { return agent::actor_objective(params, batch, source, false).objective; }, 1e-6);
    const double err = max_relative_error(nn::flatten(analytic.grad), numeric, 1e-6);
    out.record(err <= 1e-3, "actor objective (" + bonus::to_string(form) + ") relative error " + std::to_string(err));
  }
  return out;
}

SuiteResult suite_knn(const VerifyOptions& opts) {
  SuiteResult out("knn");
  Rng rng = make_rng(opts.seed, "verify/knn");
  constexpr int kDims[] = {2, 8, 32};
  for (int t = 0; t < opts.trials; ++t) {
    const int n = std::uniform_int_distribution<int>(1, 2000)(rng);
    const int dim = kDims[t % 3];
    const std::size_t k = static_cast<std::size_t>(std::uniform_int_distribution<int>(1, 60)(rng));
    // a coarse lattice forces many exact distance ties
    const bool lattice = t % 2 == 0;
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::uniform_int_distribution<int> cell(0, 3);
    Eigen::MatrixXd points(dim, n);
    for (Eigen::Index i = 0; i < points.size(); ++i) points.data()[i] = lattice ? cell(rng) : unit(rng);
    const knn::KdTree tree(points);
    bool same = true;
    for (int q = 0; q < 5 && same; ++q) {
      Eigen::VectorXd query(dim);
      for (int i = 0; i < dim; ++i) query[i] = lattice ? cell(rng) : unit(rng);
      const auto a = tree.query(query, k);
      const auto b = knn::brute_force(points, query, k);
      same = a.size() == b.size() &&
             std::equal(a.begin(), a.end(), b.begin(), [](const knn::Neighbor& x, const knn::Neighbor& y) {
               return x.index == y.index && x.dist2 == y.dist2;
             });
    }
    out.record(same, describe(t, "tree and brute force disagree"));
  }
  return out;
}

SuiteResult suite_reward_scaling(const VerifyOptions& opts) {
  SuiteResult out("reward_scaling");
  Rng rng = make_rng(opts.seed, "verify/scaling");
  for (int t = 0; t < 20; ++t) {
    data::TransitionDataset d;
    d.env_id = "synthetic";
    d.state_dim = 1;
    d.action_dim = 1;
    std::normal_distribution<double> gauss(0.0, 1e3);
    for (int i = 0; i < 50; ++i)
      d.transitions.push_back({Eigen::VectorXd::Zero(1), Eigen::VectorXd::Zero(1), gauss(rng), Eigen::VectorXd::Zero(1), false});
    const auto scaled = data::scale_rewards(d);
    double lo = 1.0;
    double hi = 0.0;
    double worst = 0.0;
    for (std::size_t i = 0; i < d.n(); ++i) {
      lo = std::min(lo, scaled.transitions[i].r);
      hi = std::max(hi, scaled.transitions[i].r);
      worst = std::max(worst, std::abs(data::unscale_reward(scaled, scaled.transitions[i].r) - d.transitions[i].r));
    }
    out.record(lo == 0.0 && hi == 1.0 && worst <= 1e-12,
               describe(t, "extrema " + std::to_string(lo) + "/" + std::to_string(hi) + ", round trip error " +
                               std::to_string(worst)));
  }
  return out;
}

SuiteResult suite_metric_csv(const std::filesystem::path& path, double tol) {
  SuiteResult out("metric_csv");
  const auto report = exact::check_pseudometric_axioms(exact::load_csv(path), tol);
  out.record(report.ok, path.string() + ": " + std::to_string(report.triangle) + " triangle, " +
                            std::to_string(report.asymmetric) + " asymmetry, " + std::to_string(report.negative) +
                            " negative, " + std::to_string(report.nonzero_diagonal) + " diagonal violations");
  return out;
}

std::vector<SuiteResult> run_all(const VerifyOptions& opts) {
  std::vector<SuiteResult> results{suite_axioms(opts),   suite_contraction(opts), suite_fixed_point(opts),
                                   suite_sampled(opts),  suite_gradients(opts),   suite_knn(opts),
                                   suite_reward_scaling(opts)};
  if (opts.metric_csv) results.push_back(suite_metric_csv(*opts.metric_csv, 1e-9));
  return results;
}

nlohmann::json to_json(const std::vector<SuiteResult>& results) {
  nlohmann::json suites = nlohmann::json::array();
  bool ok = true;
  for (const auto& r : results) {
    suites.push_back({{"suite", r.name}, {"passed", r.passed}, {"failed", r.failed}, {"failures", r.failures}});
    ok = ok && r.ok();
  }
  return {{"ok", ok}, {"suites", suites}};
}

}  // namespace ploff::verify
