#include "ploff/metric_exact.hpp"

#include "ploff/container.hpp"
#include "ploff/errors.hpp"
#include "ploff/parallel.hpp"
#include "ploff/rng.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

namespace ploff::exact {

TabularPseudometric::TabularPseudometric(Eigen::MatrixXd values) : values_(std::move(values)) {
  if (values_.rows() != values_.cols()) throw ValidationError("pseudometric matrix must be square");
}

namespace {

void check_dims(const env::TabularMDP& mdp, const TabularPseudometric& d) {
  if (d.num_pairs() != mdp.num_pairs())
    throw ValidationError("pseudometric has " + std::to_string(d.num_pairs()) + " pairs, MDP has " +
                          std::to_string(mdp.num_pairs()));
}

double bootstrap_mean(const env::TabularMDP& mdp, const TabularPseudometric& d, int next1, int next2) {
  const int actions = mdp.num_actions;
  double acc = 0.0;
  for (int u = 0; u < actions; ++u) acc += d(pair_index(next1, u, actions), pair_index(next2, u, actions));
  return acc / actions;
}

}  // namespace

TabularPseudometric zero_metric(const env::TabularMDP& mdp) { return TabularPseudometric(mdp.num_pairs()); }

TabularPseudometric apply_operator_f(const env::TabularMDP& mdp, const TabularPseudometric& d, double gamma) {
  check_dims(mdp, d);
  const int n = mdp.num_pairs();
  const int actions = mdp.num_actions;
  std::vector<int> next(static_cast<std::size_t>(n));
  std::vector<double> reward(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    next[static_cast<std::size_t>(i)] = mdp.effective_next(i / actions, i % actions);
    reward[static_cast<std::size_t>(i)] = mdp.effective_reward(i / actions, i % actions);
  }
  TabularPseudometric out(n);
  parallel_for(static_cast<std::size_t>(n), [&](std::size_t begin, std::size_t end) {
    for (auto i = static_cast<int>(begin); i < static_cast<int>(end); ++i) {
      for (int j = 0; j < n; ++j) {
        out(i, j) = std::abs(reward[static_cast<std::size_t>(i)] - reward[static_cast<std::size_t>(j)]) +
                    gamma * bootstrap_mean(mdp, d, next[static_cast<std::size_t>(i)], next[static_cast<std::size_t>(j)]);
      }
    }
  });
  return out;
}

double sup_distance(const TabularPseudometric& d1, const TabularPseudometric& d2) {
  if (d1.num_pairs() != d2.num_pairs()) throw ValidationError("sup_distance: dimension mismatch");
  if (d1.num_pairs() == 0) return 0.0;
  return (d1.values() - d2.values()).cwiseAbs().maxCoeff();
}

FixedPointResult iterate_to_fixed_point(const env::TabularMDP& mdp, const TabularPseudometric& d0, double gamma,
                                        double tol, int max_iter) {
  if (!(tol > 0.0)) throw ValidationError("tolerance must be positive");
  if (!(gamma >= 0.0 && gamma < 1.0)) throw ValidationError("gamma must lie in [0, 1)");
  check_dims(mdp, d0);
  FixedPointResult result{d0, {}};
  for (int it = 0; it < max_iter; ++it) {
    TabularPseudometric next = apply_operator_f(mdp, result.metric, gamma);
    const double residual = sup_distance(next, result.metric);
    result.diagnostics.residuals.push_back(residual);
    result.diagnostics.iterations = it + 1;
    result.metric = std::move(next);
    if (residual <= tol) return result;
  }
  const double last = result.diagnostics.residuals.empty() ? INFINITY : result.diagnostics.residuals.back();
  throw NonConvergenceError("fixed-point iteration did not reach tolerance within " + std::to_string(max_iter) +
                                " iterations (last residual " + std::to_string(last) + ")",
                            last);
}

TabularTransition tabular_transition(const env::TabularMDP& mdp, int s, int a) {
  return {s, a, mdp.effective_reward(s, a), mdp.effective_next(s, a)};
}

void apply_sampled_operator(TabularPseudometric& d, const TabularTransition& t1, const TabularTransition& t2,
                            const env::TabularMDP& mdp, double gamma) {
  check_dims(mdp, d);
  const int actions = mdp.num_actions;
  const int i = pair_index(t1.s, t1.a, actions);
  const int j = pair_index(t2.s, t2.a, actions);
  const double value = std::abs(t1.r - t2.r) + gamma * bootstrap_mean(mdp, d, t1.s_next, t2.s_next);
  d(i, j) = value;
  d(j, i) = value;
}

SampledResult sampled_fixed_point(const env::TabularMDP& mdp, const SamplerConfig& cfg, double gamma, double tol,
                                  std::uint64_t seed) {
  if (!(tol > 0.0)) throw ValidationError("tolerance must be positive");
  if (!(gamma >= 0.0 && gamma < 1.0)) throw ValidationError("gamma must lie in [0, 1)");
  const int n = mdp.num_pairs();
  const int actions = mdp.num_actions;
  Rng rng = make_rng(seed, "sampled-operator");
  std::uniform_int_distribution<int> pick(0, n - 1);
  const std::uint64_t check_every = static_cast<std::uint64_t>(n) * static_cast<std::uint64_t>(n);
  const double threshold = tol * (1.0 - gamma);

  SampledResult result{zero_metric(mdp), 0, INFINITY};
  while (result.updates < cfg.max_updates) {
    const int i = pick(rng);
    const int j = pick(rng);
    apply_sampled_operator(result.metric, tabular_transition(mdp, i / actions, i % actions),
                           tabular_transition(mdp, j / actions, j % actions), mdp, gamma);
    ++result.updates;
    if (result.updates % check_every == 0) {
      result.residual = sup_distance(apply_operator_f(mdp, result.metric, gamma), result.metric);
      if (result.residual <= threshold) return result;
    }
  }
  throw NonConvergenceError("sampled iteration exhausted " + std::to_string(cfg.max_updates) +
                                " updates (last residual " + std::to_string(result.residual) + ")",
                            result.residual);
}

AxiomReport check_pseudometric_axioms(const TabularPseudometric& d, double tol) {
  AxiomReport report;
  constexpr std::size_t kMaxExamples = 16;
  auto record = [&](Violation v) {
    report.ok = false;
    if (report.examples.size() < kMaxExamples) report.examples.push_back(v);
  };
  const int n = d.num_pairs();
  for (int x = 0; x < n; ++x) {
    if (std::abs(d(x, x)) > tol) {
      ++report.nonzero_diagonal;
      record({ViolationKind::nonzero_diagonal, x, x, x, std::abs(d(x, x))});
    }
    for (int y = 0; y < n; ++y) {
      if (d(x, y) < -tol) {
        ++report.negative;
        record({ViolationKind::negative, x, y, y, -d(x, y)});
      }
      if (y > x && std::abs(d(x, y) - d(y, x)) > tol) {
        ++report.asymmetric;
        record({ViolationKind::asymmetry, x, y, y, std::abs(d(x, y) - d(y, x))});
      }
    }
  }
  for (int x = 0; x < n; ++x) {
    for (int y = 0; y < n; ++y) {
      const double dxy = d(x, y);
      for (int z = 0; z < n; ++z) {
        const double excess = d(x, z) - dxy - d(y, z);
        if (excess > tol) {
          ++report.triangle;
          report.worst_triangle_excess = std::max(report.worst_triangle_excess, excess);
          record({ViolationKind::triangle, x, y, z, excess});
        }
      }
    }
  }
  return report;
}

std::string to_string(ViolationKind kind) {
  switch (kind) {
    case ViolationKind::negative: return "negative";
    case ViolationKind::nonzero_diagonal: return "nonzero_diagonal";
    case ViolationKind::asymmetry: return "asymmetry";
    case ViolationKind::triangle: return "triangle";
  }
  return "unknown";
}

void save_csv(const TabularPseudometric& d, const std::filesystem::path& path) {
  std::ostringstream out;
  out.precision(17);
  for (int i = 0; i < d.num_pairs(); ++i) {
    for (int j = 0; j < d.num_pairs(); ++j) {
      if (j) out << ',';
      out << d(i, j);
    }
    out << '\n';
  }
  io::write_file(path, out.str());
}

TabularPseudometric load_csv(const std::filesystem::path& path) {
  std::istringstream in(io::read_file(path));
  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<double> row;
    std::stringstream cells(line);
    std::string cell;
    while (std::getline(cells, cell, ',')) {
      try {
        row.push_back(std::stod(cell));
      } catch (const std::exception&) {
        throw ValidationError("non-numeric entry in pseudometric CSV: '" + cell + "'");
      }
    }
    rows.push_back(std::move(row));
  }
  Eigen::MatrixXd m(rows.size(), rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != rows.size()) throw ValidationError("pseudometric CSV is not square");
    for (std::size_t j = 0; j < rows.size(); ++j) m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
  }
  return TabularPseudometric(std::move(m));
}

void save_tensor(const TabularPseudometric& d, const std::filesystem::path& path) {
  io::Checkpoint ckpt;
  ckpt.meta = {{"kind", "tabular_pseudometric"}, {"num_pairs", d.num_pairs()}};
  ckpt.tensors.push_back(io::tensor_from_matrix("distance", d.values()));
  io::save_checkpoint(ckpt, path);
}

}  // namespace ploff::exact
