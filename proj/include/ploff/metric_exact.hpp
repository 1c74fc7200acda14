#pragma once

#include "ploff/env.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace ploff::exact {

// Dense distance over state-action pairs, pair index s * |A| + a.
class TabularPseudometric {
 public:
  TabularPseudometric() = default;
  explicit TabularPseudometric(int num_pairs) : values_(Eigen::MatrixXd::Zero(num_pairs, num_pairs)) {}
  explicit TabularPseudometric(Eigen::MatrixXd values);

  int num_pairs() const { return static_cast<int>(values_.rows()); }
  double operator()(int i, int j) const { return values_(i, j); }
  double& operator()(int i, int j) { return values_(i, j); }
  const Eigen::MatrixXd& values() const { return values_; }

 private:
  Eigen::MatrixXd values_;
};

inline int pair_index(int s, int a, int num_actions) { return s * num_actions + a; }

TabularPseudometric zero_metric(const env::TabularMDP& mdp);

// F(d)(x; y) = |r(x) - r(y)| + gamma * mean_{a'} d(x', a'; y', a') with the
// exact mean over the finite action set.
TabularPseudometric apply_operator_f(const env::TabularMDP& mdp, const TabularPseudometric& d, double gamma);

double sup_distance(const TabularPseudometric& d1, const TabularPseudometric& d2);

struct FixedPointDiagnostics {
  // residuals[n] = sup_distance(F^{n+1}(d0), F^n(d0))
  std::vector<double> residuals;
  int iterations = 0;
};

struct FixedPointResult {
  TabularPseudometric metric;
  FixedPointDiagnostics diagnostics;
};

// Iterates F from d0 until a residual drops to `tol`; throws
// NonConvergenceError when max_iter is exhausted first.
FixedPointResult iterate_to_fixed_point(const env::TabularMDP& mdp, const TabularPseudometric& d0, double gamma,
                                        double tol, int max_iter);

struct TabularTransition {
  int s = 0;
  int a = 0;
  double r = 0.0;
  int s_next = 0;
};

TabularTransition tabular_transition(const env::TabularMDP& mdp, int s, int a);

// Sampled operator: rewrites only the (t1; t2) entry and its symmetric twin.
void apply_sampled_operator(TabularPseudometric& d, const TabularTransition& t1, const TabularTransition& t2,
                            const env::TabularMDP& mdp, double gamma);

struct SamplerConfig {
  // Ordered pairs of state-action pairs are drawn uniformly, so every pair has
  // probability 1 / num_pairs^2.
  std::uint64_t max_updates = 1'000'000;
  double min_pair_probability(int num_pairs) const {
    return 1.0 / (static_cast<double>(num_pairs) * static_cast<double>(num_pairs));
  }
};

struct SampledResult {
  TabularPseudometric metric;
  std::uint64_t updates = 0;
  double residual = 0.0;  // sup_distance(F(d), d) at the last check
};

// Repeated random-pair sampled updates from the zero metric. Convergence is
// declared when sup_distance(F(d), d) <= tol * (1 - gamma), which bounds the
// distance to the fixed point by tol. Throws NonConvergenceError when the
// update budget runs out.
SampledResult sampled_fixed_point(const env::TabularMDP& mdp, const SamplerConfig& cfg, double gamma, double tol,
                                  std::uint64_t seed);

enum class ViolationKind { negative, nonzero_diagonal, asymmetry, triangle };

struct Violation {
  ViolationKind kind;
  int x = 0, y = 0, z = 0;
  double amount = 0.0;
};

struct AxiomReport {
  bool ok = true;
  std::size_t negative = 0;
  std::size_t nonzero_diagonal = 0;
  std::size_t asymmetric = 0;
  std::size_t triangle = 0;
  std::vector<Violation> examples;  // first few violations, for diagnostics
  double worst_triangle_excess = 0.0;
};

AxiomReport check_pseudometric_axioms(const TabularPseudometric& d, double tol);
std::string to_string(ViolationKind kind);

void save_csv(const TabularPseudometric& d, const std::filesystem::path& path);
TabularPseudometric load_csv(const std::filesystem::path& path);
void save_tensor(const TabularPseudometric& d, const std::filesystem::path& path);

}  // namespace ploff::exact
