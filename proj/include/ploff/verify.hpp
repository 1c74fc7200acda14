#pragma once

#include "ploff/env.hpp"
#include "ploff/metric_exact.hpp"
#include "ploff/rng.hpp"

#include "json.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace ploff::verify {

struct SuiteResult {
  SuiteResult() = default;
  explicit SuiteResult(std::string suite) : name(std::move(suite)) {}

  std::string name;
  int passed = 0;
  int failed = 0;
  std::vector<std::string> failures;  // first few failure descriptions

  bool ok() const { return failed == 0; }
  void record(bool pass, const std::string& what);
};

struct VerifyOptions {
  std::uint64_t seed = 0;
  int trials = 100;         // random MDP / kNN instances per suite
  int sampled_seeds = 10;   // sampled-operator runs
  std::optional<std::filesystem::path> metric_csv;  // extra axiom check on a user-supplied metric
};

// Random finite MDP with 2..max_states states and 1..max_actions actions,
// rewards in [0, 1], random terminal states.
env::TabularMDP random_mdp(Rng& rng, int max_states, int max_actions);
// Distances between random points (with duplicates), so the axioms hold.
exact::TabularPseudometric random_pseudometric(int num_pairs, Rng& rng);
// Two states, one action, rewards 0 and 1, both self-loops: d* = 1 / (1 - gamma).
env::TabularMDP two_state_self_loop();

SuiteResult suite_axioms(const VerifyOptions& opts);
SuiteResult suite_contraction(const VerifyOptions& opts);
SuiteResult suite_fixed_point(const VerifyOptions& opts);
SuiteResult suite_sampled(const VerifyOptions& opts);
SuiteResult suite_gradients(const VerifyOptions& opts);
SuiteResult suite_knn(const VerifyOptions& opts);
SuiteResult suite_reward_scaling(const VerifyOptions& opts);
SuiteResult suite_metric_csv(const std::filesystem::path& path, double tol);

std::vector<SuiteResult> run_all(const VerifyOptions& opts);
nlohmann::json to_json(const std::vector<SuiteResult>& results);

// Max relative error |a - n| / max(|a|, |n|, floor) between analytic and
// central-difference gradients.
double max_relative_error(const std::vector<double>& analytic, const std::vector<double>& numeric, double floor);

}  // namespace ploff::verify
