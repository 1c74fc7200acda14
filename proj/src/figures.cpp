#include "ploff/figures.hpp"

#include "ploff/container.hpp"
#include "ploff/errors.hpp"
#include "ploff/stats.hpp"

#include <cmath>
#include <limits>
#include <sstream>

namespace ploff::figures {

env::TabularMDP gridworld_from_dataset(const data::TransitionDataset& d) {
  if (!d.meta.contains("map")) throw ValidationError("dataset metadata has no gridworld map");
  try {
    const auto map = env::GridMap::parse(d.meta.at("map").get<std::string>());
    return env::build_gridworld(map, d.meta.at("time_limit").get<int>(), d.meta.at("goal_reward").get<double>());
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed gridworld metadata: ") + e.what());
  }
}

Eigen::MatrixXd state_distance_heatmap(const approx::EmbedderPair& pair, const env::TabularMDP& mdp, int anchor_state) {
  if (anchor_state < 0 || anchor_state >= mdp.num_states) throw ValidationError("anchor state outside the grid");
  if (pair.state_dim != mdp.num_states) throw ValidationError("metric state dimension does not match the grid");
  Eigen::MatrixXd heat = Eigen::MatrixXd::Constant(mdp.grid_rows, mdp.grid_cols, std::numeric_limits<double>::quiet_NaN());
  const Eigen::VectorXd anchor = pair.psi.forward_one(env::encode_state(anchor_state, mdp));
  for (int s = 0; s < mdp.num_states; ++s) {
    const auto [row, col] = mdp.cell_of_state[static_cast<std::size_t>(s)];
    heat(row, col) = (pair.psi.forward_one(env::encode_state(s, mdp)) - anchor).norm();
  }
  return heat;
}

void save_heatmap_csv(const Eigen::MatrixXd& heatmap, const std::filesystem::path& path) {
  std::ostringstream out;
  out.precision(10);
  out << "row,col,distance\n";
  for (Eigen::Index r = 0; r < heatmap.rows(); ++r)
    for (Eigen::Index c = 0; c < heatmap.cols(); ++c)
      if (!std::isnan(heatmap(r, c))) out << r << ',' << c << ',' << heatmap(r, c) << '\n';
  io::write_file(path, out.str());
}

std::vector<NoiseRow> noise_perturbation(const approx::EmbedderPair& pair, const data::TransitionDataset& d,
                                         const std::vector<double>& lambdas, int samples, std::uint64_t seed) {
  if (d.n() == 0 || samples <= 0) throw ValidationError("noise export needs data and a positive sample count");
  for (double lambda : lambdas)
    if (!(lambda >= 0.0)) throw ValidationError("noise scales must be nonnegative");
  Rng rng = make_rng(seed, "noise");
  const auto rows = data::sample_indices(d.n(), static_cast<std::size_t>(samples), rng);
  std::normal_distribution<double> gauss(0.0, 1.0);
  // one direction per sample, shared by every lambda
  std::vector<Eigen::VectorXd> state_dirs;
  std::vector<Eigen::VectorXd> action_dirs;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    state_dirs.push_back(Eigen::VectorXd::NullaryExpr(d.state_dim, [&] { return gauss(rng); }));
    action_dirs.push_back(Eigen::VectorXd::NullaryExpr(d.action_dim, [&] { return gauss(rng); }));
  }
  std::vector<NoiseRow> out;
  for (const char* kind : {"state", "action"}) {
    const bool state = std::string(kind) == "state";
    for (double lambda : lambdas) {
      std::vector<double> dist;
      for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto& t = d.transitions[rows[i]];
        const Eigen::VectorXd s2 = state ? Eigen::VectorXd(t.s + lambda * state_dirs[i]) : t.s;
        const Eigen::VectorXd a2 = state ? t.a : Eigen::VectorXd(t.a + lambda * action_dirs[i]);
        dist.push_back(approx::d_phi(pair, t.s, t.a, s2, a2));
      }
      out.push_back({lambda, kind, mean(dist), quantile(dist, 0.1), quantile(dist, 0.5), quantile(dist, 0.9)});
    }
  }
  return out;
}

void save_noise_csv(const std::vector<NoiseRow>& rows, const std::filesystem::path& path) {
  std::ostringstream out;
  out.precision(10);
  out << "lambda,kind,mean,q10,q50,q90\n";
  for (const auto& r : rows)
    out << r.lambda << ',' << r.kind << ',' << r.mean << ',' << r.q10 << ',' << r.q50 << ',' << r.q90 << '\n';
  io::write_file(path, out.str());
}

}  // namespace ploff::figures
