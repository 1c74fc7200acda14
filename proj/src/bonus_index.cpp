#include "ploff/bonus_index.hpp"

#include "ploff/container.hpp"
#include "ploff/errors.hpp"
#include "ploff/parallel.hpp"

#include <cmath>
#include <limits>

namespace ploff::bonus {

std::string to_string(IndexKind kind) { return kind == IndexKind::learned ? "learned" : "euclidean"; }

std::span<const std::uint32_t> NeighborIndex::candidates(std::size_t j) const {
  if (j >= n()) throw ValidationError("dataset index out of range");
  return {neighbors.data() + j * list_size(), list_size()};
}

std::span<const std::uint32_t> NeighborIndex::next_candidates(std::size_t j) const {
  if (j >= n()) throw ValidationError("dataset index out of range");
  return {next_neighbors.data() + j * list_size(), list_size()};
}

namespace {

Eigen::VectorXd concat(const Eigen::VectorXd& s, const Eigen::VectorXd& a) {
  Eigen::VectorXd x(s.size() + a.size());
  x << s, a;
  return x;
}

}  // namespace

Eigen::VectorXd NeighborIndex::embed_state(const Eigen::VectorXd& s) const {
  if (s.size() != state_dim) throw ValidationError("state dimension does not match the index");
  return kind == IndexKind::learned ? psi.forward_one(s) : s;
}

Eigen::VectorXd NeighborIndex::embed_pair(const Eigen::VectorXd& s, const Eigen::VectorXd& a) const {
  if (s.size() != state_dim || a.size() != action_dim)
    throw ValidationError("state/action dimension does not match the index");
  return kind == IndexKind::learned ? phi.forward_one(concat(s, a)) : concat(s, a);
}

std::uint64_t metric_hash(const approx::EmbedderPair& pair) {
  return io::hash_bytes(io::encode_checkpoint(approx::to_checkpoint(pair)));
}

namespace {

void fill_lists(NeighborIndex& idx, const data::TransitionDataset& d) {
  const std::size_t n = d.n();
  const std::size_t m = idx.list_size();
  idx.neighbors.assign(n * m, 0);
  idx.next_neighbors.assign(n * m, 0);
  parallel_for(n, [&](std::size_t begin, std::size_t end) {
    for (std::size_t j = begin; j < end; ++j) {
      // dataset states reuse the cached embedding so self-distance is 0
      const auto own = idx.tree.query(idx.state_embeddings.col(static_cast<Eigen::Index>(j)), m);
      const auto next = idx.tree.query(idx.embed_state(d.transitions[j].s_next), m);
      for (std::size_t c = 0; c < m; ++c) {
        idx.neighbors[j * m + c] = own[c].index;
        idx.next_neighbors[j * m + c] = next[c].index;
      }
    }
  });
}

NeighborIndex prepare(IndexKind kind, const data::TransitionDataset& d, std::size_t k) {
  if (d.n() == 0) throw ValidationError("cannot index an empty dataset");
  if (k < 1) throw ValidationError("k must be >= 1");
  if (d.n() > std::numeric_limits<std::uint32_t>::max()) throw ValidationError("dataset too large to index");
  NeighborIndex idx;
  idx.kind = kind;
  idx.k = k;
  idx.state_dim = d.state_dim;
  idx.action_dim = d.action_dim;
  idx.dataset_hash = data::dataset_hash(d);
  return idx;
}

void embed_dataset(NeighborIndex& idx, const data::TransitionDataset& d) {
  const auto n = static_cast<Eigen::Index>(d.n());
  const auto first_state = idx.embed_state(d.transitions[0].s);
  const auto first_pair = idx.embed_pair(d.transitions[0].s, d.transitions[0].a);
  idx.state_embeddings.resize(first_state.size(), n);
  idx.pair_embeddings.resize(first_pair.size(), n);
  parallel_for(d.n(), [&](std::size_t begin, std::size_t end) {
    for (std::size_t j = begin; j < end; ++j) {
      const auto& t = d.transitions[j];
      idx.state_embeddings.col(static_cast<Eigen::Index>(j)) = idx.embed_state(t.s);
      idx.pair_embeddings.col(static_cast<Eigen::Index>(j)) = idx.embed_pair(t.s, t.a);
    }
  });
  if (!idx.state_embeddings.allFinite() || !idx.pair_embeddings.allFinite())
    throw NumericalError("non-finite embeddings while building the index");
}

}  // namespace

NeighborIndex build_neighbor_index(const approx::EmbedderPair& pair, const data::TransitionDataset& d, std::size_t k) {
  if (pair.state_dim != d.state_dim || pair.action_dim != d.action_dim)
    throw ValidationError("metric dimensions do not match the dataset");
  NeighborIndex idx = prepare(IndexKind::learned, d, k);
  idx.phi = pair.phi;
  idx.psi = pair.psi;
  idx.metric_hash = metric_hash(pair);
  embed_dataset(idx, d);
  idx.tree = knn::KdTree(idx.state_embeddings);
  fill_lists(idx, d);
  return idx;
}

NeighborIndex build_euclidean_index(const data::TransitionDataset& d, std::size_t k) {
  NeighborIndex idx = prepare(IndexKind::euclidean, d, k);
  embed_dataset(idx, d);
  idx.tree = knn::KdTree(idx.state_embeddings);
  fill_lists(idx, d);
  return idx;
}

std::vector<std::uint32_t> query_candidates(const NeighborIndex& idx, const Eigen::VectorXd& s) {
  const auto found = idx.tree.query(idx.embed_state(s), idx.list_size());
  std::vector<std::uint32_t> out;
  out.reserve(found.size());
  for (const auto& nb : found) out.push_back(nb.index);
  return out;
}

namespace {

Projection nearest_pair(const NeighborIndex& idx, const Eigen::Ref<const Eigen::VectorXd>& e,
                        std::span<const std::uint32_t> candidates) {
  if (candidates.empty()) throw ValidationError("empty candidate set");
  knn::Neighbor best{std::numeric_limits<double>::infinity(), 0};
  for (auto c : candidates) {
    const knn::Neighbor cand{knn::squared_distance(e, idx.pair_embeddings.col(c)), c};
    if (knn::closer(cand, best)) best = cand;
  }
  return {std::sqrt(best.dist2), best.index};
}

}  // namespace

Projection project(const NeighborIndex& idx, const Eigen::VectorXd& s, const Eigen::VectorXd& a,
                   std::span<const std::uint32_t> candidates) {
  for (auto c : candidates)
    if (c >= idx.n()) throw ValidationError("candidate index out of range");
  return nearest_pair(idx, idx.embed_pair(s, a), candidates);
}

double projection_distance(const NeighborIndex& idx, const Eigen::VectorXd& s, const Eigen::VectorXd& a) {
  return project(idx, s, a, query_candidates(idx, s)).distance;
}

double exact_projection_distance(const NeighborIndex& idx, const Eigen::VectorXd& s, const Eigen::VectorXd& a) {
  std::vector<std::uint32_t> all(idx.n());
  for (std::size_t j = 0; j < all.size(); ++j) all[j] = static_cast<std::uint32_t>(j);
  return project(idx, s, a, all).distance;
}

Eigen::VectorXd projection_distance_grad(const NeighborIndex& idx, const Eigen::VectorXd& s, const Eigen::VectorXd& a,
                                         std::uint32_t argmin) {
  if (argmin >= idx.n()) throw ValidationError("candidate index out of range");
  std::vector<std::span<const std::uint32_t>> candidates{std::span<const std::uint32_t>(&argmin, 1)};
  return batch_projection(idx, s, a, candidates, true).action_grad.col(0);
}

std::string to_string(BonusForm form) {
  switch (form) {
    case BonusForm::q_scaled_exp: return "q_scaled_exp";
    case BonusForm::exp: return "exp";
    case BonusForm::one_minus_exp: return "one_minus_exp";
  }
  return "unknown";
}

BonusForm parse_bonus_form(const std::string& tag) {
  if (tag == "q_scaled_exp" || tag == "q-scaled-exp") return BonusForm::q_scaled_exp;
  if (tag == "exp") return BonusForm::exp;
  if (tag == "one_minus_exp" || tag == "one-minus-exp") return BonusForm::one_minus_exp;
  throw ValidationError("unknown bonus form: " + tag);
}

void BonusSpec::validate() const {
  if (!(beta > 0.0) || !std::isfinite(beta)) throw ValidationError("beta must be positive");
  if (!(alpha_actor >= 0.0) || !(alpha_critic >= 0.0)) throw ValidationError("bonus weights must be nonnegative");
}

double bonus_from_distance(const BonusSpec& spec, double distance, std::optional<double> critic) {
  if (!(distance >= 0.0)) throw NumericalError("projection distance must be a nonnegative number");
  switch (spec.form) {
    case BonusForm::q_scaled_exp:
      if (!critic) throw ValidationError("the q_scaled_exp bonus needs a critic evaluator");
      return *critic * std::exp(-spec.beta * distance);
    case BonusForm::exp: return std::exp(-spec.beta * distance);
    case BonusForm::one_minus_exp: return 1.0 - std::exp(spec.beta * distance);
  }
  return 0.0;
}

double bonus(const NeighborIndex& idx, const BonusSpec& spec, const Eigen::VectorXd& s, const Eigen::VectorXd& a,
             const CriticEvaluator* critic) {
  spec.validate();
  if (spec.form == BonusForm::q_scaled_exp && (critic == nullptr || !*critic))
    throw ValidationError("the q_scaled_exp bonus needs a critic evaluator");
  const double distance = projection_distance(idx, s, a);
  std::optional<double> q;
  if (spec.form == BonusForm::q_scaled_exp) q = (*critic)(s, a);
  return bonus_from_distance(spec, distance, q);
}

BatchProjection batch_projection(const NeighborIndex& idx, const Eigen::MatrixXd& states, const Eigen::MatrixXd& actions,
                                 const std::vector<std::span<const std::uint32_t>>& candidates, bool want_grad) {
  const Eigen::Index batch = states.cols();
  if (actions.cols() != batch || static_cast<Eigen::Index>(candidates.size()) != batch)
    throw ValidationError("batch projection inputs disagree on batch size");
  if (states.rows() != idx.state_dim || actions.rows() != idx.action_dim)
    throw ValidationError("batch projection dimension mismatch");

  const Eigen::MatrixXd inputs = approx::concat_rows(states, actions);
  nn::MlpTape tape;
  const Eigen::MatrixXd emb =
      idx.kind == IndexKind::learned ? (want_grad ? idx.phi.forward(inputs, tape) : idx.phi.forward(inputs)) : inputs;

  BatchProjection out;
  out.distance.resize(batch);
  Eigen::MatrixXd grad_emb;
  if (want_grad) grad_emb = Eigen::MatrixXd::Zero(emb.rows(), batch);
  for (Eigen::Index i = 0; i < batch; ++i) {
    const auto p = nearest_pair(idx, emb.col(i), candidates[static_cast<std::size_t>(i)]);
    out.distance[i] = p.distance;
    if (want_grad && p.distance > 0.0) grad_emb.col(i) = (emb.col(i) - idx.pair_embeddings.col(p.argmin)) / p.distance;
  }
  if (!want_grad) return out;
  if (idx.kind == IndexKind::learned) {
    const Eigen::MatrixXd input_grad = idx.phi.backward(tape, grad_emb, nullptr, true);
    out.action_grad = input_grad.bottomRows(idx.action_dim);
  } else {
    out.action_grad = grad_emb.bottomRows(idx.action_dim);
  }
  return out;
}

BatchBonus combine_bonus(const BonusSpec& spec, const BatchProjection& projection, const Eigen::VectorXd* critic,
                         const Eigen::MatrixXd* critic_action_grad) {
  const Eigen::Index batch = projection.distance.size();
  const bool want_grad = projection.action_grad.size() > 0;
  if (spec.form == BonusForm::q_scaled_exp) {
    if (critic == nullptr || critic->size() != batch)
      throw ValidationError("the q_scaled_exp bonus needs critic values for the batch");
    if (want_grad && (critic_action_grad == nullptr || critic_action_grad->cols() != batch))
      throw ValidationError("the q_scaled_exp bonus gradient needs critic action gradients");
  }
  BatchBonus out;
  out.value.resize(batch);
  if (want_grad) out.action_grad.resize(projection.action_grad.rows(), batch);
  for (Eigen::Index i = 0; i < batch; ++i) {
    const double d = projection.distance[i];
    switch (spec.form) {
      case BonusForm::q_scaled_exp: {
        const double factor = std::exp(-spec.beta * d);
        out.value[i] = (*critic)[i] * factor;
        if (want_grad)
          out.action_grad.col(i) =
              factor * (critic_action_grad->col(i) - spec.beta * (*critic)[i] * projection.action_grad.col(i));
        break;
      }
      case BonusForm::exp: {
        const double factor = std::exp(-spec.beta * d);
        out.value[i] = factor;
        if (want_grad) out.action_grad.col(i) = -spec.beta * factor * projection.action_grad.col(i);
        break;
      }
      case BonusForm::one_minus_exp: {
        const double growth = std::exp(spec.beta * d);
        out.value[i] = 1.0 - growth;
        if (want_grad) out.action_grad.col(i) = -spec.beta * growth * projection.action_grad.col(i);
        break;
      }
    }
  }
  return out;
}

namespace {
constexpr std::string_view kIndexMagic = "PLNN1";
constexpr int kIndexVersion = 1;
}  // namespace

void save_index(const NeighborIndex& idx, const std::filesystem::path& path) {
  io::ByteWriter w;
  w.raw(kIndexMagic);
  w.json_line({{"version", kIndexVersion},
               {"kind", to_string(idx.kind)},
               {"k", idx.k},
               {"n", idx.n()},
               {"state_dim", idx.state_dim},
               {"action_dim", idx.action_dim},
               {"state_embed_dim", idx.state_embeddings.rows()},
               {"pair_embed_dim", idx.pair_embeddings.rows()},
               {"metric_hash", io::hex64(idx.metric_hash)},
               {"dataset_hash", io::hex64(idx.dataset_hash)}});
  for (auto v : idx.neighbors) w.u32(v);
  for (auto v : idx.next_neighbors) w.u32(v);
  for (Eigen::Index i = 0; i < idx.state_embeddings.size(); ++i) w.f64(idx.state_embeddings.data()[i]);
  for (Eigen::Index i = 0; i < idx.pair_embeddings.size(); ++i) w.f64(idx.pair_embeddings.data()[i]);
  io::write_file(path, w.bytes());
}

NeighborIndex load_index(const std::filesystem::path& path, const approx::EmbedderPair* metric) {
  io::ByteReader r(io::read_file(path));
  r.expect_magic(kIndexMagic, "PLNN1 index");
  const auto header = r.json_line();
  NeighborIndex idx;
  std::size_t n = 0;
  Eigen::Index state_embed = 0;
  Eigen::Index pair_embed = 0;
  std::string stored_metric_hash;
  try {
    if (header.at("version").get<int>() != kIndexVersion) throw ValidationError("index version mismatch");
    const auto kind = header.at("kind").get<std::string>();
    if (kind == "learned") idx.kind = IndexKind::learned;
    else if (kind == "euclidean") idx.kind = IndexKind::euclidean;
    else throw ValidationError("unknown index kind: " + kind);
    idx.k = header.at("k").get<std::size_t>();
    n = header.at("n").get<std::size_t>();
    idx.state_dim = header.at("state_dim").get<int>();
    idx.action_dim = header.at("action_dim").get<int>();
    state_embed = header.at("state_embed_dim").get<Eigen::Index>();
    pair_embed = header.at("pair_embed_dim").get<Eigen::Index>();
    stored_metric_hash = header.at("metric_hash").get<std::string>();
    idx.dataset_hash = std::stoull(header.at("dataset_hash").get<std::string>(), nullptr, 16);
    idx.metric_hash = std::stoull(stored_metric_hash, nullptr, 16);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed index header: ") + e.what());
  } catch (const std::logic_error& e) {
    throw ValidationError(std::string("malformed index hash: ") + e.what());
  }
  if (n == 0 || idx.k == 0 || state_embed <= 0 || pair_embed <= 0) throw ValidationError("index header has empty sizes");
  const std::size_t m = std::min(idx.k, n);
  const std::size_t expected = 2 * n * m * 4 + static_cast<std::size_t>(state_embed + pair_embed) * n * 8;
  if (r.remaining() != expected) throw ValidationError("index payload size does not match its header");
  idx.neighbors.resize(n * m);
  idx.next_neighbors.resize(n * m);
  for (auto& v : idx.neighbors) v = r.u32();
  for (auto& v : idx.next_neighbors) v = r.u32();
  for (auto v : idx.neighbors)
    if (v >= n) throw ValidationError("index neighbor id out of range");
  for (auto v : idx.next_neighbors)
    if (v >= n) throw ValidationError("index neighbor id out of range");
  idx.state_embeddings.resize(state_embed, static_cast<Eigen::Index>(n));
  idx.pair_embeddings.resize(pair_embed, static_cast<Eigen::Index>(n));
  for (Eigen::Index i = 0; i < idx.state_embeddings.size(); ++i) idx.state_embeddings.data()[i] = r.f64();
  for (Eigen::Index i = 0; i < idx.pair_embeddings.size(); ++i) idx.pair_embeddings.data()[i] = r.f64();

  if (idx.kind == IndexKind::learned) {
    if (metric == nullptr) throw ValidationError("a learned index needs its metric checkpoint");
    if (metric_hash(*metric) != idx.metric_hash)
      throw ValidationError("metric checkpoint does not match the one the index was built from");
    if (metric->phi.output_dim() != pair_embed || metric->psi.output_dim() != state_embed)
      throw ValidationError("metric embedding dims do not match the index");
    idx.phi = metric->phi;
    idx.psi = metric->psi;
  } else if (state_embed != idx.state_dim || pair_embed != idx.state_dim + idx.action_dim) {
    throw ValidationError("euclidean index embedding dims do not match its state/action dims");
  }
  idx.tree = knn::KdTree(idx.state_embeddings);
  return idx;
}

}  // namespace ploff::bonus
