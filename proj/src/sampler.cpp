#include "mqr/sampler.hpp"

#include <algorithm>
#include <numeric>

namespace mqr {

namespace {

// Stream tags: 0 = initial subset, 1..T = per-step Gumbel noise.
constexpr std::uint64_t kInitStream = 0;

}  // namespace

void SamplerConfig::validate() const {
  if (steps == 0) throw std::invalid_argument("sampler: T must be >= 1");
  if (k == 0) throw std::invalid_argument("sampler: K must be >= 1");
  if (!(tau > 0.0)) throw std::invalid_argument("sampler: tau must be positive");
  if (!(bound > 0.f)) throw std::invalid_argument("sampler: B must be positive");
  if (resolved_init_subset() < k)
    throw std::invalid_argument("sampler: init_subset must be >= K");
}

SamplerState init_pool(std::size_t n_items, const SamplerConfig& config,
                       SplitMix64& rng) {
  if (n_items == 0) throw std::invalid_argument("init_pool: empty catalog");
  const std::size_t m = std::min<std::size_t>(config.resolved_init_subset(), n_items);

  // Partial Fisher-Yates over the id range.
  std::vector<ItemId> ids(n_items);
  std::iota(ids.begin(), ids.end(), 0u);
  for (std::size_t i = 0; i < m; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.bounded(n_items - i));
    std::swap(ids[i], ids[j]);
  }
  SamplerState state;
  state.pool.assign(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(m));
  std::sort(state.pool.begin(), state.pool.end());
  return state;
}

SamplerState sample_step(const SamplerState& state, const MatF& rows,
                         const ProjectedQueryBlock& proj,
                         const NeighborGraph& graph, const SamplerConfig& config,
                         SplitMix64& rng) {
  if (state.pool.empty()) throw std::invalid_argument("sample_step: empty pool");
  const ScoreVector scored = score_items_cached(rows, state.pool, proj);

  const std::size_t pool_n = state.pool.size();
  const std::size_t take = std::min<std::size_t>(config.k, pool_n);

  std::vector<std::size_t> order(pool_n);
  std::iota(order.begin(), order.end(), 0u);
  if (take < pool_n) {
    // Gumbel-top-K == sampling K distinct items from softmax(score/tau).
    std::vector<double> keys(pool_n);
    for (std::size_t i = 0; i < pool_n; ++i)
      keys[i] = static_cast<double>(scored.scores[i]) + config.tau * rng.gumbel();
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(take),
                      order.end(), [&](std::size_t a, std::size_t b) {
                        if (keys[a] != keys[b]) return keys[a] > keys[b];
                        return scored.ids[a] < scored.ids[b];
                      });
    order.resize(take);
  }

  SamplerState next;
  next.step = state.step + 1;
  next.sampled.resize(take);
  next.sampled_scores.resize(take);
  std::vector<std::size_t> by_id(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(take));
  std::sort(by_id.begin(), by_id.end());  // pool is id-sorted, so index order = id order
  for (std::size_t i = 0; i < take; ++i) {
    next.sampled[i] = scored.ids[by_id[i]];
    next.sampled_scores[i] = scored.scores[by_id[i]];
  }

  next.pool.reserve(take * (graph.degree + 1));
  for (std::size_t i = 0; i < take; ++i) {
    const ItemId s = next.sampled[i];
    next.pool.push_back(s);
    const auto nbr = graph.neighbors(s);
    next.pool.insert(next.pool.end(), nbr.begin(), nbr.end());
  }
  std::sort(next.pool.begin(), next.pool.end());
  next.pool.erase(std::unique(next.pool.begin(), next.pool.end()), next.pool.end());
  return next;
}

std::vector<RetrievedItem> retrieve_cached(const DecomposedMapping& mapping,
                                           const MatF& rows,
                                           const QueryBlock& queries,
                                           const NeighborGraph& graph,
                                           const SamplerConfig& config) {
  config.validate();
  if (graph.n != mapping.n_items())
    throw std::runtime_error("retrieve: graph size does not match mapping");
  if (rows.rows != mapping.n_items() || rows.cols != mapping.rank())
    throw std::runtime_error("retrieve: row cache shape mismatch");

  const BoundedQueryBlock bounded = bound_constrain(queries, config.bound);
  const ProjectedQueryBlock proj = project_queries(mapping, bounded);

  SplitMix64 init_rng = SplitMix64::stream(config.seed, kInitStream);
  SamplerState state = init_pool(mapping.n_items(), config, init_rng);
  for (std::uint32_t t = 1; t <= config.steps; ++t) {
    SplitMix64 step_rng = SplitMix64::stream(config.seed, t);
    state = sample_step(state, rows, proj, graph, config, step_rng);
  }

  std::vector<RetrievedItem> result;
  if (config.final == FinalSelection::topk_pool) {
    const ScoreVector scored = score_items_cached(rows, state.pool, proj);
    std::vector<std::size_t> order(state.pool.size());
    std::iota(order.begin(), order.end(), 0u);
    const std::size_t take = std::min<std::size_t>(config.k, order.size());
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(take),
                      order.end(), [&](std::size_t a, std::size_t b) {
                        if (scored.scores[a] != scored.scores[b])
                          return scored.scores[a] > scored.scores[b];
                        return scored.ids[a] < scored.ids[b];
                      });
    result.reserve(take);
    for (std::size_t i = 0; i < take; ++i)
      result.push_back({scored.ids[order[i]], scored.scores[order[i]]});
  } else {
    result.reserve(state.sampled.size());
    for (std::size_t i = 0; i < state.sampled.size(); ++i)
      result.push_back({state.sampled[i], state.sampled_scores[i]});
    std::sort(result.begin(), result.end(), [](const RetrievedItem& a, const RetrievedItem& b) {
      if (a.score != b.score) return a.score > b.score;
      return a.id < b.id;
    });
  }
  return result;
}

std::vector<RetrievedItem> retrieve(const DecomposedMapping& mapping,
                                    const QueryBlock& queries,
                                    const NeighborGraph& graph,
                                    const SamplerConfig& config) {
  return retrieve_cached(mapping, effective_rows(mapping, config.mode), queries,
                         graph, config);
}

}  // namespace mqr
