#pragma once
// Iterative probabilistic retrieval: seed a random pool, repeatedly sample K
// items from the pool softmax (Gumbel-top-K, without replacement) and replace
// the pool with the samples plus their graph neighbors. T rounds, return the
// last sample set.

#include <cstdint>
#include <utility>
#include <vector>

#include "mqr/neighbor_graph.hpp"
#include "mqr/rng.hpp"
#include "mqr/scoring.hpp"

namespace mqr {

enum class FinalSelection { sample_set, topk_pool };

struct SamplerConfig {
  std::uint32_t steps = 4;        // T
  std::uint32_t k = 1000;         // samples per step and result size
  double tau = kDefaultTau;
  std::uint32_t init_subset = 0;  // 0 -> 10*k
  std::uint64_t seed = 0;
  float bound = kDefaultBound;
  RowMode mode = RowMode::sum;
  FinalSelection final = FinalSelection::sample_set;

  std::uint32_t resolved_init_subset() const {
    return init_subset == 0 ? 10 * k : init_subset;
  }
  void validate() const;
};

struct SamplerState {
  std::vector<ItemId> pool;            // N_t, ascending ids
  std::vector<ItemId> sampled;         // S_t, ascending ids
  std::vector<float> sampled_scores;   // aligned with sampled
  std::uint32_t step = 0;
};

// N_0: init_subset distinct items, uniform without replacement, sorted.
SamplerState init_pool(std::size_t n_items, const SamplerConfig& config,
                       SplitMix64& rng);

// One round: score pool, Gumbel-top-K on keys score + tau*g, expand through
// the graph. Pools smaller than K are taken whole.
SamplerState sample_step(const SamplerState& state, const MatF& rows,
                         const ProjectedQueryBlock& proj,
                         const NeighborGraph& graph, const SamplerConfig& config,
                         SplitMix64& rng);

struct RetrievedItem {
  ItemId id;
  float score;

  friend bool operator==(const RetrievedItem&, const RetrievedItem&) = default;
};

// Full pipeline; deterministic given the config seed. Result is sorted by
// descending score, ties by ascending id.
std::vector<RetrievedItem> retrieve(const DecomposedMapping& mapping,
                                    const QueryBlock& queries,
                                    const NeighborGraph& graph,
                                    const SamplerConfig& config);
// Same, reusing materialized effective rows (must match config.mode).
std::vector<RetrievedItem> retrieve_cached(const DecomposedMapping& mapping,
                                           const MatF& rows,
                                           const QueryBlock& queries,
                                           const NeighborGraph& graph,
                                           const SamplerConfig& config);

}  // namespace mqr
