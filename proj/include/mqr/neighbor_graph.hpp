#pragma once
// Bounded-degree exact k-NN graph over effective item rows (L2). The sampler
// expands its candidate pool through these adjacency lists.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "mqr/scoring.hpp"

namespace mqr {

inline constexpr std::uint32_t kDefaultDegree = 32;
inline constexpr std::uint32_t kNoNeighbor = 0xFFFFFFFFu;

struct NeighborGraph {
  std::uint32_t n = 0;
  std::uint32_t degree = 0;
  std::vector<std::uint32_t> adjacency;  // n*degree, kNoNeighbor padding

  // Stored list for one item: ascending distance, ties by ascending id.
  std::span<const std::uint32_t> neighbors(ItemId id) const;
};

// Exhaustive k-NN (no self loops); deterministic for identical inputs.
// degree >= n is clamped to n-1 with a warning on stderr; degree 0 is an error.
NeighborGraph build_exact_knn(const MatF& rows, std::uint32_t degree);
NeighborGraph build_exact_knn(const DecomposedMapping& mapping, std::uint32_t degree,
                              RowMode mode = RowMode::sum);

// Graph file: magic "URMG", version u32 LE, n u64 LE, degree u32 LE,
// n*degree u32 LE ids (kNoNeighbor padding), trailing CRC32.
void save_graph(const NeighborGraph& graph, const std::string& path);
NeighborGraph load_graph(const std::string& path);

// Edge-gap diagnostic: neighbors are built on L2 over H-dim rows, while the
// score-continuity guarantee is stated through ||U v_i - U v_j||. This
// reports that D-dim gap over all stored edges, and bound * max as the
// worst-case score difference any edge can carry.
struct NeighborGapStats {
  std::size_t edges = 0;
  double mean_projected_gap = 0.0;  // mean ||U (v_i - v_j)|| over edges
  double max_projected_gap = 0.0;
  double max_score_gap_bound = 0.0;  // max_projected_gap * bound
};

NeighborGapStats neighbor_gap_diagnostic(const DecomposedMapping& mapping,
                                         const NeighborGraph& graph,
                                         float bound = kDefaultBound,
                                         RowMode mode = RowMode::sum);

}  // namespace mqr
