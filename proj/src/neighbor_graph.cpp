#include "mqr/neighbor_graph.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

namespace mqr {

std::span<const std::uint32_t> NeighborGraph::neighbors(ItemId id) const {
  if (id >= n)
    throw std::out_of_range("neighbors: id " + std::to_string(id) + " out of range");
  const auto* base = adjacency.data() + static_cast<std::size_t>(id) * degree;
  std::size_t len = 0;
  while (len < degree && base[len] != kNoNeighbor) ++len;
  return {base, len};
}

NeighborGraph build_exact_knn(const MatF& rows, std::uint32_t degree) {
  if (degree == 0) throw std::invalid_argument("build_exact_knn: degree must be >= 1");
  const std::size_t n = rows.rows;
  if (n == 0) throw std::invalid_argument("build_exact_knn: no rows");
  if (degree >= n) {
    std::fprintf(stderr, "warning: degree %u >= n %zu, clamping to %zu\n", degree, n,
                 n - 1);
    degree = static_cast<std::uint32_t>(n - 1);
  }

  NeighborGraph g;
  g.n = static_cast<std::uint32_t>(n);
  g.degree = degree;
  g.adjacency.assign(n * static_cast<std::size_t>(degree), kNoNeighbor);
  if (degree == 0) return g;  // n == 1

  struct Cand {
    double dist_sq;
    std::uint32_t id;
    bool operator<(const Cand& o) const {  // max-heap on (dist, id)
      if (dist_sq != o.dist_sq) return dist_sq < o.dist_sq;
      return id < o.id;
    }
  };

  std::vector<Cand> heap;
  heap.reserve(degree + 1);
  for (std::size_t i = 0; i < n; ++i) {
    heap.clear();
    const auto ri = rows.row(i);
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      const double d = l2_dist_sq_f64(ri, rows.row(j));
      const Cand c{d, static_cast<std::uint32_t>(j)};
      if (heap.size() < degree) {
        heap.push_back(c);
        std::push_heap(heap.begin(), heap.end());
      } else if (c < heap.front()) {
        std::pop_heap(heap.begin(), heap.end());
        heap.back() = c;
        std::push_heap(heap.begin(), heap.end());
      }
    }
    std::sort(heap.begin(), heap.end());
    auto* out = g.adjacency.data() + i * static_cast<std::size_t>(degree);
    for (std::size_t k = 0; k < heap.size(); ++k) out[k] = heap[k].id;
  }
  return g;
}

NeighborGraph build_exact_knn(const DecomposedMapping& mapping, std::uint32_t degree,
                              RowMode mode) {
  return build_exact_knn(effective_rows(mapping, mode), degree);
}

NeighborGapStats neighbor_gap_diagnostic(const DecomposedMapping& mapping,
                                         const NeighborGraph& graph,
                                         float bound, RowMode mode) {
  if (graph.n != mapping.n_items())
    throw std::runtime_error("neighbor_gap_diagnostic: graph size mismatch");
  const MatF rows = effective_rows(mapping, mode);
  const std::size_t d = mapping.feature_dim(), h = mapping.rank();
  NeighborGapStats stats;
  double sum = 0.0;
  std::vector<double> diff(h);
  for (ItemId i = 0; i < graph.n; ++i) {
    const auto ri = rows.row(i);
    for (std::uint32_t j : graph.neighbors(i)) {
      const auto rj = rows.row(j);
      for (std::size_t k = 0; k < h; ++k)
        diff[k] = static_cast<double>(ri[k]) - static_cast<double>(rj[k]);
      double gap_sq = 0.0;
      for (std::size_t a = 0; a < d; ++a) {
        double acc = 0.0;
        for (std::size_t k = 0; k < h; ++k)
          acc += static_cast<double>(mapping.u.at(a, k)) * diff[k];
        gap_sq += acc * acc;
      }
      const double gap = std::sqrt(gap_sq);
      sum += gap;
      stats.max_projected_gap = std::max(stats.max_projected_gap, gap);
      ++stats.edges;
    }
  }
  if (stats.edges) stats.mean_projected_gap = sum / static_cast<double>(stats.edges);
  stats.max_score_gap_bound = stats.max_projected_gap * bound;
  return stats;
}

void save_graph(const NeighborGraph& graph, const std::string& path) {
  ByteWriter payload;
  payload.put_u64(graph.n);
  payload.put_u32(graph.degree);
  for (std::uint32_t v : graph.adjacency) payload.put_u32(v);
  write_checked_file(path, "URMG", 1, payload.buf);
}

NeighborGraph load_graph(const std::string& path) {
  auto [version, payload] = read_checked_file(path, "URMG");
  if (version != 1)
    throw std::runtime_error(path + ": unsupported URMG version " +
                             std::to_string(version));
  ByteReader r({reinterpret_cast<const unsigned char*>(payload.data()), payload.size()});
  NeighborGraph g;
  const std::uint64_t n = r.get_u64();
  g.degree = r.get_u32();
  if (n > (1ull << 32))
    throw std::runtime_error(path + ": implausible item count");
  g.n = static_cast<std::uint32_t>(n);
  const std::size_t count = static_cast<std::size_t>(g.n) * g.degree;
  if (r.remaining() != count * 4)
    throw std::runtime_error(path + ": adjacency size mismatch");
  g.adjacency.resize(count);
  for (auto& v : g.adjacency) v = r.get_u32();
  for (std::size_t i = 0; i < count; ++i)
    if (g.adjacency[i] != kNoNeighbor && g.adjacency[i] >= g.n)
      throw std::runtime_error(path + ": neighbor id out of range");
  return g;
}

}  // namespace mqr
