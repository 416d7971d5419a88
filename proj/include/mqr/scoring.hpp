#pragma once
// Score arithmetic over the decomposed item mapping: per-column norm bound,
// low-rank query projection (optionally RMS-normalized), multi-query max
// aggregation, temperature softmax, and the exhaustive oracle distribution.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "mqr/binio.hpp"
#include "mqr/catalog.hpp"
#include "mqr/mat.hpp"

namespace mqr {

// Which side of the decomposition backs an item row.
enum class RowMode { dis, trans, sum };

RowMode parse_row_mode(const std::string& s);
const char* row_mode_name(RowMode mode);

inline constexpr float kDefaultBound = 100.f;
inline constexpr double kDefaultTau = 0.07;
inline constexpr float kRmsEps = 1e-6f;

// M query representations, one per column; rows = feature dim D.
struct QueryBlock {
  MatF f;  // D x M

  std::size_t dim() const { return f.rows; }
  std::size_t count() const { return f.cols; }
};

struct BoundedQueryBlock {
  MatF f;  // D x M, every column L2 norm <= bound
  float bound = kDefaultBound;
};

struct ProjectedQueryBlock {
  MatF f;  // H x M
};

struct DecomposedMapping {
  MatF u;        // D x H
  MatF v_dis;    // |C| x H, learnable per-item rows
  MatF p_trans;  // G x H, projects fixed text features
  const MatF* text_features = nullptr;  // |C| x G, owned by the catalog
  bool head_norm = true;
  std::vector<float> head_gain;  // H, learnable, init 1

  std::size_t n_items() const { return v_dis.rows; }
  std::size_t rank() const { return v_dis.cols; }
  std::size_t feature_dim() const { return u.rows; }

  void attach_text_features(const CandidateCatalog& catalog);
  void check_consistent() const;
};

struct ScoreVector {
  std::vector<ItemId> ids;
  std::vector<float> scores;

  std::size_t size() const { return ids.size(); }
};

// Per-column scaling F_j / max(||F_j||/B, 1). Columns already within the
// bound are returned bit-identical; the op is idempotent and the cap holds
// exactly on the stored floats.
BoundedQueryBlock bound_constrain(const QueryBlock& queries, float bound);

// F_hat = U^T F_bar, then per-column RMS normalization when head_norm is set.
ProjectedQueryBlock project_queries(const DecomposedMapping& mapping,
                                    const BoundedQueryBlock& bounded);
// Same computation, also exposing the pre-normalization columns and per-column
// rms values (the training backward pass needs both).
ProjectedQueryBlock project_queries_traced(const DecomposedMapping& mapping,
                                           const BoundedQueryBlock& bounded,
                                           MatF& pre_out,
                                           std::vector<float>& rms_out);

// v_id under the requested mode: V_dis row, text-projected row, or their sum.
void effective_item_row(const DecomposedMapping& mapping, ItemId id,
                        RowMode mode, std::span<float> out);

// All effective rows materialized (n x H); worth it for repeated scoring.
MatF effective_rows(const DecomposedMapping& mapping, RowMode mode);

// score(i) = max_j <v_i, F_hat_j>.
ScoreVector score_items(const DecomposedMapping& mapping,
                        std::span<const ItemId> ids,
                        const ProjectedQueryBlock& proj,
                        RowMode mode = RowMode::sum);
ScoreVector score_items_cached(const MatF& rows, std::span<const ItemId> ids,
                               const ProjectedQueryBlock& proj);

std::vector<double> softmax_tau(std::span<const float> scores, double tau);

std::vector<float> full_scores(const DecomposedMapping& mapping,
                               const BoundedQueryBlock& bounded,
                               RowMode mode = RowMode::sum);
std::vector<double> full_distribution(const DecomposedMapping& mapping,
                                      const BoundedQueryBlock& bounded,
                                      double tau, RowMode mode = RowMode::sum);

// Indices of the k largest scores, descending, ties by ascending id.
std::vector<ItemId> topk_ids(std::span<const float> scores, std::size_t k);

// URMM checkpoint: magic "URMM", version u32 LE, then per matrix
// (U, V_dis, P_trans): rows u64 LE, cols u64 LE, row-major f32 LE payload,
// trailing CRC32 over all bytes after magic+version. Version 1 holds exactly
// those three matrices; version 2 (trainer bundle) appends more sections.
inline constexpr std::uint32_t kMappingVersionBare = 1;

void save_mapping(const DecomposedMapping& mapping, const std::string& path);
DecomposedMapping load_mapping(const std::string& path);  // text_features left null

// Matrix section encoding shared with the version-2 trainer checkpoint.
void put_matrix(ByteWriter& w, const MatF& m);
MatF get_matrix(ByteReader& r);
void write_checked_file(const std::string& path, const char magic[4],
                        std::uint32_t version, const std::string& payload);
// Verifies magic + CRC, returns (version, payload bytes).
std::pair<std::uint32_t, std::string> read_checked_file(const std::string& path,
                                                        const char magic[4]);

}  // namespace mqr
