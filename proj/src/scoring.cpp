#include "mqr/scoring.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <numeric>

namespace mqr {

RowMode parse_row_mode(const std::string& s) {
  if (s == "dis") return RowMode::dis;
  if (s == "trans") return RowMode::trans;
  if (s == "sum") return RowMode::sum;
  throw std::runtime_error("unknown row mode: " + s + " (expected dis|trans|sum)");
}

const char* row_mode_name(RowMode mode) {
  switch (mode) {
    case RowMode::dis: return "dis";
    case RowMode::trans: return "trans";
    case RowMode::sum: return "sum";
  }
  return "?";
}

void DecomposedMapping::attach_text_features(const CandidateCatalog& catalog) {
  text_features = &catalog.text_features;
  check_consistent();
}

void DecomposedMapping::check_consistent() const {
  if (u.cols != v_dis.cols || u.cols != p_trans.cols)
    throw std::runtime_error("mapping rank mismatch between U, V_dis, P_trans");
  if (head_norm && head_gain.size() != rank())
    throw std::runtime_error("head_gain size does not match rank");
  if (text_features) {
    if (text_features->rows != v_dis.rows)
      throw std::runtime_error("text feature rows do not match catalog size");
    if (text_features->cols != p_trans.rows)
      throw std::runtime_error("text feature dim does not match P_trans rows");
  }
}

BoundedQueryBlock bound_constrain(const QueryBlock& queries, float bound) {
  if (!(bound > 0.f)) throw std::invalid_argument("bound must be positive");
  for (float v : queries.f.data)
    if (!std::isfinite(v)) throw std::runtime_error("bound_constrain: non-finite input");

  BoundedQueryBlock out{queries.f, bound};
  const std::size_t d = queries.f.rows, m = queries.f.cols;
  for (std::size_t j = 0; j < m; ++j) {
    for (;;) {
      double sq = 0.0;
      for (std::size_t i = 0; i < d; ++i) {
        const double v = out.f.at(i, j);
        sq += v * v;
      }
      const double norm = std::sqrt(sq);
      if (norm <= static_cast<double>(bound)) break;
      // Norms a hair above the bound would rescale to the same floats and
      // never terminate; capping the factor guarantees progress. The
      // undershoot is at most 1e-7 relative.
      const double scale = std::min(static_cast<double>(bound) / norm, 1.0 - 1e-7);
      for (std::size_t i = 0; i < d; ++i)
        out.f.at(i, j) = static_cast<float>(out.f.at(i, j) * scale);
    }
  }
  return out;
}

ProjectedQueryBlock project_queries_traced(const DecomposedMapping& mapping,
                                           const BoundedQueryBlock& bounded,
                                           MatF& pre_out,
                                           std::vector<float>& rms_out) {
  const std::size_t d = mapping.u.rows, h = mapping.u.cols;
  if (bounded.f.rows != d)
    throw std::runtime_error("project_queries: query dim " +
                             std::to_string(bounded.f.rows) + " != U rows " +
                             std::to_string(d));
  const std::size_t m = bounded.f.cols;
  pre_out = MatF(h, m);
  rms_out.assign(m, 1.f);
  ProjectedQueryBlock proj{MatF(h, m)};
  for (std::size_t j = 0; j < m; ++j) {
    for (std::size_t k = 0; k < h; ++k) {
      double acc = 0.0;
      for (std::size_t i = 0; i < d; ++i)
        acc += static_cast<double>(mapping.u.at(i, k)) *
               static_cast<double>(bounded.f.at(i, j));
      pre_out.at(k, j) = static_cast<float>(acc);
    }
    if (mapping.head_norm) {
      double sq = 0.0;
      for (std::size_t k = 0; k < h; ++k) {
        const double v = pre_out.at(k, j);
        sq += v * v;
      }
      const float rms =
          std::sqrt(static_cast<float>(sq / static_cast<double>(h)) + kRmsEps);
      rms_out[j] = rms;
      for (std::size_t k = 0; k < h; ++k)
        proj.f.at(k, j) = pre_out.at(k, j) * mapping.head_gain[k] / rms;
    } else {
      for (std::size_t k = 0; k < h; ++k) proj.f.at(k, j) = pre_out.at(k, j);
    }
  }
  return proj;
}

ProjectedQueryBlock project_queries(const DecomposedMapping& mapping,
                                    const BoundedQueryBlock& bounded) {
  MatF pre;
  std::vector<float> rms;
  return project_queries_traced(mapping, bounded, pre, rms);
}

void effective_item_row(const DecomposedMapping& mapping, ItemId id, RowMode mode,
                        std::span<float> out) {
  if (id >= mapping.n_items())
    throw std::out_of_range("effective_item_row: id " + std::to_string(id) +
                            " out of range");
  const std::size_t h = mapping.rank();
  if (out.size() != h) throw std::invalid_argument("effective_item_row: bad span size");

  if (mode == RowMode::dis) {
    auto r = mapping.v_dis.row(id);
    std::copy(r.begin(), r.end(), out.begin());
    return;
  }
  if (!mapping.text_features)
    throw std::runtime_error("effective_item_row: text features not attached");
  auto text = mapping.text_features->row(id);
  for (std::size_t k = 0; k < h; ++k) {
    double acc = 0.0;
    for (std::size_t g = 0; g < text.size(); ++g)
      acc += static_cast<double>(text[g]) * static_cast<double>(mapping.p_trans.at(g, k));
    out[k] = static_cast<float>(acc);
  }
  if (mode == RowMode::sum) {
    auto r = mapping.v_dis.row(id);
    for (std::size_t k = 0; k < h; ++k) out[k] += r[k];
  }
}

MatF effective_rows(const DecomposedMapping& mapping, RowMode mode) {
  MatF rows(mapping.n_items(), mapping.rank());
  for (ItemId id = 0; id < mapping.n_items(); ++id)
    effective_item_row(mapping, id, mode, rows.row(id));
  return rows;
}

namespace {

float max_dot_score(std::span<const float> row, const MatF& proj) {
  const std::size_t h = proj.rows, m = proj.cols;
  double best = -std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < m; ++j) {
    double acc = 0.0;
    for (std::size_t k = 0; k < h; ++k)
      acc += static_cast<double>(row[k]) * static_cast<double>(proj.at(k, j));
    best = std::max(best, acc);
  }
  return static_cast<float>(best);
}

}  // namespace

ScoreVector score_items(const DecomposedMapping& mapping,
                        std::span<const ItemId> ids,
                        const ProjectedQueryBlock& proj, RowMode mode) {
  if (proj.f.rows != mapping.rank())
    throw std::runtime_error("score_items: projected dim does not match rank");
  ScoreVector sv;
  sv.ids.assign(ids.begin(), ids.end());
  sv.scores.resize(ids.size());
  std::vector<float> row(mapping.rank());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    effective_item_row(mapping, ids[i], mode, row);
    sv.scores[i] = max_dot_score(row, proj.f);
  }
  return sv;
}

ScoreVector score_items_cached(const MatF& rows, std::span<const ItemId> ids,
                               const ProjectedQueryBlock& proj) {
  if (proj.f.rows != rows.cols)
    throw std::runtime_error("score_items_cached: projected dim does not match rows");
  ScoreVector sv;
  sv.ids.assign(ids.begin(), ids.end());
  sv.scores.resize(ids.size());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] >= rows.rows)
      throw std::out_of_range("score_items_cached: id out of range");
    sv.scores[i] = max_dot_score(rows.row(ids[i]), proj.f);
  }
  return sv;
}

std::vector<double> softmax_tau(std::span<const float> scores, double tau) {
  if (scores.empty()) throw std::invalid_argument("softmax_tau: empty input");
  if (!(tau > 0.0)) throw std::invalid_argument("softmax_tau: tau must be positive");
  double m = -std::numeric_limits<double>::infinity();
  for (float s : scores) m = std::max(m, static_cast<double>(s) / tau);
  std::vector<double> p(scores.size());
  double z = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    p[i] = std::exp(static_cast<double>(scores[i]) / tau - m);
    z += p[i];
  }
  for (double& v : p) v /= z;
  return p;
}

std::vector<float> full_scores(const DecomposedMapping& mapping,
                               const BoundedQueryBlock& bounded, RowMode mode) {
  const ProjectedQueryBlock proj = project_queries(mapping, bounded);
  std::vector<float> scores(mapping.n_items());
  std::vector<float> row(mapping.rank());
  for (ItemId id = 0; id < mapping.n_items(); ++id) {
    effective_item_row(mapping, id, mode, row);
    scores[id] = max_dot_score(row, proj.f);
  }
  return scores;
}

std::vector<double> full_distribution(const DecomposedMapping& mapping,
                                      const BoundedQueryBlock& bounded,
                                      double tau, RowMode mode) {
  const std::vector<float> scores = full_scores(mapping, bounded, mode);
  return softmax_tau(scores, tau);
}

std::vector<ItemId> topk_ids(std::span<const float> scores, std::size_t k) {
  std::vector<ItemId> ids(scores.size());
  std::iota(ids.begin(), ids.end(), 0u);
  k = std::min(k, ids.size());
  std::partial_sort(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(k),
                    ids.end(), [&](ItemId a, ItemId b) {
                      if (scores[a] != scores[b]) return scores[a] > scores[b];
                      return a < b;
                    });
  ids.resize(k);
  return ids;
}

void put_matrix(ByteWriter& w, const MatF& m) {
  w.put_u64(m.rows);
  w.put_u64(m.cols);
  for (float v : m.data) w.put_f32(v);
}

MatF get_matrix(ByteReader& r) {
  const std::uint64_t rows = r.get_u64();
  const std::uint64_t cols = r.get_u64();
  if (rows > (1ull << 32) || cols > (1ull << 32) ||
      rows * cols * 4 > r.remaining())
    throw std::runtime_error("matrix section larger than file");
  MatF m(rows, cols);
  for (float& v : m.data) v = r.get_f32();
  return m;
}

void write_checked_file(const std::string& path, const char magic[4],
                        std::uint32_t version, const std::string& payload) {
  ByteWriter file;
  file.put_bytes(magic, 4);
  file.put_u32(version);
  file.buf += payload;
  ByteWriter crc;
  crc.put_u32(crc32_str(payload));
  file.buf += crc.buf;
  write_file_bytes(path, file.buf);
}

std::pair<std::uint32_t, std::string> read_checked_file(const std::string& path,
                                                        const char magic[4]) {
  const std::string bytes = read_file_bytes(path);
  if (bytes.size() < 12 || std::memcmp(bytes.data(), magic, 4) != 0)
    throw std::runtime_error(path + ": bad magic (expected " +
                             std::string(magic, 4) + ")");
  ByteReader r({reinterpret_cast<const unsigned char*>(bytes.data()), bytes.size()});
  r.pos = 4;
  const std::uint32_t version = r.get_u32();
  const std::string payload = bytes.substr(8, bytes.size() - 12);
  ByteReader tail({reinterpret_cast<const unsigned char*>(bytes.data()) + bytes.size() - 4, 4});
  const std::uint32_t stored = tail.get_u32();
  if (crc32_str(payload) != stored)
    throw std::runtime_error(path + ": CRC mismatch (corrupt file)");
  return {version, payload};
}

void save_mapping(const DecomposedMapping& mapping, const std::string& path) {
  ByteWriter payload;
  put_matrix(payload, mapping.u);
  put_matrix(payload, mapping.v_dis);
  put_matrix(payload, mapping.p_trans);
  write_checked_file(path, "URMM", kMappingVersionBare, payload.buf);
}

DecomposedMapping load_mapping(const std::string& path) {
  auto [version, payload] = read_checked_file(path, "URMM");
  if (version != kMappingVersionBare)
    throw std::runtime_error(path + ": unsupported URMM version " +
                             std::to_string(version));
  ByteReader r({reinterpret_cast<const unsigned char*>(payload.data()), payload.size()});
  DecomposedMapping m;
  m.u = get_matrix(r);
  m.v_dis = get_matrix(r);
  m.p_trans = get_matrix(r);
  if (r.remaining() != 0)
    throw std::runtime_error(path + ": trailing bytes after matrices");
  m.head_norm = false;
  m.head_gain.assign(m.rank(), 1.f);
  return m;
}

}  // namespace mqr
