#pragma once
// Candidate universe: items, interactions, objective templates, and the
// on-disk JSONL / registry formats.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mqr/mat.hpp"

namespace mqr {

using ItemId = std::uint32_t;

struct ItemMeta {
  std::string title;
  std::string category;
  std::string price;
  std::string shop;
};

struct CandidateCatalog {
  std::size_t n_items = 0;
  std::size_t text_dim = 0;              // G
  std::vector<std::uint64_t> frequencies;
  std::vector<std::uint8_t> seen_flags;  // freq > 0, i.e. appears in training data
  MatF text_features;                    // n_items x G
  std::vector<ItemMeta> metadata;

  bool valid_id(ItemId id) const { return id < n_items; }
};

struct InteractionRecord {
  std::string user_id;
  std::string objective_tag;
  std::vector<ItemId> history;   // most recent last
  std::vector<ItemId> positives;
  std::string query_text;
};

struct ObjectiveSpec {
  std::string tag;
  std::string tmpl;  // may contain {QUERY}

  std::string instantiate(const std::string& query) const;
};

struct ObjectiveRegistry {
  std::vector<ObjectiveSpec> specs;

  const ObjectiveSpec* find(const std::string& tag) const;
  void add(ObjectiveSpec spec);  // throws on duplicate tag
};

// Serialized request sequence: text tokens interleaved with item-id tokens,
// query-slot sentinels last.
enum class TokenKind { text, item, query_slot };

struct Token {
  TokenKind kind = TokenKind::text;
  std::string text;
  ItemId item = 0;
  std::uint32_t slot = 0;

  static Token make_text(std::string t) { return {TokenKind::text, std::move(t), 0, 0}; }
  static Token make_item(ItemId id) { return {TokenKind::item, {}, id, 0}; }
  static Token make_slot(std::uint32_t s) { return {TokenKind::query_slot, {}, 0, s}; }

  friend bool operator==(const Token&, const Token&) = default;
};

using TokenSeq = std::vector<Token>;

std::string render(const TokenSeq& seq);

inline constexpr std::size_t kDefaultMaxHistory = 300;

// Template instantiation for one request. History keeps the most recent
// max_history entries; empty fragments are omitted entirely, never padded.
TokenSeq serialize_user(const InteractionRecord& record,
                        const ObjectiveSpec& objective,
                        std::size_t query_tokens,
                        std::size_t max_history = kDefaultMaxHistory);

std::string serialize_item(const CandidateCatalog& catalog, ItemId id);

CandidateCatalog load_catalog(const std::string& path);
void save_catalog(const CandidateCatalog& catalog, const std::string& path);

// Sparse-id ingestion: accepts arbitrary non-negative ids, returns the
// catalog remapped to dense 0..n-1 plus the original id of each dense slot
// (sorted ascending). Interactions referencing the old ids can be rewritten
// through remap_interactions.
struct RemappedCatalog {
  CandidateCatalog catalog;
  std::vector<std::uint64_t> original_ids;  // index = dense id
};

RemappedCatalog load_catalog_sparse(const std::string& path);
void remap_interactions(const std::string& in_path, const std::string& out_path,
                        const RemappedCatalog& remapped);

std::vector<InteractionRecord> load_interactions(
    const std::string& path, const CandidateCatalog& catalog,
    std::size_t max_history = kDefaultMaxHistory, bool require_positives = true);
void save_interactions(std::span<const InteractionRecord> records,
                       const std::string& path);

ObjectiveRegistry load_objective_registry(const std::string& path);

}  // namespace mqr
