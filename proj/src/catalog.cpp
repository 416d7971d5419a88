#include "mqr/catalog.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <unordered_map>

#include "json.hpp"

using json = nlohmann::json;

namespace mqr {

namespace {

std::string line_err(const std::string& path, std::size_t line_no,
                     const std::string& what) {
  std::ostringstream os;
  os << path << ":" << line_no << ": " << what;
  return os.str();
}

}  // namespace

std::string ObjectiveSpec::instantiate(const std::string& query) const {
  std::string out = tmpl;
  const std::string key = "{QUERY}";
  std::size_t pos = 0;
  while ((pos = out.find(key, pos)) != std::string::npos) {
    out.replace(pos, key.size(), query);
    pos += query.size();
  }
  return out;
}

const ObjectiveSpec* ObjectiveRegistry::find(const std::string& tag) const {
  for (const auto& s : specs)
    if (s.tag == tag) return &s;
  return nullptr;
}

void ObjectiveRegistry::add(ObjectiveSpec spec) {
  if (find(spec.tag))
    throw std::runtime_error("duplicate objective tag: " + spec.tag);
  specs.push_back(std::move(spec));
}

std::string render(const TokenSeq& seq) {
  std::string out;
  bool prev_item = false;
  for (const auto& t : seq) {
    switch (t.kind) {
      case TokenKind::text:
        out += t.text;
        prev_item = false;
        break;
      case TokenKind::item:
        if (prev_item) out += ' ';
        out += '[';
        out += std::to_string(t.item);
        out += ']';
        prev_item = true;
        break;
      case TokenKind::query_slot:
        out += "<q";
        out += std::to_string(t.slot);
        out += '>';
        prev_item = false;
        break;
    }
  }
  return out;
}

TokenSeq serialize_user(const InteractionRecord& record,
                        const ObjectiveSpec& objective,
                        std::size_t query_tokens, std::size_t max_history) {
  TokenSeq seq;
  const std::size_t h = record.history.size();
  const std::size_t keep = std::min(h, max_history);
  if (keep > 0) {
    seq.push_back(Token::make_text("The user has purchased "));
    for (std::size_t i = h - keep; i < h; ++i)
      seq.push_back(Token::make_item(record.history[i]));
    seq.push_back(Token::make_text(". "));
  }
  seq.push_back(Token::make_text(objective.instantiate(record.query_text)));
  for (std::uint32_t j = 0; j < query_tokens; ++j)
    seq.push_back(Token::make_slot(j));
  return seq;
}

std::string serialize_item(const CandidateCatalog& catalog, ItemId id) {
  if (!catalog.valid_id(id))
    throw std::out_of_range("serialize_item: id " + std::to_string(id) +
                            " out of range");
  const ItemMeta& m = catalog.metadata[id];
  std::vector<std::string> parts;
  if (!m.title.empty()) parts.push_back("The item title is " + m.title + ".");
  if (!m.category.empty()) parts.push_back("The category is " + m.category + ".");
  if (!m.price.empty()) parts.push_back("The price is " + m.price + ".");
  if (!m.shop.empty()) parts.push_back("The shop name is " + m.shop + ".");
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out += ' ';
    out += parts[i];
  }
  return out;
}

namespace {

struct RawItem {
  std::uint64_t id;
  std::uint64_t freq;
  std::vector<float> vec;
  ItemMeta meta;
};

std::vector<RawItem> parse_catalog_rows(const std::string& path,
                                        std::size_t& text_dim) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open catalog: " + path);
  std::vector<RawItem> rows;
  text_dim = 0;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw std::runtime_error(line_err(path, line_no, std::string("parse error: ") + e.what()));
    }
    try {
      RawItem r;
      const auto id = j.at("id").get<std::int64_t>();
      if (id < 0) throw std::runtime_error("negative id");
      r.id = static_cast<std::uint64_t>(id);
      const auto freq = j.at("freq").get<std::int64_t>();
      if (freq < 0) throw std::runtime_error("negative freq");
      r.freq = static_cast<std::uint64_t>(freq);
      for (const auto& v : j.at("text_vec"))
        r.vec.push_back(v.get<float>());
      if (rows.empty()) {
        text_dim = r.vec.size();
      } else if (r.vec.size() != text_dim) {
        throw std::runtime_error("dimension mismatch: text_vec has " +
                                 std::to_string(r.vec.size()) + " entries, expected " +
                                 std::to_string(text_dim));
      }
      if (j.contains("title")) r.meta.title = j["title"].get<std::string>();
      if (j.contains("category")) r.meta.category = j["category"].get<std::string>();
      if (j.contains("price")) r.meta.price = j["price"].get<std::string>();
      if (j.contains("shop")) r.meta.shop = j["shop"].get<std::string>();
      rows.push_back(std::move(r));
    } catch (const json::exception& e) {
      throw std::runtime_error(line_err(path, line_no, std::string("bad record: ") + e.what()));
    } catch (const std::runtime_error& e) {
      throw std::runtime_error(line_err(path, line_no, e.what()));
    }
  }
  if (rows.empty()) throw std::runtime_error("empty catalog: " + path);
  return rows;
}

// rows must already be ordered by dense id 0..n-1.
CandidateCatalog assemble_catalog(const std::string& path,
                                  const std::vector<RawItem>& rows,
                                  std::size_t text_dim) {
  CandidateCatalog cat;
  const std::size_t n = rows.size();
  cat.n_items = n;
  cat.text_dim = text_dim;
  cat.frequencies.resize(n);
  cat.seen_flags.resize(n);
  cat.text_features = MatF(n, text_dim);
  cat.metadata.resize(n);
  bool any_freq = false;
  for (std::size_t i = 0; i < n; ++i) {
    cat.frequencies[i] = rows[i].freq;
    cat.seen_flags[i] = rows[i].freq > 0 ? 1 : 0;
    any_freq = any_freq || rows[i].freq > 0;
    std::copy(rows[i].vec.begin(), rows[i].vec.end(), cat.text_features.row(i).begin());
    cat.metadata[i] = rows[i].meta;
  }
  if (!any_freq)
    throw std::runtime_error("catalog " + path + " has no item with freq > 0");
  return cat;
}

}  // namespace

CandidateCatalog load_catalog(const std::string& path) {
  std::size_t text_dim = 0;
  std::vector<RawItem> rows = parse_catalog_rows(path, text_dim);
  const std::size_t n = rows.size();
  std::vector<std::uint8_t> present(n, 0);
  for (const auto& r : rows) {
    if (r.id >= n || present[r.id])
      throw std::runtime_error("non-dense ids in catalog " + path +
                               " (ids must be exactly 0.." + std::to_string(n - 1) +
                               "; remap-ids rewrites sparse inputs)");
    present[r.id] = 1;
  }
  std::sort(rows.begin(), rows.end(),
            [](const RawItem& a, const RawItem& b) { return a.id < b.id; });
  return assemble_catalog(path, rows, text_dim);
}

RemappedCatalog load_catalog_sparse(const std::string& path) {
  std::size_t text_dim = 0;
  std::vector<RawItem> rows = parse_catalog_rows(path, text_dim);
  std::sort(rows.begin(), rows.end(),
            [](const RawItem& a, const RawItem& b) { return a.id < b.id; });
  for (std::size_t i = 1; i < rows.size(); ++i)
    if (rows[i].id == rows[i - 1].id)
      throw std::runtime_error("duplicate id " + std::to_string(rows[i].id) +
                               " in catalog " + path);
  RemappedCatalog out;
  out.original_ids.reserve(rows.size());
  for (const auto& r : rows) out.original_ids.push_back(r.id);
  out.catalog = assemble_catalog(path, rows, text_dim);
  return out;
}

void remap_interactions(const std::string& in_path, const std::string& out_path,
                        const RemappedCatalog& remapped) {
  std::unordered_map<std::uint64_t, ItemId> to_dense;
  to_dense.reserve(remapped.original_ids.size());
  for (ItemId dense = 0; dense < remapped.original_ids.size(); ++dense)
    to_dense.emplace(remapped.original_ids[dense], dense);

  std::ifstream in(in_path);
  if (!in) throw std::runtime_error("cannot open interactions: " + in_path);
  std::ofstream out(out_path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open file for writing: " + out_path);

  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw std::runtime_error(line_err(in_path, line_no, std::string("parse error: ") + e.what()));
    }
    auto map_ids = [&](const char* key) {
      if (!j.contains(key)) return;
      for (auto& v : j[key]) {
        const auto id = v.get<std::int64_t>();
        const auto it = id < 0 ? to_dense.end()
                               : to_dense.find(static_cast<std::uint64_t>(id));
        if (it == to_dense.end())
          throw std::runtime_error(line_err(in_path, line_no,
                                            std::string(key) + " id " +
                                                std::to_string(id) +
                                                " not in catalog"));
        v = it->second;
      }
    };
    map_ids("history");
    map_ids("positives");
    out << j.dump() << '\n';
  }
  if (!out) throw std::runtime_error("write failed: " + out_path);
}

void save_catalog(const CandidateCatalog& catalog, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open file for writing: " + path);
  for (ItemId id = 0; id < catalog.n_items; ++id) {
    json j;
    j["id"] = id;
    j["freq"] = catalog.frequencies[id];
    json vec = json::array();
    for (float v : catalog.text_features.row(id)) vec.push_back(v);
    j["text_vec"] = std::move(vec);
    const ItemMeta& m = catalog.metadata[id];
    if (!m.title.empty()) j["title"] = m.title;
    if (!m.category.empty()) j["category"] = m.category;
    if (!m.price.empty()) j["price"] = m.price;
    if (!m.shop.empty()) j["shop"] = m.shop;
    out << j.dump() << '\n';
  }
  if (!out) throw std::runtime_error("write failed: " + path);
}

std::vector<InteractionRecord> load_interactions(const std::string& path,
                                                 const CandidateCatalog& catalog,
                                                 std::size_t max_history,
                                                 bool require_positives) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open interactions: " + path);
  std::vector<InteractionRecord> records;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw std::runtime_error(line_err(path, line_no, std::string("parse error: ") + e.what()));
    }
    try {
      InteractionRecord r;
      r.user_id = j.at("user").get<std::string>();
      r.objective_tag = j.at("objective").get<std::string>();
      auto read_ids = [&](const char* key, std::vector<ItemId>& out) {
        if (!j.contains(key)) return;
        for (const auto& v : j[key]) {
          const auto id = v.get<std::int64_t>();
          if (id < 0 || !catalog.valid_id(static_cast<ItemId>(id)))
            throw std::runtime_error(std::string(key) + " id " + std::to_string(id) +
                                     " not in catalog");
          out.push_back(static_cast<ItemId>(id));
        }
      };
      read_ids("history", r.history);
      read_ids("positives", r.positives);
      if (j.contains("query")) r.query_text = j["query"].get<std::string>();
      if (require_positives && r.positives.empty())
        throw std::runtime_error("training record has no positives");
      if (r.history.size() > max_history)
        r.history.erase(r.history.begin(),
                        r.history.end() - static_cast<std::ptrdiff_t>(max_history));
      records.push_back(std::move(r));
    } catch (const json::exception& e) {
      throw std::runtime_error(line_err(path, line_no, std::string("bad record: ") + e.what()));
    } catch (const std::runtime_error& e) {
      throw std::runtime_error(line_err(path, line_no, e.what()));
    }
  }
  return records;
}

void save_interactions(std::span<const InteractionRecord> records,
                       const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open file for writing: " + path);
  for (const auto& r : records) {
    json j;
    j["user"] = r.user_id;
    j["objective"] = r.objective_tag;
    j["history"] = r.history;
    j["positives"] = r.positives;
    if (!r.query_text.empty()) j["query"] = r.query_text;
    out << j.dump() << '\n';
  }
  if (!out) throw std::runtime_error("write failed: " + path);
}

ObjectiveRegistry load_objective_registry(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open objective registry: " + path);
  ObjectiveRegistry reg;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t\r");
      if (b == std::string::npos) return std::string();
      const auto e = s.find_last_not_of(" \t\r");
      return s.substr(b, e - b + 1);
    };
    std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos)
      throw std::runtime_error(line_err(path, line_no, "expected `tag = \"template\"`"));
    std::string tag = trim(t.substr(0, eq));
    std::string val = trim(t.substr(eq + 1));
    if (tag.empty() || val.size() < 2 || val.front() != '"' || val.back() != '"')
      throw std::runtime_error(line_err(path, line_no, "expected `tag = \"template\"`"));
    try {
      reg.add({tag, val.substr(1, val.size() - 2)});
    } catch (const std::runtime_error& e) {
      throw std::runtime_error(line_err(path, line_no, e.what()));
    }
  }
  return reg;
}

}  // namespace mqr
