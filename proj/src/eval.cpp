#include "mqr/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>

#include "json.hpp"

namespace mqr {

double recall_at_k(std::span<const ItemId> retrieved_ranked,
                   std::span<const ItemId> ground_truth, std::size_t k) {
  if (ground_truth.empty())
    throw std::invalid_argument("recall_at_k: empty ground truth");
  const std::size_t take = std::min(k, retrieved_ranked.size());
  std::size_t hits = 0;
  for (std::size_t i = 0; i < take; ++i)
    if (std::binary_search(ground_truth.begin(), ground_truth.end(),
                           retrieved_ranked[i]))
      ++hits;
  return static_cast<double>(hits) / static_cast<double>(ground_truth.size());
}

namespace {

unsigned long long checked_mul(unsigned long long a, unsigned long long b,
                               const char* what) {
  unsigned long long out;
  if (__builtin_mul_overflow(a, b, &out))
    throw std::overflow_error(std::string("flops_estimate: overflow in ") + what);
  return out;
}

unsigned long long checked_add(unsigned long long a, unsigned long long b,
                               const char* what) {
  unsigned long long out;
  if (__builtin_add_overflow(a, b, &out))
    throw std::overflow_error(std::string("flops_estimate: overflow in ") + what);
  return out;
}

}  // namespace

FlopsReport flops_estimate(std::uint64_t m, std::uint64_t h, std::uint64_t d,
                           std::uint64_t t, std::uint64_t k,
                           std::uint64_t max_nbr, std::uint64_t c_size) {
  if (m == 0 || h == 0 || d == 0 || k == 0 || max_nbr == 0 || c_size == 0)
    throw std::invalid_argument("flops_estimate: arguments must be positive");
  FlopsReport rep;
  const auto expand = checked_add(d, checked_mul(checked_mul(t, k, "T*K"), max_nbr,
                                                 "T*K*max_nbr"),
                                  "D + T*K*max_nbr");
  rep.sampled = checked_mul(checked_mul(m, h, "M*H"), expand, "M*H*(...)");
  rep.full = checked_mul(checked_mul(m, d, "M*D"), c_size, "M*D*|C|");
  rep.ratio = static_cast<double>(rep.full) / static_cast<double>(rep.sampled);
  return rep;
}

SyntheticPaths gen_synthetic(const SyntheticSpec& spec) {
  if (spec.clusters == 0 || spec.items_per_cluster == 0 || spec.users == 0 ||
      spec.text_dim == 0 || spec.tags.empty())
    throw std::invalid_argument("gen_synthetic: sizes must be positive");

  const std::size_t n = static_cast<std::size_t>(spec.clusters) * spec.items_per_cluster;
  const std::size_t n_tags = spec.tags.size();

  SplitMix64 rng_centroid = SplitMix64::stream(spec.seed, 1);
  SplitMix64 rng_text = SplitMix64::stream(spec.seed, 2);
  SplitMix64 rng_user = SplitMix64::stream(spec.seed, 3);
  SplitMix64 rng_hist = SplitMix64::stream(spec.seed, 4);
  SplitMix64 rng_pos = SplitMix64::stream(spec.seed, 5);
  SplitMix64 rng_test = SplitMix64::stream(spec.seed, 6);

  MatF centroids(spec.clusters, spec.text_dim);
  for (auto& v : centroids.data) v = static_cast<float>(rng_centroid.normal());

  CandidateCatalog cat;
  cat.n_items = n;
  cat.text_dim = spec.text_dim;
  cat.frequencies.assign(n, 0);
  cat.seen_flags.assign(n, 0);
  cat.text_features = MatF(n, spec.text_dim);
  cat.metadata.resize(n);

  // Per-cluster layout: seen items first, the unseen tail never enters
  // training data (neither histories nor positives).
  const auto seen_per_cluster = static_cast<std::uint32_t>(
      std::llround(spec.items_per_cluster * (1.0 - spec.unseen_fraction)));
  auto cluster_of = [&](ItemId id) { return id / spec.items_per_cluster; };
  auto is_unseen_slot = [&](ItemId id) {
    return id % spec.items_per_cluster >= seen_per_cluster;
  };

  for (ItemId id = 0; id < n; ++id) {
    const std::uint32_t c = cluster_of(id);
    for (std::uint32_t g = 0; g < spec.text_dim; ++g)
      cat.text_features.at(id, g) = static_cast<float>(
          centroids.at(c, g) + spec.text_noise * rng_text.normal());
    cat.metadata[id].title = "Item " + std::to_string(id);
    cat.metadata[id].category = "cluster-" + std::to_string(c);
  }

  // Mild popularity skew inside each cluster (over the seen slots only).
  std::vector<double> slot_weight(seen_per_cluster);
  for (std::uint32_t s = 0; s < seen_per_cluster; ++s)
    slot_weight[s] = 1.0 / std::pow(1.0 + s, spec.popularity_skew);
  std::vector<double> slot_cum(slot_weight.size());
  std::partial_sum(slot_weight.begin(), slot_weight.end(), slot_cum.begin());

  auto draw_seen_in_cluster = [&](std::uint32_t c, SplitMix64& rng) -> ItemId {
    const double u = rng.uniform01() * slot_cum.back();
    const auto it = std::upper_bound(slot_cum.begin(), slot_cum.end(), u);
    const auto slot = static_cast<std::uint32_t>(
        std::min<std::size_t>(it - slot_cum.begin(), slot_cum.size() - 1));
    return c * spec.items_per_cluster + slot;
  };
  auto draw_seen_any = [&](SplitMix64& rng) -> ItemId {
    const auto c = static_cast<std::uint32_t>(rng.bounded(spec.clusters));
    return draw_seen_in_cluster(c, rng);
  };

  // Each user carries a primary and a secondary interest cluster; objective
  // tags shift both, emulating per-scenario distribution shift.
  struct UserPrefs {
    std::uint32_t primary, secondary;
  };
  std::vector<UserPrefs> prefs(spec.users);
  for (auto& p : prefs) {
    p.primary = static_cast<std::uint32_t>(rng_user.bounded(spec.clusters));
    p.secondary = spec.clusters > 1
                      ? static_cast<std::uint32_t>(
                            (p.primary + 1 + rng_user.bounded(spec.clusters - 1)) %
                            spec.clusters)
                      : p.primary;
  }
  auto shifted = [&](std::uint32_t c, std::size_t tag_idx) {
    return static_cast<std::uint32_t>((c + tag_idx) % spec.clusters);
  };
  auto draw_interest = [&](const UserPrefs& p, std::size_t tag_idx,
                           SplitMix64& rng) -> ItemId {
    const double u = rng.uniform01();
    if (u < spec.cluster_mix * (1.0 - spec.secondary_share))
      return draw_seen_in_cluster(shifted(p.primary, tag_idx), rng);
    if (u < spec.cluster_mix)
      return draw_seen_in_cluster(shifted(p.secondary, tag_idx), rng);
    return draw_seen_any(rng);
  };

  std::vector<InteractionRecord> train_records;
  train_records.reserve(static_cast<std::size_t>(spec.users) * n_tags);
  std::vector<std::vector<ItemId>> histories(spec.users);
  for (std::uint32_t u = 0; u < spec.users; ++u) {
    auto& hist = histories[u];
    hist.reserve(spec.history_len);
    for (std::uint32_t i = 0; i < spec.history_len; ++i)
      hist.push_back(draw_interest(prefs[u], 0, rng_hist));
  }

  auto draw_positives = [&](const UserPrefs& p, std::size_t tag_idx,
                            SplitMix64& rng, bool allow_unseen) {
    std::vector<ItemId> pos;
    std::size_t guard = 0;
    while (pos.size() < spec.positives_per_record &&
           guard++ < 50u * spec.positives_per_record) {
      ItemId id;
      if (allow_unseen && spec.unseen_fraction > 0 &&
          rng.uniform01() < spec.unseen_eval_mix) {
        const auto cluster = shifted(p.primary, tag_idx);
        const auto span_len = spec.items_per_cluster - seen_per_cluster;
        id = cluster * spec.items_per_cluster + seen_per_cluster +
             static_cast<ItemId>(rng.bounded(span_len));
      } else {
        id = draw_interest(p, tag_idx, rng);
      }
      if (std::find(pos.begin(), pos.end(), id) == pos.end()) pos.push_back(id);
    }
    return pos;
  };

  for (std::uint32_t u = 0; u < spec.users; ++u) {
    for (std::size_t t = 0; t < n_tags; ++t) {
      InteractionRecord r;
      r.user_id = "u" + std::to_string(u);
      r.objective_tag = spec.tags[t];
      r.history = histories[u];
      r.positives = draw_positives(prefs[u], t, rng_pos, /*allow_unseen=*/false);
      train_records.push_back(std::move(r));
    }
  }

  std::vector<InteractionRecord> test_records;
  const std::uint32_t eval_n = std::min(spec.eval_users, spec.users);
  for (std::uint32_t u = 0; u < eval_n; ++u) {
    for (std::size_t t = 0; t < n_tags; ++t) {
      InteractionRecord r;
      r.user_id = "u" + std::to_string(u);
      r.objective_tag = spec.tags[t];
      r.history = histories[u];
      r.positives = draw_positives(prefs[u], t, rng_test, /*allow_unseen=*/true);
      test_records.push_back(std::move(r));
    }
  }

  // Frequencies = occurrence counts in the training data.
  for (const auto& r : train_records) {
    for (ItemId id : r.history) ++cat.frequencies[id];
    for (ItemId id : r.positives) ++cat.frequencies[id];
  }
  for (ItemId id = 0; id < n; ++id) {
    cat.seen_flags[id] = cat.frequencies[id] > 0 ? 1 : 0;
    if (is_unseen_slot(id) && cat.frequencies[id] != 0)
      throw std::logic_error("gen_synthetic: unseen slot leaked into training data");
  }

  SyntheticPaths paths;
  paths.catalog = spec.out_dir + "/catalog.jsonl";
  paths.train = spec.out_dir + "/train.jsonl";
  paths.test = spec.out_dir + "/test.jsonl";
  save_catalog(cat, paths.catalog);
  save_interactions(train_records, paths.train);
  save_interactions(test_records, paths.test);
  return paths;
}

std::vector<EvalRequest> make_requests(std::span<const InteractionRecord> records,
                                       const ToyFeatureGenerator& fg,
                                       const CandidateCatalog& catalog) {
  std::vector<EvalRequest> out;
  out.reserve(records.size());
  for (const auto& r : records) {
    EvalRequest q;
    q.record = &r;
    q.tag_idx = fg.tag_index(r.objective_tag);
    q.truth_sorted = r.positives;
    std::sort(q.truth_sorted.begin(), q.truth_sorted.end());
    q.truth_sorted.erase(std::unique(q.truth_sorted.begin(), q.truth_sorted.end()),
                         q.truth_sorted.end());
    for (ItemId id : q.truth_sorted)
      if (!catalog.seen_flags[id]) q.truth_unseen_sorted.push_back(id);
    out.push_back(std::move(q));
  }
  return out;
}

namespace {

std::vector<ItemId> retrieved_ids(const std::vector<RetrievedItem>& items) {
  std::vector<ItemId> ids;
  ids.reserve(items.size());
  for (const auto& it : items) ids.push_back(it.id);
  return ids;
}

SamplerConfig request_config(const SamplerConfig& base, std::size_t request_idx) {
  SamplerConfig cfg = base;
  cfg.seed = SplitMix64::stream(base.seed, 7700 + request_idx).next();
  return cfg;
}

}  // namespace

double mean_recall(const Model& model, const MatF& rows, const NeighborGraph& graph,
                   std::span<const EvalRequest> requests,
                   const SamplerConfig& base_cfg) {
  if (requests.empty()) throw std::invalid_argument("mean_recall: no requests");
  double total = 0.0;
  for (std::size_t i = 0; i < requests.size(); ++i) {
    const auto& q = requests[i];
    const QueryBlock queries = model.fg.make_queries(q.record->history, q.tag_idx);
    const auto result = retrieve_cached(model.mapping, rows, queries, graph,
                                        request_config(base_cfg, i));
    total += recall_at_k(retrieved_ids(result), q.truth_sorted, base_cfg.k);
  }
  return total / static_cast<double>(requests.size());
}

double popularity_baseline_recall(const CandidateCatalog& catalog,
                                  std::span<const EvalRequest> requests,
                                  std::size_t k) {
  std::vector<ItemId> ids(catalog.n_items);
  std::iota(ids.begin(), ids.end(), 0u);
  std::partial_sort(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(std::min(k, ids.size())),
                    ids.end(), [&](ItemId a, ItemId b) {
                      if (catalog.frequencies[a] != catalog.frequencies[b])
                        return catalog.frequencies[a] > catalog.frequencies[b];
                      return a < b;
                    });
  ids.resize(std::min(k, ids.size()));
  double total = 0.0;
  for (const auto& q : requests) total += recall_at_k(ids, q.truth_sorted, k);
  return total / static_cast<double>(requests.size());
}

std::vector<SweepPoint> precision_sweep(const Model& model,
                                        const NeighborGraph& graph,
                                        std::span<const EvalRequest> requests,
                                        const SamplerConfig& base_cfg,
                                        std::span<const std::uint32_t> step_counts,
                                        std::span<const std::uint64_t> seeds) {
  if (requests.empty()) throw std::invalid_argument("precision_sweep: no requests");
  const MatF rows = effective_rows(model.mapping, base_cfg.mode);

  // Oracle per request: exhaustive top-K and its recall.
  std::vector<std::vector<ItemId>> oracle_topk(requests.size());
  std::vector<double> oracle_recall(requests.size());
  std::vector<QueryBlock> queries(requests.size());
  double oracle_recall_sum = 0.0;
  for (std::size_t i = 0; i < requests.size(); ++i) {
    const auto& q = requests[i];
    queries[i] = model.fg.make_queries(q.record->history, q.tag_idx);
    const BoundedQueryBlock bounded = bound_constrain(queries[i], base_cfg.bound);
    std::vector<float> scores(rows.rows);
    const ProjectedQueryBlock proj = project_queries(model.mapping, bounded);
    for (ItemId id = 0; id < rows.rows; ++id) {
      double best = -std::numeric_limits<double>::infinity();
      auto row = rows.row(id);
      for (std::size_t j = 0; j < proj.f.cols; ++j) {
        double acc = 0.0;
        for (std::size_t kk = 0; kk < proj.f.rows; ++kk)
          acc += static_cast<double>(row[kk]) * static_cast<double>(proj.f.at(kk, j));
        best = std::max(best, acc);
      }
      scores[id] = static_cast<float>(best);
    }
    std::vector<ItemId> top = topk_ids(scores, base_cfg.k);
    oracle_recall[i] = recall_at_k(top, q.truth_sorted, base_cfg.k);
    oracle_recall_sum += oracle_recall[i];
    std::sort(top.begin(), top.end());
    oracle_topk[i] = std::move(top);
  }
  const double oracle_mean = oracle_recall_sum / static_cast<double>(requests.size());

  std::vector<SweepPoint> points;
  for (std::uint32_t steps : step_counts) {
    for (std::uint64_t seed : seeds) {
      double sampled_sum = 0.0;
      double overlap_sum = 0.0;
      for (std::size_t i = 0; i < requests.size(); ++i) {
        SamplerConfig cfg = base_cfg;
        cfg.steps = steps;
        cfg.seed = SplitMix64::stream(seed, 7700 + i).next();
        const auto result =
            retrieve_cached(model.mapping, rows, queries[i], graph, cfg);
        const auto ids = retrieved_ids(result);
        sampled_sum += recall_at_k(ids, requests[i].truth_sorted, base_cfg.k);
        std::size_t inter = 0;
        for (ItemId id : ids)
          if (std::binary_search(oracle_topk[i].begin(), oracle_topk[i].end(), id))
            ++inter;
        overlap_sum += static_cast<double>(inter) / static_cast<double>(base_cfg.k);
      }
      SweepPoint p;
      p.steps = steps;
      p.seed = seed;
      const double sampled_mean = sampled_sum / static_cast<double>(requests.size());
      p.precision = oracle_mean > 0.0
                        ? sampled_mean / oracle_mean
                        : std::numeric_limits<double>::quiet_NaN();
      p.oracle_overlap = overlap_sum / static_cast<double>(requests.size());
      points.push_back(p);
    }
  }
  return points;
}

std::vector<AblationRow> ablate_item_representation(
    const Model& model, std::span<const EvalRequest> requests, const SamplerConfig& base_cfg,
    std::uint32_t degree) {
  std::vector<AblationRow> out;
  for (RowMode mode : {RowMode::dis, RowMode::trans, RowMode::sum}) {
    const MatF rows = effective_rows(model.mapping, mode);
    const NeighborGraph graph = build_exact_knn(rows, degree);
    SamplerConfig cfg = base_cfg;
    cfg.mode = mode;
    double all_sum = 0.0, unseen_sum = 0.0;
    std::size_t unseen_n = 0;
    for (std::size_t i = 0; i < requests.size(); ++i) {
      const auto& q = requests[i];
      const QueryBlock queries = model.fg.make_queries(q.record->history, q.tag_idx);
      const auto result =
          retrieve_cached(model.mapping, rows, queries, graph, request_config(cfg, i));
      const auto ids = retrieved_ids(result);
      all_sum += recall_at_k(ids, q.truth_sorted, cfg.k);
      if (!q.truth_unseen_sorted.empty()) {
        unseen_sum += recall_at_k(ids, q.truth_unseen_sorted, cfg.k);
        ++unseen_n;
      }
    }
    AblationRow row;
    row.mode = mode;
    row.recall_all = all_sum / static_cast<double>(requests.size());
    row.recall_unseen = unseen_n ? unseen_sum / static_cast<double>(unseen_n) : 0.0;
    out.push_back(row);
  }
  return out;
}

std::string sweep_csv(std::span<const SweepPoint> points) {
  std::string out = "T,seed,precision\n";
  char buf[96];
  for (const auto& p : points) {
    std::snprintf(buf, sizeof(buf), "%u,%llu,%.6f\n", p.steps,
                  static_cast<unsigned long long>(p.seed), p.precision);
    out += buf;
  }
  return out;
}

std::string EvalReport::to_json() const {
  nlohmann::json j;
  j["recall_overall"] = recall_overall;
  j["random_baseline"] = random_baseline;
  j["popularity_baseline"] = popularity_baseline;
  nlohmann::json tags = nlohmann::json::object();
  for (const auto& [tag, r] : recall_per_tag) tags[tag] = r;
  j["recall_per_tag"] = std::move(tags);
  nlohmann::json sweep_rows = nlohmann::json::array();
  for (const auto& p : sweep)
    sweep_rows.push_back({{"T", p.steps},
                          {"seed", p.seed},
                          {"precision", p.precision},
                          {"oracle_overlap", p.oracle_overlap}});
  j["sweep"] = std::move(sweep_rows);
  nlohmann::json ab = nlohmann::json::array();
  for (const auto& row : ablation)
    ab.push_back({{"mode", row_mode_name(row.mode)},
                  {"recall_all", row.recall_all},
                  {"recall_unseen", row.recall_unseen}});
  j["ablation"] = std::move(ab);
  j["wall_seconds"] = wall_seconds;
  return j.dump(2);
}

std::string EvalReport::to_text() const {
  std::string out;
  char buf[160];
  std::snprintf(buf, sizeof(buf), "recall@K overall: %.4f  (random %.4f, popularity %.4f)\n",
                recall_overall, random_baseline, popularity_baseline);
  out += buf;
  for (const auto& [tag, r] : recall_per_tag) {
    std::snprintf(buf, sizeof(buf), "  %-8s R@K = %.4f\n", tag.c_str(), r);
    out += buf;
  }
  if (!sweep.empty()) {
    out += "sampling-step sweep (mean precision per T):\n";
    std::vector<std::uint32_t> ts;
    for (const auto& p : sweep)
      if (std::find(ts.begin(), ts.end(), p.steps) == ts.end()) ts.push_back(p.steps);
    for (std::uint32_t t : ts) {
      double sum = 0.0;
      std::size_t n = 0;
      for (const auto& p : sweep)
        if (p.steps == t) {
          sum += p.precision;
          ++n;
        }
      std::snprintf(buf, sizeof(buf), "  T=%u  precision %.4f\n", t, sum / n);
      out += buf;
    }
  }
  if (!ablation.empty()) {
    out += "item-representation ablation:\n";
    for (const auto& row : ablation) {
      std::snprintf(buf, sizeof(buf), "  %-5s all %.4f  unseen %.4f\n",
                    row_mode_name(row.mode), row.recall_all, row.recall_unseen);
      out += buf;
    }
  }
  return out;
}

}  // namespace mqr
