// Acceptance suite: runs every criterion on the pinned reference instance
// (|C| = 10^4 as 20 clusters x 500, H = 32, D = 128, M = 8, K = 100,
// degree = 16, seed-pinned) and prints one PASS/FAIL line per criterion.
//
// Usage: acceptance [workdir] [--reuse]
//   --reuse keeps a previously generated dataset/model/graph in workdir.

#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <numeric>
#include <set>
#include <string>
#include <vector>

#include "grad_oracle.hpp"
#include "mqr/eval.hpp"
#include "test_util.hpp"

using namespace mqr;
namespace fs = std::filesystem;

namespace {

int g_failures = 0;

void report(int idx, const char* name, bool pass, const std::string& detail) {
  std::printf("[%s] %2d. %-28s %s\n", pass ? "PASS" : "FAIL", idx, name,
              detail.c_str());
  std::fflush(stdout);
  if (!pass) ++g_failures;
}

void run(int idx, const char* name,
         const std::function<std::pair<bool, std::string>()>& fn) {
  try {
    const auto [ok, detail] = fn();
    report(idx, name, ok, detail);
  } catch (const std::exception& e) {
    report(idx, name, false, std::string("exception: ") + e.what());
  }
}

std::string fmt(const char* f, ...) {
  char buf[512];
  va_list ap;
  va_start(ap, f);
  std::vsnprintf(buf, sizeof(buf), f, ap);
  va_end(ap);
  return buf;
}

struct Fixture {
  fs::path dir;
  CandidateCatalog catalog;
  Model model;
  MatF rows;  // effective rows, sum mode
  NeighborGraph graph;
  std::vector<InteractionRecord> test_records;
  std::vector<EvalRequest> requests;
  double train_seconds = 0.0;
  double train_first_loss = 0.0, train_last_loss = 0.0;

  static constexpr std::uint32_t kK = 100;
  static constexpr std::uint32_t kDegree = 16;

  SamplerConfig base_config() const {
    SamplerConfig cfg;
    cfg.steps = 4;
    cfg.k = kK;
    cfg.tau = kDefaultTau;
    cfg.init_subset = 0;  // 10 * K
    cfg.bound = kDefaultBound;
    cfg.seed = 99;
    return cfg;
  }
};

Fixture build_fixture(const std::string& workdir, bool reuse) {
  Fixture fix;
  fix.dir = workdir;
  fs::create_directories(fix.dir);

  SyntheticSpec spec;
  spec.clusters = 200;
  spec.items_per_cluster = 50;
  spec.users = 5000;
  spec.eval_users = 150;
  spec.history_len = 50;
  spec.positives_per_record = 16;
  spec.text_dim = 32;
  spec.text_noise = 0.08;
  spec.secondary_share = 0.0;
  spec.seed = 20240801;
  spec.out_dir = fix.dir.string();

  const auto catalog_path = fix.dir / "catalog.jsonl";
  const auto model_path = fix.dir / "model.urmm";
  const auto graph_path = fix.dir / "graph.urmg";

  if (!reuse || !fs::exists(catalog_path)) gen_synthetic(spec);
  fix.catalog = load_catalog(catalog_path.string());
  fix.test_records =
      load_interactions((fix.dir / "test.jsonl").string(), fix.catalog);

  if (reuse && fs::exists(model_path)) {
    fix.model = load_model(model_path.string());
  } else {
    const auto train_records =
        load_interactions((fix.dir / "train.jsonl").string(), fix.catalog);
    TrainConfig tcfg;
    tcfg.feature_dim = 128;
    tcfg.rank = 32;
    tcfg.embed_dim = 32;
    tcfg.query_tokens = 8;
    tcfg.epochs = 4;
    tcfg.lr = 0.1f;
    tcfg.batch_size = 64;
    tcfg.n_neg = 512;
    tcfg.weight_decay = 0.5f;
    tcfg.seed = 7;
    const auto t0 = std::chrono::steady_clock::now();
    auto result = train(train_records, fix.catalog, tcfg);
    fix.train_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    fix.train_first_loss = result.loss_curve.front();
    fix.train_last_loss = result.loss_curve.back();
    fix.model = std::move(result.model);
    save_model(fix.model, model_path.string());
  }
  fix.model.mapping.attach_text_features(fix.catalog);
  fix.rows = effective_rows(fix.model.mapping, RowMode::sum);

  if (reuse && fs::exists(graph_path)) {
    fix.graph = load_graph(graph_path.string());
  } else {
    fix.graph = build_exact_knn(fix.rows, Fixture::kDegree);
    save_graph(fix.graph, graph_path.string());
  }
  fix.requests = make_requests(fix.test_records, fix.model.fg, fix.catalog);
  return fix;
}

std::vector<float> request_full_scores(const Fixture& fix, const EvalRequest& q,
                                       float bound) {
  const QueryBlock queries = fix.model.fg.make_queries(q.record->history, q.tag_idx);
  const BoundedQueryBlock bounded = bound_constrain(queries, bound);
  const ProjectedQueryBlock proj = project_queries(fix.model.mapping, bounded);
  std::vector<ItemId> all(fix.catalog.n_items);
  std::iota(all.begin(), all.end(), 0u);
  return score_items_cached(fix.rows, all, proj).scores;
}

std::string format_retrieval(const std::vector<RetrievedItem>& items) {
  std::string out;
  char buf[64];
  for (const auto& it : items) {
    std::snprintf(buf, sizeof(buf), "%u\t%.6f\n", it.id, it.score);
    out += buf;
  }
  return out;
}

// ---- criteria ----

std::pair<bool, std::string> c1_oracle_equivalence(const Fixture& fix) {
  std::size_t checked = 0;
  for (std::size_t i = 0; i < std::min<std::size_t>(10, fix.requests.size()); ++i) {
    const auto& q = fix.requests[i];
    SamplerConfig cfg = fix.base_config();
    cfg.tau = 1e-9;
    cfg.init_subset = static_cast<std::uint32_t>(fix.catalog.n_items);
    cfg.steps = 1;
    cfg.seed = 1700 + i;
    const QueryBlock queries =
        fix.model.fg.make_queries(q.record->history, q.tag_idx);
    const auto got =
        retrieve_cached(fix.model.mapping, fix.rows, queries, fix.graph, cfg);

    const auto scores = request_full_scores(fix, q, cfg.bound);
    const auto want = topk_ids(scores, cfg.k);
    std::set<ItemId> got_set;
    const std::set<ItemId> want_set(want.begin(), want.end());
    for (const auto& it : got) got_set.insert(it.id);
    if (got_set != want_set)
      return {false, fmt("request %zu: sampled top-K differs from the exhaustive "
                         "oracle", i)};
    ++checked;
  }
  return {true, fmt("%zu requests, exact set equality at tau=1e-9", checked)};
}

std::pair<bool, std::string> c2_step_convergence(const Fixture& fix) {
  const std::size_t n_req = std::min<std::size_t>(120, fix.requests.size());
  const std::span<const EvalRequest> reqs(fix.requests.data(), n_req);
  const std::uint32_t ts[] = {1, 2, 3, 4, 5};
  std::vector<std::uint64_t> seeds(20);
  std::iota(seeds.begin(), seeds.end(), 1u);
  const auto points =
      precision_sweep(fix.model, fix.graph, reqs, fix.base_config(), ts, seeds);
  double mean[6] = {0, 0, 0, 0, 0, 0};
  double overlap[6] = {0, 0, 0, 0, 0, 0};
  for (const auto& p : points) {
    mean[p.steps] += p.precision / seeds.size();
    overlap[p.steps] += p.oracle_overlap / seeds.size();
  }
  const bool increasing = mean[1] < mean[2] && mean[2] < mean[3] && mean[3] < mean[4];
  const bool plateau = std::abs(mean[5] - mean[4]) < 0.03;
  const bool strong = mean[4] >= 0.80;
  return {increasing && plateau && strong,
          fmt("mean precision T=1..5: %.3f %.3f %.3f %.3f %.3f (oracle overlap "
              "%.2f %.2f %.2f %.2f %.2f; 20 seeds, %zu requests)",
              mean[1], mean[2], mean[3], mean[4], mean[5], overlap[1], overlap[2],
              overlap[3], overlap[4], overlap[5], n_req)};
}

std::pair<bool, std::string> c3_continuity(const Fixture&) {
  SplitMix64 rng(4242);
  const float bound = kDefaultBound;
  int violations = 0;
  double worst_margin = -1e300;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t d = 2 + rng.bounded(14), h = 1 + rng.bounded(8);
    testutil::MappingFixture mf;
    mf.init(2, d, h, 2, rng.next(), /*head_norm=*/false);
    const double delta = std::pow(10.0, -3.0 + 3.0 * rng.uniform01());
    for (std::size_t k = 0; k < h; ++k)
      mf.mapping.v_dis.at(1, k) =
          mf.mapping.v_dis.at(0, k) + static_cast<float>(delta * rng.normal());
    for (std::size_t g = 0; g < 2; ++g) mf.text.row(1)[g] = mf.text.row(0)[g];

    const std::size_t m = 1 + rng.bounded(6);
    const double scale = std::pow(10.0, 1.0 + 1.5 * rng.uniform01());
    QueryBlock q{MatF(d, m)};
    for (auto& v : q.f.data) v = static_cast<float>(scale * rng.normal());

    const auto bounded = bound_constrain(q, bound);
    const auto proj = project_queries(mf.mapping, bounded);
    const ItemId ids[] = {0, 1};
    const auto sv = score_items(mf.mapping, ids, proj);

    std::vector<float> r0(h), r1(h);
    effective_item_row(mf.mapping, 0, RowMode::sum, r0);
    effective_item_row(mf.mapping, 1, RowMode::sum, r1);
    double eps_sq = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
      double di = 0.0;
      for (std::size_t k = 0; k < h; ++k)
        di += static_cast<double>(mf.mapping.u.at(i, k)) * (r0[k] - r1[k]);
      eps_sq += di * di;
    }
    const double eps = std::sqrt(eps_sq);
    const double gap = std::abs(static_cast<double>(sv.scores[0]) - sv.scores[1]);
    const double margin = gap - (eps * bound + 1e-6);
    worst_margin = std::max(worst_margin, margin);
    if (margin > 0.0) ++violations;
  }
  return {violations == 0,
          fmt("1000 draws, %d violations, worst slack %.3g", violations,
              -worst_margin)};
}

std::pair<bool, std::string> c4_gradients() {
  CandidateCatalog cat;
  cat.n_items = 7;
  cat.text_dim = 3;
  cat.frequencies.assign(7, 1);
  cat.seen_flags.assign(7, 1);
  cat.text_features = MatF(7, 3);
  SplitMix64 init_rng(808);
  for (auto& v : cat.text_features.data) v = static_cast<float>(init_rng.normal());
  cat.metadata.resize(7);

  SplitMix64 rng(809);
  double max_rel = 0.0;
  std::size_t checked = 0, skipped = 0, tie_instances = 0, tie_routed = 0;
  int above = 0, below = 0;
  for (int trial = 0; trial < 100; ++trial) {
    TrainConfig cfg;
    cfg.feature_dim = 8;
    cfg.rank = 4;
    cfg.embed_dim = 5;
    cfg.query_tokens = 3;
    cfg.head_norm = trial % 2 == 0;
    cfg.seed = rng.next();
    cfg.bound = trial % 2 == 0 ? 0.5f : kDefaultBound;
    const bool tie_case = trial % 5 == 4;

    std::vector<std::string> tags = {"CPR", "PPR"};
    Model model = init_model(cat, tags, cfg);
    model.mapping.attach_text_features(cat);
    if (tie_case) {
      // Duplicate the first two heads and mute the rest so the tied columns
      // actually win the per-item max.
      model.fg.query_heads[1] = model.fg.query_heads[0];
      for (std::size_t j = 2; j < model.fg.query_heads.size(); ++j)
        for (auto& v : model.fg.query_heads[j].data) v *= 0.01f;
    }

    std::vector<ItemId> hist = {static_cast<ItemId>(rng.bounded(7)),
                                static_cast<ItemId>(rng.bounded(7))};
    std::vector<ItemId> pos = {static_cast<ItemId>(rng.bounded(7))};
    std::vector<ItemId> neg;
    for (int i = 0; i < 4; ++i) neg.push_back(static_cast<ItemId>(rng.bounded(7)));
    const int tag_idx = static_cast<int>(rng.bounded(2));

    const auto q0 = model.fg.make_queries(hist, tag_idx);
    for (std::size_t j = 0; j < q0.count(); ++j) {
      double sq = 0.0;
      for (std::size_t i = 0; i < q0.dim(); ++i)
        sq += static_cast<double>(q0.f.at(i, j)) * q0.f.at(i, j);
      (std::sqrt(sq) > cfg.bound ? above : below)++;
    }

    ModelGrads grads = ModelGrads::zeros_like(model);
    const double loss = nce_example_grads(model, hist, tag_idx, pos, neg, cfg, grads);

    if (tie_case) {
      // Stated convention: of the tied pair, only the first column receives
      // gradient. When every item's max lands on another column (or the loss
      // is exactly zero) there is nothing to route, so the first column is
      // only required to win in the bulk of the tie instances.
      double dup = 0.0, first = 0.0;
      for (float v : grads.query_heads[1].data) dup += std::abs(v);
      for (float v : grads.query_heads[0].data) first += std::abs(v);
      if (dup != 0.0)
        return {false, fmt("trial %d: duplicated column received gradient %.3g",
                           trial, dup)};
      ++tie_instances;
      if (loss > 0.0 && first > 0.0) ++tie_routed;
    }

    for (auto& view : testutil::param_views(model, grads)) {
      // At an exact tie the head parameters sit on the kink itself; their FD
      // is one-sided and covered by the routing assertion above instead.
      if (tie_case && std::string(view.name) == "query_heads") continue;
      for (std::size_t i = 0; i < view.len; ++i) {
        const float orig = view.data[i];
        // Base step 1e-3; coordinates whose difference quotient carries
        // visible h^2 truncation are re-measured at 1e-4 (a genuine analytic
        // error would survive the refinement, truncation shrinks 100x).
        double rel = 0.0;
        bool kink = false;
        for (const double h : {1e-3, 1e-4}) {
          const float up = static_cast<float>(static_cast<double>(orig) + h);
          const float dn = static_cast<float>(static_cast<double>(orig) - h);
          std::vector<int> sig_up, sig_dn;
          view.data[i] = up;
          const double lp = testutil::oracle_loss(model, cat, hist, tag_idx, pos,
                                                  neg, cfg.bound, cfg.train_tau,
                                                  &sig_up);
          view.data[i] = dn;
          const double lm = testutil::oracle_loss(model, cat, hist, tag_idx, pos,
                                                  neg, cfg.bound, cfg.train_tau,
                                                  &sig_dn);
          view.data[i] = orig;
          if (sig_up != sig_dn) {
            kink = true;
            break;
          }
          const double fd = (lp - lm) / (static_cast<double>(up) - dn);
          const double a = view.grad[i];
          rel = std::abs(a - fd) / std::max({std::abs(a), std::abs(fd), 1.0});
          if (rel < 1e-4) break;
        }
        if (kink) {
          ++skipped;
          continue;
        }
        ++checked;
        max_rel = std::max(max_rel, rel);
      }
    }
  }
  const bool ok = max_rel < 1e-4 && above > 0 && below > 0 && tie_instances >= 10 &&
                  4 * tie_routed >= 3 * tie_instances && checked > 10 * skipped;
  return {ok, fmt("max rel err %.3g over %zu coords (%zu kink-skipped, %zu/%zu tie "
                  "instances routed, branches %d/%d)",
                  max_rel, checked, skipped, tie_routed, tie_instances, above, below)};
}

std::pair<bool, std::string> c5_flops() {
  const auto rep = flops_estimate(128, 128, 4096, 4, 1000, 32, 10000000);
  const bool sampled_ok =
      std::abs(static_cast<double>(rep.sampled) - 2.16e9) / 2.16e9 < 0.01;
  const bool full_ok =
      std::abs(static_cast<double>(rep.full) - 5.24e12) / 5.24e12 < 0.01;
  const bool ratio_ok = rep.ratio >= 2422.0 && rep.ratio <= 2424.0;
  return {sampled_ok && full_ok && ratio_ok,
          fmt("sampled %.4g, full %.4g, ratio %.1f", static_cast<double>(rep.sampled),
              static_cast<double>(rep.full), rep.ratio)};
}

std::pair<bool, std::string> c6_training_efficacy(const Fixture& fix) {
  const double random_baseline =
      static_cast<double>(Fixture::kK) / static_cast<double>(fix.catalog.n_items);
  const double pop =
      popularity_baseline_recall(fix.catalog, fix.requests, Fixture::kK);
  const double got =
      mean_recall(fix.model, fix.rows, fix.graph, fix.requests, fix.base_config());
  const bool ok = got >= 10.0 * random_baseline && got >= 2.0 * pop;
  std::string trained = "cached model";
  if (fix.train_seconds > 0.0)
    trained = fmt("trained in %.0fs, loss %.1f -> %.1f", fix.train_seconds,
                  fix.train_first_loss, fix.train_last_loss);
  return {ok, fmt("R@100 %.4f vs random %.4f (10x -> %.2f) and popularity %.4f "
                  "(2x -> %.4f); %s",
                  got, random_baseline, 10.0 * random_baseline, pop, 2.0 * pop,
                  trained.c_str())};
}

std::pair<bool, std::string> c7_cold_start(const Fixture& fix) {
  const auto rowsets = ablate_item_representation(fix.model, fix.requests,
                                                  fix.base_config(), Fixture::kDegree);
  double all[3] = {0, 0, 0}, unseen[3] = {0, 0, 0};
  for (const auto& r : rowsets) {
    all[static_cast<int>(r.mode)] = r.recall_all;
    unseen[static_cast<int>(r.mode)] = r.recall_unseen;
  }
  const double dis_a = all[0], sum_a = all[2];
  const double dis_u = unseen[0], trans_u = unseen[1], sum_u = unseen[2];
  const bool ok = sum_u >= trans_u && trans_u >= dis_u && sum_a >= dis_a;
  return {ok, fmt("unseen R@100 sum %.4f >= trans %.4f >= dis %.4f; all-items "
                  "sum %.4f >= dis %.4f",
                  sum_u, trans_u, dis_u, sum_a, dis_a)};
}

std::pair<bool, std::string> c8_negative_stats() {
  const std::uint64_t freqs[] = {16, 1};
  const NegativeSampler sampler(freqs, 0.75);
  SplitMix64 rng(313);
  const int n = 1000000;
  int zeros = 0;
  for (int i = 0; i < n; ++i) zeros += sampler.sample(rng) == 0 ? 1 : 0;
  const double p = 8.0 / 9.0;  // 16^(3/4) : 1 = 8 : 1
  const double sigma = std::sqrt(n * p * (1.0 - p));
  const double dev = std::abs(zeros - n * p);
  return {dev <= 3.0 * sigma,
          fmt("10^6 draws: %d vs expected %.0f (%.2f sigma)", zeros, n * p,
              dev / sigma)};
}

std::pair<bool, std::string> c9_softmax_suite() {
  SplitMix64 rng(717);
  double worst_sum = 0.0;
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<float> s(1 + rng.bounded(64));
    for (auto& v : s) v = static_cast<float>(5.0 * rng.normal());
    const double tau = 0.05 + rng.uniform01();
    const auto p = softmax_tau(s, tau);
    double sum = 0.0;
    for (double v : p) {
      if (!(v > 0.0)) return {false, "non-positive probability"};
      sum += v;
    }
    worst_sum = std::max(worst_sum, std::abs(sum - 1.0));
    const auto arg_s = std::max_element(s.begin(), s.end()) - s.begin();
    const auto arg_p = std::max_element(p.begin(), p.end()) - p.begin();
    if (s[static_cast<std::size_t>(arg_p)] != s[static_cast<std::size_t>(arg_s)])
      return {false, "argmax not preserved"};
  }
  if (worst_sum > 1e-9) return {false, fmt("softmax sum off by %.3g", worst_sum)};

  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t d = 1 + rng.bounded(12), m = 1 + rng.bounded(5);
    const double scale = std::pow(10.0, static_cast<double>(rng.bounded(5)) - 1.0);
    QueryBlock q{MatF(d, m)};
    for (auto& v : q.f.data) v = static_cast<float>(scale * rng.normal());
    const float bound = 1.f + static_cast<float>(rng.bounded(150));
    const auto once = bound_constrain(q, bound);
    for (std::size_t j = 0; j < m; ++j) {
      double sq = 0.0;
      for (std::size_t i = 0; i < d; ++i)
        sq += static_cast<double>(once.f.at(i, j)) * once.f.at(i, j);
      if (std::sqrt(sq) > static_cast<double>(bound))
        return {false, "norm cap exceeded"};
    }
    const auto twice = bound_constrain(QueryBlock{once.f}, bound);
    if (!(twice.f == once.f)) return {false, "bound constraint not idempotent"};
  }

  for (int trial = 0; trial < 50; ++trial) {
    testutil::MappingFixture mf;
    mf.init(30, 6, 3, 2, rng.next(), trial % 2 == 0);
    const auto q = testutil::random_queries(6, 1, rng.next());
    const auto bounded = bound_constrain(q, kDefaultBound);
    const auto proj = project_queries(mf.mapping, bounded);
    std::vector<ItemId> ids(30);
    std::iota(ids.begin(), ids.end(), 0u);
    const auto sv = score_items(mf.mapping, ids, proj);
    std::vector<float> row(3);
    for (ItemId i = 0; i < 30; ++i) {
      effective_item_row(mf.mapping, i, RowMode::sum, row);
      const float expected = static_cast<float>(dot_f64(row, proj.f.data));
      if (sv.scores[i] != expected)
        return {false, "M=1 score differs from the plain inner product"};
    }
  }
  return {true, "sums within 1e-9, caps exact, idempotent, M=1 reduction exact"};
}

std::pair<bool, std::string> c10_determinism_and_formats(const Fixture& fix) {
  const auto& q = fix.requests.front();
  const QueryBlock queries = fix.model.fg.make_queries(q.record->history, q.tag_idx);
  SamplerConfig cfg = fix.base_config();
  cfg.seed = 424242;
  const auto a = format_retrieval(
      retrieve_cached(fix.model.mapping, fix.rows, queries, fix.graph, cfg));
  const auto b = format_retrieval(
      retrieve_cached(fix.model.mapping, fix.rows, queries, fix.graph, cfg));
  if (a != b) return {false, "same seed produced different retrieval output"};
  cfg.seed = 424243;
  const auto c = format_retrieval(
      retrieve_cached(fix.model.mapping, fix.rows, queries, fix.graph, cfg));
  if (a == c) return {false, "different seeds produced identical output"};

  const std::uint32_t ts[] = {1, 2};
  const std::uint64_t seeds[] = {5, 6};
  const std::span<const EvalRequest> reqs(fix.requests.data(), 4);
  const auto p1 = precision_sweep(fix.model, fix.graph, reqs, fix.base_config(), ts, seeds);
  const auto p2 = precision_sweep(fix.model, fix.graph, reqs, fix.base_config(), ts, seeds);
  if (sweep_csv(p1) != sweep_csv(p2))
    return {false, "sweep CSV not reproducible"};

  // Format round trips: bare mapping, trainer bundle, graph; CRC rejection.
  const auto urmm = (fix.dir / "fmt_check.urmm").string();
  DecomposedMapping bare = fix.model.mapping;
  save_mapping(bare, urmm);
  const auto bare2 = load_mapping(urmm);
  const auto urmm2 = (fix.dir / "fmt_check2.urmm").string();
  save_mapping(bare2, urmm2);
  if (read_file_bytes(urmm) != read_file_bytes(urmm2))
    return {false, "URMM round trip not byte-identical"};

  const auto urmg = (fix.dir / "fmt_check.urmg").string();
  save_graph(fix.graph, urmg);
  const auto g2 = load_graph(urmg);
  const auto urmg2 = (fix.dir / "fmt_check2.urmg").string();
  save_graph(g2, urmg2);
  if (read_file_bytes(urmg) != read_file_bytes(urmg2))
    return {false, "URMG round trip not byte-identical"};

  const auto bundle = (fix.dir / "fmt_check_bundle.urmm").string();
  save_model(fix.model, bundle);
  const auto m2 = load_model(bundle);
  const auto bundle2 = (fix.dir / "fmt_check_bundle2.urmm").string();
  save_model(m2, bundle2);
  if (read_file_bytes(bundle) != read_file_bytes(bundle2))
    return {false, "model bundle round trip not byte-identical"};

  for (const std::string path : {urmm, urmg, bundle}) {
    auto bytes = read_file_bytes(path);
    bytes[bytes.size() / 2] = static_cast<char>(bytes[bytes.size() / 2] ^ 0x20);
    write_file_bytes(path, bytes);
    bool threw = false;
    try {
      if (path == urmg)
        load_graph(path);
      else if (path == bundle)
        load_model(path);
      else
        load_mapping(path);
    } catch (const std::runtime_error&) {
      threw = true;
    }
    if (!threw) return {false, "corrupted file was accepted: " + path};
  }
  return {true, "retrieval output, CSVs, and binary formats reproducible; "
                "corruption detected"};
}

}  // namespace

int main(int argc, char** argv) {
  const std::string workdir = argc > 1 ? argv[1] : "acceptance_work";
  const bool reuse = argc > 2 && std::string(argv[2]) == "--reuse";

  std::printf("building reference fixture in %s%s...\n", workdir.c_str(),
              reuse ? " (reuse)" : "");
  std::fflush(stdout);
  const Fixture fix = build_fixture(workdir, reuse);
  std::printf("fixture ready: %zu items, %zu eval requests\n\n",
              fix.catalog.n_items, fix.requests.size());
  std::fflush(stdout);

  run(1, "oracle equivalence (tau->0)", [&] { return c1_oracle_equivalence(fix); });
  run(2, "sampling-step convergence", [&] { return c2_step_convergence(fix); });
  run(3, "continuity bound", [&] { return c3_continuity(fix); });
  run(4, "gradient correctness", [] { return c4_gradients(); });
  run(5, "flop accounting", [] { return c5_flops(); });
  run(6, "training efficacy", [&] { return c6_training_efficacy(fix); });
  run(7, "cold-start trend", [&] { return c7_cold_start(fix); });
  run(8, "negative-sampler statistics", [] { return c8_negative_stats(); });
  run(9, "softmax/normalization suite", [] { return c9_softmax_suite(); });
  run(10, "determinism & formats", [&] { return c10_determinism_and_formats(fix); });

  std::printf("\n%d of 10 criteria passed\n", 10 - g_failures);
  return g_failures == 0 ? 0 : 1;
}
