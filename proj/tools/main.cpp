// Command-line front end: synthetic data, training, index building, retrieval,
// evaluation sweeps, FLOP accounting, and the line-protocol server.

#include <atomic>
#include <chrono>
#include <csignal>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <thread>

#include "CLI11.hpp"
#include "json.hpp"

#include "mqr/eval.hpp"
#include "mqr/server.hpp"

namespace {

std::atomic<bool> g_stop{false};

void handle_signal(int) { g_stop = true; }

std::vector<mqr::ItemId> parse_id_list(const std::string& csv) {
  std::vector<mqr::ItemId> out;
  std::size_t pos = 0;
  while (pos < csv.size()) {
    const std::size_t comma = csv.find(',', pos);
    const std::string tok = csv.substr(pos, comma == std::string::npos ? std::string::npos
                                                                        : comma - pos);
    if (!tok.empty()) out.push_back(static_cast<mqr::ItemId>(std::stoul(tok)));
    if (comma == std::string::npos) break;
    pos = comma + 1;
  }
  return out;
}

std::vector<std::string> split_csv(const std::string& csv) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while (pos <= csv.size()) {
    const std::size_t comma = csv.find(',', pos);
    const std::string tok =
        csv.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos);
    if (!tok.empty()) out.push_back(tok);
    if (comma == std::string::npos) break;
    pos = comma + 1;
  }
  return out;
}

void write_text_file(const std::string& path, const std::string& text) {
  if (path == "-") {
    std::fputs(text.c_str(), stdout);
    return;
  }
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open file for writing: " + path);
  out << text;
}

struct SamplerFlags {
  std::uint32_t T = 4;
  std::uint32_t K = 100;
  double tau = mqr::kDefaultTau;
  double B = mqr::kDefaultBound;
  std::uint32_t init_subset = 0;
  std::uint64_t seed = 0;
  std::string mode = "sum";
  std::string final_sel = "sample";

  void attach(CLI::App* cmd) {
    cmd->add_option("--T", T, "sampling steps");
    cmd->add_option("--K", K, "samples per step / result size");
    cmd->add_option("--tau", tau, "softmax temperature");
    cmd->add_option("--B", B, "query norm bound");
    cmd->add_option("--init-subset", init_subset, "initial pool size (0 = 10*K)");
    cmd->add_option("--seed", seed, "random seed");
    cmd->add_option("--mode", mode, "item row mode")
        ->check(CLI::IsMember({"dis", "trans", "sum"}));
    cmd->add_option("--final", final_sel, "final selection rule")
        ->check(CLI::IsMember({"sample", "topk-pool"}));
  }

  mqr::SamplerConfig to_config() const {
    mqr::SamplerConfig cfg;
    cfg.steps = T;
    cfg.k = K;
    cfg.tau = tau;
    cfg.bound = static_cast<float>(B);
    cfg.init_subset = init_subset;
    cfg.seed = seed;
    cfg.mode = mqr::parse_row_mode(mode);
    cfg.final = final_sel == "topk-pool" ? mqr::FinalSelection::topk_pool
                                         : mqr::FinalSelection::sample_set;
    return cfg;
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"multi-query retrieval engine"};
  app.require_subcommand(1);
  app.set_config("--config");

  // gen-synthetic
  auto* gen = app.add_subcommand("gen-synthetic", "write a clustered synthetic dataset");
  mqr::SyntheticSpec spec;
  std::string gen_tags = "CPR,PPR,RSA";
  gen->add_option("--out-dir", spec.out_dir, "output directory")->required();
  gen->add_option("--clusters", spec.clusters, "latent clusters");
  gen->add_option("--items-per-cluster", spec.items_per_cluster, "items per cluster");
  gen->add_option("--users", spec.users, "user count");
  gen->add_option("--eval-users", spec.eval_users, "users with test records");
  gen->add_option("--history-len", spec.history_len, "history length");
  gen->add_option("--positives", spec.positives_per_record, "positives per record");
  gen->add_option("--text-dim", spec.text_dim, "text feature dim G");
  gen->add_option("--text-noise", spec.text_noise, "centroid noise sigma");
  gen->add_option("--secondary-share", spec.secondary_share, "interest mass on a secondary cluster");
  gen->add_option("--tags", gen_tags, "comma-separated objective tags");
  gen->add_option("--seed", spec.seed, "random seed");

  // train
  auto* tr = app.add_subcommand("train", "contrastive training from interactions");
  std::string tr_catalog, tr_interactions, tr_checkpoint;
  mqr::TrainConfig tcfg;
  std::uint32_t tr_max_history = mqr::kDefaultMaxHistory;
  tr->add_option("--catalog", tr_catalog)->required();
  tr->add_option("--interactions", tr_interactions)->required();
  tr->add_option("--checkpoint", tr_checkpoint, "output checkpoint path")->required();
  tr->add_option("--epochs", tcfg.epochs);
  tr->add_option("--lr", tcfg.lr);
  tr->add_option("--batch-size", tcfg.batch_size);
  tr->add_option("--n-neg", tcfg.n_neg);
  tr->add_option("--power", tcfg.neg_power, "negative sampling frequency power");
  tr->add_option("--weight-decay", tcfg.weight_decay, "decoupled decay on the item table");
  tr->add_option("--seed", tcfg.seed);
  tr->add_option("--D", tcfg.feature_dim);
  tr->add_option("--H", tcfg.rank);
  tr->add_option("--De", tcfg.embed_dim);
  tr->add_option("--M", tcfg.query_tokens);
  tr->add_option("--B", tcfg.bound);
  tr->add_option("--train-tau", tcfg.train_tau, "loss temperature (0 = off)");
  tr->add_flag("--no-head-norm", [&](std::int64_t) { tcfg.head_norm = false; },
               "disable RMS normalization of projected queries");
  tr->add_option("--max-history", tr_max_history);
  tr->add_option("--pretrained-lr-ratio", tcfg.pretrained_lr_ratio);
  std::string tr_pretrained;
  tr->add_option("--pretrained-groups", tr_pretrained,
                 "comma-separated parameter groups trained at the reduced rate");

  // remap-ids
  auto* rm = app.add_subcommand("remap-ids",
                                "rewrite sparse-id inputs with dense 0..n-1 ids");
  std::string rm_catalog, rm_interactions, rm_out;
  rm->add_option("--catalog", rm_catalog, "sparse-id catalog JSONL")->required();
  rm->add_option("--interactions", rm_interactions,
                 "optional interactions JSONL to rewrite");
  rm->add_option("--out-dir", rm_out, "output directory")->required();

  // build-index
  auto* bi = app.add_subcommand("build-index", "build the exact k-NN graph");
  std::string bi_catalog, bi_checkpoint, bi_graph, bi_mode = "sum";
  std::uint32_t bi_degree = 16;
  bi->add_option("--catalog", bi_catalog)->required();
  bi->add_option("--checkpoint", bi_checkpoint)->required();
  bi->add_option("--graph", bi_graph, "output graph path")->required();
  bi->add_option("--degree", bi_degree);
  bi->add_option("--mode", bi_mode)->check(CLI::IsMember({"dis", "trans", "sum"}));

  // retrieve
  auto* rt = app.add_subcommand("retrieve", "run one retrieval request");
  std::string rt_catalog, rt_checkpoint, rt_graph, rt_registry;
  std::string rt_history, rt_objective, rt_query;
  SamplerFlags rt_flags;
  rt->add_option("--catalog", rt_catalog)->required();
  rt->add_option("--checkpoint", rt_checkpoint)->required();
  rt->add_option("--graph", rt_graph)->required();
  rt->add_option("--objective-registry", rt_registry);
  rt->add_option("--history", rt_history, "comma-separated item ids");
  rt->add_option("--objective", rt_objective, "objective tag");
  rt->add_option("--query", rt_query, "optional query text");
  rt_flags.attach(rt);

  // evaluate
  auto* ev = app.add_subcommand("evaluate", "recall, sweeps, and ablations");
  std::string ev_catalog, ev_checkpoint, ev_graph, ev_interactions;
  std::string ev_report_json, ev_sweep_csv, ev_sweep_T = "1,2,3,4,5";
  std::uint32_t ev_degree = 16, ev_sweep_seeds = 0, ev_max_requests = 0;
  SamplerFlags ev_flags;
  bool ev_no_ablation = false;
  ev->add_option("--catalog", ev_catalog)->required();
  ev->add_option("--checkpoint", ev_checkpoint)->required();
  ev->add_option("--interactions", ev_interactions, "held-out test records")->required();
  ev->add_option("--graph", ev_graph, "prebuilt graph (else built in-process)");
  ev->add_option("--degree", ev_degree);
  ev->add_option("--report-json", ev_report_json, "machine report path ('-' = stdout)");
  ev->add_option("--sweep-csv", ev_sweep_csv, "T,seed,precision CSV path");
  ev->add_option("--sweep-T", ev_sweep_T, "step counts for the sweep");
  ev->add_option("--sweep-seeds", ev_sweep_seeds, "seeds per step count (0 = skip sweep)");
  ev->add_option("--max-requests", ev_max_requests, "cap evaluation requests (0 = all)");
  ev->add_flag("--no-ablation", ev_no_ablation);
  ev_flags.attach(ev);

  // flops
  auto* fl = app.add_subcommand("flops", "matrix-computation cost estimate");
  std::uint64_t fl_M = 128, fl_H = 128, fl_D = 4096, fl_T = 4, fl_K = 1000,
                fl_nbr = 32, fl_C = 10000000;
  std::string fl_report_json;
  fl->add_option("--M", fl_M);
  fl->add_option("--H", fl_H);
  fl->add_option("--D", fl_D);
  fl->add_option("--T", fl_T);
  fl->add_option("--K", fl_K);
  fl->add_option("--max-nbr", fl_nbr);
  fl->add_option("--C", fl_C);
  fl->add_option("--report-json", fl_report_json);

  // serve
  auto* sv = app.add_subcommand("serve", "line-protocol retrieval server");
  std::string sv_catalog, sv_checkpoint, sv_graph, sv_registry;
  std::uint16_t sv_port = 7474;
  SamplerFlags sv_flags;
  sv->add_option("--catalog", sv_catalog)->required();
  sv->add_option("--checkpoint", sv_checkpoint)->required();
  sv->add_option("--graph", sv_graph)->required();
  sv->add_option("--objective-registry", sv_registry);
  sv->add_option("--port", sv_port);
  sv_flags.attach(sv);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen) {
      spec.tags = split_csv(gen_tags);
      const auto paths = mqr::gen_synthetic(spec);
      std::printf("wrote %s\nwrote %s\nwrote %s\n", paths.catalog.c_str(),
                  paths.train.c_str(), paths.test.c_str());
      return 0;
    }

    if (*tr) {
      tcfg.pretrained_groups = split_csv(tr_pretrained);
      const auto catalog = mqr::load_catalog(tr_catalog);
      const auto records =
          mqr::load_interactions(tr_interactions, catalog, tr_max_history);
      const auto t0 = std::chrono::steady_clock::now();
      auto result = mqr::train(records, catalog, tcfg);
      const double secs =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      mqr::save_model(result.model, tr_checkpoint);
      for (std::size_t e = 0; e < result.loss_curve.size(); ++e)
        std::printf("epoch %zu  loss %.6f\n", e + 1, result.loss_curve[e]);
      std::printf("trained %zu records in %.1fs -> %s\n", records.size(), secs,
                  tr_checkpoint.c_str());
      return 0;
    }

    if (*rm) {
      std::filesystem::create_directories(rm_out);
      const auto remapped = mqr::load_catalog_sparse(rm_catalog);
      const std::string out_catalog = rm_out + "/catalog.jsonl";
      mqr::save_catalog(remapped.catalog, out_catalog);
      nlohmann::json idmap = nlohmann::json::array();
      for (auto old : remapped.original_ids) idmap.push_back(old);
      write_text_file(rm_out + "/idmap.json", idmap.dump() + "\n");
      std::printf("wrote %s (%zu items)\nwrote %s/idmap.json\n", out_catalog.c_str(),
                  remapped.catalog.n_items, rm_out.c_str());
      if (!rm_interactions.empty()) {
        const std::string out_inter = rm_out + "/interactions.jsonl";
        mqr::remap_interactions(rm_interactions, out_inter, remapped);
        std::printf("wrote %s\n", out_inter.c_str());
      }
      return 0;
    }

    if (*bi) {
      const auto catalog = mqr::load_catalog(bi_catalog);
      auto model = mqr::load_model(bi_checkpoint);
      model.mapping.attach_text_features(catalog);
      const auto graph = mqr::build_exact_knn(model.mapping, bi_degree,
                                              mqr::parse_row_mode(bi_mode));
      mqr::save_graph(graph, bi_graph);
      const auto gaps = mqr::neighbor_gap_diagnostic(model.mapping, graph);
      std::printf("wrote %s (n=%u, degree=%u)\n", bi_graph.c_str(), graph.n,
                  graph.degree);
      std::printf("edge gap ||U(v_i-v_j)||: mean %.4g, max %.4g "
                  "(worst-case score gap %.4g at B=%g)\n",
                  gaps.mean_projected_gap, gaps.max_projected_gap,
                  gaps.max_score_gap_bound, mqr::kDefaultBound);
      return 0;
    }

    if (*rt) {
      mqr::EnginePaths paths{rt_catalog, rt_checkpoint, rt_graph, rt_registry};
      const auto bundle = mqr::EngineBundle::load(paths, rt_flags.to_config());
      const auto history = parse_id_list(rt_history);
      for (mqr::ItemId id : history)
        if (!bundle.catalog.valid_id(id))
          throw std::runtime_error("history id " + std::to_string(id) +
                                   " not in catalog");
      const int tag_idx = bundle.model.fg.tag_index(rt_objective);
      if (tag_idx < 0 && !rt_objective.empty())
        std::fprintf(stderr, "warning: unknown objective tag '%s', using default embedding\n",
                     rt_objective.c_str());
      if (const auto* obj = bundle.registry.find(rt_objective)) {
        mqr::InteractionRecord req;
        req.history = history;
        req.query_text = rt_query;
        const auto seq = mqr::serialize_user(
            req, *obj, bundle.model.fg.query_tokens());
        std::fprintf(stderr, "request: %s\n", mqr::render(seq).c_str());
      }
      const auto queries = bundle.model.fg.make_queries(history, tag_idx);
      const auto result = mqr::retrieve_cached(bundle.model.mapping, bundle.rows,
                                               queries, bundle.graph, bundle.base_cfg);
      for (const auto& it : result) std::printf("%u\t%.6f\n", it.id, it.score);
      return 0;
    }

    if (*ev) {
      const auto t0 = std::chrono::steady_clock::now();
      const auto catalog = mqr::load_catalog(ev_catalog);
      auto model = mqr::load_model(ev_checkpoint);
      model.mapping.attach_text_features(catalog);
      const auto records = mqr::load_interactions(ev_interactions, catalog);
      auto requests = mqr::make_requests(records, model.fg, catalog);
      if (ev_max_requests && requests.size() > ev_max_requests)
        requests.resize(ev_max_requests);

      const mqr::SamplerConfig base = ev_flags.to_config();
      const mqr::MatF rows = mqr::effective_rows(model.mapping, base.mode);
      mqr::NeighborGraph graph;
      if (!ev_graph.empty())
        graph = mqr::load_graph(ev_graph);
      else
        graph = mqr::build_exact_knn(rows, ev_degree);

      mqr::EvalReport report;
      report.random_baseline =
          static_cast<double>(base.k) / static_cast<double>(catalog.n_items);
      report.popularity_baseline =
          mqr::popularity_baseline_recall(catalog, requests, base.k);
      report.recall_overall = mqr::mean_recall(model, rows, graph, requests, base);

      std::vector<std::string> tags;
      for (const auto& q : requests)
        if (std::find(tags.begin(), tags.end(), q.record->objective_tag) == tags.end())
          tags.push_back(q.record->objective_tag);
      for (const auto& tag : tags) {
        std::vector<mqr::EvalRequest> sub;
        for (const auto& q : requests)
          if (q.record->objective_tag == tag) sub.push_back(q);
        report.recall_per_tag.emplace_back(
            tag, mqr::mean_recall(model, rows, graph, sub, base));
      }

      if (ev_sweep_seeds > 0) {
        std::vector<std::uint32_t> ts;
        for (const auto& s : split_csv(ev_sweep_T))
          ts.push_back(static_cast<std::uint32_t>(std::stoul(s)));
        std::vector<std::uint64_t> seeds(ev_sweep_seeds);
        for (std::uint32_t i = 0; i < ev_sweep_seeds; ++i) seeds[i] = base.seed + i;
        report.sweep =
            mqr::precision_sweep(model, graph, requests, base, ts, seeds);
      }
      if (!ev_no_ablation)
        report.ablation = mqr::ablate_item_representation(model, requests,
                                                          base, ev_degree);
      report.wall_seconds =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

      std::fputs(report.to_text().c_str(), stdout);
      if (!ev_report_json.empty()) write_text_file(ev_report_json, report.to_json() + "\n");
      if (!ev_sweep_csv.empty()) write_text_file(ev_sweep_csv, mqr::sweep_csv(report.sweep));
      return 0;
    }

    if (*fl) {
      const auto rep = mqr::flops_estimate(fl_M, fl_H, fl_D, fl_T, fl_K, fl_nbr, fl_C);
      std::printf("sampled %llu (%.3g)\nfull    %llu (%.3g)\nratio   %.2f\n",
                  rep.sampled, static_cast<double>(rep.sampled), rep.full,
                  static_cast<double>(rep.full), rep.ratio);
      if (!fl_report_json.empty()) {
        nlohmann::json j{{"sampled", rep.sampled}, {"full", rep.full}, {"ratio", rep.ratio}};
        write_text_file(fl_report_json, j.dump() + "\n");
      }
      return 0;
    }

    if (*sv) {
      mqr::EnginePaths paths{sv_catalog, sv_checkpoint, sv_graph, sv_registry};
      const auto bundle = mqr::EngineBundle::load(paths, sv_flags.to_config());
      mqr::LineServer server(bundle);
      server.start(sv_port);
      std::signal(SIGINT, handle_signal);
      std::signal(SIGTERM, handle_signal);
      std::printf("serving on port %u (newline-delimited JSON), Ctrl-C to stop\n",
                  server.port());
      std::fflush(stdout);
      while (!g_stop)
        std::this_thread::sleep_for(std::chrono::milliseconds(100));
      server.stop();
      std::printf("stopped\n");
      return 0;
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
