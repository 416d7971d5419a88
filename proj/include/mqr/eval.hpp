#pragma once
// Metrics, oracle comparisons, parameter sweeps, synthetic dataset
// generation, and the matrix-computation FLOP calculator.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mqr/catalog.hpp"
#include "mqr/neighbor_graph.hpp"
#include "mqr/sampler.hpp"
#include "mqr/trainer.hpp"

namespace mqr {

// |top-K(retrieved) intersect ground_truth| / |ground_truth|.
double recall_at_k(std::span<const ItemId> retrieved_ranked,
                   std::span<const ItemId> ground_truth, std::size_t k);

struct FlopsReport {
  unsigned long long sampled = 0;  // M*H*(D + T*K*max_nbr)
  unsigned long long full = 0;     // M*D*|C|
  double ratio = 0.0;
};

FlopsReport flops_estimate(std::uint64_t m, std::uint64_t h, std::uint64_t d,
                           std::uint64_t t, std::uint64_t k,
                           std::uint64_t max_nbr, std::uint64_t c_size);

struct SyntheticSpec {
  std::uint32_t clusters = 200;
  std::uint32_t items_per_cluster = 50;
  std::uint32_t users = 5000;
  std::uint32_t eval_users = 200;       // test records for the first users
  std::uint32_t history_len = 50;
  std::uint32_t positives_per_record = 16;
  std::uint32_t text_dim = 32;          // G
  double text_noise = 0.08;
  double cluster_mix = 0.93;            // draw from the preferred clusters w.p. this
  double secondary_share = 0.0;         // fraction of cluster_mix on a secondary cluster
  double popularity_skew = 0.5;         // within-cluster Zipf exponent
  double unseen_eval_mix = 0.15;        // test positives drawn from the unseen split
  double unseen_fraction = 0.10;        // tail of each cluster held out of training
  std::vector<std::string> tags = {"CPR", "PPR", "RSA"};
  std::uint64_t seed = 1;
  std::string out_dir = ".";
};

struct SyntheticPaths {
  std::string catalog;
  std::string train;
  std::string test;
};

// Clustered items with informative text features; per-user tag-shifted
// cluster preferences; item frequencies = training occurrence counts, so the
// unseen split has freq 0 and seen_flags reflect training membership.
SyntheticPaths gen_synthetic(const SyntheticSpec& spec);

struct EvalRequest {
  const InteractionRecord* record;
  int tag_idx;
  std::vector<ItemId> truth_sorted;         // sorted unique positives
  std::vector<ItemId> truth_unseen_sorted;  // restricted to freq-0 items
};

std::vector<EvalRequest> make_requests(std::span<const InteractionRecord> records,
                                       const ToyFeatureGenerator& fg,
                                       const CandidateCatalog& catalog);

// Mean R@K of the sampler over requests (per-request seeds derived from
// base_cfg.seed).
double mean_recall(const Model& model, const MatF& rows,
                   const NeighborGraph& graph,
                   std::span<const EvalRequest> requests,
                   const SamplerConfig& base_cfg);

double popularity_baseline_recall(const CandidateCatalog& catalog,
                                  std::span<const EvalRequest> requests,
                                  std::size_t k);

struct SweepPoint {
  std::uint32_t steps;
  std::uint64_t seed;
  double precision;        // mean sampled R@K / mean oracle R@K
  double oracle_overlap;   // |sampled intersect oracle top-K| / K
};

// Table of sampled-vs-exhaustive retrieval quality per (T, seed). Oracle
// recalls are computed once per request from the full score vector.
std::vector<SweepPoint> precision_sweep(const Model& model,
                                        const NeighborGraph& graph,
                                        std::span<const EvalRequest> requests,
                                        const SamplerConfig& base_cfg,
                                        std::span<const std::uint32_t> step_counts,
                                        std::span<const std::uint64_t> seeds);

struct AblationRow {
  RowMode mode;
  double recall_all;
  double recall_unseen;
};

// Retrieval quality with item rows restricted to one decomposition side; the
// neighbor graph is rebuilt per mode over the matching rows.
std::vector<AblationRow> ablate_item_representation(
    const Model& model, std::span<const EvalRequest> requests, const SamplerConfig& base_cfg,
    std::uint32_t degree);

std::string sweep_csv(std::span<const SweepPoint> points);

struct EvalReport {
  std::vector<std::pair<std::string, double>> recall_per_tag;
  double recall_overall = 0.0;
  double random_baseline = 0.0;
  double popularity_baseline = 0.0;
  std::vector<SweepPoint> sweep;
  std::vector<AblationRow> ablation;
  double wall_seconds = 0.0;

  std::string to_json() const;
  std::string to_text() const;
};

}  // namespace mqr
