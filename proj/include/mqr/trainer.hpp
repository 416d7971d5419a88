#pragma once
// Contrastive training of the decomposed mapping plus a small swappable
// feature generator: mean-pooled history embedding + objective embedding fed
// through M linear heads, one query column each. Negatives drawn with
// replacement proportional to freq^power.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "mqr/catalog.hpp"
#include "mqr/rng.hpp"
#include "mqr/scoring.hpp"

namespace mqr {

struct ToyFeatureGenerator {
  MatF item_embed;       // |C| x De
  MatF objective_embed;  // n_tags x De
  std::vector<std::string> objective_tags;
  std::vector<MatF> query_heads;  // M matrices, each D x De

  std::size_t embed_dim() const { return item_embed.cols; }
  std::size_t feature_dim() const {
    return query_heads.empty() ? 0 : query_heads[0].rows;
  }
  std::size_t query_tokens() const { return query_heads.size(); }

  // -1 when the tag was not seen in training.
  int tag_index(const std::string& tag) const;

  // Pooled input x; tag_idx < 0 falls back to the mean tag embedding.
  std::vector<float> pooled_input(std::span<const ItemId> history,
                                  int tag_idx) const;
  QueryBlock make_queries(std::span<const ItemId> history, int tag_idx) const;
};

struct Model {
  DecomposedMapping mapping;
  ToyFeatureGenerator fg;
};

struct NegativeSampler {
  std::vector<double> cumulative;  // over freq^power

  NegativeSampler(std::span<const std::uint64_t> frequencies, double power);
  ItemId sample(SplitMix64& rng) const;
  std::vector<ItemId> sample_many(std::size_t n, SplitMix64& rng) const;
};

enum class Optimizer { adagrad, sgd, adam };

struct TrainConfig {
  float lr = 0.1f;
  Optimizer optimizer = Optimizer::adagrad;
  std::uint32_t batch_size = 64;
  std::uint32_t epochs = 5;
  std::uint64_t seed = 1;
  std::uint32_t n_neg = 512;
  float neg_power = 0.75f;
  float weight_decay = 0.01f;  // decoupled, on the V_dis table only
  float pretrained_lr_ratio = 0.1f;
  std::vector<std::string> pretrained_groups;  // none flagged by default
  double train_tau = 0.0;                      // 0 = no temperature in the loss
  float bound = kDefaultBound;
  // model shape
  std::size_t feature_dim = 128;  // D
  std::size_t rank = 32;          // H
  std::size_t embed_dim = 32;     // De
  std::size_t query_tokens = 8;   // M
  bool head_norm = true;
};

// Dense gradient buffers plus the touched-row bookkeeping that keeps updates
// sparse for the big tables.
struct ModelGrads {
  MatF u, v_dis, p_trans;
  std::vector<float> head_gain;
  MatF item_embed, objective_embed;
  std::vector<MatF> query_heads;
  std::vector<ItemId> touched_items;   // v_dis rows
  std::vector<ItemId> touched_embeds;  // item_embed rows
  std::vector<int> touched_tags;

  static ModelGrads zeros_like(const Model& model);
  void reset();  // zero only what was touched
};

// Eq-style contrastive loss: per positive v,
//   -log exp(s_v) / (exp(s_v) + sum_{z in N'} exp(s_z)),
// where s_x = max_j <v_x, proj_j> through bound constraint + projection and
// N' drops exact duplicates of v. Always >= 0.
double nce_loss(const DecomposedMapping& mapping, const QueryBlock& queries,
                std::span<const ItemId> positives,
                std::span<const ItemId> negatives, float bound,
                double train_tau = 0.0);

// Gradients wrt mapping parameters, accumulated into `grads`; also returns
// the gradient wrt the raw query block (for the feature-generator chain).
// Max ties route to the smallest maximizing column; the bound constraint uses
// its true derivative on both branches.
double nce_query_grads(const DecomposedMapping& mapping, const QueryBlock& queries,
                       std::span<const ItemId> positives,
                       std::span<const ItemId> negatives, float bound,
                       double train_tau, ModelGrads& grads, MatF& d_queries);

void fg_backward(const ToyFeatureGenerator& fg, std::span<const ItemId> history,
                 int tag_idx, const MatF& d_queries, ModelGrads& grads);

// Whole-example gradient: feature generation, scoring, loss.
double nce_example_grads(const Model& model, std::span<const ItemId> history,
                         int tag_idx, std::span<const ItemId> positives,
                         std::span<const ItemId> negatives,
                         const TrainConfig& config, ModelGrads& grads);

Model init_model(const CandidateCatalog& catalog,
                 std::span<const std::string> objective_tags,
                 const TrainConfig& config);

struct TrainResult {
  Model model;
  std::vector<double> loss_curve;  // mean per-record loss per epoch
};

// Adam with sparse row updates (embedding tables are touched-rows only);
// deterministic given the seed. Throws on non-finite loss.
TrainResult train(std::span<const InteractionRecord> records,
                  const CandidateCatalog& catalog, const TrainConfig& config);

// Version-2 URMM bundle: the bare three-matrix prefix plus head-norm state
// and the feature generator.
void save_model(const Model& model, const std::string& path);
Model load_model(const std::string& path);  // text_features left null

}  // namespace mqr
