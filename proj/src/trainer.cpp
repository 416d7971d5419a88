#include "mqr/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <unordered_map>

namespace mqr {

int ToyFeatureGenerator::tag_index(const std::string& tag) const {
  for (std::size_t i = 0; i < objective_tags.size(); ++i)
    if (objective_tags[i] == tag) return static_cast<int>(i);
  return -1;
}

std::vector<float> ToyFeatureGenerator::pooled_input(
    std::span<const ItemId> history, int tag_idx) const {
  const std::size_t de = embed_dim();
  std::vector<double> acc(de, 0.0);
  if (!history.empty()) {
    for (ItemId id : history) {
      auto r = item_embed.row(id);
      for (std::size_t e = 0; e < de; ++e) acc[e] += r[e];
    }
    for (std::size_t e = 0; e < de; ++e) acc[e] /= static_cast<double>(history.size());
  }
  if (tag_idx >= 0) {
    auto r = objective_embed.row(static_cast<std::size_t>(tag_idx));
    for (std::size_t e = 0; e < de; ++e) acc[e] += r[e];
  } else if (objective_embed.rows > 0) {
    // Unknown tag: fall back to the mean of the trained tag embeddings.
    for (std::size_t t = 0; t < objective_embed.rows; ++t) {
      auto r = objective_embed.row(t);
      for (std::size_t e = 0; e < de; ++e)
        acc[e] += r[e] / static_cast<double>(objective_embed.rows);
    }
  }
  std::vector<float> x(de);
  for (std::size_t e = 0; e < de; ++e) x[e] = static_cast<float>(acc[e]);
  return x;
}

QueryBlock ToyFeatureGenerator::make_queries(std::span<const ItemId> history,
                                             int tag_idx) const {
  const std::vector<float> x = pooled_input(history, tag_idx);
  const std::size_t d = feature_dim(), m = query_tokens(), de = embed_dim();
  QueryBlock q{MatF(d, m)};
  for (std::size_t j = 0; j < m; ++j) {
    const MatF& head = query_heads[j];
    for (std::size_t i = 0; i < d; ++i) {
      double acc = 0.0;
      for (std::size_t e = 0; e < de; ++e)
        acc += static_cast<double>(head.at(i, e)) * static_cast<double>(x[e]);
      q.f.at(i, j) = static_cast<float>(acc);
    }
  }
  return q;
}

NegativeSampler::NegativeSampler(std::span<const std::uint64_t> frequencies,
                                 double power) {
  cumulative.resize(frequencies.size());
  double total = 0.0;
  for (std::size_t i = 0; i < frequencies.size(); ++i) {
    total += std::pow(static_cast<double>(frequencies[i]), power);
    cumulative[i] = total;
  }
  if (!(total > 0.0))
    throw std::runtime_error("negative sampler: all item weights are zero");
}

ItemId NegativeSampler::sample(SplitMix64& rng) const {
  const double u = rng.uniform01() * cumulative.back();
  const auto it = std::upper_bound(cumulative.begin(), cumulative.end(), u);
  const std::size_t idx = std::min<std::size_t>(
      static_cast<std::size_t>(it - cumulative.begin()), cumulative.size() - 1);
  return static_cast<ItemId>(idx);
}

std::vector<ItemId> NegativeSampler::sample_many(std::size_t n,
                                                 SplitMix64& rng) const {
  std::vector<ItemId> out(n);
  for (auto& id : out) id = sample(rng);
  return out;
}

ModelGrads ModelGrads::zeros_like(const Model& model) {
  ModelGrads g;
  g.u = MatF(model.mapping.u.rows, model.mapping.u.cols);
  g.v_dis = MatF(model.mapping.v_dis.rows, model.mapping.v_dis.cols);
  g.p_trans = MatF(model.mapping.p_trans.rows, model.mapping.p_trans.cols);
  g.head_gain.assign(model.mapping.head_gain.size(), 0.f);
  g.item_embed = MatF(model.fg.item_embed.rows, model.fg.item_embed.cols);
  g.objective_embed = MatF(model.fg.objective_embed.rows, model.fg.objective_embed.cols);
  g.query_heads.reserve(model.fg.query_heads.size());
  for (const auto& h : model.fg.query_heads) g.query_heads.emplace_back(h.rows, h.cols);
  return g;
}

void ModelGrads::reset() {
  std::fill(u.data.begin(), u.data.end(), 0.f);
  std::fill(p_trans.data.begin(), p_trans.data.end(), 0.f);
  std::fill(head_gain.begin(), head_gain.end(), 0.f);
  std::fill(objective_embed.data.begin(), objective_embed.data.end(), 0.f);
  for (auto& h : query_heads) std::fill(h.data.begin(), h.data.end(), 0.f);
  for (ItemId id : touched_items) {
    auto r = v_dis.row(id);
    std::fill(r.begin(), r.end(), 0.f);
  }
  for (ItemId id : touched_embeds) {
    auto r = item_embed.row(id);
    std::fill(r.begin(), r.end(), 0.f);
  }
  touched_items.clear();
  touched_embeds.clear();
  touched_tags.clear();
}

namespace {

struct UniqueItems {
  std::vector<ItemId> ids;
  std::vector<std::uint32_t> neg_mult;    // multiplicity in the negative list
  std::vector<std::size_t> pos_index;     // per deduped positive, index into ids
};

UniqueItems collect_items(std::span<const ItemId> positives,
                          std::span<const ItemId> negatives) {
  UniqueItems u;
  std::unordered_map<ItemId, std::size_t> index;
  index.reserve(positives.size() + negatives.size());
  for (ItemId p : positives) {
    auto [it, fresh] = index.emplace(p, u.ids.size());
    if (fresh) {
      u.ids.push_back(p);
      u.neg_mult.push_back(0);
      u.pos_index.push_back(it->second);
    }
  }
  for (ItemId z : negatives) {
    auto [it, fresh] = index.emplace(z, u.ids.size());
    if (fresh) {
      u.ids.push_back(z);
      u.neg_mult.push_back(1);
    } else {
      ++u.neg_mult[it->second];
    }
  }
  return u;
}

// Core forward (+ optional backward to mapping params and raw queries).
double nce_core(const DecomposedMapping& mapping, const QueryBlock& queries,
                std::span<const ItemId> positives,
                std::span<const ItemId> negatives, float bound, double train_tau,
                ModelGrads* grads, MatF* d_queries_out) {
  if (positives.empty()) throw std::invalid_argument("nce: no positives");
  mapping.check_consistent();

  const double tau_eff = train_tau > 0.0 ? train_tau : 1.0;
  const std::size_t d = mapping.feature_dim(), h = mapping.rank(),
                    m = queries.count();

  const BoundedQueryBlock bounded = bound_constrain(queries, bound);
  MatF pre;
  std::vector<float> rms;
  const ProjectedQueryBlock proj = project_queries_traced(mapping, bounded, pre, rms);

  const UniqueItems items = collect_items(positives, negatives);
  const std::size_t n_uniq = items.ids.size();

  // Effective rows, scores, argmax column (smallest j on ties).
  MatF rows(n_uniq, h);
  std::vector<float> score(n_uniq);
  std::vector<std::uint32_t> arg_col(n_uniq);
  for (std::size_t i = 0; i < n_uniq; ++i) {
    effective_item_row(mapping, items.ids[i], RowMode::sum, rows.row(i));
    double best = -std::numeric_limits<double>::infinity();
    std::uint32_t best_j = 0;
    for (std::size_t j = 0; j < m; ++j) {
      double acc = 0.0;
      for (std::size_t k = 0; k < h; ++k)
        acc += static_cast<double>(rows.at(i, k)) * static_cast<double>(proj.f.at(k, j));
      if (acc > best) {
        best = acc;
        best_j = static_cast<std::uint32_t>(j);
      }
    }
    score[i] = static_cast<float>(best);
    arg_col[i] = best_j;
  }

  // Per-positive log-sum-exp terms; d_score accumulates dL/ds_x.
  double loss = 0.0;
  std::vector<double> d_score(n_uniq, 0.0);
  for (std::size_t pi : items.pos_index) {
    const double a_v = static_cast<double>(score[pi]) / tau_eff;
    double mx = a_v;
    for (std::size_t i = 0; i < n_uniq; ++i)
      if (items.neg_mult[i] > 0 && i != pi)
        mx = std::max(mx, static_cast<double>(score[i]) / tau_eff);
    double z = std::exp(a_v - mx);
    for (std::size_t i = 0; i < n_uniq; ++i) {
      if (items.neg_mult[i] == 0 || i == pi) continue;
      z += items.neg_mult[i] * std::exp(static_cast<double>(score[i]) / tau_eff - mx);
    }
    loss += -(a_v - mx - std::log(z));
    if (grads || d_queries_out) {
      const double p_v = std::exp(a_v - mx) / z;
      d_score[pi] += (p_v - 1.0) / tau_eff;
      for (std::size_t i = 0; i < n_uniq; ++i) {
        if (items.neg_mult[i] == 0 || i == pi) continue;
        const double p_z =
            std::exp(static_cast<double>(score[i]) / tau_eff - mx) / z;
        d_score[i] += items.neg_mult[i] * p_z / tau_eff;
      }
    }
  }
  if (!grads && !d_queries_out) return loss;

  // Item-side grads and dY (projected query grads).
  MatF d_proj(h, m);
  const MatF& text = *mapping.text_features;
  for (std::size_t i = 0; i < n_uniq; ++i) {
    const double g = d_score[i];
    if (g == 0.0) continue;
    const std::uint32_t j = arg_col[i];
    const ItemId id = items.ids[i];
    if (grads) {
      auto gv = grads->v_dis.row(id);
      for (std::size_t k = 0; k < h; ++k)
        gv[k] += static_cast<float>(g * proj.f.at(k, j));
      grads->touched_items.push_back(id);
      auto tx = text.row(id);
      for (std::size_t gg = 0; gg < text.cols; ++gg) {
        const double coef = g * tx[gg];
        for (std::size_t k = 0; k < h; ++k)
          grads->p_trans.at(gg, k) += static_cast<float>(coef * proj.f.at(k, j));
      }
    }
    for (std::size_t k = 0; k < h; ++k)
      d_proj.at(k, j) += static_cast<float>(g * rows.at(i, k));
  }

  // RMS normalization backward (per column) to the pre-projection values.
  MatF d_pre(h, m);
  for (std::size_t j = 0; j < m; ++j) {
    if (mapping.head_norm) {
      const double r = rms[j];
      double inner = 0.0;  // sum_l dY_l * gain_l * pre_l
      for (std::size_t k = 0; k < h; ++k)
        inner += static_cast<double>(d_proj.at(k, j)) * mapping.head_gain[k] *
                 static_cast<double>(pre.at(k, j));
      for (std::size_t k = 0; k < h; ++k) {
        const double dy = d_proj.at(k, j);
        d_pre.at(k, j) = static_cast<float>(
            dy * mapping.head_gain[k] / r -
            static_cast<double>(pre.at(k, j)) * inner /
                (static_cast<double>(h) * r * r * r));
        if (grads)
          grads->head_gain[k] +=
              static_cast<float>(dy * static_cast<double>(pre.at(k, j)) / r);
      }
    } else {
      for (std::size_t k = 0; k < h; ++k) d_pre.at(k, j) = d_proj.at(k, j);
    }
  }

  // pre = U^T F_bar: dU and dF_bar.
  MatF d_fbar(d, m);
  for (std::size_t j = 0; j < m; ++j) {
    for (std::size_t i = 0; i < d; ++i) {
      const double fb = bounded.f.at(i, j);
      double acc = 0.0;
      for (std::size_t k = 0; k < h; ++k) {
        const double dp = d_pre.at(k, j);
        if (grads) grads->u.at(i, k) += static_cast<float>(fb * dp);
        acc += static_cast<double>(mapping.u.at(i, k)) * dp;
      }
      d_fbar.at(i, j) = static_cast<float>(acc);
    }
  }

  // Bound constraint backward: identity below the bound, true derivative of
  // the scaled branch otherwise.
  if (d_queries_out) {
    *d_queries_out = MatF(d, m);
    for (std::size_t j = 0; j < m; ++j) {
      double norm_sq = 0.0;
      for (std::size_t i = 0; i < d; ++i) {
        const double v = queries.f.at(i, j);
        norm_sq += v * v;
      }
      const double norm = std::sqrt(norm_sq);
      if (norm <= static_cast<double>(bound)) {
        for (std::size_t i = 0; i < d; ++i)
          d_queries_out->at(i, j) = d_fbar.at(i, j);
      } else {
        double f_dot_df = 0.0;
        for (std::size_t i = 0; i < d; ++i)
          f_dot_df += static_cast<double>(queries.f.at(i, j)) *
                      static_cast<double>(d_fbar.at(i, j));
        const double s = static_cast<double>(bound) / norm;
        for (std::size_t i = 0; i < d; ++i) {
          const double fi = queries.f.at(i, j);
          d_queries_out->at(i, j) = static_cast<float>(
              s * d_fbar.at(i, j) - s * fi * f_dot_df / norm_sq);
        }
      }
    }
  }
  return loss;
}

}  // namespace

double nce_loss(const DecomposedMapping& mapping, const QueryBlock& queries,
                std::span<const ItemId> positives,
                std::span<const ItemId> negatives, float bound,
                double train_tau) {
  return nce_core(mapping, queries, positives, negatives, bound, train_tau,
                  nullptr, nullptr);
}

double nce_query_grads(const DecomposedMapping& mapping, const QueryBlock& queries,
                       std::span<const ItemId> positives,
                       std::span<const ItemId> negatives, float bound,
                       double train_tau, ModelGrads& grads, MatF& d_queries) {
  return nce_core(mapping, queries, positives, negatives, bound, train_tau,
                  &grads, &d_queries);
}

void fg_backward(const ToyFeatureGenerator& fg, std::span<const ItemId> history,
                 int tag_idx, const MatF& d_queries, ModelGrads& grads) {
  const std::size_t d = fg.feature_dim(), de = fg.embed_dim(), m = fg.query_tokens();
  const std::vector<float> x = fg.pooled_input(history, tag_idx);

  std::vector<double> dx(de, 0.0);
  for (std::size_t j = 0; j < m; ++j) {
    const MatF& head = fg.query_heads[j];
    MatF& d_head = grads.query_heads[j];
    for (std::size_t i = 0; i < d; ++i) {
      const double df = d_queries.at(i, j);
      if (df == 0.0) continue;
      for (std::size_t e = 0; e < de; ++e) {
        d_head.at(i, e) += static_cast<float>(df * x[e]);
        dx[e] += static_cast<double>(head.at(i, e)) * df;
      }
    }
  }

  if (!history.empty()) {
    const double inv = 1.0 / static_cast<double>(history.size());
    for (ItemId id : history) {
      auto r = grads.item_embed.row(id);
      for (std::size_t e = 0; e < de; ++e)
        r[e] += static_cast<float>(dx[e] * inv);
      grads.touched_embeds.push_back(id);
    }
  }
  if (tag_idx >= 0) {
    auto r = grads.objective_embed.row(static_cast<std::size_t>(tag_idx));
    for (std::size_t e = 0; e < de; ++e) r[e] += static_cast<float>(dx[e]);
    grads.touched_tags.push_back(tag_idx);
  }
}

double nce_example_grads(const Model& model, std::span<const ItemId> history,
                         int tag_idx, std::span<const ItemId> positives,
                         std::span<const ItemId> negatives,
                         const TrainConfig& config, ModelGrads& grads) {
  const QueryBlock queries = model.fg.make_queries(history, tag_idx);
  MatF d_queries;
  const double loss =
      nce_query_grads(model.mapping, queries, positives, negatives, config.bound,
                      config.train_tau, grads, d_queries);
  fg_backward(model.fg, history, tag_idx, d_queries, grads);
  return loss;
}

namespace {

void fill_normal(MatF& m, double sigma, SplitMix64& rng) {
  for (auto& v : m.data) v = static_cast<float>(sigma * rng.normal());
}

}  // namespace

Model init_model(const CandidateCatalog& catalog,
                 std::span<const std::string> objective_tags,
                 const TrainConfig& config) {
  Model model;
  SplitMix64 rng_u = SplitMix64::stream(config.seed, 101);
  SplitMix64 rng_v = SplitMix64::stream(config.seed, 102);
  SplitMix64 rng_p = SplitMix64::stream(config.seed, 103);
  SplitMix64 rng_e = SplitMix64::stream(config.seed, 104);
  SplitMix64 rng_o = SplitMix64::stream(config.seed, 105);
  SplitMix64 rng_h = SplitMix64::stream(config.seed, 106);

  model.mapping.u = MatF(config.feature_dim, config.rank);
  fill_normal(model.mapping.u, 1.0 / std::sqrt(static_cast<double>(config.feature_dim)),
              rng_u);
  model.mapping.v_dis = MatF(catalog.n_items, config.rank);
  fill_normal(model.mapping.v_dis, 0.02, rng_v);
  model.mapping.p_trans = MatF(catalog.text_dim, config.rank);
  fill_normal(model.mapping.p_trans, 0.02, rng_p);
  model.mapping.head_norm = config.head_norm;
  model.mapping.head_gain.assign(config.rank, 1.f);

  model.fg.item_embed = MatF(catalog.n_items, config.embed_dim);
  fill_normal(model.fg.item_embed, 0.1, rng_e);
  model.fg.objective_embed = MatF(objective_tags.size(), config.embed_dim);
  fill_normal(model.fg.objective_embed, 0.1, rng_o);
  model.fg.objective_tags.assign(objective_tags.begin(), objective_tags.end());
  model.fg.query_heads.clear();
  for (std::size_t j = 0; j < config.query_tokens; ++j) {
    MatF head(config.feature_dim, config.embed_dim);
    fill_normal(head, 1.0 / std::sqrt(static_cast<double>(config.embed_dim)), rng_h);
    model.fg.query_heads.push_back(std::move(head));
  }
  return model;
}

namespace {

struct AdamBuf {
  MatF m, v;
  explicit AdamBuf(const MatF& like) : m(like.rows, like.cols), v(like.rows, like.cols) {}
};

// First-order update. Adagrad is the default: per-coordinate scaling without
// Adam's scale-free steps, which with frequency-proportional shared negatives
// keep drifting popular items downward long after the force magnitudes
// balance. The accumulator reuses the first moment buffer.
struct Optim {
  Optimizer kind;
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  std::uint64_t t = 0;

  AdamBuf u, v_dis, p_trans, gain, item_embed, objective_embed;
  std::vector<AdamBuf> heads;

  Optim(const Model& model, Optimizer k)
      : kind(k),
        u(model.mapping.u),
        v_dis(model.mapping.v_dis),
        p_trans(model.mapping.p_trans),
        gain(MatF(1, model.mapping.head_gain.size())),
        item_embed(model.fg.item_embed),
        objective_embed(model.fg.objective_embed) {
    for (const auto& h : model.fg.query_heads) heads.emplace_back(h);
  }

  void update_span(std::span<float> param, std::span<const float> grad,
                   AdamBuf& buf, std::size_t offset, double lr, double scale,
                   double weight_decay = 0.0) {
    if (weight_decay > 0.0 && lr > 0.0) {
      const float keep = static_cast<float>(1.0 - lr * weight_decay);
      for (auto& p : param) p *= keep;
    }
    if (kind == Optimizer::sgd) {
      for (std::size_t i = 0; i < param.size(); ++i)
        param[i] -= static_cast<float>(lr * static_cast<double>(grad[i]) * scale);
      return;
    }
    if (kind == Optimizer::adagrad) {
      for (std::size_t i = 0; i < param.size(); ++i) {
        const double g = static_cast<double>(grad[i]) * scale;
        if (g == 0.0) continue;
        float& acc = buf.m.data[offset + i];
        acc = static_cast<float>(acc + g * g);
        param[i] -= static_cast<float>(lr * g / (std::sqrt(acc) + eps));
      }
      return;
    }
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t));
    for (std::size_t i = 0; i < param.size(); ++i) {
      const double g = static_cast<double>(grad[i]) * scale;
      float& mv = buf.m.data[offset + i];
      float& vv = buf.v.data[offset + i];
      mv = static_cast<float>(beta1 * mv + (1.0 - beta1) * g);
      vv = static_cast<float>(beta2 * vv + (1.0 - beta2) * g * g);
      const double mhat = mv / bc1;
      const double vhat = vv / bc2;
      param[i] -= static_cast<float>(lr * mhat / (std::sqrt(vhat) + eps));
    }
  }
};

double group_lr(const TrainConfig& cfg, const char* group) {
  for (const auto& g : cfg.pretrained_groups)
    if (g == group) return static_cast<double>(cfg.lr) * cfg.pretrained_lr_ratio;
  return cfg.lr;
}

std::vector<ItemId> sorted_unique(std::vector<ItemId> v) {
  std::sort(v.begin(), v.end());
  v.erase(std::unique(v.begin(), v.end()), v.end());
  return v;
}

}  // namespace

TrainResult train(std::span<const InteractionRecord> records,
                  const CandidateCatalog& catalog, const TrainConfig& config) {
  if (records.empty()) throw std::invalid_argument("train: no records");

  std::vector<std::string> tags;
  for (const auto& r : records) tags.push_back(r.objective_tag);
  std::sort(tags.begin(), tags.end());
  tags.erase(std::unique(tags.begin(), tags.end()), tags.end());

  TrainResult result;
  result.model = init_model(catalog, tags, config);
  Model& model = result.model;
  model.mapping.attach_text_features(catalog);

  const NegativeSampler neg_sampler(catalog.frequencies, config.neg_power);
  ModelGrads grads = ModelGrads::zeros_like(model);
  Optim adam(model, config.optimizer);

  // One fixed permutation and per-batch negative streams keyed by the batch
  // index within the epoch: with lr = 0 every epoch sees identical losses.
  std::vector<std::size_t> order(records.size());
  std::iota(order.begin(), order.end(), 0u);
  SplitMix64 shuffle_rng = SplitMix64::stream(config.seed, 1000);
  for (std::size_t i = order.size(); i > 1; --i)
    std::swap(order[i - 1], order[shuffle_rng.bounded(i)]);

  for (std::uint32_t epoch = 0; epoch < config.epochs; ++epoch) {
    double epoch_loss = 0.0;
    std::uint64_t batch_idx = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      const std::size_t batch_n = end - start;
      SplitMix64 neg_rng = SplitMix64::stream(config.seed, 5000 + batch_idx);
      const std::vector<ItemId> negatives =
          neg_sampler.sample_many(config.n_neg, neg_rng);

      grads.reset();
      double batch_loss = 0.0;
      try {
        for (std::size_t r = start; r < end; ++r) {
          const InteractionRecord& rec = records[order[r]];
          const int tag_idx = model.fg.tag_index(rec.objective_tag);
          batch_loss += nce_example_grads(model, rec.history, tag_idx, rec.positives,
                                          negatives, config, grads);
        }
      } catch (const std::runtime_error& e) {
        // Exploded parameters surface as non-finite inputs in the forward.
        if (std::string(e.what()).find("non-finite") != std::string::npos)
          throw std::runtime_error("training diverged: " + std::string(e.what()) +
                                   " at epoch " + std::to_string(epoch) + ", batch " +
                                   std::to_string(batch_idx));
        throw;
      }
      if (!std::isfinite(batch_loss))
        throw std::runtime_error(
            "training diverged: non-finite loss at epoch " + std::to_string(epoch) +
            ", batch " + std::to_string(batch_idx));
      epoch_loss += batch_loss;

      const double scale = 1.0 / static_cast<double>(batch_n);
      ++adam.t;
      adam.update_span(std::span<float>(model.mapping.u.data),
                       std::span<const float>(grads.u.data), adam.u, 0,
                       group_lr(config, "u"), scale);
      adam.update_span(std::span<float>(model.mapping.p_trans.data),
                       std::span<const float>(grads.p_trans.data), adam.p_trans, 0,
                       group_lr(config, "p_trans"), scale);
      if (model.mapping.head_norm)
        adam.update_span(std::span<float>(model.mapping.head_gain),
                         std::span<const float>(grads.head_gain), adam.gain, 0,
                         group_lr(config, "head_gain"), scale);
      adam.update_span(std::span<float>(model.fg.objective_embed.data),
                       std::span<const float>(grads.objective_embed.data),
                       adam.objective_embed, 0, group_lr(config, "objective_embed"),
                       scale);
      for (std::size_t j = 0; j < model.fg.query_heads.size(); ++j)
        adam.update_span(std::span<float>(model.fg.query_heads[j].data),
                         std::span<const float>(grads.query_heads[j].data),
                         adam.heads[j], 0, group_lr(config, "query_heads"), scale);
      for (ItemId id : sorted_unique(grads.touched_items))
        adam.update_span(model.mapping.v_dis.row(id), grads.v_dis.row(id),
                         adam.v_dis, static_cast<std::size_t>(id) * model.mapping.v_dis.cols,
                         group_lr(config, "v_dis"), scale, config.weight_decay);
      for (ItemId id : sorted_unique(grads.touched_embeds))
        adam.update_span(model.fg.item_embed.row(id), grads.item_embed.row(id),
                         adam.item_embed, static_cast<std::size_t>(id) * model.fg.item_embed.cols,
                         group_lr(config, "item_embed"), scale);
      ++batch_idx;
    }
    result.loss_curve.push_back(epoch_loss / static_cast<double>(records.size()));
  }
  return result;
}

inline constexpr std::uint32_t kModelVersionBundle = 2;

void save_model(const Model& model, const std::string& path) {
  ByteWriter payload;
  put_matrix(payload, model.mapping.u);
  put_matrix(payload, model.mapping.v_dis);
  put_matrix(payload, model.mapping.p_trans);
  payload.put_u32(model.mapping.head_norm ? 1 : 0);
  MatF gain(1, model.mapping.head_gain.size());
  std::copy(model.mapping.head_gain.begin(), model.mapping.head_gain.end(),
            gain.data.begin());
  put_matrix(payload, gain);
  payload.put_u32(static_cast<std::uint32_t>(model.fg.objective_tags.size()));
  for (const auto& tag : model.fg.objective_tags) {
    payload.put_u64(tag.size());
    payload.put_bytes(tag.data(), tag.size());
  }
  put_matrix(payload, model.fg.objective_embed);
  put_matrix(payload, model.fg.item_embed);
  payload.put_u32(static_cast<std::uint32_t>(model.fg.query_heads.size()));
  for (const auto& h : model.fg.query_heads) put_matrix(payload, h);
  write_checked_file(path, "URMM", kModelVersionBundle, payload.buf);
}

Model load_model(const std::string& path) {
  auto [version, payload] = read_checked_file(path, "URMM");
  if (version != kModelVersionBundle)
    throw std::runtime_error(path + ": expected URMM version 2 bundle, got " +
                             std::to_string(version));
  ByteReader r({reinterpret_cast<const unsigned char*>(payload.data()),
                payload.size()});
  Model model;
  model.mapping.u = get_matrix(r);
  model.mapping.v_dis = get_matrix(r);
  model.mapping.p_trans = get_matrix(r);
  model.mapping.head_norm = r.get_u32() != 0;
  const MatF gain = get_matrix(r);
  model.mapping.head_gain.assign(gain.data.begin(), gain.data.end());
  const std::uint32_t n_tags = r.get_u32();
  for (std::uint32_t i = 0; i < n_tags; ++i) {
    const std::uint64_t len = r.get_u64();
    r.need(len);
    model.fg.objective_tags.emplace_back(
        reinterpret_cast<const char*>(r.bytes.data() + r.pos), len);
    r.pos += len;
  }
  model.fg.objective_embed = get_matrix(r);
  model.fg.item_embed = get_matrix(r);
  const std::uint32_t m = r.get_u32();
  for (std::uint32_t j = 0; j < m; ++j) model.fg.query_heads.push_back(get_matrix(r));
  if (r.remaining() != 0)
    throw std::runtime_error(path + ": trailing bytes after model sections");
  return model;
}

}  // namespace mqr
