// Copyright (c) 2026, The carte-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#include "carte/pretrain.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace carte {

void SamplerConfig::validate() const {
  if (batch_entities == 0) throw std::invalid_argument("sampler needs at least one entity per batch");
  if (!(rich_fraction >= 0.0 && rich_fraction <= 1.0)) throw std::invalid_argument("rich fraction must be in [0, 1]");
  if (graphlet.hops == 0 || graphlet.cap1 == 0) throw std::invalid_argument("graphlet hops and cap1 must be positive");
}

void TrainConfig::validate() const {
  if (steps == 0) throw std::invalid_argument("training needs at least one step");
  if (warmup >= steps) throw std::invalid_argument("warmup steps must be fewer than total steps");
  if (!(lr_min >= 0.0 && lr_min < lr_max)) throw std::invalid_argument("need 0 <= lr_min < lr_max");
  if (!(temperature > 0.0)) throw std::invalid_argument("temperature must be positive");
  if (!(weight_decay >= 0.0)) throw std::invalid_argument("weight decay must be non-negative");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw std::invalid_argument("dropout must be in [0, 1)");
}

EntityPools EntityPools::build(const KnowledgeGraph& kg, std::size_t rich_threshold) {
  EntityPools pools;
  for (std::size_t e : kg.entities()) (kg.degree(e) >= rich_threshold ? pools.rich : pools.poor).push_back(e);
  return pools;
}

namespace {

void draw_from(const std::vector<std::size_t>& pool, std::size_t k, Rng& rng, std::vector<std::size_t>& out) {
  if (k <= pool.size()) {
    for (std::size_t i : rng.sample_without_replacement(pool.size(), k)) out.push_back(pool[i]);
  } else {
    for (std::size_t i = 0; i < k; ++i) out.push_back(pool[rng.index(pool.size())]);
  }
}

}  // namespace

std::vector<std::size_t> sample_entities(const EntityPools& pools, const SamplerConfig& config, Rng& rng,
                                         std::vector<bool>* rich_flags) {
  if (pools.rich.empty() && pools.poor.empty()) throw std::invalid_argument("knowledge graph has no entities");
  const std::size_t n = config.batch_entities;
  const double target = config.rich_fraction * static_cast<double>(n);
  std::size_t n_rich = static_cast<std::size_t>(std::floor(target));
  if (rng.uniform() < target - static_cast<double>(n_rich)) ++n_rich;
  if (pools.poor.empty()) n_rich = n;
  if (pools.rich.empty()) n_rich = 0;

  std::vector<std::size_t> out;
  out.reserve(n);
  draw_from(pools.rich, n_rich, rng, out);
  draw_from(pools.poor, n - n_rich, rng, out);
  if (rich_flags) {
    rich_flags->assign(n, false);
    for (std::size_t i = 0; i < n_rich; ++i) (*rich_flags)[i] = true;
  }
  return out;
}

std::vector<SampledPair> sample_batch(const KnowledgeGraph& kg, const KgFeaturizer& features, const EntityPools& pools,
                                      const SamplerConfig& config, Rng& rng) {
  if (kg.empty()) throw std::invalid_argument("cannot sample from an empty knowledge graph");
  std::vector<bool> rich;
  const auto entities = sample_entities(pools, config, rng, &rich);
  std::vector<SampledPair> batch;
  batch.reserve(entities.size());
  for (std::size_t i = 0; i < entities.size(); ++i) {
    Graphlet anchor = kg_graphlet(kg, features, entities[i], config.graphlet, rng);
    Graphlet positive = truncate(anchor, rng);
    batch.push_back({entities[i], rich[i], std::move(anchor), std::move(positive)});
  }
  return batch;
}

std::vector<std::size_t> stacked_pairs(std::size_t m) {
  std::vector<std::size_t> pair(2 * m);
  for (std::size_t i = 0; i < m; ++i) {
    pair[i] = i + m;
    pair[i + m] = i;
  }
  return pair;
}

ad::Var info_nce(ad::Var embeddings, std::span<const std::size_t> pair, double temperature) {
  if (!(temperature > 0.0)) throw std::invalid_argument("temperature must be positive");
  const std::size_t n = embeddings.value().rows();
  if (pair.size() != n) {
    throw std::invalid_argument("pair index has " + std::to_string(pair.size()) + " entries for " + std::to_string(n) +
                                " embeddings");
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (pair[i] >= n || pair[i] == i) throw std::invalid_argument("row " + std::to_string(i) + " has an invalid pair");
  }
  ad::Var sim = ad::cosine_similarity(embeddings, embeddings);
  return ad::softmax_cross_entropy(ad::scale(sim, 1.0 / temperature), pair, true);
}

double info_nce(const Tensor& embeddings, std::span<const std::size_t> pair, double temperature) {
  ad::Tape tape;
  return info_nce(tape.constant(embeddings), pair, temperature).value().item();
}

namespace {

GraphBatch stack_batch(const std::vector<SampledPair>& batch) {
  std::vector<const Graphlet*> graphlets;
  graphlets.reserve(2 * batch.size());
  for (const auto& p : batch) graphlets.push_back(&p.anchor);
  for (const auto& p : batch) graphlets.push_back(&p.positive);
  return GraphBatch::from_graphlets(std::span<const Graphlet* const>(graphlets));
}

}  // namespace

void pretrain_steps(ModelParams& params, const ModelConfig& config, const KnowledgeGraph& kg,
                    const KgFeaturizer& features, const SamplerConfig& sampler, const TrainConfig& train,
                    std::vector<LossRecord>& history, const PretrainHooks& hooks) {
  config.validate();
  sampler.validate();
  train.validate();
  const EntityPools pools = EntityPools::build(kg, sampler.rich_threshold);
  const LrSchedule schedule = train.schedule();
  auto plist = param_list(params);
  AdamW opt(plist, AdamWConfig{0.9, 0.999, 1e-8, train.weight_decay});
  if (hooks.loss_log) *hooks.loss_log << "step,lr,loss\n";

  for (std::size_t step = 0; step < train.steps; ++step) {
    Rng batch_rng(derive_seed(train.seed, "batch", step));
    Rng dropout_rng(derive_seed(train.seed, "dropout", step));
    const auto batch = sample_batch(kg, features, pools, sampler, batch_rng);
    const GraphBatch gb = stack_batch(batch);
    const auto pair = stacked_pairs(batch.size());

    ad::Tape tape;
    ParamBinder bind(tape, true);
    double loss_value = 0.0;
    std::vector<Tensor> grads;
    try {
      ad::Var z = encode(gb, params.encoder, config, bind, true, &dropout_rng);
      ad::Var loss = info_nce(project(z, params, bind), pair, train.temperature);
      loss_value = loss.value().item();
      grads = bind.gradients(loss, plist);
    } catch (const NonFiniteError& e) {
      throw std::runtime_error("pretraining diverged at step " + std::to_string(step) + ": " + e.what());
    }
    if (!std::isfinite(loss_value) || !std::isfinite(gradient_norm(grads))) {
      throw std::runtime_error("pretraining diverged at step " + std::to_string(step));
    }
    const double lr = schedule(step);
    opt.step(grads, lr);

    const LossRecord rec{step, lr, loss_value};
    history.push_back(rec);
    if (hooks.loss_log) *hooks.loss_log << rec.step << ',' << rec.lr << ',' << rec.loss << '\n';
    if (hooks.on_step) hooks.on_step(rec);
  }
}

PretrainResult pretrain(const KnowledgeGraph& kg, const KgFeaturizer& features, const ModelConfig& config,
                        const SamplerConfig& sampler, const TrainConfig& train, const PretrainHooks& hooks) {
  if (kg.empty()) throw std::invalid_argument("cannot pretrain on an empty knowledge graph");
  PretrainResult result;
  result.config = config;
  result.config.dropout = train.dropout;
  if (features.dim() != config.dim) {
    throw std::invalid_argument("embedding dimension " + std::to_string(features.dim()) +
                                " differs from model dimension " + std::to_string(config.dim));
  }
  result.params = init_model(result.config, derive_seed(train.seed, "model"));
  pretrain_steps(result.params, result.config, kg, features, sampler, train, result.history, hooks);
  return result;
}

ContrastiveStats evaluate_contrastive(const ModelParams& params, const ModelConfig& config,
                                      std::span<const std::vector<SampledPair>> batches, double temperature) {
  ContrastiveStats stats;
  double pos_n = 0.0, neg_n = 0.0;
  for (const auto& batch : batches) {
    const GraphBatch gb = stack_batch(batch);
    const auto pair = stacked_pairs(batch.size());
    ad::Tape tape;
    ParamBinder bind(tape, false);
    ad::Var out = project(encode(gb, params.encoder, config, bind, false, nullptr), params, bind);
    stats.loss += info_nce(out, pair, temperature).value().item();
    const Tensor sim = ad::cosine_similarity(out, out).value();
    const std::size_t m = batch.size();
    for (std::size_t i = 0; i < m; ++i) {
      stats.positive_cosine += sim(i, i + m);
      pos_n += 1.0;
      for (std::size_t k = 0; k < m; ++k) {
        if (k == i) continue;
        stats.negative_cosine += sim(i, k);
        neg_n += 1.0;
      }
    }
  }
  if (!batches.empty()) stats.loss /= static_cast<double>(batches.size());
  if (pos_n > 0) stats.positive_cosine /= pos_n;
  if (neg_n > 0) stats.negative_cosine /= neg_n;
  return stats;
}

}  // namespace carte
