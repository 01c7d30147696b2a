// Copyright (c) 2026, The carte-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>
#include <ostream>
#include <span>
#include <vector>

#include "carte/autodiff.hpp"
#include "carte/graphlet.hpp"
#include "carte/model.hpp"
#include "carte/optim.hpp"

namespace carte {

struct SamplerConfig {
  std::size_t batch_entities = 32;  // half the batch; each entity adds a positive
  double rich_fraction = 0.9;
  std::size_t rich_threshold = 6;   // 1-hop relations
  KgGraphletOptions graphlet;

  void validate() const;
};

struct TrainConfig {
  std::size_t steps = 1000;
  std::size_t warmup = 100;
  double lr_min = 5e-6;
  double lr_max = 1e-4;
  double weight_decay = 0.01;
  double temperature = 0.1;
  double dropout = 0.1;
  std::uint64_t seed = 0;

  void validate() const;
  LrSchedule schedule() const { return {steps, warmup, lr_min, lr_max}; }
};

/// Entities split by 1-hop degree.
struct EntityPools {
  std::vector<std::size_t> rich;
  std::vector<std::size_t> poor;

  static EntityPools build(const KnowledgeGraph& kg, std::size_t rich_threshold);
};

struct SampledPair {
  std::size_t entity;
  bool rich;
  Graphlet anchor;
  Graphlet positive;
};

/// Entity draw for one batch. The rich count is rich_fraction * n with the
/// fractional part resolved by a Bernoulli draw; entities are distinct within
/// a batch while the pool allows it. An empty pool hands its share to the other.
std::vector<std::size_t> sample_entities(const EntityPools& pools, const SamplerConfig& config, Rng& rng,
                                         std::vector<bool>* rich_flags = nullptr);

std::vector<SampledPair> sample_batch(const KnowledgeGraph& kg, const KgFeaturizer& features, const EntityPools& pools,
                                      const SamplerConfig& config, Rng& rng);

/// Mean InfoNCE over all anchors; row i's positive is row pair[i] and every
/// other row except i is a negative.
ad::Var info_nce(ad::Var embeddings, std::span<const std::size_t> pair, double temperature);
double info_nce(const Tensor& embeddings, std::span<const std::size_t> pair, double temperature);

/// pair index for [anchors; positives] stacking of m entities.
std::vector<std::size_t> stacked_pairs(std::size_t m);

struct LossRecord {
  std::size_t step;
  double lr;
  double loss;
};

struct PretrainResult {
  ModelParams params;
  ModelConfig config;
  std::vector<LossRecord> history;
};

struct PretrainHooks {
  std::ostream* loss_log = nullptr;  // CSV step,lr,loss
  std::function<void(const LossRecord&)> on_step;
};

/// Contrastive pretraining from a fresh initialization. config.dropout is
/// replaced by train.dropout. Throws std::runtime_error naming the step if the
/// loss diverges.
PretrainResult pretrain(const KnowledgeGraph& kg, const KgFeaturizer& features, const ModelConfig& config,
                        const SamplerConfig& sampler, const TrainConfig& train, const PretrainHooks& hooks = {});

/// Continues training given parameters (used by pretrain).
void pretrain_steps(ModelParams& params, const ModelConfig& config, const KnowledgeGraph& kg,
                    const KgFeaturizer& features, const SamplerConfig& sampler, const TrainConfig& train,
                    std::vector<LossRecord>& history, const PretrainHooks& hooks);

struct ContrastiveStats {
  double loss = 0.0;
  double positive_cosine = 0.0;  // mean cos(anchor, its positive)
  double negative_cosine = 0.0;  // mean cos(anchor, other anchors)
  double gap() const { return positive_cosine - negative_cosine; }
};

/// Evaluation-mode loss and cosine statistics of the projected outputs on
/// pre-drawn batches.
ContrastiveStats evaluate_contrastive(const ModelParams& params, const ModelConfig& config,
                                      std::span<const std::vector<SampledPair>> batches, double temperature);

}  // namespace carte
