// Copyright (c) 2026, The carte-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <span>
#include <string>
#include <vector>

#include "carte/finetune.hpp"

namespace carte {

/// Maps source-table outcomes onto the target's outcome:
///  - regression -> regression: Yeo-Johnson on y_S, then the inverse of the
///    target's fitted transform, giving values on the target's raw scale;
///  - regression -> classification: 1 above the source median, else 0;
///  - classification -> regression: {0, 1} standard-scaled;
///  - classification -> classification: unchanged.
/// Throws std::invalid_argument for constant source outcomes.
std::vector<double> adapt_source_targets(std::span<const double> y_source, Task source_task, Task target_task,
                                         const std::optional<PowerTransform>& target_transform);
/// Same, fitting the target transform from the target's training outcomes.
std::vector<double> adapt_source_targets(std::span<const double> y_source, Task source_task, Task target_task,
                                         std::span<const double> target_train_targets);

struct PairwiseConfig {
  BaggingConfig bagging;
  std::size_t target_quota = 8;
  /// Rate per member, normally taken from the single-table fit. Empty: each
  /// member searches the grid on its own target validation split.
  std::vector<double> learning_rates;
};

/// Joint fine-tuning on target and source rows. The source is featurized with
/// its own schema; early stopping and scoring use target validation rows only,
/// with the same split seeds as fit_single.
Estimator fit_pairwise(const Dataset& target, Task target_task, const Dataset& source, Task source_task,
                       const ModelParams& pretrained, const ModelConfig& config, const StringEmbedder& embedder,
                       const PairwiseConfig& pairwise, FitReport* report = nullptr);

/// softmax(s / sd(s)) over the finite scores (population standard deviation);
/// uniform when sd is 0; -inf scores get weight 0. Throws on an empty list or
/// when no score is finite.
std::vector<double> ensemble_weights(std::span<const double> scores);

struct EnsemblePredictor {
  std::vector<std::string> names;
  std::vector<Estimator> learners;
  std::vector<double> scores;
  std::vector<double> weights;

  std::size_t size() const noexcept { return learners.size(); }
  std::vector<double> predict(std::span<const Row> rows, const StringEmbedder& embedder) const;
  std::vector<double> predict(const Dataset& table, const StringEmbedder& embedder) const;
};

EnsemblePredictor ensemble(std::vector<Estimator> learners, std::vector<double> scores,
                           std::vector<std::string> names = {});

struct SourceTable {
  std::string name;
  Dataset data;
  Task task = Task::regression;
};

struct MultiReport {
  std::size_t learners_trained = 0;
  std::vector<std::string> warnings;
  FitReport single;
};

/// Single-table learner plus one pairwise learner per source, ensembled by
/// target validation score. A failing pairwise learner is dropped with a warning.
EnsemblePredictor fit_multi(const Dataset& target, Task task, std::span<const SourceTable> sources,
                            const ModelParams& pretrained, const ModelConfig& config, const StringEmbedder& embedder,
                            const PairwiseConfig& config_pairwise, MultiReport* report = nullptr);

}  // namespace carte
