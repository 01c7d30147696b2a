// Copyright (c) 2026, The carte-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "carte/data_io.hpp"
#include "carte/embeddings.hpp"
#include "carte/graphlet.hpp"
#include "carte/model.hpp"
#include "carte/power_transform.hpp"

namespace carte {

/// {2.5, 5, 7.5} x {1e-4, 1e-3}.
std::vector<double> default_lr_grid();

struct BaggingConfig {
  std::size_t members = 8;
  double val_fraction = 0.1;
  std::size_t patience = 40;
  std::size_t max_epochs = 500;
  std::vector<double> lr_grid = default_lr_grid();
  std::size_t batch_size = 64;
  std::size_t cv_folds = 5;
  std::size_t cv_min_rows = 160;  // below this, each member picks its rate on its own split
  double dropout = 0.1;
  double weight_decay = 0.01;
  std::uint64_t seed = 0;
  std::size_t threads = 0;  // 0: CARTE_THREADS or hardware concurrency

  void validate() const;
};

/// Fine-tuning network: pretrained projections and readout (the single
/// attention layer) plus a fresh prediction head.
struct DownstreamModel {
  EncoderParams encoder;
  HeadParams head;

  std::size_t attention_layers() const { return encoder.layers.size() + 1; }
};

template <class P, class F>
  requires SameBase<P, DownstreamModel>
void visit_params(P& p, const std::string& prefix, F&& f) {
  visit_params(p.encoder, prefix, f);
  visit_params(p.head, prefix, f);
}

DownstreamModel build_downstream_model(const ModelParams& pretrained, const ModelConfig& config,
                                       std::uint64_t head_seed);

/// Column and target transforms fitted on training rows.
struct TablePreprocessor {
  TableSchema schema;
  Task task = Task::regression;
  std::vector<std::optional<PowerTransform>> numeric;  // per column; empty for string columns
  std::optional<PowerTransform> target;                // regression only

  static TablePreprocessor fit(const Dataset& train, Task task);

  std::vector<Graphlet> graphlets(std::span<const Row> rows, const StringEmbedder& embedder) const;
  /// Targets in the space the head is trained on.
  std::vector<double> encode_targets(std::span<const double> y) const;
  /// Head score -> prediction (inverse target transform, or probability).
  double decode(double score) const;
};

struct EpochRecord {
  std::size_t member;
  std::size_t epoch;
  double train_loss;
  double val_loss;
};

/// Graphlets with training-space targets.
struct TrainSet {
  std::vector<const Graphlet*> graphlets;
  std::vector<double> targets;

  std::size_t size() const noexcept { return graphlets.size(); }
};

struct MemberTrainOptions {
  double learning_rate = 1e-3;
  std::size_t max_epochs = 500;
  std::size_t patience = 40;
  std::size_t batch_size = 64;
  double dropout = 0.1;
  double weight_decay = 0.01;
  std::uint64_t seed = 0;
  std::size_t member = 0;  // log label
  // Joint training: each batch holds min(target_quota, |train|) target rows,
  // the rest of the batch comes from `source`.
  const TrainSet* source = nullptr;
  std::size_t target_quota = 8;
  // Called with (target rows, source rows) of every training batch.
  std::function<void(std::size_t, std::size_t)> on_batch;
};

struct MemberTrainResult {
  DownstreamModel best;
  std::size_t best_epoch = 0;
  double best_val_loss = 0.0;
  std::vector<EpochRecord> log;
};

/// Trains with early stopping on `val` loss and returns the best-epoch weights.
MemberTrainResult train_member(const DownstreamModel& init, const ModelConfig& config, Task task,
                               const TrainSet& train, const TrainSet& val, const MemberTrainOptions& options);

/// Training-space head scores for graphlets in evaluation mode.
std::vector<double> model_scores(const DownstreamModel& model, const ModelConfig& config,
                                 std::span<const Graphlet* const> graphlets);
double training_loss(Task task, std::span<const double> scores, std::span<const double> targets);

/// Train/validation split; stratified by label for classification.
struct Split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> val;
};
Split split_rows(std::size_t n, double val_fraction, Rng& rng, std::span<const double> labels = {});

struct Member {
  DownstreamModel model;
  std::uint64_t split_seed = 0;
  double learning_rate = 0.0;
  std::size_t best_epoch = 0;
  double val_loss = 0.0;
  double val_score = 0.0;
};

struct Estimator {
  Task task = Task::regression;
  ModelConfig config;
  TablePreprocessor prep;
  std::vector<Member> members;
  EmbeddingRef embedding;

  /// Mean member score (R^2 or AUROC) on the members' validation splits.
  double validation_score() const;
};

struct FitReport {
  std::vector<EpochRecord> log;
  std::vector<std::pair<double, double>> lr_scores;  // (rate, mean CV loss) when CV ran
};

/// Bagged single-table fit. Transforms are fitted on `train` only.
Estimator fit_single(const Dataset& train, Task task, const ModelParams& pretrained, const ModelConfig& config,
                     const StringEmbedder& embedder, const BaggingConfig& bagging, FitReport* report = nullptr);

struct Prediction {
  std::vector<double> mean;
  std::vector<double> variance;  // across members
};

Prediction predict(const Estimator& estimator, std::span<const Row> rows, const StringEmbedder& embedder);
/// Matches columns by name; a missing or differently typed column is an error
/// naming it.
Prediction predict(const Estimator& estimator, const Dataset& table, const StringEmbedder& embedder);

void write_training_log(std::ostream& out, std::span<const EpochRecord> log);

}  // namespace carte
