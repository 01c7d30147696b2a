// Copyright (c) 2026, The carte-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#include "carte/transfer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "carte/metrics.hpp"
#include "carte/parallel.hpp"

namespace carte {

std::vector<double> adapt_source_targets(std::span<const double> y_source, Task source_task, Task target_task,
                                         const std::optional<PowerTransform>& target_transform) {
  if (y_source.empty()) throw std::invalid_argument("source table has no outcomes");
  const auto [mn, mx] = std::minmax_element(y_source.begin(), y_source.end());
  if (*mn == *mx) throw std::invalid_argument("source outcomes are constant");
  std::vector<double> out(y_source.begin(), y_source.end());

  if (source_task == Task::regression && target_task == Task::regression) {
    if (!target_transform) throw std::invalid_argument("regression target needs a fitted transform");
    const PowerTransform src = fit_power_transform(y_source);
    for (auto& y : out) y = target_transform->inverse(src.apply(y));
  } else if (source_task == Task::regression && target_task == Task::classification) {
    std::vector<double> sorted = out;
    std::sort(sorted.begin(), sorted.end());
    const std::size_t n = sorted.size();
    const double median = n % 2 ? sorted[n / 2] : 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);
    for (auto& y : out) y = y > median ? 1.0 : 0.0;
  } else if (source_task == Task::classification && target_task == Task::regression) {
    const double n = static_cast<double>(out.size());
    const double mean = std::accumulate(out.begin(), out.end(), 0.0) / n;
    double var = 0.0;
    for (double y : out) var += (y - mean) * (y - mean);
    const double sd = std::sqrt(var / n);
    for (auto& y : out) y = (y - mean) / sd;
  }
  return out;
}

std::vector<double> adapt_source_targets(std::span<const double> y_source, Task source_task, Task target_task,
                                         std::span<const double> target_train_targets) {
  std::optional<PowerTransform> t;
  if (target_task == Task::regression) t = fit_power_transform(target_train_targets);
  return adapt_source_targets(y_source, source_task, target_task, t);
}

Estimator fit_pairwise(const Dataset& target, Task target_task, const Dataset& source, Task source_task,
                       const ModelParams& pretrained, const ModelConfig& config, const StringEmbedder& embedder,
                       const PairwiseConfig& pairwise, FitReport* report) {
  const BaggingConfig& bagging = pairwise.bagging;
  bagging.validate();
  config.validate();
  if (pairwise.target_quota == 0 || pairwise.target_quota >= bagging.batch_size) {
    throw std::invalid_argument("target quota must be in [1, batch size)");
  }
  if (!pairwise.learning_rates.empty() && pairwise.learning_rates.size() != bagging.members) {
    throw std::invalid_argument("one learning rate per member is required");
  }
  if (embedder.dim() != config.dim || pretrained.encoder.node_proj.weight.rows() != config.dim) {
    throw ShapeError("source/target embedding dimension " + std::to_string(embedder.dim()) +
                     " does not match the pretrained dimension " +
                     std::to_string(pretrained.encoder.node_proj.weight.rows()));
  }
  if (target.rows.size() < 2 * bagging.members) {
    throw std::invalid_argument("target table has " + std::to_string(target.rows.size()) + " rows, need at least " +
                                std::to_string(2 * bagging.members));
  }

  Estimator est;
  est.task = target_task;
  est.config = config;
  est.config.dropout = bagging.dropout;
  est.prep = TablePreprocessor::fit(target, target_task);
  const auto target_graphs = est.prep.graphlets(target.rows, embedder);
  const auto target_y = est.prep.encode_targets(target.targets);

  // source rows: own transforms, outcomes mapped into the target's training space
  const TablePreprocessor source_prep = TablePreprocessor::fit(source, source_task);
  const auto source_graphs = source_prep.graphlets(source.rows, embedder);
  std::vector<double> source_y = adapt_source_targets(source.targets, source_task, target_task, est.prep.target);
  if (source_task == Task::regression && target_task == Task::regression) source_y = est.prep.encode_targets(source_y);
  TrainSet source_set;
  for (std::size_t i = 0; i < source_graphs.size(); ++i) {
    source_set.graphlets.push_back(&source_graphs[i]);
    source_set.targets.push_back(source_y[i]);
  }

  est.members.resize(bagging.members);
  std::vector<std::vector<EpochRecord>> logs(bagging.members);
  const std::span<const double> labels =
      target_task == Task::classification ? std::span<const double>(target.targets) : std::span<const double>();
  parallel_for(bagging.members, resolve_threads(bagging.threads), [&](std::size_t m) {
    const std::uint64_t split_seed = derive_seed(bagging.seed, "split", m);
    Rng split_rng(split_seed);
    const Split split = split_rows(target.rows.size(), bagging.val_fraction, split_rng, labels);
    TrainSet tr, va;
    for (std::size_t i : split.train) {
      tr.graphlets.push_back(&target_graphs[i]);
      tr.targets.push_back(target_y[i]);
    }
    std::vector<double> raw_val;
    for (std::size_t i : split.val) {
      va.graphlets.push_back(&target_graphs[i]);
      va.targets.push_back(target_y[i]);
      raw_val.push_back(target.targets[i]);
    }
    const auto init = build_downstream_model(pretrained, config, derive_seed(bagging.seed, "head", m));
    const std::vector<double> grid =
        pairwise.learning_rates.empty() ? bagging.lr_grid : std::vector<double>{pairwise.learning_rates[m]};

    std::optional<MemberTrainResult> best;
    double best_lr = grid.front();
    for (double lr : grid) {
      MemberTrainOptions o;
      o.learning_rate = lr;
      o.max_epochs = bagging.max_epochs;
      o.patience = bagging.patience;
      o.batch_size = bagging.batch_size;
      o.dropout = bagging.dropout;
      o.weight_decay = bagging.weight_decay;
      o.seed = derive_seed(bagging.seed, "pairwise-train", m);
      o.member = m;
      o.source = &source_set;
      o.target_quota = pairwise.target_quota;
      auto res = train_member(init, est.config, target_task, tr, va, o);
      if (!best || res.best_val_loss < best->best_val_loss) {
        best = std::move(res);
        best_lr = lr;
      }
    }
    Member& mem = est.members[m];
    mem.split_seed = split_seed;
    mem.learning_rate = best_lr;
    mem.best_epoch = best->best_epoch;
    mem.val_loss = best->best_val_loss;
    mem.model = std::move(best->best);
    auto scores = model_scores(mem.model, est.config, va.graphlets);
    for (auto& s : scores) s = est.prep.decode(s);
    try {
      mem.val_score = task_score(target_task, raw_val, scores);
    } catch (const std::invalid_argument&) {
      mem.val_score = -std::numeric_limits<double>::infinity();
    }
    logs[m] = std::move(best->log);
  });
  if (report) {
    for (auto& l : logs) report->log.insert(report->log.end(), l.begin(), l.end());
  }
  return est;
}

std::vector<double> ensemble_weights(std::span<const double> scores) {
  if (scores.empty()) throw std::invalid_argument("cannot ensemble zero learners");
  std::vector<double> finite;
  for (double s : scores) {
    if (std::isnan(s) || s == std::numeric_limits<double>::infinity()) {
      throw std::invalid_argument("learner scores must be finite or -inf");
    }
    if (std::isfinite(s)) finite.push_back(s);
  }
  if (finite.empty()) throw std::invalid_argument("no learner has a finite validation score");
  const double n = static_cast<double>(finite.size());
  const double mean = std::accumulate(finite.begin(), finite.end(), 0.0) / n;
  double var = 0.0;
  for (double s : finite) var += (s - mean) * (s - mean);
  const double sd = std::sqrt(var / n);
  const double top = *std::max_element(finite.begin(), finite.end());

  std::vector<double> w(scores.size(), 0.0);
  double total = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (!std::isfinite(scores[i])) continue;
    w[i] = sd > 0.0 ? std::exp((scores[i] - top) / sd) : 1.0;
    total += w[i];
  }
  for (auto& x : w) x /= total;
  return w;
}

EnsemblePredictor ensemble(std::vector<Estimator> learners, std::vector<double> scores, std::vector<std::string> names) {
  if (learners.empty()) throw std::invalid_argument("cannot ensemble zero learners");
  if (scores.size() != learners.size()) throw std::invalid_argument("one validation score per learner is required");
  EnsemblePredictor e;
  e.weights = ensemble_weights(scores);
  e.learners = std::move(learners);
  e.scores = std::move(scores);
  if (names.empty()) {
    for (std::size_t i = 0; i < e.learners.size(); ++i) names.push_back("learner" + std::to_string(i));
  }
  e.names = std::move(names);
  return e;
}

std::vector<double> EnsemblePredictor::predict(std::span<const Row> rows, const StringEmbedder& embedder) const {
  std::vector<double> out(rows.size(), 0.0);
  for (std::size_t k = 0; k < learners.size(); ++k) {
    if (weights[k] == 0.0) continue;
    const auto p = carte::predict(learners[k], rows, embedder);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += weights[k] * p.mean[i];
  }
  return out;
}

std::vector<double> EnsemblePredictor::predict(const Dataset& table, const StringEmbedder& embedder) const {
  std::vector<double> out(table.rows.size(), 0.0);
  for (std::size_t k = 0; k < learners.size(); ++k) {
    if (weights[k] == 0.0) continue;
    const auto p = carte::predict(learners[k], table, embedder);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += weights[k] * p.mean[i];
  }
  return out;
}

EnsemblePredictor fit_multi(const Dataset& target, Task task, std::span<const SourceTable> sources,
                            const ModelParams& pretrained, const ModelConfig& config, const StringEmbedder& embedder,
                            const PairwiseConfig& config_pairwise, MultiReport* report) {
  std::vector<Estimator> learners;
  std::vector<double> scores;
  std::vector<std::string> names;
  MultiReport local;
  MultiReport& rep = report ? *report : local;

  learners.push_back(fit_single(target, task, pretrained, config, embedder, config_pairwise.bagging, &rep.single));
  scores.push_back(learners.back().validation_score());
  names.emplace_back("single");
  ++rep.learners_trained;

  PairwiseConfig pc = config_pairwise;
  pc.learning_rates.clear();
  for (const auto& m : learners.front().members) pc.learning_rates.push_back(m.learning_rate);
  for (const auto& src : sources) {
    ++rep.learners_trained;
    try {
      learners.push_back(fit_pairwise(target, task, src.data, src.task, pretrained, config, embedder, pc));
      scores.push_back(learners.back().validation_score());
      names.push_back("pairwise:" + src.name);
    } catch (const std::exception& e) {
      rep.warnings.push_back("pairwise learner for source '" + src.name + "' failed and was excluded: " + e.what());
    }
  }
  return ensemble(std::move(learners), std::move(scores), std::move(names));
}

}  // namespace carte
