// Copyright (c) 2026, The carte-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#include "carte/finetune.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "carte/metrics.hpp"
#include "carte/optim.hpp"
#include "carte/parallel.hpp"

namespace carte {

std::vector<double> default_lr_grid() { return {2.5e-4, 5e-4, 7.5e-4, 2.5e-3, 5e-3, 7.5e-3}; }

void BaggingConfig::validate() const {
  if (members == 0) throw std::invalid_argument("bagging needs at least one member");
  if (!(val_fraction > 0.0 && val_fraction < 0.5)) throw std::invalid_argument("validation fraction must be in (0, 0.5)");
  if (max_epochs == 0 || patience == 0 || batch_size == 0) {
    throw std::invalid_argument("epochs, patience and batch size must be positive");
  }
  if (lr_grid.empty()) throw std::invalid_argument("learning-rate grid is empty");
  for (double lr : lr_grid) {
    if (!(lr > 0.0)) throw std::invalid_argument("learning rates must be positive");
  }
  if (cv_folds < 2) throw std::invalid_argument("cross-validation needs at least two folds");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw std::invalid_argument("dropout must be in [0, 1)");
}

DownstreamModel build_downstream_model(const ModelParams& pretrained, const ModelConfig& config,
                                       std::uint64_t head_seed) {
  const std::size_t d = pretrained.encoder.node_proj.weight.rows();
  if (d != config.dim || pretrained.encoder.readout.w_query.rows() != d) {
    throw ShapeError("pretrained model has dimension " + std::to_string(d) + ", configuration says " +
                     std::to_string(config.dim));
  }
  DownstreamModel m;
  m.encoder.node_proj = pretrained.encoder.node_proj;
  m.encoder.edge_proj = pretrained.encoder.edge_proj;
  m.encoder.readout = pretrained.encoder.readout;
  Rng rng(derive_seed(head_seed, "head"));
  m.head = init_head(d, rng);
  return m;
}

TablePreprocessor TablePreprocessor::fit(const Dataset& train, Task task) {
  if (train.rows.empty()) throw std::invalid_argument("cannot fit on an empty table");
  if (train.targets.size() != train.rows.size()) throw std::invalid_argument("table has no target values");
  TablePreprocessor p;
  p.schema = train.schema;
  p.task = task;
  p.numeric.resize(train.schema.columns.size());
  for (std::size_t c = 0; c < train.schema.columns.size(); ++c) {
    if (train.schema.columns[c].kind != ColumnKind::numeric) continue;
    const auto values = train.column_values(c);
    const auto [mn, mx] = std::minmax_element(values.begin(), values.end());
    if (values.size() >= 2 && *mn != *mx) p.numeric[c] = fit_power_transform(values);
  }
  const auto [mn, mx] = std::minmax_element(train.targets.begin(), train.targets.end());
  if (*mn == *mx) throw std::invalid_argument("target column '" + train.schema.target + "' is constant");
  if (task == Task::regression) {
    p.target = fit_power_transform(train.targets);
  } else {
    for (double y : train.targets) {
      if (y != 0.0 && y != 1.0) throw std::invalid_argument("classification targets must be 0 or 1");
    }
  }
  return p;
}

std::vector<Graphlet> TablePreprocessor::graphlets(std::span<const Row> rows, const StringEmbedder& embedder) const {
  std::vector<Graphlet> out;
  out.reserve(rows.size());
  for (const auto& r : rows) out.push_back(row_to_graphlet(r, schema, embedder, numeric));
  return out;
}

std::vector<double> TablePreprocessor::encode_targets(std::span<const double> y) const {
  if (task == Task::classification) return std::vector<double>(y.begin(), y.end());
  return target->apply(y);
}

double TablePreprocessor::decode(double score) const {
  if (task == Task::classification) return 1.0 / (1.0 + std::exp(-score));
  return target->inverse(score);
}

std::vector<double> model_scores(const DownstreamModel& model, const ModelConfig& config,
                                 std::span<const Graphlet* const> graphlets) {
  std::vector<double> out;
  out.reserve(graphlets.size());
  constexpr std::size_t kChunk = 256;
  for (std::size_t start = 0; start < graphlets.size(); start += kChunk) {
    const std::size_t n = std::min(kChunk, graphlets.size() - start);
    const GraphBatch batch = GraphBatch::from_graphlets(graphlets.subspan(start, n));
    ad::Tape tape;
    ParamBinder bind(tape, false);
    const Tensor& s = head_scores(encode(batch, model.encoder, config, bind, false, nullptr), model.head, bind).value();
    out.insert(out.end(), s.values().begin(), s.values().end());
  }
  return out;
}

double training_loss(Task task, std::span<const double> scores, std::span<const double> targets) {
  if (task == Task::regression) return mean_squared_error(targets, scores);
  double s = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const double z = scores[i];
    s += std::max(z, 0.0) - z * targets[i] + std::log1p(std::exp(-std::abs(z)));
  }
  return s / static_cast<double>(scores.size());
}

MemberTrainResult train_member(const DownstreamModel& init, const ModelConfig& config, Task task,
                               const TrainSet& train, const TrainSet& val, const MemberTrainOptions& options) {
  if (train.size() == 0 || val.size() == 0) throw std::invalid_argument("training and validation sets must be non-empty");
  const bool joint = options.source != nullptr;
  if (joint && options.source->size() == 0) throw std::invalid_argument("source table is empty");
  ModelConfig cfg = config;
  cfg.dropout = options.dropout;

  MemberTrainResult result;
  DownstreamModel model = init;
  auto plist = param_list(model);
  AdamW opt(plist, AdamWConfig{0.9, 0.999, 1e-8, options.weight_decay});
  Rng order_rng(derive_seed(options.seed, "batch-order"));
  Rng dropout_rng(derive_seed(options.seed, "dropout"));

  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<std::size_t> source_order;
  std::size_t source_pos = 0;
  if (joint) {
    source_order.resize(options.source->size());
    std::iota(source_order.begin(), source_order.end(), 0);
    order_rng.shuffle(source_order);
  }
  const std::size_t per_batch =
      joint ? std::min(std::min(options.target_quota, options.batch_size), train.size()) : options.batch_size;
  const std::size_t source_per_batch = joint ? options.batch_size - per_batch : 0;

  result.best = model;
  result.best_val_loss = std::numeric_limits<double>::infinity();
  std::size_t since_best = 0;
  std::vector<const Graphlet*> batch_graphs;
  std::vector<double> batch_targets;

  for (std::size_t epoch = 1; epoch <= options.max_epochs; ++epoch) {
    order_rng.shuffle(order);
    double loss_sum = 0.0;
    std::size_t loss_rows = 0;
    for (std::size_t start = 0; start < order.size(); start += per_batch) {
      batch_graphs.clear();
      batch_targets.clear();
      const std::size_t end = std::min(order.size(), start + per_batch);
      for (std::size_t i = start; i < end; ++i) {
        batch_graphs.push_back(train.graphlets[order[i]]);
        batch_targets.push_back(train.targets[order[i]]);
      }
      for (std::size_t k = 0; k < source_per_batch; ++k) {
        if (source_pos == source_order.size()) {
          order_rng.shuffle(source_order);
          source_pos = 0;
        }
        const std::size_t s = source_order[source_pos++];
        batch_graphs.push_back(options.source->graphlets[s]);
        batch_targets.push_back(options.source->targets[s]);
      }
      if (options.on_batch) options.on_batch(end - start, source_per_batch);
      const GraphBatch gb = GraphBatch::from_graphlets(std::span<const Graphlet* const>(batch_graphs));
      Tensor target = Tensor::matrix(batch_targets.size(), 1);
      std::copy(batch_targets.begin(), batch_targets.end(), target.data());

      ad::Tape tape;
      ParamBinder bind(tape, true);
      ad::Var scores = head_scores(encode(gb, model.encoder, cfg, bind, true, &dropout_rng), model.head, bind);
      ad::Var loss = task == Task::regression ? ad::mse_loss(scores, target) : ad::bce_with_logits(scores, target);
      const auto grads = bind.gradients(loss, plist);
      opt.step(grads, options.learning_rate);
      loss_sum += loss.value().item() * static_cast<double>(batch_targets.size());
      loss_rows += batch_targets.size();
    }
    const auto val_scores = model_scores(model, cfg, val.graphlets);
    const double val_loss = training_loss(task, val_scores, val.targets);
    result.log.push_back({options.member, epoch, loss_sum / static_cast<double>(loss_rows), val_loss});
    if (!std::isfinite(val_loss)) break;
    if (val_loss < result.best_val_loss) {
      result.best_val_loss = val_loss;
      result.best_epoch = epoch;
      result.best = model;
      since_best = 0;
    } else if (++since_best >= options.patience) {
      break;
    }
  }
  return result;
}

Split split_rows(std::size_t n, double val_fraction, Rng& rng, std::span<const double> labels) {
  Split s;
  auto take = [&](std::vector<std::size_t> idx) {
    rng.shuffle(idx);
    std::size_t n_val = static_cast<std::size_t>(std::llround(val_fraction * static_cast<double>(idx.size())));
    if (idx.size() >= 2) n_val = std::clamp<std::size_t>(n_val, 1, idx.size() - 1);
    else n_val = 0;
    s.val.insert(s.val.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_val));
    s.train.insert(s.train.end(), idx.begin() + static_cast<std::ptrdiff_t>(n_val), idx.end());
  };
  if (labels.empty()) {
    std::vector<std::size_t> all(n);
    std::iota(all.begin(), all.end(), 0);
    take(std::move(all));
  } else {
    std::vector<std::size_t> neg, pos;
    for (std::size_t i = 0; i < n; ++i) (labels[i] > 0.5 ? pos : neg).push_back(i);
    take(std::move(neg));
    take(std::move(pos));
  }
  if (s.val.empty() || s.train.empty()) throw std::invalid_argument("too few rows for a train/validation split");
  std::sort(s.train.begin(), s.train.end());
  std::sort(s.val.begin(), s.val.end());
  return s;
}

double Estimator::validation_score() const {
  if (members.empty()) return -std::numeric_limits<double>::infinity();
  double s = 0.0;
  for (const auto& m : members) s += m.val_score;
  return s / static_cast<double>(members.size());
}

namespace {

TrainSet make_set(const std::vector<Graphlet>& graphs, const std::vector<double>& targets,
                  std::span<const std::size_t> index) {
  TrainSet s;
  for (std::size_t i : index) {
    s.graphlets.push_back(&graphs[i]);
    s.targets.push_back(targets[i]);
  }
  return s;
}

MemberTrainOptions member_options(const BaggingConfig& b, double lr, std::uint64_t seed, std::size_t member) {
  MemberTrainOptions o;
  o.learning_rate = lr;
  o.max_epochs = b.max_epochs;
  o.patience = b.patience;
  o.batch_size = b.batch_size;
  o.dropout = b.dropout;
  o.weight_decay = b.weight_decay;
  o.seed = seed;
  o.member = member;
  return o;
}

// k-fold CV over the learning-rate grid; returns (rate, mean best validation loss).
std::vector<std::pair<double, double>> cross_validate_lr(const std::vector<Graphlet>& graphs,
                                                         const std::vector<double>& targets, Task task,
                                                         const ModelParams& pretrained, const ModelConfig& config,
                                                         const BaggingConfig& b) {
  const std::size_t n = graphs.size();
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  Rng fold_rng(derive_seed(b.seed, "cv-folds"));
  fold_rng.shuffle(perm);
  const std::size_t k = b.cv_folds;
  std::vector<std::pair<double, double>> scores(b.lr_grid.size());
  const std::size_t jobs = b.lr_grid.size() * k;
  std::vector<double> losses(jobs);
  parallel_for(jobs, resolve_threads(b.threads), [&](std::size_t job) {
    const std::size_t g = job / k, fold = job % k;
    std::vector<std::size_t> tr, va;
    for (std::size_t i = 0; i < n; ++i) (i % k == fold ? va : tr).push_back(perm[i]);
    const TrainSet train = make_set(graphs, targets, tr);
    const TrainSet val = make_set(graphs, targets, va);
    const auto init = build_downstream_model(pretrained, config, derive_seed(b.seed, "cv-head", fold));
    const auto res = train_member(init, config, task, train, val,
                                  member_options(b, b.lr_grid[g], derive_seed(b.seed, "cv-train", fold), fold));
    losses[job] = res.best_val_loss;
  });
  for (std::size_t g = 0; g < b.lr_grid.size(); ++g) {
    double s = 0.0;
    for (std::size_t fold = 0; fold < k; ++fold) s += losses[g * k + fold];
    scores[g] = {b.lr_grid[g], s / static_cast<double>(k)};
  }
  return scores;
}

double member_score(const Estimator& est, const DownstreamModel& model, const TrainSet& val,
                    std::span<const double> raw_targets) {
  const auto scores = model_scores(model, est.config, val.graphlets);
  std::vector<double> pred(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) pred[i] = est.prep.decode(scores[i]);
  try {
    return task_score(est.task, raw_targets, pred);
  } catch (const std::invalid_argument&) {
    return -std::numeric_limits<double>::infinity();
  }
}

}  // namespace

Estimator fit_single(const Dataset& train, Task task, const ModelParams& pretrained, const ModelConfig& config,
                     const StringEmbedder& embedder, const BaggingConfig& bagging, FitReport* report) {
  bagging.validate();
  config.validate();
  if (train.rows.size() < 2 * bagging.members) {
    throw std::invalid_argument("table has " + std::to_string(train.rows.size()) + " rows, need at least " +
                                std::to_string(2 * bagging.members) + " for " + std::to_string(bagging.members) +
                                " members");
  }
  if (embedder.dim() != config.dim) {
    throw ShapeError("embedding dimension " + std::to_string(embedder.dim()) + " differs from model dimension " +
                     std::to_string(config.dim));
  }
  Estimator est;
  est.task = task;
  est.config = config;
  est.config.dropout = bagging.dropout;
  est.prep = TablePreprocessor::fit(train, task);
  const auto graphs = est.prep.graphlets(train.rows, embedder);
  const auto targets = est.prep.encode_targets(train.targets);

  std::optional<double> shared_lr;
  if (train.rows.size() >= bagging.cv_min_rows && bagging.lr_grid.size() > 1) {
    const auto cv = cross_validate_lr(graphs, targets, task, pretrained, config, bagging);
    shared_lr = std::min_element(cv.begin(), cv.end(), [](auto& a, auto& b) { return a.second < b.second; })->first;
    if (report) report->lr_scores = cv;
  } else if (bagging.lr_grid.size() == 1) {
    shared_lr = bagging.lr_grid.front();
  }

  est.members.resize(bagging.members);
  std::vector<std::vector<EpochRecord>> logs(bagging.members);
  const std::span<const double> labels =
      task == Task::classification ? std::span<const double>(train.targets) : std::span<const double>();
  parallel_for(bagging.members, resolve_threads(bagging.threads), [&](std::size_t m) {
    const std::uint64_t split_seed = derive_seed(bagging.seed, "split", m);
    Rng split_rng(split_seed);
    const Split split = split_rows(train.rows.size(), bagging.val_fraction, split_rng, labels);
    const TrainSet tr = make_set(graphs, targets, split.train);
    const TrainSet va = make_set(graphs, targets, split.val);
    std::vector<double> raw_val;
    for (std::size_t i : split.val) raw_val.push_back(train.targets[i]);
    const auto init = build_downstream_model(pretrained, config, derive_seed(bagging.seed, "head", m));
    const std::uint64_t train_seed = derive_seed(bagging.seed, "train", m);

    std::vector<double> grid = shared_lr ? std::vector<double>{*shared_lr} : bagging.lr_grid;
    std::optional<MemberTrainResult> best;
    double best_lr = grid.front();
    for (double lr : grid) {
      auto res = train_member(init, est.config, task, tr, va, member_options(bagging, lr, train_seed, m));
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
    mem.val_score = member_score(est, mem.model, va, raw_val);
    logs[m] = std::move(best->log);
  });
  if (report) {
    for (auto& l : logs) report->log.insert(report->log.end(), l.begin(), l.end());
  }
  return est;
}

Prediction predict(const Estimator& estimator, std::span<const Row> rows, const StringEmbedder& embedder) {
  if (estimator.members.empty()) throw std::invalid_argument("estimator has no members");
  const auto graphs = estimator.prep.graphlets(rows, embedder);
  std::vector<const Graphlet*> ptrs;
  for (const auto& g : graphs) ptrs.push_back(&g);
  Prediction p;
  p.mean.assign(rows.size(), 0.0);
  p.variance.assign(rows.size(), 0.0);
  std::vector<std::vector<double>> per_member;
  for (const auto& m : estimator.members) {
    auto scores = model_scores(m.model, estimator.config, ptrs);
    for (auto& s : scores) s = estimator.prep.decode(s);
    per_member.push_back(std::move(scores));
  }
  const double k = static_cast<double>(per_member.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    double mean = 0.0;
    for (const auto& v : per_member) mean += v[i];
    mean /= k;
    double var = 0.0;
    for (const auto& v : per_member) var += (v[i] - mean) * (v[i] - mean);
    p.mean[i] = mean;
    p.variance[i] = var / k;
  }
  return p;
}

Prediction predict(const Estimator& estimator, const Dataset& table, const StringEmbedder& embedder) {
  const auto& want = estimator.prep.schema.columns;
  std::vector<std::size_t> source;
  for (const auto& col : want) {
    const auto idx = table.schema.index_of(col.name);
    if (!idx) throw std::invalid_argument("column '" + col.name + "' is missing from the table");
    if (table.schema.columns[*idx].kind != col.kind) {
      throw std::invalid_argument("column '" + col.name + "' has a different type than at training time");
    }
    source.push_back(*idx);
  }
  std::vector<Row> rows;
  rows.reserve(table.rows.size());
  for (const auto& r : table.rows) {
    Row row;
    row.reserve(source.size());
    for (std::size_t s : source) row.push_back(r[s]);
    rows.push_back(std::move(row));
  }
  return predict(estimator, rows, embedder);
}

void write_training_log(std::ostream& out, std::span<const EpochRecord> log) {
  out << "member,epoch,train_loss,val_loss\n";
  for (const auto& r : log) out << r.member << ',' << r.epoch << ',' << r.train_loss << ',' << r.val_loss << '\n';
}

}  // namespace carte
