// Copyright (c) 2026, The carte-cpp Authors
// SPDX-License-Identifier: Apache-2.0

// carte: pretraining, fine-tuning, transfer and evaluation from the shell.
//
// Exit codes: 0 success, 1 runtime failure, 2 usage or input-file error.
// Every command writes <run-dir>/config.resolved; `carte --config FILE`
// repeats the recorded run.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "carte/checkpoint.hpp"
#include "carte/data_io.hpp"
#include "carte/finetune.hpp"
#include "carte/gradcheck_suite.hpp"
#include "carte/metrics.hpp"
#include "carte/pretrain.hpp"
#include "carte/transfer.hpp"

namespace fs = std::filesystem;
using namespace carte;

namespace {

// Bad flags or unusable input files; maps to exit code 2.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

constexpr std::string_view kResolvedHeader = "# carte ";

struct Common {
  std::uint64_t seed = 0;
  std::size_t threads = 0;
  std::string run_dir;
};

void add_common(CLI::App* cmd, Common& c, bool threads) {
  cmd->add_option("--seed", c.seed, "Root seed; every random stream derives from it");
  if (threads) cmd->add_option("--threads", c.threads, "Parallel bagging members (0: CARTE_THREADS or all cores)");
  cmd->add_option("--run-dir", c.run_dir, "Where config.resolved is written (default: the output's directory)");
}

fs::path run_dir_for(const Common& c, const std::string& out) {
  if (!c.run_dir.empty()) return c.run_dir;
  if (out.empty()) return fs::current_path();
  const fs::path parent = fs::path(out).parent_path();
  return parent.empty() ? fs::current_path() : parent;
}

void write_resolved(const CLI::App& app, const std::string& command, const fs::path& dir) {
  fs::create_directories(dir);
  std::ofstream out(dir / "config.resolved");
  if (!out) throw UsageError("cannot write " + (dir / "config.resolved").string());
  out << kResolvedHeader << command << "\n";
  // Keep the settings of the command that ran (CLI11 lists every subcommand).
  // Empty values are unset options whose default is "nothing"; writing them
  // back would not parse.
  std::istringstream all(app.config_to_str(true, false));
  const std::string prefix = command + ".";
  for (std::string line; std::getline(all, line);) {
    if (!line.starts_with(prefix) || line.ends_with("=\"\"") || line.ends_with("=\"{}\"")) continue;
    out << line << "\n";
  }
}

std::string default_vectors() { return CARTE_DEFAULT_VECTORS; }

// Loads the table an EmbeddingRef points to; an empty path is the bundled table.
StringEmbedder open_embedder(EmbeddingRef& ref) {
  const std::string path = ref.path.empty() ? default_vectors() : ref.path;
  if (!fs::exists(path)) throw UsageError("vector file not found: " + path);
  auto table = std::make_shared<const EmbeddingTable>(load_vectors(path, ref.oov_seed));
  if (ref.dim != 0 && ref.dim != table->dim()) {
    throw UsageError("vector file " + path + " has dimension " + std::to_string(table->dim()) + ", expected " +
                     std::to_string(ref.dim));
  }
  ref.dim = table->dim();
  return StringEmbedder(std::move(table));
}

std::string absolute_or_empty(const std::string& path) {
  return path.empty() ? path : fs::absolute(path).lexically_normal().string();
}

template <class F>
void as_usage_error(F&& f) {
  try {
    f();
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
}

Task task_flag(const std::string& name) {
  try {
    return parse_task(name);
  } catch (const std::exception&) {
    throw UsageError("unknown task '" + name + "' (use regression or classification)");
  }
}

Dataset load_training_table(const std::string& path, const std::string& target, Task task) {
  try {
    return load_table(path, target, task);
  } catch (const ParseError& e) {
    throw UsageError(path + ": " + e.what());
  } catch (const std::invalid_argument& e) {
    throw UsageError(path + ": " + e.what());
  }
}

// ---------------------------------------------------------------- pretrain

struct PretrainArgs {
  Common common;
  std::string triplets, out, vectors, loss_log;
  std::size_t dim = 0, layers = 2, heads = 4;
  std::size_t steps = 500, warmup = 50, batch = 32, rich_threshold = 6, cap1 = 100, cap2 = 10;
  double lr_max = 1e-3, lr_min = 1e-5, temperature = 0.1, dropout = 0.1, weight_decay = 0.01, rich_fraction = 0.9;
  bool published_scale = false;
};

void setup_pretrain(CLI::App& app, PretrainArgs& a) {
  auto* cmd = app.add_subcommand("pretrain", "Contrastive pretraining on a triplet file");
  cmd->add_option("--triplets", a.triplets, "Knowledge graph, one head<TAB>relation<TAB>tail per line")
      ->required()
      ->check(CLI::ExistingFile);
  cmd->add_option("--out", a.out, "Checkpoint to write")->required();
  cmd->add_option("--vectors", a.vectors, "Word vector file (default: bundled table)")->check(CLI::ExistingFile);
  cmd->add_option("--dim", a.dim, "Model dimension; must equal the vector dimension (0: take it from the file)");
  cmd->add_option("--layers", a.layers, "Attention layers before the readout");
  cmd->add_option("--heads", a.heads, "Attention heads");
  cmd->add_option("--steps", a.steps, "Optimizer steps");
  cmd->add_option("--warmup", a.warmup, "Linear warmup steps");
  cmd->add_option("--lr-max", a.lr_max, "Peak learning rate");
  cmd->add_option("--lr-min", a.lr_min, "Final learning rate");
  cmd->add_option("--temperature", a.temperature, "InfoNCE temperature");
  cmd->add_option("--dropout", a.dropout, "Dropout rate");
  cmd->add_option("--weight-decay", a.weight_decay, "AdamW weight decay");
  cmd->add_option("--batch", a.batch, "Entities per batch (each adds a positive)");
  cmd->add_option("--rich-fraction", a.rich_fraction, "Share of entities drawn from the rich pool");
  cmd->add_option("--rich-threshold", a.rich_threshold, "Relations needed to count as rich");
  cmd->add_option("--cap1", a.cap1, "1-hop relation cap");
  cmd->add_option("--cap2", a.cap2, "2-hop relations per 1-hop node");
  cmd->add_option("--loss-log", a.loss_log, "Loss CSV (default: <out>.loss.csv)");
  cmd->add_flag("--published-scale", a.published_scale,
                "Use the published model and schedule constants (12 layers, 12 heads, lr 1e-4 -> 5e-6, 1000 steps)");
  add_common(cmd, a.common, false);
}

int run_pretrain(const CLI::App& app, PretrainArgs a) {
  write_resolved(app, "pretrain", run_dir_for(a.common, a.out));
  if (a.published_scale) {
    a.layers = 12;
    a.heads = 12;
    a.lr_max = 1e-4;
    a.lr_min = 5e-6;
    a.steps = 1000;
    a.warmup = 100;
  }
  EmbeddingRef ref{absolute_or_empty(a.vectors), a.dim, kDefaultOovSeed};
  const StringEmbedder embedder = open_embedder(ref);

  ModelConfig config;
  config.dim = ref.dim;
  config.n_layers = a.layers;
  config.n_heads = a.heads;
  config.dropout = a.dropout;
  TrainConfig train;
  train.steps = a.steps;
  train.warmup = a.warmup;
  train.lr_max = a.lr_max;
  train.lr_min = a.lr_min;
  train.temperature = a.temperature;
  train.dropout = a.dropout;
  train.weight_decay = a.weight_decay;
  train.seed = a.common.seed;
  SamplerConfig sampler;
  sampler.batch_entities = a.batch;
  sampler.rich_fraction = a.rich_fraction;
  sampler.rich_threshold = a.rich_threshold;
  sampler.graphlet.cap1 = a.cap1;
  sampler.graphlet.cap2 = a.cap2;
  as_usage_error([&] {
    config.validate();
    train.validate();
    sampler.validate();
  });

  std::vector<Triplet> triplets;
  try {
    triplets = load_triplets(a.triplets);
  } catch (const ParseError& e) {
    throw UsageError(a.triplets + ": " + e.what());
  }
  const KnowledgeGraph kg = KnowledgeGraph::from_triplets(triplets);
  if (kg.entities().empty()) throw UsageError(a.triplets + " holds no triplets");
  const KgFeaturizer features(kg, embedder);

  const std::string log_path = a.loss_log.empty() ? a.out + ".loss.csv" : a.loss_log;
  std::ofstream log(log_path);
  if (!log) throw UsageError("cannot write " + log_path);
  PretrainHooks hooks;
  hooks.loss_log = &log;
  const std::size_t every = std::max<std::size_t>(1, a.steps / 10);
  hooks.on_step = [&](const LossRecord& r) {
    if (r.step % every == 0 || r.step + 1 == a.steps) {
      std::cerr << "step " << r.step << " lr " << r.lr << " loss " << r.loss << "\n";
    }
  };
  const PretrainResult result = pretrain(kg, features, config, sampler, train, hooks);
  save_model({result.config, result.params, ref, train, sampler}, a.out);
  std::cout << "entities " << kg.entities().size() << ", relations " << kg.num_relations() << ", final loss "
            << result.history.back().loss << "\nwrote " << a.out << "\n";
  return 0;
}

// ---------------------------------------------------------------- fine-tuning flags

struct BaggingArgs {
  std::size_t members = 8, epochs = 500, patience = 40, batch = 64, cv_folds = 5;
  double val_fraction = 0.1, dropout = 0.1, weight_decay = 0.01;
  std::vector<double> lr;
  bool no_edge_features = false, no_attention = false;
  std::string vectors, training_log;
};

void add_bagging(CLI::App* cmd, BaggingArgs& b) {
  cmd->add_option("--members", b.members, "Bagging members");
  cmd->add_option("--epochs", b.epochs, "Maximum epochs per member");
  cmd->add_option("--patience", b.patience, "Early-stopping patience in epochs");
  cmd->add_option("--batch", b.batch, "Mini-batch size");
  cmd->add_option("--cv-folds", b.cv_folds, "Folds for the learning-rate search");
  cmd->add_option("--val-fraction", b.val_fraction, "Validation share of each member's split");
  cmd->add_option("--dropout", b.dropout, "Dropout rate");
  cmd->add_option("--weight-decay", b.weight_decay, "AdamW weight decay");
  cmd->add_option("--lr", b.lr, "Learning-rate grid (repeatable; default 2.5e-4 ... 7.5e-3)");
  cmd->add_flag("--no-edge-features", b.no_edge_features, "Ablation: ignore column-name edge features");
  cmd->add_flag("--no-attention", b.no_attention, "Ablation: uniform weights over incoming arcs");
  cmd->add_option("--vectors", b.vectors, "Word vector file (default: the one recorded in the model)")
      ->check(CLI::ExistingFile);
  cmd->add_option("--training-log", b.training_log, "Per-epoch CSV (default: <out>.train.csv)");
}

BaggingConfig bagging_from(const BaggingArgs& b, const Common& c) {
  BaggingConfig cfg;
  cfg.members = b.members;
  cfg.max_epochs = b.epochs;
  cfg.patience = b.patience;
  cfg.batch_size = b.batch;
  cfg.cv_folds = b.cv_folds;
  cfg.val_fraction = b.val_fraction;
  cfg.dropout = b.dropout;
  cfg.weight_decay = b.weight_decay;
  if (!b.lr.empty()) cfg.lr_grid = b.lr;
  cfg.seed = c.seed;
  cfg.threads = c.threads;
  as_usage_error([&] { cfg.validate(); });
  return cfg;
}

ModelCheckpoint load_pretrained(const std::string& path) {
  try {
    return load_model(path);
  } catch (const CheckpointError& e) {
    throw UsageError(path + ": " + e.what());
  }
}

void write_log(const std::string& path, const std::vector<EpochRecord>& log) {
  std::ofstream out(path);
  if (!out) throw UsageError("cannot write " + path);
  write_training_log(out, log);
}

// ---------------------------------------------------------------- finetune

struct FinetuneArgs {
  Common common;
  BaggingArgs bagging;
  std::string table, target, model, task, out;
};

void setup_finetune(CLI::App& app, FinetuneArgs& a) {
  auto* cmd = app.add_subcommand("finetune", "Bagged fine-tuning on one table");
  cmd->add_option("--table", a.table, "Training CSV")->required()->check(CLI::ExistingFile);
  cmd->add_option("--target", a.target, "Outcome column")->required();
  cmd->add_option("--model", a.model, "Pretrained checkpoint")->required()->check(CLI::ExistingFile);
  cmd->add_option("--task", a.task, "regression or classification")->required();
  cmd->add_option("--out", a.out, "Estimator checkpoint to write")->required();
  add_bagging(cmd, a.bagging);
  add_common(cmd, a.common, true);
}

int run_finetune(const CLI::App& app, const FinetuneArgs& a) {
  write_resolved(app, "finetune", run_dir_for(a.common, a.out));
  const Task task = task_flag(a.task);
  ModelCheckpoint pre = load_pretrained(a.model);
  EmbeddingRef ref = pre.embedding;
  if (!a.bagging.vectors.empty()) ref.path = absolute_or_empty(a.bagging.vectors);
  const StringEmbedder embedder = open_embedder(ref);
  const BaggingConfig bagging = bagging_from(a.bagging, a.common);
  ModelConfig config = pre.config;
  config.no_edge_features = a.bagging.no_edge_features;
  config.no_attention = a.bagging.no_attention;
  const Dataset data = load_training_table(a.table, a.target, task);
  if (data.rows.size() < 2 * bagging.members) {
    throw UsageError(a.table + " has " + std::to_string(data.rows.size()) + " usable rows; " +
                     std::to_string(bagging.members) + " members need at least " +
                     std::to_string(2 * bagging.members));
  }

  FitReport report;
  Estimator est = fit_single(data, task, pre.params, config, embedder, bagging, &report);
  est.embedding = ref;
  save_estimator(est, a.out);
  write_log(a.bagging.training_log.empty() ? a.out + ".train.csv" : a.bagging.training_log, report.log);
  std::cout << "rows " << data.rows.size() << ", columns " << data.schema.columns.size() << ", validation "
            << (task == Task::regression ? "r2 " : "auroc ") << est.validation_score() << "\nwrote " << a.out
            << "\n";
  return 0;
}

// ---------------------------------------------------------------- predict

struct PredictArgs {
  Common common;
  std::string estimator, table, out, vectors;
};

void setup_predict(CLI::App& app, PredictArgs& a) {
  auto* cmd = app.add_subcommand("predict", "Predict with an estimator or ensemble checkpoint");
  cmd->add_option("--estimator", a.estimator, "Estimator or ensemble checkpoint")->required()->check(CLI::ExistingFile);
  cmd->add_option("--table", a.table, "CSV with the training columns")->required()->check(CLI::ExistingFile);
  cmd->add_option("--out", a.out, "Prediction CSV (row_index,prediction)")->required();
  cmd->add_option("--vectors", a.vectors, "Word vector file (default: the one recorded in the checkpoint)")
      ->check(CLI::ExistingFile);
  add_common(cmd, a.common, false);
}

int run_predict(const CLI::App& app, const PredictArgs& a) {
  write_resolved(app, "predict", run_dir_for(a.common, a.out));
  const std::string bytes = read_file_bytes(a.estimator);
  RawTable raw;
  try {
    raw = read_csv(a.table);
  } catch (const ParseError& e) {
    throw UsageError(a.table + ": " + e.what());
  }

  std::vector<double> pred;
  try {
    const std::string kind = checkpoint_kind(bytes);
    auto run = [&](const Estimator& schema_source, auto&& predict_rows) {
      EmbeddingRef ref = schema_source.embedding;
      if (!a.vectors.empty()) ref.path = absolute_or_empty(a.vectors);
      const StringEmbedder embedder = open_embedder(ref);
      std::vector<Row> rows;
      try {
        rows = conform_rows(raw, schema_source.prep.schema);
      } catch (const std::invalid_argument& e) {
        throw UsageError(a.table + ": " + e.what());
      }
      pred = predict_rows(rows, embedder);
    };
    if (kind == "estimator") {
      const Estimator est = decode_estimator(bytes);
      run(est, [&](const std::vector<Row>& rows, const StringEmbedder& emb) { return predict(est, rows, emb).mean; });
    } else if (kind == "ensemble") {
      const EnsemblePredictor ens = decode_ensemble(bytes);
      run(ens.learners.front(),
          [&](const std::vector<Row>& rows, const StringEmbedder& emb) { return ens.predict(rows, emb); });
    } else {
      throw UsageError(a.estimator + " holds a " + kind + ", not an estimator or ensemble");
    }
  } catch (const CheckpointError& e) {
    throw UsageError(a.estimator + ": " + e.what());
  }

  RawTable out;
  out.header = {"row_index", "prediction"};
  for (std::size_t i = 0; i < pred.size(); ++i) {
    std::ostringstream v;
    v.precision(17);
    v << pred[i];
    out.rows.push_back({std::to_string(i), v.str()});
  }
  write_csv(out, a.out);
  std::cout << "wrote " << pred.size() << " predictions to " << a.out << "\n";
  return 0;
}

// ---------------------------------------------------------------- transfer

struct TransferArgs {
  Common common;
  BaggingArgs bagging;
  std::string target_table, target_col, model, task, out;
  std::vector<std::string> sources;
  std::size_t target_quota = 8;
};

void setup_transfer(CLI::App& app, TransferArgs& a) {
  auto* cmd = app.add_subcommand("transfer", "Single-table plus pairwise learners, softmax-ensembled");
  cmd->add_option("--target-table", a.target_table, "Target training CSV")->required()->check(CLI::ExistingFile);
  cmd->add_option("--target-col", a.target_col, "Target outcome column")->required();
  cmd->add_option("--source", a.sources, "Source table as path:column[:task] (repeatable)");
  cmd->add_option("--model", a.model, "Pretrained checkpoint")->required()->check(CLI::ExistingFile);
  cmd->add_option("--task", a.task, "Target task: regression or classification")->required();
  cmd->add_option("--out", a.out, "Ensemble checkpoint to write")->required();
  cmd->add_option("--target-quota", a.target_quota, "Target rows in every joint batch");
  add_bagging(cmd, a.bagging);
  add_common(cmd, a.common, true);
}

struct SourceSpec {
  std::string path, column;
  std::optional<Task> task;
};

// path:column or path:column:task, split from the right so paths may hold ':'.
SourceSpec parse_source(const std::string& spec) {
  SourceSpec s;
  std::string rest = spec;
  auto cut = [&]() -> std::string {
    const auto pos = rest.rfind(':');
    if (pos == std::string::npos || pos == 0 || pos + 1 == rest.size()) {
      throw UsageError("--source must be path:column[:task], got '" + spec + "'");
    }
    std::string tail = rest.substr(pos + 1);
    rest.resize(pos);
    return tail;
  };
  std::string last = cut();
  if (last == "regression" || last == "classification") {
    s.task = parse_task(last);
    last = cut();
  }
  s.column = last;
  s.path = rest;
  if (!fs::exists(s.path)) throw UsageError("source table not found: " + s.path);
  return s;
}

int run_transfer(const CLI::App& app, const TransferArgs& a) {
  write_resolved(app, "transfer", run_dir_for(a.common, a.out));
  const Task task = task_flag(a.task);
  ModelCheckpoint pre = load_pretrained(a.model);
  EmbeddingRef ref = pre.embedding;
  if (!a.bagging.vectors.empty()) ref.path = absolute_or_empty(a.bagging.vectors);
  const StringEmbedder embedder = open_embedder(ref);
  PairwiseConfig pc;
  pc.bagging = bagging_from(a.bagging, a.common);
  pc.target_quota = a.target_quota;
  if (pc.target_quota == 0 || pc.target_quota >= pc.bagging.batch_size) {
    throw UsageError("--target-quota must be in [1, --batch)");
  }
  ModelConfig config = pre.config;
  config.no_edge_features = a.bagging.no_edge_features;
  config.no_attention = a.bagging.no_attention;

  const Dataset target = load_training_table(a.target_table, a.target_col, task);
  std::vector<SourceTable> sources;
  for (const auto& spec : a.sources) {
    const SourceSpec s = parse_source(spec);
    const Task t = s.task.value_or(task);
    sources.push_back({fs::path(s.path).stem().string(), load_training_table(s.path, s.column, t), t});
  }

  MultiReport report;
  EnsemblePredictor ens = fit_multi(target, task, sources, pre.params, config, embedder, pc, &report);
  for (auto& l : ens.learners) l.embedding = ref;
  for (const auto& w : report.warnings) std::cerr << "warning: " << w << "\n";
  save_ensemble(ens, a.out);
  write_log(a.bagging.training_log.empty() ? a.out + ".train.csv" : a.bagging.training_log, report.single.log);
  std::cout << "learner,validation_score,weight\n";
  for (std::size_t k = 0; k < ens.size(); ++k) {
    std::cout << ens.names[k] << "," << ens.scores[k] << "," << ens.weights[k] << "\n";
  }
  std::cout << "wrote " << a.out << "\n";
  return 0;
}

// ---------------------------------------------------------------- eval

struct EvalArgs {
  Common common;
  std::string pred, truth, truth_col, metric;
};

void setup_eval(CLI::App& app, EvalArgs& a) {
  auto* cmd = app.add_subcommand("eval", "Score a prediction CSV against the true outcomes");
  cmd->add_option("--pred", a.pred, "Prediction CSV from `carte predict`")->required()->check(CLI::ExistingFile);
  cmd->add_option("--truth", a.truth, "CSV holding the true outcomes")->required()->check(CLI::ExistingFile);
  cmd->add_option("--truth-col", a.truth_col, "Outcome column (optional when the file has one column)");
  cmd->add_option("--metric", a.metric, "r2, auroc, mse or logloss")
      ->required()
      ->check(CLI::IsMember({"r2", "auroc", "mse", "logloss"}));
  add_common(cmd, a.common, false);
}

std::vector<double> column_values(const RawTable& t, const std::string& path, const std::string& name,
                                  bool allow_labels) {
  const auto it = std::find(t.header.begin(), t.header.end(), name);
  if (it == t.header.end()) throw UsageError(path + ": column '" + name + "' not found");
  const auto col = static_cast<std::size_t>(it - t.header.begin());
  std::vector<std::string> cells;
  for (const auto& row : t.rows) cells.push_back(col < row.size() ? row[col] : "");
  std::vector<double> out;
  bool numeric = true;
  for (const auto& c : cells) {
    double v;
    if (!parse_number(c, v)) {
      numeric = false;
      break;
    }
    out.push_back(v);
  }
  if (numeric) return out;
  const std::set<std::string> labels(cells.begin(), cells.end());
  if (!allow_labels || labels.size() != 2 || labels.count("")) {
    throw UsageError(path + ": column '" + name + "' is not numeric");
  }
  out.clear();
  for (const auto& c : cells) out.push_back(c == *labels.begin() ? 0.0 : 1.0);
  return out;
}

int run_eval(const CLI::App& app, const EvalArgs& a) {
  write_resolved(app, "eval", run_dir_for(a.common, ""));
  RawTable pred_raw, truth_raw;
  try {
    pred_raw = read_csv(a.pred);
    truth_raw = read_csv(a.truth);
  } catch (const ParseError& e) {
    throw UsageError(e.what());
  }
  std::string truth_col = a.truth_col;
  if (truth_col.empty()) {
    if (truth_raw.header.size() != 1) throw UsageError(a.truth + " has several columns; pass --truth-col");
    truth_col = truth_raw.header.front();
  }
  const auto y = column_values(truth_raw, a.truth, truth_col, true);
  const auto p = column_values(pred_raw, a.pred, "prediction", false);
  if (y.size() != p.size()) {
    throw UsageError("prediction count " + std::to_string(p.size()) + " differs from truth count " +
                     std::to_string(y.size()));
  }
  double value = 0.0;
  as_usage_error([&] {
    if (a.metric == "r2") value = r2_score(y, p);
    if (a.metric == "auroc") value = auroc(y, p);
    if (a.metric == "mse") value = mean_squared_error(y, p);
    if (a.metric == "logloss") value = log_loss(y, p);
  });
  std::cout << "metric,value,rows\n" << a.metric << "," << value << "," << y.size() << "\n";
  return 0;
}

// ---------------------------------------------------------------- gradcheck

struct GradcheckArgs {
  Common common;
  double step = 1e-5, tolerance = 1e-4;
};

void setup_gradcheck(CLI::App& app, GradcheckArgs& a) {
  auto* cmd = app.add_subcommand("gradcheck", "Finite-difference check of every differentiable op and layer");
  cmd->add_option("--step", a.step, "Central-difference step");
  cmd->add_option("--tolerance", a.tolerance, "Maximum relative error");
  add_common(cmd, a.common, false);
}

int run_gradcheck(const CLI::App& app, const GradcheckArgs& a) {
  write_resolved(app, "gradcheck", run_dir_for(a.common, ""));
  GradCheckSuiteOptions o;
  o.step = a.step;
  o.tolerance = a.tolerance;
  o.seed = a.common.seed;
  const auto r = run_gradcheck_suite(o);
  for (const auto& c : r.cases) {
    std::cout << (c.report.passed ? "ok   " : "FAIL ") << c.name << " max_rel_err=" << c.report.max_relative_error
              << "\n";
    if (!c.report.passed) std::cout << c.report.summary() << "\n";
  }
  std::cout << (r.passed ? "PASS" : "FAIL") << " " << r.cases.size() << " cases, max_rel_err=" << r.max_relative_error
            << ", " << r.seconds << " s\n";
  return r.passed ? 0 : 1;
}

// `carte --config FILE` alone: take the command from the file's header line.
std::vector<std::string> expand_config_only(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  if (args.size() == 2 && args[0] == "--config") {
    std::ifstream in(args[1]);
    std::string first;
    if (in && std::getline(in, first) && first.starts_with(kResolvedHeader)) {
      args.push_back(first.substr(kResolvedHeader.size()));
    }
  }
  std::reverse(args.begin(), args.end());  // CLI11 parses a reversed vector
  return args;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"carte: graph-attention pretraining and fine-tuning for tables"};
  app.option_defaults()->always_capture_default();
  app.set_config("--config", "", "Replay a config.resolved file");
  app.require_subcommand(1);

  PretrainArgs pretrain_args;
  FinetuneArgs finetune_args;
  PredictArgs predict_args;
  TransferArgs transfer_args;
  EvalArgs eval_args;
  GradcheckArgs gradcheck_args;
  setup_pretrain(app, pretrain_args);
  setup_finetune(app, finetune_args);
  setup_predict(app, predict_args);
  setup_transfer(app, transfer_args);
  setup_eval(app, eval_args);
  setup_gradcheck(app, gradcheck_args);

  try {
    auto args = expand_config_only(argc, argv);
    app.parse(args);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (app.got_subcommand("pretrain")) return run_pretrain(app, pretrain_args);
    if (app.got_subcommand("finetune")) return run_finetune(app, finetune_args);
    if (app.got_subcommand("predict")) return run_predict(app, predict_args);
    if (app.got_subcommand("transfer")) return run_transfer(app, transfer_args);
    if (app.got_subcommand("eval")) return run_eval(app, eval_args);
    if (app.got_subcommand("gradcheck")) return run_gradcheck(app, gradcheck_args);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
