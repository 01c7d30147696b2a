// Copyright (c) 2026, The carte-cpp Authors
// SPDX-License-Identifier: Apache-2.0

// Acceptance run: one PASS/FAIL line per criterion on stdout, progress on
// stderr. Exits 0 only when every criterion passes. Tolerances and workloads
// are fixed here; nothing is read from the environment.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <functional>
#include <iomanip>
#include <iostream>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "carte/checkpoint.hpp"
#include "carte/gradcheck_suite.hpp"
#include "carte/metrics.hpp"
#include "carte/optim.hpp"
#include "carte/power_transform.hpp"
#include "carte/pretrain.hpp"
#include "carte/synthetic.hpp"
#include "carte/transfer.hpp"
#include "support.hpp"

using namespace carte;

namespace {

// Tolerances.
constexpr double kGradTolerance = 1e-4;
constexpr double kGradStep = 1e-5;
constexpr double kGradCpuSeconds = 30;
constexpr double kWeightSumTolerance = 1e-9;
constexpr double kPermutationTolerance = 1e-9;
constexpr double kOracleTolerance = 1e-8;
constexpr double kRichShare = 0.9, kRichShareTolerance = 0.03;
constexpr double kLossRatio = 0.7, kCosineGap = 0.1, kPretrainCpuSeconds = 300;
constexpr double kScheduleTolerance = 1e-12;
constexpr double kLambdaTolerance = 0.1, kInverseTolerance = 1e-8;
constexpr double kSingleTableR2 = 0.8, kSingleTableCpuSeconds = 600;
constexpr int kTransferWinsNeeded = 7;
constexpr double kEnsembleSlack = 0.02;
constexpr double kEnsembleTolerance = 1e-12;

// Workloads.
constexpr int kSeeds = 10;
constexpr std::size_t kTrainRows = 512, kTestRows = 512;
constexpr std::size_t kTargetRows = 64, kSourceRows = 1024;

struct Outcome {
  bool pass = false;
  std::string detail;
};

double cpu_seconds() { return static_cast<double>(std::clock()) / CLOCKS_PER_SEC; }

std::string fmt(double v, int precision = 4) {
  std::ostringstream s;
  s << std::setprecision(precision) << v;
  return s.str();
}

void log(const std::string& msg) { std::cerr << "[acceptance] " << msg << std::endl; }

template <class P>
bool same_values(P a, P b) {
  const auto pa = param_list(a);
  const auto pb = param_list(b);
  if (pa.size() != pb.size()) return false;
  for (std::size_t i = 0; i < pa.size(); ++i) {
    if (pa[i]->rows() != pb[i]->rows() || pa[i]->cols() != pb[i]->cols()) return false;
    if (!std::equal(pa[i]->values().begin(), pa[i]->values().end(), pb[i]->values().begin())) return false;
  }
  return true;
}

// Random tree: node v > 0 hangs off a uniformly chosen earlier node.
Graphlet random_tree(std::size_t nodes, std::size_t dim, Rng& rng) {
  Graphlet g;
  g.nodes = Tensor::matrix(nodes, dim);
  g.edge_features = Tensor::matrix(nodes - 1, dim);
  for (auto& x : g.nodes.values()) x = rng.normal();
  for (auto& x : g.edge_features.values()) x = rng.normal();
  for (std::size_t v = 1; v < nodes; ++v) g.edges.push_back({rng.index(v), v});
  return g;
}

struct LayerRun {
  Tensor nodes;
  Tensor weights;
};

LayerRun run_layer(const Graphlet& g, const AttentionLayerParams& p, std::size_t heads) {
  ad::Tape tape;
  ParamBinder bind(tape, false);
  AttentionTrace trace;
  LayerOptions o;
  o.n_heads = heads;
  const ArcList arcs = arcs_for_edges(g.num_nodes(), g.edges);
  auto out = attention_layer(tape.constant(g.nodes), tape.constant(g.edge_features), arcs, p, bind, o, &trace);
  return {out.nodes.value(), trace.weights};
}

double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  double m = 0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

// State shared between criteria: the pretrained model feeds the downstream
// experiments, and the full-model scores feed the ablation comparison.
struct Shared {
  synthetic::World world = synthetic::make_world({});
  ModelConfig config;
  ModelParams pretrained;
  TrainConfig train;
  SamplerConfig sampler;
  bool have_pretrained = false;
  std::vector<double> full_r2;
  std::optional<Estimator> first_estimator;
};

// ---------------------------------------------------------------------------

Outcome gradient_integrity() {
  const double t0 = cpu_seconds();
  GradCheckSuiteOptions o;
  o.step = kGradStep;
  o.tolerance = kGradTolerance;
  const auto r = run_gradcheck_suite(o);
  const double cpu = cpu_seconds() - t0;
  bool has_layer = false;
  for (const auto& c : r.cases) has_layer |= c.name.find("attention_layer") != std::string::npos;
  std::string failed;
  for (const auto& c : r.cases)
    if (!c.report.passed) failed += " " + c.name;
  return {r.passed && has_layer && r.max_relative_error < kGradTolerance && cpu < kGradCpuSeconds,
          std::to_string(r.cases.size()) + " cases, max rel err " + fmt(r.max_relative_error) + ", " + fmt(cpu, 3) +
              " s CPU" + (failed.empty() ? "" : ", failed:" + failed) + (has_layer ? "" : ", no attention layer case")};
}

Outcome attention_contract() {
  Rng rng(20);
  const std::size_t d = 8, heads = 2;
  double worst_sum = 0, worst_far = 0;
  int far_nodes = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const Graphlet g = random_tree(3 + rng.index(10), d, rng);
    auto p = init_attention_layer(d, true, rng);
    testing::jitter(p, rng);
    const auto base = run_layer(g, p, heads);
    const ArcList arcs = arcs_for_edges(g.num_nodes(), g.edges);
    std::vector<std::vector<double>> total(g.num_nodes(), std::vector<double>(heads, 0.0));
    for (std::size_t a = 0; a < arcs.size(); ++a)
      for (std::size_t h = 0; h < heads; ++h) total[arcs.dst[a]][h] += base.weights(a, h);
    for (const auto& t : total)
      for (double s : t) worst_sum = std::max(worst_sum, std::abs(s - 1.0));

    // every node off the center's neighbourhood gets a large random shift
    Graphlet moved = g;
    std::vector<bool> adjacent(g.num_nodes(), false);
    adjacent[Graphlet::kCenter] = true;
    for (const auto& e : g.edges)
      if (e.parent == Graphlet::kCenter) adjacent[e.child] = true;
    for (std::size_t v = 0; v < g.num_nodes(); ++v) {
      if (adjacent[v]) continue;
      ++far_nodes;
      for (std::size_t k = 0; k < d; ++k) moved.nodes(v, k) += rng.normal(0, 5);
    }
    const auto after = run_layer(moved, p, heads);
    worst_far = std::max(worst_far, max_abs_diff(base.nodes.row_span(0), after.nodes.row_span(0)));
  }

  ModelConfig config;
  config.dim = d;
  config.n_heads = heads;
  config.n_layers = 2;
  config.dropout = 0.0;
  double worst_perm = 0;
  for (int trial = 0; trial < 100; ++trial) {
    auto enc = init_encoder(config, rng);
    testing::jitter(enc, rng);
    const std::size_t leaves = 2 + rng.index(10);
    const Graphlet g = testing::random_star(leaves, d, rng);
    std::vector<std::size_t> perm(leaves);
    std::iota(perm.begin(), perm.end(), 0);
    rng.shuffle(perm);
    Graphlet h = g;
    for (std::size_t i = 0; i < leaves; ++i) {
      for (std::size_t k = 0; k < d; ++k) {
        h.nodes(i + 1, k) = g.nodes(perm[i] + 1, k);
        h.edge_features(i, k) = g.edge_features(perm[i], k);
      }
    }
    worst_perm = std::max(worst_perm, max_abs_diff(encode_eval(g, enc, config), encode_eval(h, enc, config)));
  }
  return {worst_sum <= kWeightSumTolerance && worst_far == 0.0 && far_nodes > 0 && worst_perm < kPermutationTolerance,
          "max |sum-1| " + fmt(worst_sum) + ", center change from " + std::to_string(far_nodes) +
              " non-adjacent nodes " + fmt(worst_far) + ", permutation diff " + fmt(worst_perm)};
}

Outcome oracle_fidelity() {
  double worst = 0;
  int compared = 0;
  for (int variant = 0; variant < 3; ++variant) {
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
      Rng rng(derive_seed(seed, "fidelity", static_cast<std::uint64_t>(variant)));
      ModelConfig config;
      config.dim = 8;
      config.n_heads = 2;
      config.n_layers = 2;
      config.dropout = 0.0;
      config.no_edge_features = variant == 1;
      config.no_attention = variant == 2;
      auto enc = init_encoder(config, rng);
      testing::jitter(enc, rng);
      const Graphlet g = testing::random_star(2, 8, rng);
      const testing::OracleOptions o{2, config.no_edge_features, config.no_attention};
      worst = std::max(worst, max_abs_diff(testing::oracle_encode(g, enc, o), encode_eval(g, enc, config)));
      ++compared;
    }
  }
  return {worst < kOracleTolerance,
          std::to_string(compared) + " seeded 3-node stars (full and both ablations), max diff " + fmt(worst)};
}

Outcome graphlet_rules(Shared& s) {
  // 10 columns, one missing
  const auto table = testing::small_table();
  const StringEmbedder small(table);
  TableSchema schema;
  Row row;
  for (int c = 0; c < 10; ++c) {
    const bool numeric = c % 2 == 0;
    schema.columns.push_back({"col" + std::to_string(c), numeric ? ColumnKind::numeric : ColumnKind::string});
    if (numeric) {
      row.emplace_back(c + 0.5);
    } else {
      row.emplace_back(std::string("red"));
    }
  }
  row[3] = std::monostate{};
  const std::size_t leaves = row_to_graphlet(row, schema, small).num_leaves();

  // caps over 1,000 entities, some of them hubs
  synthetic::ToyKgOptions ko;
  ko.hub_share = 0.05;
  ko.seed = 4;
  const auto kg = KnowledgeGraph::from_triplets(synthetic::toy_kg(ko));
  const KgFeaturizer feats(kg, s.world.embedder());
  const KgGraphletOptions caps;
  Rng rng(4);
  std::size_t worst_center = 0, worst_branch = 0, sampled = 0, capped = 0;
  bool truncation_ok = true;
  std::size_t truncations = 0;
  double f_min = 1, f_max = 0;
  for (std::size_t e : kg.entities()) {
    const Graphlet g = kg_graphlet(kg, feats, e, caps, rng);
    ++sampled;
    std::vector<std::size_t> branch(g.num_nodes(), 0);
    std::size_t center = 0;
    for (const auto& edge : g.edges) {
      if (edge.parent == Graphlet::kCenter) {
        ++center;
      } else {
        ++branch[edge.parent];
      }
    }
    // the has-name edge is not a relation and does not count against the cap
    const std::size_t relations = center - 1;
    worst_center = std::max(worst_center, relations);
    worst_branch = std::max(worst_branch, *std::max_element(branch.begin(), branch.end()));
    if (kg.degree(e) > caps.cap1) ++capped;

    if (g.center_degree() >= 2) {
      Rng peek = rng;
      const double f = peek.uniform(0.3, 0.7);
      f_min = std::min(f_min, f);
      f_max = std::max(f_max, f);
      const Graphlet t = truncate(g, rng);
      const std::size_t c = g.center_degree();
      const auto removed = c - t.center_degree();
      truncation_ok &= removed == static_cast<std::size_t>(std::floor(f * static_cast<double>(c)));
      truncation_ok &= t.center_degree() >= 1;
      ++truncations;
    }
  }
  const bool pass = leaves == 9 && sampled >= 1000 && worst_center <= caps.cap1 && worst_branch <= caps.cap2 &&
                    capped > 0 && truncation_ok && f_min >= 0.3 && f_max <= 0.7;
  return {pass, "10-column row with one missing cell -> " + std::to_string(leaves) + " leaves; " +
                    std::to_string(sampled) + " entities (" + std::to_string(capped) +
                    " over the cap), max relations " + std::to_string(worst_center) + ", max per branch " +
                    std::to_string(worst_branch) + "; " + std::to_string(truncations) + " truncations " +
                    (truncation_ok ? "exact" : "WRONG") + ", f in [" + fmt(f_min, 3) + ", " + fmt(f_max, 3) + "]"};
}

Outcome sampler_statistics(Shared& s) {
  const auto kg = KnowledgeGraph::from_triplets(synthetic::toy_kg({}));
  SamplerConfig config;
  const auto pools = EntityPools::build(kg, config.rich_threshold);
  Rng rng(5);
  std::size_t rich = 0, total = 0;
  bool flags_ok = true;
  for (int b = 0; b < 1000; ++b) {
    std::vector<bool> flags;
    const auto ids = sample_entities(pools, config, rng, &flags);
    for (std::size_t i = 0; i < ids.size(); ++i) {
      rich += flags[i];
      flags_ok &= flags[i] == (kg.degree(ids[i]) >= config.rich_threshold);
    }
    total += ids.size();
  }
  (void)s;
  const double share = static_cast<double>(rich) / static_cast<double>(total);
  return {flags_ok && std::abs(share - kRichShare) <= kRichShareTolerance,
          "rich share " + fmt(share) + " over " + std::to_string(total) + " draws in 1000 batches" +
              (flags_ok ? "" : ", pool flags disagree with degree")};
}

Outcome contrastive_training(Shared& s) {
  const auto kg = KnowledgeGraph::from_triplets(synthetic::toy_kg({}));
  const KgFeaturizer feats(kg, s.world.embedder());
  s.config.dim = 32;
  s.config.n_layers = 2;
  s.config.n_heads = 4;
  s.train.steps = 500;
  s.train.warmup = 50;
  s.train.lr_max = 1e-3;
  s.train.lr_min = 1e-5;
  s.train.seed = 1;
  s.config.dropout = s.train.dropout;
  s.sampler.batch_entities = 32;  // plus one positive each: 64 graphlets

  const auto pools = EntityPools::build(kg, s.sampler.rich_threshold);
  std::vector<std::vector<SampledPair>> held_out;
  Rng eval_rng(derive_seed(99, "held-out"));
  for (int b = 0; b < 8; ++b) held_out.push_back(sample_batch(kg, feats, pools, s.sampler, eval_rng));

  const double t0 = cpu_seconds();
  ModelParams params = init_model(s.config, derive_seed(s.train.seed, "model"));
  const auto before = evaluate_contrastive(params, s.config, held_out, s.train.temperature);
  std::vector<LossRecord> history;
  pretrain_steps(params, s.config, kg, feats, s.sampler, s.train, history, {});
  const double cpu = cpu_seconds() - t0;
  const auto after = evaluate_contrastive(params, s.config, held_out, s.train.temperature);
  s.pretrained = params;
  s.have_pretrained = true;
  log("pretraining: held-out loss " + fmt(before.loss) + " -> " + fmt(after.loss) + " in " + fmt(cpu, 3) + " s");
  return {kg.entities().size() == 1000 && kg.num_relations() == 20 && after.loss <= kLossRatio * before.loss &&
              after.gap() >= kCosineGap && cpu < kPretrainCpuSeconds,
          "held-out InfoNCE " + fmt(before.loss) + " -> " + fmt(after.loss) + " (ratio " +
              fmt(after.loss / before.loss, 3) + "), cos pos " + fmt(after.positive_cosine, 3) + " vs neg " +
              fmt(after.negative_cosine, 3) + " (gap " + fmt(after.gap(), 3) + "), " + fmt(cpu, 3) + " s CPU"};
}

Outcome schedule_boundaries() {
  double worst = 0;
  bool zero_start = true;
  const TrainConfig defaults;
  for (const LrSchedule sch : {defaults.schedule(), LrSchedule{500, 50, 1e-5, 1e-3}, LrSchedule{37, 5, 0.0, 0.3}}) {
    zero_start &= sch(0) == 0.0;
    worst = std::max(worst, std::abs(sch(sch.warmup) - sch.lr_max));
    worst = std::max(worst, std::abs(sch(sch.steps - 1) - sch.lr_min));
  }
  const bool constants =
      defaults.steps == 1000 && defaults.warmup == 100 && defaults.lr_max == 1e-4 && defaults.lr_min == 5e-6;
  return {zero_start && worst <= kScheduleTolerance && constants,
          "lr(0) == 0: " + std::string(zero_start ? "yes" : "no") + ", max boundary error " + fmt(worst) +
              ", default schedule 1000/100/1e-4/5e-6: " + (constants ? "yes" : "no")};
}

Outcome power_transform() {
  double worst_lambda = 0;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    Rng rng(seed);
    std::vector<double> xs(1000);
    const double sigma = 0.5 + 0.1 * static_cast<double>(seed);
    for (auto& x : xs) x = std::exp(rng.normal(0.0, sigma));
    worst_lambda = std::max(worst_lambda, std::abs(fit_power_transform(xs).lambda - testing::grid_lambda(xs)));
  }
  Rng rng(3);
  std::vector<double> xs(1000);
  for (auto& x : xs) x = rng.normal(0.0, 1.0) * std::exp(rng.normal(0.0, 1.0));
  const auto pt = fit_power_transform(xs);
  double worst_inverse = 0;
  for (double x : xs) {
    worst_inverse = std::max(worst_inverse, std::abs(pt.inverse(pt.apply(x)) - x));
    const double z = pt.apply(x);
    worst_inverse = std::max(worst_inverse, std::abs(pt.apply(pt.inverse(z)) - z));
  }
  return {worst_lambda < kLambdaTolerance && worst_inverse < kInverseTolerance,
          "max |lambda - grid| " + fmt(worst_lambda) + " over 10 log-normal samples, max round-trip error " +
              fmt(worst_inverse)};
}

BaggingConfig experiment_bagging(std::uint64_t seed) {
  BaggingConfig b;
  b.members = 4;
  b.max_epochs = 300;
  b.patience = 40;
  b.lr_grid = {1e-3, 2.5e-3, 5e-3};
  b.cv_folds = 3;
  b.seed = seed;
  return b;
}

Dataset trips(const synthetic::World& world, std::size_t rows, std::uint64_t seed, bool source = false) {
  synthetic::TripOptions o;
  o.rows = rows;
  o.seed = seed;
  o.source_style = source;
  if (source) {
    o.scale = 40.0;
    o.shift = 200.0;
  }
  return make_dataset(synthetic::make_trips(world, o), synthetic::trip_columns(source).target, Task::regression);
}

Outcome single_table(Shared& s) {
  if (!s.have_pretrained) return {false, "no pretrained model"};
  const auto embedder = s.world.embedder();
  const double t0 = cpu_seconds();
  bool all_ok = true;
  double lo = 1e9, worst_margin = 1e9;
  for (int seed = 0; seed < kSeeds; ++seed) {
    const Dataset train = trips(s.world, kTrainRows, seed);
    const Dataset test = trips(s.world, kTestRows, seed + 1000);
    const auto est = fit_single(train, Task::regression, s.pretrained, s.config, embedder, experiment_bagging(seed));
    const double r2 = r2_score(test.targets, predict(est, test, embedder).mean);
    const double mean = std::accumulate(train.targets.begin(), train.targets.end(), 0.0) / train.targets.size();
    const double baseline = r2_score(test.targets, std::vector<double>(test.targets.size(), mean));
    s.full_r2.push_back(r2);
    if (seed == 0) s.first_estimator = est;
    all_ok &= r2 >= kSingleTableR2 && r2 > baseline;
    lo = std::min(lo, r2);
    worst_margin = std::min(worst_margin, r2 - baseline);
    log("single table seed " + std::to_string(seed) + ": R2 " + fmt(r2) + " (mean predictor " + fmt(baseline) + ")");
  }
  const double cpu = cpu_seconds() - t0;
  const double mean_r2 = std::accumulate(s.full_r2.begin(), s.full_r2.end(), 0.0) / kSeeds;
  return {all_ok && cpu < kSingleTableCpuSeconds,
          "test R2 min " + fmt(lo) + ", mean " + fmt(mean_r2) + " over " + std::to_string(kSeeds) +
              " seeds, smallest margin over the mean predictor " + fmt(worst_margin) + ", " + fmt(cpu, 4) + " s CPU"};
}

Outcome transfer_gain(Shared& s) {
  if (!s.have_pretrained) return {false, "no pretrained model"};
  const auto embedder = s.world.embedder();
  int wins = 0;
  bool ensemble_ok = true;
  double worst_slack = 1e9;
  double mean_single = 0, mean_pair = 0, mean_ens = 0;
  for (int seed = 0; seed < kSeeds; ++seed) {
    const Dataset target = trips(s.world, kTargetRows, 10 * seed + 1);
    const Dataset test = trips(s.world, kTestRows, 10 * seed + 2);
    const Dataset source = trips(s.world, kSourceRows, 10 * seed + 3, true);
    PairwiseConfig pc;
    pc.bagging = experiment_bagging(seed);
    const std::vector<SourceTable> sources{{"source", source, Task::regression}};
    MultiReport rep;
    const auto ens = fit_multi(target, Task::regression, sources, s.pretrained, s.config, embedder, pc, &rep);
    if (ens.size() != 2) return {false, "seed " + std::to_string(seed) + ": pairwise learner failed"};
    const double single = r2_score(test.targets, predict(ens.learners[0], test, embedder).mean);
    const double pair = r2_score(test.targets, predict(ens.learners[1], test, embedder).mean);
    const double combined = r2_score(test.targets, ens.predict(test, embedder));
    wins += pair > single;
    const double slack = combined - (std::min(single, pair) - kEnsembleSlack);
    worst_slack = std::min(worst_slack, slack);
    ensemble_ok &= slack >= 0;
    mean_single += single / kSeeds;
    mean_pair += pair / kSeeds;
    mean_ens += combined / kSeeds;
    log("transfer seed " + std::to_string(seed) + ": single " + fmt(single) + ", pairwise " + fmt(pair) +
        ", ensemble " + fmt(combined));
  }
  return {wins >= kTransferWinsNeeded && ensemble_ok,
          "pairwise beats single in " + std::to_string(wins) + "/" + std::to_string(kSeeds) + " seeds; mean R2 single " +
              fmt(mean_single) + ", pairwise " + fmt(mean_pair) + ", ensemble " + fmt(mean_ens) +
              "; smallest ensemble margin over min - 0.02 " + fmt(worst_slack)};
}

Outcome ensembling_algebra(Shared& s) {
  // closed form on fixed and random score lists
  double worst = 0;
  Rng rng(11);
  std::vector<std::vector<double>> lists{{0.9, 0.5, 0.5}, {0.2, 0.8}, {0.1, 0.4, 0.35, 0.9, 0.62}};
  for (int t = 0; t < 100; ++t) {
    std::vector<double> l(2 + rng.index(6));
    for (auto& x : l) x = rng.uniform(-0.5, 1.0);
    lists.push_back(l);
  }
  bool argmax_ok = true;
  for (const auto& l : lists) {
    const double n = static_cast<double>(l.size());
    const double mean = std::accumulate(l.begin(), l.end(), 0.0) / n;
    double var = 0;
    for (double x : l) var += (x - mean) * (x - mean);
    const double sd = std::sqrt(var / n);
    double z = 0;
    for (double x : l) z += std::exp(x / sd);
    const auto w = ensemble_weights(l);
    for (std::size_t i = 0; i < l.size(); ++i) worst = std::max(worst, std::abs(w[i] - std::exp(l[i] / sd) / z));
    const auto top = std::max_element(w.begin(), w.end()) - w.begin();
    for (double c : {1e-3, 0.5, 3.0, 250.0}) {
      std::vector<double> scaled = l;
      for (auto& x : scaled) x *= c;
      const auto ws = ensemble_weights(scaled);
      argmax_ok &= std::max_element(ws.begin(), ws.end()) - ws.begin() == top;
    }
  }
  bool uniform = true;
  for (std::size_t n = 1; n <= 9; ++n) {
    const auto w = ensemble_weights(std::vector<double>(n, 0.37));
    for (double x : w) uniform &= x == 1.0 / static_cast<double>(n);
  }

  // m sources -> m + 1 learners, on small tables with short training
  bool counts_ok = true;
  std::string counts;
  if (s.have_pretrained) {
    const auto embedder = s.world.embedder();
    PairwiseConfig pc;
    pc.bagging.members = 1;
    pc.bagging.max_epochs = 2;
    pc.bagging.patience = 1;
    pc.bagging.lr_grid = {1e-3};
    pc.target_quota = 4;
    const Dataset target = trips(s.world, 24, 500);
    std::vector<SourceTable> sources;
    for (std::size_t m = 0; m <= 3; ++m) {
      const auto ens = fit_multi(target, Task::regression, sources, s.pretrained, s.config, embedder, pc);
      counts_ok &= ens.size() == m + 1;
      counts += (m ? "," : "") + std::to_string(ens.size());
      sources.push_back({"s" + std::to_string(m), trips(s.world, 48, 501 + m, true), Task::regression});
    }
  } else {
    counts_ok = false;
    counts = "skipped, no pretrained model";
  }
  return {worst <= kEnsembleTolerance && uniform && argmax_ok && counts_ok,
          "max weight error " + fmt(worst) + " over " + std::to_string(lists.size()) + " score lists, equal -> uniform: " +
              (uniform ? "yes" : "no") + ", argmax stable under rescaling: " + (argmax_ok ? "yes" : "no") +
              ", learners for 0..3 sources: " + counts};
}

Outcome ablation_ordering(Shared& s) {
  if (s.full_r2.size() != kSeeds) return {false, "single-table results missing"};
  const auto embedder = s.world.embedder();
  auto mean_of = [](const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0) / v.size(); };
  std::vector<double> no_edge, no_attn;
  for (int variant = 0; variant < 2; ++variant) {
    ModelConfig config = s.config;
    config.no_edge_features = variant == 0;
    config.no_attention = variant == 1;
    for (int seed = 0; seed < kSeeds; ++seed) {
      const Dataset train = trips(s.world, kTrainRows, seed);
      const Dataset test = trips(s.world, kTestRows, seed + 1000);
      const auto est = fit_single(train, Task::regression, s.pretrained, config, embedder, experiment_bagging(seed));
      const double r2 = r2_score(test.targets, predict(est, test, embedder).mean);
      (variant == 0 ? no_edge : no_attn).push_back(r2);
      log(std::string(variant == 0 ? "no-edge-features" : "no-attention") + " seed " + std::to_string(seed) +
          ": R2 " + fmt(r2));
    }
  }
  const double full = mean_of(s.full_r2), ne = mean_of(no_edge), na = mean_of(no_attn);
  return {full >= ne && full >= na, "mean R2 full " + fmt(full) + ", no-edge-features " + fmt(ne) +
                                        ", no-attention " + fmt(na) + " over " + std::to_string(kSeeds) + " seeds"};
}

Outcome metrics() {
  // every label vector with both classes for n = 2..8, every score vector over
  // three levels, so ties appear in all patterns
  std::size_t cases = 0;
  double worst = 0;
  for (std::size_t n = 2; n <= 8; ++n) {
    std::size_t levels = 1;
    for (std::size_t i = 0; i < n; ++i) levels *= 3;
    std::vector<double> y(n), sc(n);
    for (std::size_t mask = 1; mask + 1 < (1u << n); ++mask) {
      for (std::size_t i = 0; i < n; ++i) y[i] = (mask >> i) & 1u;
      for (std::size_t code = 0; code < levels; ++code) {
        std::size_t c = code;
        for (std::size_t i = 0; i < n; ++i, c /= 3) sc[i] = static_cast<double>(c % 3);
        worst = std::max(worst, std::abs(auroc(y, sc) - testing::pair_count_auroc(y, sc)));
        ++cases;
      }
    }
  }
  const std::vector<double> y{1, 2, 3};
  const bool r2_ok = r2_score(y, y) == 1.0 && r2_score(y, std::vector<double>{2, 2, 2}) == 0.0 &&
                     r2_score(y, std::vector<double>{1, 2, 4}) == 0.5 &&
                     r2_score(y, std::vector<double>{3, 2, 1}) == -3.0;
  const bool norm_ok = normalized_score(0.83, 0.83, Task::regression) == 1.0 &&
                       normalized_score(0.0, 0.83, Task::regression) == 0.0 &&
                       normalized_score(0.91, 0.91, Task::classification) == 1.0 &&
                       normalized_score(0.5, 0.91, Task::classification) == 0.0 &&
                       normalized_score(0.4, 0.8, Task::regression) == 0.5 &&
                       normalized_score(-0.2, 0.8, Task::regression) == 0.0;
  return {worst == 0.0 && r2_ok && norm_ok,
          std::to_string(cases) + " AUROC inputs, max diff " + fmt(worst) + "; R2 hand cases " +
              (r2_ok ? "exact" : "WRONG") + "; normalized score mapping " + (norm_ok ? "exact" : "WRONG")};
}

Outcome determinism_and_persistence(Shared& s) {
  // fixed-seed pretraining runs on a small graph
  synthetic::ToyKgOptions ko;
  ko.entities = 200;
  const auto kg = KnowledgeGraph::from_triplets(synthetic::toy_kg(ko));
  const KgFeaturizer feats(kg, s.world.embedder());
  ModelConfig config;
  config.dim = 32;
  config.n_layers = 1;
  config.n_heads = 4;
  TrainConfig train;
  train.steps = 8;
  train.warmup = 2;
  train.seed = 3;
  SamplerConfig sampler;
  sampler.batch_entities = 8;
  std::string logs[2];
  for (auto& text : logs) {
    std::ostringstream out;
    PretrainHooks hooks;
    hooks.loss_log = &out;
    pretrain(kg, feats, config, sampler, train, hooks);
    text = out.str();
  }
  const bool pretrain_logs = logs[0] == logs[1] && !logs[0].empty();

  // fixed-seed fine-tuning logs
  std::string fit_logs[2];
  if (s.have_pretrained) {
    BaggingConfig b;
    b.members = 2;
    b.max_epochs = 4;
    b.lr_grid = {1e-3};
    b.seed = 8;
    const Dataset small = trips(s.world, 48, 77);
    for (auto& text : fit_logs) {
      FitReport rep;
      fit_single(small, Task::regression, s.pretrained, s.config, s.world.embedder(), b, &rep);
      std::ostringstream out;
      write_training_log(out, rep.log);
      text = out.str();
    }
  }
  const bool fit_logs_equal = s.have_pretrained && fit_logs[0] == fit_logs[1];

  // checkpoints
  const auto dir = testing::scratch_dir("acceptance");
  bool model_exact = false, model_bytes = false, est_exact = false, est_bytes = false;
  if (s.have_pretrained) {
    ModelCheckpoint ck{s.config, s.pretrained, {"", s.config.dim, kDefaultOovSeed}, s.train, s.sampler};
    for (Tensor* t : param_list(ck.params)) round_to_float(*t);
    save_model(ck, dir / "model.ckpt");
    const auto back = load_model(dir / "model.ckpt");
    model_exact = same_values(back.params, ck.params) && back.config == ck.config;
    save_model(back, dir / "model2.ckpt");
    model_bytes = read_file_bytes(dir / "model.ckpt") == read_file_bytes(dir / "model2.ckpt");
  }
  if (s.first_estimator) {
    save_estimator(*s.first_estimator, dir / "est.ckpt");
    const auto back = load_estimator(dir / "est.ckpt");
    save_estimator(back, dir / "est2.ckpt");
    est_bytes = read_file_bytes(dir / "est.ckpt") == read_file_bytes(dir / "est2.ckpt");
    const auto again = load_estimator(dir / "est2.ckpt");
    est_exact = back.members.size() == again.members.size();
    for (std::size_t m = 0; est_exact && m < back.members.size(); ++m) {
      est_exact = same_values(back.members[m].model, again.members[m].model);
    }
    const Dataset probe = trips(s.world, 32, 4242);
    est_exact = est_exact && predict(back, probe, s.world.embedder()).mean ==
                                 predict(again, probe, s.world.embedder()).mean;
  }
  auto yn = [](bool b) { return std::string(b ? "yes" : "no"); };
  return {pretrain_logs && fit_logs_equal && model_exact && model_bytes && est_exact && est_bytes,
          "pretrain logs identical " + yn(pretrain_logs) + ", fine-tune logs identical " + yn(fit_logs_equal) +
              ", model round trip bit-exact " + yn(model_exact) + ", model resave byte-identical " + yn(model_bytes) +
              ", estimator round trip exact " + yn(est_exact) + ", estimator resave byte-identical " + yn(est_bytes)};
}

}  // namespace

int main() {
  Shared shared;
  struct Criterion {
    const char* name;
    std::function<Outcome()> run;
  };
  const std::vector<Criterion> criteria{
      {"gradient integrity", gradient_integrity},
      {"attention contract", attention_contract},
      {"encoder matches the straight-line oracle", oracle_fidelity},
      {"graphlet rules", [&] { return graphlet_rules(shared); }},
      {"sampler statistics", [&] { return sampler_statistics(shared); }},
      {"contrastive training", [&] { return contrastive_training(shared); }},
      {"schedule boundary values", schedule_boundaries},
      {"power transform", power_transform},
      {"single-table learning", [&] { return single_table(shared); }},
      {"transfer gain", [&] { return transfer_gain(shared); }},
      {"ensembling algebra", [&] { return ensembling_algebra(shared); }},
      {"ablation ordering", [&] { return ablation_ordering(shared); }},
      {"metrics", metrics},
      {"determinism and persistence", [&] { return determinism_and_persistence(shared); }},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const auto start = std::chrono::steady_clock::now();
    log("running " + std::to_string(i + 1) + " " + criteria[i].name);
    Outcome o;
    try {
      o = criteria[i].run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    failed += !o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << " [" << std::setw(2) << i + 1 << "] " << criteria[i].name << ": "
              << o.detail << " (" << fmt(secs, 3) << " s)" << std::endl;
  }
  std::cout << (criteria.size() - failed) << "/" << criteria.size() << " criteria passed" << std::endl;
  return failed == 0 ? 0 : 1;
}
