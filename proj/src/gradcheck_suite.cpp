// Copyright (c) 2026, The carte-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#include "carte/gradcheck_suite.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <memory>

#include "carte/model.hpp"
#include "carte/pretrain.hpp"

namespace carte {

namespace {

using ad::Tape;
using ad::Var;

Tensor random_tensor(std::size_t rows, std::size_t cols, Rng& rng, double sd = 1.0) {
  Tensor t = Tensor::matrix(rows, cols);
  for (auto& v : t.values()) v = rng.normal(0.0, sd);
  return t;
}

// sum(v * R) for a fixed random R, so the check sees every output coordinate.
Var reduce(Tape& tape, Var v, std::uint64_t seed) {
  Rng rng(seed);
  Tensor r(v.shape());
  for (auto& x : r.values()) x = rng.normal();
  return ad::sum(ad::mul(v, tape.constant(std::move(r))));
}

void jitter(Tensor& t, Rng& rng, double sd) {
  for (auto& v : t.values()) v += rng.normal(0.0, sd);
}

Graphlet random_graphlet(std::vector<Graphlet::Edge> edges, std::size_t n, std::size_t d, Rng& rng) {
  Graphlet g;
  g.nodes = random_tensor(n, d, rng);
  g.edges = std::move(edges);
  g.edge_features = random_tensor(g.edges.size(), d, rng);
  return g;
}

class Suite {
 public:
  explicit Suite(const GradCheckSuiteOptions& options) : options_(options), rng_(options.seed) {}

  void check(const std::string& name, std::vector<Tensor> params, std::vector<std::string> names,
             const ad::ScalarBuilder& build) {
    auto report = ad::finite_difference_check(build, params, options_.step, options_.tolerance, names);
    result_.max_relative_error = std::max(result_.max_relative_error, report.max_relative_error);
    result_.passed = result_.passed && report.passed;
    result_.cases.push_back({name, std::move(report)});
  }

  Tensor rand(std::size_t r, std::size_t c, double sd = 1.0) { return random_tensor(r, c, rng_, sd); }
  Rng& rng() { return rng_; }
  GradCheckSuiteResult take() { return std::move(result_); }

 private:
  GradCheckSuiteOptions options_;
  Rng rng_;
  GradCheckSuiteResult result_;
};

void primitive_cases(Suite& s) {
  s.check("matmul", {s.rand(3, 4), s.rand(4, 2)}, {"a", "b"},
          [](Tape& t, std::span<const Var> p) { return reduce(t, ad::matmul(p[0], p[1]), 1); });
  s.check("transpose", {s.rand(3, 4)}, {"a"},
          [](Tape& t, std::span<const Var> p) { return reduce(t, ad::transpose(p[0]), 2); });
  s.check("add", {s.rand(3, 4), s.rand(3, 4)}, {"a", "b"},
          [](Tape& t, std::span<const Var> p) { return reduce(t, ad::add(p[0], p[1]), 3); });
  s.check("sub", {s.rand(3, 4), s.rand(3, 4)}, {"a", "b"},
          [](Tape& t, std::span<const Var> p) { return reduce(t, ad::sub(p[0], p[1]), 4); });
  s.check("mul", {s.rand(3, 4), s.rand(3, 4)}, {"a", "b"},
          [](Tape& t, std::span<const Var> p) { return reduce(t, ad::mul(p[0], p[1]), 5); });
  s.check("add_row", {s.rand(3, 4), s.rand(1, 4)}, {"a", "row"},
          [](Tape& t, std::span<const Var> p) { return reduce(t, ad::add_row(p[0], p[1]), 6); });
  s.check("scale", {s.rand(3, 4)}, {"a"},
          [](Tape& t, std::span<const Var> p) { return reduce(t, ad::scale(p[0], -1.7), 7); });
  s.check("gelu", {s.rand(4, 5, 2.0)}, {"a"},
          [](Tape& t, std::span<const Var> p) { return reduce(t, ad::gelu(p[0]), 8); });
  s.check("layer_norm", {s.rand(3, 6), s.rand(1, 6), s.rand(1, 6)}, {"x", "gamma", "beta"},
          [](Tape& t, std::span<const Var> p) { return reduce(t, ad::layer_norm(p[0], p[1], p[2]), 9); });
  s.check("dropout", {s.rand(4, 5)}, {"a"}, [](Tape& t, std::span<const Var> p) {
    Rng mask(11);  // same mask on every rebuild
    return reduce(t, ad::dropout(p[0], 0.3, true, mask), 10);
  });
  s.check("gather_rows", {s.rand(4, 3)}, {"x"}, [](Tape& t, std::span<const Var> p) {
    const std::vector<std::size_t> idx{0, 2, 2, 3, 1};
    return reduce(t, ad::gather_rows(p[0], idx), 12);
  });
  s.check("scatter_add_rows", {s.rand(5, 3)}, {"x"}, [](Tape& t, std::span<const Var> p) {
    const std::vector<std::size_t> idx{0, 1, 1, 2, 0};
    return reduce(t, ad::scatter_add_rows(p[0], idx, 4), 13);
  });
  s.check("segment_softmax", {s.rand(6, 2)}, {"logits"}, [](Tape& t, std::span<const Var> p) {
    const std::vector<std::size_t> seg{0, 0, 1, 1, 1, 2};
    return reduce(t, ad::segment_softmax(p[0], seg, 3), 14);
  });
  s.check("concat_rows", {s.rand(2, 3), s.rand(3, 3)}, {"a", "b"},
          [](Tape& t, std::span<const Var> p) { return reduce(t, ad::concat_rows(p[0], p[1]), 15); });
  s.check("sum", {s.rand(3, 4)}, {"a"}, [](Tape&, std::span<const Var> p) { return ad::sum(p[0]); });
  s.check("mean", {s.rand(3, 4)}, {"a"}, [](Tape& t, std::span<const Var> p) {
    Rng weights(16);
    return ad::mean(ad::mul(p[0], t.constant(random_tensor(3, 4, weights))));
  });
  s.check("normalize_rows", {s.rand(3, 4)}, {"a"},
          [](Tape& t, std::span<const Var> p) { return reduce(t, ad::normalize_rows(p[0]), 17); });
  s.check("cosine_similarity", {s.rand(3, 4), s.rand(2, 4)}, {"a", "b"},
          [](Tape& t, std::span<const Var> p) { return reduce(t, ad::cosine_similarity(p[0], p[1]), 18); });
  s.check("softmax_cross_entropy", {s.rand(4, 4)}, {"logits"}, [](Tape&, std::span<const Var> p) {
    const std::vector<std::size_t> target{1, 0, 3, 2};
    return ad::softmax_cross_entropy(p[0], target, false);
  });
  s.check("softmax_cross_entropy/exclude_diagonal", {s.rand(4, 4)}, {"logits"}, [](Tape&, std::span<const Var> p) {
    const std::vector<std::size_t> target{1, 0, 3, 2};
    return ad::softmax_cross_entropy(p[0], target, true);
  });
  const Tensor mse_target = s.rand(5, 1);
  s.check("mse_loss", {s.rand(5, 1)}, {"prediction"},
          [mse_target](Tape&, std::span<const Var> p) { return ad::mse_loss(p[0], mse_target); });
  const Tensor labels = Tensor({5, 1}, {1, 0, 0, 1, 1});
  s.check("bce_with_logits", {s.rand(5, 1, 2.0)}, {"logits"},
          [labels](Tape&, std::span<const Var> p) { return ad::bce_with_logits(p[0], labels); });
  s.check("info_nce", {s.rand(6, 4)}, {"embeddings"}, [](Tape&, std::span<const Var> p) {
    const auto pair = stacked_pairs(3);
    return info_nce(p[0], pair, 0.5);
  });
}

// Layer parameters get random offsets so biases and norm scales are not at
// their special initial values.
AttentionLayerParams random_layer(std::size_t d, bool edge_update, Rng& rng) {
  AttentionLayerParams layer = init_attention_layer(d, edge_update, rng);
  visit_params(layer, "", [&](const std::string&, Tensor& t) { jitter(t, rng, 0.2); });
  return layer;
}

template <class P>
std::vector<Tensor> values_of(P& params, std::vector<std::string>& names) {
  std::vector<Tensor> out;
  visit_params(params, "", [&](const std::string& name, Tensor& t) {
    out.push_back(t);
    names.push_back(name);
  });
  return out;
}

// Binds params[offset...] to the tensors of `p`, in visit order.
template <class P>
void bind_all(ParamBinder& bind, const P& p, std::span<const Var> vars, std::size_t offset) {
  std::size_t k = offset;
  visit_params(p, "", [&](const std::string&, const Tensor& t) { bind.bind(t, vars[k++]); });
}

void layer_cases(Suite& s) {
  constexpr std::size_t d = 8;
  constexpr std::size_t heads = 2;
  const std::vector<Graphlet::Edge> tree{{0, 1}, {0, 2}, {0, 3}, {3, 4}};
  const ArcList arcs = arcs_for_edges(5, tree);

  for (int variant = 0; variant < 3; ++variant) {
    auto layer = std::make_shared<AttentionLayerParams>(random_layer(d, true, s.rng()));
    std::vector<std::string> names{"X", "E"};
    std::vector<Tensor> params{s.rand(5, d), s.rand(tree.size(), d)};
    auto rest = values_of(*layer, names);
    params.insert(params.end(), rest.begin(), rest.end());
    LayerOptions opts;
    opts.n_heads = heads;
    opts.no_edge_features = variant == 1;
    opts.no_attention = variant == 2;
    const char* label[] = {"attention_layer", "attention_layer/no_edge_features", "attention_layer/no_attention"};
    s.check(label[variant], params, names, [layer, arcs, opts](Tape& t, std::span<const Var> p) {
      ParamBinder bind(t, true);
      bind_all(bind, *layer, p, 2);
      const auto out = attention_layer(p[0], p[1], arcs, *layer, bind, opts);
      return ad::add(reduce(t, out.nodes, 21), reduce(t, out.edges, 22));
    });
  }

  // readout over a two-graphlet batch
  {
    auto graphs = std::make_shared<std::vector<Graphlet>>();
    graphs->push_back(random_graphlet(tree, 5, d, s.rng()));
    graphs->push_back(random_graphlet({{0, 1}, {0, 2}}, 3, d, s.rng()));
    auto batch = std::make_shared<GraphBatch>(GraphBatch::from_graphlets(std::span<const Graphlet>(*graphs)));
    auto layer = std::make_shared<AttentionLayerParams>(random_layer(d, false, s.rng()));
    std::vector<std::string> names{"X", "E"};
    std::vector<Tensor> params{batch->nodes, batch->edges};
    auto rest = values_of(*layer, names);
    params.insert(params.end(), rest.begin(), rest.end());
    LayerOptions opts;
    opts.n_heads = heads;
    s.check("readout_layer", params, names, [layer, batch, opts](Tape& t, std::span<const Var> p) {
      ParamBinder bind(t, true);
      bind_all(bind, *layer, p, 2);
      return reduce(t, readout_layer(p[0], p[1], *batch, *layer, bind, opts), 23);
    });
  }

  // whole encoder: projections, one layer with edge update, readout
  {
    ModelConfig config;
    config.dim = d;
    config.n_layers = 1;
    config.n_heads = heads;
    config.dropout = 0.0;
    auto enc = std::make_shared<EncoderParams>(init_encoder(config, s.rng()));
    visit_params(*enc, "", [&](const std::string&, Tensor& t) { jitter(t, s.rng(), 0.2); });
    auto graphs = std::make_shared<std::vector<Graphlet>>();
    graphs->push_back(random_graphlet(tree, 5, d, s.rng()));
    graphs->push_back(random_graphlet({{0, 1}, {0, 2}}, 3, d, s.rng()));
    auto batch = std::make_shared<GraphBatch>(GraphBatch::from_graphlets(std::span<const Graphlet>(*graphs)));
    std::vector<std::string> names;
    auto params = values_of(*enc, names);
    s.check("encoder", params, names, [enc, batch, config](Tape& t, std::span<const Var> p) {
      ParamBinder bind(t, true);
      bind_all(bind, *enc, p, 0);
      return reduce(t, encode(*batch, *enc, config, bind, false, nullptr), 24);
    });
  }
}

}  // namespace

GradCheckSuiteResult run_gradcheck_suite(const GradCheckSuiteOptions& options) {
  const auto start = std::chrono::steady_clock::now();
  Suite suite(options);
  primitive_cases(suite);
  layer_cases(suite);
  auto result = suite.take();
  result.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return result;
}

}  // namespace carte
