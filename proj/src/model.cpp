// Copyright (c) 2026, The carte-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#include "carte/model.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace carte {

using ad::Var;

namespace {

Tensor xavier(std::size_t in, std::size_t out, Rng& rng) {
  const double a = std::sqrt(6.0 / static_cast<double>(in + out));
  Tensor t = Tensor::matrix(in, out);
  for (auto& x : t.values()) x = rng.uniform(-a, a);
  return t;
}

LayerNormParams init_layer_norm(std::size_t dim) {
  return {Tensor::matrix(1, dim, 1.0), Tensor::matrix(1, dim, 0.0)};
}

// d x H indicator of which head owns each coordinate
Tensor head_blocks(std::size_t dim, std::size_t heads) {
  Tensor b = Tensor::matrix(dim, heads);
  const std::size_t dh = dim / heads;
  for (std::size_t k = 0; k < dim; ++k) b(k, k / dh) = 1.0;
  return b;
}

Var linear(Var x, const Linear& l, ParamBinder& bind) { return ad::add_row(ad::matmul(x, bind(l.weight)), bind(l.bias)); }

Var norm(Var x, const LayerNormParams& ln, ParamBinder& bind) { return ad::layer_norm(x, bind(ln.gamma), bind(ln.beta)); }

Var maybe_dropout(Var x, const LayerOptions& o) {
  if (!o.train || o.dropout == 0.0) return x;
  if (!o.rng) throw std::invalid_argument("dropout in training mode needs an rng");
  return ad::dropout(x, o.dropout, true, *o.rng);
}

void check_layer(const AttentionLayerParams& p, std::size_t dim, std::size_t heads) {
  if (heads == 0 || dim % heads != 0) {
    throw std::invalid_argument("dimension " + std::to_string(dim) + " is not divisible by " + std::to_string(heads) +
                                " heads");
  }
  if (p.w_query.rows() != dim || p.w_query.cols() != dim) {
    throw ShapeError("attention layer expects dimension " + std::to_string(p.w_query.rows()) + ", input has " +
                     std::to_string(dim));
  }
}

// Node update shared by the full layer and the center-only readout. queries
// holds the rows being updated (and their residual), dst indexes into them.
Var attend(Var queries, Var X, Var E_ext, std::span<const std::size_t> src, std::span<const std::size_t> dst,
           std::span<const std::size_t> edge, std::size_t n_out, const AttentionLayerParams& p, ParamBinder& bind,
           const LayerOptions& o, AttentionTrace* trace) {
  const std::size_t dim = X.value().cols();
  const std::size_t heads = o.n_heads;
  check_layer(p, dim, heads);
  const std::size_t n_arcs = src.size();

  Var xs = ad::gather_rows(X, src);
  Var xe = o.no_edge_features ? xs : ad::mul(xs, ad::gather_rows(E_ext, edge));
  Var values = ad::matmul(xe, bind(p.w_value));

  Var alpha;
  if (o.no_attention) {
    std::vector<double> indeg(n_out, 0.0);
    for (std::size_t a = 0; a < n_arcs; ++a) indeg[dst[a]] += 1.0;
    Tensor w = Tensor::matrix(n_arcs, heads);
    for (std::size_t a = 0; a < n_arcs; ++a) {
      for (std::size_t h = 0; h < heads; ++h) w(a, h) = 1.0 / indeg[dst[a]];
    }
    alpha = bind.constant(std::move(w));
  } else {
    Var q = ad::matmul(queries, bind(p.w_query));
    Var k = ad::matmul(xe, bind(p.w_key));
    Var blocks = bind.constant(head_blocks(dim, heads));
    Var scores = ad::matmul(ad::mul(ad::gather_rows(q, dst), k), blocks);
    scores = ad::scale(scores, 1.0 / std::sqrt(static_cast<double>(dim / heads)));
    alpha = ad::segment_softmax(scores, dst, n_out);
  }
  if (trace) trace->weights = alpha.value();

  Var spread = ad::matmul(alpha, bind.constant([&] {
    Tensor bt = Tensor::matrix(heads, dim);
    const std::size_t dh = dim / heads;
    for (std::size_t k = 0; k < dim; ++k) bt(k / dh, k) = 1.0;
    return bt;
  }()));
  Var agg = ad::scatter_add_rows(ad::mul(spread, values), dst, n_out);
  Var attn_out = ad::matmul(agg, bind(p.w_out));

  Var h = norm(ad::add(queries, maybe_dropout(attn_out, o)), p.ln_attn, bind);
  Var ff = linear(ad::gelu(linear(h, p.ffn_in, bind)), p.ffn_out, bind);
  return norm(ad::add(h, maybe_dropout(ff, o)), p.ln_ffn, bind);
}

// Edge table with the all-ones self-loop row appended.
Var extend_edges(Var E, std::size_t num_edges, std::size_t dim, ParamBinder& bind) {
  Var ones = bind.constant(Tensor::matrix(1, dim, 1.0));
  if (num_edges == 0) return ones;
  if (E.value().rows() != num_edges || E.value().cols() != dim) {
    throw ShapeError("edge features are " + shape_string(E.value().shape()) + ", expected " +
                     std::to_string(num_edges) + " x " + std::to_string(dim));
  }
  return ad::concat_rows(E, ones);
}

}  // namespace

const char* task_name(Task task) noexcept { return task == Task::regression ? "regression" : "classification"; }

Task parse_task(std::string_view name) {
  if (name == "regression") return Task::regression;
  if (name == "classification") return Task::classification;
  throw std::invalid_argument("unknown task '" + std::string(name) + "' (expected regression or classification)");
}

void ModelConfig::validate() const {
  if (dim == 0) throw std::invalid_argument("model dimension must be positive");
  if (n_heads == 0 || dim % n_heads != 0) {
    throw std::invalid_argument("model dimension " + std::to_string(dim) + " is not divisible by " +
                                std::to_string(n_heads) + " heads");
  }
  if (n_layers == 0) throw std::invalid_argument("model needs at least one attention layer");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw std::invalid_argument("dropout must be in [0, 1)");
  if (readout_depth > n_layers) throw std::invalid_argument("readout depth exceeds the layer count");
}

Linear init_linear(std::size_t in, std::size_t out, Rng& rng) { return {xavier(in, out, rng), Tensor::matrix(1, out)}; }

AttentionLayerParams init_attention_layer(std::size_t dim, bool edge_update, Rng& rng) {
  AttentionLayerParams p;
  p.w_query = xavier(dim, dim, rng);
  p.w_key = xavier(dim, dim, rng);
  p.w_value = xavier(dim, dim, rng);
  p.w_out = xavier(dim, dim, rng);
  p.ffn_in = init_linear(dim, 4 * dim, rng);
  p.ffn_out = init_linear(4 * dim, dim, rng);
  p.ln_attn = init_layer_norm(dim);
  p.ln_ffn = init_layer_norm(dim);
  if (edge_update) {
    p.w_edge = xavier(dim, dim, rng);
    p.ln_edge = init_layer_norm(dim);
  }
  return p;
}

EncoderParams init_encoder(const ModelConfig& config, Rng& rng) {
  config.validate();
  EncoderParams p;
  p.node_proj = init_linear(config.dim, config.dim, rng);
  p.edge_proj = init_linear(config.dim, config.dim, rng);
  for (std::size_t i = 0; i < config.n_layers; ++i) p.layers.push_back(init_attention_layer(config.dim, true, rng));
  p.readout = init_attention_layer(config.dim, false, rng);
  return p;
}

ModelParams init_model(const ModelConfig& config, std::uint64_t seed) {
  Rng rng(derive_seed(seed, "init"));
  ModelParams p;
  p.encoder = init_encoder(config, rng);
  p.proj_hidden = init_linear(config.dim, config.dim, rng);
  p.proj_out = init_linear(config.dim, config.dim, rng);
  return p;
}

HeadParams init_head(std::size_t dim, Rng& rng) { return {init_linear(dim, dim, rng), init_linear(dim, 1, rng)}; }

Var ParamBinder::operator()(const Tensor& param) {
  auto it = bound_.find(&param);
  if (it != bound_.end()) return it->second;
  Var v = trainable_ ? tape_.leaf(param) : tape_.constant(param);
  bound_.emplace(&param, v);
  return v;
}

std::vector<Tensor> ParamBinder::gradients(Var loss, std::span<Tensor* const> params) {
  std::vector<Var> vars;
  std::vector<std::size_t> slot;
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto it = bound_.find(params[i]);
    if (it != bound_.end() && tape_.requires_grad(it->second)) {
      vars.push_back(it->second);
      slot.push_back(i);
    }
  }
  auto grads = tape_.gradients(loss, vars);
  std::vector<Tensor> out;
  out.reserve(params.size());
  for (Tensor* p : params) out.emplace_back(p->shape(), 0.0);
  for (std::size_t k = 0; k < slot.size(); ++k) out[slot[k]] = std::move(grads[k]);
  return out;
}

void ArcList::validate() const {
  if (src.size() != dst.size() || src.size() != edge.size()) throw std::invalid_argument("arc arrays differ in length");
  std::vector<bool> has_self(num_nodes, false);
  for (std::size_t a = 0; a < src.size(); ++a) {
    if (src[a] >= num_nodes || dst[a] >= num_nodes || edge[a] > num_edges) {
      throw std::invalid_argument("dangling arc " + std::to_string(a) + " (" + std::to_string(src[a]) + " -> " +
                                  std::to_string(dst[a]) + ", edge " + std::to_string(edge[a]) + ") in a graph of " +
                                  std::to_string(num_nodes) + " nodes and " + std::to_string(num_edges) + " edges");
    }
    if (edge[a] == num_edges) {
      if (src[a] != dst[a]) throw std::invalid_argument("self-loop edge feature on a non-loop arc");
      has_self[dst[a]] = true;
    }
  }
  for (std::size_t v = 0; v < num_nodes; ++v) {
    if (!has_self[v]) throw std::invalid_argument("node " + std::to_string(v) + " has no self-loop arc");
  }
}

ArcList arcs_for_edges(std::size_t num_nodes, std::span<const Graphlet::Edge> edges) {
  ArcList arcs;
  arcs.num_nodes = num_nodes;
  arcs.num_edges = edges.size();
  const std::size_t total = 2 * edges.size() + num_nodes;
  arcs.src.reserve(total);
  arcs.dst.reserve(total);
  arcs.edge.reserve(total);
  for (std::size_t e = 0; e < edges.size(); ++e) {
    arcs.src.push_back(edges[e].child);
    arcs.dst.push_back(edges[e].parent);
    arcs.edge.push_back(e);
    arcs.src.push_back(edges[e].parent);
    arcs.dst.push_back(edges[e].child);
    arcs.edge.push_back(e);
  }
  for (std::size_t v = 0; v < num_nodes; ++v) {
    arcs.src.push_back(v);
    arcs.dst.push_back(v);
    arcs.edge.push_back(edges.size());
  }
  return arcs;
}

GraphBatch GraphBatch::from_graphlets(std::span<const Graphlet* const> graphlets) {
  if (graphlets.empty()) throw std::invalid_argument("empty graphlet batch");
  const std::size_t d = graphlets.front()->dim();
  std::size_t n_nodes = 0, n_edges = 0;
  for (const Graphlet* g : graphlets) {
    if (g->dim() != d || (g->num_edges() > 0 && g->edge_features.cols() != d)) {
      throw ShapeError("graphlet batch mixes dimensions " + std::to_string(d) + " and " + std::to_string(g->dim()));
    }
    if (g->edge_features.rows() != g->num_edges()) throw ShapeError("graphlet edge feature count mismatch");
    n_nodes += g->num_nodes();
    n_edges += g->num_edges();
  }
  GraphBatch b;
  b.nodes = Tensor::matrix(n_nodes, d);
  b.edges = Tensor::matrix(n_edges, d);
  b.arcs.num_nodes = n_nodes;
  b.arcs.num_edges = n_edges;
  const std::size_t total = 2 * n_edges + n_nodes;
  b.arcs.src.reserve(total);
  b.arcs.dst.reserve(total);
  b.arcs.edge.reserve(total);
  std::size_t node_off = 0, edge_off = 0;
  for (std::size_t gi = 0; gi < graphlets.size(); ++gi) {
    const Graphlet& g = *graphlets[gi];
    std::copy(g.nodes.values().begin(), g.nodes.values().end(), b.nodes.data() + node_off * d);
    if (g.num_edges() > 0) {
      std::copy(g.edge_features.values().begin(), g.edge_features.values().end(), b.edges.data() + edge_off * d);
    }
    b.centers.push_back(node_off + Graphlet::kCenter);
    for (std::size_t e = 0; e < g.num_edges(); ++e) {
      const std::size_t p = node_off + g.edges[e].parent, c = node_off + g.edges[e].child;
      b.arcs.src.push_back(c);
      b.arcs.dst.push_back(p);
      b.arcs.edge.push_back(edge_off + e);
      b.arcs.src.push_back(p);
      b.arcs.dst.push_back(c);
      b.arcs.edge.push_back(edge_off + e);
    }
    node_off += g.num_nodes();
    edge_off += g.num_edges();
  }
  for (std::size_t v = 0; v < n_nodes; ++v) {
    b.arcs.src.push_back(v);
    b.arcs.dst.push_back(v);
    b.arcs.edge.push_back(n_edges);
  }
  std::vector<std::size_t> center_of(n_nodes, SIZE_MAX);
  for (std::size_t gi = 0; gi < b.centers.size(); ++gi) center_of[b.centers[gi]] = gi;
  for (std::size_t a = 0; a < b.arcs.size(); ++a) {
    const std::size_t g = center_of[b.arcs.dst[a]];
    if (g != SIZE_MAX) {
      b.readout_arcs.push_back(a);
      b.readout_dst.push_back(g);
    }
  }
  return b;
}

GraphBatch GraphBatch::from_graphlets(std::span<const Graphlet> graphlets) {
  std::vector<const Graphlet*> ptrs;
  ptrs.reserve(graphlets.size());
  for (const auto& g : graphlets) ptrs.push_back(&g);
  return from_graphlets(std::span<const Graphlet* const>(ptrs));
}

LayerOutput attention_layer(Var X, Var E, const ArcList& arcs, const AttentionLayerParams& params, ParamBinder& bind,
                            const LayerOptions& options, AttentionTrace* trace) {
  arcs.validate();
  const Tensor& xv = X.value();
  if (xv.rows() != arcs.num_nodes) {
    throw ShapeError("attention layer: node features are " + shape_string(xv.shape()) + " for " +
                     std::to_string(arcs.num_nodes) + " nodes");
  }
  const std::size_t dim = xv.cols();
  Var e_ext;
  if (!options.no_edge_features) e_ext = extend_edges(E, arcs.num_edges, dim, bind);
  Var nodes = attend(X, X, e_ext, arcs.src, arcs.dst, arcs.edge, arcs.num_nodes, params, bind, options, trace);
  Var edges = E;
  if (params.updates_edges() && !options.no_edge_features && arcs.num_edges > 0) {
    edges = norm(ad::gelu(ad::matmul(E, bind(params.w_edge))), params.ln_edge, bind);
  }
  return {nodes, edges};
}

Var readout_layer(Var X, Var E, const GraphBatch& batch, const AttentionLayerParams& params, ParamBinder& bind,
                  const LayerOptions& options, AttentionTrace* trace) {
  const std::size_t dim = X.value().cols();
  Var e_ext;
  if (!options.no_edge_features) e_ext = extend_edges(E, batch.arcs.num_edges, dim, bind);
  std::vector<std::size_t> src, edge;
  src.reserve(batch.readout_arcs.size());
  edge.reserve(batch.readout_arcs.size());
  for (std::size_t a : batch.readout_arcs) {
    src.push_back(batch.arcs.src[a]);
    edge.push_back(batch.arcs.edge[a]);
  }
  Var queries = ad::gather_rows(X, batch.centers);
  return attend(queries, X, e_ext, src, batch.readout_dst, edge, batch.size(), params, bind, options, trace);
}

Var encode(const GraphBatch& batch, const EncoderParams& params, const ModelConfig& config, ParamBinder& bind,
           bool train, Rng* rng) {
  if (batch.dim() != params.node_proj.weight.rows()) {
    throw ShapeError("graphlet dimension " + std::to_string(batch.dim()) + " does not match model dimension " +
                     std::to_string(params.node_proj.weight.rows()));
  }
  LayerOptions opts;
  opts.n_heads = config.n_heads;
  opts.dropout = config.dropout;
  opts.train = train;
  opts.no_edge_features = config.no_edge_features;
  opts.no_attention = config.no_attention;
  opts.rng = rng;

  Var X = linear(bind.constant(batch.nodes), params.node_proj, bind);
  Var E;
  if (!config.no_edge_features && batch.arcs.num_edges > 0) E = linear(bind.constant(batch.edges), params.edge_proj, bind);
  std::size_t depth = params.layers.size();
  if (config.readout_depth > 0) depth = std::min(depth, config.readout_depth);
  for (std::size_t l = 0; l < depth; ++l) {
    auto out = attention_layer(X, E, batch.arcs, params.layers[l], bind, opts);
    X = out.nodes;
    E = out.edges;
  }
  return readout_layer(X, E, batch, params.readout, bind, opts);
}

Tensor encode_eval(std::span<const Graphlet> graphlets, const EncoderParams& params, const ModelConfig& config) {
  const std::size_t d = params.node_proj.weight.cols();
  Tensor out = Tensor::matrix(graphlets.size(), d);
  constexpr std::size_t kChunk = 256;
  for (std::size_t start = 0; start < graphlets.size(); start += kChunk) {
    const std::size_t n = std::min(kChunk, graphlets.size() - start);
    const GraphBatch batch = GraphBatch::from_graphlets(graphlets.subspan(start, n));
    ad::Tape tape;
    ParamBinder bind(tape, false);
    const Tensor& z = encode(batch, params, config, bind, false, nullptr).value();
    std::copy(z.values().begin(), z.values().end(), out.data() + start * d);
  }
  return out;
}

Vector encode_eval(const Graphlet& graphlet, const EncoderParams& params, const ModelConfig& config) {
  const Tensor z = encode_eval(std::span<const Graphlet>(&graphlet, 1), params, config);
  return Vector(z.values().begin(), z.values().end());
}

Var project(Var embeddings, const ModelParams& params, ParamBinder& bind) {
  return linear(ad::gelu(linear(embeddings, params.proj_hidden, bind)), params.proj_out, bind);
}

Var head_scores(Var embeddings, const HeadParams& head, ParamBinder& bind) {
  return linear(ad::gelu(linear(embeddings, head.hidden, bind)), head.out, bind);
}

double predict_head(std::span<const double> embedding, const HeadParams& head, Task task) {
  const std::size_t d = head.hidden.weight.rows();
  const std::size_t h = head.hidden.weight.cols();
  if (embedding.size() != d) {
    throw ShapeError("head expects dimension " + std::to_string(d) + ", embedding has " +
                     std::to_string(embedding.size()));
  }
  double score = head.out.bias[0];
  for (std::size_t j = 0; j < h; ++j) {
    double a = head.hidden.bias[j];
    for (std::size_t i = 0; i < d; ++i) a += embedding[i] * head.hidden.weight(i, j);
    const double g = 0.5 * a * std::erfc(-a / std::sqrt(2.0));
    score += g * head.out.weight(j, 0);
  }
  if (task == Task::classification) return 1.0 / (1.0 + std::exp(-score));
  return score;
}

}  // namespace carte
