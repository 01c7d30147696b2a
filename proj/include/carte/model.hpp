// Copyright (c) 2026, The carte-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <concepts>
#include <cstdint>
#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <type_traits>
#include <unordered_map>
#include <vector>

#include "carte/autodiff.hpp"
#include "carte/graphlet.hpp"
#include "carte/rng.hpp"
#include "carte/tensor.hpp"

namespace carte {

enum class Task { regression, classification };

const char* task_name(Task task) noexcept;
Task parse_task(std::string_view name);

struct ModelConfig {
  std::size_t dim = 300;
  std::size_t n_layers = 12;
  std::size_t n_heads = 12;
  double dropout = 0.1;
  /// Number of attention layers whose output feeds the readout; 0 means all.
  std::size_t readout_depth = 0;
  /// Ablations: all-ones edge features, uniform attention over incoming arcs.
  bool no_edge_features = false;
  bool no_attention = false;

  void validate() const;
  std::size_t head_dim() const { return dim / n_heads; }

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

struct Linear {
  Tensor weight;  // in x out
  Tensor bias;    // 1 x out
};

struct LayerNormParams {
  Tensor gamma;
  Tensor beta;
};

/// Heads occupy consecutive column blocks of w_query / w_key / w_value.
struct AttentionLayerParams {
  Tensor w_query, w_key, w_value, w_out;
  Linear ffn_in, ffn_out;
  LayerNormParams ln_attn, ln_ffn;
  // Edge update; empty for the readout layer.
  Tensor w_edge;
  LayerNormParams ln_edge;

  bool updates_edges() const { return !w_edge.empty(); }
};

struct EncoderParams {
  Linear node_proj;
  Linear edge_proj;
  std::vector<AttentionLayerParams> layers;
  AttentionLayerParams readout;
};

/// Pretraining model: encoder plus a two-layer projection head for the
/// contrastive loss.
struct ModelParams {
  EncoderParams encoder;
  Linear proj_hidden;
  Linear proj_out;
};

/// d -> d, gelu, d -> 1.
struct HeadParams {
  Linear hidden;
  Linear out;
};

template <class T, class U>
concept SameBase = std::same_as<std::remove_const_t<T>, U>;

// Visits every parameter tensor as f(name, tensor) in a fixed order.
template <class P, class F>
  requires SameBase<P, Linear>
void visit_params(P& p, const std::string& prefix, F&& f) {
  f(prefix + ".weight", p.weight);
  f(prefix + ".bias", p.bias);
}

template <class P, class F>
  requires SameBase<P, LayerNormParams>
void visit_params(P& p, const std::string& prefix, F&& f) {
  f(prefix + ".gamma", p.gamma);
  f(prefix + ".beta", p.beta);
}

template <class P, class F>
  requires SameBase<P, AttentionLayerParams>
void visit_params(P& p, const std::string& prefix, F&& f) {
  f(prefix + ".w_query", p.w_query);
  f(prefix + ".w_key", p.w_key);
  f(prefix + ".w_value", p.w_value);
  f(prefix + ".w_out", p.w_out);
  visit_params(p.ffn_in, prefix + ".ffn_in", f);
  visit_params(p.ffn_out, prefix + ".ffn_out", f);
  visit_params(p.ln_attn, prefix + ".ln_attn", f);
  visit_params(p.ln_ffn, prefix + ".ln_ffn", f);
  if (p.updates_edges()) {
    f(prefix + ".w_edge", p.w_edge);
    visit_params(p.ln_edge, prefix + ".ln_edge", f);
  }
}

template <class P, class F>
  requires SameBase<P, EncoderParams>
void visit_params(P& p, const std::string& prefix, F&& f) {
  visit_params(p.node_proj, prefix + "node_proj", f);
  visit_params(p.edge_proj, prefix + "edge_proj", f);
  for (std::size_t i = 0; i < p.layers.size(); ++i) visit_params(p.layers[i], prefix + "layers." + std::to_string(i), f);
  visit_params(p.readout, prefix + "readout", f);
}

template <class P, class F>
  requires SameBase<P, ModelParams>
void visit_params(P& p, const std::string& prefix, F&& f) {
  visit_params(p.encoder, prefix, f);
  visit_params(p.proj_hidden, prefix + "proj_hidden", f);
  visit_params(p.proj_out, prefix + "proj_out", f);
}

template <class P, class F>
  requires SameBase<P, HeadParams>
void visit_params(P& p, const std::string& prefix, F&& f) {
  visit_params(p.hidden, prefix + "head_hidden", f);
  visit_params(p.out, prefix + "head_out", f);
}

template <class P>
std::vector<Tensor*> param_list(P& p) {
  std::vector<Tensor*> out;
  visit_params(p, std::string(), [&](const std::string&, Tensor& t) { out.push_back(&t); });
  return out;
}

template <class P>
std::vector<std::string> param_names(const P& p) {
  std::vector<std::string> out;
  visit_params(p, std::string(), [&](const std::string& name, const Tensor&) { out.push_back(name); });
  return out;
}

/// Xavier-uniform weights, zero biases, unit layer-norm scales.
Linear init_linear(std::size_t in, std::size_t out, Rng& rng);
AttentionLayerParams init_attention_layer(std::size_t dim, bool edge_update, Rng& rng);
EncoderParams init_encoder(const ModelConfig& config, Rng& rng);
ModelParams init_model(const ModelConfig& config, std::uint64_t seed);
HeadParams init_head(std::size_t dim, Rng& rng);

/// Places parameter tensors on a tape once per forward pass, as leaves when
/// training and as constants otherwise.
class ParamBinder {
 public:
  ParamBinder(ad::Tape& tape, bool trainable) : tape_(tape), trainable_(trainable) {}

  ad::Tape& tape() const noexcept { return tape_; }
  ad::Var operator()(const Tensor& param);
  ad::Var constant(Tensor value) { return tape_.constant(std::move(value)); }
  /// Uses an existing variable for `param` (e.g. a leaf owned by a gradient check).
  void bind(const Tensor& param, ad::Var var) { bound_[&param] = var; }

  /// Gradients for the given parameters, zeros for those never bound.
  std::vector<Tensor> gradients(ad::Var loss, std::span<Tensor* const> params);

 private:
  ad::Tape& tape_;
  bool trainable_;
  std::unordered_map<const Tensor*, ad::Var> bound_;
};

/// Directed arcs of a (possibly batched) graph. An arc with edge == num_edges
/// is a self-loop and uses the all-ones edge feature.
struct ArcList {
  std::size_t num_nodes = 0;
  std::size_t num_edges = 0;
  std::vector<std::size_t> src;
  std::vector<std::size_t> dst;
  std::vector<std::size_t> edge;

  std::size_t size() const noexcept { return src.size(); }
  /// Throws std::invalid_argument on a dangling arc or a node without self-loop.
  void validate() const;
};

/// Expands undirected edges into two arcs each, plus one self-loop per node.
ArcList arcs_for_edges(std::size_t num_nodes, std::span<const Graphlet::Edge> edges);

/// Several graphlets as one disjoint graph.
struct GraphBatch {
  Tensor nodes;  // total nodes x d
  Tensor edges;  // total edges x d
  ArcList arcs;
  std::vector<std::size_t> centers;
  // arcs into the centers, with their destination renumbered to the graphlet index
  std::vector<std::size_t> readout_arcs;
  std::vector<std::size_t> readout_dst;

  std::size_t size() const noexcept { return centers.size(); }
  std::size_t dim() const { return nodes.cols(); }

  static GraphBatch from_graphlets(std::span<const Graphlet* const> graphlets);
  static GraphBatch from_graphlets(std::span<const Graphlet> graphlets);
};

struct LayerOptions {
  std::size_t n_heads = 1;
  double dropout = 0.0;
  bool train = false;
  bool no_edge_features = false;
  bool no_attention = false;
  Rng* rng = nullptr;  // required when train && dropout > 0
};

struct AttentionTrace {
  Tensor weights;  // arcs x heads
};

struct LayerOutput {
  ad::Var nodes;
  ad::Var edges;  // unchanged input when the layer has no edge update
};

/// One edge-conditioned multi-head attention layer over all nodes. E holds one
/// row per undirected edge (arcs.num_edges rows).
LayerOutput attention_layer(ad::Var X, ad::Var E, const ArcList& arcs, const AttentionLayerParams& params,
                            ParamBinder& bind, const LayerOptions& options, AttentionTrace* trace = nullptr);

/// Readout: the node update of an attention layer evaluated only at the
/// center nodes. Returns batch x d.
ad::Var readout_layer(ad::Var X, ad::Var E, const GraphBatch& batch, const AttentionLayerParams& params,
                      ParamBinder& bind, const LayerOptions& options, AttentionTrace* trace = nullptr);

/// Projections, attention layers and readout; returns batch x d center vectors.
ad::Var encode(const GraphBatch& batch, const EncoderParams& params, const ModelConfig& config, ParamBinder& bind,
               bool train, Rng* rng);

/// Evaluation-mode embeddings, one row per graphlet.
Tensor encode_eval(std::span<const Graphlet> graphlets, const EncoderParams& params, const ModelConfig& config);
Vector encode_eval(const Graphlet& graphlet, const EncoderParams& params, const ModelConfig& config);

/// Contrastive projection head, batch x d.
ad::Var project(ad::Var embeddings, const ModelParams& params, ParamBinder& bind);

/// Raw head score, batch x 1.
ad::Var head_scores(ad::Var embeddings, const HeadParams& head, ParamBinder& bind);
/// Raw score for regression, probability for classification.
double predict_head(std::span<const double> embedding, const HeadParams& head, Task task);

}  // namespace carte
