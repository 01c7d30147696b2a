// Copyright (c) 2026, The carte-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Shared fixtures for the unit and acceptance tests, including a loop-based
// reimplementation of the encoder used as an oracle against the tape-based one.

#include <cmath>
#include <filesystem>
#include <limits>
#include <memory>
#include <string>
#include <vector>

#include "carte/embeddings.hpp"
#include "carte/graphlet.hpp"
#include "carte/model.hpp"
#include "carte/rng.hpp"

namespace carte::testing {

using Mat = std::vector<std::vector<double>>;

inline Mat to_mat(const Tensor& t) {
  Mat m(t.rows(), std::vector<double>(t.cols()));
  for (std::size_t r = 0; r < t.rows(); ++r)
    for (std::size_t c = 0; c < t.cols(); ++c) m[r][c] = t(r, c);
  return m;
}

inline std::vector<double> vec_mat(const std::vector<double>& x, const Tensor& w) {
  std::vector<double> y(w.cols(), 0.0);
  for (std::size_t c = 0; c < w.cols(); ++c)
    for (std::size_t k = 0; k < w.rows(); ++k) y[c] += x[k] * w(k, c);
  return y;
}

inline std::vector<double> affine(const std::vector<double>& x, const Linear& l) {
  auto y = vec_mat(x, l.weight);
  for (std::size_t c = 0; c < y.size(); ++c) y[c] += l.bias[c];
  return y;
}

inline double gelu_scalar(double x) { return 0.5 * x * (1.0 + std::erf(x / std::sqrt(2.0))); }

inline std::vector<double> gelu_vec(std::vector<double> x) {
  for (auto& v : x) v = gelu_scalar(v);
  return x;
}

inline std::vector<double> layer_norm_vec(const std::vector<double>& x, const LayerNormParams& ln) {
  const double n = static_cast<double>(x.size());
  double mu = 0.0;
  for (double v : x) mu += v;
  mu /= n;
  double var = 0.0;
  for (double v : x) var += (v - mu) * (v - mu);
  var /= n;
  std::vector<double> y(x.size());
  for (std::size_t c = 0; c < x.size(); ++c) y[c] = ln.gamma[c] * (x[c] - mu) / std::sqrt(var + 1e-5) + ln.beta[c];
  return y;
}

struct OracleOptions {
  std::size_t heads = 1;
  bool no_edge_features = false;
  bool no_attention = false;
};

// Incoming neighbours of every node: (source node, edge row or -1 for self).
inline std::vector<std::vector<std::pair<std::size_t, long>>> incoming(const Graphlet& g) {
  std::vector<std::vector<std::pair<std::size_t, long>>> in(g.num_nodes());
  for (std::size_t e = 0; e < g.num_edges(); ++e) {
    in[g.edges[e].parent].push_back({g.edges[e].child, static_cast<long>(e)});
    in[g.edges[e].child].push_back({g.edges[e].parent, static_cast<long>(e)});
  }
  for (std::size_t v = 0; v < g.num_nodes(); ++v) in[v].push_back({v, -1});
  return in;
}

// Node update of one layer for node i, written out per head and per arc.
inline std::vector<double> oracle_node_update(std::size_t i, const Mat& X, const Mat& E,
                                              const std::vector<std::pair<std::size_t, long>>& in,
                                              const AttentionLayerParams& p, const OracleOptions& o,
                                              std::vector<std::vector<double>>* weights = nullptr) {
  const std::size_t d = X[i].size();
  const std::size_t dh = d / o.heads;
  std::vector<std::vector<double>> keyed(in.size());
  for (std::size_t a = 0; a < in.size(); ++a) {
    keyed[a] = X[in[a].first];
    if (!o.no_edge_features && in[a].second >= 0) {
      for (std::size_t c = 0; c < d; ++c) keyed[a][c] *= E[static_cast<std::size_t>(in[a].second)][c];
    }
  }
  const auto q = vec_mat(X[i], p.w_query);
  std::vector<double> concat(d, 0.0);
  if (weights) weights->assign(in.size(), std::vector<double>(o.heads));
  for (std::size_t h = 0; h < o.heads; ++h) {
    std::vector<double> e(in.size());
    std::vector<std::vector<double>> v(in.size());
    for (std::size_t a = 0; a < in.size(); ++a) {
      const auto k = vec_mat(keyed[a], p.w_key);
      v[a] = vec_mat(keyed[a], p.w_value);
      double dot = 0.0;
      for (std::size_t c = h * dh; c < (h + 1) * dh; ++c) dot += q[c] * k[c];
      e[a] = dot / std::sqrt(static_cast<double>(dh));
    }
    std::vector<double> A(in.size());
    if (o.no_attention) {
      for (auto& w : A) w = 1.0 / static_cast<double>(in.size());
    } else {
      double mx = e[0];
      for (double s : e) mx = std::max(mx, s);
      double z = 0.0;
      for (std::size_t a = 0; a < in.size(); ++a) z += std::exp(e[a] - mx);
      for (std::size_t a = 0; a < in.size(); ++a) A[a] = std::exp(e[a] - mx) / z;
    }
    for (std::size_t a = 0; a < in.size(); ++a) {
      if (weights) (*weights)[a][h] = A[a];
      for (std::size_t c = h * dh; c < (h + 1) * dh; ++c) concat[c] += A[a] * v[a][c];
    }
  }
  const auto attn = vec_mat(concat, p.w_out);
  std::vector<double> r(d);
  for (std::size_t c = 0; c < d; ++c) r[c] = X[i][c] + attn[c];
  const auto h = layer_norm_vec(r, p.ln_attn);
  const auto ff = affine(gelu_vec(affine(h, p.ffn_in)), p.ffn_out);
  for (std::size_t c = 0; c < d; ++c) r[c] = h[c] + ff[c];
  return layer_norm_vec(r, p.ln_ffn);
}

// Center embedding of one graphlet in evaluation mode.
inline std::vector<double> oracle_encode(const Graphlet& g, const EncoderParams& p, const OracleOptions& o) {
  Mat X(g.num_nodes()), E(g.num_edges());
  for (std::size_t v = 0; v < g.num_nodes(); ++v) {
    X[v] = affine(std::vector<double>(g.nodes.row_span(v).begin(), g.nodes.row_span(v).end()), p.node_proj);
  }
  for (std::size_t e = 0; e < g.num_edges(); ++e) {
    const auto row = g.edge_features.row_span(e);
    E[e] = affine(std::vector<double>(row.begin(), row.end()), p.edge_proj);
  }
  const auto in = incoming(g);
  for (const auto& layer : p.layers) {
    Mat next(X.size());
    for (std::size_t v = 0; v < X.size(); ++v) next[v] = oracle_node_update(v, X, E, in[v], layer, o);
    if (!o.no_edge_features) {
      for (auto& row : E) row = layer_norm_vec(gelu_vec(vec_mat(row, layer.w_edge)), layer.ln_edge);
    }
    X = std::move(next);
  }
  return oracle_node_update(Graphlet::kCenter, X, E, in[Graphlet::kCenter], p.readout, o);
}

// Star graphlet with random node and edge features.
inline Graphlet random_star(std::size_t leaves, std::size_t dim, Rng& rng) {
  Graphlet g;
  g.nodes = Tensor::matrix(leaves + 1, dim);
  g.edge_features = Tensor::matrix(leaves, dim);
  for (auto& x : g.nodes.values()) x = rng.normal();
  for (auto& x : g.edge_features.values()) x = rng.normal();
  for (std::size_t l = 0; l < leaves; ++l) g.edges.push_back({0, l + 1});
  return g;
}

// Perturbs every parameter so layer norms and biases are not at their
// identity initialization.
template <class P>
void jitter(P& params, Rng& rng, double sd = 0.2) {
  for (Tensor* t : param_list(params))
    for (auto& x : t->values()) x += rng.normal(0.0, sd);
}

inline std::shared_ptr<EmbeddingTable> small_table(std::size_t dim = 4) {
  auto t = std::make_shared<EmbeddingTable>(dim);
  const char* words[] = {"city", "paris", "lyon", "name", "price", "size", "color", "red", "blue", "has", "population"};
  Rng rng(11);
  for (const char* w : words) {
    Vector v(dim);
    for (auto& x : v) x = rng.normal();
    t->insert(w, v);
  }
  return t;
}

// Per-test scratch directory under the build tree.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("carte_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

// Yeo-Johnson written from its definition, independent of the library.
inline double yj(double x, double l) {
  if (x >= 0) return std::abs(l) < 1e-12 ? std::log(x + 1) : (std::pow(x + 1, l) - 1) / l;
  return std::abs(l - 2) < 1e-12 ? -std::log(1 - x) : -(std::pow(1 - x, 2 - l) - 1) / (2 - l);
}

inline double profile_ll(const std::vector<double>& xs, double l) {
  const double n = static_cast<double>(xs.size());
  double m = 0, jac = 0;
  for (double x : xs) {
    m += yj(x, l);
    jac += (x >= 0 ? 1.0 : -1.0) * std::log(1 + std::abs(x));
  }
  m /= n;
  double v = 0;
  for (double x : xs) v += (yj(x, l) - m) * (yj(x, l) - m);
  v /= n;
  return -0.5 * n * std::log(v) + (l - 1) * jac;
}

inline double grid_lambda(const std::vector<double>& xs) {
  double best = -5, best_ll = -std::numeric_limits<double>::infinity();
  for (int i = 0; i <= 10000; ++i) {
    const double l = -5 + i * 0.001;
    const double ll = profile_ll(xs, l);
    if (ll > best_ll) {
      best_ll = ll;
      best = l;
    }
  }
  return best;
}

// AUROC by counting ordered (positive, negative) pairs, ties counting half.
inline double pair_count_auroc(const std::vector<double>& y, const std::vector<double>& s) {
  double wins = 0, pairs = 0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    for (std::size_t j = 0; j < y.size(); ++j) {
      if (y[i] == 1 && y[j] == 0) {
        pairs += 1;
        wins += s[i] > s[j] ? 1.0 : (s[i] == s[j] ? 0.5 : 0.0);
      }
    }
  }
  return wins / pairs;
}

}  // namespace carte::testing
