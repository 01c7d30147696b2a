// Copyright (c) 2026, The carte-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#include "carte/graphlet.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

namespace carte {

namespace {

std::string format_number(double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

void set_row(Tensor& t, std::size_t r, std::span<const double> v) {
  std::copy(v.begin(), v.end(), t.row_span(r).begin());
}

}  // namespace

void TableSchema::validate() const {
  std::unordered_set<std::string> seen;
  for (const auto& c : columns) {
    if (!seen.insert(c.name).second) throw std::invalid_argument("duplicate column name '" + c.name + "'");
    if (!target.empty() && c.name == target) {
      throw std::invalid_argument("target column '" + target + "' listed as a feature");
    }
  }
}

std::optional<std::size_t> TableSchema::index_of(std::string_view name) const {
  for (std::size_t i = 0; i < columns.size(); ++i) {
    if (columns[i].name == name) return i;
  }
  return std::nullopt;
}

bool is_missing(const Cell& cell) { return std::holds_alternative<std::monostate>(cell); }

std::size_t Graphlet::center_degree() const {
  return static_cast<std::size_t>(
      std::count_if(edges.begin(), edges.end(), [](const Edge& e) { return e.parent == kCenter; }));
}

void Graphlet::validate() const {
  if (nodes.rank() != 2 || nodes.rows() == 0) throw std::invalid_argument("graphlet has no nodes");
  const std::size_t n = nodes.rows();
  if (edge_features.rows() != edges.size() || (!edges.empty() && edge_features.cols() != nodes.cols())) {
    throw std::invalid_argument("graphlet edge features are " + shape_string(edge_features.shape()) + " for " +
                                std::to_string(edges.size()) + " edges of dimension " + std::to_string(nodes.cols()));
  }
  if (!labels.empty() && labels.size() != n) throw std::invalid_argument("graphlet label count differs from node count");
  std::vector<int> parent_count(n, 0);
  std::vector<std::vector<std::size_t>> children(n);
  for (const auto& e : edges) {
    if (e.parent >= n || e.child >= n || e.parent == e.child) {
      throw std::invalid_argument("graphlet edge (" + std::to_string(e.parent) + ", " + std::to_string(e.child) +
                                  ") is out of range or a loop");
    }
    if (e.child == kCenter) throw std::invalid_argument("graphlet edge points at the center");
    ++parent_count[e.child];
    children[e.parent].push_back(e.child);
  }
  for (std::size_t v = 1; v < n; ++v) {
    if (parent_count[v] != 1) {
      throw std::invalid_argument("graphlet node " + std::to_string(v) + " has " + std::to_string(parent_count[v]) +
                                  " parent edges");
    }
  }
  std::vector<bool> seen(n, false);
  std::vector<std::size_t> stack{kCenter};
  seen[kCenter] = true;
  std::size_t reached = 1;
  while (!stack.empty()) {
    const std::size_t v = stack.back();
    stack.pop_back();
    for (std::size_t c : children[v]) {
      if (!seen[c]) {
        seen[c] = true;
        ++reached;
        stack.push_back(c);
      }
    }
  }
  if (reached != n) throw std::invalid_argument("graphlet is not connected");
}

Graphlet row_to_graphlet(const Row& row, const TableSchema& schema, const StringEmbedder& embedder,
                         std::span<const std::optional<PowerTransform>> numeric_transforms) {
  if (row.size() != schema.columns.size()) {
    throw std::invalid_argument("row has " + std::to_string(row.size()) + " cells, schema has " +
                                std::to_string(schema.columns.size()) + " columns");
  }
  if (!numeric_transforms.empty() && numeric_transforms.size() != schema.columns.size()) {
    throw std::invalid_argument("numeric transform count differs from column count");
  }
  const std::size_t d = embedder.dim();
  std::vector<Vector> leaves;
  std::vector<Vector> edge_feats;
  std::vector<std::string> labels{"<row>"};
  for (std::size_t c = 0; c < row.size(); ++c) {
    const Cell& cell = row[c];
    if (is_missing(cell)) continue;
    const Column& col = schema.columns[c];
    Vector name_vec = embedder.embed(col.name);
    if (col.kind == ColumnKind::numeric) {
      const double* v = std::get_if<double>(&cell);
      if (!v) throw std::invalid_argument("non-numeric cell in numeric column '" + col.name + "'");
      double x = *v;
      if (!numeric_transforms.empty() && numeric_transforms[c]) x = numeric_transforms[c]->apply(x);
      leaves.push_back(embed_numeric(x, name_vec));
    } else if (const auto* s = std::get_if<std::string>(&cell)) {
      leaves.push_back(embedder.embed(*s));
    } else {
      leaves.push_back(embedder.embed(format_number(std::get<double>(cell))));
    }
    edge_feats.push_back(std::move(name_vec));
    labels.push_back(col.name);
  }
  if (leaves.empty()) throw std::invalid_argument("row has no non-missing cells");

  Graphlet g;
  g.nodes = Tensor::matrix(leaves.size() + 1, d);
  g.edge_features = Tensor::matrix(leaves.size(), d);
  for (std::size_t i = 0; i < leaves.size(); ++i) {
    set_row(g.nodes, i + 1, leaves[i]);
    set_row(g.edge_features, i, edge_feats[i]);
    g.edges.push_back({Graphlet::kCenter, i + 1});
    for (std::size_t k = 0; k < d; ++k) g.nodes(0, k) += leaves[i][k];
  }
  for (std::size_t k = 0; k < d; ++k) g.nodes(0, k) /= static_cast<double>(leaves.size());
  g.labels = std::move(labels);
  return g;
}

std::vector<Triplet> parse_triplets(std::string_view text) {
  std::vector<Triplet> out;
  std::size_t pos = 0, line_no = 0;
  while (pos < text.size()) {
    std::size_t eol = text.find('\n', pos);
    if (eol == std::string_view::npos) eol = text.size();
    std::string_view line = text.substr(pos, eol - pos);
    pos = eol + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty() || line.front() == '#') continue;
    const std::size_t t1 = line.find('\t');
    const std::size_t t2 = t1 == std::string_view::npos ? t1 : line.find('\t', t1 + 1);
    if (t2 == std::string_view::npos || line.find('\t', t2 + 1) != std::string_view::npos) {
      throw ParseError("expected head<TAB>relation<TAB>tail", line_no);
    }
    Triplet t{std::string(line.substr(0, t1)), std::string(line.substr(t1 + 1, t2 - t1 - 1)),
              std::string(line.substr(t2 + 1))};
    if (t.head.empty() || t.relation.empty() || t.tail.empty()) throw ParseError("empty triplet field", line_no);
    out.push_back(std::move(t));
  }
  return out;
}

std::vector<Triplet> load_triplets(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open triplet file " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_triplets(buf.str());
}

KnowledgeGraph KnowledgeGraph::from_triplets(std::span<const Triplet> triplets) {
  KnowledgeGraph kg;
  std::unordered_map<std::string, std::uint32_t> rel_index;
  auto intern_node = [&](const std::string& name) {
    auto [it, inserted] = kg.name_index_.try_emplace(name, static_cast<std::uint32_t>(kg.names_.size()));
    if (inserted) kg.names_.push_back(name);
    return it->second;
  };
  auto intern_rel = [&](const std::string& name) {
    auto [it, inserted] = rel_index.try_emplace(name, static_cast<std::uint32_t>(kg.relations_.size()));
    if (inserted) kg.relations_.push_back(name);
    return it->second;
  };
  std::unordered_set<std::uint64_t> seen_heads;
  struct Key {
    std::uint32_t h, r, t;
    bool operator==(const Key&) const = default;
  };
  struct KeyHash {
    std::size_t operator()(const Key& k) const noexcept {
      return splitmix64((std::uint64_t{k.h} << 32) ^ (std::uint64_t{k.r} << 16) ^ k.t ^ (std::uint64_t{k.r} << 48));
    }
  };
  std::unordered_set<Key, KeyHash> seen;
  for (const auto& t : triplets) {
    const Key k{intern_node(t.head), intern_rel(t.relation), intern_node(t.tail)};
    if (!seen.insert(k).second) continue;
    kg.triplets_.push_back({k.h, k.r, k.t});
  }
  kg.outgoing_.resize(kg.names_.size());
  kg.neighbors_.resize(kg.names_.size());
  for (const auto& t : kg.triplets_) {
    kg.outgoing_[t.head].push_back({t.relation, t.tail});
    kg.neighbors_[t.head].push_back({t.relation, t.tail});
    if (t.tail != t.head) kg.neighbors_[t.tail].push_back({t.relation, t.head});
    if (seen_heads.insert(t.head).second) kg.entities_.push_back(t.head);
  }
  return kg;
}

std::optional<std::size_t> KnowledgeGraph::find(std::string_view name) const {
  auto it = name_index_.find(std::string(name));
  if (it == name_index_.end()) return std::nullopt;
  return it->second;
}

std::span<const KnowledgeGraph::Neighbor> KnowledgeGraph::outgoing(std::size_t node) const {
  return outgoing_.at(node);
}

std::span<const KnowledgeGraph::Neighbor> KnowledgeGraph::neighbors(std::size_t node) const {
  return neighbors_.at(node);
}

KgFeaturizer::KgFeaturizer(const KnowledgeGraph& kg, const StringEmbedder& embedder) : dim_(embedder.dim()) {
  nodes_.reserve(kg.num_nodes());
  for (std::size_t i = 0; i < kg.num_nodes(); ++i) nodes_.push_back(embedder.embed(kg.name(i)));
  relations_.reserve(kg.num_relations());
  for (std::size_t i = 0; i < kg.num_relations(); ++i) relations_.push_back(embedder.embed(kg.relation_name(i)));
  has_name_ = embedder.embed("has name");
}

Graphlet kg_graphlet(const KnowledgeGraph& kg, const KgFeaturizer& features, std::size_t entity,
                     const KgGraphletOptions& options, Rng& rng) {
  if (entity >= kg.num_nodes()) throw std::out_of_range("unknown entity id " + std::to_string(entity));
  if (options.hops == 0) throw std::invalid_argument("kg_graphlet needs hops >= 1");
  const std::size_t d = features.dim();

  std::vector<const Vector*> node_feats{nullptr, &features.node(entity)};
  std::vector<const Vector*> edge_feats{&features.has_name()};
  std::vector<Graphlet::Edge> edges{{Graphlet::kCenter, 1}};
  std::vector<std::string> labels{"<token>", kg.name(entity)};

  struct Frontier {
    std::size_t graph_node;
    std::size_t kg_node;
    std::size_t kg_parent;
  };
  std::vector<Frontier> frontier;

  const auto first = kg.neighbors(entity);
  auto picks = rng.sample_without_replacement(first.size(), std::min(first.size(), options.cap1));
  std::sort(picks.begin(), picks.end());
  for (std::size_t p : picks) {
    const auto& nb = first[p];
    const std::size_t id = node_feats.size();
    node_feats.push_back(&features.node(nb.node));
    edge_feats.push_back(&features.relation(nb.relation));
    edges.push_back({Graphlet::kCenter, id});
    labels.push_back(kg.name(nb.node));
    frontier.push_back({id, nb.node, entity});
  }

  // deeper hops never walk straight back to the node they came from
  std::vector<KnowledgeGraph::Neighbor> candidates;
  for (std::size_t hop = 2; hop <= options.hops; ++hop) {
    std::vector<Frontier> next;
    for (const auto& f : frontier) {
      candidates.clear();
      for (const auto& nb : kg.neighbors(f.kg_node)) {
        if (nb.node != f.kg_parent) candidates.push_back(nb);
      }
      auto sel = rng.sample_without_replacement(candidates.size(), std::min(candidates.size(), options.cap2));
      std::sort(sel.begin(), sel.end());
      for (std::size_t s : sel) {
        const auto& nb = candidates[s];
        const std::size_t id = node_feats.size();
        node_feats.push_back(&features.node(nb.node));
        edge_feats.push_back(&features.relation(nb.relation));
        edges.push_back({f.graph_node, id});
        labels.push_back(kg.name(nb.node));
        next.push_back({id, nb.node, f.kg_node});
      }
    }
    frontier = std::move(next);
  }

  Graphlet g;
  g.nodes = Tensor::matrix(node_feats.size(), d);
  g.edge_features = Tensor::matrix(edges.size(), d);
  std::size_t first_hop = 0;
  for (std::size_t i = 0; i < edges.size(); ++i) {
    set_row(g.edge_features, i, *edge_feats[i]);
    const auto& v = *node_feats[edges[i].child];
    set_row(g.nodes, edges[i].child, v);
    if (edges[i].parent == Graphlet::kCenter) {
      ++first_hop;
      for (std::size_t k = 0; k < d; ++k) g.nodes(0, k) += v[k];
    }
  }
  for (std::size_t k = 0; k < d; ++k) g.nodes(0, k) /= static_cast<double>(first_hop);
  g.edges = std::move(edges);
  g.labels = std::move(labels);
  return g;
}

Graphlet kg_graphlet(const KnowledgeGraph& kg, const KgFeaturizer& features, std::string_view entity,
                     const KgGraphletOptions& options, Rng& rng) {
  const auto id = kg.find(entity);
  if (!id) throw std::out_of_range("unknown entity '" + std::string(entity) + "'");
  return kg_graphlet(kg, features, *id, options, rng);
}

Graphlet truncate_with_fraction(const Graphlet& graphlet, double fraction, Rng& rng) {
  if (graphlet.num_nodes() < 3) {
    throw std::invalid_argument("truncate needs at least 2 leaves, graphlet has " +
                                std::to_string(graphlet.num_nodes() - 1));
  }
  if (!(fraction >= 0.0 && fraction < 1.0)) throw std::invalid_argument("truncation fraction must be in [0, 1)");
  const std::size_t n = graphlet.num_nodes();
  const std::size_t d = graphlet.dim();

  std::vector<std::size_t> center_edges;
  std::vector<std::vector<std::size_t>> children(n);
  for (std::size_t i = 0; i < graphlet.edges.size(); ++i) {
    const auto& e = graphlet.edges[i];
    if (e.parent == Graphlet::kCenter) center_edges.push_back(i);
    children[e.parent].push_back(e.child);
  }
  const std::size_t c = center_edges.size();
  std::size_t k = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(c)));
  k = std::min(k, c - 1);

  std::vector<bool> removed(n, false);
  for (std::size_t pick : rng.sample_without_replacement(c, k)) {
    std::vector<std::size_t> stack{graphlet.edges[center_edges[pick]].child};
    while (!stack.empty()) {
      const std::size_t v = stack.back();
      stack.pop_back();
      removed[v] = true;
      for (std::size_t ch : children[v]) stack.push_back(ch);
    }
  }

  std::vector<std::size_t> remap(n, 0);
  std::size_t kept = 0;
  for (std::size_t v = 0; v < n; ++v) {
    if (!removed[v]) remap[v] = kept++;
  }
  Graphlet out;
  out.nodes = Tensor::matrix(kept, d);
  for (std::size_t v = 0; v < n; ++v) {
    if (!removed[v]) set_row(out.nodes, remap[v], graphlet.nodes.row_span(v));
  }
  std::size_t kept_edges = 0;
  for (const auto& e : graphlet.edges) kept_edges += removed[e.child] ? 0 : 1;
  out.edge_features = Tensor::matrix(kept_edges, d);
  std::fill(out.nodes.row_span(0).begin(), out.nodes.row_span(0).end(), 0.0);
  std::size_t first_hop = 0;
  for (std::size_t i = 0; i < graphlet.edges.size(); ++i) {
    const auto& e = graphlet.edges[i];
    if (removed[e.child]) continue;
    set_row(out.edge_features, out.edges.size(), graphlet.edge_features.row_span(i));
    out.edges.push_back({remap[e.parent], remap[e.child]});
    if (e.parent == Graphlet::kCenter) {
      ++first_hop;
      const auto leaf = graphlet.nodes.row_span(e.child);
      for (std::size_t j = 0; j < d; ++j) out.nodes(0, j) += leaf[j];
    }
  }
  for (std::size_t j = 0; j < d; ++j) out.nodes(0, j) /= static_cast<double>(first_hop);
  if (!graphlet.labels.empty()) {
    for (std::size_t v = 0; v < n; ++v) {
      if (!removed[v]) out.labels.push_back(graphlet.labels[v]);
    }
  }
  return out;
}

Graphlet truncate(const Graphlet& graphlet, Rng& rng) {
  const double f = rng.uniform(0.3, 0.7);
  return truncate_with_fraction(graphlet, f, rng);
}

}  // namespace carte
