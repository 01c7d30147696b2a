// Copyright (c) 2026, The carte-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <variant>
#include <vector>

#include "carte/embeddings.hpp"
#include "carte/power_transform.hpp"
#include "carte/rng.hpp"
#include "carte/tensor.hpp"

namespace carte {

enum class ColumnKind { numeric, string };

struct Column {
  std::string name;
  ColumnKind kind = ColumnKind::string;

  friend bool operator==(const Column&, const Column&) = default;
};

/// Feature columns of a table; the target column is held by name only.
struct TableSchema {
  std::vector<Column> columns;
  std::string target;

  /// Throws std::invalid_argument on duplicate names or a feature column
  /// named like the target.
  void validate() const;
  std::optional<std::size_t> index_of(std::string_view name) const;

  friend bool operator==(const TableSchema&, const TableSchema&) = default;
};

/// Missing, numeric or string cell.
using Cell = std::variant<std::monostate, double, std::string>;
using Row = std::vector<Cell>;

bool is_missing(const Cell& cell);

/// Attributed graph with the readout node at index 0. Edges are undirected and
/// stored once, oriented parent -> child away from the center.
struct Graphlet {
  struct Edge {
    std::size_t parent;
    std::size_t child;
  };

  static constexpr std::size_t kCenter = 0;

  Tensor nodes;           // N x d
  std::vector<Edge> edges;
  Tensor edge_features;   // |edges| x d
  std::vector<std::string> labels;

  std::size_t num_nodes() const { return nodes.rows(); }
  std::size_t num_edges() const { return edges.size(); }
  std::size_t dim() const { return nodes.cols(); }
  std::size_t num_leaves() const { return num_nodes() - 1; }
  std::size_t center_degree() const;

  /// Throws std::invalid_argument if the structural invariants do not hold.
  void validate() const;
};

/// Star graphlet of one table row: one leaf per non-missing cell, the column
/// name on the edge, the center initialized to the mean of the leaves.
/// numeric_transforms, when non-empty, is indexed like schema.columns.
Graphlet row_to_graphlet(const Row& row, const TableSchema& schema, const StringEmbedder& embedder,
                         std::span<const std::optional<PowerTransform>> numeric_transforms = {});

struct Triplet {
  std::string head;
  std::string relation;
  std::string tail;

  friend bool operator==(const Triplet&, const Triplet&) = default;
};

/// UTF-8 TSV, one `head<TAB>relation<TAB>tail` per line; `#` lines and blank
/// lines are skipped. Malformed lines raise ParseError.
std::vector<Triplet> parse_triplets(std::string_view text);
std::vector<Triplet> load_triplets(const std::filesystem::path& path);

class KnowledgeGraph {
 public:
  struct Neighbor {
    std::uint32_t relation;
    std::uint32_t node;
  };

  /// Duplicate triplets are dropped; first-seen order is kept.
  static KnowledgeGraph from_triplets(std::span<const Triplet> triplets);

  std::size_t num_nodes() const noexcept { return names_.size(); }
  std::size_t num_relations() const noexcept { return relations_.size(); }
  std::size_t num_triplets() const noexcept { return triplets_.size(); }
  bool empty() const noexcept { return triplets_.empty(); }

  const std::string& name(std::size_t node) const { return names_.at(node); }
  const std::string& relation_name(std::size_t relation) const { return relations_.at(relation); }
  std::optional<std::size_t> find(std::string_view name) const;

  /// Entities are the nodes that appear as a head.
  const std::vector<std::size_t>& entities() const noexcept { return entities_; }
  std::span<const Neighbor> outgoing(std::size_t node) const;
  /// Undirected neighbourhood: outgoing plus incoming relations.
  std::span<const Neighbor> neighbors(std::size_t node) const;
  std::size_t degree(std::size_t node) const { return neighbors(node).size(); }

  struct IndexedTriplet {
    std::uint32_t head, relation, tail;
  };
  const std::vector<IndexedTriplet>& triplets() const noexcept { return triplets_; }

 private:
  std::vector<std::string> names_;
  std::vector<std::string> relations_;
  std::unordered_map<std::string, std::uint32_t> name_index_;
  std::vector<IndexedTriplet> triplets_;
  std::vector<std::size_t> entities_;
  std::vector<std::vector<Neighbor>> outgoing_;
  std::vector<std::vector<Neighbor>> neighbors_;
};

/// Cached node and relation embeddings for a knowledge graph.
class KgFeaturizer {
 public:
  KgFeaturizer(const KnowledgeGraph& kg, const StringEmbedder& embedder);

  std::size_t dim() const noexcept { return dim_; }
  const Vector& node(std::size_t id) const { return nodes_.at(id); }
  const Vector& relation(std::size_t id) const { return relations_.at(id); }
  const Vector& has_name() const noexcept { return has_name_; }

 private:
  std::size_t dim_;
  std::vector<Vector> nodes_;
  std::vector<Vector> relations_;
  Vector has_name_;
};

struct KgGraphletOptions {
  std::size_t hops = 2;
  std::size_t cap1 = 100;
  std::size_t cap2 = 10;
};

/// Capped k-hop graphlet around an entity. Node 0 is a token whose feature is
/// the mean of its 1-hop neighbours; node 1 carries the entity name through a
/// "has name" relation. 1-hop relations are sampled uniformly without
/// replacement up to cap1, and up to cap2 2-hop relations per 1-hop node.
Graphlet kg_graphlet(const KnowledgeGraph& kg, const KgFeaturizer& features, std::size_t entity,
                     const KgGraphletOptions& options, Rng& rng);
Graphlet kg_graphlet(const KnowledgeGraph& kg, const KgFeaturizer& features, std::string_view entity,
                     const KgGraphletOptions& options, Rng& rng);

/// Contrastive positive: deletes floor(f * c) of the c center-adjacent edges
/// (with their subtrees), f ~ U[0.3, 0.7], and re-centres node 0 on the
/// surviving 1-hop nodes.
Graphlet truncate(const Graphlet& graphlet, Rng& rng);
/// Same with an explicit fraction f in [0, 1).
Graphlet truncate_with_fraction(const Graphlet& graphlet, double fraction, Rng& rng);

}  // namespace carte
