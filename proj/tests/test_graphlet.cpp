// Copyright (c) 2026, The carte-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>
#include <vector>

#include "carte/graphlet.hpp"
#include "carte/synthetic.hpp"
#include "doctest.h"
#include "support.hpp"

using namespace carte;
using doctest::Approx;

namespace {

TableSchema ten_columns() {
  TableSchema s;
  s.target = "y";
  for (int c = 0; c < 10; ++c) {
    s.columns.push_back({"col" + std::to_string(c), c % 2 == 0 ? ColumnKind::numeric : ColumnKind::string});
  }
  return s;
}

Row ten_cells() {
  Row r;
  for (int c = 0; c < 10; ++c) {
    if (c % 2 == 0) {
      r.emplace_back(static_cast<double>(c) + 0.5);
    } else {
      r.emplace_back(std::string(c % 4 == 1 ? "red" : "lyon"));
    }
  }
  return r;
}

// Per-branch 2-hop counts and the center degree.
std::pair<std::size_t, std::size_t> hop_counts(const Graphlet& g) {
  std::map<std::size_t, std::size_t> per_branch;
  std::size_t center = 0;
  for (const auto& e : g.edges) {
    if (e.parent == Graphlet::kCenter) {
      ++center;
    } else {
      ++per_branch[e.parent];
    }
  }
  std::size_t worst = 0;
  for (const auto& [node, n] : per_branch) worst = std::max(worst, n);
  return {center, worst};
}

}  // namespace

TEST_SUITE("graphlet") {
  const auto table = testing::small_table();
  StringEmbedder embedder(table);

  TEST_CASE("one leaf per non-missing cell") {
    const auto schema = ten_columns();
    Row row = ten_cells();
    CHECK(row_to_graphlet(row, schema, embedder).num_leaves() == 10);
    row[3] = std::monostate{};
    const Graphlet g = row_to_graphlet(row, schema, embedder);
    CHECK(g.num_leaves() == 9);
    CHECK(g.center_degree() == 9);
    g.validate();
    for (std::size_t c = 0; c < 10; ++c) row[c] = std::monostate{};
    CHECK_THROWS_AS(row_to_graphlet(row, schema, embedder), std::invalid_argument);
  }

  TEST_CASE("leaf and edge features follow the cell kinds") {
    TableSchema schema{{{"price", ColumnKind::numeric}, {"city", ColumnKind::string}}, "y"};
    const Row row{2.5, std::string("Paris")};
    const Graphlet g = row_to_graphlet(row, schema, embedder);
    const auto& price = *table->find("price");
    const auto& paris = *table->find("paris");
    for (std::size_t k = 0; k < 4; ++k) {
      CHECK(g.nodes(1, k) == 2.5 * price[k]);
      CHECK(g.nodes(2, k) == paris[k]);
      CHECK(g.edge_features(0, k) == price[k]);
      CHECK(g.edge_features(1, k) == (*table->find("city"))[k]);
    }
  }

  TEST_CASE("numeric transforms are applied before embedding") {
    TableSchema schema{{{"price", ColumnKind::numeric}}, "y"};
    std::vector<std::optional<PowerTransform>> tr{PowerTransform{1.0, 2.0, 4.0}};
    const Graphlet g = row_to_graphlet(Row{10.0}, schema, embedder, tr);
    const auto& price = *table->find("price");
    CHECK(g.nodes(1, 0) == Approx(2.0 * price[0]).epsilon(1e-14));  // (10 - 2) / 4
  }

  TEST_CASE("center is the mean of the leaves") {
    const auto schema = ten_columns();
    const Graphlet g = row_to_graphlet(ten_cells(), schema, embedder);
    for (std::size_t k = 0; k < g.dim(); ++k) {
      double s = 0;
      for (std::size_t v = 1; v < g.num_nodes(); ++v) s += g.nodes(v, k);
      CHECK(g.nodes(0, k) == Approx(s / static_cast<double>(g.num_leaves())).epsilon(1e-14));
    }
  }

  TEST_CASE("column order only reindexes leaves") {
    auto schema = ten_columns();
    Row row = ten_cells();
    const Graphlet a = row_to_graphlet(row, schema, embedder);
    std::vector<std::size_t> perm{3, 7, 0, 9, 1, 5, 2, 8, 4, 6};
    TableSchema ps = schema;
    Row pr = row;
    for (std::size_t i = 0; i < perm.size(); ++i) {
      ps.columns[i] = schema.columns[perm[i]];
      pr[i] = row[perm[i]];
    }
    const Graphlet b = row_to_graphlet(pr, ps, embedder);
    auto canon = [](const Graphlet& g) {
      std::vector<std::vector<double>> leaves;
      for (std::size_t v = 1; v < g.num_nodes(); ++v) {
        std::vector<double> key(g.nodes.row_span(v).begin(), g.nodes.row_span(v).end());
        key.insert(key.end(), g.edge_features.row_span(v - 1).begin(), g.edge_features.row_span(v - 1).end());
        leaves.push_back(key);
      }
      std::sort(leaves.begin(), leaves.end());
      return leaves;
    };
    CHECK(canon(a) == canon(b));
    for (std::size_t k = 0; k < a.dim(); ++k) CHECK(a.nodes(0, k) == Approx(b.nodes(0, k)).epsilon(1e-14));
  }

  TEST_CASE("triplet parsing") {
    const auto t = parse_triplets("# comment\na\tborn in\tb\n\nb\tpart of\tc\r\n");
    REQUIRE(t.size() == 2);
    CHECK(t[1] == Triplet{"b", "part of", "c"});
    CHECK_THROWS_AS(parse_triplets("a\tb\n"), ParseError);
  }

  TEST_CASE("duplicate triplets are dropped") {
    const std::vector<Triplet> t{{"a", "r", "b"}, {"a", "r", "b"}, {"b", "s", "c"}};
    const auto kg = KnowledgeGraph::from_triplets(t);
    CHECK(kg.num_triplets() == 2);
    CHECK(kg.num_nodes() == 3);
    CHECK(kg.entities().size() == 2);
    CHECK(kg.degree(*kg.find("b")) == 2);
    CHECK(kg.outgoing(*kg.find("b")).size() == 1);
  }

  TEST_CASE("small entity keeps every relation and a has-name leaf") {
    const std::vector<Triplet> t{{"paris", "city", "red"}, {"paris", "size", "blue"}, {"paris", "color", "lyon"}};
    const auto kg = KnowledgeGraph::from_triplets(t);
    const KgFeaturizer feats(kg, embedder);
    Rng rng(1);
    const Graphlet g = kg_graphlet(kg, feats, "paris", {1, 100, 10}, rng);
    g.validate();
    CHECK(g.num_leaves() == 4);
    CHECK(g.labels[1] == "paris");
    for (std::size_t k = 0; k < 4; ++k) {
      CHECK(g.nodes(1, k) == (*table->find("paris"))[k]);
      CHECK(g.edge_features(0, k) == feats.has_name()[k]);
      // center token is the mean of the 1-hop nodes, name node included
      double s = 0;
      for (std::size_t v = 1; v < 5; ++v) s += g.nodes(v, k);
      CHECK(g.nodes(0, k) == Approx(s / 4).epsilon(1e-14));
    }
    CHECK_THROWS_AS(kg_graphlet(kg, feats, "nowhere", {}, rng), std::out_of_range);
  }

  TEST_CASE("caps hold on hub entities") {
    synthetic::ToyKgOptions o;
    o.entities = 300;
    o.hub_share = 0.2;
    const auto kg = KnowledgeGraph::from_triplets(synthetic::toy_kg(o));
    const auto world = synthetic::make_world({});
    const KgFeaturizer feats(kg, world.embedder());
    Rng rng(2);
    std::size_t hubs = 0;
    for (std::size_t e : kg.entities()) {
      const Graphlet g = kg_graphlet(kg, feats, e, {}, rng);
      const auto [center, branch] = hop_counts(g);
      CHECK(center <= 101);
      CHECK(branch <= 10);
      if (kg.degree(e) >= 150) {
        ++hubs;
        CHECK(center == 101);
      }
    }
    CHECK(hubs > 20);
  }

  TEST_CASE("graphlet sampling is deterministic") {
    const auto kg = KnowledgeGraph::from_triplets(synthetic::toy_kg({}));
    const auto world = synthetic::make_world({});
    const KgFeaturizer feats(kg, world.embedder());
    Rng a(5), b(5);
    const auto e = kg.entities()[17];
    const Graphlet ga = kg_graphlet(kg, feats, e, {}, a);
    const Graphlet gb = kg_graphlet(kg, feats, e, {}, b);
    CHECK(ga.nodes == gb.nodes);
    CHECK(ga.edge_features == gb.edge_features);
    CHECK(ga.labels == gb.labels);
  }

  TEST_CASE("truncation removes floor(f c) center edges") {
    Rng rng(3);
    const Graphlet star = testing::random_star(10, 4, rng);
    const Graphlet half = truncate_with_fraction(star, 0.5, rng);
    CHECK(half.num_leaves() == 5);
    for (int i = 0; i < 200; ++i) {
      Rng peek = rng;
      const double f = peek.uniform(0.3, 0.7);
      const Graphlet t = truncate(star, rng);
      CHECK(t.center_degree() == 10 - static_cast<std::size_t>(std::floor(f * 10)));
    }
  }

  TEST_CASE("truncation keeps a leaf and leaves survivors untouched") {
    Rng rng(4);
    const Graphlet two = testing::random_star(2, 3, rng);
    for (int i = 0; i < 50; ++i) CHECK(truncate(two, rng).num_leaves() >= 1);
    CHECK(truncate_with_fraction(two, 0.99, rng).num_leaves() == 1);
    CHECK_THROWS_AS(truncate(testing::random_star(1, 3, rng), rng), std::invalid_argument);

    const Graphlet star = testing::random_star(8, 3, rng);
    const Graphlet t = truncate(star, rng);
    for (std::size_t v = 1; v < t.num_nodes(); ++v) {
      bool found = false;
      for (std::size_t u = 1; u < star.num_nodes() && !found; ++u) {
        found = std::equal(t.nodes.row_span(v).begin(), t.nodes.row_span(v).end(), star.nodes.row_span(u).begin());
      }
      CHECK(found);
    }
  }

  TEST_CASE("truncating kg graphlets drops whole subtrees") {
    const auto kg = KnowledgeGraph::from_triplets(synthetic::toy_kg({}));
    const auto world = synthetic::make_world({});
    const KgFeaturizer feats(kg, world.embedder());
    Rng rng(6);
    for (std::size_t i = 0; i < 200; ++i) {
      const Graphlet g = kg_graphlet(kg, feats, kg.entities()[i], {}, rng);
      if (g.center_degree() < 2) continue;
      const Graphlet t = truncate(g, rng);
      t.validate();  // connected tree rooted at the center
      CHECK(t.center_degree() >= 1);
      CHECK(t.dim() == t.edge_features.cols());
    }
  }
}
