// Copyright (c) 2026, The carte-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "carte/data_io.hpp"
#include "carte/embeddings.hpp"
#include "carte/graphlet.hpp"

/// Generators for controlled experiments: a small word-vector world with
/// synonym structure, trip tables whose outcome depends on embedded strings,
/// and toy knowledge graphs.
namespace carte::synthetic {

struct WorldOptions {
  std::size_t dim = 32;
  std::size_t cities = 100;
  std::size_t filler_words = 60;
  /// Standard deviation of the per-word offset added to a shared concept
  /// vector; synonyms differ only by this offset.
  double synonym_noise = 0.25;
  std::uint64_t seed = 1;
};

/// Every city concept has two surface forms, one per vocabulary, that share a
/// latent vector. Column names come in synonym pairs the same way.
struct World {
  std::size_t dim = 0;
  std::vector<std::string> cities_a;
  std::vector<std::string> cities_b;
  std::vector<double> city_effect;  // standardized, indexed like the cities
  std::vector<std::string> filler;
  std::vector<std::string> tokens;  // every word in the table, in insertion order
  std::shared_ptr<const EmbeddingTable> table;

  StringEmbedder embedder() const { return StringEmbedder(table); }
};

World make_world(const WorldOptions& options = {});

struct TripOptions {
  std::size_t rows = 512;
  /// Source style: second city vocabulary and renamed columns.
  bool source_style = false;
  /// Outcome = shift + scale * (signal + noise).
  double scale = 1.0;
  double shift = 0.0;
  double noise = 0.3;
  double missing_rate = 0.0;
  bool classification = false;  // label = signal + noise > 0
  std::uint64_t seed = 1;
};

/// Column names of one table style.
struct TripColumns {
  std::string origin, destination, distance, carrier, load, target;
};
TripColumns trip_columns(bool source_style);

/// Trips between cities. The outcome is a(origin) - a(destination) plus a
/// distance effect, where a is a linear function of the city's latent vector;
/// carrier and load are distractors. Origin and destination share one
/// vocabulary, so only the column name tells their roles apart.
RawTable make_trips(const World& world, const TripOptions& options);

struct ToyKgOptions {
  std::size_t entities = 1000;
  std::size_t relations = 20;
  double rich_share = 0.7;
  std::size_t rich_min = 6, rich_max = 12;
  std::size_t poor_min = 1, poor_max = 5;
  /// Share of hub entities with hub_min..hub_max outgoing relations.
  double hub_share = 0.0;
  std::size_t hub_min = 150, hub_max = 250;
  /// Probability that a tail is a literal value rather than an entity.
  double literal_share = 0.5;
  std::uint64_t seed = 1;
};

/// Entities with a mixture of out-degrees; tails are other entities or
/// literal values. Entity names are pronounceable pseudo-words.
std::vector<Triplet> toy_kg(const ToyKgOptions& options = {});

/// Deterministic pronounceable word; distinct (domain, index) pairs give
/// distinct words.
std::string pseudo_word(std::size_t domain, std::size_t index);

}  // namespace carte::synthetic
