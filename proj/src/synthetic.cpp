// Copyright (c) 2026, The carte-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#include "carte/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "carte/rng.hpp"

namespace carte::synthetic {

namespace {

// Pseudo-word domains; keeps the vocabularies disjoint.
enum Domain : std::size_t { kCityA = 0, kCityB = 1, kFiller = 2, kEntity = 3, kLiteral = 4 };

constexpr std::string_view kConsonants = "bdfgklmnprstvz";
constexpr std::string_view kVowels = "aeiou";

struct ColumnPair {
  const char* target_style;
  const char* source_style;
};

// Feature column names in synonym pairs; the last pair names the outcome.
constexpr ColumnPair kColumns[] = {{"origin", "departure"}, {"destination", "arrival"}, {"distance", "length"},
                                   {"carrier", "operator"}, {"load", "cargo"},          {"fare", "price"}};

constexpr const char* kRelations[] = {"located in", "born in",   "works for",   "part of",    "member of",
                                      "capital of", "near",      "founded by",  "owned by",   "produced by",
                                      "married to", "child of",  "genre",       "language",   "currency",
                                      "population", "area",      "founded in",  "award",      "occupation"};

Vector gaussian(std::size_t d, Rng& rng, double sd = 1.0) {
  Vector v(d);
  for (auto& x : v) x = rng.normal(0.0, sd);
  return v;
}

Vector plus_noise(const Vector& base, Rng& rng, double sd) {
  Vector v = base;
  for (auto& x : v) x += rng.normal(0.0, sd);
  return v;
}

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(8);
  os << v;
  return os.str();
}

constexpr double kDistanceLogMean = 6.2;  // about 500 km
constexpr double kDistanceLogSd = 0.6;

}  // namespace

std::string pseudo_word(std::size_t domain, std::size_t index) {
  const std::size_t syllables = kConsonants.size() * kVowels.size();
  constexpr std::size_t kLength = 4;
  constexpr std::size_t kPerDomain = 1'000'000;
  if (index >= kPerDomain) throw std::out_of_range("pseudo_word index too large");
  std::size_t n = domain * kPerDomain + index;
  // multiplicative scramble keeps neighbours from sharing prefixes; invertible
  // because 7919 is coprime to 70^4
  const std::size_t space = syllables * syllables * syllables * syllables;
  if (n >= space) throw std::out_of_range("pseudo_word domain too large");
  n = (n * 7919 + 12345) % space;
  std::string w;
  for (std::size_t i = 0; i < kLength; ++i) {
    const std::size_t s = n % syllables;
    n /= syllables;
    w.push_back(kConsonants[s / kVowels.size()]);
    w.push_back(kVowels[s % kVowels.size()]);
  }
  return w;
}

World make_world(const WorldOptions& o) {
  if (o.dim == 0 || o.cities < 2) throw std::invalid_argument("world needs dim > 0 and at least two cities");
  Rng rng(derive_seed(o.seed, "world"));
  auto table = std::make_shared<EmbeddingTable>(o.dim);
  World w;
  w.dim = o.dim;
  auto add = [&](std::string token, Vector v) {
    w.tokens.push_back(token);
    table->insert(std::move(token), std::move(v));
  };

  Vector direction = gaussian(o.dim, rng);
  const double norm = std::sqrt(std::inner_product(direction.begin(), direction.end(), direction.begin(), 0.0));
  for (auto& x : direction) x /= norm;

  for (std::size_t k = 0; k < o.cities; ++k) {
    const Vector latent = gaussian(o.dim, rng);
    w.city_effect.push_back(std::inner_product(latent.begin(), latent.end(), direction.begin(), 0.0));
    w.cities_a.push_back(pseudo_word(kCityA, k));
    w.cities_b.push_back(pseudo_word(kCityB, k));
    add(w.cities_a.back(), plus_noise(latent, rng, o.synonym_noise));
    add(w.cities_b.back(), plus_noise(latent, rng, o.synonym_noise));
  }
  const double n = static_cast<double>(o.cities);
  const double mean = std::accumulate(w.city_effect.begin(), w.city_effect.end(), 0.0) / n;
  double var = 0.0;
  for (double a : w.city_effect) var += (a - mean) * (a - mean);
  const double sd = std::sqrt(var / n);
  for (auto& a : w.city_effect) a = (a - mean) / sd;

  for (const auto& pair : kColumns) {
    const Vector latent = gaussian(o.dim, rng);
    add(pair.target_style, plus_noise(latent, rng, o.synonym_noise));
    add(pair.source_style, plus_noise(latent, rng, o.synonym_noise));
  }
  for (std::size_t k = 0; k < o.filler_words; ++k) {
    w.filler.push_back(pseudo_word(kFiller, k));
    add(w.filler.back(), gaussian(o.dim, rng));
  }
  w.table = std::move(table);
  return w;
}

TripColumns trip_columns(bool source_style) {
  auto pick = [&](std::size_t i) {
    return std::string(source_style ? kColumns[i].source_style : kColumns[i].target_style);
  };
  return {pick(0), pick(1), pick(2), pick(3), pick(4), pick(5)};
}

RawTable make_trips(const World& world, const TripOptions& o) {
  const std::size_t cities = world.city_effect.size();
  if (cities < 2) throw std::invalid_argument("world has fewer than two cities");
  if (world.filler.empty()) throw std::invalid_argument("world has no filler words");
  Rng rng(derive_seed(o.seed, "trips"));
  const auto& names = o.source_style ? world.cities_b : world.cities_a;
  const TripColumns cols = trip_columns(o.source_style);
  const std::size_t carriers = std::min<std::size_t>(8, world.filler.size());

  RawTable t;
  t.header = {cols.origin, cols.destination, cols.distance, cols.carrier, cols.load, cols.target};
  for (std::size_t r = 0; r < o.rows; ++r) {
    const std::size_t from = rng.index(cities);
    std::size_t to = rng.index(cities - 1);
    if (to >= from) ++to;
    const double log_distance = rng.normal(kDistanceLogMean, kDistanceLogSd);
    const double distance = std::round(std::exp(log_distance) * 10.0) / 10.0;
    const double signal = world.city_effect[from] - world.city_effect[to] +
                          0.7 * (std::log(distance) - kDistanceLogMean) / kDistanceLogSd;
    const double noisy = signal + rng.normal(0.0, o.noise);

    std::vector<std::string> row{names[from], names[to], fmt(distance), world.filler[rng.index(carriers)],
                                 fmt(std::round(rng.normal(20.0, 5.0) * 100.0) / 100.0)};
    for (auto& cell : row) {
      if (o.missing_rate > 0.0 && rng.uniform() < o.missing_rate) cell.clear();
    }
    row.push_back(o.classification ? (noisy > 0.0 ? "1" : "0") : fmt(o.shift + o.scale * noisy));
    t.rows.push_back(std::move(row));
  }
  return t;
}

std::vector<Triplet> toy_kg(const ToyKgOptions& o) {
  if (o.entities < 2 || o.relations == 0) throw std::invalid_argument("toy KG needs two entities and a relation");
  if (o.rich_min > o.rich_max || o.poor_min > o.poor_max || o.hub_min > o.hub_max || o.poor_min == 0) {
    throw std::invalid_argument("toy KG degree ranges are invalid");
  }
  Rng rng(derive_seed(o.seed, "toy-kg"));
  std::vector<std::string> relations;
  for (std::size_t r = 0; r < o.relations; ++r) {
    std::string name = kRelations[r % std::size(kRelations)];
    if (r >= std::size(kRelations)) name += " " + std::to_string(r);
    relations.push_back(std::move(name));
  }
  const std::size_t literals = std::max<std::size_t>(1, o.entities / 2);
  auto draw = [&](std::size_t lo, std::size_t hi) { return lo + rng.index(hi - lo + 1); };

  std::vector<Triplet> out;
  for (std::size_t e = 0; e < o.entities; ++e) {
    const double u = rng.uniform();
    std::size_t degree;
    if (u < o.hub_share) {
      degree = draw(o.hub_min, o.hub_max);
    } else if (rng.uniform() < o.rich_share) {
      degree = draw(o.rich_min, o.rich_max);
    } else {
      degree = draw(o.poor_min, o.poor_max);
    }
    const std::string head = pseudo_word(kEntity, e);
    for (std::size_t k = 0; k < degree; ++k) {
      const std::string& rel = relations[rng.index(relations.size())];
      std::string tail;
      if (rng.uniform() < o.literal_share) {
        tail = pseudo_word(kLiteral, rng.index(literals));
      } else {
        std::size_t other = rng.index(o.entities - 1);
        if (other >= e) ++other;
        tail = pseudo_word(kEntity, other);
      }
      out.push_back({head, rel, std::move(tail)});
    }
  }
  return out;
}

}  // namespace carte::synthetic
