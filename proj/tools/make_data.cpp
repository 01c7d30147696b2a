// Copyright (c) 2026, The carte-cpp Authors
// SPDX-License-Identifier: Apache-2.0

// Writes the bundled word vectors and the sample tables and knowledge graph
// used by the README walkthrough.

#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "carte/synthetic.hpp"

namespace fs = std::filesystem;
using namespace carte;

int main(int argc, char** argv) {
  CLI::App app{"carte_make_data: generate the bundled vectors and sample data"};
  std::string dir = "data";
  std::uint64_t seed = 1;
  std::size_t dim = 32;
  app.add_option("--out-dir", dir, "Output directory")->capture_default_str();
  app.add_option("--seed", seed, "World seed")->capture_default_str();
  app.add_option("--dim", dim, "Vector dimension")->capture_default_str();
  CLI11_PARSE(app, argc, argv);

  try {
    fs::create_directories(dir);
    synthetic::WorldOptions wo;
    wo.dim = dim;
    wo.seed = seed;
    const auto world = synthetic::make_world(wo);
    save_vectors(*world.table, world.tokens, fs::path(dir) / "tiny_vectors.txt");

    std::ofstream kg(fs::path(dir) / "toy_kg.tsv");
    synthetic::ToyKgOptions ko;
    ko.seed = seed;
    for (const auto& t : synthetic::toy_kg(ko)) kg << t.head << '\t' << t.relation << '\t' << t.tail << '\n';

    auto trips = [&](const char* name, std::size_t rows, bool source, std::uint64_t s, bool classification = false) {
      synthetic::TripOptions o;
      o.rows = rows;
      o.source_style = source;
      o.seed = s;
      o.classification = classification;
      if (source) {
        o.scale = 40.0;
        o.shift = 200.0;
      }
      write_csv(synthetic::make_trips(world, o), fs::path(dir) / name);
    };
    trips("trips_train.csv", 512, false, seed * 100 + 1);
    trips("trips_test.csv", 512, false, seed * 100 + 2);
    trips("trips_small.csv", 64, false, seed * 100 + 3);
    trips("trips_source.csv", 1024, true, seed * 100 + 4);
    trips("trips_classification.csv", 512, false, seed * 100 + 5, true);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  std::cout << "wrote sample data to " << dir << "\n";
  return 0;
}
