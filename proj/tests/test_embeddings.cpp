// Copyright (c) 2026, The carte-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <fstream>
#include <set>
#include <stdexcept>

#include "carte/embeddings.hpp"
#include "carte/rng.hpp"
#include "doctest.h"
#include "support.hpp"

using namespace carte;
using doctest::Approx;

TEST_SUITE("rng") {
  TEST_CASE("named streams are distinct and stable") {
    CHECK(derive_seed(1, "split", 0) != derive_seed(1, "split", 1));
    CHECK(derive_seed(1, "split") != derive_seed(1, "init"));
    CHECK(derive_seed(1, "split", 3) == derive_seed(1, "split", 3));
  }

  TEST_CASE("sequences repeat for a fixed seed") {
    Rng a(42), b(42);
    for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
  }

  TEST_CASE("normal draws have unit moments") {
    Rng rng(5);
    const int n = 200000;
    double s = 0, s2 = 0;
    for (int i = 0; i < n; ++i) {
      const double x = rng.normal();
      s += x;
      s2 += x * x;
    }
    CHECK(std::abs(s / n) < 0.01);
    CHECK(s2 / n == Approx(1.0).epsilon(0.01));
  }

  TEST_CASE("sampling without replacement") {
    Rng rng(9);
    const auto k = rng.sample_without_replacement(50, 20);
    CHECK(k.size() == 20);
    CHECK(std::set<std::size_t>(k.begin(), k.end()).size() == 20);
    for (auto i : k) CHECK(i < 50);
    CHECK_THROWS_AS(rng.sample_without_replacement(5, 9), std::invalid_argument);
  }
}

TEST_SUITE("embeddings") {
  TEST_CASE("plain vector file") {
    const auto t = parse_vectors("a 1 0\nb 0 1\n");
    CHECK(t.dim() == 2);
    CHECK(t.size() == 2);
    CHECK(*t.find("b") == Vector{0, 1});
  }

  TEST_CASE("header line and CRLF give the same table") {
    const auto plain = parse_vectors("a 1 0\nb 0 1\n");
    const auto headed = parse_vectors("2 2\r\na 1 0\r\nb 0 1\r\n");
    CHECK(headed.size() == plain.size());
    CHECK(*headed.find("a") == *plain.find("a"));
    CHECK(*headed.find("b") == *plain.find("b"));
  }

  TEST_CASE("dimension mismatch names the line") {
    try {
      parse_vectors("a 1 0\nb 0 1\nc 1 0 0\n");
      FAIL("expected a parse error");
    } catch (const ParseError& e) {
      CHECK(e.line() == 3);
    }
    CHECK_THROWS_AS(parse_vectors("a 1 x\n"), ParseError);
  }

  TEST_CASE("load from disk") {
    const auto dir = testing::scratch_dir("vectors");
    {
      std::ofstream f(dir / "v.txt");
      f << "2 3\nred 1 2 3\nblue -1 0 0.5\n";
    }
    const auto t = load_vectors(dir / "v.txt");
    CHECK(t.dim() == 3);
    CHECK(*t.find("blue") == Vector{-1, 0, 0.5});
  }

  TEST_CASE("fnv1a32 reference values") {
    CHECK(fnv1a32("") == 0x811c9dc5u);
    CHECK(fnv1a32("a") == 0xe40c292cu);
    CHECK(fnv1a32("foobar") == 0xbf9cf968u);
  }

  TEST_CASE("character n-grams of a short token") {
    const auto g = char_ngrams("ab", 3, 6);
    // "<ab>": <ab, ab>, <ab>
    CHECK(g == std::vector<std::string>{"<ab", "<ab>", "ab>"});
    // multi-byte code points count as one character
    CHECK(char_ngrams("\xc3\xa9", 3, 3) == std::vector<std::string>{"<\xc3\xa9>"});
  }

  const auto table = testing::small_table();
  StringEmbedder embedder(table);

  TEST_CASE("single in-vocabulary token is returned exactly") {
    CHECK(embedder.embed("paris") == *table->find("paris"));
    CHECK(embedder.embed("  Paris ") == *table->find("paris"));
  }

  TEST_CASE("two tokens average") {
    const auto got = embedder.embed("red, blue");
    const auto& r = *table->find("red");
    const auto& b = *table->find("blue");
    for (std::size_t k = 0; k < got.size(); ++k) CHECK(got[k] == Approx((r[k] + b[k]) / 2).epsilon(1e-15));
  }

  TEST_CASE("empty and punctuation-only strings embed to zero") {
    CHECK(embedder.embed("") == Vector(4, 0.0));
    CHECK(embedder.embed(" ,;- ") == Vector(4, 0.0));
  }

  TEST_CASE("token order does not matter") {
    const auto a = embedder.embed("red blue lyon zzqx");
    const auto b = embedder.embed("zzqx lyon blue red");
    for (std::size_t k = 0; k < a.size(); ++k) CHECK(a[k] == Approx(b[k]).epsilon(1e-14));
  }

  TEST_CASE("out-of-vocabulary strings are deterministic and non-zero") {
    const auto a = embedder.embed("qwertyuiop");
    StringEmbedder other(testing::small_table());
    CHECK(a == embedder.embed("qwertyuiop"));
    CHECK(a == other.embed("qwertyuiop"));
    double norm = 0;
    for (double x : a) norm += x * x;
    CHECK(norm > 0);
    // a different seed gives a different fallback
    auto reseeded = std::make_shared<EmbeddingTable>(4, 99);
    CHECK(StringEmbedder(reseeded).embed("qwertyuiop") != a);
  }

  TEST_CASE("oov bucket table has zero mean and unit variance") {
    const EmbeddingTable t(8);
    const std::size_t n = 20000;
    std::vector<double> s(8, 0.0), s2(8, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      const auto v = t.bucket_vector(fnv1a32("tok" + std::to_string(i)) % EmbeddingTable::kBuckets);
      for (std::size_t k = 0; k < 8; ++k) {
        s[k] += v[k];
        s2[k] += v[k] * v[k];
      }
    }
    for (std::size_t k = 0; k < 8; ++k) {
      const double mean = s[k] / n;
      CHECK(std::abs(mean) < 0.05);
      CHECK(std::abs(s2[k] / n - mean * mean - 1.0) < 0.05);
    }
  }

  TEST_CASE("numeric embedding scales the column vector") {
    const auto& col = *table->find("population");
    const auto v = embed_numeric(239, col);
    double nv = 0, nc = 0;
    for (std::size_t k = 0; k < v.size(); ++k) {
      CHECK(v[k] == 239 * col[k]);
      nv += v[k] * v[k];
      nc += col[k] * col[k];
    }
    CHECK(std::sqrt(nv) == Approx(239 * std::sqrt(nc)).epsilon(1e-14));
    CHECK(embed_numeric(0.0, col) == Vector(4, 0.0));
    CHECK(embed_numeric(1.0, col) == col);
    CHECK_THROWS_AS(embed_numeric(std::nan(""), col), std::domain_error);
  }

  TEST_CASE("norm identity holds for random values") {
    Rng rng(4);
    const auto& col = *table->find("size");
    for (int i = 0; i < 50; ++i) {
      const double v = rng.normal(0, 100);
      const auto e = embed_numeric(v, col);
      double ne = 0, nc = 0;
      for (std::size_t k = 0; k < e.size(); ++k) {
        ne += e[k] * e[k];
        nc += col[k] * col[k];
      }
      CHECK(std::sqrt(ne) == Approx(std::abs(v) * std::sqrt(nc)).epsilon(1e-13));
    }
  }
}
