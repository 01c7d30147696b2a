// Copyright (c) 2026, The carte-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <mutex>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace carte {

using Vector = std::vector<double>;

/// Error while reading a text file; carries the 1-based line number.
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : std::runtime_error(what + " (line " + std::to_string(line) + ")"), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

inline constexpr std::uint64_t kDefaultOovSeed = 0x5eedULL;

/// Token -> d-dimensional vector store. Out-of-vocabulary tokens are handled
/// by StringEmbedder through hashed character n-grams drawn from a seeded
/// pseudo-random bucket table; the table itself is never materialized.
class EmbeddingTable {
 public:
  static constexpr std::uint32_t kBuckets = 2'000'000;

  explicit EmbeddingTable(std::size_t dim, std::uint64_t oov_seed = kDefaultOovSeed);

  std::size_t dim() const noexcept { return dim_; }
  std::uint64_t oov_seed() const noexcept { return oov_seed_; }
  std::size_t size() const noexcept { return entries_.size(); }

  /// Inserts a vector; an existing token keeps its first vector.
  void insert(std::string token, Vector vec);
  const Vector* find(std::string_view token) const;

  /// Vector of one hashed n-gram bucket: i.i.d. standard normal coordinates
  /// generated from (oov_seed, bucket).
  Vector bucket_vector(std::uint32_t bucket) const;

 private:
  std::size_t dim_;
  std::uint64_t oov_seed_;
  std::unordered_map<std::string, Vector> entries_;
};

/// Reads the standard text vector format: optional `count dim` header, then
/// `token v1 ... vd` per line. LF and CRLF are both accepted.
EmbeddingTable load_vectors(const std::filesystem::path& path, std::uint64_t oov_seed = kDefaultOovSeed);
EmbeddingTable parse_vectors(std::string_view text, std::uint64_t oov_seed = kDefaultOovSeed);
void save_vectors(const EmbeddingTable& table, std::span<const std::string> tokens, const std::filesystem::path& path);

/// 32-bit FNV-1a, the fastText n-gram hash.
std::uint32_t fnv1a32(std::string_view s) noexcept;

/// Character n-grams (by UTF-8 code point) of "<token>", for n in [minn, maxn].
std::vector<std::string> char_ngrams(std::string_view token, std::size_t minn = 3, std::size_t maxn = 6);

class StringEmbedder {
 public:
  explicit StringEmbedder(std::shared_ptr<const EmbeddingTable> table, bool lowercase = true);

  std::size_t dim() const noexcept { return table_->dim(); }
  const EmbeddingTable& table() const noexcept { return *table_; }

  /// Splits on whitespace and ASCII punctuation, after optional ASCII lowercasing.
  std::vector<std::string> tokenize(std::string_view text) const;

  /// Mean of token vectors; the empty string (or one with no tokens) maps to zeros.
  Vector embed(std::string_view text) const;
  Vector embed_token(std::string_view token) const;

 private:
  std::shared_ptr<const EmbeddingTable> table_;
  bool lowercase_;
  mutable std::mutex cache_mutex_;
  mutable std::unordered_map<std::string, Vector> cache_;
};

/// Where an embedder's table came from; stored in checkpoints so a model can
/// be paired with the same vectors at prediction time. An empty path means the
/// bundled default table.
struct EmbeddingRef {
  std::string path;
  std::size_t dim = 0;
  std::uint64_t oov_seed = kDefaultOovSeed;

  friend bool operator==(const EmbeddingRef&, const EmbeddingRef&) = default;
};

/// value x column_vector. Throws std::domain_error for non-finite values.
Vector embed_numeric(double value, std::span<const double> column_vector);

}  // namespace carte
