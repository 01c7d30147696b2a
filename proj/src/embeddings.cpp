// Copyright (c) 2026, The carte-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#include "carte/embeddings.hpp"

#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "carte/rng.hpp"

namespace carte {

namespace {

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t')) ++i;
    const std::size_t start = i;
    while (i < line.size() && line[i] != ' ' && line[i] != '\t') ++i;
    if (i > start) out.push_back(line.substr(start, i - start));
  }
  return out;
}

bool parse_double(std::string_view s, double& out) {
  const char* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, out);
  return ec == std::errc() && ptr == end;
}

bool parse_uint(std::string_view s, std::size_t& out) {
  const char* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, out);
  return ec == std::errc() && ptr == end;
}

bool is_ascii_punct(unsigned char c) { return c < 128 && std::ispunct(c); }
bool is_ascii_space(unsigned char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; }

}  // namespace

EmbeddingTable::EmbeddingTable(std::size_t dim, std::uint64_t oov_seed) : dim_(dim), oov_seed_(oov_seed) {
  if (dim == 0) throw std::invalid_argument("embedding dimension must be positive");
}

void EmbeddingTable::insert(std::string token, Vector vec) {
  if (vec.size() != dim_) {
    throw std::invalid_argument("vector for '" + token + "' has dimension " + std::to_string(vec.size()) +
                                ", table expects " + std::to_string(dim_));
  }
  entries_.try_emplace(std::move(token), std::move(vec));
}

const Vector* EmbeddingTable::find(std::string_view token) const {
  auto it = entries_.find(std::string(token));
  return it == entries_.end() ? nullptr : &it->second;
}

Vector EmbeddingTable::bucket_vector(std::uint32_t bucket) const {
  Rng rng(derive_seed(oov_seed_, "ngram-bucket", bucket));
  Vector v(dim_);
  for (auto& x : v) x = rng.normal();
  return v;
}

EmbeddingTable parse_vectors(std::string_view text, std::uint64_t oov_seed) {
  std::size_t dim = 0;
  std::vector<std::pair<std::string, Vector>> rows;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  bool first = true;
  while (pos < text.size()) {
    std::size_t eol = text.find('\n', pos);
    if (eol == std::string_view::npos) eol = text.size();
    std::string_view line = text.substr(pos, eol - pos);
    pos = eol + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    auto fields = split_fields(line);
    if (fields.empty()) continue;
    if (first) {
      first = false;
      std::size_t count = 0, hdim = 0;
      if (fields.size() == 2 && parse_uint(fields[0], count) && parse_uint(fields[1], hdim)) {
        if (hdim == 0) throw ParseError("header declares dimension 0", line_no);
        dim = hdim;
        continue;
      }
    }
    if (fields.size() < 2) throw ParseError("vector line has no values", line_no);
    const std::size_t d = fields.size() - 1;
    if (dim == 0) dim = d;
    if (d != dim) {
      throw ParseError("dimension mismatch: expected " + std::to_string(dim) + " values, found " + std::to_string(d),
                       line_no);
    }
    Vector v(d);
    for (std::size_t k = 0; k < d; ++k) {
      if (!parse_double(fields[k + 1], v[k]) || !std::isfinite(v[k])) {
        throw ParseError("unreadable float '" + std::string(fields[k + 1]) + "'", line_no);
      }
    }
    rows.emplace_back(std::string(fields[0]), std::move(v));
  }
  if (dim == 0) throw ParseError("no vectors found", line_no);
  EmbeddingTable table(dim, oov_seed);
  for (auto& [tok, vec] : rows) table.insert(std::move(tok), std::move(vec));
  return table;
}

EmbeddingTable load_vectors(const std::filesystem::path& path, std::uint64_t oov_seed) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open vector file " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_vectors(buf.str(), oov_seed);
}

void save_vectors(const EmbeddingTable& table, std::span<const std::string> tokens, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write vector file " + path.string());
  out << tokens.size() << ' ' << table.dim() << '\n';
  char buf[32];
  for (const auto& tok : tokens) {
    const Vector* v = table.find(tok);
    if (!v) throw std::invalid_argument("token '" + tok + "' not in table");
    out << tok;
    for (double x : *v) {
      auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), static_cast<float>(x));
      out << ' ' << std::string_view(buf, ptr - buf);
    }
    out << '\n';
  }
}

std::uint32_t fnv1a32(std::string_view s) noexcept {
  std::uint32_t h = 2166136261u;
  for (char c : s) {
    h ^= static_cast<std::uint32_t>(static_cast<std::int8_t>(c));
    h *= 16777619u;
  }
  return h;
}

std::vector<std::string> char_ngrams(std::string_view token, std::size_t minn, std::size_t maxn) {
  const std::string word = "<" + std::string(token) + ">";
  // code point start offsets
  std::vector<std::size_t> starts;
  for (std::size_t i = 0; i < word.size(); ++i) {
    if ((static_cast<unsigned char>(word[i]) & 0xC0) != 0x80) starts.push_back(i);
  }
  starts.push_back(word.size());
  const std::size_t chars = starts.size() - 1;
  std::vector<std::string> out;
  for (std::size_t i = 0; i < chars; ++i) {
    for (std::size_t n = minn; n <= maxn && i + n <= chars; ++n) {
      out.emplace_back(word.substr(starts[i], starts[i + n] - starts[i]));
    }
  }
  return out;
}

StringEmbedder::StringEmbedder(std::shared_ptr<const EmbeddingTable> table, bool lowercase)
    : table_(std::move(table)), lowercase_(lowercase) {
  if (!table_) throw std::invalid_argument("StringEmbedder needs a table");
}

std::vector<std::string> StringEmbedder::tokenize(std::string_view text) const {
  std::vector<std::string> tokens;
  std::string cur;
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (is_ascii_space(c) || is_ascii_punct(c)) {
      if (!cur.empty()) tokens.push_back(std::move(cur));
      cur.clear();
      continue;
    }
    cur.push_back(lowercase_ && c < 128 ? static_cast<char>(std::tolower(c)) : ch);
  }
  if (!cur.empty()) tokens.push_back(std::move(cur));
  return tokens;
}

Vector StringEmbedder::embed_token(std::string_view token) const {
  if (const Vector* v = table_->find(token)) return *v;
  {
    std::lock_guard lock(cache_mutex_);
    auto it = cache_.find(std::string(token));
    if (it != cache_.end()) return it->second;
  }
  Vector acc(table_->dim(), 0.0);
  const auto grams = char_ngrams(token);
  for (const auto& g : grams) {
    const Vector bv = table_->bucket_vector(fnv1a32(g) % EmbeddingTable::kBuckets);
    for (std::size_t k = 0; k < acc.size(); ++k) acc[k] += bv[k];
  }
  if (!grams.empty()) {
    for (auto& x : acc) x /= static_cast<double>(grams.size());
  }
  std::lock_guard lock(cache_mutex_);
  cache_.try_emplace(std::string(token), acc);
  return acc;
}

Vector StringEmbedder::embed(std::string_view text) const {
  const auto tokens = tokenize(text);
  Vector acc(table_->dim(), 0.0);
  if (tokens.empty()) return acc;
  for (const auto& tok : tokens) {
    const Vector v = embed_token(tok);
    for (std::size_t k = 0; k < acc.size(); ++k) acc[k] += v[k];
  }
  for (auto& x : acc) x /= static_cast<double>(tokens.size());
  return acc;
}

Vector embed_numeric(double value, std::span<const double> column_vector) {
  if (!std::isfinite(value)) throw std::domain_error("embed_numeric: non-finite value");
  Vector out(column_vector.size());
  for (std::size_t k = 0; k < out.size(); ++k) out[k] = value * column_vector[k];
  return out;
}

}  // namespace carte
