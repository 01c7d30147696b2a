// Copyright (c) 2026, The carte-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <string_view>
#include <utility>
#include <vector>

namespace carte {

std::uint64_t splitmix64(std::uint64_t x) noexcept;

/// Derives an independent seed for a named stream, e.g.
/// derive_seed(seed, "split", member). Stable across builds and platforms.
std::uint64_t derive_seed(std::uint64_t seed, std::string_view stream, std::uint64_t index = 0) noexcept;

/// Deterministic random source. Distributions are implemented here rather
/// than through <random> so sequences do not depend on the standard library.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }
  double uniform();  // [0, 1)
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  double normal();
  double normal(double mean, double sd) { return mean + sd * normal(); }
  std::size_t index(std::size_t n);  // uniform in [0, n)

  template <class T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::swap(v[i - 1], v[index(i)]);
    }
  }

  /// k distinct indices from [0, n), in sampling order.
  std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t k);

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace carte
