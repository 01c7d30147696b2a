// Copyright (c) 2026, The carte-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <functional>

namespace carte {

/// Worker count: `requested` if nonzero, else CARTE_THREADS if set, else the
/// hardware concurrency. Never below 1.
std::size_t resolve_threads(std::size_t requested = 0);

/// Runs fn(i) for i in [0, n) on up to `threads` workers. The first exception
/// thrown by any task is rethrown after all workers finish.
void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& fn);

}  // namespace carte
