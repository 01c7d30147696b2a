// Copyright (c) 2026, The carte-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "carte/gradcheck.hpp"

namespace carte {

struct GradCheckCase {
  std::string name;
  ad::GradCheckReport report;
};

struct GradCheckSuiteResult {
  std::vector<GradCheckCase> cases;
  double max_relative_error = 0.0;
  double seconds = 0.0;
  bool passed = true;
};

struct GradCheckSuiteOptions {
  double step = 1e-5;
  double tolerance = 1e-4;
  std::uint64_t seed = 7;
};

/// Central-difference checks of every differentiable primitive plus a full
/// attention layer (d = 8, 2 heads, 5-node graphlet), a readout layer and the
/// contrastive loss. Non-scalar outputs are reduced through a fixed random
/// projection so every output coordinate contributes.
GradCheckSuiteResult run_gradcheck_suite(const GradCheckSuiteOptions& options = {});

}  // namespace carte
