// Copyright (c) 2026, The carte-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "carte/autodiff.hpp"

namespace carte::ad {

/// Rebuilds a scalar expression from leaf Vars bound to the given parameter
/// values. Called once for the analytic pass and twice per coordinate for
/// central differences, so it must be deterministic.
using ScalarBuilder = std::function<Var(Tape&, std::span<const Var>)>;

struct ParamCheck {
  std::string name;
  double max_relative_error = 0.0;
  std::size_t worst_index = 0;
  bool passed = true;
};

struct GradCheckReport {
  std::vector<ParamCheck> params;
  double max_relative_error = 0.0;
  bool passed = true;

  std::string summary() const;
};

/// |a - n| / max(|a|, |n|, floor). The floor keeps coordinates whose true
/// gradient is ~0 from reporting round-off as a large relative error.
double relative_error(double analytic, double numeric, double floor = 1e-3);

std::vector<Tensor> analytic_gradients(const ScalarBuilder& build, std::span<const Tensor> params);
std::vector<Tensor> numeric_gradients(const ScalarBuilder& build, std::span<const Tensor> params, double step);

GradCheckReport compare_gradients(std::span<const Tensor> analytic, std::span<const Tensor> numeric, double tolerance,
                                  std::span<const std::string> names = {});

GradCheckReport finite_difference_check(const ScalarBuilder& build, std::span<const Tensor> params, double step,
                                        double tolerance, std::span<const std::string> names = {});

}  // namespace carte::ad
