// Copyright (c) 2026, The carte-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <span>
#include <string>

#include "carte/model.hpp"

namespace carte {

/// 1 - SS_res / SS_tot. Throws std::invalid_argument for fewer than two values,
/// length mismatch or constant y_true.
double r2_score(std::span<const double> y_true, std::span<const double> y_pred);

/// Mann-Whitney AUROC with ties counted one half. Labels are 0/1; throws
/// std::invalid_argument if only one class is present.
double auroc(std::span<const double> y_true, std::span<const double> scores);

double log_loss(std::span<const double> y_true, std::span<const double> prob);
double mean_squared_error(std::span<const double> y_true, std::span<const double> y_pred);

/// Reporting score of the task: R^2 for regression, AUROC for classification.
double task_score(Task task, std::span<const double> y_true, std::span<const double> pred);

/// Baseline score rho: 0 for regression, 0.5 for classification.
double score_floor(Task task) noexcept;

/// clip((score - rho) / (best - rho), 0, 1); throws if best <= rho.
double normalized_score(double score, double best_score, Task task);

struct MetricReport {
  std::string metric;
  double value = 0.0;
  std::size_t n = 0;
};

}  // namespace carte
