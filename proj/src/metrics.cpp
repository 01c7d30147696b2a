// Copyright (c) 2026, The carte-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#include "carte/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <vector>

namespace carte {

namespace {

void check_lengths(std::span<const double> a, std::span<const double> b, const char* what) {
  if (a.size() != b.size()) {
    throw std::invalid_argument(std::string(what) + ": " + std::to_string(a.size()) + " labels but " +
                                std::to_string(b.size()) + " predictions");
  }
  if (a.empty()) throw std::invalid_argument(std::string(what) + ": empty input");
}

}  // namespace

double r2_score(std::span<const double> y_true, std::span<const double> y_pred) {
  check_lengths(y_true, y_pred, "r2");
  if (y_true.size() < 2) throw std::invalid_argument("r2 needs at least two values");
  const double mean = std::accumulate(y_true.begin(), y_true.end(), 0.0) / static_cast<double>(y_true.size());
  double ss_res = 0.0, ss_tot = 0.0;
  for (std::size_t i = 0; i < y_true.size(); ++i) {
    ss_res += (y_true[i] - y_pred[i]) * (y_true[i] - y_pred[i]);
    ss_tot += (y_true[i] - mean) * (y_true[i] - mean);
  }
  if (!(ss_tot > 0.0)) throw std::invalid_argument("r2 is undefined for constant y_true");
  return 1.0 - ss_res / ss_tot;
}

double auroc(std::span<const double> y_true, std::span<const double> scores) {
  check_lengths(y_true, scores, "auroc");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  // sum of midranks of the positives
  double n_pos = 0.0, rank_sum = 0.0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
    const double midrank = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t k = i; k < j; ++k) {
      const double y = y_true[order[k]];
      if (y != 0.0 && y != 1.0) throw std::invalid_argument("auroc labels must be 0 or 1");
      if (y == 1.0) {
        n_pos += 1.0;
        rank_sum += midrank;
      }
    }
    i = j;
  }
  const double n_neg = static_cast<double>(y_true.size()) - n_pos;
  if (n_pos == 0.0 || n_neg == 0.0) throw std::invalid_argument("auroc needs both classes present");
  return (rank_sum - n_pos * (n_pos + 1.0) / 2.0) / (n_pos * n_neg);
}

double log_loss(std::span<const double> y_true, std::span<const double> prob) {
  check_lengths(y_true, prob, "log_loss");
  constexpr double kEps = 1e-15;
  double s = 0.0;
  for (std::size_t i = 0; i < y_true.size(); ++i) {
    const double p = std::clamp(prob[i], kEps, 1.0 - kEps);
    s -= y_true[i] * std::log(p) + (1.0 - y_true[i]) * std::log(1.0 - p);
  }
  return s / static_cast<double>(y_true.size());
}

double mean_squared_error(std::span<const double> y_true, std::span<const double> y_pred) {
  check_lengths(y_true, y_pred, "mse");
  double s = 0.0;
  for (std::size_t i = 0; i < y_true.size(); ++i) s += (y_true[i] - y_pred[i]) * (y_true[i] - y_pred[i]);
  return s / static_cast<double>(y_true.size());
}

double task_score(Task task, std::span<const double> y_true, std::span<const double> pred) {
  return task == Task::regression ? r2_score(y_true, pred) : auroc(y_true, pred);
}

double score_floor(Task task) noexcept { return task == Task::regression ? 0.0 : 0.5; }

double normalized_score(double score, double best_score, Task task) {
  const double rho = score_floor(task);
  if (!(best_score > rho)) throw std::invalid_argument("normalized score needs best_score above the floor");
  return std::clamp((score - rho) / (best_score - rho), 0.0, 1.0);
}

}  // namespace carte
