// Copyright (c) 2026, The carte-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <span>
#include <vector>

namespace carte {

/// Yeo-Johnson transform with post-standardization.
struct PowerTransform {
  double lambda = 1.0;
  double mean = 0.0;
  double sd = 1.0;

  double apply(double x) const;
  double inverse(double z) const;
  std::vector<double> apply(std::span<const double> xs) const;
  std::vector<double> inverse(std::span<const double> zs) const;

  friend bool operator==(const PowerTransform&, const PowerTransform&) = default;
};

double yeo_johnson(double x, double lambda);
double yeo_johnson_inverse(double y, double lambda);

/// Profile log-likelihood of lambda under a normal model for the transformed
/// sample (variance profiled out). -inf when the transform overflows.
double yeo_johnson_log_likelihood(std::span<const double> xs, double lambda);

/// Maximum-likelihood lambda by golden-section search over [lo, hi], then
/// standardization to zero mean and unit variance. Throws std::invalid_argument
/// unless the sample has at least two distinct finite values.
PowerTransform fit_power_transform(std::span<const double> values, double lo = -5.0, double hi = 5.0);

}  // namespace carte
