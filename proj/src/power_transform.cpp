// Copyright (c) 2026, The carte-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#include "carte/power_transform.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace carte {

namespace {
constexpr double kLambdaEps = 1e-12;
}

double yeo_johnson(double x, double lambda) {
  if (x >= 0.0) {
    if (std::abs(lambda) < kLambdaEps) return std::log1p(x);
    return std::expm1(lambda * std::log1p(x)) / lambda;
  }
  const double l2 = 2.0 - lambda;
  if (std::abs(l2) < kLambdaEps) return -std::log1p(-x);
  return -std::expm1(l2 * std::log1p(-x)) / l2;
}

double yeo_johnson_inverse(double y, double lambda) {
  if (y >= 0.0) {
    if (std::abs(lambda) < kLambdaEps) return std::expm1(y);
    // (y*lambda + 1)^(1/lambda) - 1, clamped to the image of [0, inf)
    const double base = std::max(y * lambda + 1.0, std::numeric_limits<double>::min());
    return std::expm1(std::log(base) / lambda);
  }
  const double l2 = 2.0 - lambda;
  if (std::abs(l2) < kLambdaEps) return -std::expm1(-y);
  const double base = std::max(1.0 - l2 * y, std::numeric_limits<double>::min());
  return -std::expm1(std::log(base) / l2);
}

double yeo_johnson_log_likelihood(std::span<const double> xs, double lambda) {
  const double n = static_cast<double>(xs.size());
  double mean = 0.0, log_jac = 0.0;
  std::vector<double> ys(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) {
    ys[i] = yeo_johnson(xs[i], lambda);
    if (!std::isfinite(ys[i])) return -std::numeric_limits<double>::infinity();
    mean += ys[i];
    log_jac += std::copysign(1.0, xs[i]) * std::log1p(std::abs(xs[i]));
  }
  mean /= n;
  double var = 0.0;
  for (double y : ys) var += (y - mean) * (y - mean);
  var /= n;
  if (!(var > 0.0) || !std::isfinite(var)) return -std::numeric_limits<double>::infinity();
  return -0.5 * n * std::log(var) + (lambda - 1.0) * log_jac;
}

PowerTransform fit_power_transform(std::span<const double> values, double lo, double hi) {
  if (values.size() < 2) throw std::invalid_argument("power transform needs at least two values");
  for (double v : values) {
    if (!std::isfinite(v)) throw std::invalid_argument("power transform input must be finite");
  }
  const auto [mn, mx] = std::minmax_element(values.begin(), values.end());
  if (*mn == *mx) throw std::invalid_argument("power transform input is constant");

  // golden-section maximization
  const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double a = lo, b = hi;
  double c = b - inv_phi * (b - a);
  double d = a + inv_phi * (b - a);
  double fc = yeo_johnson_log_likelihood(values, c);
  double fd = yeo_johnson_log_likelihood(values, d);
  while (b - a > 1e-9) {
    if (fc > fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - inv_phi * (b - a);
      fc = yeo_johnson_log_likelihood(values, c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + inv_phi * (b - a);
      fd = yeo_johnson_log_likelihood(values, d);
    }
  }
  PowerTransform pt;
  pt.lambda = 0.5 * (a + b);

  const double n = static_cast<double>(values.size());
  double mean = 0.0;
  std::vector<double> ys(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    ys[i] = yeo_johnson(values[i], pt.lambda);
    mean += ys[i];
  }
  mean /= n;
  double var = 0.0;
  for (double y : ys) var += (y - mean) * (y - mean);
  var /= n;
  if (!(var > 0.0) || !std::isfinite(var)) throw std::invalid_argument("power transform collapsed the input");
  pt.mean = mean;
  pt.sd = std::sqrt(var);
  return pt;
}

double PowerTransform::apply(double x) const { return (yeo_johnson(x, lambda) - mean) / sd; }

double PowerTransform::inverse(double z) const { return yeo_johnson_inverse(z * sd + mean, lambda); }

std::vector<double> PowerTransform::apply(std::span<const double> xs) const {
  std::vector<double> out(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) out[i] = apply(xs[i]);
  return out;
}

std::vector<double> PowerTransform::inverse(std::span<const double> zs) const {
  std::vector<double> out(zs.size());
  for (std::size_t i = 0; i < zs.size(); ++i) out[i] = inverse(zs[i]);
  return out;
}

}  // namespace carte
