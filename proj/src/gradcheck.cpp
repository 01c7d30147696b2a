// Copyright (c) 2026, The carte-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#include "carte/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace carte::ad {

namespace {

double eval_scalar(const ScalarBuilder& build, std::span<const Tensor> params) {
  Tape tape;
  std::vector<Var> leaves;
  leaves.reserve(params.size());
  for (const auto& p : params) leaves.push_back(tape.leaf(p));
  return build(tape, leaves).value().item();
}

}  // namespace

std::string GradCheckReport::summary() const {
  std::ostringstream os;
  os << (passed ? "PASS" : "FAIL") << " max_rel_err=" << max_relative_error;
  for (const auto& p : params) {
    os << "\n  " << (p.passed ? "ok  " : "BAD ") << p.name << " max_rel_err=" << p.max_relative_error
       << " at " << p.worst_index;
  }
  return os.str();
}

double relative_error(double analytic, double numeric, double floor) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / denom;
}

std::vector<Tensor> analytic_gradients(const ScalarBuilder& build, std::span<const Tensor> params) {
  Tape tape;
  std::vector<Var> leaves;
  for (const auto& p : params) leaves.push_back(tape.leaf(p));
  Var root = build(tape, leaves);
  return tape.gradients(root, leaves);
}

std::vector<Tensor> numeric_gradients(const ScalarBuilder& build, std::span<const Tensor> params, double step) {
  if (!(step > 0.0)) throw std::invalid_argument("finite-difference step must be positive");
  std::vector<Tensor> work(params.begin(), params.end());
  std::vector<Tensor> grads;
  for (std::size_t p = 0; p < work.size(); ++p) {
    Tensor g(work[p].shape(), 0.0);
    for (std::size_t i = 0; i < work[p].size(); ++i) {
      const double orig = work[p][i];
      work[p][i] = orig + step;
      const double up = eval_scalar(build, work);
      work[p][i] = orig - step;
      const double down = eval_scalar(build, work);
      work[p][i] = orig;
      g[i] = (up - down) / (2.0 * step);
    }
    grads.push_back(std::move(g));
  }
  return grads;
}

GradCheckReport compare_gradients(std::span<const Tensor> analytic, std::span<const Tensor> numeric, double tolerance,
                                  std::span<const std::string> names) {
  if (analytic.size() != numeric.size()) throw std::invalid_argument("gradient list length mismatch");
  GradCheckReport report;
  for (std::size_t p = 0; p < analytic.size(); ++p) {
    if (analytic[p].shape() != numeric[p].shape()) {
      throw ShapeError("gradient shape mismatch for parameter " + std::to_string(p));
    }
    ParamCheck check;
    check.name = p < names.size() ? names[p] : "param" + std::to_string(p);
    for (std::size_t i = 0; i < analytic[p].size(); ++i) {
      const double err = relative_error(analytic[p][i], numeric[p][i]);
      if (err > check.max_relative_error || !std::isfinite(err)) {
        check.max_relative_error = err;
        check.worst_index = i;
      }
    }
    check.passed = check.max_relative_error < tolerance;
    report.max_relative_error = std::max(report.max_relative_error, check.max_relative_error);
    report.passed = report.passed && check.passed;
    report.params.push_back(std::move(check));
  }
  return report;
}

GradCheckReport finite_difference_check(const ScalarBuilder& build, std::span<const Tensor> params, double step,
                                        double tolerance, std::span<const std::string> names) {
  const auto analytic = analytic_gradients(build, params);
  const auto numeric = numeric_gradients(build, params, step);
  return compare_gradients(analytic, numeric, tolerance, names);
}

}  // namespace carte::ad
