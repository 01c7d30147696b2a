// Copyright (c) 2026, The carte-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#include "carte/optim.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace carte {

AdamW::AdamW(std::vector<Tensor*> params, AdamWConfig config) : params_(std::move(params)), config_(config) {
  if (!(config_.beta1 >= 0.0 && config_.beta1 < 1.0) || !(config_.beta2 >= 0.0 && config_.beta2 < 1.0)) {
    throw std::invalid_argument("AdamW betas must lie in [0, 1)");
  }
  if (!(config_.eps > 0.0) || !(config_.weight_decay >= 0.0)) {
    throw std::invalid_argument("AdamW needs eps > 0 and weight_decay >= 0");
  }
  for (Tensor* p : params_) {
    m_.emplace_back(p->shape(), 0.0);
    v_.emplace_back(p->shape(), 0.0);
    decay_.push_back(p->rank() == 2 && p->rows() > 1);
  }
}

void AdamW::step(std::span<const Tensor> grads, double lr) {
  if (grads.size() != params_.size()) {
    throw std::invalid_argument("AdamW: " + std::to_string(grads.size()) + " gradients for " +
                                std::to_string(params_.size()) + " parameters");
  }
  ++t_;
  const double b1 = config_.beta1, b2 = config_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Tensor& p = *params_[i];
    const Tensor& g = grads[i];
    if (g.shape() != p.shape()) {
      throw ShapeError("AdamW: gradient " + shape_string(g.shape()) + " for parameter " + shape_string(p.shape()));
    }
    Tensor& m = m_[i];
    Tensor& v = v_[i];
    const double decay = decay_[i] ? 1.0 - lr * config_.weight_decay : 1.0;
    for (std::size_t k = 0; k < p.size(); ++k) {
      m[k] = b1 * m[k] + (1.0 - b1) * g[k];
      v[k] = b2 * v[k] + (1.0 - b2) * g[k] * g[k];
      const double mhat = m[k] / c1;
      const double vhat = v[k] / c2;
      p[k] = p[k] * decay - lr * mhat / (std::sqrt(vhat) + config_.eps);
    }
  }
}

void LrSchedule::validate() const {
  if (steps == 0) throw std::invalid_argument("schedule needs at least one step");
  if (warmup >= steps) throw std::invalid_argument("warmup steps must be fewer than total steps");
  if (!(lr_min >= 0.0) || !(lr_min < lr_max)) throw std::invalid_argument("schedule needs 0 <= lr_min < lr_max");
}

double LrSchedule::operator()(std::size_t step) const {
  if (step < warmup) return lr_max * static_cast<double>(step) / static_cast<double>(warmup);
  const std::size_t last = steps - 1;
  if (last <= warmup) return lr_max;
  const double progress = std::min(1.0, static_cast<double>(step - warmup) / static_cast<double>(last - warmup));
  if (progress >= 1.0) return lr_min;
  return lr_min + 0.5 * (lr_max - lr_min) * (1.0 + std::cos(std::numbers::pi * progress));
}

double gradient_norm(std::span<const Tensor> grads) {
  double s = 0.0;
  for (const auto& g : grads) {
    for (double x : g.values()) s += x * x;
  }
  return std::sqrt(s);
}

}  // namespace carte
