// Copyright (c) 2026, The carte-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "carte/tensor.hpp"

namespace carte {

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

/// Adam with decoupled weight decay. Decay applies to matrices only; biases
/// and layer-norm parameters (single-row tensors) are not decayed.
class AdamW {
 public:
  AdamW(std::vector<Tensor*> params, AdamWConfig config = {});

  /// One update with learning rate lr; grads are in parameter order.
  void step(std::span<const Tensor> grads, double lr);

  std::size_t steps_taken() const noexcept { return t_; }
  const AdamWConfig& config() const noexcept { return config_; }

 private:
  std::vector<Tensor*> params_;
  std::vector<Tensor> m_, v_;
  std::vector<bool> decay_;
  AdamWConfig config_;
  std::size_t t_ = 0;
};

/// Linear warmup from 0 to lr_max over `warmup` steps, then half-cosine decay
/// reaching lr_min at the last step (steps - 1).
struct LrSchedule {
  std::size_t steps = 1;
  std::size_t warmup = 0;
  double lr_min = 0.0;
  double lr_max = 1e-3;

  void validate() const;
  double operator()(std::size_t step) const;
};

/// Global L2 norm of a gradient list.
double gradient_norm(std::span<const Tensor> grads);

}  // namespace carte
