// Copyright (c) 2026, The carte-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "carte/rng.hpp"
#include "carte/tensor.hpp"

/// Define-by-run reverse-mode automatic differentiation.
///
/// Every operation evaluates eagerly and records a node on a Tape together
/// with its backward rule. The tape is append-only, so node ids are already
/// in topological order and the backward sweep is a reverse scan.
namespace carte::ad {

enum class OpKind {
  leaf,
  constant,
  matmul,
  transpose,
  add,
  sub,
  mul,
  add_row,
  scale,
  gelu,
  layer_norm,
  dropout,
  gather_rows,
  scatter_add_rows,
  segment_softmax,
  concat_rows,
  sum,
  mean,
  normalize_rows,
  softmax_cross_entropy,
  mse_loss,
  bce_with_logits,
};

const char* op_name(OpKind kind) noexcept;

class Tape;

/// Handle to a node on a Tape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;

  Tape* tape() const noexcept { return tape_; }
  std::size_t id() const noexcept { return id_; }
  bool valid() const noexcept { return tape_ != nullptr; }
  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::size_t self)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Differentiable input.
  Var leaf(Tensor value);
  /// Non-differentiable input; no gradient flows into it.
  Var constant(Tensor value);

  const Tensor& value(Var v) const;
  OpKind kind(Var v) const;
  bool requires_grad(Var v) const;
  std::size_t size() const noexcept { return nodes_.size(); }

  /// Appends an op node. `backward` may be empty when no input needs grads.
  Var record(OpKind kind, std::vector<std::size_t> inputs, Tensor value, BackwardFn backward);

  /// d(root)/d(param) for each param. root must hold exactly one element.
  std::vector<Tensor> gradients(Var root, std::span<const Var> params);

  // Used by backward rules.
  const Tensor& grad(std::size_t id) const { return grads_[id]; }
  Tensor& grad_buffer(std::size_t id);
  bool needs_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  const Tensor& node_value(std::size_t id) const { return nodes_[id].value; }
  std::size_t input(std::size_t id, std::size_t k) const { return nodes_[id].inputs[k]; }

 private:
  struct Node {
    OpKind kind;
    std::vector<std::size_t> inputs;
    Tensor value;
    BackwardFn backward;
    bool requires_grad;
  };

  std::vector<Node> nodes_;
  std::vector<Tensor> grads_;
};

/// Forward value of a recorded expression (already computed eagerly).
Tensor evaluate(Var root);
std::vector<Tensor> gradients(Var root, std::span<const Var> params);

Var matmul(Var a, Var b);
Var transpose(Var a);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
/// Adds a 1 x m row to every row of an n x m matrix.
Var add_row(Var a, Var row);
Var scale(Var a, double factor);
/// Exact GELU, x * Phi(x).
Var gelu(Var a);
/// Row-wise layer normalization with affine scale and shift (both 1 x m).
Var layer_norm(Var x, Var gamma, Var beta, double eps = 1e-5);
/// Inverted dropout. With train == false (or p == 0) returns `x` itself.
Var dropout(Var x, double p, bool train, Rng& rng);
Var gather_rows(Var x, std::span<const std::size_t> index);
Var scatter_add_rows(Var x, std::span<const std::size_t> index, std::size_t rows);
/// Softmax over masked sets: column-wise softmax restricted to the rows that
/// share a segment id. Rows outside a segment never contribute to it.
Var segment_softmax(Var logits, std::span<const std::size_t> segment, std::size_t segments);
Var concat_rows(Var a, Var b);
Var sum(Var a);
Var mean(Var a);
Var normalize_rows(Var a);
/// Pairwise cosine similarities between the rows of a and b.
Var cosine_similarity(Var a, Var b);
/// Mean over rows of -log softmax(logits_i)[target_i]. With exclude_diagonal
/// the entry (i, i) is removed from row i's normalizer.
Var softmax_cross_entropy(Var logits, std::span<const std::size_t> targets, bool exclude_diagonal);
Var mse_loss(Var prediction, const Tensor& target);
Var bce_with_logits(Var logits, const Tensor& target);

}  // namespace carte::ad
