// Copyright (c) 2026, The carte-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#include "carte/autodiff.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <stdexcept>
#include <string>

namespace carte::ad {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;

ConstMap as_matrix(const Tensor& t) { return ConstMap(t.data(), t.rows(), t.cols()); }
MutMap as_matrix(Tensor& t) { return MutMap(t.data(), t.rows(), t.cols()); }

[[noreturn]] void shape_error(OpKind op, const Tensor& a, const Tensor& b) {
  throw ShapeError(std::string(op_name(op)) + ": incompatible shapes " + shape_string(a.shape()) + " and " +
                   shape_string(b.shape()));
}

[[noreturn]] void shape_error(OpKind op, const Tensor& a, const std::string& why) {
  throw ShapeError(std::string(op_name(op)) + ": " + why + " (shape " + shape_string(a.shape()) + ")");
}

Tape& same_tape(Var a, Var b) {
  if (!a.valid() || a.tape() != b.tape()) throw std::invalid_argument("operands live on different tapes");
  return *a.tape();
}

void require_matrix(OpKind op, const Tensor& t) {
  if (t.rank() > 2 || t.empty()) shape_error(op, t, "expected a matrix");
}

void add_into(Tensor& dst, const Tensor& src) {
  double* d = dst.data();
  const double* s = src.data();
  for (std::size_t i = 0, n = src.size(); i < n; ++i) d[i] += s[i];
}

constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

}  // namespace

const char* op_name(OpKind kind) noexcept {
  switch (kind) {
    case OpKind::leaf: return "leaf";
    case OpKind::constant: return "constant";
    case OpKind::matmul: return "matmul";
    case OpKind::transpose: return "transpose";
    case OpKind::add: return "add";
    case OpKind::sub: return "sub";
    case OpKind::mul: return "elementwise-multiply";
    case OpKind::add_row: return "add-row";
    case OpKind::scale: return "scalar-scale";
    case OpKind::gelu: return "gelu";
    case OpKind::layer_norm: return "layer-normalize";
    case OpKind::dropout: return "dropout";
    case OpKind::gather_rows: return "gather-rows";
    case OpKind::scatter_add_rows: return "scatter-add-rows";
    case OpKind::segment_softmax: return "softmax-over-masked-set";
    case OpKind::concat_rows: return "concat-rows";
    case OpKind::sum: return "sum";
    case OpKind::mean: return "mean";
    case OpKind::normalize_rows: return "normalize-rows";
    case OpKind::softmax_cross_entropy: return "softmax-cross-entropy";
    case OpKind::mse_loss: return "mse-loss";
    case OpKind::bce_with_logits: return "bce-with-logits";
  }
  return "unknown";
}

const Tensor& Var::value() const {
  if (!tape_) throw std::logic_error("value() on an unbound Var");
  return tape_->value(*this);
}

Var Tape::leaf(Tensor value) {
  nodes_.push_back({OpKind::leaf, {}, std::move(value), {}, true});
  return Var(this, nodes_.size() - 1);
}

Var Tape::constant(Tensor value) {
  nodes_.push_back({OpKind::constant, {}, std::move(value), {}, false});
  return Var(this, nodes_.size() - 1);
}

const Tensor& Tape::value(Var v) const { return nodes_.at(v.id()).value; }
OpKind Tape::kind(Var v) const { return nodes_.at(v.id()).kind; }
bool Tape::requires_grad(Var v) const { return nodes_.at(v.id()).requires_grad; }

Var Tape::record(OpKind kind, std::vector<std::size_t> inputs, Tensor value, BackwardFn backward) {
  if (!value.all_finite()) {
    throw NonFiniteError(std::string(op_name(kind)) + " produced a non-finite value (output shape " +
                         shape_string(value.shape()) + ")");
  }
  bool needs = false;
  for (auto in : inputs) needs = needs || nodes_[in].requires_grad;
  if (!needs) backward = nullptr;
  nodes_.push_back({kind, std::move(inputs), std::move(value), std::move(backward), needs});
  return Var(this, nodes_.size() - 1);
}

Tensor& Tape::grad_buffer(std::size_t id) {
  Tensor& g = grads_[id];
  if (g.empty()) g = Tensor(nodes_[id].value.shape(), 0.0);
  return g;
}

std::vector<Tensor> Tape::gradients(Var root, std::span<const Var> params) {
  if (root.tape() != this) throw std::invalid_argument("gradients: root belongs to another tape");
  const Tensor& rv = nodes_.at(root.id()).value;
  if (rv.size() != 1) {
    throw ShapeError("gradients: root must be scalar-valued, got shape " + shape_string(rv.shape()));
  }
  grads_.assign(nodes_.size(), Tensor{});
  grads_[root.id()] = Tensor(rv.shape(), 1.0);
  for (std::size_t id = root.id() + 1; id-- > 0;) {
    if (grads_[id].empty() || !nodes_[id].backward) continue;
    nodes_[id].backward(*this, id);
  }
  std::vector<Tensor> out;
  out.reserve(params.size());
  for (const Var& p : params) {
    if (p.tape() != this) throw std::invalid_argument("gradients: parameter belongs to another tape");
    const Tensor& g = grads_[p.id()];
    out.push_back(g.empty() ? Tensor(nodes_[p.id()].value.shape(), 0.0) : g);
  }
  grads_.clear();
  return out;
}

Tensor evaluate(Var root) { return root.value(); }

std::vector<Tensor> gradients(Var root, std::span<const Var> params) {
  if (!root.valid()) throw std::invalid_argument("gradients: unbound root");
  return root.tape()->gradients(root, params);
}

Var matmul(Var a, Var b) {
  Tape& tape = same_tape(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  require_matrix(OpKind::matmul, av);
  require_matrix(OpKind::matmul, bv);
  if (av.cols() != bv.rows()) shape_error(OpKind::matmul, av, bv);
  Tensor out = Tensor::matrix(av.rows(), bv.cols());
  as_matrix(out).noalias() = as_matrix(av) * as_matrix(bv);
  return tape.record(OpKind::matmul, {a.id(), b.id()}, std::move(out), [](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    const std::size_t ia = t.input(self, 0), ib = t.input(self, 1);
    if (t.needs_grad(ia)) as_matrix(t.grad_buffer(ia)).noalias() += as_matrix(g) * as_matrix(t.node_value(ib)).transpose();
    if (t.needs_grad(ib)) as_matrix(t.grad_buffer(ib)).noalias() += as_matrix(t.node_value(ia)).transpose() * as_matrix(g);
  });
}

Var transpose(Var a) {
  Tape& tape = *a.tape();
  const Tensor& av = a.value();
  require_matrix(OpKind::transpose, av);
  Tensor out = Tensor::matrix(av.cols(), av.rows());
  as_matrix(out) = as_matrix(av).transpose();
  return tape.record(OpKind::transpose, {a.id()}, std::move(out), [](Tape& t, std::size_t self) {
    as_matrix(t.grad_buffer(t.input(self, 0))) += as_matrix(t.grad(self)).transpose();
  });
}

namespace {

template <class Fwd>
Var elementwise_binary(OpKind op, Var a, Var b, Fwd fwd, Tape::BackwardFn backward) {
  Tape& tape = same_tape(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.shape() != bv.shape()) shape_error(op, av, bv);
  Tensor out(av.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(av[i], bv[i]);
  return tape.record(op, {a.id(), b.id()}, std::move(out), std::move(backward));
}

}  // namespace

Var add(Var a, Var b) {
  return elementwise_binary(OpKind::add, a, b, [](double x, double y) { return x + y; },
                            [](Tape& t, std::size_t self) {
                              for (std::size_t k = 0; k < 2; ++k) {
                                const auto in = t.input(self, k);
                                if (t.needs_grad(in)) add_into(t.grad_buffer(in), t.grad(self));
                              }
                            });
}

Var sub(Var a, Var b) {
  return elementwise_binary(OpKind::sub, a, b, [](double x, double y) { return x - y; },
                            [](Tape& t, std::size_t self) {
                              const Tensor& g = t.grad(self);
                              const auto ia = t.input(self, 0), ib = t.input(self, 1);
                              if (t.needs_grad(ia)) add_into(t.grad_buffer(ia), g);
                              if (t.needs_grad(ib)) {
                                Tensor& gb = t.grad_buffer(ib);
                                for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
                              }
                            });
}

Var mul(Var a, Var b) {
  return elementwise_binary(OpKind::mul, a, b, [](double x, double y) { return x * y; },
                            [](Tape& t, std::size_t self) {
                              const Tensor& g = t.grad(self);
                              const auto ia = t.input(self, 0), ib = t.input(self, 1);
                              if (t.needs_grad(ia)) {
                                Tensor& ga = t.grad_buffer(ia);
                                const Tensor& bv = t.node_value(ib);
                                for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i];
                              }
                              if (t.needs_grad(ib)) {
                                Tensor& gb = t.grad_buffer(ib);
                                const Tensor& av = t.node_value(ia);
                                for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
                              }
                            });
}

Var add_row(Var a, Var row) {
  Tape& tape = same_tape(a, row);
  const Tensor& av = a.value();
  const Tensor& rv = row.value();
  require_matrix(OpKind::add_row, av);
  if (rv.size() != av.cols()) shape_error(OpKind::add_row, av, rv);
  Tensor out = av;
  const std::size_t n = av.rows(), m = av.cols();
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < m; ++c) out[r * m + c] += rv[c];
  return tape.record(OpKind::add_row, {a.id(), row.id()}, std::move(out), [n, m](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    const auto ia = t.input(self, 0), ir = t.input(self, 1);
    if (t.needs_grad(ia)) add_into(t.grad_buffer(ia), g);
    if (t.needs_grad(ir)) {
      Tensor& gr = t.grad_buffer(ir);
      for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < m; ++c) gr[c] += g[r * m + c];
    }
  });
}

Var scale(Var a, double factor) {
  Tape& tape = *a.tape();
  Tensor out = a.value();
  for (auto& v : out.values()) v *= factor;
  return tape.record(OpKind::scale, {a.id()}, std::move(out), [factor](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    Tensor& ga = t.grad_buffer(t.input(self, 0));
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += factor * g[i];
  });
}

Var gelu(Var a) {
  Tape& tape = *a.tape();
  const Tensor& av = a.value();
  Tensor out(av.shape());
  for (std::size_t i = 0; i < av.size(); ++i) {
    const double x = av[i];
    out[i] = 0.5 * x * (1.0 + std::erf(x * kInvSqrt2));
  }
  return tape.record(OpKind::gelu, {a.id()}, std::move(out), [](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    const auto ia = t.input(self, 0);
    const Tensor& x = t.node_value(ia);
    Tensor& ga = t.grad_buffer(ia);
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double cdf = 0.5 * (1.0 + std::erf(x[i] * kInvSqrt2));
      const double pdf = kInvSqrt2Pi * std::exp(-0.5 * x[i] * x[i]);
      ga[i] += g[i] * (cdf + x[i] * pdf);
    }
  });
}

Var layer_norm(Var x, Var gamma, Var beta, double eps) {
  Tape& tape = same_tape(x, gamma);
  same_tape(x, beta);
  const Tensor& xv = x.value();
  require_matrix(OpKind::layer_norm, xv);
  const std::size_t n = xv.rows(), m = xv.cols();
  if (gamma.value().size() != m) shape_error(OpKind::layer_norm, xv, gamma.value());
  if (beta.value().size() != m) shape_error(OpKind::layer_norm, xv, beta.value());
  const Tensor& gv = gamma.value();
  const Tensor& bv = beta.value();

  auto normalized = std::make_shared<Tensor>(xv.shape());
  auto inv_std = std::make_shared<std::vector<double>>(n);
  Tensor out(xv.shape());
  for (std::size_t r = 0; r < n; ++r) {
    const double* row = xv.data() + r * m;
    double mu = 0.0;
    for (std::size_t c = 0; c < m; ++c) mu += row[c];
    mu /= static_cast<double>(m);
    double var = 0.0;
    for (std::size_t c = 0; c < m; ++c) var += (row[c] - mu) * (row[c] - mu);
    var /= static_cast<double>(m);
    const double is = 1.0 / std::sqrt(var + eps);
    (*inv_std)[r] = is;
    for (std::size_t c = 0; c < m; ++c) {
      const double h = (row[c] - mu) * is;
      (*normalized)[r * m + c] = h;
      out[r * m + c] = gv[c] * h + bv[c];
    }
  }
  return tape.record(
      OpKind::layer_norm, {x.id(), gamma.id(), beta.id()}, std::move(out),
      [normalized, inv_std, n, m](Tape& t, std::size_t self) {
        const Tensor& g = t.grad(self);
        const auto ix = t.input(self, 0), ig = t.input(self, 1), ib = t.input(self, 2);
        const Tensor& gv = t.node_value(ig);
        const Tensor& h = *normalized;
        if (t.needs_grad(ig)) {
          Tensor& gg = t.grad_buffer(ig);
          for (std::size_t r = 0; r < n; ++r)
            for (std::size_t c = 0; c < m; ++c) gg[c] += g[r * m + c] * h[r * m + c];
        }
        if (t.needs_grad(ib)) {
          Tensor& gb = t.grad_buffer(ib);
          for (std::size_t r = 0; r < n; ++r)
            for (std::size_t c = 0; c < m; ++c) gb[c] += g[r * m + c];
        }
        if (t.needs_grad(ix)) {
          Tensor& gx = t.grad_buffer(ix);
          const double inv_m = 1.0 / static_cast<double>(m);
          for (std::size_t r = 0; r < n; ++r) {
            double mean_dh = 0.0, mean_dh_h = 0.0;
            for (std::size_t c = 0; c < m; ++c) {
              const double dh = g[r * m + c] * gv[c];
              mean_dh += dh;
              mean_dh_h += dh * h[r * m + c];
            }
            mean_dh *= inv_m;
            mean_dh_h *= inv_m;
            const double is = (*inv_std)[r];
            for (std::size_t c = 0; c < m; ++c) {
              const double dh = g[r * m + c] * gv[c];
              gx[r * m + c] += is * (dh - mean_dh - h[r * m + c] * mean_dh_h);
            }
          }
        }
      });
}

Var dropout(Var x, double p, bool train, Rng& rng) {
  if (p < 0.0 || p >= 1.0) throw std::invalid_argument("dropout probability must be in [0, 1)");
  if (!train || p == 0.0) return x;
  Tape& tape = *x.tape();
  const Tensor& xv = x.value();
  const double keep = 1.0 - p;
  auto mask = std::make_shared<Tensor>(xv.shape());
  Tensor out(xv.shape());
  for (std::size_t i = 0; i < xv.size(); ++i) {
    const double m = rng.uniform() < keep ? 1.0 / keep : 0.0;
    (*mask)[i] = m;
    out[i] = xv[i] * m;
  }
  return tape.record(OpKind::dropout, {x.id()}, std::move(out), [mask](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    Tensor& gx = t.grad_buffer(t.input(self, 0));
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * (*mask)[i];
  });
}

Var gather_rows(Var x, std::span<const std::size_t> index) {
  Tape& tape = *x.tape();
  const Tensor& xv = x.value();
  require_matrix(OpKind::gather_rows, xv);
  if (index.empty()) shape_error(OpKind::gather_rows, xv, "empty index");
  const std::size_t n = xv.rows(), m = xv.cols();
  auto idx = std::make_shared<std::vector<std::size_t>>(index.begin(), index.end());
  Tensor out = Tensor::matrix(idx->size(), m);
  for (std::size_t k = 0; k < idx->size(); ++k) {
    const std::size_t r = (*idx)[k];
    if (r >= n) shape_error(OpKind::gather_rows, xv, "row index " + std::to_string(r) + " out of range");
    std::copy_n(xv.data() + r * m, m, out.data() + k * m);
  }
  return tape.record(OpKind::gather_rows, {x.id()}, std::move(out), [idx, m](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    Tensor& gx = t.grad_buffer(t.input(self, 0));
    for (std::size_t k = 0; k < idx->size(); ++k) {
      double* dst = gx.data() + (*idx)[k] * m;
      const double* src = g.data() + k * m;
      for (std::size_t c = 0; c < m; ++c) dst[c] += src[c];
    }
  });
}

Var scatter_add_rows(Var x, std::span<const std::size_t> index, std::size_t rows) {
  Tape& tape = *x.tape();
  const Tensor& xv = x.value();
  require_matrix(OpKind::scatter_add_rows, xv);
  if (index.size() != xv.rows()) shape_error(OpKind::scatter_add_rows, xv, "index length != row count");
  const std::size_t m = xv.cols();
  auto idx = std::make_shared<std::vector<std::size_t>>(index.begin(), index.end());
  Tensor out = Tensor::matrix(rows, m);
  for (std::size_t k = 0; k < idx->size(); ++k) {
    const std::size_t r = (*idx)[k];
    if (r >= rows) shape_error(OpKind::scatter_add_rows, xv, "target row " + std::to_string(r) + " out of range");
    double* dst = out.data() + r * m;
    const double* src = xv.data() + k * m;
    for (std::size_t c = 0; c < m; ++c) dst[c] += src[c];
  }
  return tape.record(OpKind::scatter_add_rows, {x.id()}, std::move(out), [idx, m](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    Tensor& gx = t.grad_buffer(t.input(self, 0));
    for (std::size_t k = 0; k < idx->size(); ++k) {
      double* dst = gx.data() + k * m;
      const double* src = g.data() + (*idx)[k] * m;
      for (std::size_t c = 0; c < m; ++c) dst[c] += src[c];
    }
  });
}

Var segment_softmax(Var logits, std::span<const std::size_t> segment, std::size_t segments) {
  Tape& tape = *logits.tape();
  const Tensor& lv = logits.value();
  require_matrix(OpKind::segment_softmax, lv);
  if (segment.size() != lv.rows()) shape_error(OpKind::segment_softmax, lv, "segment length != row count");
  const std::size_t rows = lv.rows(), h = lv.cols();
  auto seg = std::make_shared<std::vector<std::size_t>>(segment.begin(), segment.end());
  std::vector<double> mx(segments * h, -std::numeric_limits<double>::infinity());
  for (std::size_t r = 0; r < rows; ++r) {
    const std::size_t s = (*seg)[r];
    if (s >= segments) shape_error(OpKind::segment_softmax, lv, "segment id out of range");
    for (std::size_t c = 0; c < h; ++c) mx[s * h + c] = std::max(mx[s * h + c], lv[r * h + c]);
  }
  Tensor out(lv.shape());
  std::vector<double> denom(segments * h, 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    const std::size_t s = (*seg)[r];
    for (std::size_t c = 0; c < h; ++c) {
      const double e = std::exp(lv[r * h + c] - mx[s * h + c]);
      out[r * h + c] = e;
      denom[s * h + c] += e;
    }
  }
  for (std::size_t r = 0; r < rows; ++r) {
    const std::size_t s = (*seg)[r];
    for (std::size_t c = 0; c < h; ++c) out[r * h + c] /= denom[s * h + c];
  }
  return tape.record(OpKind::segment_softmax, {logits.id()}, std::move(out),
                     [seg, segments, rows, h](Tape& t, std::size_t self) {
                       const Tensor& g = t.grad(self);
                       const Tensor& a = t.node_value(self);
                       std::vector<double> dot(segments * h, 0.0);
                       for (std::size_t r = 0; r < rows; ++r)
                         for (std::size_t c = 0; c < h; ++c) dot[(*seg)[r] * h + c] += g[r * h + c] * a[r * h + c];
                       Tensor& gl = t.grad_buffer(t.input(self, 0));
                       for (std::size_t r = 0; r < rows; ++r)
                         for (std::size_t c = 0; c < h; ++c)
                           gl[r * h + c] += a[r * h + c] * (g[r * h + c] - dot[(*seg)[r] * h + c]);
                     });
}

Var concat_rows(Var a, Var b) {
  Tape& tape = same_tape(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  require_matrix(OpKind::concat_rows, av);
  require_matrix(OpKind::concat_rows, bv);
  if (av.cols() != bv.cols()) shape_error(OpKind::concat_rows, av, bv);
  const std::size_t na = av.size();
  Tensor out = Tensor::matrix(av.rows() + bv.rows(), av.cols());
  std::copy_n(av.data(), na, out.data());
  std::copy_n(bv.data(), bv.size(), out.data() + na);
  return tape.record(OpKind::concat_rows, {a.id(), b.id()}, std::move(out), [na](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    const auto ia = t.input(self, 0), ib = t.input(self, 1);
    if (t.needs_grad(ia)) {
      Tensor& ga = t.grad_buffer(ia);
      for (std::size_t i = 0; i < na; ++i) ga[i] += g[i];
    }
    if (t.needs_grad(ib)) {
      Tensor& gb = t.grad_buffer(ib);
      for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += g[na + i];
    }
  });
}

Var sum(Var a) {
  Tape& tape = *a.tape();
  double s = 0.0;
  for (double v : a.value().values()) s += v;
  return tape.record(OpKind::sum, {a.id()}, Tensor::scalar(s), [](Tape& t, std::size_t self) {
    const double g = t.grad(self)[0];
    for (auto& v : t.grad_buffer(t.input(self, 0)).values()) v += g;
  });
}

Var mean(Var a) {
  Tape& tape = *a.tape();
  const double n = static_cast<double>(a.value().size());
  double s = 0.0;
  for (double v : a.value().values()) s += v;
  return tape.record(OpKind::mean, {a.id()}, Tensor::scalar(s / n), [n](Tape& t, std::size_t self) {
    const double g = t.grad(self)[0] / n;
    for (auto& v : t.grad_buffer(t.input(self, 0)).values()) v += g;
  });
}

Var normalize_rows(Var a) {
  Tape& tape = *a.tape();
  const Tensor& av = a.value();
  require_matrix(OpKind::normalize_rows, av);
  const std::size_t n = av.rows(), m = av.cols();
  auto norms = std::make_shared<std::vector<double>>(n);
  Tensor out(av.shape());
  for (std::size_t r = 0; r < n; ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < m; ++c) s += av[r * m + c] * av[r * m + c];
    const double norm = std::sqrt(s);
    if (!(norm > 0.0)) throw std::domain_error("normalize-rows: row " + std::to_string(r) + " has zero norm");
    (*norms)[r] = norm;
    for (std::size_t c = 0; c < m; ++c) out[r * m + c] = av[r * m + c] / norm;
  }
  return tape.record(OpKind::normalize_rows, {a.id()}, std::move(out), [norms, n, m](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    const Tensor& y = t.node_value(self);
    Tensor& ga = t.grad_buffer(t.input(self, 0));
    for (std::size_t r = 0; r < n; ++r) {
      double dot = 0.0;
      for (std::size_t c = 0; c < m; ++c) dot += y[r * m + c] * g[r * m + c];
      for (std::size_t c = 0; c < m; ++c) ga[r * m + c] += (g[r * m + c] - y[r * m + c] * dot) / (*norms)[r];
    }
  });
}

Var cosine_similarity(Var a, Var b) { return matmul(normalize_rows(a), transpose(normalize_rows(b))); }

Var softmax_cross_entropy(Var logits, std::span<const std::size_t> targets, bool exclude_diagonal) {
  Tape& tape = *logits.tape();
  const Tensor& lv = logits.value();
  require_matrix(OpKind::softmax_cross_entropy, lv);
  const std::size_t n = lv.rows(), c = lv.cols();
  if (targets.size() != n) shape_error(OpKind::softmax_cross_entropy, lv, "target count != row count");
  if (exclude_diagonal && n != c) shape_error(OpKind::softmax_cross_entropy, lv, "diagonal exclusion needs a square matrix");
  auto tgt = std::make_shared<std::vector<std::size_t>>(targets.begin(), targets.end());
  auto prob = std::make_shared<Tensor>(lv.shape(), 0.0);
  double total = 0.0;
  for (std::size_t r = 0; r < n; ++r) {
    const std::size_t tr = (*tgt)[r];
    if (tr >= c || (exclude_diagonal && tr == r)) {
      shape_error(OpKind::softmax_cross_entropy, lv, "invalid target for row " + std::to_string(r));
    }
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < c; ++k)
      if (!(exclude_diagonal && k == r)) mx = std::max(mx, lv[r * c + k]);
    double z = 0.0;
    for (std::size_t k = 0; k < c; ++k) {
      if (exclude_diagonal && k == r) continue;
      const double e = std::exp(lv[r * c + k] - mx);
      (*prob)[r * c + k] = e;
      z += e;
    }
    for (std::size_t k = 0; k < c; ++k) (*prob)[r * c + k] /= z;
    total += (mx + std::log(z)) - lv[r * c + tr];
  }
  return tape.record(OpKind::softmax_cross_entropy, {logits.id()}, Tensor::scalar(total / static_cast<double>(n)),
                     [tgt, prob, n, c](Tape& t, std::size_t self) {
                       const double g = t.grad(self)[0] / static_cast<double>(n);
                       Tensor& gl = t.grad_buffer(t.input(self, 0));
                       for (std::size_t r = 0; r < n; ++r) {
                         for (std::size_t k = 0; k < c; ++k) gl[r * c + k] += g * (*prob)[r * c + k];
                         gl[r * c + (*tgt)[r]] -= g;
                       }
                     });
}

Var mse_loss(Var prediction, const Tensor& target) {
  Tape& tape = *prediction.tape();
  const Tensor& pv = prediction.value();
  if (pv.size() != target.size()) shape_error(OpKind::mse_loss, pv, target);
  auto residual = std::make_shared<std::vector<double>>(pv.size());
  double s = 0.0;
  for (std::size_t i = 0; i < pv.size(); ++i) {
    (*residual)[i] = pv[i] - target[i];
    s += (*residual)[i] * (*residual)[i];
  }
  const double n = static_cast<double>(pv.size());
  return tape.record(OpKind::mse_loss, {prediction.id()}, Tensor::scalar(s / n), [residual, n](Tape& t, std::size_t self) {
    const double g = t.grad(self)[0] * 2.0 / n;
    Tensor& gp = t.grad_buffer(t.input(self, 0));
    for (std::size_t i = 0; i < residual->size(); ++i) gp[i] += g * (*residual)[i];
  });
}

Var bce_with_logits(Var logits, const Tensor& target) {
  Tape& tape = *logits.tape();
  const Tensor& zv = logits.value();
  if (zv.size() != target.size()) shape_error(OpKind::bce_with_logits, zv, target);
  auto tgt = std::make_shared<Tensor>(target);
  double s = 0.0;
  for (std::size_t i = 0; i < zv.size(); ++i) {
    const double z = zv[i];
    s += std::max(z, 0.0) - z * target[i] + std::log1p(std::exp(-std::abs(z)));
  }
  const double n = static_cast<double>(zv.size());
  return tape.record(OpKind::bce_with_logits, {logits.id()}, Tensor::scalar(s / n), [tgt, n](Tape& t, std::size_t self) {
    const double g = t.grad(self)[0] / n;
    const auto iz = t.input(self, 0);
    const Tensor& z = t.node_value(iz);
    Tensor& gz = t.grad_buffer(iz);
    for (std::size_t i = 0; i < z.size(); ++i) {
      const double p = 1.0 / (1.0 + std::exp(-z[i]));
      gz[i] += g * (p - (*tgt)[i]);
    }
  });
}

}  // namespace carte::ad
