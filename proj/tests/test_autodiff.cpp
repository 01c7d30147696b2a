// Copyright (c) 2026, The carte-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include "carte/autodiff.hpp"
#include "carte/gradcheck.hpp"
#include "carte/gradcheck_suite.hpp"
#include "doctest.h"

using namespace carte;
using doctest::Approx;

TEST_SUITE("tensor") {
  TEST_CASE("shapes are validated") {
    CHECK_THROWS_AS(Tensor(Shape{}), ShapeError);
    CHECK_THROWS_AS(Tensor(Shape{2, 0}), ShapeError);
    CHECK_THROWS_AS(Tensor(Shape{2, 2}, std::vector<double>{1, 2, 3}), ShapeError);
    CHECK_THROWS_AS(Tensor::from_rows({{1, 2}, {3}}), ShapeError);
    const Tensor t = Tensor::from_rows({{1, 2, 3}, {4, 5, 6}});
    CHECK(t.rows() == 2);
    CHECK(t.cols() == 3);
    CHECK(t(1, 2) == 6);
    CHECK_THROWS_AS(t.item(), ShapeError);
  }

  TEST_CASE("rank-1 tensors act as rows") {
    const std::vector<double> v{1, 2, 3};
    const Tensor r = Tensor::row(v);
    CHECK(r.rows() == 1);
    CHECK(r.cols() == 3);
  }

  TEST_CASE("finiteness check") {
    Tensor t = Tensor::matrix(2, 2, 1.0);
    CHECK(t.all_finite());
    t[3] = std::numeric_limits<double>::quiet_NaN();
    CHECK_FALSE(t.all_finite());
  }
}

TEST_SUITE("autodiff") {
  TEST_CASE("matmul forward matches hand product") {
    ad::Tape tape;
    auto a = tape.leaf(Tensor::from_rows({{1, 2}, {3, 4}}));
    auto b = tape.leaf(Tensor::from_rows({{5, 6}, {7, 8}}));
    const Tensor c = ad::matmul(a, b).value();
    CHECK(c == Tensor::from_rows({{19, 22}, {43, 50}}));
    CHECK_THROWS_AS(ad::matmul(a, tape.leaf(Tensor::matrix(3, 1))), ShapeError);
  }

  TEST_CASE("gradient of a bilinear form") {
    // f = sum(A B): df/dA = 1 B^T, df/dB = A^T 1
    ad::Tape tape;
    auto a = tape.leaf(Tensor::from_rows({{1, 2}, {3, 4}}));
    auto b = tape.leaf(Tensor::from_rows({{5, 6}, {7, 8}}));
    std::vector<ad::Var> params{a, b};
    auto g = tape.gradients(ad::sum(ad::matmul(a, b)), params);
    CHECK(g[0] == Tensor::from_rows({{11, 15}, {11, 15}}));
    CHECK(g[1] == Tensor::from_rows({{4, 4}, {6, 6}}));
  }

  TEST_CASE("unreachable parameters get zero gradients") {
    ad::Tape tape;
    auto a = tape.leaf(Tensor::matrix(2, 2, 1.0));
    auto unused = tape.leaf(Tensor::matrix(3, 1, 1.0));
    std::vector<ad::Var> params{a, unused};
    auto g = tape.gradients(ad::sum(a), params);
    CHECK(g[1] == Tensor::matrix(3, 1, 0.0));
  }

  TEST_CASE("constants receive no gradient flow") {
    ad::Tape tape;
    auto c = tape.constant(Tensor::matrix(1, 2, 3.0));
    CHECK_FALSE(tape.requires_grad(c));
    auto x = tape.leaf(Tensor::matrix(1, 2, 2.0));
    std::vector<ad::Var> params{x};
    auto g = tape.gradients(ad::sum(ad::mul(x, c)), params);
    CHECK(g[0] == Tensor::matrix(1, 2, 3.0));
  }

  TEST_CASE("non-finite outputs raise") {
    ad::Tape tape;
    auto x = tape.leaf(Tensor::matrix(1, 2, 1e300));
    CHECK_THROWS_AS(ad::scale(x, 1e300), NonFiniteError);
  }

  TEST_CASE("gelu matches x Phi(x)") {
    ad::Tape tape;
    auto x = tape.leaf(Tensor::from_rows({{-1.0, 0.0, 2.0}}));
    const Tensor y = ad::gelu(x).value();
    for (std::size_t i = 0; i < 3; ++i) {
      const double v = x.value()[i];
      CHECK(y[i] == Approx(v * 0.5 * std::erfc(-v / std::sqrt(2.0))).epsilon(1e-14));
    }
  }

  TEST_CASE("layer norm rows have zero mean and unit variance") {
    ad::Tape tape;
    auto x = tape.leaf(Tensor::from_rows({{1, 2, 3, 4}, {-3, 0, 5, 10}}));
    auto y = ad::layer_norm(x, tape.constant(Tensor::matrix(1, 4, 1.0)), tape.constant(Tensor::matrix(1, 4, 0.0)));
    for (std::size_t r = 0; r < 2; ++r) {
      double mu = 0, var = 0;
      for (std::size_t c = 0; c < 4; ++c) mu += y.value()(r, c) / 4;
      for (std::size_t c = 0; c < 4; ++c) var += (y.value()(r, c) - mu) * (y.value()(r, c) - mu) / 4;
      CHECK(mu == Approx(0.0).epsilon(1e-12));
      CHECK(var == Approx(1.0).epsilon(1e-4));  // eps = 1e-5 shrinks it slightly
    }
  }

  TEST_CASE("segment softmax normalizes within segments only") {
    ad::Tape tape;
    auto logits = tape.leaf(Tensor::from_rows({{1.0}, {2.0}, {3.0}, {-1.0}, {0.5}}));
    const std::vector<std::size_t> seg{0, 0, 1, 1, 1};
    const Tensor a = ad::segment_softmax(logits, seg, 2).value();
    CHECK(a[0] + a[1] == Approx(1.0).epsilon(1e-15));
    CHECK(a[2] + a[3] + a[4] == Approx(1.0).epsilon(1e-15));
    CHECK(a[1] / a[0] == Approx(std::exp(1.0)).epsilon(1e-12));
  }

  TEST_CASE("scatter and gather are adjoint") {
    // <gather(x), y> == <x, scatter(y)>
    Rng rng(3);
    Tensor x = Tensor::matrix(4, 3), y = Tensor::matrix(6, 3);
    for (auto& v : x.values()) v = rng.normal();
    for (auto& v : y.values()) v = rng.normal();
    const std::vector<std::size_t> idx{0, 2, 2, 3, 1, 0};
    ad::Tape tape;
    const Tensor gx = ad::gather_rows(tape.constant(x), idx).value();
    const Tensor sy = ad::scatter_add_rows(tape.constant(y), idx, 4).value();
    double lhs = 0, rhs = 0;
    for (std::size_t i = 0; i < gx.size(); ++i) lhs += gx[i] * y[i];
    for (std::size_t i = 0; i < sy.size(); ++i) rhs += x[i] * sy[i];
    CHECK(lhs == Approx(rhs).epsilon(1e-12));
  }

  TEST_CASE("softmax cross entropy with excluded diagonal") {
    ad::Tape tape;
    auto logits = tape.leaf(Tensor::from_rows({{5.0, 1.0, 0.0}, {1.0, 7.0, 2.0}, {0.0, 3.0, 9.0}}));
    const std::vector<std::size_t> targets{1, 2, 0};
    const double got = ad::softmax_cross_entropy(logits, targets, true).value().item();
    const double l0 = -std::log(std::exp(1.0) / (std::exp(1.0) + std::exp(0.0)));
    const double l1 = -std::log(std::exp(2.0) / (std::exp(1.0) + std::exp(2.0)));
    const double l2 = -std::log(std::exp(0.0) / (std::exp(0.0) + std::exp(3.0)));
    CHECK(got == Approx((l0 + l1 + l2) / 3).epsilon(1e-14));
  }

  TEST_CASE("bce with logits matches the direct formula") {
    ad::Tape tape;
    auto z = tape.leaf(Tensor::from_rows({{2.0}, {-30.0}, {0.0}}));
    const Tensor y = Tensor::from_rows({{1.0}, {0.0}, {1.0}});
    const double got = ad::bce_with_logits(z, y).value().item();
    auto sig = [](double v) { return 1 / (1 + std::exp(-v)); };
    const double want = -(std::log(sig(2.0)) + std::log(1 - sig(-30.0)) + std::log(0.5)) / 3;
    CHECK(got == Approx(want).epsilon(1e-12));
  }

  TEST_CASE("dropout is the identity in evaluation mode") {
    ad::Tape tape;
    Rng rng(1);
    auto x = tape.leaf(Tensor::matrix(2, 3, 1.5));
    CHECK(ad::dropout(x, 0.5, false, rng).id() == x.id());
    const Tensor y = ad::dropout(x, 0.5, true, rng).value();
    for (double v : y.values()) CHECK((v == 0.0 || v == 3.0));
  }

  TEST_CASE("finite differences catch a wrong backward rule") {
    // x * x recorded with a backward that forgets the factor 2
    ad::ScalarBuilder build = [](ad::Tape& tape, std::span<const ad::Var> p) {
      const Tensor& xv = p[0].value();
      Tensor sq = xv;
      for (auto& v : sq.values()) v *= v;
      auto y = tape.record(ad::OpKind::mul, {p[0].id()}, sq, [](ad::Tape& t, std::size_t self) {
        const std::size_t in = t.input(self, 0);
        Tensor& g = t.grad_buffer(in);
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += t.grad(self)[i] * t.node_value(in)[i];
      });
      return ad::sum(y);
    };
    const std::vector<Tensor> params{Tensor::from_rows({{0.7, -1.3}})};
    const auto report = ad::finite_difference_check(build, params, 1e-5, 1e-4);
    CHECK_FALSE(report.passed);
    CHECK(report.max_relative_error == Approx(0.5).epsilon(1e-6));
  }

  TEST_CASE("full gradient suite passes") {
    const auto result = run_gradcheck_suite();
    for (const auto& c : result.cases) {
      INFO(c.name << ": " << c.report.summary());
      CHECK(c.report.passed);
    }
    CHECK(result.max_relative_error < 1e-4);
    CHECK(result.passed);
  }
}
