#include <catch_amalgamated.hpp>

#include <cmath>
#include <numeric>
#include <random>

#include "ioodg/autodiff.hpp"
#include "test_util.hpp"

using namespace ioodg;
using namespace ioodg::ad;
using Catch::Matchers::WithinAbs;

namespace {

Tensor random_tensor(Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(std::move(shape));
  std::uniform_real_distribution<double> u(lo, hi);
  for (double& v : t.data()) v = u(rng);
  return t;
}

void check_passes(const std::function<Var(Graph&, Var)>& f, const Tensor& at) {
  const auto report = gradient_check(f, at, 1e-5, 1e-6);
  INFO("max rel error " << report.max_rel_error);
  CHECK(report.passed);
}

}  // namespace

TEST_CASE("softmax of uniform logits is uniform", "[autodiff]") {
  Graph g;
  const Var y = softmax(g.constant(Tensor::matrix(1, 3, {0, 0, 0})), 1);
  for (double v : y.value().data()) CHECK_THAT(v, WithinAbs(1.0 / 3.0, 1e-15));
}

TEST_CASE("max_pool of a constant tensor is that constant", "[autodiff]") {
  Graph g;
  const Var x = g.constant(Tensor(Shape{5, 4}, 2.5));
  for (int axis : {0, 1})
    for (double v : max_pool(x, axis).value().data()) CHECK(v == 2.5);
  CHECK(max_pool(x, 0).shape() == Shape{1, 4});
  CHECK(max_pool(x, 1).shape() == Shape{5, 1});
}

TEST_CASE("matmul matches the triple loop", "[autodiff]") {
  std::mt19937_64 rng(3);
  for (int rep = 0; rep < 20; ++rep) {
    const Tensor a = random_tensor({2, 3}, rng), b = random_tensor({3, 2}, rng);
    Graph g;
    const Tensor& c = matmul(g.constant(a), g.constant(b)).value();
    for (std::size_t i = 0; i < 2; ++i)
      for (std::size_t j = 0; j < 2; ++j) {
        double s = 0.0;
        for (std::size_t k = 0; k < 3; ++k) s += a(i, k) * b(k, j);
        CHECK_THAT(c(i, j), WithinAbs(s, 1e-12));
      }
  }
}

TEST_CASE("elementwise forward values", "[autodiff]") {
  Graph g;
  const Var a = g.constant(Tensor::matrix(1, 4, {-2, -0.5, 0.5, 3}));
  const Var b = g.constant(Tensor::matrix(1, 4, {1, 2, 3, 4}));
  CHECK(add(a, b).value().data()[3] == 7.0);
  CHECK(sub(a, b).value().data()[0] == -3.0);
  CHECK(mul(a, b).value().data()[2] == 1.5);
  CHECK(scale(a, -2.0).value().data()[3] == -6.0);
  const Tensor& r = relu(a).value();
  CHECK(r[0] == 0.0);
  CHECK(r[3] == 3.0);
  const Tensor& l = leaky_relu(a, 0.2).value();
  CHECK_THAT(l[0], WithinAbs(-0.4, 1e-15));
  CHECK(l[2] == 0.5);
  CHECK(sum(b).value().item() == 10.0);
  CHECK(mean(b).value().item() == 2.5);
  CHECK(sq_diff_sum(a, b).value().item() == 9.0 + 6.25 + 6.25 + 1.0);

  const Var bias = g.constant(Tensor(Shape{4}, std::vector<double>{1, 1, 1, 1}));
  CHECK(add_bias(a, bias).value()[0] == -1.0);

  const Var m = g.constant(Tensor::matrix(3, 2, {0, 1, 2, 3, 4, 5}));
  const std::vector<std::size_t> rows{2, 0, 2};
  const Tensor& gathered = gather_rows(m, rows).value();
  CHECK(gathered.data()[0] == 4.0);
  CHECK(gathered.data()[3] == 1.0);
  const Tensor& cat0 = concat(m, m, 0).value();
  CHECK(cat0.shape() == Shape{6, 2});
  const Tensor& cat1 = concat(m, m, 1).value();
  CHECK(cat1.shape() == Shape{3, 4});
  CHECK(cat1(1, 2) == 2.0);
  CHECK(transpose(m).value()(1, 2) == 5.0);
}

TEST_CASE("cross entropy of uniform logits is log C", "[autodiff]") {
  Graph g;
  const std::vector<std::size_t> label{7};
  const Var l = cross_entropy(g.constant(Tensor(Shape{1, 10}, 0.0)), label);
  CHECK_THAT(l.value().item(), WithinAbs(std::log(10.0), 1e-12));
}

TEST_CASE("segment softmax and segment sum", "[autodiff]") {
  Graph g;
  const Var e = g.constant(Tensor::matrix(5, 1, {0, 0, 1, 2, 3}));
  const std::vector<std::size_t> offsets{0, 2, 5};
  const Tensor& w = segment_softmax(e, offsets).value();
  CHECK_THAT(w[0] + w[1], WithinAbs(1.0, 1e-15));
  CHECK_THAT(w[2] + w[3] + w[4], WithinAbs(1.0, 1e-15));
  CHECK_THAT(w[0], WithinAbs(0.5, 1e-15));
  const Var x = g.constant(Tensor::matrix(5, 2, {1, 2, 3, 4, 5, 6, 7, 8, 9, 10}));
  const Tensor& s = segment_sum(x, offsets).value();
  CHECK(s.shape() == Shape{2, 2});
  CHECK(s(0, 0) == 4.0);
  CHECK(s(1, 1) == 24.0);
  const Var rw = g.constant(Tensor::matrix(5, 1, {1, 0, 2, 0, -1}));
  const Tensor& rs = row_scale(x, rw).value();
  CHECK(rs(2, 1) == 12.0);
  CHECK(rs(1, 0) == 0.0);
  CHECK(rs(4, 0) == -9.0);
}

TEST_CASE("gradient of sum is all ones, of squared norm is 2w", "[autodiff]") {
  std::mt19937_64 rng(5);
  const Tensor w0 = random_tensor({3, 4}, rng);
  Graph g;
  const Var w = g.variable(w0);
  g.backward(sum(w));
  for (double v : g.grad(w)->data()) CHECK(v == 1.0);

  Graph h;
  const Var w2 = h.variable(w0);
  h.backward(sq_diff_sum(w2, h.constant(Tensor(w0.shape(), 0.0))));
  for (std::size_t i = 0; i < w0.size(); ++i) CHECK((*h.grad(w2))[i] == 2.0 * w0[i]);
}

TEST_CASE("each op passes a finite-difference check", "[autodiff]") {
  std::mt19937_64 rng(11);
  const Tensor x = random_tensor({3, 4}, rng);
  const Tensor other = random_tensor({3, 4}, rng);
  const Tensor right = random_tensor({4, 2}, rng);
  const Tensor weights = random_tensor({3, 4}, rng);
  // A fixed random projection so every op is checked against a non-trivial
  // upstream gradient.
  auto project = [&weights](Graph& g, Var y) {
    if (y.shape() == weights.shape()) return sum(mul(y, g.constant(weights)));
    return sum(mul(y, y));
  };

  SECTION("matmul") { check_passes([&](Graph& g, Var v) { return sum(matmul(v, g.constant(right))); }, x); }
  SECTION("transpose") { check_passes([&](Graph& g, Var v) { return project(g, transpose(transpose(v))); }, x); }
  SECTION("add / sub / mul") {
    check_passes([&](Graph& g, Var v) { return project(g, mul(add(v, g.constant(other)), sub(v, g.constant(other)))); }, x);
  }
  SECTION("scale") { check_passes([&](Graph& g, Var v) { return project(g, scale(v, -1.7)); }, x); }
  SECTION("add_bias") {
    const Tensor rows = random_tensor({3, 4}, rng);
    check_passes([&](Graph& g, Var v) { return project(g, add_bias(g.constant(rows), transpose(v))); },
                 random_tensor({4, 1}, rng));
  }
  SECTION("relu") { check_passes([&](Graph& g, Var v) { return project(g, relu(v)); }, x); }
  SECTION("leaky_relu") { check_passes([&](Graph& g, Var v) { return project(g, leaky_relu(v, 0.2)); }, x); }
  SECTION("softmax rows") { check_passes([&](Graph& g, Var v) { return project(g, softmax(v, 1)); }, x); }
  SECTION("softmax columns") { check_passes([&](Graph& g, Var v) { return project(g, softmax(v, 0)); }, x); }
  SECTION("max_pool") {
    check_passes([&](Graph&, Var v) { return sum(mul(max_pool(v, 0), max_pool(v, 0))); }, x);
  }
  SECTION("concat") {
    check_passes([&](Graph&, Var v) { return sum(mul(concat(v, v, 1), concat(v, v, 1))); }, x);
    check_passes([&](Graph& g, Var v) { return sum(mul(concat(v, g.constant(other), 0), concat(v, g.constant(other), 0))); }, x);
  }
  SECTION("gather_rows with repeats") {
    const std::vector<std::size_t> rows{2, 2, 0};
    check_passes([&](Graph& g, Var v) { return project(g, gather_rows(v, rows)); }, x);
  }
  SECTION("mean") { check_passes([&](Graph&, Var v) { return mean(mul(v, v)); }, x); }
  SECTION("sq_diff_sum") { check_passes([&](Graph& g, Var v) { return sq_diff_sum(v, g.constant(other)); }, x); }
  SECTION("segment ops and row_scale") {
    const std::vector<std::size_t> offsets{0, 1, 3};
    const Tensor feats = random_tensor({3, 2}, rng);
    check_passes(
        [&](Graph& g, Var v) {
          const Var w = segment_softmax(v, offsets);
          const Var s = segment_sum(row_scale(g.constant(feats), w), offsets);
          return sum(mul(s, s));
        },
        random_tensor({3, 1}, rng));
  }
}

TEST_CASE("gradient check of a linear sum is exact up to rounding", "[autodiff]") {
  std::mt19937_64 rng(2);
  const auto report = gradient_check([](Graph&, Var v) { return sum(v); }, random_tensor({4, 3}, rng), 1e-4, 1e-4);
  // Only rounding in (f(w+h) - f(w-h)) / 2h remains.
  CHECK(report.max_rel_error < 1e-9);
  CHECK(report.passed);
}

TEST_CASE("softmax cross entropy passes at 1e-4", "[autodiff]") {
  std::mt19937_64 rng(8);
  const std::vector<std::size_t> labels{0, 3, 2, 4};
  for (int rep = 0; rep < 5; ++rep) {
    const auto report = gradient_check([&](Graph&, Var v) { return cross_entropy(v, labels); },
                                       random_tensor({4, 5}, rng, -3, 3), 1e-4, 1e-4);
    CHECK(report.passed);
  }
}

TEST_CASE("max_pool at a tie is flagged non-differentiable", "[autodiff]") {
  const Tensor at = Tensor::matrix(3, 1, {0.5, 0.5, -1.0});
  const auto report = gradient_check([](Graph&, Var v) { return sum(max_pool(v, 0)); }, at, 1e-4, 1e-4);
  CHECK(report.passed);
  CHECK(report.entries[0].non_differentiable >= 1);
  CHECK(report.entries[0].checked + report.entries[0].non_differentiable == 3);
}

TEST_CASE("max_pool routes the gradient to the lowest tied index", "[autodiff]") {
  Graph g;
  const Var x = g.variable(Tensor::matrix(4, 2, {1, 0, 3, 5, 3, 5, 2, 5}));
  g.backward(sum(max_pool(x, 0)));
  const Tensor& gr = *g.grad(x);
  const std::vector<double> expected{0, 0, 1, 1, 0, 0, 0, 0};
  for (std::size_t i = 0; i < expected.size(); ++i) CHECK(gr[i] == expected[i]);

  Graph h;
  const Var y = h.variable(Tensor::matrix(2, 3, {7, 7, 1, 0, 2, 2}));
  h.backward(sum(max_pool(y, 1)));
  const std::vector<double> row_expected{1, 0, 0, 0, 1, 0};
  for (std::size_t i = 0; i < row_expected.size(); ++i) CHECK((*h.grad(y))[i] == row_expected[i]);
}

TEST_CASE("softmax rows sum to one and its VJP is orthogonal to ones", "[autodiff][property]") {
  std::mt19937_64 rng(21);
  for (int rep = 0; rep < 100; ++rep) {
    const Tensor logits = random_tensor({4, 6}, rng, -8, 8);
    const Tensor upstream = random_tensor({4, 6}, rng);
    Graph g;
    const Var x = g.variable(logits);
    const Var y = softmax(x, 1);
    for (std::size_t r = 0; r < 4; ++r) {
      double s = 0.0;
      for (std::size_t c = 0; c < 6; ++c) s += y.value()(r, c);
      CHECK_THAT(s, WithinAbs(1.0, 1e-12));
    }
    g.backward(sum(mul(y, g.constant(upstream))));
    for (std::size_t r = 0; r < 4; ++r) {
      double s = 0.0;
      for (std::size_t c = 0; c < 6; ++c) s += (*g.grad(x))(r, c);
      CHECK_THAT(s, WithinAbs(0.0, 1e-10));
    }
  }
}

TEST_CASE("backward is linear in the loss", "[autodiff][property]") {
  std::mt19937_64 rng(31);
  const auto f = [](Var v) { return sum(mul(softmax(v, 1), v)); };
  const auto h = [](Var v) { return mean(relu(matmul(v, transpose(v)))); };
  for (int rep = 0; rep < 50; ++rep) {
    const Tensor x = random_tensor({3, 4}, rng);
    std::uniform_real_distribution<double> u(-3.0, 3.0);
    const double a = u(rng), b = u(rng);
    auto grad_of = [&x](auto&& loss) {
      Graph g;
      const Var v = g.variable(x);
      g.backward(loss(v));
      return *g.grad(v);
    };
    const Tensor gf = grad_of(f), gh = grad_of(h);
    const Tensor combined = grad_of([&](Var v) { return add(scale(f(v), a), scale(h(v), b)); });
    for (std::size_t i = 0; i < x.size(); ++i)
      CHECK_THAT(combined[i], WithinAbs(a * gf[i] + b * gh[i], 1e-12));
  }
}

TEST_CASE("forward and backward are bit-identical across runs", "[autodiff][property]") {
  auto run = [] {
    std::mt19937_64 rng(77);
    const Tensor x = random_tensor({6, 5}, rng);
    const Tensor w = random_tensor({5, 5}, rng);
    Graph g;
    const Var v = g.variable(x);
    const Var y = softmax(leaky_relu(matmul(v, g.constant(w)), 0.2), 1);
    const Var loss = sum(mul(max_pool(y, 0), max_pool(y, 0)));
    g.backward(loss);
    return std::pair{loss.value().item(), *g.grad(v)};
  };
  const auto [l1, g1] = run();
  const auto [l2, g2] = run();
  CHECK(l1 == l2);
  for (std::size_t i = 0; i < g1.size(); ++i) CHECK(g1[i] == g2[i]);
}

TEST_CASE("errors carry stable codes", "[autodiff][errors]") {
  Graph g;
  const Var a = g.constant(Tensor(Shape{2, 3}, 1.0));
  const Var b = g.constant(Tensor(Shape{2, 2}, 1.0));
  CHECK(code_of([&] { matmul(a, a); }) == ErrorCode::ShapeMismatch);
  CHECK(code_of([&] { add(a, b); }) == ErrorCode::ShapeMismatch);
  CHECK(code_of([&] { concat(a, b, 0); }) == ErrorCode::ShapeMismatch);
  const std::vector<std::size_t> bad_row{2};
  CHECK(code_of([&] { gather_rows(a, bad_row); }) == ErrorCode::ShapeMismatch);
  CHECK(code_of([&] { Tensor(Shape{2, 2}, std::vector<double>{1, 2, 3}); }) == ErrorCode::ShapeMismatch);

  Graph h;
  const Var v = h.variable(Tensor(Shape{2, 3}, 1.0));
  CHECK(code_of([&] { h.backward(v); }) == ErrorCode::NotScalar);

  const std::vector<std::size_t> labels{0, 3};
  CHECK(code_of([&] { cross_entropy(a, labels); }) == ErrorCode::BadLabel);

  const Var huge = g.constant(Tensor(Shape{1, 2}, 1e300));
  CHECK(code_of([&] { mul(huge, huge); }) == ErrorCode::NonFinite);
  CHECK(code_of([&] { g.constant(Tensor(Shape{1}, std::nan(""))); }) == ErrorCode::NonFinite);
  CHECK(code_of([&] { gradient_check([](Graph&, Var v) { return sum(v); }, Tensor(Shape{1}, 0.0), 0.0, 1e-4); }) ==
        ErrorCode::BadConfig);
}

TEST_CASE("a wrong ReLU backward is caught by the gradient check", "[autodiff][negative-control]") {
  std::mt19937_64 rng(4);
  const Tensor x = random_tensor({4, 4}, rng);
  const auto f = [](Graph&, Var v) { return sum(mul(relu(v), v)); };
  CHECK(gradient_check(f, x, 1e-5, 1e-4).passed);
  testing::inject_fault(testing::Fault::ReluBackward);
  const auto report = gradient_check(f, x, 1e-5, 1e-4);
  testing::inject_fault(testing::Fault::None);
  CHECK_FALSE(report.passed);
}
