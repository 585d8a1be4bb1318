#include <catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "ioodg/losses.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace ioodg;
using namespace ioodg::loss;
using ad::Graph;
using ad::Shape;
using ad::Tensor;
using ad::Var;
using Catch::Matchers::WithinAbs;

namespace {

Tensor random_tensor(Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(std::move(shape));
  std::uniform_real_distribution<double> u(lo, hi);
  for (double& v : t.data()) v = u(rng);
  return t;
}

}  // namespace

TEST_CASE("Chamfer loss examples", "[losses]") {
  SECTION("single anchor at the origin against (1,0,0)") {
    Graph g;
    const Var a = g.variable(Tensor::matrix(1, 3, {0, 0, 0}));
    const Var l = loss_cd(a, geo::PointCloud({{1, 0, 0}}));
    CHECK(l.value().item() == 2.0);
    g.backward(l);
    const Tensor& gr = *g.grad(a);
    CHECK(gr[0] == -4.0);
    CHECK(gr[1] == 0.0);
    CHECK(gr[2] == 0.0);
    const auto report = ad::gradient_check([](Graph&, Var v) { return loss_cd(v, geo::PointCloud({{1, 0, 0}})); },
                                           Tensor::matrix(1, 3, {0, 0, 0}), 1e-4, 1e-4);
    CHECK(report.passed);
  }
  SECTION("anchors that are a subset of the cloud leave only the second term") {
    const geo::PointCloud x({{0, 0, 0}, {1, 0, 0}, {0, 2, 0}});
    Graph g;
    const Var a = g.constant(Tensor::matrix(2, 3, {0, 0, 0, 1, 0, 0}));
    // Only (0,2,0) is away from the anchors; its nearest anchor is the origin.
    CHECK_THAT(loss_cd(a, x).value().item(), WithinAbs(4.0 / 3.0, 1e-15));
  }
  SECTION("anchors equal to the cloud give zero value and gradient") {
    std::mt19937_64 rng(1);
    const auto pts = oracle::random_points(rng, 7);
    Graph g;
    const Var a = g.variable(Tensor::from_points(pts));
    const Var l = loss_cd(a, geo::PointCloud(pts));
    CHECK(l.value().item() == 0.0);
    g.backward(l);
    for (double v : g.grad(a)->data()) CHECK(v == 0.0);
  }
}

TEST_CASE("Chamfer loss matches the geometry oracle and finite differences", "[losses][property]") {
  std::mt19937_64 rng(2);
  for (int rep = 0; rep < 100; ++rep) {
    const auto a = oracle::random_points(rng, 1 + rep % 6);
    const auto x = oracle::random_points(rng, 2 + rep % 9);
    Graph g;
    const double value = loss_cd(g.constant(Tensor::from_points(a)), geo::PointCloud(x)).value().item();
    CHECK_THAT(value, WithinAbs(oracle::chamfer(a, x), 1e-9));
    CHECK_THAT(value, WithinAbs(geo::chamfer_distance(a, x), 1e-9));

    const geo::PointCloud cloud(x);
    const auto report = ad::gradient_check([&cloud](Graph&, Var v) { return loss_cd(v, cloud); },
                                           Tensor::from_points(a), 1e-4, 1e-4);
    INFO("instance " << rep << " max rel error " << report.max_rel_error);
    CHECK(report.passed);
  }
}

TEST_CASE("Chamfer ties route the gradient to the lowest index", "[losses]") {
  // (0,0,0) is equidistant from both cloud points.
  Graph g;
  const Var a = g.variable(Tensor::matrix(1, 3, {0, 0, 0}));
  g.backward(loss_cd(a, geo::PointCloud({{1, 0, 0}, {-1, 0, 0}})));
  // First term pulls toward (1,0,0): 2(a - x0) = (-2,0,0). Second term: both
  // points pull on the only anchor and cancel.
  CHECK((*g.grad(a))[0] == -2.0);
}

TEST_CASE("local invariance loss", "[losses]") {
  std::mt19937_64 rng(3);
  Graph g;
  SECTION("identical branches give zero") {
    const Var f = g.constant(random_tensor({3, 4}, rng));
    const std::vector<std::pair<Var, Var>> layers{{f, f}, {f, f}};
    CHECK(loss_local(g, layers).value().item() == 0.0);
  }
  SECTION("one entry differing by three gives nine") {
    Tensor a(Shape{2, 2}, 0.5);
    Tensor b = a;
    b(1, 0) += 3.0;
    const std::vector<std::pair<Var, Var>> layers{{g.constant(a), g.constant(b)}};
    CHECK(loss_local(g, layers).value().item() == 9.0);
  }
  SECTION("two random 2x2 layers match the double loop") {
    for (int rep = 0; rep < 50; ++rep) {
      const Tensor a1 = random_tensor({2, 2}, rng), b1 = random_tensor({2, 2}, rng);
      const Tensor a2 = random_tensor({2, 2}, rng), b2 = random_tensor({2, 2}, rng);
      double want = 0.0;
      for (std::size_t i = 0; i < 2; ++i)
        for (std::size_t j = 0; j < 2; ++j)
          want += std::pow(a1(i, j) - b1(i, j), 2) + std::pow(a2(i, j) - b2(i, j), 2);
      const std::vector<std::pair<Var, Var>> layers{{g.constant(a1), g.constant(b1)}, {g.constant(a2), g.constant(b2)}};
      CHECK_THAT(loss_local(g, layers).value().item(), WithinAbs(want, 1e-12));
      CHECK_THAT(loss_local(g, layers, true).value().item(), WithinAbs(want / 8.0, 1e-12));
    }
  }
  SECTION("shape mismatch") {
    const std::vector<std::pair<Var, Var>> layers{{g.constant(Tensor(Shape{2, 2})), g.constant(Tensor(Shape{2, 3}))}};
    CHECK(code_of([&] { loss_local(g, layers); }) == ErrorCode::ShapeMismatch);
  }
}

TEST_CASE("global invariance loss", "[losses]") {
  std::mt19937_64 rng(4);
  Graph g;
  const Tensor a = random_tensor({1, 8}, rng);
  CHECK(loss_global(g.constant(a), g.constant(a)).value().item() == 0.0);
  Tensor b = a;
  b[3] += 1.0;
  CHECK_THAT(loss_global(g.constant(a), g.constant(b)).value().item(), WithinAbs(1.0, 1e-15));
  for (int rep = 0; rep < 50; ++rep) {
    const Tensor x = random_tensor({1, 8}, rng), y = random_tensor({1, 8}, rng);
    double want = 0.0;
    for (std::size_t k = 0; k < 8; ++k) want += (x[k] - y[k]) * (x[k] - y[k]);
    CHECK_THAT(loss_global(g.constant(x), g.constant(y)).value().item(), WithinAbs(want, 1e-12));
  }
  CHECK(code_of([&] { loss_global(g.constant(Tensor(Shape{1, 8})), g.constant(Tensor(Shape{1, 7}))); }) ==
        ErrorCode::ShapeMismatch);
}

TEST_CASE("task loss", "[losses]") {
  Graph g;
  const std::vector<std::size_t> one{2};
  CHECK(loss_task(g.constant(Tensor::matrix(1, 3, {0, 0, 40})), one).value().item() < 1e-6);
  const std::vector<std::size_t> seven{7};
  CHECK_THAT(loss_task(g.constant(Tensor(Shape{1, 10}, 0.0)), seven).value().item(), WithinAbs(2.302585, 1e-6));

  const Tensor logits = Tensor::matrix(3, 3, {1.0, 2.0, 0.5, -1.0, 0.0, 3.0, 0.2, 0.2, 0.2});
  const std::vector<std::size_t> labels{1, 0, 2};
  double want = 0.0;
  for (std::size_t i = 0; i < 3; ++i) {
    double z = 0.0;
    for (std::size_t j = 0; j < 3; ++j) z += std::exp(logits(i, j));
    want += -std::log(std::exp(logits(i, labels[i])) / z);
  }
  CHECK_THAT(loss_task(g.constant(logits), labels).value().item(), WithinAbs(want / 3.0, 1e-12));

  const std::vector<std::size_t> bad{1, 0, 3};
  CHECK(code_of([&] { loss_task(g.constant(logits), bad); }) == ErrorCode::BadLabel);
}

TEST_CASE("weighted total", "[losses]") {
  const LossBreakdown unit = loss_total(1, 2, 3, 4, LossWeights{});
  CHECK(unit.total == 10.0);
  CHECK(loss_total(1, 2, 3, 4, LossWeights{0, 0, 0}).total == 1.0);

  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 5.0);
  for (int rep = 0; rep < 100; ++rep) {
    const double t = u(rng), c = u(rng), l = u(rng), gl = u(rng);
    const LossWeights w{u(rng), u(rng), u(rng)};
    const LossBreakdown b = loss_total(t, c, l, gl, w);
    CHECK_THAT(b.total, WithinAbs(t + w.alpha * c + w.beta * l + w.gamma * gl, 1e-9));

    // Doubling a weight doubles exactly that term's contribution.
    const double base = b.total;
    CHECK_THAT(loss_total(t, c, l, gl, {2 * w.alpha, w.beta, w.gamma}).total - base, WithinAbs(w.alpha * c, 1e-9));
    CHECK_THAT(loss_total(t, c, l, gl, {w.alpha, 2 * w.beta, w.gamma}).total - base, WithinAbs(w.beta * l, 1e-9));
    CHECK_THAT(loss_total(t, c, l, gl, {w.alpha, w.beta, 2 * w.gamma}).total - base, WithinAbs(w.gamma * gl, 1e-9));

    Graph g;
    const auto s = [&g](double v) { return g.constant(Tensor::scalar(v)); };
    CHECK_THAT(combine(g, s(t), s(c), s(l), s(gl), w).value().item(), WithinAbs(b.total, 1e-9));
  }
  CHECK(code_of([] { loss_total(std::nan(""), 0, 0, 0, {}); }) == ErrorCode::NonFinite);
  CHECK(code_of([] { loss_total(0, INFINITY, 0, 0, {}); }) == ErrorCode::NonFinite);

  Graph g;
  CHECK(combine(g, g.constant(Tensor::scalar(1.5)), Var{}, Var{}, Var{}, {}).value().item() == 1.5);
}
