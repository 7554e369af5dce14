#include <catch2/catch_amalgamated.hpp>

#include "hairtx/autodiff.hpp"
#include "hairtx/rng.hpp"
#include "hairtx/tensor.hpp"
#include "test_util.hpp"

using namespace hairtx;
namespace tu = test_util;

TEST_CASE("tensor basics", "[tensor]") {
  Tensor t({2, 3});
  REQUIRE(t.numel() == 6);
  t.at(1, 2) = 5.0;
  REQUIRE(t.data[5] == 5.0);
  Tensor c({3, 2, 2});
  c.at(2, 1, 0) = 7.0;
  REQUIRE(c.data[2 * 4 + 1 * 2 + 0] == 7.0);
  REQUIRE(Tensor::scalar(3.5).numel() == 1);
}

TEST_CASE("rng determinism and normality", "[tensor]") {
  Rng a(42), b(42), c(43);
  for (int i = 0; i < 100; ++i) REQUIRE(a.normal() == b.normal());
  bool differs = false;
  Rng a2(42);
  for (int i = 0; i < 10; ++i)
    if (a2.normal() != c.normal()) differs = true;
  REQUIRE(differs);
  // crude moment check
  Rng r(7);
  double s = 0, s2 = 0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    const double x = r.normal();
    s += x;
    s2 += x * x;
  }
  REQUIRE(std::abs(s / n) < 0.03);
  REQUIRE(std::abs(s2 / n - 1.0) < 0.05);
}

namespace {

// Builds a scalar from a flat parameter vector through the op under test and
// checks its gradient by central differences.
void gradcheck_scalar(const std::function<ad::Var(const ad::Var&)>& build, int n, uint64_t seed,
                      double scale = 1.0) {
  std::vector<double> x = tu::random_vector(n, seed, scale);
  Tensor xt({n});
  xt.data = x;
  ad::Var theta = ad::Var::leaf(xt, true);
  ad::Var out = build(theta);
  out.backward();
  std::vector<double> analytic = theta.grad().data;
  auto f = [&](const std::vector<double>& v) {
    Tensor t({n});
    t.data = v;
    return build(ad::Var::leaf(t, false)).scalar();
  };
  auto res = tu::check_gradient(f, x, analytic, std::min(n, 40), seed ^ 0x9e37u);
  INFO("worst rel err " << res.worst_rel);
  REQUIRE(res.failed == 0);
}

}  // namespace

TEST_CASE("autodiff elementwise and reductions", "[autodiff]") {
  gradcheck_scalar(
      [](const ad::Var& t) {
        ad::Var a = ad::slice(t, 0, {6});
        ad::Var b = ad::slice(t, 6, {6});
        return ad::sum(ad::mul(ad::add(a, b), ad::sub(a, ad::scale(b, 0.7))));
      },
      12, 101);
  gradcheck_scalar(
      [](const ad::Var& t) {
        ad::Var a = ad::slice(t, 0, {5});
        ad::Var s = ad::slice(t, 5, {1});
        return ad::sum(ad::div(a, ad::add_const(ad::square(s), 1.0)));
      },
      6, 102);
  gradcheck_scalar(
      [](const ad::Var& t) {
        ad::Var a = ad::slice(t, 0, {8});
        return ad::mean(ad::sqrt(ad::add_const(ad::square(a), 0.5)));
      },
      8, 103);
  gradcheck_scalar(
      [](const ad::Var& t) {
        ad::Var a = ad::slice(t, 0, {7});
        return ad::sum(ad::max_const(a, 0.1));
      },
      7, 104);
}

TEST_CASE("autodiff scalar broadcast rules", "[autodiff]") {
  // (vector op scalar) both directions
  gradcheck_scalar(
      [](const ad::Var& t) {
        ad::Var v = ad::slice(t, 0, {5});
        ad::Var s = ad::slice(t, 5, {1});
        ad::Var q = ad::mul(v, s);        // vec * scalar
        ad::Var r = ad::div(s, ad::add_const(ad::square(v), 1.0));  // scalar / vec
        return ad::add(ad::sum(q), ad::sum(r));
      },
      6, 105);
}

TEST_CASE("autodiff structured ops", "[autodiff]") {
  gradcheck_scalar(
      [](const ad::Var& t) {
        ad::Var img = ad::slice(t, 0, {3, 4, 4});
        Tensor m({2, 3});
        Rng rng(55);
        for (double& v : m.data) v = rng.normal();
        return ad::sqnorm(ad::channel_mix(img, m));
      },
      48, 106, 0.5);
  gradcheck_scalar(
      [](const ad::Var& t) {
        ad::Var img = ad::slice(t, 0, {2, 4, 4});
        return ad::sqnorm(ad::avg_pool2(img));
      },
      32, 107);
  gradcheck_scalar(
      [](const ad::Var& t) {
        ad::Var map = ad::slice(t, 0, {3, 3});
        return ad::sqnorm(ad::upsample_nearest(map, 3));
      },
      9, 108);
  gradcheck_scalar(
      [](const ad::Var& t) {
        ad::Var x = ad::slice(t, 0, {4});
        Tensor m({3, 4});
        Rng rng(66);
        for (double& v : m.data) v = rng.normal();
        return ad::sqnorm(ad::matvec(m, x));
      },
      4, 109);
  gradcheck_scalar(
      [](const ad::Var& t) {
        ad::Var f = ad::slice(t, 0, {3, 2, 2});
        return ad::sqnorm(ad::gram(f));
      },
      12, 110, 0.7);
  gradcheck_scalar(
      [](const ad::Var& t) {
        ad::Var m = ad::slice(t, 0, {4, 4});
        return ad::sum(ad::mul(m, ad::roll2d(m, 1, 0)));
      },
      16, 111);
  gradcheck_scalar(
      [](const ad::Var& t) {
        ad::Var f = ad::slice(t, 0, {4, 3, 3});
        return ad::mean(ad::square(ad::normalize_channels(f)));
      },
      36, 112, 0.8);
  gradcheck_scalar(
      [](const ad::Var& t) {
        ad::Var img = ad::slice(t, 0, {3, 4, 4});
        Tensor mask({4, 4});
        for (int i = 0; i < 16; ++i) mask.data[static_cast<size_t>(i)] = i % 3 == 0 ? 1.0 : 0.0;
        return ad::sum(ad::sum_hw(ad::mul_bcast_hw(img, mask)));
      },
      48, 113);
}

TEST_CASE("autodiff value correctness spot checks", "[autodiff]") {
  // gram of gamma = [[1,2],[3,4],[5,6]] (HW=3, C=2) -> [[35,44],[44,56]]
  Tensor f({2, 3, 1});
  // gamma rows are per-position channel vectors: positions p=0..2, gamma[p][c]
  // f layout is [C,H,W]; f(c, p, 0) = gamma[p][c]
  f.at(0, 0, 0) = 1;
  f.at(1, 0, 0) = 2;
  f.at(0, 1, 0) = 3;
  f.at(1, 1, 0) = 4;
  f.at(0, 2, 0) = 5;
  f.at(1, 2, 0) = 6;
  Tensor g = ad::gram(ad::Var::leaf(f)).value();
  REQUIRE(g.at(0, 0) == 35.0);
  REQUIRE(g.at(0, 1) == 44.0);
  REQUIRE(g.at(1, 0) == 44.0);
  REQUIRE(g.at(1, 1) == 56.0);

  // avg_pool2 of a constant map is the constant
  Tensor c = Tensor::full({4, 4}, 3.25);
  Tensor p = ad::avg_pool2(ad::Var::leaf(c)).value();
  for (double v : p.data) REQUIRE(v == 3.25);

  // roll2d shifts circularly
  Tensor m({2, 2});
  m.at(0, 0) = 1;
  m.at(0, 1) = 2;
  m.at(1, 0) = 3;
  m.at(1, 1) = 4;
  Tensor r = ad::roll2d(ad::Var::leaf(m), 0, 1).value();
  REQUIRE(r.at(0, 0) == 2);
  REQUIRE(r.at(0, 1) == 1);
}

TEST_CASE("autodiff shared subexpression accumulates", "[autodiff]") {
  // d/dx of (x*x) must be 2x when both operands are the same node
  Tensor x({3});
  x.data = {1.0, -2.0, 0.5};
  ad::Var v = ad::Var::leaf(x, true);
  ad::Var out = ad::sum(ad::mul(v, v));
  out.backward();
  REQUIRE(v.grad().data[0] == Catch::Approx(2.0));
  REQUIRE(v.grad().data[1] == Catch::Approx(-4.0));
  REQUIRE(v.grad().data[2] == Catch::Approx(1.0));
}
