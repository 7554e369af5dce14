#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "hairtx/generator.hpp"
#include "test_util.hpp"

using namespace hairtx;
namespace tu = test_util;

namespace {

LatentState random_state(const GeneratorBackend& b, uint64_t seed, double scale = 1.0) {
  LatentState s = init_latent_state(b, seed);
  Rng rng(seed ^ 0xabcdu);
  for (double& v : s.w_plus.data) v += rng.normal() * scale;
  for (Tensor& n : s.noise)
    for (double& v : n.data) v += rng.normal() * scale * 0.3;
  return s;
}

}  // namespace

TEST_CASE("toy backend zero state gives the bias image", "[generator]") {
  AffineBackend toy = AffineBackend::toy();
  const auto& g = toy.geometry();
  REQUIRE(g.layers == 5);
  REQUIRE(g.latent_dim == 8);
  REQUIRE(g.resolution == 32);
  REQUIRE(g.noise_sides == std::vector<int>{4, 8, 16, 32, 32});

  LatentState zero;
  zero.w_plus = Tensor({5, 8});
  for (int side : g.noise_sides) zero.noise.push_back(Tensor({side, side}));
  Image img = toy.synthesize_export(zero);
  for (double v : img.data) REQUIRE(v == 0.5);
}

TEST_CASE("synthesize is deterministic and checks geometry", "[generator]") {
  AffineBackend toy = AffineBackend::toy();
  LatentState s = random_state(toy, 11);
  Image a = toy.synthesize_export(s);
  Image b = toy.synthesize_export(s);
  REQUIRE(a.data == b.data);

  LatentState bad = s;
  bad.w_plus = Tensor({4, 8});
  REQUIRE_THROWS_AS(toy.synthesize_export(bad), ShapeError);
  LatentState bad2 = s;
  bad2.noise[0] = Tensor({8, 8});
  REQUIRE_THROWS_AS(toy.synthesize_export(bad2), ShapeError);
}

TEST_CASE("toy backend is affine", "[generator]") {
  AffineBackend toy = AffineBackend::toy();
  const auto& g = toy.geometry();
  LatentState zero;
  zero.w_plus = Tensor({g.layers, g.latent_dim});
  for (int side : g.noise_sides) zero.noise.push_back(Tensor({side, side}));

  LatentState s1 = random_state(toy, 21, 0.7);
  LatentState s2 = random_state(toy, 22, 0.7);
  LatentState sum;
  sum.w_plus = s1.w_plus;
  for (int i = 0; i < sum.w_plus.numel(); ++i) sum.w_plus.data[static_cast<size_t>(i)] += s2.w_plus.data[static_cast<size_t>(i)];
  for (size_t j = 0; j < s1.noise.size(); ++j) {
    Tensor n = s1.noise[j];
    for (int i = 0; i < n.numel(); ++i) n.data[static_cast<size_t>(i)] += s2.noise[j].data[static_cast<size_t>(i)];
    sum.noise.push_back(std::move(n));
  }
  // pre-clamp synthesis: synth(s1+s2) - synth(0) == (synth(s1)-synth(0)) + (synth(s2)-synth(0))
  auto raw = [&](const LatentState& s) { return toy.synthesize(LatentVars::leaves(s)).value(); };
  Tensor y0 = raw(zero), y1 = raw(s1), y2 = raw(s2), ys = raw(sum);
  for (int i = 0; i < y0.numel(); ++i) {
    const double lhs = ys.data[static_cast<size_t>(i)] - y0.data[static_cast<size_t>(i)];
    const double rhs = (y1.data[static_cast<size_t>(i)] - y0.data[static_cast<size_t>(i)]) +
                       (y2.data[static_cast<size_t>(i)] - y0.data[static_cast<size_t>(i)]);
    REQUIRE(lhs == Catch::Approx(rhs).margin(1e-10));
  }
}

TEST_CASE("init_latent_state is seeded and normalized", "[generator]") {
  AffineBackend toy = AffineBackend::toy();
  LatentState a = init_latent_state(toy, 33);
  LatentState b = init_latent_state(toy, 33);
  REQUIRE(a.w_plus.data == b.w_plus.data);
  for (size_t j = 0; j < a.noise.size(); ++j) REQUIRE(a.noise[j].data == b.noise[j].data);

  LatentState c = init_latent_state(toy, 34);
  bool differs = false;
  for (size_t j = 0; j < a.noise.size(); ++j)
    if (a.noise[j].data != c.noise[j].data) differs = true;
  REQUIRE(differs);

  // w rows all equal the mean latent
  for (int l = 0; l < 5; ++l)
    for (int d = 0; d < 8; ++d) REQUIRE(a.w_plus.at(l, d) == toy.mean_latent()[d]);

  // noise maps exactly normalized
  for (const Tensor& n : a.noise) {
    double mu = 0.0;
    for (double v : n.data) mu += v;
    mu /= n.numel();
    double var = 0.0;
    for (double v : n.data) var += (v - mu) * (v - mu);
    var /= n.numel();
    REQUIRE(std::abs(mu) < 1e-9);
    REQUIRE(std::abs(var - 1.0) < 1e-9);
  }
}

TEST_CASE("latent_distance measures offset from the mean latent", "[generator]") {
  AffineBackend toy = AffineBackend::toy();
  LatentState s = init_latent_state(toy, 44);
  REQUIRE(latent_distance(s, toy) == 0.0);

  LatentState one = s;
  one.w_plus.at(2, 3) += 3.0;
  REQUIRE(latent_distance(one, toy) == Catch::Approx(3.0).margin(1e-12));

  // random offset: flat-vector norm oracle
  LatentState r = s;
  Rng rng(45);
  double acc = 0.0;
  for (double& v : r.w_plus.data) {
    const double d = rng.normal();
    v += d;
    acc += d * d;
  }
  REQUIRE(latent_distance(r, toy) == Catch::Approx(std::sqrt(acc)).margin(1e-12));
}

TEST_CASE("synthesize gradients match central differences", "[generator]") {
  AffineBackend toy = AffineBackend::toy();
  LatentState s = random_state(toy, 55, 0.4);
  std::vector<double> x = s.pack();
  const int n = static_cast<int>(x.size());

  // scalar functional: weighted sum of pixels (affine chain -> near-exact FD)
  Tensor w = tu::random_tensor({3, 32, 32}, 56);
  auto value = [&](const std::vector<double>& flat) {
    Tensor t({n});
    t.data = flat;
    ad::Var theta = ad::Var::leaf(std::move(t), false);
    ad::Var img = toy.synthesize(LatentVars::from_flat(theta, toy.geometry()));
    return ad::sum(ad::mul_const(img, w)).scalar();
  };
  Tensor t({n});
  t.data = x;
  ad::Var theta = ad::Var::leaf(std::move(t), true);
  ad::Var img = toy.synthesize(LatentVars::from_flat(theta, toy.geometry()));
  ad::Var out = ad::sum(ad::mul_const(img, w));
  out.backward();
  auto res = tu::check_gradient(value, x, theta.grad().data, 60, 57, 1e-4, 1e-6, 1e-10);
  INFO("worst rel " << res.worst_rel);
  REQUIRE(res.failed == 0);
  REQUIRE(res.worst_rel < 1e-6);  // affine: agreement is near-exact
}

TEST_CASE("pretrained adapter loads a weight descriptor and passes the geometry self-check",
          "[generator]") {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "hairtx_gen_test";
  fs::create_directories(dir);
  const fs::path wpath = dir / "weights.json";
  {
    std::ofstream out(wpath);
    out << R"({
      "layers": 15, "latent_dim": 512, "resolution": 512,
      "noise_sides": [4,8,8,16,16,32,32,64,64,128,128,256,256,512,512],
      "proj_grid": 16, "alpha": 0.05, "seed": 99,
      "mean_latent": [)";
    for (int i = 0; i < 512; ++i) out << (i ? "," : "") << (i % 7 == 0 ? 0.25 : 0.0);
    out << "]}";
  }
  AffineBackend pre = AffineBackend::from_weight_file(wpath.string());
  const auto& g = pre.geometry();
  REQUIRE(g.layers == 15);
  REQUIRE(g.latent_dim == 512);
  REQUIRE(g.resolution == 512);
  REQUIRE(g.noise_sides.size() == 15);

  LatentState s = init_latent_state(pre, 7);
  REQUIRE(latent_distance(s, pre) == 0.0);
  for (int d = 0; d < 512; ++d) REQUIRE(s.w_plus.at(3, d) == pre.mean_latent()[d]);
  Image img = pre.synthesize_export(s);
  REQUIRE(img.dim(1) == 512);
  REQUIRE(img.all_finite());

  // malformed descriptor: noise count must equal layer count
  const fs::path bad = dir / "bad.json";
  {
    std::ofstream out(bad);
    out << R"({"layers": 3, "latent_dim": 8, "resolution": 32, "noise_sides": [4,8]})";
  }
  REQUIRE_THROWS_AS(AffineBackend::from_weight_file(bad.string()), ConfigError);
}
