#include <catch2/catch_amalgamated.hpp>

#include "hairtx/losses.hpp"
#include "hairtx/rng.hpp"
#include "loss_oracles.hpp"
#include "test_util.hpp"

using namespace hairtx;
namespace tu = test_util;

namespace {

BinaryMask center_mask(int r, int margin) {
  BinaryMask m(r, r);
  for (int y = margin; y < r - margin; ++y)
    for (int x = margin; x < r - margin; ++x) m.at(y, x) = 1;
  return m;
}

Image clamped_random_image(std::vector<int> shape, uint64_t seed) {
  Image img = tu::random_tensor(std::move(shape), seed, 0.25);
  for (double& v : img.data) v = std::clamp(v + 0.5, 0.0, 1.0);
  return img;
}

}  // namespace

TEST_CASE("face_loss zero cases and mask support", "[losses]") {
  ToyExtractor ex;
  const int r = 16;
  Image a = clamped_random_image({3, r, r}, 201);
  BinaryMask m = center_mask(r, 4);
  REQUIRE(face_loss(ex, a, a, m) == 0.0);

  // differences strictly outside the mask change nothing
  Image b = a;
  for (int y = 0; y < r; ++y)
    for (int x = 0; x < r; ++x)
      if (!m.at(y, x))
        for (int c = 0; c < 3; ++c) b.at(c, y, x) = 1.0 - b.at(c, y, x);
  REQUIRE(face_loss(ex, a, b, m) == 0.0);

  BinaryMask empty(r, r);
  REQUIRE_THROWS_AS(face_loss(ex, a, b, empty), EmptyRegion);
}

TEST_CASE("face_loss matches the loop oracle", "[losses]") {
  ToyExtractor ex;
  const int r = 16;
  Image a = clamped_random_image({3, r, r}, 202);
  Image b = clamped_random_image({3, r, r}, 203);
  BinaryMask m = center_mask(r, 3);
  const double got = face_loss(ex, a, b, m);
  const double want = loss_oracle::masked_lpips(a, b, m, {1, 2, 3, 4, 5});
  REQUIRE(got == Catch::Approx(want).margin(1e-10));
  REQUIRE(got > 0.0);
}

TEST_CASE("structure_loss deep-level oracle", "[losses]") {
  ToyExtractor ex;
  const int r = 16;
  Image a = clamped_random_image({3, r, r}, 204);
  Image b = clamped_random_image({3, r, r}, 205);
  BinaryMask m = center_mask(r, 2);
  REQUIRE(structure_loss(ex, a, a, m) == 0.0);

  Image outside = a;
  for (int y = 0; y < r; ++y)
    for (int x = 0; x < r; ++x)
      if (!m.at(y, x))
        for (int c = 0; c < 3; ++c) outside.at(c, y, x) = 0.0;
  REQUIRE(structure_loss(ex, a, outside, m) == 0.0);

  const double got = structure_loss(ex, a, b, m);
  const double want = loss_oracle::masked_lpips(a, b, m, {4, 5});
  REQUIRE(got == Catch::Approx(want).margin(1e-10));
}

TEST_CASE("appearance_loss closed form and oracle", "[losses]") {
  ToyExtractor ex;
  const int r = 8;
  BinaryMask full(r, r, 1);
  Image a = clamped_random_image({3, r, r}, 206);
  REQUIRE(appearance_loss(ex, a, full, a, full) == 0.0);

  // seeded oracle
  Image b = clamped_random_image({3, r, r}, 207);
  BinaryMask ma = center_mask(r, 1), mb = center_mask(r, 2);
  const double got = appearance_loss(ex, a, ma, b, mb);
  const double want = loss_oracle::appearance_loss(a, ma, b, mb);
  REQUIRE(got == Catch::Approx(want).margin(1e-10));

  BinaryMask empty(r, r);
  REQUIRE_THROWS_AS(appearance_loss(ex, a, empty, b, mb), EmptyRegion);
  REQUIRE_THROWS_AS(appearance_loss(ex, a, ma, b, empty), EmptyRegion);
}

TEST_CASE("appearance_loss constant closed form with identity tap", "[losses]") {
  // with an identity extractor tap, constant images c1, c2 and full masks
  // give C1 * (c1 - c2)^2
  class IdentityExtractor final : public FeatureExtractor {
   public:
    int num_levels() const override { return 1; }
    LevelGeometry level_geometry(int level) const override {
      check_level(level);
      return {3, 1};
    }
    ad::Var extract(const ad::Var& image, int level) const override {
      check_level(level);
      return image;
    }
    int appearance_level() const override { return 1; }
    std::vector<int> style_levels() const override { return {1}; }
  } idex;
  const double c1 = 0.8, c2 = 0.3;
  Image i1 = Tensor::full({3, 4, 4}, c1);
  Image i2 = Tensor::full({3, 4, 4}, c2);
  BinaryMask full(4, 4, 1);
  REQUIRE(appearance_loss(idex, i1, full, i2, full) ==
          Catch::Approx(3.0 * (c1 - c2) * (c1 - c2)).margin(1e-12));
}

TEST_CASE("style_loss zero cases and oracle", "[losses]") {
  ToyExtractor ex;
  const int r = 16;
  Image a = clamped_random_image({3, r, r}, 208);
  BinaryMask m = center_mask(r, 3);
  REQUIRE(style_loss(ex, a, m, a, m) == 0.0);

  Image zero = Tensor::zeros({3, r, r});
  REQUIRE(style_loss(ex, zero, m, zero, center_mask(r, 5)) == 0.0);

  Image b = clamped_random_image({3, r, r}, 209);
  BinaryMask mb = center_mask(r, 2);
  const double got = style_loss(ex, a, m, b, mb);
  const double want = loss_oracle::style_loss(a, m, b, mb);
  REQUIRE(got == Catch::Approx(want).epsilon(1e-8));
}

TEST_CASE("appearance and style losses are position invariant inside the mask", "[losses]") {
  ToyExtractor ex;
  const int r = 32;
  Image ref = clamped_random_image({3, r, r}, 210);
  Image synth = clamped_random_image({3, r, r}, 211);
  BinaryMask synth_mask = center_mask(r, 10);

  // appearance: arbitrary pixel permutation inside the mask (stride-1 tap)
  BinaryMask am(r, r);
  std::vector<int> inside;
  Rng rng(212);
  for (int i = 0; i < r * r; ++i)
    if (rng.uniform() < 0.4) {
      am.v[static_cast<size_t>(i)] = 1;
      inside.push_back(i);
    }
  Image perm = ref;
  const int hw = r * r;
  for (int c = 0; c < 3; ++c)
    for (size_t k = 0; k < inside.size(); ++k)
      perm.data[static_cast<size_t>(c) * hw + inside[(k + 1) % inside.size()]] =
          ref.data[static_cast<size_t>(c) * hw + inside[k]];
  REQUIRE(appearance_loss(ex, perm, am, synth, synth_mask) ==
          Catch::Approx(appearance_loss(ex, ref, am, synth, synth_mask)).epsilon(1e-12));

  // style: permute 8x8 pooling-aligned blocks inside the mask (taps pool up
  // to stride 8, so block permutations commute with every tap)
  BinaryMask bm(r, r);
  const int bs = 8;
  std::vector<std::pair<int, int>> blocks = {{0, 0}, {0, 1}, {1, 0}, {2, 2}};
  for (auto [by, bx] : blocks)
    for (int y = 0; y < bs; ++y)
      for (int x = 0; x < bs; ++x) bm.at(by * bs + y, bx * bs + x) = 1;
  Image bperm = ref;
  for (int c = 0; c < 3; ++c)
    for (size_t k = 0; k < blocks.size(); ++k) {
      auto [sy, sx] = blocks[k];
      auto [dy, dx] = blocks[(k + 1) % blocks.size()];
      for (int y = 0; y < bs; ++y)
        for (int x = 0; x < bs; ++x)
          bperm.at(c, dy * bs + y, dx * bs + x) = ref.at(c, sy * bs + y, sx * bs + x);
    }
  REQUIRE(style_loss(ex, bperm, bm, synth, synth_mask) ==
          Catch::Approx(style_loss(ex, ref, bm, synth, synth_mask)).epsilon(1e-10));
  REQUIRE(appearance_loss(ex, bperm, bm, synth, synth_mask) ==
          Catch::Approx(appearance_loss(ex, ref, bm, synth, synth_mask)).epsilon(1e-12));
}

TEST_CASE("pyramid_down mean pooling to the 8x8 floor", "[losses]") {
  Tensor ones = Tensor::full({16, 16}, 1.0);
  auto levels = pyramid_down(ones);
  REQUIRE(levels.size() == 1);
  REQUIRE(levels[0].dim(0) == 8);
  for (double v : levels[0].data) REQUIRE(v == 1.0);

  Tensor floor8 = Tensor::full({8, 8}, 0.3);
  REQUIRE(pyramid_down(floor8).empty());

  // quadrant values survive 2x2 mean pooling
  Tensor quad({16, 16});
  for (int y = 0; y < 16; ++y)
    for (int x = 0; x < 16; ++x) quad.at(y, x) = (y < 8 ? (x < 8 ? 0.0 : 2.0) : (x < 8 ? 4.0 : 6.0));
  auto ql = pyramid_down(quad);
  REQUIRE(ql.size() == 1);
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 8; ++x)
      REQUIRE(ql[0].at(y, x) == (y < 4 ? (x < 4 ? 0.0 : 2.0) : (x < 4 ? 4.0 : 6.0)));

  Tensor bad({12, 12});
  REQUIRE_THROWS_AS(pyramid_down(bad), ShapeError);
  Tensor rect({16, 8});
  REQUIRE_THROWS_AS(pyramid_down(rect), ShapeError);
}

TEST_CASE("noise_regularization oracle values", "[losses]") {
  // all-zero maps: variance floor bypasses normalization, penalty 0
  std::vector<Tensor> zeros = {Tensor::zeros({8, 8}), Tensor::zeros({16, 16})};
  REQUIRE(noise_regularization(zeros) == 0.0);

  // alternating-column +-1 on 8x8: horizontal products all -1, vertical all
  // +1 -> (1)^2 + (1)^2 = 2
  Tensor alt({8, 8});
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 8; ++x) alt.at(y, x) = (x % 2 == 0) ? 1.0 : -1.0;
  REQUIRE(noise_regularization({alt}) == Catch::Approx(2.0).margin(1e-12));

  // random maps match the independent oracle
  for (uint64_t seed = 301; seed < 306; ++seed) {
    std::vector<Tensor> maps = {tu::random_tensor({8, 8}, seed), tu::random_tensor({16, 16}, seed + 50),
                                tu::random_tensor({32, 32}, seed + 99)};
    REQUIRE(noise_regularization(maps) ==
            Catch::Approx(loss_oracle::noise_penalty(maps)).epsilon(1e-10));
  }
}

TEST_CASE("smooth maps are penalized more than white noise", "[losses]") {
  // low-frequency maps have strongly correlated neighbors; Eq. 7 punishes that
  int wins = 0;
  for (uint64_t trial = 0; trial < 20; ++trial) {
    Rng rng(400 + trial);
    Tensor smooth({16, 16});
    const double fy = rng.uniform(0.2, 0.6), fx = rng.uniform(0.2, 0.6);
    const double ph = rng.uniform(0.0, 6.28);
    for (int y = 0; y < 16; ++y)
      for (int x = 0; x < 16; ++x) smooth.at(y, x) = std::sin(fy * y + fx * x + ph);
    Tensor white({16, 16});
    for (double& v : white.data) v = rng.normal();
    if (noise_regularization({smooth}) > noise_regularization({white})) ++wins;
  }
  REQUIRE(wins == 20);
}

TEST_CASE("weighted total follows the documented defaults", "[losses]") {
  LossWeights w;  // paper defaults
  LossValues v{1.0, 1.0, 1.0, 1.0, 1.0, 0.0};
  REQUIRE(weighted_total(v, w) == 115042.0);

  LossWeights zero{0, 0, 0, 0, 0};
  REQUIRE(weighted_total(v, zero) == 0.0);

  // stage-1 mask: appearance/style contribute exactly zero
  LossValues masked = v;
  masked.appearance = 0.0;
  masked.style = 0.0;
  REQUIRE(weighted_total(masked, w) == 1.0 + 1.0 + 1e5);
}

TEST_CASE("total equals the weighted sum for random weights", "[losses]") {
  for (uint64_t seed = 500; seed < 520; ++seed) {
    Rng rng(seed);
    LossWeights w{rng.uniform(), rng.uniform(), rng.uniform(0, 50), rng.uniform(0, 2e4),
                  rng.uniform(0, 2e5)};
    LossValues v{rng.uniform(), rng.uniform(), rng.uniform(), rng.uniform(), rng.uniform(), 0.0};
    const double expect =
        (((w.face * v.face + w.structure * v.structure) + w.appearance * v.appearance) +
         w.style * v.style) +
        w.noise * v.noise;
    REQUIRE(weighted_total(v, w) == expect);
  }
}
