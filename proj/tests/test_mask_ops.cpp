#include <catch2/catch_amalgamated.hpp>

#include "hairtx/mask.hpp"
#include "hairtx/rng.hpp"
#include "test_util.hpp"

using namespace hairtx;

namespace {

BinaryMask solid_square(int img, int side, int top, int left) {
  BinaryMask m(img, img);
  for (int y = top; y < top + side; ++y)
    for (int x = left; x < left + side; ++x) m.at(y, x) = 1;
  return m;
}

BinaryMask random_blob(uint64_t seed, int img = 48) {
  // union of a few random rectangles; nonempty
  Rng rng(seed);
  BinaryMask m(img, img);
  const int rects = rng.uniform_int(1, 4);
  for (int r = 0; r < rects; ++r) {
    const int h = rng.uniform_int(4, img / 2);
    const int w = rng.uniform_int(4, img / 2);
    const int top = rng.uniform_int(0, img - h);
    const int left = rng.uniform_int(0, img - w);
    for (int y = top; y < top + h; ++y)
      for (int x = left; x < left + w; ++x) m.at(y, x) = 1;
  }
  return m;
}

}  // namespace

TEST_CASE("dilate targets relative area growth", "[mask]") {
  // 10x10 solid square, growth 0.2: target 120. One full 8-connected ring
  // reaches 144, so the final ring is partial.
  BinaryMask sq = solid_square(64, 10, 27, 27);
  MorphResult r = dilate(sq, 0.2);
  REQUIRE(r.achieved_area >= 114);
  REQUIRE(r.achieved_area <= 126);
  REQUIRE(mask_subset(sq, r.mask));
  REQUIRE_FALSE(r.degenerate);
  REQUIRE(r.achieved_ratio == Catch::Approx(r.achieved_area / 100.0));
}

TEST_CASE("dilate identity and saturation cases", "[mask]") {
  BinaryMask sq = solid_square(32, 8, 10, 10);
  // a growth so small that zero added pixels is closest -> unchanged
  MorphResult tiny = dilate(sq, 0.004);  // target 64.256, round -> +0 px
  REQUIRE(tiny.achieved_area == 64);
  REQUIRE(tiny.mask.v == sq.v);

  BinaryMask ones(16, 16, 1);
  MorphResult sat = dilate(ones, 0.5);
  REQUIRE(sat.mask.v == ones.v);
  REQUIRE(sat.degenerate);

  BinaryMask empty(8, 8);
  REQUIRE_THROWS_AS(dilate(empty, 0.2), EmptyMask);
}

TEST_CASE("erode targets relative area shrink", "[mask]") {
  BinaryMask sq = solid_square(64, 10, 27, 27);
  MorphResult r = erode(sq, 0.2);  // target 80
  REQUIRE(r.achieved_area >= 76);
  REQUIRE(r.achieved_area <= 84);
  REQUIRE(mask_subset(r.mask, sq));
  REQUIRE_FALSE(r.mask.empty_mask());
}

TEST_CASE("erode degeneracy and saturation cases", "[mask]") {
  BinaryMask single(16, 16);
  single.at(8, 8) = 1;
  MorphResult r = erode(single, 0.5);
  REQUIRE(r.mask.v == single.v);
  REQUIRE(r.degenerate);

  BinaryMask ones(16, 16, 1);
  MorphResult s = erode(ones, 0.2);
  REQUIRE(mask_subset(s.mask, ones));
  REQUIRE(s.achieved_area < 256);  // strict subset

  BinaryMask empty(8, 8);
  REQUIRE_THROWS_AS(erode(empty, 0.2), EmptyMask);
}

TEST_CASE("morphology extensivity properties on random masks", "[mask]") {
  for (uint64_t seed = 1; seed <= 12; ++seed) {
    BinaryMask m = random_blob(seed);
    MorphResult d = dilate(m, 0.25);
    REQUIRE(mask_subset(m, d.mask));  // extensive
    if (m.area() > 16) {
      MorphResult e = erode(m, 0.25);
      REQUIRE(mask_subset(e.mask, m));  // anti-extensive
      REQUIRE_FALSE(e.mask.empty_mask());
    }
  }
}

TEST_CASE("ignore_region is the set difference", "[mask]") {
  BinaryMask d = solid_square(32, 12, 10, 10);
  BinaryMask e = solid_square(32, 8, 12, 12);
  BinaryMask ir = ignore_region(d, e);
  REQUIRE(ir.area() == 144 - 64);  // concentric squares
  REQUIRE(mask_and(ir, e).empty_mask());
  REQUIRE(mask_or(ir, e).v == d.v);

  BinaryMask same = d;
  REQUIRE(ignore_region(d, same).empty_mask());

  BinaryMask not_contained(32, 32);
  not_contained.at(0, 0) = 1;
  REQUIRE_THROWS_AS(ignore_region(d, not_contained), MaskOrderError);
}

TEST_CASE("ignore_region partition property on random dilate/erode pairs", "[mask]") {
  for (uint64_t seed = 20; seed < 28; ++seed) {
    BinaryMask m = random_blob(seed);
    if (m.area() < 20) continue;
    BinaryMask d = dilate(m, 0.2).mask;
    BinaryMask e = erode(m, 0.2).mask;
    BinaryMask ir = ignore_region(d, e);
    REQUIRE(mask_and(ir, e).empty_mask());
    REQUIRE(mask_or(ir, e).v == d.v);
  }
}

TEST_CASE("face_target_mask intersects with hair complement", "[mask]") {
  // face = left half, hair = top half of 4x4 -> bottom-left 2x2, area 4
  BinaryMask face(4, 4), hair(4, 4);
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 2; ++x) face.at(y, x) = 1;
  for (int y = 0; y < 2; ++y)
    for (int x = 0; x < 4; ++x) hair.at(y, x) = 1;
  BinaryMask t = face_target_mask(face, hair);
  REQUIRE(t.area() == 4);
  for (int y = 2; y < 4; ++y)
    for (int x = 0; x < 2; ++x) REQUIRE(t.at(y, x) == 1);

  BinaryMask zeros(4, 4), ones(4, 4, 1);
  REQUIRE(face_target_mask(face, zeros).v == face.v);
  REQUIRE(face_target_mask(face, ones).empty_mask());
  BinaryMask wrong(5, 5);
  REQUIRE_THROWS_AS(face_target_mask(face, wrong), ShapeError);
}

TEST_CASE("mask_iou oracle cases", "[mask]") {
  BinaryMask a = solid_square(8, 2, 0, 0);
  REQUIRE(mask_iou(a, a) == 1.0);

  BinaryMask b = solid_square(8, 2, 4, 4);
  REQUIRE(mask_iou(a, b) == 0.0);

  // two 2x2 blocks overlapping in exactly one pixel: 1/7
  BinaryMask c = solid_square(8, 2, 1, 1);
  REQUIRE(mask_iou(a, c) == Catch::Approx(1.0 / 7.0).epsilon(1e-12));

  BinaryMask e1(8, 8), e2(8, 8);
  REQUIRE_THROWS_AS(mask_iou(e1, e2), UndefinedIoU);
}

TEST_CASE("mask_iou symmetry and range on random masks", "[mask]") {
  for (uint64_t seed = 40; seed < 48; ++seed) {
    BinaryMask a = random_blob(seed), b = random_blob(seed + 100);
    const double ab = mask_iou(a, b), ba = mask_iou(b, a);
    REQUIRE(ab == ba);
    REQUIRE(ab >= 0.0);
    REQUIRE(ab <= 1.0);
  }
}

TEST_CASE("soft_blend degenerate and convex cases", "[mask]") {
  const int r = 16;
  Image fg = Tensor::full({3, r, r}, 1.0);
  Image bg = Tensor::full({3, r, r}, 0.0);
  BinaryMask ones(r, r, 1), zeros(r, r);

  Image all_fg = soft_blend(fg, bg, ones, 2.0);
  REQUIRE(all_fg.data == fg.data);  // constants survive feathering exactly
  Image all_bg = soft_blend(fg, bg, zeros, 2.0);
  REQUIRE(all_bg.data == bg.data);

  BlendAlpha half{Tensor::full({r, r}, 0.5)};
  Image mid = composite(fg, bg, half);
  for (double v : mid.data) REQUIRE(v == 0.5);

  Image wrong = Tensor::full({3, r + 1, r + 1}, 0.0);
  REQUIRE_THROWS_AS(soft_blend(fg, wrong, ones, 1.0), ShapeError);
}

TEST_CASE("soft_blend with unfeathered mask partitions pixels exactly", "[mask]") {
  const int r = 12;
  Image fg = test_util::random_tensor({3, r, r}, 71);
  Image bg = test_util::random_tensor({3, r, r}, 72);
  BinaryMask m = random_blob(73, r);
  Image out = soft_blend(fg, bg, m, 0.0);
  const int hw = r * r;
  for (int c = 0; c < 3; ++c)
    for (int i = 0; i < hw; ++i) {
      const double want = m.v[static_cast<size_t>(i)] ? fg.data[static_cast<size_t>(c) * hw + i]
                                                      : bg.data[static_cast<size_t>(c) * hw + i];
      REQUIRE(out.data[static_cast<size_t>(c) * hw + i] == want);
    }
}

TEST_CASE("fallback_inpaint harmonic fill", "[mask]") {
  const int r = 12;
  // constant image: hole fills with the constant
  Image img = Tensor::full({3, r, r}, 0.7);
  BinaryMask hole = solid_square(r, 4, 4, 4);
  Image out = fallback_inpaint(img, hole);
  for (double v : out.data) REQUIRE(v == Catch::Approx(0.7).margin(1e-6));

  // pixels outside the hole are bit-identical
  Image noisy = test_util::random_tensor({3, r, r}, 81);
  Image out2 = fallback_inpaint(noisy, hole);
  const int hw = r * r;
  for (int c = 0; c < 3; ++c)
    for (int i = 0; i < hw; ++i)
      if (!hole.v[static_cast<size_t>(i)])
        REQUIRE(out2.data[static_cast<size_t>(c) * hw + i] == noisy.data[static_cast<size_t>(c) * hw + i]);

  // 1-pixel hole surrounded by {1,2,3,4} -> diffusion fixed point 2.5
  Image four = Tensor::full({3, 3, 3}, 0.0);
  for (int c = 0; c < 3; ++c) {
    four.at(c, 0, 1) = 1.0;
    four.at(c, 2, 1) = 2.0;
    four.at(c, 1, 0) = 3.0;
    four.at(c, 1, 2) = 4.0;
  }
  BinaryMask one_px(3, 3);
  one_px.at(1, 1) = 1;
  Image filled = fallback_inpaint(four, one_px);
  for (int c = 0; c < 3; ++c) REQUIRE(filled.at(c, 1, 1) == Catch::Approx(2.5).margin(1e-9));

  BinaryMask all(r, r, 1);
  REQUIRE_THROWS_AS(fallback_inpaint(img, all), InpaintUnderdetermined);
  BinaryMask none(r, r);
  REQUIRE_THROWS_AS(fallback_inpaint(img, none), EmptyMask);
}

TEST_CASE("threshold_channel segments the hair-signal channel", "[mask]") {
  Image img = Tensor::full({3, 4, 4}, 0.1);
  img.at(2, 1, 1) = 0.9;
  img.at(2, 2, 3) = 0.8;
  BinaryMask m = threshold_channel(img, 2, 0.6);
  REQUIRE(m.area() == 2);
  REQUIRE(m.at(1, 1) == 1);
  REQUIRE(m.at(2, 3) == 1);
}
