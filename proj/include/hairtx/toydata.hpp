#pragma once

#include <array>
#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include "hairtx/curation.hpp"
#include "hairtx/image_io.hpp"
#include "hairtx/mask.hpp"
#include "hairtx/rng.hpp"
#include "hairtx/tensor.hpp"

namespace hairtx {

// Deterministic portrait-like toy data. Channel 2 is the hair-signal channel:
// hair pixels carry a high value there, face and background stay low, so a
// threshold on channel 2 recovers the hair mask of any synthesized image.

struct ToyLook {
  // near-grey face: its chroma residual stays inside the affine backend's
  // reachable set, so identity reconstruction can actually converge
  std::array<double, 3> hair = {0.42, 0.30, 0.88};
  std::array<double, 3> face = {0.74, 0.70, 0.66};
  std::array<double, 3> bg_top = {0.16, 0.45, 0.14};
  std::array<double, 3> bg_bottom = {0.06, 0.24, 0.08};
};

struct ToyPortrait {
  Image image;
  BinaryMask face;
  BinaryMask hair;
  LandmarkSet landmarks;
};

namespace detail {

struct Ellipse {
  double cx, cy, rx, ry;
  bool contains(double x, double y) const {
    const double dx = (x - cx) / rx, dy = (y - cy) / ry;
    return dx * dx + dy * dy <= 1.0;
  }
};

inline LandmarkSet ellipse_landmarks(const Ellipse& f) {
  // 68 points laid out parametrically on the face ellipse: 17 jaw, 2x5 brows,
  // 9 nose, 2x6 eyes, 20 mouth. Layout fidelity is irrelevant; what matters
  // is that rigid offsets of the face move every point rigidly.
  LandmarkSet s;
  int k = 0;
  auto put = [&](double ax, double ay) {
    s.pts[static_cast<size_t>(k)][0] = ax;
    s.pts[static_cast<size_t>(k)][1] = ay;
    ++k;
  };
  for (int i = 0; i < 17; ++i) {  // jaw, left to right along the lower arc
    const double t = M_PI * (1.0 - static_cast<double>(i) / 16.0);
    put(f.cx - f.rx * std::cos(t - M_PI), f.cy + f.ry * std::sin(t) * 0.95);
  }
  for (int side = 0; side < 2; ++side)  // brows
    for (int i = 0; i < 5; ++i) {
      const double u = (i - 2) / 4.0;
      put(f.cx + (side ? 0.5 : -0.5) * f.rx + u * 0.35 * f.rx, f.cy - 0.55 * f.ry);
    }
  for (int i = 0; i < 4; ++i) put(f.cx, f.cy - 0.3 * f.ry + i * 0.15 * f.ry);  // nose bridge
  for (int i = 0; i < 5; ++i) put(f.cx + (i - 2) * 0.12 * f.rx, f.cy + 0.32 * f.ry);  // nostrils
  for (int side = 0; side < 2; ++side)  // eyes
    for (int i = 0; i < 6; ++i) {
      const double t = 2.0 * M_PI * i / 6.0;
      put(f.cx + (side ? 0.45 : -0.45) * f.rx + 0.16 * f.rx * std::cos(t),
          f.cy - 0.25 * f.ry + 0.07 * f.ry * std::sin(t));
    }
  for (int i = 0; i < 20; ++i) {  // mouth
    const double t = 2.0 * M_PI * i / 20.0;
    put(f.cx + 0.30 * f.rx * std::cos(t), f.cy + 0.55 * f.ry + 0.12 * f.ry * std::sin(t));
  }
  return s;
}

}  // namespace detail

struct ToyGeometry {
  detail::Ellipse face;
  detail::Ellipse hair;
  double tex_angle = 0.0;
  double tex_freq = 0.0;
  double tex_phase = 0.0;
};

inline ToyGeometry toy_geometry(uint64_t seed, int r) {
  Rng rng(seed);
  const double s = r / 32.0;
  ToyGeometry g;
  g.face.cx = r * 0.5 + rng.uniform(-1.5, 1.5) * s;
  g.face.cy = r * 0.60 + rng.uniform(-1.2, 1.2) * s;
  g.face.rx = r * 0.22 + rng.uniform(-1.0, 1.0) * s;
  g.face.ry = r * 0.28 + rng.uniform(-1.0, 1.0) * s;
  g.hair.cx = g.face.cx + rng.uniform(-2.0, 2.0) * s;
  g.hair.cy = g.face.cy - r * 0.26 + rng.uniform(-1.5, 1.5) * s;
  g.hair.rx = r * 0.34 + rng.uniform(-1.5, 2.0) * s;
  g.hair.ry = r * 0.30 + rng.uniform(-1.0, 2.0) * s;
  g.tex_angle = rng.uniform(0.0, M_PI);
  g.tex_freq = rng.uniform(0.5, 1.2);
  g.tex_phase = rng.uniform(0.0, 2.0 * M_PI);
  return g;
}

/// Render a portrait from its geometry and palette. Hair texture is a seeded
/// stripe pattern; it feeds the structure loss something to reconstruct.
inline ToyPortrait render_toy_portrait(const ToyGeometry& g, const ToyLook& look, int r) {
  ToyPortrait p;
  p.image = Image({3, r, r});
  p.face = BinaryMask(r, r);
  p.hair = BinaryMask(r, r);
  const int hw = r * r;
  for (int y = 0; y < r; ++y)
    for (int x = 0; x < r; ++x) {
      const int i = y * r + x;
      const bool in_face = g.face.contains(x + 0.5, y + 0.5);
      const bool in_hair = !in_face && g.hair.contains(x + 0.5, y + 0.5);
      std::array<double, 3> c{};
      if (in_hair) {
        // multiplicative stripes: luminance texture, constant color direction
        const double u = (x * std::cos(g.tex_angle) + y * std::sin(g.tex_angle));
        const double tex = 1.0 + 0.10 * std::sin(g.tex_freq * u + g.tex_phase);
        for (int ch = 0; ch < 3; ++ch) c[static_cast<size_t>(ch)] = look.hair[static_cast<size_t>(ch)] * tex;
        p.hair.v[static_cast<size_t>(i)] = 1;
      } else if (in_face) {
        const double dx = (x - g.face.cx) / g.face.rx, dy = (y - g.face.cy) / g.face.ry;
        const double shade = 1.0 - 0.12 * (dx * dx + dy * dy);
        for (int ch = 0; ch < 3; ++ch) c[static_cast<size_t>(ch)] = look.face[static_cast<size_t>(ch)] * shade;
        p.face.v[static_cast<size_t>(i)] = 1;
      } else {
        const double t = static_cast<double>(y) / (r - 1);
        for (int ch = 0; ch < 3; ++ch)
          c[static_cast<size_t>(ch)] =
              look.bg_top[static_cast<size_t>(ch)] * (1.0 - t) + look.bg_bottom[static_cast<size_t>(ch)] * t;
      }
      for (int ch = 0; ch < 3; ++ch)
        p.image.data[static_cast<size_t>(ch) * hw + i] = std::clamp(c[static_cast<size_t>(ch)], 0.0, 1.0);
    }
  p.landmarks = detail::ellipse_landmarks(g.face);
  return p;
}

inline ToyPortrait make_toy_portrait(uint64_t seed, int r = 32, const ToyLook& look = {}) {
  return render_toy_portrait(toy_geometry(seed, r), look, r);
}

/// One seeded transfer tuple with an engineered appearance conflict: I2 and
/// I3 both carry strong hair signal (channel 2) but clash in channels 0/1, so
/// the appearance transfer fights the structure reconstruction through the
/// shared latent.
struct ToyTupleData {
  ToyPortrait identity;     // I1
  ToyPortrait shape_ref;    // I2
  ToyPortrait appearance_ref;  // I3
};

inline ToyTupleData make_toy_tuple(uint64_t seed, int r = 32) {
  ToyLook look1;  // defaults: violet-ish hair
  ToyLook look2;
  look2.hair = {0.85, 0.15, 0.92};
  ToyLook look3;
  look3.hair = {0.12, 0.80, 0.92};
  ToyTupleData t;
  t.identity = render_toy_portrait(toy_geometry(fnv1a_u64(seed, fnv1a("i1")), r), look1, r);
  t.shape_ref = render_toy_portrait(toy_geometry(fnv1a_u64(seed, fnv1a("i2")), r), look2, r);
  t.appearance_ref = render_toy_portrait(toy_geometry(fnv1a_u64(seed, fnv1a("i3")), r), look3, r);
  return t;
}

/// Write a fixture corpus: `<id>.png`, `<id>.face.png`, `<id>.hair.png`,
/// `<id>.landmarks.json` per portrait. Looks rotate through a fixed palette;
/// one entry in six gets sparse hair to exercise the hair-fraction filter.
inline void write_toy_corpus(const std::filesystem::path& dir, int count, uint64_t seed,
                             int resolution = 32) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  const std::array<std::array<double, 3>, 4> palette = {{{0.42, 0.30, 0.88},
                                                         {0.88, 0.12, 0.95},
                                                         {0.08, 0.85, 0.82},
                                                         {0.75, 0.60, 0.90}}};
  for (int i = 0; i < count; ++i) {
    ToyLook look;
    look.hair = palette[static_cast<size_t>(i) % palette.size()];
    ToyGeometry g = toy_geometry(fnv1a_u64(seed, fnv1a_u64(static_cast<uint64_t>(i))), resolution);
    if (i % 6 == 5) {  // sparse-hair entry, below the 18% fraction gate
      g.hair.rx *= 0.45;
      g.hair.ry *= 0.45;
    }
    ToyPortrait p = render_toy_portrait(g, look, resolution);
    char id[16];
    std::snprintf(id, sizeof id, "p%02d", i + 1);
    write_image((dir / (std::string(id) + ".png")).string(), p.image);
    write_mask((dir / (std::string(id) + ".face.png")).string(), p.face);
    write_mask((dir / (std::string(id) + ".hair.png")).string(), p.hair);
    save_landmarks((dir / (std::string(id) + ".landmarks.json")).string(), p.landmarks);
  }
}

}  // namespace hairtx
