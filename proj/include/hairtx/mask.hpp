#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <utility>
#include <vector>

#include "hairtx/errors.hpp"
#include "hairtx/tensor.hpp"

namespace hairtx {

/// Per-pixel foreground indicator aligned to an image grid.
struct BinaryMask {
  int height = 0;
  int width = 0;
  std::vector<uint8_t> v;  // row-major, each cell 0 or 1

  BinaryMask() = default;
  BinaryMask(int h, int w, uint8_t fill = 0) : height(h), width(w), v(static_cast<size_t>(h) * w, fill) {}

  uint8_t at(int y, int x) const { return v[static_cast<size_t>(y) * width + x]; }
  uint8_t& at(int y, int x) { return v[static_cast<size_t>(y) * width + x]; }

  int area() const {
    int a = 0;
    for (uint8_t b : v) a += b;
    return a;
  }
  bool empty_mask() const { return area() == 0; }
  bool same_size(const BinaryMask& o) const { return height == o.height && width == o.width; }

  /// As a [H,W] tensor of 0.0/1.0 for arithmetic with images.
  Tensor to_tensor() const {
    Tensor t({height, width});
    for (size_t i = 0; i < v.size(); ++i) t.data[i] = v[i];
    return t;
  }
};

inline void require_same_size(const BinaryMask& a, const BinaryMask& b, const char* what) {
  if (!a.same_size(b)) throw ShapeError(std::string(what) + ": mask resolution mismatch");
}

inline void require_mask_matches(const Tensor& img, const BinaryMask& m, const char* what) {
  require_image(img, what);
  if (img.dim(1) != m.height || img.dim(2) != m.width)
    throw ShapeError(std::string(what) + ": image/mask resolution mismatch");
}

inline BinaryMask mask_and(const BinaryMask& a, const BinaryMask& b) {
  require_same_size(a, b, "mask_and");
  BinaryMask out(a.height, a.width);
  for (size_t i = 0; i < a.v.size(); ++i) out.v[i] = a.v[i] & b.v[i];
  return out;
}

inline BinaryMask mask_or(const BinaryMask& a, const BinaryMask& b) {
  require_same_size(a, b, "mask_or");
  BinaryMask out(a.height, a.width);
  for (size_t i = 0; i < a.v.size(); ++i) out.v[i] = a.v[i] | b.v[i];
  return out;
}

inline BinaryMask mask_not(const BinaryMask& a) {
  BinaryMask out(a.height, a.width);
  for (size_t i = 0; i < a.v.size(); ++i) out.v[i] = a.v[i] ? 0 : 1;
  return out;
}

inline bool mask_subset(const BinaryMask& inner, const BinaryMask& outer) {
  require_same_size(inner, outer, "mask_subset");
  for (size_t i = 0; i < inner.v.size(); ++i)
    if (inner.v[i] && !outer.v[i]) return false;
  return true;
}

/// Result of an area-targeted morphology pass. The op reports the area it
/// actually achieved; `degenerate` marks saturation/identity fallbacks where
/// the +-5% target could not be met.
struct MorphResult {
  BinaryMask mask;
  int achieved_area = 0;
  double achieved_ratio = 1.0;  // achieved_area / original area
  int full_iterations = 0;
  bool degenerate = false;
};

namespace detail {

// Background pixels 8-adjacent to foreground, raster order.
inline std::vector<int> dilation_candidates(const BinaryMask& m) {
  std::vector<int> out;
  for (int y = 0; y < m.height; ++y)
    for (int x = 0; x < m.width; ++x) {
      if (m.at(y, x)) continue;
      bool adj = false;
      for (int dy = -1; dy <= 1 && !adj; ++dy)
        for (int dx = -1; dx <= 1 && !adj; ++dx) {
          const int ny = y + dy, nx = x + dx;
          if (ny >= 0 && ny < m.height && nx >= 0 && nx < m.width && m.at(ny, nx)) adj = true;
        }
      if (adj) out.push_back(y * m.width + x);
    }
  return out;
}

// Foreground pixels whose 3x3 neighborhood (image border counts as background)
// is not all foreground, raster order.
inline std::vector<int> erosion_candidates(const BinaryMask& m) {
  std::vector<int> out;
  for (int y = 0; y < m.height; ++y)
    for (int x = 0; x < m.width; ++x) {
      if (!m.at(y, x)) continue;
      bool boundary = false;
      for (int dy = -1; dy <= 1 && !boundary; ++dy)
        for (int dx = -1; dx <= 1 && !boundary; ++dx) {
          const int ny = y + dy, nx = x + dx;
          if (ny < 0 || ny >= m.height || nx < 0 || nx >= m.width || !m.at(ny, nx)) boundary = true;
        }
      if (boundary) out.push_back(y * m.width + x);
    }
  return out;
}

}  // namespace detail

/// Grow the mask until its area is closest to (1+area_growth) times the
/// original. Whole 3x3 (8-connected) dilation rings are applied while below
/// target; the final ring is applied partially, in raster order, to land on
/// the closest achievable area.
inline MorphResult dilate(const BinaryMask& mask, double area_growth) {
  if (mask.empty_mask()) throw EmptyMask("dilate: empty mask");
  if (!(area_growth > 0.0) || area_growth > 1.0)
    throw std::invalid_argument("dilate: area_growth must be in (0,1]");
  const int a0 = mask.area();
  const double target = (1.0 + area_growth) * a0;
  MorphResult res;
  res.mask = mask;
  int area = a0;
  while (true) {
    auto cand = detail::dilation_candidates(res.mask);
    if (cand.empty()) {  // saturated
      res.degenerate = true;
      break;
    }
    if (area + static_cast<int>(cand.size()) < target) {
      for (int idx : cand) res.mask.v[static_cast<size_t>(idx)] = 1;
      area += static_cast<int>(cand.size());
      res.full_iterations++;
      continue;
    }
    const int add = std::clamp(static_cast<int>(std::llround(target - area)), 0,
                               static_cast<int>(cand.size()));
    for (int k = 0; k < add; ++k) res.mask.v[static_cast<size_t>(cand[static_cast<size_t>(k)])] = 1;
    area += add;
    break;
  }
  res.achieved_area = area;
  res.achieved_ratio = static_cast<double>(area) / a0;
  if (std::abs(area - target) > 0.05 * target) res.degenerate = true;
  return res;
}

/// Shrink the mask toward (1-area_shrink) times the original area, same
/// partial-iteration policy as dilate. Never returns an empty mask; a
/// single-pixel mask is returned unchanged with the degeneracy flag set.
inline MorphResult erode(const BinaryMask& mask, double area_shrink) {
  if (mask.empty_mask()) throw EmptyMask("erode: empty mask");
  if (!(area_shrink > 0.0) || !(area_shrink < 1.0))
    throw std::invalid_argument("erode: area_shrink must be in (0,1)");
  const int a0 = mask.area();
  MorphResult res;
  res.mask = mask;
  res.achieved_area = a0;
  if (a0 == 1) {
    res.degenerate = true;
    return res;
  }
  const double target = (1.0 - area_shrink) * a0;
  int area = a0;
  while (true) {
    auto cand = detail::erosion_candidates(res.mask);
    if (cand.empty()) {  // no boundary left to remove
      res.degenerate = true;
      break;
    }
    if (area - static_cast<int>(cand.size()) > target) {
      for (int idx : cand) res.mask.v[static_cast<size_t>(idx)] = 0;
      area -= static_cast<int>(cand.size());
      res.full_iterations++;
      continue;
    }
    int remove = std::clamp(static_cast<int>(std::llround(area - target)), 0,
                            static_cast<int>(cand.size()));
    remove = std::min(remove, area - 1);  // never empty the mask
    for (int k = 0; k < remove; ++k) res.mask.v[static_cast<size_t>(cand[static_cast<size_t>(k)])] = 0;
    area -= remove;
    break;
  }
  res.achieved_area = area;
  res.achieved_ratio = static_cast<double>(area) / a0;
  if (std::abs(area - target) > 0.05 * std::max(target, 1.0)) res.degenerate = true;
  return res;
}

/// Set difference dilated - eroded; the ring left for the generator prior.
inline BinaryMask ignore_region(const BinaryMask& dilated, const BinaryMask& eroded) {
  require_same_size(dilated, eroded, "ignore_region");
  if (!mask_subset(eroded, dilated))
    throw MaskOrderError("ignore_region: eroded mask not contained in dilated mask");
  BinaryMask out(dilated.height, dilated.width);
  for (size_t i = 0; i < out.v.size(); ++i) out.v[i] = dilated.v[i] & static_cast<uint8_t>(1 - eroded.v[i]);
  return out;
}

/// Face supervision support: face AND NOT dilated-hair.
inline BinaryMask face_target_mask(const BinaryMask& face, const BinaryMask& dilated_hair) {
  require_same_size(face, dilated_hair, "face_target_mask");
  return mask_and(face, mask_not(dilated_hair));
}

inline double mask_iou(const BinaryMask& a, const BinaryMask& b) {
  require_same_size(a, b, "mask_iou");
  int inter = 0, uni = 0;
  for (size_t i = 0; i < a.v.size(); ++i) {
    inter += a.v[i] & b.v[i];
    uni += a.v[i] | b.v[i];
  }
  if (uni == 0) throw UndefinedIoU("mask_iou: both masks empty");
  return static_cast<double>(inter) / uni;
}

/// Nearest-neighbor resize (used to bring masks to feature-tap resolution).
inline BinaryMask downscale_nearest(const BinaryMask& m, int out_h, int out_w) {
  BinaryMask out(out_h, out_w);
  for (int y = 0; y < out_h; ++y)
    for (int x = 0; x < out_w; ++x) {
      const int sy = std::min(m.height - 1, static_cast<int>((y + 0.5) * m.height / out_h));
      const int sx = std::min(m.width - 1, static_cast<int>((x + 0.5) * m.width / out_w));
      out.at(y, x) = m.at(sy, sx);
    }
  return out;
}

/// Separable Gaussian blur with border renormalization (constants are
/// preserved exactly, so an all-ones mask blurs to exactly one).
inline Tensor gaussian_blur_2d(const Tensor& in, double sigma) {
  if (in.rank() != 2) throw ShapeError("gaussian_blur_2d: need [H,W]");
  if (sigma <= 0.0) return in;
  const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  std::vector<double> k(static_cast<size_t>(2 * radius + 1));
  for (int i = -radius; i <= radius; ++i)
    k[static_cast<size_t>(i + radius)] = std::exp(-0.5 * i * i / (sigma * sigma));
  const int h = in.dim(0), w = in.dim(1);
  Tensor tmp({h, w}), out({h, w});
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double num = 0.0, den = 0.0;
      for (int i = -radius; i <= radius; ++i) {
        const int xx = x + i;
        if (xx < 0 || xx >= w) continue;
        num += k[static_cast<size_t>(i + radius)] * in.at(y, xx);
        den += k[static_cast<size_t>(i + radius)];
      }
      tmp.at(y, x) = num / den;
    }
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double num = 0.0, den = 0.0;
      for (int i = -radius; i <= radius; ++i) {
        const int yy = y + i;
        if (yy < 0 || yy >= h) continue;
        num += k[static_cast<size_t>(i + radius)] * tmp.at(yy, x);
        den += k[static_cast<size_t>(i + radius)];
      }
      out.at(y, x) = num / den;
    }
  return out;
}

/// Blend weights in [0,1]; same resolution as the blended images.
struct BlendAlpha {
  Tensor grid;  // [H,W]
};

inline BlendAlpha feathered_alpha(const BinaryMask& mask, double feather_sigma) {
  if (feather_sigma < 0.0) throw std::invalid_argument("feathered_alpha: sigma must be >= 0");
  Tensor a = mask.to_tensor();
  if (feather_sigma > 0.0) a = gaussian_blur_2d(a, feather_sigma);
  for (double& v : a.data) v = std::clamp(v, 0.0, 1.0);
  return BlendAlpha{std::move(a)};
}

/// out = alpha*foreground + (1-alpha)*background, per channel.
inline Image composite(const Image& foreground, const Image& background, const BlendAlpha& alpha) {
  require_image(foreground, "composite");
  require_same_shape(foreground, background, "composite");
  if (alpha.grid.dim(0) != foreground.dim(1) || alpha.grid.dim(1) != foreground.dim(2))
    throw ShapeError("composite: alpha resolution mismatch");
  Image out(foreground.shape);
  const int hw = alpha.grid.numel();
  for (int c = 0; c < 3; ++c)
    for (int i = 0; i < hw; ++i) {
      const double a = alpha.grid.data[static_cast<size_t>(i)];
      out.data[static_cast<size_t>(c) * hw + i] = a * foreground.data[static_cast<size_t>(c) * hw + i] +
                                                  (1.0 - a) * background.data[static_cast<size_t>(c) * hw + i];
    }
  return out;
}

/// Feathered compositing of the synthesized foreground over the background.
/// feather_sigma = 0 degenerates to hard compositing.
inline Image soft_blend(const Image& foreground, const Image& background, const BinaryMask& mask,
                        double feather_sigma) {
  require_mask_matches(foreground, mask, "soft_blend");
  require_same_shape(foreground, background, "soft_blend");
  return composite(foreground, background, feathered_alpha(mask, feather_sigma));
}

/// Harmonic fill of the hole by repeated neighbor averaging (4-neighborhood),
/// Gauss-Seidel sweeps until the max per-pixel change drops below 1e-4.
/// Pixels outside the hole are returned bit-identical.
inline Image fallback_inpaint(const Image& image, const BinaryMask& hole) {
  require_mask_matches(image, hole, "fallback_inpaint");
  if (hole.empty_mask()) throw EmptyMask("fallback_inpaint: empty hole");
  const int h = hole.height, w = hole.width;
  if (hole.area() == h * w)
    throw InpaintUnderdetermined("fallback_inpaint: hole covers the entire image");
  Image out = image;
  const int hw = h * w;

  // Onion-peel initialization: assign unknowns adjacent to knowns the mean of
  // their known neighbors, layer by layer.
  std::vector<uint8_t> known(hole.v.size());
  for (size_t i = 0; i < hole.v.size(); ++i) known[i] = hole.v[i] ? 0 : 1;
  std::vector<int> frontier;
  bool progressed = true;
  while (progressed) {
    progressed = false;
    frontier.clear();
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        const int i = y * w + x;
        if (known[static_cast<size_t>(i)]) continue;
        int cnt = 0;
        double s[3] = {0, 0, 0};
        auto tap = [&](int yy, int xx) {
          if (yy < 0 || yy >= h || xx < 0 || xx >= w) return;
          if (!known[static_cast<size_t>(yy) * w + xx]) return;
          ++cnt;
          for (int c = 0; c < 3; ++c) s[c] += out.data[static_cast<size_t>(c) * hw + yy * w + xx];
        };
        tap(y - 1, x);
        tap(y + 1, x);
        tap(y, x - 1);
        tap(y, x + 1);
        if (cnt > 0) {
          for (int c = 0; c < 3; ++c) out.data[static_cast<size_t>(c) * hw + i] = s[c] / cnt;
          frontier.push_back(i);
        }
      }
    for (int i : frontier) {
      known[static_cast<size_t>(i)] = 1;
      progressed = true;
    }
  }

  std::vector<int> hole_px;
  for (int i = 0; i < hw; ++i)
    if (hole.v[static_cast<size_t>(i)]) hole_px.push_back(i);

  const double tol = 1e-4;
  const int max_sweeps = 10000;
  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    double max_delta = 0.0;
    for (int i : hole_px) {
      const int y = i / w, x = i % w;
      int cnt = 0;
      double s[3] = {0, 0, 0};
      auto tap = [&](int yy, int xx) {
        if (yy < 0 || yy >= h || xx < 0 || xx >= w) return;
        ++cnt;
        for (int c = 0; c < 3; ++c) s[c] += out.data[static_cast<size_t>(c) * hw + yy * w + xx];
      };
      tap(y - 1, x);
      tap(y + 1, x);
      tap(y, x - 1);
      tap(y, x + 1);
      for (int c = 0; c < 3; ++c) {
        const double nv = s[c] / cnt;
        max_delta = std::max(max_delta, std::abs(nv - out.data[static_cast<size_t>(c) * hw + i]));
        out.data[static_cast<size_t>(c) * hw + i] = nv;
      }
    }
    if (max_delta < tol) break;
  }
  return out;
}

/// Hair segmentation of a synthesized toy image: the toy backend reserves a
/// channel as the hair signal; threshold it.
inline BinaryMask threshold_channel(const Image& image, int channel, double threshold) {
  require_image(image, "threshold_channel");
  const int hw = image.dim(1) * image.dim(2);
  BinaryMask out(image.dim(1), image.dim(2));
  for (int i = 0; i < hw; ++i)
    out.v[static_cast<size_t>(i)] = image.data[static_cast<size_t>(channel) * hw + i] > threshold ? 1 : 0;
  return out;
}

}  // namespace hairtx
