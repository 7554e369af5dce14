#pragma once

#include <cmath>
#include <memory>
#include <string>
#include <vector>

#include "hairtx/autodiff.hpp"
#include "hairtx/errors.hpp"
#include "hairtx/mask.hpp"
#include "hairtx/rng.hpp"
#include "hairtx/tensor.hpp"

namespace hairtx {

struct LevelGeometry {
  int channels = 0;
  int stride = 0;
};

/// Multi-level perceptual feature extractor. Deterministic given its weights
/// and differentiable: extract() composes autodiff ops, so any scalar
/// functional of the outputs admits gradients w.r.t. the input image.
class FeatureExtractor {
 public:
  virtual ~FeatureExtractor() = default;

  virtual int num_levels() const = 0;
  virtual LevelGeometry level_geometry(int level) const = 0;

  /// Features of [3,H,W] image at 1-based level b.
  virtual ad::Var extract(const ad::Var& image, int level) const = 0;

  /// Fine-grained taps: the appearance tap is the shallowest sublayer; style
  /// taps are the four sublayers used for Gram matching.
  virtual int appearance_level() const = 0;
  virtual std::vector<int> style_levels() const = 0;

  FeatureMap extract_values(const Image& image, int level) const {
    return extract(ad::Var::leaf(image, false), level).value();
  }

  void check_level(int level) const {
    if (level < 1 || level > num_levels())
      throw LevelError("unknown extractor level " + std::to_string(level));
  }
};

/// Deterministic linear stand-in for a pretrained backbone: level b applies
/// mean pooling with window = stride 2^(b-1), then a fixed seeded 1x1 channel
/// mix from 3 to 2^(b+2) channels, zero bias. Linear by construction, which
/// gives every loss a closed-form gradient to test against.
class ToyExtractor final : public FeatureExtractor {
 public:
  static constexpr uint64_t kDefaultSeed = 0x7e47f00dull;

  explicit ToyExtractor(uint64_t seed = kDefaultSeed) {
    Rng rng(seed);
    mix_.reserve(5);
    for (int b = 1; b <= 5; ++b) {
      const int c = channels_at(b);
      Tensor m({c, 3});
      for (double& v : m.data) v = rng.normal() / std::sqrt(3.0);
      mix_.push_back(std::move(m));
    }
  }

  int num_levels() const override { return 5; }

  LevelGeometry level_geometry(int level) const override {
    check_level(level);
    return {channels_at(level), 1 << (level - 1)};
  }

  ad::Var extract(const ad::Var& image, int level) const override {
    check_level(level);
    const Tensor& v = image.value();
    require_image(v, "ToyExtractor::extract");
    const int stride = 1 << (level - 1);
    if (v.dim(1) % stride || v.dim(2) % stride)
      throw ShapeError("ToyExtractor: image dims not divisible by level stride");
    ad::Var x = image;
    for (int s = 1; s < stride; s *= 2) x = ad::avg_pool2(x);
    return ad::channel_mix(x, mix_[static_cast<size_t>(level - 1)]);
  }

  int appearance_level() const override { return 1; }
  std::vector<int> style_levels() const override { return {1, 2, 3, 4}; }

 private:
  static int channels_at(int b) { return 1 << (b + 2); }
  std::vector<Tensor> mix_;
};

/// Optional LPIPS calibration: per-level, per-channel nonnegative weights.
/// Unit weights (empty) reproduce the plain normalized-feature distance.
struct LpipsWeights {
  std::vector<std::vector<double>> per_level;  // index 0 = level 1

  bool empty() const { return per_level.empty(); }

  void validate_against(const FeatureExtractor& ex) const {
    if (empty()) return;
    if (static_cast<int>(per_level.size()) != ex.num_levels())
      throw ShapeError("LpipsWeights: level count mismatch");
    for (int b = 1; b <= ex.num_levels(); ++b)
      if (static_cast<int>(per_level[static_cast<size_t>(b - 1)].size()) !=
          ex.level_geometry(b).channels)
        throw ShapeError("LpipsWeights: channel count mismatch at level " + std::to_string(b));
  }

  const std::vector<double>* at_level(int level) const {
    if (empty()) return nullptr;
    return &per_level[static_cast<size_t>(level - 1)];
  }
};

/// LPIPS-style distance between two same-geometry feature maps: channel-unit
/// normalize per spatial location, then average squared differences over
/// channels and positions. Optional per-channel weights multiply the squared
/// differences.
inline ad::Var perceptual_distance(const ad::Var& fa, const ad::Var& fb,
                                   const std::vector<double>* channel_weights = nullptr) {
  require_same_shape(fa.value(), fb.value(), "perceptual_distance");
  if (fa.value().rank() != 3) throw ShapeError("perceptual_distance: need [C,H,W]");
  ad::Var d = ad::sub(ad::normalize_channels(fa), ad::normalize_channels(fb));
  ad::Var d2 = ad::square(d);
  if (channel_weights) {
    const int c = fa.value().dim(0);
    if (static_cast<int>(channel_weights->size()) != c)
      throw ShapeError("perceptual_distance: weight count mismatch");
    Tensor w(fa.value().shape);
    const int hw = fa.value().dim(1) * fa.value().dim(2);
    for (int ch = 0; ch < c; ++ch)
      for (int i = 0; i < hw; ++i)
        w.data[static_cast<size_t>(ch) * hw + i] = (*channel_weights)[static_cast<size_t>(ch)];
    d2 = ad::mul_const(d2, w);
  }
  return ad::mean(d2);
}

inline double perceptual_distance(const FeatureMap& fa, const FeatureMap& fb,
                                  const std::vector<double>* channel_weights = nullptr) {
  return perceptual_distance(ad::Var::leaf(fa), ad::Var::leaf(fb), channel_weights).scalar();
}

/// Masked spatial average of the appearance tap: A in R^{C1}. The mask is
/// nearest-neighbor resized to the tap's resolution before pooling.
inline ad::Var mean_appearance(const FeatureExtractor& ex, const ad::Var& image,
                               const BinaryMask& mask) {
  const int level = ex.appearance_level();
  ad::Var feats = ex.extract(image, level);
  const Tensor& fv = feats.value();
  BinaryMask m = (mask.height == fv.dim(1) && mask.width == fv.dim(2))
                     ? mask
                     : downscale_nearest(mask, fv.dim(1), fv.dim(2));
  const int count = m.area();
  if (count == 0) throw EmptyRegion("mean_appearance: mask empty at feature resolution");
  ad::Var masked = ad::mul_bcast_hw(feats, m.to_tensor());
  return ad::scale(ad::sum_hw(masked), 1.0 / count);
}

inline Tensor mean_appearance(const FeatureExtractor& ex, const Image& image,
                              const BinaryMask& mask) {
  return mean_appearance(ex, ad::Var::leaf(image), mask).value();
}

/// Gram matrix of [C,H,W] features (no normalization).
inline Tensor gram(const FeatureMap& features) {
  return ad::gram(ad::Var::leaf(features)).value();
}

}  // namespace hairtx
