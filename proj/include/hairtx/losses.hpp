#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "hairtx/autodiff.hpp"
#include "hairtx/errors.hpp"
#include "hairtx/features.hpp"
#include "hairtx/mask.hpp"
#include "hairtx/tensor.hpp"

namespace hairtx {

struct LossWeights {
  double face = 1.0;
  double structure = 1.0;
  double appearance = 40.0;
  double style = 1.5e4;
  double noise = 1e5;
};

/// Per-stage term toggling; configured weights stay inspectable.
struct StageMask {
  bool face = true;
  bool structure = true;
  bool appearance = true;
  bool style = true;
  bool noise = true;

  static StageMask stage1() { return {true, true, false, false, true}; }
  static StageMask stage2() { return {true, true, true, true, true}; }
};

struct LossValues {
  double face = 0.0;
  double structure = 0.0;
  double appearance = 0.0;
  double style = 0.0;
  double noise = 0.0;
  double total = 0.0;
};

/// total = lf*face + lr*structure + la*appearance + ls*style + ln*noise,
/// evaluated left to right in this exact order (the logged identity is
/// audited to fp exactness). Disabled terms must already be zeroed.
inline double weighted_total(const LossValues& v, const LossWeights& w) {
  return (((w.face * v.face + w.structure * v.structure) + w.appearance * v.appearance) +
          w.style * v.style) +
         w.noise * v.noise;
}

/// Multi-level LPIPS distance between a fixed reference and the synthesized
/// image, both pixel-masked by the same mask. Reference features are
/// normalized once at construction.
class MaskedLpips {
 public:
  MaskedLpips(const FeatureExtractor& ex, const Image& ref, const BinaryMask& mask,
              std::vector<int> levels, const LpipsWeights* weights = nullptr,
              const char* what = "masked_lpips")
      : ex_(ex), mask_tensor_(mask.to_tensor()), levels_(std::move(levels)), weights_(weights) {
    require_mask_matches(ref, mask, what);
    if (mask.empty_mask()) throw EmptyRegion(std::string(what) + ": empty mask");
    ad::Var masked_ref = ad::mul_bcast_hw(ad::Var::leaf(ref), mask_tensor_);
    for (int b : levels_)
      ref_norm_.push_back(ad::normalize_channels(ex_.extract(masked_ref, b)).value());
  }

  ad::Var operator()(const ad::Var& synth) const {
    ad::Var total = ad::constant(0.0);
    for (size_t i = 0; i < levels_.size(); ++i) {
      const int b = levels_[i];
      ad::Var masked = ad::mul_bcast_hw(synth, mask_tensor_);
      ad::Var n = ad::normalize_channels(ex_.extract(masked, b));
      ad::Var d2 = ad::square(ad::sub(n, ad::constant(ref_norm_[i])));
      if (weights_ && !weights_->empty()) {
        const std::vector<double>& wc = *weights_->at_level(b);
        const Tensor& shape_ref = ref_norm_[i];
        Tensor w(shape_ref.shape);
        const int hw = shape_ref.dim(1) * shape_ref.dim(2);
        for (int ch = 0; ch < shape_ref.dim(0); ++ch)
          for (int p = 0; p < hw; ++p) w.data[static_cast<size_t>(ch) * hw + p] = wc[static_cast<size_t>(ch)];
        d2 = ad::mul_const(d2, w);
      }
      total = ad::add(total, ad::mean(d2));
    }
    return ad::scale(total, 1.0 / static_cast<double>(levels_.size()));
  }

 private:
  const FeatureExtractor& ex_;
  Tensor mask_tensor_;
  std::vector<int> levels_;
  const LpipsWeights* weights_;
  std::vector<Tensor> ref_norm_;
};

inline std::vector<int> all_levels(const FeatureExtractor& ex) {
  std::vector<int> out;
  for (int b = 1; b <= ex.num_levels(); ++b) out.push_back(b);
  return out;
}

/// Identity reconstruction: mean LPIPS over all extractor levels of the
/// target-masked identity vs synthesized image.
inline ad::Var face_loss(const FeatureExtractor& ex, const Image& identity, const ad::Var& synth,
                         const BinaryMask& target_mask, const LpipsWeights* w = nullptr) {
  MaskedLpips lp(ex, identity, target_mask, all_levels(ex), w, "face_loss");
  return lp(synth);
}

inline double face_loss(const FeatureExtractor& ex, const Image& identity, const Image& synth,
                        const BinaryMask& target_mask, const LpipsWeights* w = nullptr) {
  return face_loss(ex, identity, ad::Var::leaf(synth), target_mask, w).scalar();
}

/// Hair structure: mean LPIPS over the two deepest levels of the eroded-hair
/// masked shape reference vs synthesized image.
inline std::vector<int> structure_levels(const FeatureExtractor& ex) {
  return {ex.num_levels() - 1, ex.num_levels()};
}

inline ad::Var structure_loss(const FeatureExtractor& ex, const Image& shape_ref,
                              const ad::Var& synth, const BinaryMask& eroded_hair,
                              const LpipsWeights* w = nullptr) {
  MaskedLpips lp(ex, shape_ref, eroded_hair, structure_levels(ex), w, "structure_loss");
  return lp(synth);
}

inline double structure_loss(const FeatureExtractor& ex, const Image& shape_ref, const Image& synth,
                             const BinaryMask& eroded_hair, const LpipsWeights* w = nullptr) {
  return structure_loss(ex, shape_ref, ad::Var::leaf(synth), eroded_hair, w).scalar();
}

/// Squared distance between masked mean-appearance descriptors of the
/// reference and the synthesized image.
class AppearanceLoss {
 public:
  AppearanceLoss(const FeatureExtractor& ex, const Image& app_ref, const BinaryMask& app_mask,
                 const BinaryMask& synth_hair_mask)
      : ex_(ex), synth_mask_(synth_hair_mask) {
    a_ref_ = mean_appearance(ex, app_ref, app_mask);
  }

  ad::Var operator()(const ad::Var& synth) const {
    ad::Var a_synth = mean_appearance(ex_, synth, synth_mask_);
    return ad::sqnorm(ad::sub(a_synth, ad::constant(a_ref_)));
  }

 private:
  const FeatureExtractor& ex_;
  BinaryMask synth_mask_;
  Tensor a_ref_;
};

inline ad::Var appearance_loss(const FeatureExtractor& ex, const Image& app_ref,
                               const BinaryMask& app_mask, const ad::Var& synth,
                               const BinaryMask& synth_hair_mask) {
  AppearanceLoss l(ex, app_ref, app_mask, synth_hair_mask);
  return l(synth);
}

inline double appearance_loss(const FeatureExtractor& ex, const Image& app_ref,
                              const BinaryMask& app_mask, const Image& synth,
                              const BinaryMask& synth_hair_mask) {
  return appearance_loss(ex, app_ref, app_mask, ad::Var::leaf(synth), synth_hair_mask).scalar();
}

/// Mean squared Frobenius distance between Gram matrices of pixel-masked
/// images across the style taps.
class StyleLoss {
 public:
  StyleLoss(const FeatureExtractor& ex, const Image& app_ref, const BinaryMask& app_mask,
            const BinaryMask& synth_hair_mask)
      : ex_(ex), synth_mask_tensor_(synth_hair_mask.to_tensor()) {
    require_mask_matches(app_ref, app_mask, "style_loss");
    if (app_mask.empty_mask()) throw EmptyRegion("style_loss: empty appearance mask");
    if (synth_hair_mask.empty_mask()) throw EmptyRegion("style_loss: empty synth hair mask");
    levels_ = ex.style_levels();
    ad::Var masked_ref = ad::mul_bcast_hw(ad::Var::leaf(app_ref), app_mask.to_tensor());
    for (int b : levels_) gram_ref_.push_back(ad::gram(ex_.extract(masked_ref, b)).value());
  }

  ad::Var operator()(const ad::Var& synth) const {
    ad::Var total = ad::constant(0.0);
    ad::Var masked = ad::mul_bcast_hw(synth, synth_mask_tensor_);
    for (size_t i = 0; i < levels_.size(); ++i) {
      ad::Var g = ad::gram(ex_.extract(masked, levels_[i]));
      total = ad::add(total, ad::sqnorm(ad::sub(g, ad::constant(gram_ref_[i]))));
    }
    return ad::scale(total, 1.0 / static_cast<double>(levels_.size()));
  }

 private:
  const FeatureExtractor& ex_;
  Tensor synth_mask_tensor_;
  std::vector<int> levels_;
  std::vector<Tensor> gram_ref_;
};

inline ad::Var style_loss(const FeatureExtractor& ex, const Image& app_ref,
                          const BinaryMask& app_mask, const ad::Var& synth,
                          const BinaryMask& synth_hair_mask) {
  StyleLoss l(ex, app_ref, app_mask, synth_hair_mask);
  return l(synth);
}

inline double style_loss(const FeatureExtractor& ex, const Image& app_ref,
                         const BinaryMask& app_mask, const Image& synth,
                         const BinaryMask& synth_hair_mask) {
  return style_loss(ex, app_ref, app_mask, ad::Var::leaf(synth), synth_hair_mask).scalar();
}

inline bool is_pow2(int v) { return v > 0 && (v & (v - 1)) == 0; }

/// Successive 2x2 mean-pooled copies of a square power-of-two map, halting at
/// 8x8. Maps at or below 8x8 yield an empty list of extra levels.
inline std::vector<Tensor> pyramid_down(const Tensor& map) {
  if (map.rank() != 2 || map.dim(0) != map.dim(1))
    throw ShapeError("pyramid_down: need square [r,r] map");
  if (!is_pow2(map.dim(0))) throw ShapeError("pyramid_down: side must be a power of two");
  std::vector<Tensor> out;
  Tensor cur = map;
  while (cur.dim(0) > 8) {
    const int side = cur.dim(0) / 2;
    Tensor next({side, side});
    for (int y = 0; y < side; ++y)
      for (int x = 0; x < side; ++x)
        next.at(y, x) = 0.25 * (cur.at(2 * y, 2 * x) + cur.at(2 * y, 2 * x + 1) +
                                cur.at(2 * y + 1, 2 * x) + cur.at(2 * y + 1, 2 * x + 1));
    out.push_back(next);
    cur = std::move(next);
  }
  return out;
}

/// Anti-signal noise penalty: each map is normalized to zero mean and unit
/// variance (variance floor 1e-8), then for the map and every pyramid level
/// down to 8x8 the squared means of wrap-around horizontal and vertical
/// neighbor products are summed.
inline ad::Var noise_regularization(const std::vector<ad::Var>& noise_maps) {
  ad::Var total = ad::constant(0.0);
  for (const ad::Var& map : noise_maps) {
    const Tensor& mv = map.value();
    if (mv.rank() != 2 || mv.dim(0) != mv.dim(1) || !is_pow2(mv.dim(0)))
      throw ShapeError("noise_regularization: maps must be square power-of-two");
    ad::Var mu = ad::mean(map);
    ad::Var centered = ad::sub(map, mu);
    ad::Var var = ad::mean(ad::square(centered));
    ad::Var sd = ad::sqrt(ad::max_const(var, 1e-8));
    ad::Var lvl = ad::div(centered, sd);
    while (true) {
      ad::Var horiz = ad::mean(ad::mul(lvl, ad::roll2d(lvl, 0, 1)));
      ad::Var vert = ad::mean(ad::mul(lvl, ad::roll2d(lvl, 1, 0)));
      total = ad::add(total, ad::add(ad::square(horiz), ad::square(vert)));
      if (lvl.value().dim(0) <= 8) break;
      lvl = ad::avg_pool2(lvl);
    }
  }
  return total;
}

inline double noise_regularization(const std::vector<Tensor>& noise_maps) {
  std::vector<ad::Var> vars;
  vars.reserve(noise_maps.size());
  for (const Tensor& t : noise_maps) vars.push_back(ad::Var::leaf(t));
  return noise_regularization(vars).scalar();
}

}  // namespace hairtx
