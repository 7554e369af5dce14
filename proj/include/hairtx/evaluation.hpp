#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "hairtx/errors.hpp"
#include "hairtx/mask.hpp"
#include "hairtx/tensor.hpp"

namespace hairtx {

inline constexpr double kPsnrCap = 100.0;  // sentinel for exact equality

/// 10*log10(1/MSE) over all pixels and channels, values in [0,1].
inline double psnr(const Image& a, const Image& b) {
  require_image(a, "psnr");
  require_same_shape(a, b, "psnr");
  double mse = 0.0;
  for (int i = 0; i < a.numel(); ++i) {
    const double d = a.data[static_cast<size_t>(i)] - b.data[static_cast<size_t>(i)];
    mse += d * d;
  }
  mse /= a.numel();
  if (mse <= 0.0) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(1.0 / mse));
}

/// PSNR restricted to pixels inside the mask.
inline double psnr_masked(const Image& a, const Image& b, const BinaryMask& mask) {
  require_mask_matches(a, mask, "psnr_masked");
  require_same_shape(a, b, "psnr_masked");
  const int hw = mask.height * mask.width;
  const int count = mask.area();
  if (count == 0) throw EmptyRegion("psnr_masked: empty mask");
  double mse = 0.0;
  for (int c = 0; c < 3; ++c)
    for (int i = 0; i < hw; ++i) {
      if (!mask.v[static_cast<size_t>(i)]) continue;
      const double d =
          a.data[static_cast<size_t>(c) * hw + i] - b.data[static_cast<size_t>(c) * hw + i];
      mse += d * d;
    }
  mse /= 3.0 * count;
  if (mse <= 0.0) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(1.0 / mse));
}

namespace detail {

inline Tensor to_gray(const Image& img) {
  const int hw = img.dim(1) * img.dim(2);
  Tensor g({img.dim(1), img.dim(2)});
  for (int i = 0; i < hw; ++i)
    g.data[static_cast<size_t>(i)] =
        (img.data[static_cast<size_t>(i)] + img.data[static_cast<size_t>(hw + i)] +
         img.data[static_cast<size_t>(2 * hw + i)]) /
        3.0;
  return g;
}

inline std::vector<double> ssim_kernel() {
  // 11-tap Gaussian, sigma 1.5, normalized
  std::vector<double> k(11);
  double s = 0.0;
  for (int i = 0; i < 11; ++i) {
    const double d = i - 5;
    k[static_cast<size_t>(i)] = std::exp(-d * d / (2.0 * 1.5 * 1.5));
    s += k[static_cast<size_t>(i)];
  }
  for (double& v : k) v /= s;
  return k;
}

// Windowed Gaussian mean over valid positions (no padding): out is
// (H-10)x(W-10), out(y,x) corresponds to window top-left (y,x).
inline Tensor window_filter(const Tensor& in, const std::vector<double>& k) {
  const int h = in.dim(0), w = in.dim(1);
  const int oh = h - 10, ow = w - 10;
  Tensor tmp({h, ow}), out({oh, ow});
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < ow; ++x) {
      double s = 0.0;
      for (int i = 0; i < 11; ++i) s += k[static_cast<size_t>(i)] * in.at(y, x + i);
      tmp.at(y, x) = s;
    }
  for (int y = 0; y < oh; ++y)
    for (int x = 0; x < ow; ++x) {
      double s = 0.0;
      for (int i = 0; i < 11; ++i) s += k[static_cast<size_t>(i)] * tmp.at(y + i, x);
      out.at(y, x) = s;
    }
  return out;
}

inline Tensor ssim_map(const Image& a, const Image& b) {
  require_image(a, "ssim");
  require_same_shape(a, b, "ssim");
  if (a.dim(1) < 11 || a.dim(2) < 11) throw ShapeError("ssim: image smaller than 11x11 window");
  const Tensor ga = to_gray(a), gb = to_gray(b);
  const auto k = ssim_kernel();
  const int h = ga.dim(0), w = ga.dim(1);
  Tensor ga2({h, w}), gb2({h, w}), gab({h, w});
  for (int i = 0; i < h * w; ++i) {
    ga2.data[static_cast<size_t>(i)] = ga.data[static_cast<size_t>(i)] * ga.data[static_cast<size_t>(i)];
    gb2.data[static_cast<size_t>(i)] = gb.data[static_cast<size_t>(i)] * gb.data[static_cast<size_t>(i)];
    gab.data[static_cast<size_t>(i)] = ga.data[static_cast<size_t>(i)] * gb.data[static_cast<size_t>(i)];
  }
  const Tensor mu_a = window_filter(ga, k), mu_b = window_filter(gb, k);
  const Tensor m_a2 = window_filter(ga2, k), m_b2 = window_filter(gb2, k);
  const Tensor m_ab = window_filter(gab, k);
  const double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;  // unit dynamic range
  Tensor out(mu_a.shape);
  for (int i = 0; i < out.numel(); ++i) {
    const double ma = mu_a.data[static_cast<size_t>(i)], mb = mu_b.data[static_cast<size_t>(i)];
    const double va = m_a2.data[static_cast<size_t>(i)] - ma * ma;
    const double vb = m_b2.data[static_cast<size_t>(i)] - mb * mb;
    const double cov = m_ab.data[static_cast<size_t>(i)] - ma * mb;
    out.data[static_cast<size_t>(i)] =
        ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
  }
  return out;
}

}  // namespace detail

/// Standard SSIM: grayscale by channel mean, 11x11 Gaussian window (sigma
/// 1.5), C1=0.01^2, C2=0.03^2, mean over valid window positions.
inline double ssim(const Image& a, const Image& b) {
  const Tensor m = detail::ssim_map(a, b);
  double s = 0.0;
  for (double v : m.data) s += v;
  return s / m.numel();
}

/// SSIM averaged over valid windows whose center pixel is inside the mask.
inline double ssim_masked(const Image& a, const Image& b, const BinaryMask& mask) {
  require_mask_matches(a, mask, "ssim_masked");
  const Tensor m = detail::ssim_map(a, b);
  double s = 0.0;
  int count = 0;
  for (int y = 0; y < m.dim(0); ++y)
    for (int x = 0; x < m.dim(1); ++x) {
      if (!mask.at(y + 5, x + 5)) continue;
      s += m.at(y, x);
      ++count;
    }
  if (count == 0) throw EmptyRegion("ssim_masked: no valid windows inside mask");
  return s / count;
}

/// Gaussian fit of a feature-point set.
struct FeatureSetStats {
  Tensor mean;  // [C]
  Tensor cov;   // [C,C] symmetric
  long count = 0;
};

/// Deterministic sequential fold of feature vectors into mean/covariance
/// (unbiased, divided by n-1).
class StatsAccumulator {
 public:
  explicit StatsAccumulator(int dim) : dim_(dim), sum_({dim}), outer_({dim, dim}) {}

  void add(const std::vector<double>& x) {
    if (static_cast<int>(x.size()) != dim_) throw ShapeError("StatsAccumulator: dim mismatch");
    for (int i = 0; i < dim_; ++i) {
      sum_[i] += x[static_cast<size_t>(i)];
      for (int j = 0; j < dim_; ++j) outer_.at(i, j) += x[static_cast<size_t>(i)] * x[static_cast<size_t>(j)];
    }
    ++n_;
  }

  FeatureSetStats finalize() const {
    if (n_ < 2) throw std::invalid_argument("StatsAccumulator: need at least 2 samples");
    FeatureSetStats s;
    s.count = n_;
    s.mean = Tensor({dim_});
    for (int i = 0; i < dim_; ++i) s.mean[i] = sum_[i] / n_;
    s.cov = Tensor({dim_, dim_});
    for (int i = 0; i < dim_; ++i)
      for (int j = 0; j < dim_; ++j)
        s.cov.at(i, j) = (outer_.at(i, j) - static_cast<double>(n_) * s.mean[i] * s.mean[j]) /
                         static_cast<double>(n_ - 1);
    // enforce exact symmetry against fp drift
    for (int i = 0; i < dim_; ++i)
      for (int j = i + 1; j < dim_; ++j) {
        const double v = 0.5 * (s.cov.at(i, j) + s.cov.at(j, i));
        s.cov.at(i, j) = v;
        s.cov.at(j, i) = v;
      }
    return s;
  }

 private:
  int dim_;
  long n_ = 0;
  Tensor sum_;
  Tensor outer_;
};

namespace detail {

/// Cyclic Jacobi eigendecomposition of a symmetric matrix. Returns
/// eigenvalues; eigenvectors (columns) optionally.
inline std::vector<double> jacobi_eigen_sym(Tensor a, Tensor* vectors = nullptr) {
  const int n = a.dim(0);
  Tensor v({n, n});
  for (int i = 0; i < n; ++i) v.at(i, i) = 1.0;
  double scale = 0.0;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) scale = std::max(scale, std::abs(a.at(i, j)));
  if (scale == 0.0) scale = 1.0;
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (int p = 0; p < n; ++p)
      for (int q = p + 1; q < n; ++q) off += a.at(p, q) * a.at(p, q);
    if (std::sqrt(off) < 1e-14 * scale * n) break;
    for (int p = 0; p < n; ++p)
      for (int q = p + 1; q < n; ++q) {
        const double apq = a.at(p, q);
        if (std::abs(apq) < 1e-300) continue;
        const double theta = (a.at(q, q) - a.at(p, p)) / (2.0 * apq);
        const double t = (theta >= 0 ? 1.0 : -1.0) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (int k = 0; k < n; ++k) {
          const double akp = a.at(k, p), akq = a.at(k, q);
          a.at(k, p) = c * akp - s * akq;
          a.at(k, q) = s * akp + c * akq;
        }
        for (int k = 0; k < n; ++k) {
          const double apk = a.at(p, k), aqk = a.at(q, k);
          a.at(p, k) = c * apk - s * aqk;
          a.at(q, k) = s * apk + c * aqk;
        }
        for (int k = 0; k < n; ++k) {
          const double vkp = v.at(k, p), vkq = v.at(k, q);
          v.at(k, p) = c * vkp - s * vkq;
          v.at(k, q) = s * vkp + c * vkq;
        }
      }
  }
  std::vector<double> eig(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) eig[static_cast<size_t>(i)] = a.at(i, i);
  if (vectors) *vectors = std::move(v);
  return eig;
}

/// Symmetrize then clip negative eigenvalues at zero.
inline Tensor clip_psd(const Tensor& m) {
  const int n = m.dim(0);
  Tensor sym({n, n});
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) sym.at(i, j) = 0.5 * (m.at(i, j) + m.at(j, i));
  Tensor vecs;
  std::vector<double> eig = jacobi_eigen_sym(sym, &vecs);
  bool any_neg = false;
  for (double e : eig)
    if (e < 0.0) any_neg = true;
  if (!any_neg) return sym;
  Tensor out({n, n});
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      double s = 0.0;
      for (int k = 0; k < n; ++k)
        s += vecs.at(i, k) * std::max(eig[static_cast<size_t>(k)], 0.0) * vecs.at(j, k);
      out.at(i, j) = s;
    }
  return out;
}

}  // namespace detail

/// Frechet distance between Gaussian stats:
///   ||mu1-mu2||^2 + Tr(S1 + S2 - 2 sqrt(S1 S2))
/// with the matrix square root taken via eigendecomposition of the
/// symmetrized product (negative eigenvalues clipped at zero).
inline double frechet_distance(const FeatureSetStats& s1, const FeatureSetStats& s2) {
  if (!s1.mean.same_shape(s2.mean) || !s1.cov.same_shape(s2.cov))
    throw ShapeError("frechet_distance: dimension mismatch");
  const int n = s1.mean.dim(0);
  const Tensor c1 = detail::clip_psd(s1.cov);
  const Tensor c2 = detail::clip_psd(s2.cov);
  double mu_term = 0.0;
  for (int i = 0; i < n; ++i) {
    const double d = s1.mean[i] - s2.mean[i];
    mu_term += d * d;
  }
  Tensor prod({n, n});
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      double s = 0.0;
      for (int k = 0; k < n; ++k) s += c1.at(i, k) * c2.at(k, j);
      prod.at(i, j) = s;
    }
  Tensor symprod({n, n});
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) symprod.at(i, j) = 0.5 * (prod.at(i, j) + prod.at(j, i));
  std::vector<double> eig = detail::jacobi_eigen_sym(symprod);
  double tr_sqrt = 0.0;
  for (double e : eig) tr_sqrt += std::sqrt(std::max(e, 0.0));
  double tr = 0.0;
  for (int i = 0; i < n; ++i) tr += c1.at(i, i) + c2.at(i, i);
  return std::max(0.0, mu_term + tr - 2.0 * tr_sqrt);
}

/// IoU between the target hair mask and the synthesized image's hair mask.
inline double hair_iou_eval(const BinaryMask& target_hair, const BinaryMask& synth_hair) {
  return mask_iou(target_hair, synth_hair);
}

}  // namespace hairtx
