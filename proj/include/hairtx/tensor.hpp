#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "hairtx/errors.hpp"

namespace hairtx {

/// Dense row-major tensor of doubles. Rank is dynamic (0 = scalar).
struct Tensor {
  std::vector<int> shape;
  std::vector<double> data;

  Tensor() = default;
  explicit Tensor(std::vector<int> s) : shape(std::move(s)), data(numel_of(shape), 0.0) {}
  Tensor(std::vector<int> s, double fill) : shape(std::move(s)), data(numel_of(shape), fill) {}

  static int numel_of(const std::vector<int>& s) {
    long long n = 1;
    for (int d : s) n *= d;
    return static_cast<int>(n);
  }

  static Tensor zeros(std::vector<int> s) { return Tensor(std::move(s)); }
  static Tensor full(std::vector<int> s, double v) { return Tensor(std::move(s), v); }
  static Tensor scalar(double v) { return Tensor(std::vector<int>{}, v); }

  int numel() const { return static_cast<int>(data.size()); }
  int rank() const { return static_cast<int>(shape.size()); }
  int dim(int i) const { return shape[static_cast<size_t>(i)]; }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }

  double& operator[](int i) { return data[static_cast<size_t>(i)]; }
  double operator[](int i) const { return data[static_cast<size_t>(i)]; }

  double& at(int i, int j) { return data[static_cast<size_t>(i) * dim(1) + j]; }
  double at(int i, int j) const { return data[static_cast<size_t>(i) * dim(1) + j]; }
  double& at(int c, int y, int x) {
    return data[(static_cast<size_t>(c) * dim(1) + y) * dim(2) + x];
  }
  double at(int c, int y, int x) const {
    return data[(static_cast<size_t>(c) * dim(1) + y) * dim(2) + x];
  }

  bool all_finite() const {
    for (double v : data)
      if (!std::isfinite(v)) return false;
    return true;
  }
};

inline std::string shape_str(const std::vector<int>& s) {
  std::string out = "[";
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

inline void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
  if (!a.same_shape(b))
    throw ShapeError(std::string(what) + ": shape mismatch " + shape_str(a.shape) + " vs " +
                     shape_str(b.shape));
}

/// An image is a [3,H,W] tensor with values nominally in [0,1].
using Image = Tensor;
/// A feature map is a [C,H,W] tensor.
using FeatureMap = Tensor;

inline void require_image(const Tensor& t, const char* what) {
  if (t.rank() != 3 || t.dim(0) != 3)
    throw ShapeError(std::string(what) + ": expected [3,H,W] image, got " + shape_str(t.shape));
}

inline Tensor clamp01(Tensor t) {
  for (double& v : t.data) v = std::clamp(v, 0.0, 1.0);
  return t;
}

inline double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double norm2(const std::vector<double>& a) { return std::sqrt(dot(a, a)); }

}  // namespace hairtx
