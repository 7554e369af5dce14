#pragma once

#include <cmath>
#include <fstream>
#include <memory>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hairtx/autodiff.hpp"
#include "hairtx/errors.hpp"
#include "hairtx/rng.hpp"
#include "hairtx/tensor.hpp"

namespace hairtx {

struct GeneratorGeometry {
  int layers = 0;       // L: number of per-layer style vectors
  int latent_dim = 0;   // D
  std::vector<int> noise_sides;
  int resolution = 0;   // output R (square)
};

/// Optimization variables: extended latent (L layer-vectors of dim D) plus
/// one square noise map per generator layer.
struct LatentState {
  Tensor w_plus;               // [L,D]
  std::vector<Tensor> noise;   // each [r,r]

  int flat_size() const {
    int n = w_plus.numel();
    for (const Tensor& t : noise) n += t.numel();
    return n;
  }

  std::vector<double> pack() const {
    std::vector<double> out;
    out.reserve(static_cast<size_t>(flat_size()));
    out.insert(out.end(), w_plus.data.begin(), w_plus.data.end());
    for (const Tensor& t : noise) out.insert(out.end(), t.data.begin(), t.data.end());
    return out;
  }

  static LatentState unpack(const std::vector<double>& flat, const GeneratorGeometry& g) {
    LatentState s;
    s.w_plus = Tensor({g.layers, g.latent_dim});
    size_t off = 0;
    std::copy(flat.begin(), flat.begin() + s.w_plus.numel(), s.w_plus.data.begin());
    off += static_cast<size_t>(s.w_plus.numel());
    for (int side : g.noise_sides) {
      Tensor t({side, side});
      std::copy(flat.begin() + static_cast<long>(off), flat.begin() + static_cast<long>(off) + t.numel(),
                t.data.begin());
      off += static_cast<size_t>(t.numel());
      s.noise.push_back(std::move(t));
    }
    return s;
  }
};

/// Graph-side view of a LatentState (slices of one flat parameter leaf, or
/// independent leaves).
struct LatentVars {
  ad::Var w_plus;               // [L,D]
  std::vector<ad::Var> noise;   // each [r,r]

  static LatentVars from_flat(const ad::Var& theta, const GeneratorGeometry& g) {
    LatentVars lv;
    lv.w_plus = ad::slice(theta, 0, {g.layers, g.latent_dim});
    int off = g.layers * g.latent_dim;
    for (int side : g.noise_sides) {
      lv.noise.push_back(ad::slice(theta, off, {side, side}));
      off += side * side;
    }
    return lv;
  }

  static LatentVars leaves(const LatentState& s) {
    LatentVars lv;
    lv.w_plus = ad::Var::leaf(s.w_plus);
    for (const Tensor& t : s.noise) lv.noise.push_back(ad::Var::leaf(t));
    return lv;
  }
};

/// Latent-variable image synthesizer. Deterministic given a LatentState and
/// differentiable w.r.t. all of its entries; synthesize() returns the
/// pre-clamp image (clamping happens only at export).
class GeneratorBackend {
 public:
  virtual ~GeneratorBackend() = default;

  virtual const GeneratorGeometry& geometry() const = 0;
  virtual const Tensor& mean_latent() const = 0;  // [D]

  virtual ad::Var synthesize(const LatentVars& state) const = 0;

  void check_state(const LatentState& s) const {
    const GeneratorGeometry& g = geometry();
    if (s.w_plus.rank() != 2 || s.w_plus.dim(0) != g.layers || s.w_plus.dim(1) != g.latent_dim)
      throw ShapeError("generator: w_plus geometry mismatch");
    if (s.noise.size() != g.noise_sides.size())
      throw ShapeError("generator: noise map count mismatch");
    for (size_t j = 0; j < s.noise.size(); ++j) {
      const int side = g.noise_sides[j];
      if (s.noise[j].rank() != 2 || s.noise[j].dim(0) != side || s.noise[j].dim(1) != side)
        throw ShapeError("generator: noise map side mismatch");
    }
  }

  /// Export path: clamped to [0,1].
  Image synthesize_export(const LatentState& s) const {
    check_state(s);
    return clamp01(synthesize(LatentVars::leaves(s)).value());
  }
};

/// Affine procedural backend:
///   image = bias + sum_l Up(reshape(B_l w_l)) + sum_j alpha_j Up(noise_j)
/// with fixed seeded projection bases B_l on a coarse grid. Affine by
/// construction, so every gradient has a closed form. The normative toy
/// geometry is resolution 32^2, L=5, D=8, noise sides {4,8,16,32,32}.
class AffineBackend final : public GeneratorBackend {
 public:
  static constexpr uint64_t kToySeed = 0x10c0ffeeull;

  static AffineBackend toy(uint64_t seed = kToySeed) {
    GeneratorGeometry g;
    g.layers = 5;
    g.latent_dim = 8;
    g.noise_sides = {4, 8, 16, 32, 32};
    g.resolution = 32;
    return AffineBackend(g, /*proj_grid=*/32, /*alpha=*/0.05, /*bias=*/0.5, seed,
                         Tensor({8}));  // toy mean latent: zeros
  }

  AffineBackend(const GeneratorGeometry& geo, int proj_grid, double alpha, double bias,
                uint64_t seed, Tensor mean_latent)
      : geo_(geo), proj_grid_(proj_grid), alpha_(alpha), bias_(bias), mean_(std::move(mean_latent)) {
    if (geo_.resolution % proj_grid_ != 0)
      throw ShapeError("AffineBackend: resolution not divisible by projection grid");
    if (mean_.numel() != geo_.latent_dim) throw ShapeError("AffineBackend: mean latent dim mismatch");
    for (int side : geo_.noise_sides)
      if (side < 1 || geo_.resolution % side != 0)
        throw ShapeError("AffineBackend: noise side must divide resolution");
    Rng rng(seed);
    const double s = 1.0 / std::sqrt(static_cast<double>(geo_.layers) * geo_.latent_dim);
    proj_.reserve(static_cast<size_t>(geo_.layers));
    for (int l = 0; l < geo_.layers; ++l) {
      Tensor p({3 * proj_grid_ * proj_grid_, geo_.latent_dim});
      for (double& v : p.data) v = rng.normal() * s;
      proj_.push_back(std::move(p));
    }
  }

  /// Pretrained-backend adapter: loads geometry and seeding from a JSON
  /// weight descriptor; projection bases are procedurally derived.
  static AffineBackend from_weight_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open generator weights: " + path);
    nlohmann::json j;
    try {
      in >> j;
    } catch (const std::exception& e) {
      throw ConfigError("generator weights parse error: " + std::string(e.what()));
    }
    GeneratorGeometry g;
    g.layers = j.at("layers").get<int>();
    g.latent_dim = j.at("latent_dim").get<int>();
    g.resolution = j.at("resolution").get<int>();
    g.noise_sides = j.at("noise_sides").get<std::vector<int>>();
    if (static_cast<int>(g.noise_sides.size()) != g.layers)
      throw ConfigError("generator weights: noise_sides count must equal layers");
    const int grid = j.value("proj_grid", 16);
    const double alpha = j.value("alpha", 0.05);
    const double bias = j.value("bias", 0.5);
    const uint64_t seed = j.value("seed", 1ull);
    Tensor mean({g.latent_dim});
    if (j.contains("mean_latent")) {
      auto m = j["mean_latent"].get<std::vector<double>>();
      if (static_cast<int>(m.size()) != g.latent_dim)
        throw ConfigError("generator weights: mean_latent dim mismatch");
      std::copy(m.begin(), m.end(), mean.data.begin());
    }
    return AffineBackend(g, grid, alpha, bias, seed, std::move(mean));
  }

  const GeneratorGeometry& geometry() const override { return geo_; }
  const Tensor& mean_latent() const override { return mean_; }

  ad::Var synthesize(const LatentVars& state) const override {
    if (state.w_plus.value().dim(0) != geo_.layers ||
        state.w_plus.value().dim(1) != geo_.latent_dim ||
        state.noise.size() != geo_.noise_sides.size())
      throw ShapeError("synthesize: state geometry mismatch");
    const int up = geo_.resolution / proj_grid_;
    ad::Var img = ad::constant(Tensor::full({3, geo_.resolution, geo_.resolution}, bias_));
    for (int l = 0; l < geo_.layers; ++l) {
      ad::Var w_l = ad::slice(ad::reshape(state.w_plus, {geo_.layers * geo_.latent_dim}),
                              l * geo_.latent_dim, {geo_.latent_dim});
      ad::Var contrib = ad::reshape(ad::matvec(proj_[static_cast<size_t>(l)], w_l),
                                    {3, proj_grid_, proj_grid_});
      if (up > 1) contrib = ad::upsample_nearest(contrib, up);
      img = ad::add(img, contrib);
    }
    for (size_t jdx = 0; jdx < state.noise.size(); ++jdx) {
      const int side = geo_.noise_sides[jdx];
      if (state.noise[jdx].value().dim(0) != side)
        throw ShapeError("synthesize: noise side mismatch");
      ad::Var n = state.noise[jdx];
      const int f = geo_.resolution / side;
      if (f > 1) n = ad::upsample_nearest(n, f);
      // broadcast the single noise map across the three channels
      ad::Var n3 = ad::reshape(n, {1, geo_.resolution, geo_.resolution});
      Tensor ones({3, 1});
      for (double& v : ones.data) v = 1.0;
      img = ad::add(img, ad::scale(ad::channel_mix(n3, ones), alpha_));
    }
    return img;
  }

 private:
  GeneratorGeometry geo_;
  int proj_grid_;
  double alpha_;
  double bias_;
  Tensor mean_;
  std::vector<Tensor> proj_;
};

/// Mean-latent start: w rows all equal the backend's mean latent; noise maps
/// are seeded standard normal, then exactly normalized to zero mean and unit
/// variance (zero noise would make the noise objective vacuous at init).
inline LatentState init_latent_state(const GeneratorBackend& backend, uint64_t seed) {
  const GeneratorGeometry& g = backend.geometry();
  LatentState s;
  s.w_plus = Tensor({g.layers, g.latent_dim});
  for (int l = 0; l < g.layers; ++l)
    for (int d = 0; d < g.latent_dim; ++d) s.w_plus.at(l, d) = backend.mean_latent()[d];
  Rng rng(seed);
  for (int side : g.noise_sides) {
    Tensor n({side, side});
    for (double& v : n.data) v = rng.normal();
    const int cnt = n.numel();
    double mu = 0.0;
    for (double v : n.data) mu += v;
    mu /= cnt;
    double var = 0.0;
    for (double v : n.data) var += (v - mu) * (v - mu);
    var /= cnt;
    const double sd = std::sqrt(std::max(var, 1e-12));
    for (double& v : n.data) v = (v - mu) / sd;
    s.noise.push_back(std::move(n));
  }
  return s;
}

/// || w_plus - broadcast(mean latent) || over all LxD entries.
inline double latent_distance(const LatentState& s, const GeneratorBackend& backend) {
  backend.check_state(s);
  const Tensor& mean = backend.mean_latent();
  double acc = 0.0;
  for (int l = 0; l < s.w_plus.dim(0); ++l)
    for (int d = 0; d < s.w_plus.dim(1); ++d) {
      const double diff = s.w_plus.at(l, d) - mean[d];
      acc += diff * diff;
    }
  return std::sqrt(acc);
}

}  // namespace hairtx
