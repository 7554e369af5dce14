#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "hairtx/errors.hpp"
#include "hairtx/features.hpp"
#include "hairtx/generator.hpp"
#include "hairtx/losses.hpp"
#include "hairtx/mask.hpp"
#include "hairtx/tensor.hpp"

namespace hairtx {

struct OptimizationConfig {
  int stage1_iters = 1000;
  int stage2_iters = 1000;
  double lr0 = 0.1;
  LossWeights weights;
  bool go_enabled = true;
  bool go_wplus_only = false;  // restrict the projection to w_plus coordinates
  uint64_t seed = 1;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  int snapshot_every = 0;
};

/// Gradients of the structure, appearance and style terms, flat over all
/// optimized coordinates (w_plus then noise maps).
struct GradientTriple {
  std::vector<double> g_r;
  std::vector<double> g_a;
  std::vector<double> g_s;
};

/// Project away the component of g_r parallel to g_as. Skipped (g_r returned
/// unchanged) when ||g_as||^2 <= eps.
inline std::vector<double> orthogonalize(const std::vector<double>& g_r,
                                         const std::vector<double>& g_as, double eps = 1e-12) {
  if (g_r.size() != g_as.size()) throw ShapeError("orthogonalize: length mismatch");
  const double denom = dot(g_as, g_as);
  if (denom <= eps) return g_r;
  const double coef = dot(g_r, g_as) / denom;
  std::vector<double> out(g_r.size());
  for (size_t i = 0; i < g_r.size(); ++i) out[i] = g_r[i] - coef * g_as[i];
  return out;
}

/// Cosine annealing, restarted at each stage boundary.
inline double cosine_lr(int iter, int total, double lr0) {
  if (total < 1 || iter < 0 || iter > total)
    throw std::invalid_argument("cosine_lr: need 0 <= iter <= total, total >= 1");
  return lr0 * 0.5 * (1.0 + std::cos(M_PI * static_cast<double>(iter) / total));
}

struct AdamState {
  std::vector<double> m, v;
  long t = 0;

  void reset(size_t n) {
    m.assign(n, 0.0);
    v.assign(n, 0.0);
    t = 0;
  }
};

/// One bias-corrected Adam update. Throws DivergenceError on non-finite
/// gradients.
inline void adam_step(std::vector<double>& params, const std::vector<double>& grad, AdamState& st,
                      double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8) {
  if (params.size() != grad.size() || st.m.size() != params.size())
    throw ShapeError("adam_step: size mismatch");
  for (double g : grad)
    if (!std::isfinite(g)) throw DivergenceError("adam_step: non-finite gradient");
  st.t += 1;
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(st.t));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(st.t));
  for (size_t i = 0; i < params.size(); ++i) {
    st.m[i] = beta1 * st.m[i] + (1.0 - beta1) * grad[i];
    st.v[i] = beta2 * st.v[i] + (1.0 - beta2) * grad[i] * grad[i];
    const double mhat = st.m[i] / bc1;
    const double vhat = st.v[i] / bc2;
    params[i] -= lr * mhat / (std::sqrt(vhat) + eps);
  }
}

/// One transfer problem: identity, shape reference and appearance reference
/// plus the mask support of each loss. The synthesized image's hair mask
/// during optimization is the fixed eroded target mask.
struct TransferInputs {
  Image identity;        // I1
  Image shape_ref;       // I2
  Image appearance_ref;  // I3
  BinaryMask face_target;      // M^f1 AND NOT M^{h,d}2
  BinaryMask eroded_hair;      // M^{h,e}2
  BinaryMask appearance_mask;  // M^h3
};

enum class LossKind { Face, Structure, Appearance, Style, Noise };

/// Prepared loss builders for one transfer problem; reference-side features
/// are computed once. The appearance/style terms used by gradient
/// orthogonalization are measured against the shape reference I2.
class TransferObjective {
 public:
  TransferObjective(const GeneratorBackend& backend, const FeatureExtractor& ex,
                    const TransferInputs& in, const LpipsWeights* lpips = nullptr)
      : backend_(backend),
        ex_(ex),
        face_(ex, in.identity, in.face_target, all_levels(ex), lpips, "face_loss"),
        structure_(ex, in.shape_ref, in.eroded_hair, structure_levels(ex), lpips,
                   "structure_loss"),
        appearance3_(ex, in.appearance_ref, in.appearance_mask, in.eroded_hair),
        style3_(ex, in.appearance_ref, in.appearance_mask, in.eroded_hair),
        appearance2_(ex, in.shape_ref, in.eroded_hair, in.eroded_hair),
        style2_(ex, in.shape_ref, in.eroded_hair, in.eroded_hair) {}

  const GeneratorBackend& backend() const { return backend_; }

  ad::Var synth(const ad::Var& theta) const {
    return backend_.synthesize(LatentVars::from_flat(theta, backend_.geometry()));
  }

  ad::Var term(LossKind kind, const ad::Var& theta, const ad::Var& synth_img) const {
    switch (kind) {
      case LossKind::Face: return face_(synth_img);
      case LossKind::Structure: return structure_(synth_img);
      case LossKind::Appearance: return appearance3_(synth_img);
      case LossKind::Style: return style3_(synth_img);
      case LossKind::Noise:
        return noise_regularization(LatentVars::from_flat(theta, backend_.geometry()).noise);
    }
    throw std::invalid_argument("unknown loss kind");
  }

  ad::Var go_reference_term(bool style, const ad::Var& synth_img) const {
    return style ? style2_(synth_img) : appearance2_(synth_img);
  }

  /// Value (and optionally flat gradient) of a single term at a state.
  double eval(LossKind kind, const LatentState& state, std::vector<double>* grad = nullptr) const {
    backend_.check_state(state);
    Tensor flat({state.flat_size()});
    flat.data = state.pack();
    ad::Var theta = ad::Var::leaf(std::move(flat), grad != nullptr);
    ad::Var s = kind == LossKind::Noise ? ad::Var() : synth(theta);
    ad::Var t = term(kind, theta, s);
    if (grad) {
      t.backward();
      *grad = theta.grad().data;
    }
    return t.scalar();
  }

 private:
  const GeneratorBackend& backend_;
  const FeatureExtractor& ex_;
  MaskedLpips face_;
  MaskedLpips structure_;
  AppearanceLoss appearance3_;
  StyleLoss style3_;
  AppearanceLoss appearance2_;
  StyleLoss style2_;
};

struct IterationRecord {
  int iteration = 0;  // global index across both stages
  int stage = 1;
  LossValues values;
  double lr = 0.0;
};

/// Per-iteration gradient-orthogonalization audit data for stage 2.
struct GoRecord {
  double dot = 0.0;       // g_R'^T (g_A + g_S) over the projection scope
  double pre_dot = 0.0;   // g_R^T (g_A + g_S) before the projection
  double norm_gr = 0.0;   // ||g_R'||
  double norm_gas = 0.0;  // ||g_A + g_S||
  bool applied = false;
};

struct RunResult {
  LatentState state;
  Image synth;  // final synthesized image, pre-blending (clamped for export)
  std::vector<IterationRecord> log;
  std::vector<GoRecord> go;
};

using SnapshotFn = std::function<void(int stage, int iter, const Image&)>;

namespace detail {

inline void check_finite_values(const LossValues& v, int iter) {
  const double all[] = {v.face, v.structure, v.appearance, v.style, v.noise};
  for (double x : all)
    if (!std::isfinite(x))
      throw DivergenceError("non-finite loss at iteration " + std::to_string(iter));
}

}  // namespace detail

/// Two-stage optimization. Stage 1 optimizes {face, structure, noise}; stage 2
/// optimizes all five terms, with the structure gradient orthogonalized
/// against the combined appearance+style gradients (both measured against the
/// shape reference) when go_enabled.
inline RunResult run_two_stage(const GeneratorBackend& backend, const FeatureExtractor& ex,
                               const TransferInputs& in, const OptimizationConfig& cfg,
                               const SnapshotFn& snapshot = {}) {
  TransferObjective obj(backend, ex, in);
  const LossWeights& w = cfg.weights;
  const GeneratorGeometry& geo = backend.geometry();
  LatentState state = init_latent_state(backend, cfg.seed);
  std::vector<double> params = state.pack();
  const int n = static_cast<int>(params.size());
  const int wplus_size = geo.layers * geo.latent_dim;

  RunResult res;
  AdamState adam;
  adam.reset(static_cast<size_t>(n));

  auto make_theta = [&]() {
    Tensor t({n});
    t.data = params;
    return ad::Var::leaf(std::move(t), true);
  };
  auto maybe_snapshot = [&](int stage, int iter) {
    if (snapshot && cfg.snapshot_every > 0 && iter % cfg.snapshot_every == 0)
      snapshot(stage, iter, clamp01(obj.synth(make_theta()).value()));
  };

  int global_iter = 0;

  // Stage 1: appearance and style weights are held at zero.
  for (int iter = 0; iter < cfg.stage1_iters; ++iter, ++global_iter) {
    const double lr = cosine_lr(iter, cfg.stage1_iters, cfg.lr0);
    ad::Var theta = make_theta();
    ad::Var synth_img = obj.synth(theta);
    ad::Var lf = obj.term(LossKind::Face, theta, synth_img);
    ad::Var lrr = obj.term(LossKind::Structure, theta, synth_img);
    ad::Var ln = obj.term(LossKind::Noise, theta, synth_img);
    ad::Var objective = ad::add(
        ad::add(ad::scale(lf, w.face), ad::scale(lrr, w.structure)), ad::scale(ln, w.noise));
    objective.backward();

    LossValues v;
    v.face = lf.scalar();
    v.structure = lrr.scalar();
    v.noise = ln.scalar();
    v.total = weighted_total(v, w);
    detail::check_finite_values(v, global_iter);
    res.log.push_back({global_iter, 1, v, lr});
    maybe_snapshot(1, iter);
    adam_step(params, theta.grad().data, adam, lr, cfg.beta1, cfg.beta2, cfg.adam_eps);
  }

  // Stage 2: fresh Adam moments and a restarted cosine schedule.
  adam.reset(static_cast<size_t>(n));
  for (int iter = 0; iter < cfg.stage2_iters; ++iter, ++global_iter) {
    const double lr = cosine_lr(iter, cfg.stage2_iters, cfg.lr0);
    LossValues v;
    std::vector<double> direction(static_cast<size_t>(n), 0.0);

    if (cfg.go_enabled) {
      // Eq. 9-style separate gradients; the structure gradient is projected
      // away from the appearance+style direction before stepping.
      ad::Var theta_r = make_theta();
      ad::Var synth_r = obj.synth(theta_r);
      ad::Var lrr = obj.term(LossKind::Structure, theta_r, synth_r);
      lrr.backward();
      std::vector<double> g_r = theta_r.grad().data;
      v.structure = lrr.scalar();

      ad::Var theta_a = make_theta();
      ad::Var la2 = obj.go_reference_term(false, obj.synth(theta_a));
      la2.backward();
      ad::Var theta_s = make_theta();
      ad::Var ls2 = obj.go_reference_term(true, obj.synth(theta_s));
      ls2.backward();
      std::vector<double> g_as(static_cast<size_t>(n));
      for (int i = 0; i < n; ++i)
        g_as[static_cast<size_t>(i)] =
            theta_a.grad().data[static_cast<size_t>(i)] + theta_s.grad().data[static_cast<size_t>(i)];

      GoRecord go;
      std::vector<double> g_rp;
      if (cfg.go_wplus_only) {
        std::vector<double> gr_w(g_r.begin(), g_r.begin() + wplus_size);
        std::vector<double> gas_w(g_as.begin(), g_as.begin() + wplus_size);
        std::vector<double> grp_w = orthogonalize(gr_w, gas_w);
        g_rp = g_r;
        std::copy(grp_w.begin(), grp_w.end(), g_rp.begin());
        go.applied = dot(gas_w, gas_w) > 1e-12;
        go.pre_dot = dot(gr_w, gas_w);
        go.dot = dot(grp_w, gas_w);
        go.norm_gr = norm2(grp_w);
        go.norm_gas = norm2(gas_w);
      } else {
        g_rp = orthogonalize(g_r, g_as);
        go.applied = dot(g_as, g_as) > 1e-12;
        go.pre_dot = dot(g_r, g_as);
        go.dot = dot(g_rp, g_as);
        go.norm_gr = norm2(g_rp);
        go.norm_gas = norm2(g_as);
      }
      res.go.push_back(go);

      ad::Var theta = make_theta();
      ad::Var synth_img = obj.synth(theta);
      ad::Var lf = obj.term(LossKind::Face, theta, synth_img);
      ad::Var la = obj.term(LossKind::Appearance, theta, synth_img);
      ad::Var ls = obj.term(LossKind::Style, theta, synth_img);
      ad::Var ln = obj.term(LossKind::Noise, theta, synth_img);
      ad::Var rest = ad::add(ad::add(ad::scale(lf, w.face), ad::scale(la, w.appearance)),
                             ad::add(ad::scale(ls, w.style), ad::scale(ln, w.noise)));
      rest.backward();
      v.face = lf.scalar();
      v.appearance = la.scalar();
      v.style = ls.scalar();
      v.noise = ln.scalar();
      for (int i = 0; i < n; ++i)
        direction[static_cast<size_t>(i)] =
            theta.grad().data[static_cast<size_t>(i)] + w.structure * g_rp[static_cast<size_t>(i)];
    } else {
      ad::Var theta = make_theta();
      ad::Var synth_img = obj.synth(theta);
      ad::Var lf = obj.term(LossKind::Face, theta, synth_img);
      ad::Var lrr = obj.term(LossKind::Structure, theta, synth_img);
      ad::Var la = obj.term(LossKind::Appearance, theta, synth_img);
      ad::Var ls = obj.term(LossKind::Style, theta, synth_img);
      ad::Var ln = obj.term(LossKind::Noise, theta, synth_img);
      ad::Var objective =
          ad::add(ad::add(ad::add(ad::scale(lf, w.face), ad::scale(lrr, w.structure)),
                          ad::add(ad::scale(la, w.appearance), ad::scale(ls, w.style))),
                  ad::scale(ln, w.noise));
      objective.backward();
      v.face = lf.scalar();
      v.structure = lrr.scalar();
      v.appearance = la.scalar();
      v.style = ls.scalar();
      v.noise = ln.scalar();
      direction = theta.grad().data;
    }

    v.total = weighted_total(v, w);
    detail::check_finite_values(v, global_iter);
    res.log.push_back({global_iter, 2, v, lr});
    maybe_snapshot(2, iter);
    adam_step(params, direction, adam, lr, cfg.beta1, cfg.beta2, cfg.adam_eps);
  }

  res.state = LatentState::unpack(params, geo);
  res.synth = backend.synthesize_export(res.state);
  return res;
}

}  // namespace hairtx
