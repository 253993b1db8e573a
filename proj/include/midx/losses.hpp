#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "midx/geometry.hpp"
#include "midx/graph.hpp"

namespace midx {

struct LossWeights {
  float alpha = 0.85f;  // SSIM/L1 mix
  float tau = 0.001f;   // smoothness weight
  float gamma = 0.1f;   // depth consistency weight
  int scales = 4;
  bool per_pixel_min = true;  // false = plain sum over sources
  bool automask = true;
};

struct LossBundle {
  double photometric = 0;
  double smoothness = 0;
  double consistency = 0;
  double total = 0;
  double automask_fraction = 0;
};

// windowed SSIM with 3x3 box statistics, C1=0.01^2, C2=0.03^2 on [0,1]
// intensities; per-channel output in [-1,1]
inline Var ssim(Graph& g, Var a, Var b) {
  if (!same_shape(g.shape(a), g.shape(b)))
    throw std::invalid_argument("ssim: shape mismatch " + shape_str(g.shape(a)) + " vs " +
                                shape_str(g.shape(b)));
  const float C1 = 0.01f * 0.01f, C2 = 0.03f * 0.03f;
  Var mu_a = g.pool3x3(a);
  Var mu_b = g.pool3x3(b);
  Var sig_a = g.sub(g.pool3x3(g.mul(a, a)), g.mul(mu_a, mu_a));
  Var sig_b = g.sub(g.pool3x3(g.mul(b, b)), g.mul(mu_b, mu_b));
  Var sig_ab = g.sub(g.pool3x3(g.mul(a, b)), g.mul(mu_a, mu_b));
  Var num = g.mul(g.affine(g.mul(mu_a, mu_b), 2.f, C1), g.affine(sig_ab, 2.f, C2));
  Var den = g.mul(g.add(g.add(g.mul(mu_a, mu_a), g.mul(mu_b, mu_b)), g.cscalar(C1)),
                  g.affine(g.add(sig_a, sig_b), 1.f, C2));
  return g.clamp_(g.div(num, den), -1.f, 1.f);
}

// rho = alpha/2 (1 - SSIM) + (1 - alpha) |a-b|, channel-averaged -> [1,H,W]
inline Var photometric_error(Graph& g, Var target, Var recon, float alpha) {
  if (!same_shape(g.shape(target), g.shape(recon)))
    throw std::invalid_argument("photometric_error: shape mismatch");
  Var l1 = g.mean_ch(g.abs_(g.sub(target, recon)));
  if (alpha == 0.f) return l1;
  Var s = g.mean_ch(ssim(g, target, recon));
  Var ssim_term = g.affine(s, -alpha / 2.f, alpha / 2.f);  // alpha/2 (1 - s)
  return g.add(ssim_term, g.scale(l1, 1.f - alpha));
}

struct PhotometricResult {
  Var loss;             // scalar
  Mask kept;            // pixels contributing to the mean
  double automask_fraction = 0;
};

// Per-pixel minimum across reconstructions with static-pixel auto-masking:
// a pixel is kept when min over recons of rho is lower than min over the
// unwarped sources of rho. Invalid (masked) recon pixels never win the min.
// Zero kept pixels yields loss 0 rather than NaN so static clips cannot
// poison training.
inline PhotometricResult photometric_loss(Graph& g, Var target,
                                          const std::vector<Var>& recons,
                                          const std::vector<Mask>& recon_masks,
                                          const std::vector<Var>& sources,
                                          const LossWeights& w) {
  if (recons.empty()) throw std::invalid_argument("photometric_loss: no reconstructions");
  if (recons.size() != recon_masks.size())
    throw std::invalid_argument("photometric_loss: recons/masks length mismatch");
  const auto& ts = g.shape(target);
  const int H = ts[1], W = ts[2];
  const size_t npix = static_cast<size_t>(H) * W;
  const float BIG = 1e6f;

  std::vector<Var> errs;
  errs.reserve(recons.size());
  for (size_t i = 0; i < recons.size(); ++i) {
    Var e = photometric_error(g, target, recons[i], w.alpha);
    // push invalid pixels out of the running minimum
    Tensor penalty({1, H, W});
    for (size_t p = 0; p < npix; ++p)
      penalty.data[p] = recon_masks[i].data[p] ? 0.f : BIG;
    errs.push_back(g.add(e, g.constant(std::move(penalty))));
  }

  if (!w.per_pixel_min) {
    // plain-sum fallback (Eq.-1 reading): mean over valid pixels per source
    Var acc = g.cscalar(0.f);
    for (size_t i = 0; i < errs.size(); ++i) {
      Tensor m({1, H, W});
      int64_t cnt = 0;
      for (size_t p = 0; p < npix; ++p) {
        m.data[p] = recon_masks[i].data[p] ? 1.f : 0.f;
        cnt += recon_masks[i].data[p] ? 1 : 0;
      }
      Var raw = photometric_error(g, target, recons[i], w.alpha);
      if (cnt > 0)
        acc = g.add(acc, g.scale(g.sum_(g.mul(raw, g.constant(std::move(m)))),
                                 1.f / static_cast<float>(cnt)));
    }
    PhotometricResult out;
    out.loss = acc;
    out.kept = Mask(H, W, 1);
    out.automask_fraction = 1.0;
    return out;
  }

  Var min_err = errs[0];
  for (size_t i = 1; i < errs.size(); ++i) min_err = g.minimum(min_err, errs[i]);

  Mask any_valid(H, W, 0);
  for (size_t p = 0; p < npix; ++p)
    for (const Mask& m : recon_masks)
      if (m.data[p]) { any_valid.data[p] = 1; break; }

  Mask kept = any_valid;
  if (w.automask && !sources.empty()) {
    // identity reprojection error of the raw sources, values only
    std::vector<float> min_src(npix, std::numeric_limits<float>::max());
    for (Var s : sources) {
      Var e = photometric_error(g, target, g.detach(s), w.alpha);
      const auto& ev = g.val(e);
      for (size_t p = 0; p < npix; ++p) min_src[p] = std::min(min_src[p], ev[p]);
    }
    const auto& mv = g.val(min_err);
    for (size_t p = 0; p < npix; ++p)
      kept.data[p] = kept.data[p] && (mv[p] < min_src[p]);
  }

  const int64_t nkeep = kept.count();
  PhotometricResult out;
  out.kept = kept;
  out.automask_fraction = static_cast<double>(nkeep) / static_cast<double>(npix);
  if (nkeep == 0) {
    out.loss = g.cscalar(0.f);
    return out;
  }
  Tensor keepw({1, H, W});
  for (size_t p = 0; p < npix; ++p) keepw.data[p] = kept.data[p] ? 1.f : 0.f;
  out.loss = g.scale(g.sum_(g.mul(min_err, g.constant(std::move(keepw)))),
                     1.f / static_cast<float>(nkeep));
  return out;
}

// edge-aware smoothness on mean-normalized disparity:
// |dx d*| e^{-|dx I|} + |dy d*| e^{-|dy I|}, averaged over the interior
inline Var smoothness_loss(Graph& g, Var disp, Var image) {
  const auto& s = g.shape(disp);
  const int H = s[1], W = s[2];
  Var norm = g.div(disp, g.mean_(disp));
  Var img = g.detach(image);

  Var dx_d = g.abs_(g.sub(g.crop(norm, 0, 1, H, W - 1), g.crop(norm, 0, 0, H, W - 1)));
  Var dy_d = g.abs_(g.sub(g.crop(norm, 1, 0, H - 1, W), g.crop(norm, 0, 0, H - 1, W)));
  Var dx_i = g.mean_ch(g.abs_(g.sub(g.crop(img, 0, 1, H, W - 1), g.crop(img, 0, 0, H, W - 1))));
  Var dy_i = g.mean_ch(g.abs_(g.sub(g.crop(img, 1, 0, H - 1, W), g.crop(img, 0, 0, H - 1, W))));

  Var wx = g.exp_(g.scale(dx_i, -1.f));
  Var wy = g.exp_(g.scale(dy_i, -1.f));
  return g.add(g.mean_(g.mul(dx_d, wx)), g.mean_(g.mul(dy_d, wy)));
}

struct ConsistencyResult {
  Var loss;  // scalar in [0,1)
  Mask mask;
};

// |D_t - D~| / (D_t + D~) where D~ is the source depth map expressed as
// target-camera z and resampled at the warp coordinates.
inline ConsistencyResult depth_consistency_loss(Graph& g, Var depth_target,
                                                Var depth_source,
                                                const TapePose& T_target_to_source,
                                                const Intrinsics& K) {
  // source depth -> target-camera z, still on the source pixel raster
  PointPlanes src_pts = tape_backproject(g, depth_source, K);
  TapePose T_src_to_tgt = tape_invert(g, T_target_to_source);
  PointPlanes in_tgt = tape_transform(g, src_pts, T_src_to_tgt);

  // resample that z raster into the target frame
  PointPlanes tgt_pts = tape_backproject(g, depth_target, K);
  PointPlanes in_src = tape_transform(g, tgt_pts, T_target_to_source);
  Projection proj = tape_project(g, in_src, K);
  Mask bounds;
  Var d_tilde = g.grid_sample(in_tgt.z, proj.coords, &bounds);

  const auto& s = g.shape(depth_target);
  const int H = s[1], W = s[2];
  const size_t npix = static_cast<size_t>(H) * W;
  Mask mask = proj.valid.intersect(bounds);
  const auto& dv = g.val(d_tilde);
  for (size_t p = 0; p < npix; ++p)
    if (dv[p] <= kZMin) mask.data[p] = 0;

  ConsistencyResult out;
  out.mask = mask;
  const int64_t n = mask.count();
  if (n == 0) {
    out.loss = g.cscalar(0.f);
    return out;
  }
  Var diff = g.abs_(g.sub(depth_target, d_tilde));
  Var ratio = g.div(diff, g.add(depth_target, d_tilde));
  Tensor mw({1, H, W});
  for (size_t p = 0; p < npix; ++p) mw.data[p] = mask.data[p] ? 1.f : 0.f;
  out.loss = g.scale(g.sum_(g.mul(ratio, g.constant(std::move(mw)))),
                     1.f / static_cast<float>(n));
  return out;
}

// L = L_photo + tau L_smooth + gamma L_consistency
inline Var total_loss(Graph& g, Var photometric, Var smoothness, Var consistency,
                      const LossWeights& w, LossBundle* bundle = nullptr) {
  auto check = [&](Var v, const char* name) {
    if (!std::isfinite(g.scalar(v)))
      throw std::runtime_error(std::string("total_loss: non-finite ") + name + " term");
  };
  check(photometric, "photometric");
  check(smoothness, "smoothness");
  check(consistency, "consistency");
  Var total = g.add(photometric,
                    g.add(g.scale(smoothness, w.tau), g.scale(consistency, w.gamma)));
  if (bundle) {
    bundle->photometric = g.scalar(photometric);
    bundle->smoothness = g.scalar(smoothness);
    bundle->consistency = g.scalar(consistency);
    bundle->total = g.scalar(total);
  }
  return total;
}

// ---- value-level conveniences for tests and tools ----

inline Tensor ssim_value(const Tensor& a, const Tensor& b) {
  Graph g;
  return g.tensor(ssim(g, g.constant(a), g.constant(b)));
}

inline Tensor photometric_error_value(const Tensor& a, const Tensor& b, float alpha) {
  Graph g;
  return g.tensor(photometric_error(g, g.constant(a), g.constant(b), alpha));
}

inline double smoothness_loss_value(const Tensor& disp, const Tensor& image) {
  for (float v : disp.data)
    if (v <= 0.f) throw std::invalid_argument("smoothness_loss: disparity must be > 0");
  Graph g;
  return g.scalar(smoothness_loss(g, g.constant(disp), g.constant(image)));
}

inline double depth_consistency_value(const Tensor& dt, const Tensor& ds, const Pose& T,
                                      const Intrinsics& K, Mask* mask_out = nullptr) {
  Graph g;
  auto r = depth_consistency_loss(g, g.constant(dt), g.constant(ds),
                                  tape_pose_const(g, T), K);
  if (mask_out) *mask_out = r.mask;
  return g.scalar(r.loss);
}

}  // namespace midx
