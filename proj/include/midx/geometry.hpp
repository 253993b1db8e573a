#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "midx/graph.hpp"
#include "midx/tensor.hpp"

namespace midx {

// Pinhole camera. Coordinates are pixel centers: integer (u,v) addresses the
// center of pixel (u,v), u along columns, v along rows. x right, y down,
// z forward.
struct Intrinsics {
  double fx = 0, fy = 0, cx = 0, cy = 0;
  int width = 0, height = 0;

  Intrinsics() = default;
  Intrinsics(double fx_, double fy_, double cx_, double cy_, int w, int h)
      : fx(fx_), fy(fy_), cx(cx_), cy(cy_), width(w), height(h) {
    if (fx <= 0 || fy <= 0) throw std::invalid_argument("Intrinsics: focal must be > 0");
    if (cx < 0 || cx >= w || cy < 0 || cy >= h)
      throw std::invalid_argument("Intrinsics: principal point outside image");
  }

  Intrinsics scaled(int w2, int h2) const {
    Intrinsics k = *this;
    k.fx = fx * static_cast<double>(w2) / width;
    k.fy = fy * static_cast<double>(h2) / height;
    k.cx = cx * static_cast<double>(w2) / width;
    k.cy = cy * static_cast<double>(h2) / height;
    k.width = w2;
    k.height = h2;
    return k;
  }

  Intrinsics hflipped() const {
    Intrinsics k = *this;
    k.cx = (width - 1) - cx;
    return k;
  }
};

// Rigid transform; maps points in frame A to frame B when named T_a_to_b.
// Pose networks emit 6-DoF (axis-angle, translation) that converts here.
struct Pose {
  Eigen::Matrix3d R = Eigen::Matrix3d::Identity();
  Eigen::Vector3d t = Eigen::Vector3d::Zero();

  static Pose identity() { return Pose(); }

  Eigen::Vector3d apply(const Eigen::Vector3d& p) const { return R * p + t; }

  Eigen::Matrix4d matrix() const {
    Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
    m.block<3, 3>(0, 0) = R;
    m.block<3, 1>(0, 3) = t;
    return m;
  }

  bool valid(double tol = 1e-6) const {
    Eigen::Matrix3d e = R.transpose() * R - Eigen::Matrix3d::Identity();
    return e.cwiseAbs().maxCoeff() < tol && std::fabs(R.determinant() - 1.0) < tol;
  }
};

// a after b: x -> a(b(x))
inline Pose compose(const Pose& a, const Pose& b) {
  Pose out;
  out.R = a.R * b.R;
  out.t = a.R * b.t + a.t;
  return out;
}

inline Pose invert(const Pose& p) {
  Pose out;
  out.R = p.R.transpose();
  out.t = -(out.R * p.t);
  return out;
}

// Rodrigues. ||r|| is the rotation angle in radians; series expansion keeps
// the map continuous through r = 0.
inline Pose axis_angle_to_pose(const Eigen::Vector3d& r, const Eigen::Vector3d& t) {
  Pose p;
  p.t = t;
  const double th2 = r.squaredNorm();
  double f, g;  // sin(th)/th, (1-cos(th))/th^2
  if (th2 < 1e-12) {
    f = 1.0 - th2 / 6.0 + th2 * th2 / 120.0;
    g = 0.5 - th2 / 24.0 + th2 * th2 / 720.0;
  } else {
    const double th = std::sqrt(th2);
    f = std::sin(th) / th;
    g = (1.0 - std::cos(th)) / th2;
  }
  Eigen::Matrix3d K;
  K << 0, -r.z(), r.y(), r.z(), 0, -r.x(), -r.y(), r.x(), 0;
  p.R = Eigen::Matrix3d::Identity() + f * K + g * K * K;
  return p;
}

inline Eigen::Vector3d rotation_to_axis_angle(const Eigen::Matrix3d& R) {
  Eigen::AngleAxisd aa(R);
  return aa.angle() * aa.axis();
}

inline double rotation_angle_deg(const Eigen::Matrix3d& R) {
  double c = (R.trace() - 1.0) / 2.0;
  c = std::min(1.0, std::max(-1.0, c));
  return std::acos(c) * 180.0 / M_PI;
}

// Homogeneous pixel coordinates for every (u,v), row-major. Channel 0 = u,
// channel 1 = v, channel 2 = 1.
struct PixelGrid {
  int height = 0, width = 0;
  Tensor coords;  // [3,H,W]

  PixelGrid() = default;
  PixelGrid(int h, int w) : height(h), width(w), coords({3, h, w}) {
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        coords.at(0, y, x) = static_cast<float>(x);
        coords.at(1, y, x) = static_cast<float>(y);
        coords.at(2, y, x) = 1.f;
      }
  }
};

constexpr float kZMin = 1e-3f;  // scene units; transformed z below this is invalid

// ---------------------------------------------------------------------------
// Differentiable geometry on the tape. Poses on the tape carry a [3,3]
// rotation and [3] translation node; gradients flow back to whatever produced
// them (usually a pose network's 6-DoF head).
// ---------------------------------------------------------------------------

struct TapePose {
  Var R;  // [3,3]
  Var t;  // [3]
};

inline TapePose tape_pose_const(Graph& g, const Pose& p) {
  Tensor R({3, 3});
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) R.at(i, j) = static_cast<float>(p.R(i, j));
  Tensor t({3}, {static_cast<float>(p.t.x()), static_cast<float>(p.t.y()),
                 static_cast<float>(p.t.z())});
  return {g.constant(std::move(R)), g.constant(std::move(t))};
}

inline Pose tape_pose_value(const Graph& g, const TapePose& p) {
  Pose out;
  const auto& R = g.val(p.R);
  const auto& t = g.val(p.t);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) out.R(i, j) = R[i * 3 + j];
  out.t = Eigen::Vector3d(t[0], t[1], t[2]);
  return out;
}

// r, t are [3] vars; R = I + sinc(th)K + vers(th)K^2 with K = skew(r)
inline TapePose tape_axis_angle(Graph& g, Var r, Var t) {
  Var r0 = g.slice_flat(r, 0, 1), r1 = g.slice_flat(r, 1, 1), r2 = g.slice_flat(r, 2, 1);
  Var th2 = g.sum_(g.mul(r, r));
  Var f = g.sinc_sqrt(th2);
  Var gg = g.vers_sqrt(th2);
  Var z = g.cscalar(0.f);
  Var n0 = g.scale(r0, -1.f), n1 = g.scale(r1, -1.f), n2 = g.scale(r2, -1.f);
  Var K = g.stack_({z, n2, r1, r2, z, n0, n1, r0, z}, {3, 3});
  Var K2 = g.matmul(K, K);
  Tensor I({3, 3});
  I.at(0, 0) = I.at(1, 1) = I.at(2, 2) = 1.f;
  Var R = g.add(g.constant(std::move(I)), g.add(g.mul(f, K), g.mul(gg, K2)));
  return {R, t};
}

// a after b
inline TapePose tape_compose(Graph& g, const TapePose& a, const TapePose& b) {
  Var R = g.matmul(a.R, b.R);
  Var t = g.add(g.reshape(g.matmul(a.R, g.reshape(b.t, {3, 1})), {3}), a.t);
  return {R, t};
}

inline TapePose tape_invert(Graph& g, const TapePose& p) {
  // R' = R^T, t' = -R^T t
  Tensor I({3, 3});
  I.at(0, 0) = I.at(1, 1) = I.at(2, 2) = 1.f;
  Var Rt = g.matmul(g.constant(std::move(I)), p.R, false, true);
  Var t = g.scale(g.reshape(g.matmul(Rt, g.reshape(p.t, {3, 1})), {3}), -1.f);
  return {Rt, t};
}

// depth [1,H,W] -> camera-space points as three planes {X,Y,Z}, each [1,H,W]
struct PointPlanes {
  Var x, y, z;
};

inline PointPlanes tape_backproject(Graph& g, Var depth, const Intrinsics& K) {
  const auto& s = g.shape(depth);
  int H = s[1], W = s[2];
  Tensor xn({1, H, W}), yn({1, H, W});
  for (int yy = 0; yy < H; ++yy)
    for (int xx = 0; xx < W; ++xx) {
      xn.at(0, yy, xx) = static_cast<float>((xx - K.cx) / K.fx);
      yn.at(0, yy, xx) = static_cast<float>((yy - K.cy) / K.fy);
    }
  Var X = g.mul(depth, g.constant(std::move(xn)));
  Var Y = g.mul(depth, g.constant(std::move(yn)));
  return {X, Y, depth};
}

// transform point planes by pose; returns planes in the new frame
inline PointPlanes tape_transform(Graph& g, const PointPlanes& p, const TapePose& T) {
  auto rc = [&](int i, int j) { return g.slice_flat(T.R, i * 3 + j, 1); };
  auto tc = [&](int i) { return g.slice_flat(T.t, i, 1); };
  Var X = g.add(g.add(g.mul(rc(0, 0), p.x), g.mul(rc(0, 1), p.y)),
                g.add(g.mul(rc(0, 2), p.z), tc(0)));
  Var Y = g.add(g.add(g.mul(rc(1, 0), p.x), g.mul(rc(1, 1), p.y)),
                g.add(g.mul(rc(1, 2), p.z), tc(1)));
  Var Z = g.add(g.add(g.mul(rc(2, 0), p.x), g.mul(rc(2, 1), p.y)),
                g.add(g.mul(rc(2, 2), p.z), tc(2)));
  return {X, Y, Z};
}

struct Projection {
  Var coords;  // [2,H,W] pixel coordinates
  Var z;       // [1,H,W] camera depth after transform
  Mask valid;  // z > z_min (bounds handled by the sampler)
};

// project camera-space points through K onto the pixel plane
inline Projection tape_project(Graph& g, const PointPlanes& p, const Intrinsics& K) {
  Var zsafe = g.clamp_(p.z, kZMin, std::numeric_limits<float>::max());
  Var u = g.affine(g.div(p.x, zsafe), static_cast<float>(K.fx), static_cast<float>(K.cx));
  Var v = g.affine(g.div(p.y, zsafe), static_cast<float>(K.fy), static_cast<float>(K.cy));
  Projection out;
  out.coords = g.concat_ch({u, v});
  out.z = p.z;
  const auto& zv = g.val(p.z);
  const auto& s = g.shape(p.z);
  out.valid = Mask(s[1], s[2], 0);
  for (size_t i = 0; i < zv.size(); ++i)
    if (zv[i] > kZMin) out.valid.data[i] = 1;
  return out;
}

struct WarpResult {
  Var image;  // [C,H,W]
  Mask mask;  // in-bounds AND in front of the camera
  Var coords; // projected sample locations [2,H,W]
};

// I_synth(p) = src( K * T_target_to_src * depth_target(p) * K^-1 * p )
inline WarpResult tape_warp(Graph& g, Var src, Var depth_target,
                            const TapePose& T_target_to_src, const Intrinsics& K) {
  PointPlanes pts = tape_backproject(g, depth_target, K);
  PointPlanes cam = tape_transform(g, pts, T_target_to_src);
  Projection proj = tape_project(g, cam, K);
  Mask bounds;
  Var img = g.grid_sample(src, proj.coords, &bounds);
  WarpResult out;
  out.image = img;
  out.mask = proj.valid.intersect(bounds);
  out.coords = proj.coords;
  return out;
}

// ---------------------------------------------------------------------------
// Value-level wrappers (no gradients) used by tests, metrics, tooling.
// ---------------------------------------------------------------------------

inline Tensor backproject(const Tensor& depth, const Intrinsics& K) {
  for (float v : depth.data)
    if (v <= 0.f) throw std::invalid_argument("backproject: depth must be > 0");
  Graph g;
  Var d = g.constant(depth);
  PointPlanes p = tape_backproject(g, d, K);
  int H = depth.shape[1], W = depth.shape[2];
  Tensor out({3, H, W});
  const auto& xs = g.val(p.x);
  const auto& ys = g.val(p.y);
  const auto& zs = g.val(p.z);
  const size_t hw = static_cast<size_t>(H) * W;
  for (size_t i = 0; i < hw; ++i) {
    out.data[i] = xs[i];
    out.data[hw + i] = ys[i];
    out.data[2 * hw + i] = zs[i];
  }
  return out;
}

struct ProjectResult {
  Tensor coords;  // [2,H,W]
  Mask valid;
};

inline ProjectResult project(const Tensor& points, const Pose& T, const Intrinsics& K) {
  Graph g;
  int H = points.shape[1], W = points.shape[2];
  const size_t hw = static_cast<size_t>(H) * W;
  Tensor px({1, H, W}), py({1, H, W}), pz({1, H, W});
  std::copy_n(points.data.begin(), hw, px.data.begin());
  std::copy_n(points.data.begin() + hw, hw, py.data.begin());
  std::copy_n(points.data.begin() + 2 * hw, hw, pz.data.begin());
  PointPlanes p{g.constant(std::move(px)), g.constant(std::move(py)),
                g.constant(std::move(pz))};
  PointPlanes cam = tape_transform(g, p, tape_pose_const(g, T));
  Projection proj = tape_project(g, cam, K);
  ProjectResult out;
  out.coords = g.tensor(proj.coords);
  out.valid = proj.valid;
  // off-image projections are invalid too
  const auto& cv = out.coords.data;
  for (size_t i = 0; i < hw; ++i) {
    float u = cv[i], v = cv[hw + i];
    if (!(u >= 0.f && u <= K.width - 1.f && v >= 0.f && v <= K.height - 1.f))
      out.valid.data[i] = 0;
  }
  return out;
}

struct SampleResult {
  Tensor image;
  Mask mask;
};

inline SampleResult bilinear_sample(const Tensor& src, const Tensor& coords) {
  for (float v : coords.data)
    if (!std::isfinite(v)) throw std::invalid_argument("bilinear_sample: non-finite coords");
  Graph g;
  Mask m;
  Var out = g.grid_sample(g.constant(src), g.constant(coords), &m);
  return {g.tensor(out), std::move(m)};
}

inline SampleResult warp(const Tensor& src, const Tensor& depth_target,
                         const Pose& T_target_to_src, const Intrinsics& K) {
  for (float v : depth_target.data)
    if (v <= 0.f) throw std::invalid_argument("warp: depth must be > 0");
  Graph g;
  WarpResult r = tape_warp(g, g.constant(src), g.constant(depth_target),
                           tape_pose_const(g, T_target_to_src), K);
  return {g.tensor(r.image), std::move(r.mask)};
}

}  // namespace midx
