#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "midx/geometry.hpp"
#include "midx/tensor.hpp"

namespace midx {

struct DepthEvalConfig {
  double cap = 10.0;            // indoor default; large halls use 20
  double min_eval_depth = 0.01;
  bool median_scaling = true;
  bool apply_cap = true;
};

struct MetricsReport {
  double abs_rel = 0, sq_rel = 0, rms = 0, rms_log = 0;
  double delta1 = 0, delta2 = 0, delta3 = 0;
  double ate_m = 0, rpe_m = 0, rpe_deg = 0;
};

// Standard depth metric set over gt-valid pixels, optionally median-scaled
// (pred *= median(gt)/median(pred)) and clamped to [min_eval_depth, cap].
inline MetricsReport depth_metrics(const Tensor& pred, const Tensor& gt,
                                   const DepthEvalConfig& cfg) {
  if (!same_shape(pred.shape, gt.shape))
    throw std::invalid_argument("depth_metrics: shape mismatch");
  std::vector<double> p, g;
  for (size_t i = 0; i < gt.data.size(); ++i) {
    if (gt.data[i] > 0.f) {
      if (pred.data[i] <= 0.f)
        throw std::invalid_argument("depth_metrics: prediction must be > 0 on valid pixels");
      p.push_back(pred.data[i]);
      g.push_back(gt.data[i]);
    }
  }
  if (p.empty()) throw std::invalid_argument("depth_metrics: empty validity mask");

  auto median = [](std::vector<double> v) {
    const size_t mid = v.size() / 2;
    std::nth_element(v.begin(), v.begin() + mid, v.end());
    return v[mid];
  };
  if (cfg.median_scaling) {
    const double s = median(g) / median(p);
    for (double& v : p) v *= s;
  }
  const double lo = cfg.min_eval_depth;
  const double hi = cfg.apply_cap ? cfg.cap : std::numeric_limits<double>::max();
  for (double& v : p) v = std::min(std::max(v, lo), hi);
  std::vector<double> gc = g;
  for (double& v : gc) v = std::min(std::max(v, lo), hi);

  MetricsReport r;
  double n = static_cast<double>(p.size());
  for (size_t i = 0; i < p.size(); ++i) {
    const double d = p[i] - gc[i];
    r.abs_rel += std::fabs(d) / gc[i];
    r.sq_rel += d * d / gc[i];
    r.rms += d * d;
    const double dl = std::log(p[i]) - std::log(gc[i]);
    r.rms_log += dl * dl;
    const double ratio = std::max(p[i] / gc[i], gc[i] / p[i]);
    if (ratio < 1.25) r.delta1 += 1;
    if (ratio < 1.25 * 1.25) r.delta2 += 1;
    if (ratio < 1.25 * 1.25 * 1.25) r.delta3 += 1;
  }
  r.abs_rel /= n;
  r.sq_rel /= n;
  r.rms = std::sqrt(r.rms / n);
  r.rms_log = std::sqrt(r.rms_log / n);
  r.delta1 /= n;
  r.delta2 /= n;
  r.delta3 /= n;
  return r;
}

inline Eigen::Vector3d camera_center(const Pose& world_to_cam) {
  return -(world_to_cam.R.transpose() * world_to_cam.t);
}

struct Alignment {
  double scale = 1.0;
  Eigen::Matrix3d R = Eigen::Matrix3d::Identity();
  Eigen::Vector3d t = Eigen::Vector3d::Zero();
};

// Least-squares similarity (or rigid) alignment of point sets:
// minimizes sum || y_i - (s R x_i + t) ||^2  (Umeyama).
inline Alignment align_point_sets(const std::vector<Eigen::Vector3d>& x,
                                  const std::vector<Eigen::Vector3d>& y, bool with_scale) {
  const size_t n = x.size();
  Eigen::Vector3d mx = Eigen::Vector3d::Zero(), my = Eigen::Vector3d::Zero();
  for (size_t i = 0; i < n; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
  double var_x = 0;
  for (size_t i = 0; i < n; ++i) {
    cov += (y[i] - my) * (x[i] - mx).transpose();
    var_x += (x[i] - mx).squaredNorm();
  }
  cov /= static_cast<double>(n);
  var_x /= static_cast<double>(n);
  Eigen::JacobiSVD<Eigen::Matrix3d> svd(cov, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Eigen::Matrix3d S = Eigen::Matrix3d::Identity();
  if (svd.matrixU().determinant() * svd.matrixV().determinant() < 0) S(2, 2) = -1;
  Alignment a;
  a.R = svd.matrixU() * S * svd.matrixV().transpose();
  if (with_scale && var_x > 1e-18)
    a.scale = (svd.singularValues().asDiagonal() * S).trace() / var_x;
  a.t = my - a.scale * a.R * mx;
  return a;
}

// RMSE of camera-center residuals after similarity alignment (rigid-only when
// with_scale is false; monocular trajectories are scale-ambiguous so scale is
// aligned by default).
inline double ate(const std::vector<Pose>& pred, const std::vector<Pose>& gt,
                  bool with_scale = true) {
  if (pred.size() != gt.size())
    throw std::invalid_argument("ate: trajectory length mismatch");
  if (pred.size() < 2) throw std::invalid_argument("ate: need at least 2 poses");
  std::vector<Eigen::Vector3d> x, y;
  for (size_t i = 0; i < pred.size(); ++i) {
    x.push_back(camera_center(pred[i]));
    y.push_back(camera_center(gt[i]));
  }
  const Alignment a = align_point_sets(x, y, with_scale);
  double sq = 0;
  for (size_t i = 0; i < x.size(); ++i)
    sq += (y[i] - (a.scale * (a.R * x[i]) + a.t)).squaredNorm();
  return std::sqrt(sq / static_cast<double>(x.size()));
}

struct RpeResult {
  double translation_m = 0;
  double rotation_deg = 0;
};

// Frame-to-frame relative pose error at the given stride: for each step the
// error transform E = rel_gt^-1 * rel_pred; reported as RMSE of ||trans(E)||
// and of the rotation angle of E in degrees.
inline RpeResult rpe(const std::vector<Pose>& pred, const std::vector<Pose>& gt,
                     int stride = 1) {
  if (pred.size() != gt.size())
    throw std::invalid_argument("rpe: trajectory length mismatch");
  if (static_cast<int>(pred.size()) < stride + 1)
    throw std::invalid_argument("rpe: need at least stride+1 poses");
  double sq_t = 0, sq_r = 0;
  int n = 0;
  for (size_t i = 0; i + stride < pred.size(); ++i) {
    // both trajectories are world-to-camera; relative k -> k+stride
    const Pose rel_pred = compose(pred[i + stride], invert(pred[i]));
    const Pose rel_gt = compose(gt[i + stride], invert(gt[i]));
    const Pose err = compose(invert(rel_gt), rel_pred);
    sq_t += err.t.squaredNorm();
    const double ang = rotation_angle_deg(err.R);
    sq_r += ang * ang;
    ++n;
  }
  RpeResult r;
  r.translation_m = std::sqrt(sq_t / n);
  r.rotation_deg = std::sqrt(sq_r / n);
  return r;
}

}  // namespace midx
