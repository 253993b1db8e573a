#pragma once

#include <cmath>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "midx/geometry.hpp"
#include "midx/io.hpp"
#include "midx/tensor.hpp"

namespace midx {

enum class SceneLayout { FrontoPlane, TiltedPlane, BoxRoom };

inline SceneLayout layout_from_string(const std::string& s) {
  if (s == "fronto-plane") return SceneLayout::FrontoPlane;
  if (s == "tilted-plane") return SceneLayout::TiltedPlane;
  if (s == "box-room") return SceneLayout::BoxRoom;
  throw std::invalid_argument("unknown layout: " + s);
}

struct SceneSpec {
  SceneLayout layout = SceneLayout::BoxRoom;
  uint64_t texture_seed = 0;
  double depth_near = 0.3, depth_far = 9.0;
  std::vector<Pose> trajectory;  // world-to-camera per frame
  int height = 64, width = 64;
  double focal = 48.0;  // fx = fy, principal point at the raster center

  Intrinsics intrinsics() const {
    return Intrinsics(focal, focal, (width - 1) / 2.0, (height - 1) / 2.0, width, height);
  }

  void validate() const {
    if (depth_near <= 0) throw std::invalid_argument("scene: depth_near must be > 0");
    if (depth_near >= depth_far) throw std::invalid_argument("scene: near < far required");
    if (trajectory.size() < 3)
      throw std::invalid_argument("scene: trajectory needs >= 3 frames");
  }
};

// target plus its two temporal neighbours; poses map target camera
// coordinates into each source camera
struct FrameTriplet {
  Tensor target;
  Tensor source_prev, source_next;
  Tensor gt_depth;
  Pose gt_pose_prev, gt_pose_next;  // target -> source
  Intrinsics K;
  int frame_id = 0;
};

namespace synth_detail {

inline double hash01(uint64_t seed, int64_t a, int64_t b, int64_t c) {
  uint64_t h = mix_seed(seed, static_cast<uint64_t>(a) * 0x9e3779b1u);
  h = mix_seed(h, static_cast<uint64_t>(b) * 0x85ebca6bu);
  h = mix_seed(h, static_cast<uint64_t>(c) * 0xc2b2ae35u);
  return (h >> 11) * (1.0 / 9007199254740992.0);
}

// two-octave bilinear value noise; continuous in (u,v) so photometric
// constancy holds exactly while SSIM windows stay informative
inline double value_noise(uint64_t seed, int face, double u, double v, int ch,
                          double cell) {
  const double fu = u / cell, fv = v / cell;
  const int64_t iu = static_cast<int64_t>(std::floor(fu));
  const int64_t iv = static_cast<int64_t>(std::floor(fv));
  const double wu = fu - iu, wv = fv - iv;
  const uint64_t s = mix_seed(seed, static_cast<uint64_t>(face * 131 + ch));
  const double v00 = hash01(s, iu, iv, 0), v10 = hash01(s, iu + 1, iv, 0);
  const double v01 = hash01(s, iu, iv + 1, 0), v11 = hash01(s, iu + 1, iv + 1, 0);
  return (1 - wv) * ((1 - wu) * v00 + wu * v10) + wv * ((1 - wu) * v01 + wu * v11);
}

inline void face_color(uint64_t seed, int face, double u, double v, float rgb[3]) {
  static const float base[6][3] = {{0.55f, 0.40f, 0.35f}, {0.35f, 0.50f, 0.55f},
                                   {0.45f, 0.55f, 0.35f}, {0.50f, 0.35f, 0.55f},
                                   {0.55f, 0.55f, 0.40f}, {0.40f, 0.40f, 0.55f}};
  for (int c = 0; c < 3; ++c) {
    double low = value_noise(seed, face, u, v, c, 0.7);
    double high = value_noise(seed, face, u, v, c + 8, 0.11);
    double val = base[face % 6][c] + 0.42 * (low - 0.5) + 0.22 * (high - 0.5);
    rgb[c] = static_cast<float>(std::min(std::max(val, 0.03), 0.97));
  }
}

struct PlaneDef {
  Eigen::Vector3d n;  // unit normal
  double c;           // n . X = c
  int face;
  // bounds in the two in-plane axes, axis-aligned layouts only
  int au, av;
  double lo_u, hi_u, lo_v, hi_v;
  bool bounded;
};

inline std::vector<PlaneDef> scene_planes(const SceneSpec& spec) {
  std::vector<PlaneDef> ps;
  switch (spec.layout) {
    case SceneLayout::FrontoPlane:
      ps.push_back({{0, 0, 1}, 2.0, 0, 0, 1, 0, 0, 0, 0, false});
      break;
    case SceneLayout::TiltedPlane: {
      Eigen::Vector3d n(0.35, -0.2, 1.0);
      n.normalize();
      ps.push_back({n, n.dot(Eigen::Vector3d(0, 0, 2.2)), 0, 0, 1, 0, 0, 0, 0, false});
      break;
    }
    case SceneLayout::BoxRoom: {
      const double X = 2.0, Y = 1.3, Z = 2.0;
      ps.push_back({{0, 0, 1}, -Z, 0, 0, 1, -X, X, -Y, Y, true});   // back
      ps.push_back({{0, 0, 1}, Z, 1, 0, 1, -X, X, -Y, Y, true});    // front
      ps.push_back({{1, 0, 0}, -X, 2, 2, 1, -Z, Z, -Y, Y, true});   // left
      ps.push_back({{1, 0, 0}, X, 3, 2, 1, -Z, Z, -Y, Y, true});    // right
      ps.push_back({{0, 1, 0}, -Y, 4, 0, 2, -X, X, -Z, Z, true});   // ceiling
      ps.push_back({{0, 1, 0}, Y, 5, 0, 2, -X, X, -Z, Z, true});    // floor
      break;
    }
  }
  return ps;
}

}  // namespace synth_detail

struct RenderedFrame {
  Tensor image;  // [3,H,W]
  Tensor depth;  // [1,H,W], camera z-depth
};

// Analytic ray cast. Color is a function of the world-space hit point only,
// so the Lambertian constancy assumed by the photometric loss is exact.
inline RenderedFrame render_frame(const SceneSpec& spec, const Pose& world_to_cam) {
  const Intrinsics K = spec.intrinsics();
  const auto planes = synth_detail::scene_planes(spec);
  const Eigen::Matrix3d Rcw = world_to_cam.R.transpose();  // cam -> world
  const Eigen::Vector3d origin = -(Rcw * world_to_cam.t);  // camera center
  RenderedFrame out;
  out.image = Tensor({3, spec.height, spec.width});
  out.depth = Tensor({1, spec.height, spec.width});
  for (int y = 0; y < spec.height; ++y)
    for (int x = 0; x < spec.width; ++x) {
      const Eigen::Vector3d dir_cam((x - K.cx) / K.fx, (y - K.cy) / K.fy, 1.0);
      const Eigen::Vector3d dir = Rcw * dir_cam;
      double best_t = std::numeric_limits<double>::max();
      const synth_detail::PlaneDef* hit = nullptr;
      Eigen::Vector3d hit_pt;
      for (const auto& p : planes) {
        const double denom = p.n.dot(dir);
        if (std::fabs(denom) < 1e-12) continue;
        const double t = (p.c - p.n.dot(origin)) / denom;
        if (t <= 1e-6 || t >= best_t) continue;
        const Eigen::Vector3d pt = origin + t * dir;
        if (p.bounded) {
          const double pu = pt[p.au], pv = pt[p.av];
          if (pu < p.lo_u - 1e-9 || pu > p.hi_u + 1e-9 || pv < p.lo_v - 1e-9 ||
              pv > p.hi_v + 1e-9)
            continue;
        }
        best_t = t;
        hit = &p;
        hit_pt = pt;
      }
      if (!hit)
        throw std::runtime_error("render_frame: ray escaped the scene (frame outside interior?)");
      // camera z-depth: dir_cam has z = 1, so the ray parameter is the depth
      const double depth = best_t;
      if (depth < spec.depth_near || depth > spec.depth_far)
        throw std::runtime_error("render_frame: depth " + std::to_string(depth) +
                                 " outside spec range (trajectory leaves interior)");
      out.depth.at(0, y, x) = static_cast<float>(depth);
      float rgb[3];
      synth_detail::face_color(spec.texture_seed, hit->face, hit_pt[hit->au],
                               hit_pt[hit->av], rgb);
      for (int c = 0; c < 3; ++c) out.image.at(c, y, x) = rgb[c];
    }
  return out;
}

// In-memory dataset: one entry per frame, triplets assembled on demand.
struct SceneDataset {
  std::vector<Tensor> images;
  std::vector<Tensor> depths;
  std::vector<Pose> world_to_cam;
  Intrinsics K;
  Split split;  // target frame ids per role

  int frames() const { return static_cast<int>(images.size()); }
  int triplet_count() const { return std::max(0, frames() - 2); }

  FrameTriplet triplet(int target_id) const {
    if (target_id < 1 || target_id + 1 >= frames())
      throw std::out_of_range("triplet: target id needs both temporal neighbours");
    FrameTriplet t;
    t.frame_id = target_id;
    t.target = images[target_id];
    t.source_prev = images[target_id - 1];
    t.source_next = images[target_id + 1];
    t.gt_depth = depths[target_id];
    const Pose inv_t = invert(world_to_cam[target_id]);
    t.gt_pose_prev = compose(world_to_cam[target_id - 1], inv_t);
    t.gt_pose_next = compose(world_to_cam[target_id + 1], inv_t);
    t.K = K;
    return t;
  }
};

inline SceneDataset render_scene(const SceneSpec& spec) {
  spec.validate();
  SceneDataset ds;
  ds.K = spec.intrinsics();
  for (const Pose& p : spec.trajectory) {
    RenderedFrame f = render_frame(spec, p);
    ds.images.push_back(std::move(f.image));
    ds.depths.push_back(std::move(f.depth));
    ds.world_to_cam.push_back(p);
  }
  // every interior frame is a triplet target; held-out ids interleave so
  // val/test see the same scene statistics as train
  for (int id = 1; id + 1 < ds.frames(); ++id) {
    if (id % 10 == 5)
      ds.split.val.push_back(id);
    else if (id % 10 == 0)
      ds.split.test.push_back(id);
    else
      ds.split.train.push_back(id);
  }
  return ds;
}

// Smooth random-walk trajectory that stays inside the box interior.
// Rotation is a yaw/pitch walk with per-frame steps up to max_rot_step_deg.
inline std::vector<Pose> make_trajectory(int frames, uint64_t seed, double max_rot_step_deg,
                                         double translation_step) {
  Pcg32 rng(seed, 7);
  std::vector<Pose> out;
  Eigen::Vector3d pos(0, 0, -0.3);
  Eigen::Vector3d vel = Eigen::Vector3d::Zero();
  double yaw = 0, pitch = 0;
  const double max_rot = max_rot_step_deg * M_PI / 180.0;
  for (int i = 0; i < frames; ++i) {
    Eigen::Matrix3d Rcw =
        (Eigen::AngleAxisd(yaw, Eigen::Vector3d::UnitY()) *
         Eigen::AngleAxisd(pitch, Eigen::Vector3d::UnitX()))
            .toRotationMatrix();
    Pose p;
    p.R = Rcw.transpose();
    p.t = -(p.R * pos);
    out.push_back(p);

    vel = 0.7 * vel + Eigen::Vector3d(rng.uniform(-1, 1), 0.4 * rng.uniform(-1, 1),
                                      rng.uniform(-1, 1)) *
                          translation_step;
    const double vn = vel.norm();
    if (vn > translation_step) vel *= translation_step / vn;
    pos += vel;
    pos.x() = std::min(std::max(pos.x(), -0.55), 0.55);
    pos.y() = std::min(std::max(pos.y(), -0.3), 0.3);
    pos.z() = std::min(std::max(pos.z(), -0.55), 0.55);
    yaw += rng.uniform(-max_rot, max_rot);
    yaw = std::min(std::max(yaw, -0.35), 0.35);
    pitch += rng.uniform(-max_rot, max_rot) * 0.4;
    pitch = std::min(std::max(pitch, -0.12), 0.12);
  }
  return out;
}

inline SceneSpec default_scene_spec(uint64_t seed = 0) {
  SceneSpec spec;
  spec.layout = SceneLayout::BoxRoom;
  spec.texture_seed = seed;
  spec.height = 64;
  spec.width = 64;
  spec.focal = 48.0;
  spec.depth_near = 0.3;
  spec.depth_far = 9.0;
  spec.trajectory = make_trajectory(122, seed, 5.0, 0.05);
  return spec;
}

// ---- on-disk layout ----
// <root>/scene/<name>/frame_%06d.ppm, depth_%06d.pfm, intrinsics.txt,
// poses.txt, split.txt

inline std::string frame_name(int id) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "frame_%06d.ppm", id);
  return buf;
}
inline std::string depth_name(int id) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "depth_%06d.pfm", id);
  return buf;
}

inline void write_dataset(const SceneDataset& ds, const std::string& root,
                          const std::string& name = "default") {
  namespace fs = std::filesystem;
  const fs::path dir = fs::path(root) / "scene" / name;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create dataset directory: " + dir.string());
  for (int i = 0; i < ds.frames(); ++i) {
    write_ppm((dir / frame_name(i)).string(), ds.images[i]);
    write_pfm((dir / depth_name(i)).string(), ds.depths[i]);
  }
  write_intrinsics((dir / "intrinsics.txt").string(), ds.K);
  write_poses((dir / "poses.txt").string(), ds.world_to_cam);
  write_split((dir / "split.txt").string(), ds.split);
}

inline SceneDataset read_dataset(const std::string& path) {
  namespace fs = std::filesystem;
  fs::path dir(path);
  if (!fs::exists(dir / "intrinsics.txt") && fs::exists(dir / "scene")) {
    // descend into a single-scene root
    std::vector<fs::path> subs;
    for (const auto& e : fs::directory_iterator(dir / "scene"))
      if (e.is_directory()) subs.push_back(e.path());
    if (subs.size() == 1) dir = subs[0];
  }
  if (!fs::exists(dir / "intrinsics.txt"))
    throw IoError("MissingIntrinsics: " + (dir / "intrinsics.txt").string());
  SceneDataset ds;
  for (int i = 0;; ++i) {
    const fs::path img = dir / frame_name(i);
    if (!fs::exists(img)) break;
    ds.images.push_back(read_ppm(img.string()));
    const fs::path dp = dir / depth_name(i);
    if (fs::exists(dp)) ds.depths.push_back(read_pfm(dp.string()));
  }
  if (ds.images.empty()) throw IoError("no frames found under " + dir.string());
  const int H = ds.images[0].shape[1], W = ds.images[0].shape[2];
  ds.K = read_intrinsics((dir / "intrinsics.txt").string(), W, H);
  ds.world_to_cam = read_poses((dir / "poses.txt").string());
  if (static_cast<int>(ds.world_to_cam.size()) != ds.frames())
    throw ParseError((dir / "poses.txt").string() + ": pose count " +
                     std::to_string(ds.world_to_cam.size()) + " != frame count " +
                     std::to_string(ds.frames()));
  ds.split = read_split((dir / "split.txt").string());
  return ds;
}

}  // namespace midx
