#pragma once

#include <condition_variable>
#include <ctime>
#include <deque>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <mutex>
#include <thread>

#include "midx/checkpoint.hpp"
#include "midx/config.hpp"
#include "midx/depth_net.hpp"
#include "midx/losses.hpp"
#include "midx/metrics.hpp"
#include "midx/pose_net.hpp"
#include "midx/scale_net.hpp"
#include "midx/synthetic.hpp"

namespace midx {

struct ModelConfig {
  bool residual_pose = true;
  bool depth_factorization = true;
  bool depth_consistency = true;
  DepthNetConfig depth;
  ScaleRegressionConfig scale;
  PoseNetConfig pose;
  LossWeights loss;
  float baseline_d_max = 10.f;
  int image_h = 64, image_w = 64;

  static ModelConfig from_config(const Config& c, int image_h, int image_w) {
    ModelConfig m;
    m.residual_pose = c.get_bool("model.residual_pose");
    m.depth_factorization = c.get_bool("model.depth_factorization");
    m.depth_consistency = c.get_bool("model.depth_consistency");
    m.baseline_d_max = static_cast<float>(c.get_double("depth.baseline_d_max"));
    m.depth.num_scales = c.get_int("loss.scales");
    m.depth.d_min = static_cast<float>(c.get_double("depth.d_min"));
    m.depth.d_max = m.depth_factorization
                        ? static_cast<float>(c.get_double("depth.d_max_relative"))
                        : m.baseline_d_max;
    m.scale.d_max_bins = c.get_int("scale.d_max_bins");
    m.scale.attention_dim = c.get_int("scale.attention_dim");
    m.scale.dropout_rate = static_cast<float>(c.get_double("scale.dropout"));
    m.scale.use_attention = c.get_bool("scale.use_attention");
    m.scale.use_prob_regression = c.get_bool("scale.use_prob_regression");
    m.pose.num_residual_iterations =
        m.residual_pose ? c.get_int("pose.residual_iterations") : 0;
    m.pose.shared_encoder = c.get_bool("pose.shared_encoder");
    m.pose.use_coords = c.get_bool("pose.use_coords");
    m.pose.rotation_scale = static_cast<float>(c.get_double("pose.rotation_scale"));
    const std::string epos = c.get("pose.encoding_position");
    if (epos == "input")
      m.pose.encoding_position = EncodingPosition::Input;
    else if (epos == "encoder")
      m.pose.encoding_position = EncodingPosition::Encoder;
    else if (epos == "both")
      m.pose.encoding_position = EncodingPosition::Both;
    else
      throw ConfigError("pose.encoding_position must be input|encoder|both: " + epos);
    const std::string ci = c.get("pose.coord_init");
    if (ci == "zeros")
      m.pose.coord_init = CoordInit::Zeros;
    else if (ci == "random")
      m.pose.coord_init = CoordInit::Random;
    else
      throw ConfigError("pose.coord_init must be zeros|random: " + ci);
    m.loss.alpha = static_cast<float>(c.get_double("loss.alpha"));
    m.loss.tau = static_cast<float>(c.get_double("loss.tau"));
    m.loss.gamma = static_cast<float>(c.get_double("loss.gamma"));
    m.loss.scales = c.get_int("loss.scales");
    m.loss.per_pixel_min = c.get_bool("loss.per_pixel_min");
    m.loss.automask = c.get_bool("loss.automask");
    m.image_h = image_h;
    m.image_w = image_w;
    return m;
  }
};

// Relative disparity, metric depth per scale (all at full resolution) and the
// global scale factor that ties them together.
struct FactorizedDepth {
  std::vector<Var> rel_disparity;
  std::vector<Var> metric_depth;
  Var global_scale = -1;
  Var probs = -1;
  double scale_value = 1.0;
  Var bottleneck = -1;
};

// The full pipeline: depth factorization, residual pose chains with optional
// coordinate encoding, and the self-supervision objective.
class Model {
 public:
  Model(const ModelConfig& cfg, uint64_t seed) : cfg_(cfg) {
    Pcg32 rng(seed, 11);
    depth_net_ = DepthNet(params_, "depth", cfg.depth, rng);
    if (cfg.depth_factorization) {
      const int stages = cfg.depth.stages();
      const int fh = cfg.image_h >> stages, fw = cfg.image_w >> stages;
      scale_net_ = ScaleNet(params_, "scale", cfg.depth.encoder_channels.back(),
                            std::max(fh, 1), std::max(fw, 1), cfg.scale, rng);
    }
    pose_module_ = ResidualPoseModule(params_, "pose", cfg.pose, rng);
  }

  ParamStore& params() { return params_; }
  const ModelConfig& config() const { return cfg_; }
  const ResidualPoseModule& pose_module() const { return pose_module_; }
  const DepthNet& depth_net() const { return depth_net_; }

  FactorizedDepth factorize(GraphBinding& bind, Var image, bool training,
                            uint64_t dropout_seed) const {
    Graph& g = bind.graph();
    const auto& s = g.shape(image);
    const int H = s[1], W = s[2];
    DepthNetOutput out = depth_net_.forward(bind, image);
    FactorizedDepth fd;
    fd.bottleneck = out.bottleneck;
    if (cfg_.depth_factorization) {
      ScaleRegressionOutput so =
          scale_net_.forward(bind, out.bottleneck, training, dropout_seed);
      fd.global_scale = so.scale;
      fd.probs = so.probs;
      fd.scale_value = g.scalar(so.scale);
    }
    for (int k = 0; k < cfg_.depth.num_scales; ++k) {
      Var sigma = g.resize_bilinear(out.sigma[k], H, W);
      fd.rel_disparity.push_back(
          disparity_from_sigma(g, sigma, cfg_.depth.d_min, cfg_.depth.d_max));
      Var rel_depth = g.div(g.cscalar(1.f), fd.rel_disparity.back());
      fd.metric_depth.push_back(
          cfg_.depth_factorization ? g.mul(fd.global_scale, rel_depth) : rel_depth);
    }
    return fd;
  }

  struct StepOutputs {
    LossBundle bundle;
    Var total = -1;
    std::vector<std::vector<Var>> chain_views;  // per source, per iteration
    std::vector<Pose> composed_poses;           // per source
  };

  // Builds the training graph for one triplet. Caller owns the Graph and
  // decides whether to run backward.
  StepOutputs build_step(GraphBinding& bind, const FrameTriplet& t, bool training,
                         uint64_t step_seed) const {
    Graph& g = bind.graph();
    Var target = g.constant(t.target);
    std::vector<Var> sources{g.constant(t.source_prev), g.constant(t.source_next)};
    const Intrinsics& K = t.K;

    FactorizedDepth fd = factorize(bind, target, training, mix_seed(step_seed, 0));
    Var depth_full = fd.metric_depth[0];

    StepOutputs out;
    std::vector<PoseChain> chains;
    std::vector<FactorizedDepth> src_depths;
    for (size_t i = 0; i < sources.size(); ++i) {
      chains.push_back(
          estimate_pose_chain(bind, pose_module_, target, sources[i], depth_full, K));
      out.chain_views.push_back(chains.back().views);
      out.composed_poses.push_back(chains.back().composed);
      if (cfg_.depth_consistency)
        src_depths.push_back(factorize(bind, sources[i], training, mix_seed(step_seed, i + 1)));
    }

    const int S = cfg_.loss.scales;
    Var photo = g.cscalar(0.f), smooth = g.cscalar(0.f), consist = g.cscalar(0.f);
    double automask_acc = 0;
    for (int k = 0; k < S; ++k) {
      std::vector<Var> recons;
      std::vector<Mask> masks;
      for (size_t i = 0; i < sources.size(); ++i) {
        if (k == 0) {
          // Eq.-14 path: the loss sees the chain's final synthesized view
          recons.push_back(chains[i].final_view);
          masks.push_back(chains[i].final_mask);
        } else {
          WarpResult w =
              tape_warp(g, sources[i], fd.metric_depth[k], chains[i].composed_tape, K);
          recons.push_back(w.image);
          masks.push_back(w.mask);
        }
      }
      PhotometricResult pr = photometric_loss(g, target, recons, masks, sources, cfg_.loss);
      photo = g.add(photo, pr.loss);
      automask_acc += pr.automask_fraction;
      smooth = g.add(smooth, smoothness_loss(g, fd.rel_disparity[k], target));
      if (cfg_.depth_consistency) {
        for (size_t i = 0; i < sources.size(); ++i) {
          ConsistencyResult cr = depth_consistency_loss(
              g, fd.metric_depth[k], src_depths[i].metric_depth[k],
              chains[i].composed_tape, K);
          consist = g.add(consist, g.scale(cr.loss, 1.f / static_cast<float>(sources.size())));
        }
      }
    }
    const float inv_s = 1.f / static_cast<float>(S);
    photo = g.scale(photo, inv_s);
    smooth = g.scale(smooth, inv_s);
    consist = g.scale(consist, inv_s);
    out.total = total_loss(g, photo, smooth, consist, cfg_.loss, &out.bundle);
    out.bundle.automask_fraction = automask_acc / S;
    return out;
  }

  // forward + backward, gradients accumulated into the parameter store
  LossBundle train_step_accumulate(const FrameTriplet& t, uint64_t step_seed,
                                   float grad_scale = 1.f) {
    Graph g;
    GraphBinding bind(g, params_);
    StepOutputs so = build_step(bind, t, /*training=*/true, step_seed);
    g.backward(grad_scale == 1.f ? so.total : g.scale(so.total, grad_scale));
    bind.harvest();
    return so.bundle;
  }

  Tensor infer_depth(const Tensor& image, double* scale_out = nullptr) {
    Graph g;
    GraphBinding bind(g, params_);
    FactorizedDepth fd = factorize(bind, g.constant(image), /*training=*/false, 0);
    if (scale_out) *scale_out = fd.scale_value;
    return g.tensor(fd.metric_depth[0]);
  }

  // composed relative pose target -> source from the full chain
  Pose infer_pair_pose(const Tensor& target, const Tensor& source, const Intrinsics& K) {
    Graph g;
    GraphBinding bind(g, params_);
    Var tv = g.constant(target);
    FactorizedDepth fd = factorize(bind, tv, /*training=*/false, 0);
    PoseChain chain = estimate_pose_chain(bind, pose_module_, tv, g.constant(source),
                                          fd.metric_depth[0], K);
    return chain.composed;
  }

  // intermediate synthesized views for one source (diagnostics)
  std::vector<Tensor> debug_chain_views(const FrameTriplet& t) {
    Graph g;
    GraphBinding bind(g, params_);
    Var tv = g.constant(t.target);
    FactorizedDepth fd = factorize(bind, tv, /*training=*/false, 0);
    PoseChain chain = estimate_pose_chain(bind, pose_module_, tv, g.constant(t.source_prev),
                                          fd.metric_depth[0], t.K);
    std::vector<Tensor> out;
    for (Var v : chain.views) out.push_back(g.tensor(v));
    return out;
  }

  std::vector<std::string> params_without_grads() const {
    std::vector<std::string> out;
    for (const auto& e : params_.entries())
      if (!e.grad_seen) out.push_back(e.name);
    return out;
  }

 private:
  ModelConfig cfg_;
  ParamStore params_;
  DepthNet depth_net_;
  ScaleNet scale_net_;
  ResidualPoseModule pose_module_;
};

// ---------------------------------------------------------------------------
// Training session: schedule, augmentation, checkpoints, logging.
// ---------------------------------------------------------------------------

inline void hflip_inplace(Tensor& t) {
  const int C = t.shape[0], H = t.shape[1], W = t.shape[2];
  for (int c = 0; c < C; ++c)
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W / 2; ++x) std::swap(t.at(c, y, x), t.at(c, y, W - 1 - x));
}

struct AugmentDraw {
  bool flip = false;
  float brightness = 1.f;
};

// flip + brightness applied identically to all triplet members; the flipped
// intrinsics keep the warp geometry self-consistent
inline void apply_augment(FrameTriplet& t, const AugmentDraw& a) {
  if (a.flip) {
    hflip_inplace(t.target);
    hflip_inplace(t.source_prev);
    hflip_inplace(t.source_next);
    hflip_inplace(t.gt_depth);
    t.K = t.K.hflipped();
  }
  if (a.brightness != 1.f) {
    for (Tensor* img : {&t.target, &t.source_prev, &t.source_next})
      for (float& v : img->data) v = std::min(std::max(v * a.brightness, 0.f), 1.f);
  }
}

inline Tensor resize_tensor(const Tensor& t, int H, int W) {
  Graph g;
  return g.tensor(g.resize_bilinear(g.constant(t), H, W));
}

// Bounded prefetch queue. All randomness is drawn when jobs are scheduled,
// so results are identical at every queue depth; depth 1 runs synchronously.
class TripletQueue {
 public:
  using Job = std::function<FrameTriplet()>;

  explicit TripletQueue(int depth) : depth_(std::max(1, depth)) {}
  ~TripletQueue() { stop(); }

  void submit(std::vector<Job> jobs) {
    jobs_ = std::move(jobs);
    next_job_ = 0;
    if (depth_ > 1 && !worker_.joinable())
      worker_ = std::thread([this] { produce(); });
  }

  bool pop(FrameTriplet& out) {
    if (depth_ <= 1) {
      if (next_job_ >= jobs_.size()) return false;
      out = jobs_[next_job_++]();
      return true;
    }
    std::unique_lock<std::mutex> lk(mu_);
    cv_.wait(lk, [&] { return !buffer_.empty() || produced_ >= jobs_.size(); });
    if (buffer_.empty()) return false;
    out = std::move(buffer_.front());
    buffer_.pop_front();
    cv_.notify_all();
    return true;
  }

  void stop() {
    {
      std::lock_guard<std::mutex> lk(mu_);
      stopping_ = true;
    }
    cv_.notify_all();
    if (worker_.joinable()) worker_.join();
  }

 private:
  void produce() {
    while (true) {
      size_t idx;
      {
        std::unique_lock<std::mutex> lk(mu_);
        cv_.wait(lk, [&] {
          return stopping_ || (produced_ < jobs_.size() &&
                               buffer_.size() < static_cast<size_t>(depth_));
        });
        if (stopping_ || produced_ >= jobs_.size()) return;
        idx = produced_++;
      }
      FrameTriplet t = jobs_[idx]();
      {
        std::lock_guard<std::mutex> lk(mu_);
        buffer_.push_back(std::move(t));
      }
      cv_.notify_all();
    }
  }

  int depth_;
  std::vector<Job> jobs_;
  size_t next_job_ = 0;
  size_t produced_ = 0;
  std::deque<FrameTriplet> buffer_;
  std::mutex mu_;
  std::condition_variable cv_;
  std::thread worker_;
  bool stopping_ = false;
};

struct FitResult {
  std::string final_checkpoint;
  std::string best_checkpoint;
  double best_val_abs_rel = std::numeric_limits<double>::max();
  int64_t steps = 0;
};

class TrainSession {
 public:
  TrainSession(const Config& cfg, SceneDataset dataset)
      : cfg_(cfg), data_(std::move(dataset)) {
    const int rh = cfg.get_int("data.resize_h"), rw = cfg.get_int("data.resize_w");
    if (rh > 0 && rw > 0 &&
        (rh != data_.images[0].shape[1] || rw != data_.images[0].shape[2])) {
      for (auto& img : data_.images) img = resize_tensor(img, rh, rw);
      for (auto& d : data_.depths) d = resize_tensor(d, rh, rw);
      data_.K = data_.K.scaled(rw, rh);
    }
    const int H = data_.images[0].shape[1], W = data_.images[0].shape[2];
    seed_ = static_cast<uint64_t>(cfg.get_int("train.seed"));
    model_ = std::make_unique<Model>(ModelConfig::from_config(cfg, H, W), seed_);
    rng_ = Pcg32(seed_, 2);
    epochs_ = cfg.get_int("train.epochs");
    lr_drop_epoch_ = cfg.get_int("train.lr_drop_epoch");
    if (epochs_ > 0 && lr_drop_epoch_ >= epochs_)
      throw ConfigError("train.lr_drop_epoch must be < train.epochs");
    lr_initial_ = cfg.get_double("train.lr_initial");
    lr_final_ = cfg.get_double("train.lr_final");
    if (lr_initial_ <= 0 || lr_final_ <= 0)
      throw ConfigError("learning rates must be > 0");
    batch_size_ = std::max(1, cfg.get_int("train.batch_size"));
    max_steps_ = cfg.get_int("train.max_steps");
    snapshot_every_ = cfg.get_int("train.snapshot_every");
    grad_clip_ = cfg.get_double("train.grad_clip");
    queue_depth_ = cfg.get_int("train.queue_depth");
    hflip_ = cfg.get_bool("aug.hflip");
    brightness_ = static_cast<float>(cfg.get_double("aug.brightness"));
  }

  Model& model() { return *model_; }
  const SceneDataset& dataset() const { return data_; }
  double lr_at_epoch(int epoch) const {
    return epoch < lr_drop_epoch_ ? lr_initial_ : lr_final_;
  }

  Checkpoint make_checkpoint() const {
    Checkpoint ck;
    std::istringstream ss(cfg_.serialize());
    std::string line;
    while (std::getline(ss, line)) {
      const size_t eq = line.find('=');
      if (eq != std::string::npos) ck.manifest[line.substr(0, eq)] = line.substr(eq + 1);
    }
    char rng_buf[64];
    std::snprintf(rng_buf, sizeof(rng_buf), "%llx:%llx",
                  static_cast<unsigned long long>(rng_.state),
                  static_cast<unsigned long long>(rng_.inc));
    ck.manifest["state.rng"] = rng_buf;
    ck.manifest["state.epoch"] = std::to_string(epoch_next_);
    ck.manifest["state.step"] = std::to_string(global_step_);
    ck.manifest["state.adam_t"] = std::to_string(adam_t_);
    ck.manifest["state.best_val"] = std::to_string(best_val_);
    for (const auto& e : model_->params().entries()) {
      ck.tensors.emplace_back("param." + e.name, e.value);
      ck.tensors.emplace_back("adam_m." + e.name, e.adam_m);
      ck.tensors.emplace_back("adam_v." + e.name, e.adam_v);
    }
    return ck;
  }

  // params only (fine-tune init) or full state (resume)
  void restore(const Checkpoint& ck, bool full_state) {
    for (auto& e : model_->params().entries()) {
      const Tensor* t = ck.find("param." + e.name);
      if (!t) throw CheckpointError("checkpoint is missing parameter " + e.name);
      if (!same_shape(t->shape, e.value.shape))
        throw CheckpointError("checkpoint shape mismatch for " + e.name);
      e.value = *t;
      if (full_state) {
        const Tensor* m = ck.find("adam_m." + e.name);
        const Tensor* v = ck.find("adam_v." + e.name);
        if (!m || !v) throw CheckpointError("checkpoint is missing optimizer state");
        e.adam_m = *m;
        e.adam_v = *v;
      }
    }
    if (full_state) {
      unsigned long long s = 0, inc = 0;
      if (std::sscanf(ck.manifest.at("state.rng").c_str(), "%llx:%llx", &s, &inc) != 2)
        throw CheckpointError("bad state.rng in checkpoint");
      rng_.state = s;
      rng_.inc = inc;
      epoch_next_ = std::stoi(ck.manifest.at("state.epoch"));
      global_step_ = std::stoll(ck.manifest.at("state.step"));
      adam_t_ = std::stoll(ck.manifest.at("state.adam_t"));
      best_val_ = std::stod(ck.manifest.at("state.best_val"));
    }
  }

  double validate() {
    DepthEvalConfig ec;
    ec.median_scaling = true;
    ec.apply_cap = false;
    double acc = 0;
    int n = 0;
    for (int id : data_.split.val) {
      Tensor pred = model_->infer_depth(data_.images[id]);
      acc += depth_metrics(pred, data_.depths[id], ec).abs_rel;
      ++n;
    }
    return n ? acc / n : std::numeric_limits<double>::quiet_NaN();
  }

  FitResult fit(const std::string& out_dir, std::ostream& log,
                const std::string& dump_views_dir = "") {
    namespace fs = std::filesystem;
    fs::create_directories(out_dir);
    log << "# training log; columns: epoch, step, photometric, smoothness, consistency, "
           "total, lr\n";
    log << "# started " << time_string() << "\n";
    if (batch_size_ > 1)
      log << "# incomplete final batches are dropped (batch_size=" << batch_size_ << ")\n";

    FitResult result;
    result.best_val_abs_rel = best_val_;
    const std::string final_path = out_dir + "/final.ckpt";
    const std::string best_path = out_dir + "/best.ckpt";
    bool stop = false;

    for (int epoch = epoch_next_; epoch < epochs_ && !stop; ++epoch) {
      const double lr = lr_at_epoch(epoch);
      std::vector<int> ids = data_.split.train;
      // Fisher-Yates with the session RNG
      for (size_t i = ids.size(); i > 1; --i)
        std::swap(ids[i - 1], ids[rng_.bounded(static_cast<uint32_t>(i))]);
      const size_t nbatches = ids.size() / batch_size_;

      std::vector<TripletQueue::Job> jobs;
      for (size_t b = 0; b < nbatches; ++b)
        for (int k = 0; k < batch_size_; ++k) {
          const int id = ids[b * batch_size_ + k];
          AugmentDraw draw;
          if (hflip_) draw.flip = rng_.uniform() < 0.5;
          if (brightness_ > 0)
            draw.brightness = 1.f + brightness_ * static_cast<float>(rng_.uniform(-1, 1));
          jobs.push_back([this, id, draw] {
            FrameTriplet t = data_.triplet(id);
            apply_augment(t, draw);
            return t;
          });
        }
      TripletQueue queue(queue_depth_);
      queue.submit(std::move(jobs));

      for (size_t b = 0; b < nbatches && !stop; ++b) {
        model_->params().zero_grad();
        LossBundle mean;
        for (int k = 0; k < batch_size_; ++k) {
          FrameTriplet t;
          if (!queue.pop(t)) throw std::runtime_error("triplet queue underrun");
          LossBundle lb;
          try {
            lb = model_->train_step_accumulate(t, mix_seed(seed_, global_step_ * 64 + k),
                                               1.f / batch_size_);
          } catch (const std::runtime_error& e) {
            throw std::runtime_error(std::string(e.what()) + " at step " +
                                     std::to_string(global_step_));
          }
          mean.photometric += lb.photometric / batch_size_;
          mean.smoothness += lb.smoothness / batch_size_;
          mean.consistency += lb.consistency / batch_size_;
          mean.total += lb.total / batch_size_;
        }
        AdamConfig ac;
        ac.lr = lr;
        ac.clip_norm = grad_clip_;
        adam_step(model_->params(), ac, ++adam_t_);
        ++global_step_;
        log << epoch << "," << global_step_ << "," << mean.photometric << ","
            << mean.smoothness << "," << mean.consistency << "," << mean.total << "," << lr
            << "\n";
        if (max_steps_ > 0 && global_step_ >= max_steps_) stop = true;
      }
      queue.stop();
      epoch_next_ = epoch + 1;

      if (!data_.split.val.empty()) {
        const double val = validate();
        log << "# val epoch=" << epoch << " abs_rel=" << val << "\n";
        if (val < best_val_) {
          best_val_ = val;
          make_checkpoint().save(best_path);
          result.best_checkpoint = best_path;
        }
      }
      if (!dump_views_dir.empty() && !data_.split.val.empty()) {
        fs::create_directories(dump_views_dir);
        auto views = model_->debug_chain_views(data_.triplet(data_.split.val.front()));
        for (size_t v = 0; v < views.size(); ++v) {
          char name[64];
          std::snprintf(name, sizeof(name), "epoch_%03d_view_%02zu.ppm", epoch, v);
          write_ppm((fs::path(dump_views_dir) / name).string(), views[v]);
        }
      }
      if (snapshot_every_ > 0 && (epoch + 1) % snapshot_every_ == 0) {
        char name[64];
        std::snprintf(name, sizeof(name), "snapshot_epoch_%03d.ckpt", epoch);
        make_checkpoint().save((fs::path(out_dir) / name).string());
      }
    }

    make_checkpoint().save(final_path);
    result.final_checkpoint = final_path;
    result.best_val_abs_rel = best_val_;
    result.steps = global_step_;
    if (result.best_checkpoint.empty()) result.best_checkpoint = final_path;
    log << "# finished " << time_string() << "\n";
    return result;
  }

  std::vector<std::string> params_without_grads() const {
    return model_->params_without_grads();
  }

 private:
  static std::string time_string() {
    std::time_t now = std::time(nullptr);
    char buf[64];
    std::strftime(buf, sizeof(buf), "%Y-%m-%d %H:%M:%S", std::gmtime(&now));
    return buf;
  }

  Config cfg_;
  SceneDataset data_;
  std::unique_ptr<Model> model_;
  Pcg32 rng_;
  uint64_t seed_ = 0;
  int epochs_ = 0, lr_drop_epoch_ = 0, batch_size_ = 1;
  int max_steps_ = 0, snapshot_every_ = 0, queue_depth_ = 1;
  double lr_initial_ = 1e-4, lr_final_ = 1e-5, grad_clip_ = 10;
  bool hflip_ = false;
  float brightness_ = 0.f;
  int epoch_next_ = 0;
  int64_t global_step_ = 0, adam_t_ = 0;
  double best_val_ = std::numeric_limits<double>::max();
};

// predicted world-to-camera trajectory chained from consecutive pair poses
inline std::vector<Pose> predict_trajectory(Model& model, const SceneDataset& ds) {
  std::vector<Pose> out;
  out.push_back(ds.world_to_cam.empty() ? Pose::identity() : ds.world_to_cam.front());
  for (int i = 0; i + 1 < ds.frames(); ++i) {
    const Pose rel = model.infer_pair_pose(ds.images[i], ds.images[i + 1], ds.K);
    out.push_back(compose(rel, out.back()));
  }
  return out;
}

}  // namespace midx
