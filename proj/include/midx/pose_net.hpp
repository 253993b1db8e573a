#pragma once

#include <string>
#include <vector>

#include "midx/coord_encoding.hpp"
#include "midx/geometry.hpp"
#include "midx/graph.hpp"
#include "midx/nn.hpp"

namespace midx {

enum class EncodingPosition { Input, Encoder, Both };

struct PoseNetConfig {
  int num_residual_iterations = 1;
  bool shared_encoder = true;
  bool use_coords = false;  // 8-channel input when true
  EncodingPosition encoding_position = EncodingPosition::Input;
  CoordInit coord_init = CoordInit::Zeros;
  float rotation_scale = 0.01f;  // raw axis-angle outputs are scaled by this
  std::vector<int> encoder_channels{16, 24, 32, 48};

  int input_channels() const {
    return (use_coords && encoding_position != EncodingPosition::Encoder) ? 8 : 6;
  }
};

// Shared convolutional encoder over a stacked image pair. With coordinate
// channels enabled the first conv is a 6-channel init widened by two extra
// kernels, so the zero policy starts as a strict extension of the plain model.
class PoseEncoder {
 public:
  PoseEncoder() = default;
  PoseEncoder(ParamStore& ps, const std::string& prefix, int in_channels,
              const std::vector<int>& channels, Pcg32& rng,
              CoordInit coord_init = CoordInit::Zeros) {
    int ci = in_channels;
    for (size_t i = 0; i < channels.size(); ++i) {
      const std::string name = prefix + ".conv" + std::to_string(i);
      if (i == 0 && in_channels > 6) {
        Tensor w6 = conv_init(channels[i], 6, 3, rng);
        Tensor w = widen_first_conv(w6, in_channels - 6, coord_init, rng.next_u32());
        convs_.emplace_back(ps, name, std::move(w), 2);
      } else {
        convs_.emplace_back(ps, name, ci, channels[i], 3, 2, rng);
      }
      ci = channels[i];
    }
    out_channels_ = ci;
  }

  Var forward(GraphBinding& bind, Var x) const {
    Graph& g = bind.graph();
    for (const auto& c : convs_) x = g.relu(c.forward(bind, x));
    return x;
  }

  int out_channels() const { return out_channels_; }
  int first_conv_weight_id() const { return convs_[0].w; }

 private:
  std::vector<Conv2d> convs_;
  int out_channels_ = 0;
};

// Regressor head: two convs, global average pool, linear to 6-DoF.
// The final layer starts at zero so an untrained head emits the identity.
class PoseRegressor {
 public:
  PoseRegressor() = default;
  PoseRegressor(ParamStore& ps, const std::string& prefix, int in_channels, Pcg32& rng) {
    conv1_ = Conv2d(ps, prefix + ".conv1", in_channels, in_channels, 1, 1, rng);
    conv2_ = Conv2d(ps, prefix + ".conv2", in_channels, in_channels, 3, 1, rng);
    fc_ = Linear(ps, prefix + ".fc", in_channels, 6, rng, /*zero_init=*/true);
  }

  Var forward(GraphBinding& bind, Var feat) const {
    Graph& g = bind.graph();
    Var x = g.relu(conv1_.forward(bind, feat));
    x = g.relu(conv2_.forward(bind, x));
    return fc_.forward(bind, g.mean_spatial(x));
  }

 private:
  Conv2d conv1_, conv2_;
  Linear fc_;
};

struct PoseForward {
  Var six_dof;    // raw network output
  TapePose pose;  // after rotation scaling and Rodrigues
};

// Initial pose network + residual pose network with a shared (or separate)
// encoder and independent regressor heads. Both heads predict the motion of
// the target camera toward the frame that produced their second input.
class ResidualPoseModule {
 public:
  ResidualPoseModule() = default;
  ResidualPoseModule(ParamStore& ps, const std::string& prefix, const PoseNetConfig& cfg,
                     Pcg32& rng)
      : cfg_(cfg) {
    if (cfg.num_residual_iterations < 0)
      throw std::invalid_argument("pose net: num_residual_iterations >= 0");
    const int in_ch = cfg.input_channels();
    encoder_ = PoseEncoder(ps, prefix + ".encoder", in_ch, cfg.encoder_channels, rng,
                           cfg.coord_init);
    if (!cfg.shared_encoder && cfg.num_residual_iterations > 0)
      res_encoder_ = PoseEncoder(ps, prefix + ".res_encoder", in_ch, cfg.encoder_channels,
                                 rng, cfg.coord_init);
    int feat_ch = encoder_.out_channels();
    const bool enc_coords = cfg.use_coords && (cfg.encoding_position == EncodingPosition::Encoder ||
                                               cfg.encoding_position == EncodingPosition::Both);
    if (enc_coords) feat_ch += 2;
    regressor_ = PoseRegressor(ps, prefix + ".head", feat_ch, rng);
    if (cfg.num_residual_iterations > 0)
      res_regressor_ = PoseRegressor(ps, prefix + ".res_head", feat_ch, rng);
  }

  // (target, other) -> 6-DoF -> pose; channel count enforced
  PoseForward forward_pose(GraphBinding& bind, Var target, Var other, bool residual) const {
    Graph& g = bind.graph();
    const bool input_coords =
        cfg_.use_coords && (cfg_.encoding_position == EncodingPosition::Input ||
                            cfg_.encoding_position == EncodingPosition::Both);
    Var pair = build_pose_input(g, target, other, input_coords);
    if (g.shape(pair)[0] != cfg_.input_channels())
      throw std::invalid_argument("pose net: input channel mismatch");
    const PoseEncoder& enc =
        (residual && !cfg_.shared_encoder) ? res_encoder_ : encoder_;
    Var feat = enc.forward(bind, pair);
    if (cfg_.use_coords && (cfg_.encoding_position == EncodingPosition::Encoder ||
                            cfg_.encoding_position == EncodingPosition::Both)) {
      const auto& fs = g.shape(feat);
      CoordChannels cc = make_coord_channels(fs[1], fs[2]);
      feat = g.concat_ch({feat, g.constant(std::move(cc.i_channel)),
                          g.constant(std::move(cc.j_channel))});
    }
    const PoseRegressor& head = residual ? res_regressor_ : regressor_;
    PoseForward out;
    out.six_dof = head.forward(bind, feat);
    Var r = bind.graph().scale(bind.graph().slice_flat(out.six_dof, 0, 3), cfg_.rotation_scale);
    Var t = bind.graph().slice_flat(out.six_dof, 3, 3);
    out.pose = tape_axis_angle(bind.graph(), r, t);
    return out;
  }

  const PoseNetConfig& config() const { return cfg_; }
  const PoseEncoder& encoder() const { return encoder_; }

 private:
  PoseNetConfig cfg_;
  PoseEncoder encoder_, res_encoder_;
  PoseRegressor regressor_, res_regressor_;
};

struct ResidualStepResult {
  TapePose residual;
  WarpResult synthesized;  // re-warped view, mask NOT yet intersected
};

// One Eq.-13/14 iteration: predict a residual pose from (target, synthesized)
// and re-warp the synthesized view with it.
inline ResidualStepResult residual_step(GraphBinding& bind, const ResidualPoseModule& nets,
                                        Var target, Var synthesized, Var depth_target,
                                        const Intrinsics& K) {
  PoseForward pf = nets.forward_pose(bind, target, synthesized, /*residual=*/true);
  ResidualStepResult out;
  out.residual = pf.pose;
  out.synthesized = tape_warp(bind.graph(), synthesized, depth_target, pf.pose, K);
  return out;
}

struct PoseChain {
  Pose initial;
  std::vector<Pose> residuals;
  Pose composed;                 // initial * residual_1 * ... (target -> source)
  TapePose composed_tape;
  std::vector<Var> views;        // synthesized view after each warp
  std::vector<Mask> view_masks;  // intersected progressively
  Var final_view = -1;
  Mask final_mask;
};

// Runs the initial pose network once, then num_residual_iterations residual
// steps, each warping the previous synthesized view. The composed transform
// is the left-to-right product of (initial, residual_1, ...).
inline PoseChain estimate_pose_chain(GraphBinding& bind, const ResidualPoseModule& nets,
                                     Var target, Var source, Var depth_target,
                                     const Intrinsics& K) {
  Graph& g = bind.graph();
  PoseChain chain;
  PoseForward initial = nets.forward_pose(bind, target, source, /*residual=*/false);
  chain.initial = tape_pose_value(g, initial.pose);
  chain.composed_tape = initial.pose;

  WarpResult w = tape_warp(g, source, depth_target, initial.pose, K);
  chain.views.push_back(w.image);
  chain.view_masks.push_back(w.mask);

  Mask acc = w.mask;
  for (int i = 0; i < nets.config().num_residual_iterations; ++i) {
    ResidualStepResult rs = residual_step(bind, nets, target, chain.views.back(), depth_target, K);
    chain.residuals.push_back(tape_pose_value(g, rs.residual));
    chain.composed_tape = tape_compose(g, chain.composed_tape, rs.residual);
    acc = acc.intersect(rs.synthesized.mask);
    chain.views.push_back(rs.synthesized.image);
    chain.view_masks.push_back(acc);
  }
  chain.composed = tape_pose_value(g, chain.composed_tape);
  chain.final_view = chain.views.back();
  chain.final_mask = chain.view_masks.back();
  return chain;
}

}  // namespace midx
