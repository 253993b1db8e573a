#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "midx/graph.hpp"
#include "midx/nn.hpp"

namespace midx {

struct DepthNetConfig {
  std::vector<int> encoder_channels{16, 24, 32, 48};
  std::vector<int> decoder_channels{12, 12, 18, 24};  // shallow -> deep
  int num_scales = 4;
  float d_min = 0.1f;
  float d_max = 1.0f;  // relative regime by default; the scale factor carries scene scale

  int stages() const { return static_cast<int>(encoder_channels.size()); }
};

// d = 1 / ((1/d_min - 1/d_max) sigma + 1/d_max); sigma in [0,1] maps to
// depth in [d_max .. d_min], monotone decreasing.
inline Var depth_activation(Graph& g, Var sigma, float d_min, float d_max) {
  const auto& sv = g.val(sigma);
  for (float v : sv)
    if (v < 0.f || v > 1.f)
      throw std::invalid_argument("depth_activation: sigma outside [0,1]");
  const float a = 1.f / d_min - 1.f / d_max;
  const float b = 1.f / d_max;
  return g.div(g.cscalar(1.f), g.affine(sigma, a, b));
}

inline Tensor depth_activation_value(const Tensor& sigma, float d_min, float d_max) {
  Graph g;
  return g.tensor(depth_activation(g, g.constant(sigma), d_min, d_max));
}

inline Var disparity_from_sigma(Graph& g, Var sigma, float d_min, float d_max) {
  return g.affine(sigma, 1.f / d_min - 1.f / d_max, 1.f / d_max);
}

struct DepthNetOutput {
  std::vector<Var> sigma;  // per scale, [1, H/2^k, W/2^k], k = 0..num_scales-1
  Var bottleneck;          // encoder feature map for the scale network
};

// Auto-encoder with skip connections. Encoder stages downsample by 2 each;
// the decoder mirrors them with nearest upsampling and skip concats, and a
// sigmoid disparity head at each of the top num_scales levels.
class DepthNet {
 public:
  DepthNet() = default;
  DepthNet(ParamStore& ps, const std::string& prefix, const DepthNetConfig& cfg, Pcg32& rng)
      : cfg_(cfg) {
    const int S = cfg.stages();
    if (static_cast<int>(cfg.decoder_channels.size()) != S)
      throw std::invalid_argument("depth net: decoder_channels must match encoder stages");
    if (cfg.num_scales < 1 || cfg.num_scales > S)
      throw std::invalid_argument("depth net: num_scales out of range");
    if (!(0.f < cfg.d_min && cfg.d_min < cfg.d_max))
      throw std::invalid_argument("depth net: need 0 < d_min < d_max");
    int ci = 3;
    for (int i = 0; i < S; ++i) {
      int co = cfg.encoder_channels[i];
      enc_a_.emplace_back(ps, prefix + ".enc" + std::to_string(i) + "a", ci, co, 3, 2, rng);
      enc_b_.emplace_back(ps, prefix + ".enc" + std::to_string(i) + "b", co, co, 3, 1, rng);
      ci = co;
    }
    for (int i = S - 1; i >= 0; --i) {
      int co = cfg.decoder_channels[i];
      int cin = (i == S - 1) ? cfg.encoder_channels[S - 1] : cfg.decoder_channels[i + 1];
      dec_a_.emplace_back(ps, prefix + ".dec" + std::to_string(i) + "a", cin, co, 3, 1, rng);
      int skip = (i > 0) ? cfg.encoder_channels[i - 1] : 0;
      dec_b_.emplace_back(ps, prefix + ".dec" + std::to_string(i) + "b", co + skip, co, 3, 1, rng);
      if (i < cfg.num_scales)
        heads_.emplace_back(ps, prefix + ".disp" + std::to_string(i), co, 1, 3, 1, rng);
    }
  }

  // returns per-scale sigmoid rasters (finest first) and the bottleneck features
  DepthNetOutput forward(GraphBinding& bind, Var image) const {
    Graph& g = bind.graph();
    const auto& s = g.shape(image);
    const int div = 1 << cfg_.stages();
    if (s[1] % div != 0 || s[2] % div != 0)
      throw std::invalid_argument("depth net: image " + shape_str(s) +
                                  " not divisible by 2^stages = " + std::to_string(div));
    const int S = cfg_.stages();
    std::vector<Var> feats;
    Var x = image;
    for (int i = 0; i < S; ++i) {
      x = g.relu(enc_a_[i].forward(bind, x));
      x = g.relu(enc_b_[i].forward(bind, x));
      feats.push_back(x);
    }
    DepthNetOutput out;
    out.bottleneck = feats.back();
    out.sigma.resize(cfg_.num_scales);
    Var d = feats.back();
    for (int idx = 0, i = S - 1; i >= 0; --i, ++idx) {
      d = g.elu(dec_a_[idx].forward(bind, d));
      d = g.up_nearest2(d);
      if (i > 0) d = g.concat_ch({d, feats[i - 1]});
      d = g.elu(dec_b_[idx].forward(bind, d));
      if (i < cfg_.num_scales)
        out.sigma[i] = g.sigmoid_(heads_[idx - (S - cfg_.num_scales)].forward(bind, d));
    }
    return out;
  }

  const DepthNetConfig& config() const { return cfg_; }

 private:
  DepthNetConfig cfg_;
  std::vector<Conv2d> enc_a_, enc_b_;
  std::vector<Conv2d> dec_a_, dec_b_;
  std::vector<Conv2d> heads_;  // ordered deep -> shallow alongside dec layers
};

}  // namespace midx
