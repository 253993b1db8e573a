#pragma once

#include <string>
#include <vector>

#include "midx/graph.hpp"
#include "midx/nn.hpp"

namespace midx {

struct ScaleRegressionConfig {
  int d_max_bins = 10;       // scale factor upper bound (scene units)
  int attention_dim = 16;    // Q/K/V projection width
  float dropout_rate = 0.5f;
  bool use_attention = true;
  bool use_prob_regression = true;
  int fc_hidden = 32;
};

struct ScaleRegressionOutput {
  Var scale;  // scalar in [0, d_max_bins]
  Var probs;  // [1, d_max_bins+1] when prob regression is on, -1 otherwise
};

// Self-attention over the H*W positions of a feature map, with a learned
// relative-position bias on the logits and a residual output projection:
//   S_F = W_out softmax(q^T k + bias) v + F
class AttentionBlock {
 public:
  AttentionBlock() = default;
  // bias_h/bias_w: feature resolution the relative-position table is sized
  // for (the training bottleneck); other resolutions clamp into the table
  AttentionBlock(ParamStore& ps, const std::string& prefix, int channels, int dim,
                 int bias_h, int bias_w, Pcg32& rng)
      : bias_h_(bias_h), bias_w_(bias_w) {
    wq_ = ps.add(prefix + ".wq", linear_init(dim, channels, rng));
    wk_ = ps.add(prefix + ".wk", linear_init(dim, channels, rng));
    wv_ = ps.add(prefix + ".wv", linear_init(dim, channels, rng));
    wout_ = ps.add(prefix + ".wout", linear_init(channels, dim, rng));
    rel_bias_ = ps.add(prefix + ".rel_bias", Tensor({(2 * bias_h - 1) * (2 * bias_w - 1)}));
  }

  Var forward(GraphBinding& bind, Var F) const {
    Graph& g = bind.graph();
    const auto& s = g.shape(F);
    const int D = s[0], H = s[1], W = s[2];
    const int N = H * W;
    Var flat = g.reshape(F, {D, N});
    Var q = g.matmul(bind.use(wq_), flat);  // [A,N]
    Var k = g.matmul(bind.use(wk_), flat);
    Var v = g.matmul(bind.use(wv_), flat);
    Var logits = g.matmul(q, k, true, false);  // [N,N]
    logits = g.add_gather(logits, bind.use(rel_bias_), bias_index(H, W));
    Var attn = g.softmax_rows(logits);           // rows sum to 1
    Var gathered = g.matmul(attn, v, false, true);  // [N,A]
    Var proj = g.matmul(bind.use(wout_), gathered, false, true);  // [D,N]
    return g.add(g.reshape(proj, {D, H, W}), F);
  }

  int output_weight_id() const { return wout_; }

 private:
  int wq_ = -1, wk_ = -1, wv_ = -1, wout_ = -1;
  int rel_bias_ = -1;
  int bias_h_ = 0, bias_w_ = 0;

  std::vector<int> bias_index(int H, int W) const {
    const int N = H * W;
    auto clampi = [](int v, int lo, int hi) { return std::min(std::max(v, lo), hi); };
    std::vector<int> idx(static_cast<size_t>(N) * N);
    for (int a = 0; a < N; ++a) {
      int ar = a / W, ac = a % W;
      for (int b = 0; b < N; ++b) {
        int br = b / W, bc = b % W;
        int dr = clampi(br - ar, -(bias_h_ - 1), bias_h_ - 1);
        int dc = clampi(bc - ac, -(bias_w_ - 1), bias_w_ - 1);
        idx[static_cast<size_t>(a) * N + b] =
            (dr + bias_h_ - 1) * (2 * bias_w_ - 1) + (dc + bias_w_ - 1);
      }
    }
    return idx;
  }
};

// Soft-argmax over integer bins 0..d_max: S = sum_s s * softmax(logits)_s.
inline ScaleRegressionOutput probabilistic_scale(Graph& g, Var logits, int d_max) {
  Var row = g.reshape(logits, {1, d_max + 1});
  Var probs = g.softmax_rows(row);
  Tensor bins({1, d_max + 1});
  for (int i = 0; i <= d_max; ++i) bins.data[i] = static_cast<float>(i);
  ScaleRegressionOutput out;
  out.probs = probs;
  out.scale = g.sum_(g.mul(probs, g.constant(std::move(bins))));
  return out;
}

// Transformer-style scale regression head over depth-encoder features:
// attention block, two residual conv blocks, GAP, then three FC layers with
// dropout in between. Emits either the probabilistic soft-argmax scale or a
// single softplus-positive scalar.
class ScaleNet {
 public:
  ScaleNet() = default;
  ScaleNet(ParamStore& ps, const std::string& prefix, int in_channels, int feat_h,
           int feat_w, const ScaleRegressionConfig& cfg, Pcg32& rng)
      : cfg_(cfg) {
    if (cfg.d_max_bins < 1) throw std::invalid_argument("scale net: d_max_bins >= 1");
    if (!(cfg.dropout_rate >= 0.f && cfg.dropout_rate < 1.f))
      throw std::invalid_argument("scale net: dropout_rate in [0,1)");
    if (cfg.use_attention)
      attn_ = AttentionBlock(ps, prefix + ".attn", in_channels, cfg.attention_dim, feat_h,
                             feat_w, rng);
    for (int b = 0; b < 2; ++b) {
      res_a_.emplace_back(ps, prefix + ".res" + std::to_string(b) + "a", in_channels,
                          in_channels, 3, 1, rng);
      res_b_.emplace_back(ps, prefix + ".res" + std::to_string(b) + "b", in_channels,
                          in_channels, 3, 1, rng);
    }
    fc1_ = Linear(ps, prefix + ".fc1", in_channels, cfg.fc_hidden, rng);
    fc2_ = Linear(ps, prefix + ".fc2", cfg.fc_hidden, cfg.fc_hidden, rng);
    const int out = cfg.use_prob_regression ? cfg.d_max_bins + 1 : 1;
    fc3_ = Linear(ps, prefix + ".fc3", cfg.fc_hidden, out, rng);
  }

  ScaleRegressionOutput forward(GraphBinding& bind, Var F, bool training,
                                uint64_t dropout_seed) const {
    Graph& g = bind.graph();
    Var x = F;
    if (cfg_.use_attention) x = attn_.forward(bind, x);
    for (size_t b = 0; b < res_a_.size(); ++b) {
      Var h = g.relu(res_a_[b].forward(bind, x));
      h = res_b_[b].forward(bind, h);
      x = g.relu(g.add(h, x));
    }
    Var feat = g.mean_spatial(x);
    Var h1 = g.relu(fc1_.forward(bind, feat));
    if (training && cfg_.dropout_rate > 0)
      h1 = g.dropout(h1, cfg_.dropout_rate, mix_seed(dropout_seed, 1));
    Var h2 = g.relu(fc2_.forward(bind, h1));
    if (training && cfg_.dropout_rate > 0)
      h2 = g.dropout(h2, cfg_.dropout_rate, mix_seed(dropout_seed, 2));
    Var head = fc3_.forward(bind, h2);
    if (cfg_.use_prob_regression) return probabilistic_scale(g, head, cfg_.d_max_bins);
    ScaleRegressionOutput out;
    out.probs = -1;
    out.scale = g.softplus_(g.slice_flat(head, 0, 1));
    return out;
  }

  const AttentionBlock& attention() const { return attn_; }
  const ScaleRegressionConfig& config() const { return cfg_; }

 private:
  ScaleRegressionConfig cfg_;
  AttentionBlock attn_;
  std::vector<Conv2d> res_a_, res_b_;
  Linear fc1_, fc2_, fc3_;
};

}  // namespace midx
