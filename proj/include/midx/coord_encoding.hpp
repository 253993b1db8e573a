#pragma once

#include <stdexcept>
#include <vector>

#include "midx/graph.hpp"
#include "midx/tensor.hpp"

namespace midx {

// Normalized index rasters appended to pose-network inputs. Each channel is
// rank 1: i varies along rows, j along columns, both scaled so the endpoint
// indices land exactly on -1 and +1.
struct CoordChannels {
  Tensor i_channel;  // [1,H,W], 2r/(H-1) - 1
  Tensor j_channel;  // [1,H,W], 2c/(W-1) - 1
};

inline CoordChannels make_coord_channels(int height, int width) {
  if (height < 2 || width < 2)
    throw std::invalid_argument("make_coord_channels: need height/width >= 2");
  CoordChannels out;
  out.i_channel = Tensor({1, height, width});
  out.j_channel = Tensor({1, height, width});
  for (int r = 0; r < height; ++r)
    for (int c = 0; c < width; ++c) {
      out.i_channel.at(0, r, c) = 2.f * r / (height - 1) - 1.f;
      out.j_channel.at(0, r, c) = 2.f * c / (width - 1) - 1.f;
    }
  return out;
}

// (r1,g1,b1,r2,g2,b2) or (r1,g1,b1,r2,g2,b2,i,j)
inline Tensor build_pose_input(const Tensor& target, const Tensor& source, bool use_coords) {
  if (!same_shape(target.shape, source.shape))
    throw std::invalid_argument("build_pose_input: image shape mismatch");
  const int H = target.shape[1], W = target.shape[2];
  const int C = use_coords ? 8 : 6;
  Tensor out({C, H, W});
  const size_t hw = static_cast<size_t>(H) * W;
  std::copy(target.data.begin(), target.data.end(), out.data.begin());
  std::copy(source.data.begin(), source.data.end(), out.data.begin() + 3 * hw);
  if (use_coords) {
    CoordChannels cc = make_coord_channels(H, W);
    std::copy(cc.i_channel.data.begin(), cc.i_channel.data.end(), out.data.begin() + 6 * hw);
    std::copy(cc.j_channel.data.begin(), cc.j_channel.data.end(), out.data.begin() + 7 * hw);
  }
  return out;
}

// tape variant for inputs already on the graph
inline Var build_pose_input(Graph& g, Var target, Var source, bool use_coords) {
  const auto& s = g.shape(target);
  if (!same_shape(s, g.shape(source)))
    throw std::invalid_argument("build_pose_input: image shape mismatch");
  std::vector<Var> chans{target, source};
  if (use_coords) {
    CoordChannels cc = make_coord_channels(s[1], s[2]);
    chans.push_back(g.constant(std::move(cc.i_channel)));
    chans.push_back(g.constant(std::move(cc.j_channel)));
  }
  return g.concat_ch(chans);
}

enum class CoordInit { Zeros, Random };

// Copies the original input-channel kernels verbatim and initializes the new
// trailing channels per policy. With the zero policy the widened layer
// computes exactly the original function whenever the new channels are zero.
inline Tensor widen_first_conv(const Tensor& weights, int extra_channels,
                               CoordInit policy = CoordInit::Zeros, uint64_t seed = 0) {
  if (extra_channels < 0) throw std::invalid_argument("widen_first_conv: extra < 0");
  if (extra_channels == 0) return weights;
  const int co = weights.shape[0], ci = weights.shape[1];
  const int kh = weights.shape[2], kw = weights.shape[3];
  Tensor out({co, ci + extra_channels, kh, kw});
  Pcg32 rng(seed);
  const double bound = std::sqrt(6.0 / (static_cast<double>(ci + extra_channels) * kh * kw));
  for (int o = 0; o < co; ++o)
    for (int i = 0; i < ci + extra_channels; ++i)
      for (int y = 0; y < kh; ++y)
        for (int x = 0; x < kw; ++x) {
          float v = 0.f;
          if (i < ci)
            v = weights.data[((static_cast<size_t>(o) * ci + i) * kh + y) * kw + x];
          else if (policy == CoordInit::Random)
            v = static_cast<float>(rng.uniform(-bound, bound));
          out.data[((static_cast<size_t>(o) * (ci + extra_channels) + i) * kh + y) * kw + x] = v;
        }
  return out;
}

}  // namespace midx
