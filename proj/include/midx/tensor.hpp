#pragma once

#include <cassert>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace midx {

// Dense row-major float tensor. Shapes follow [C,H,W] for rasters,
// [rows,cols] for matrices, [n] for vectors, [] is not used (scalars are [1]).
struct Tensor {
  std::vector<int> shape;
  std::vector<float> data;

  Tensor() = default;
  explicit Tensor(std::vector<int> s, float fill = 0.f)
      : shape(std::move(s)), data(static_cast<size_t>(numel_of(shape)), fill) {}
  Tensor(std::vector<int> s, std::vector<float> d)
      : shape(std::move(s)), data(std::move(d)) {
    assert(static_cast<int64_t>(data.size()) == numel_of(shape));
  }

  static int64_t numel_of(const std::vector<int>& s) {
    int64_t n = 1;
    for (int d : s) n *= d;
    return n;
  }
  int64_t numel() const { return numel_of(shape); }

  // raster accessors, [C,H,W]
  float& at(int c, int y, int x) {
    return data[(static_cast<size_t>(c) * shape[1] + y) * shape[2] + x];
  }
  float at(int c, int y, int x) const {
    return data[(static_cast<size_t>(c) * shape[1] + y) * shape[2] + x];
  }
  // matrix accessors, [rows,cols]
  float& at(int r, int c) { return data[static_cast<size_t>(r) * shape[1] + c]; }
  float at(int r, int c) const { return data[static_cast<size_t>(r) * shape[1] + c]; }

  float& operator[](size_t i) { return data[i]; }
  float operator[](size_t i) const { return data[i]; }
};

inline bool same_shape(const std::vector<int>& a, const std::vector<int>& b) {
  return a == b;
}

inline std::string shape_str(const std::vector<int>& s) {
  std::string out = "[";
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

// Byte mask raster with the same geometry conventions as Tensor.
struct Mask {
  std::vector<int> shape;  // [H,W]
  std::vector<uint8_t> data;

  Mask() = default;
  Mask(int h, int w, uint8_t fill = 1)
      : shape{h, w}, data(static_cast<size_t>(h) * w, fill) {}
  uint8_t& at(int y, int x) { return data[static_cast<size_t>(y) * shape[1] + x]; }
  uint8_t at(int y, int x) const { return data[static_cast<size_t>(y) * shape[1] + x]; }
  int64_t count() const {
    int64_t n = 0;
    for (uint8_t v : data) n += v ? 1 : 0;
    return n;
  }
  Mask intersect(const Mask& o) const {
    assert(shape == o.shape);
    Mask out = *this;
    for (size_t i = 0; i < data.size(); ++i) out.data[i] = data[i] && o.data[i];
    return out;
  }
};

// PCG32: tiny, serializable, identical across platforms. All randomness in
// the library flows through this so runs replay bit-exactly.
struct Pcg32 {
  uint64_t state = 0x853c49e6748fea9bULL;
  uint64_t inc = 0xda3e39cb94b95bdbULL;

  Pcg32() = default;
  explicit Pcg32(uint64_t seed, uint64_t stream = 1) { reseed(seed, stream); }

  void reseed(uint64_t seed, uint64_t stream = 1) {
    state = 0;
    inc = (stream << 1u) | 1u;
    next_u32();
    state += seed;
    next_u32();
  }

  uint32_t next_u32() {
    uint64_t old = state;
    state = old * 6364136223846793005ULL + inc;
    uint32_t xorshifted = static_cast<uint32_t>(((old >> 18u) ^ old) >> 27u);
    uint32_t rot = static_cast<uint32_t>(old >> 59u);
    return (xorshifted >> rot) | (xorshifted << ((-rot) & 31));
  }

  // uniform in [0,1)
  double uniform() { return next_u32() * (1.0 / 4294967296.0); }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  // Box-Muller, no cached spare (keeps state serialization trivial)
  double normal() {
    double u1 = 0.0;
    do { u1 = uniform(); } while (u1 <= 1e-12);
    double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }
  uint32_t bounded(uint32_t n) { return n ? next_u32() % n : 0; }
};

// Deterministic mix for deriving per-call seeds (dropout, augmentation).
inline uint64_t mix_seed(uint64_t a, uint64_t b) {
  uint64_t x = a * 0x9e3779b97f4a7c15ULL + b;
  x ^= x >> 30;
  x *= 0xbf58476d1ce4e5b9ULL;
  x ^= x >> 27;
  x *= 0x94d049bb133111ebULL;
  x ^= x >> 31;
  return x;
}

}  // namespace midx
