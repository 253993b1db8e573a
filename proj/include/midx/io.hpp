#pragma once

#include <algorithm>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "midx/geometry.hpp"
#include "midx/tensor.hpp"

namespace midx {

struct IoError : std::runtime_error {
  explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

struct ParseError : std::runtime_error {
  explicit ParseError(const std::string& msg) : std::runtime_error(msg) {}
};

namespace detail {

inline bool host_is_little_endian() {
  const uint16_t x = 1;
  return *reinterpret_cast<const uint8_t*>(&x) == 1;
}

// write to <path>.tmp then rename, so partial writes never shadow good files
inline void atomic_write(const std::string& path, const std::string& bytes) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary);
    if (!f) throw IoError("cannot open for write: " + tmp);
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw IoError("write failed: " + tmp);
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("rename failed: " + path + " (" + ec.message() + ")");
}

inline std::string read_all(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open: " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

}  // namespace detail

// ---- PPM (binary P6, maxval 255) ----
// Image tensors are [3,H,W] floats in [0,1].

inline void write_ppm(const std::string& path, const Tensor& img) {
  int H = img.shape[1], W = img.shape[2];
  std::string out = "P6\n" + std::to_string(W) + " " + std::to_string(H) + "\n255\n";
  out.reserve(out.size() + static_cast<size_t>(H) * W * 3);
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x)
      for (int c = 0; c < 3; ++c) {
        float v = std::min(std::max(img.at(c, y, x), 0.f), 1.f);
        out.push_back(static_cast<char>(static_cast<int>(v * 255.f + 0.5f)));
      }
  detail::atomic_write(path, out);
}

inline Tensor read_ppm(const std::string& path) {
  std::string bytes = detail::read_all(path);
  size_t pos = 0;
  auto token = [&]() -> std::string {
    // skip whitespace and comment lines
    while (pos < bytes.size()) {
      if (std::isspace(static_cast<unsigned char>(bytes[pos]))) { ++pos; continue; }
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
        continue;
      }
      break;
    }
    size_t start = pos;
    while (pos < bytes.size() && !std::isspace(static_cast<unsigned char>(bytes[pos]))) ++pos;
    if (start == pos)
      throw ParseError(path + ": truncated header at byte offset " + std::to_string(start));
    return bytes.substr(start, pos - start);
  };
  if (token() != "P6") throw ParseError(path + ": not a binary P6 file (byte offset 0)");
  int W = 0, H = 0, maxv = 0;
  try {
    W = std::stoi(token());
    H = std::stoi(token());
    maxv = std::stoi(token());
  } catch (const std::exception&) {
    throw ParseError(path + ": bad header value at byte offset " + std::to_string(pos));
  }
  if (W <= 0 || H <= 0 || maxv != 255)
    throw ParseError(path + ": unsupported header (need maxval 255) at byte offset " +
                     std::to_string(pos));
  ++pos;  // single whitespace after maxval
  const size_t need = static_cast<size_t>(W) * H * 3;
  if (bytes.size() - pos < need)
    throw ParseError(path + ": pixel data truncated at byte offset " +
                     std::to_string(bytes.size()));
  Tensor img({3, H, W});
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x)
      for (int c = 0; c < 3; ++c)
        img.at(c, y, x) =
            static_cast<uint8_t>(bytes[pos + (static_cast<size_t>(y) * W + x) * 3 + c]) / 255.f;
  return img;
}

// ---- PFM (grayscale "Pf", float32) ----
// The scale line's sign encodes byte order: negative = little endian.
// Rows are stored bottom-up per the format.

inline void write_pfm(const std::string& path, const Tensor& depth) {
  int H = depth.shape[1], W = depth.shape[2];
  const bool le = detail::host_is_little_endian();
  std::string out = "Pf\n" + std::to_string(W) + " " + std::to_string(H) + "\n" +
                    (le ? "-1.0" : "1.0") + "\n";
  out.reserve(out.size() + static_cast<size_t>(H) * W * 4);
  for (int y = H - 1; y >= 0; --y)
    for (int x = 0; x < W; ++x) {
      float v = depth.at(0, y, x);
      char b[4];
      std::memcpy(b, &v, 4);
      out.append(b, 4);
    }
  detail::atomic_write(path, out);
}

inline Tensor read_pfm(const std::string& path) {
  std::string bytes = detail::read_all(path);
  size_t pos = 0;
  auto line = [&]() -> std::string {
    size_t start = pos;
    while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
    if (pos >= bytes.size())
      throw ParseError(path + ": truncated header at byte offset " + std::to_string(start));
    return bytes.substr(start, pos++ - start);
  };
  std::string magic = line();
  if (magic != "Pf") throw ParseError(path + ": not a grayscale PFM (byte offset 0)");
  int W = 0, H = 0;
  {
    std::istringstream ss(line());
    if (!(ss >> W >> H) || W <= 0 || H <= 0)
      throw ParseError(path + ": bad dimensions line at byte offset " + std::to_string(pos));
  }
  double scale = 0;
  try {
    scale = std::stod(line());
  } catch (const std::exception&) {
    throw ParseError(path + ": bad scale line at byte offset " + std::to_string(pos));
  }
  const bool file_le = scale < 0;
  const size_t need = static_cast<size_t>(W) * H * 4;
  if (bytes.size() - pos < need)
    throw ParseError(path + ": pixel data truncated at byte offset " +
                     std::to_string(bytes.size()));
  Tensor depth({1, H, W});
  const bool swap = file_le != detail::host_is_little_endian();
  for (int y = H - 1; y >= 0; --y)
    for (int x = 0; x < W; ++x) {
      char b[4];
      std::memcpy(b, &bytes[pos], 4);
      pos += 4;
      if (swap) {
        std::swap(b[0], b[3]);
        std::swap(b[1], b[2]);
      }
      float v;
      std::memcpy(&v, b, 4);
      depth.at(0, y, x) = v;
    }
  return depth;
}

// ---- intrinsics.txt: "fx fy cx cy" ----

inline void write_intrinsics(const std::string& path, const Intrinsics& K) {
  char buf[128];
  std::snprintf(buf, sizeof(buf), "%.9g %.9g %.9g %.9g\n", K.fx, K.fy, K.cx, K.cy);
  detail::atomic_write(path, buf);
}

inline Intrinsics read_intrinsics(const std::string& path, int width, int height) {
  std::ifstream f(path);
  if (!f) throw IoError("MissingIntrinsics: " + path);
  double fx, fy, cx, cy;
  if (!(f >> fx >> fy >> cx >> cy))
    throw ParseError(path + ": expected 4 numbers (fx fy cx cy)");
  return Intrinsics(fx, fy, cx, cy, width, height);
}

// ---- poses.txt: one row-major 3x4 world-to-camera matrix per line ----

inline void write_poses(const std::string& path, const std::vector<Pose>& poses) {
  std::ostringstream out;
  out.precision(12);
  for (const Pose& p : poses) {
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 4; ++j) {
        if (i + j) out << " ";
        out << (j < 3 ? p.R(i, j) : p.t(i));
      }
    out << "\n";
  }
  detail::atomic_write(path, out.str());
}

inline std::vector<Pose> read_poses(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open: " + path);
  std::vector<Pose> out;
  std::string ln;
  int lineno = 0;
  while (std::getline(f, ln)) {
    ++lineno;
    if (ln.empty()) continue;
    std::istringstream ss(ln);
    Pose p;
    double v[12];
    for (int i = 0; i < 12; ++i)
      if (!(ss >> v[i]))
        throw ParseError(path + ":" + std::to_string(lineno) + ": expected 12 numbers");
    for (int i = 0; i < 3; ++i) {
      for (int j = 0; j < 3; ++j) p.R(i, j) = v[i * 4 + j];
      p.t(i) = v[i * 4 + 3];
    }
    out.push_back(p);
  }
  return out;
}

// ---- split.txt: lines "train|val|test <frame id>" ----

struct Split {
  std::vector<int> train, val, test;
};

inline void write_split(const std::string& path, const Split& s) {
  std::ostringstream out;
  for (int id : s.train) out << "train " << id << "\n";
  for (int id : s.val) out << "val " << id << "\n";
  for (int id : s.test) out << "test " << id << "\n";
  detail::atomic_write(path, out.str());
}

inline Split read_split(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open: " + path);
  Split s;
  std::string kind;
  int id;
  int lineno = 0;
  while (f >> kind >> id) {
    ++lineno;
    if (kind == "train")
      s.train.push_back(id);
    else if (kind == "val")
      s.val.push_back(id);
    else if (kind == "test")
      s.test.push_back(id);
    else
      throw ParseError(path + ":" + std::to_string(lineno) + ": unknown split '" + kind + "'");
  }
  return s;
}

// ---- depth preview with a fixed turbo-style ramp ----

inline Tensor depth_preview(const Tensor& depth) {
  // 7-stop approximation of the turbo colormap, linearly interpolated
  static const float stops[7][3] = {
      {0.19f, 0.07f, 0.23f}, {0.27f, 0.35f, 0.80f}, {0.11f, 0.67f, 0.85f},
      {0.23f, 0.90f, 0.47f}, {0.83f, 0.88f, 0.23f}, {0.98f, 0.56f, 0.15f},
      {0.73f, 0.15f, 0.08f}};
  int H = depth.shape[1], W = depth.shape[2];
  float lo = depth.data[0], hi = depth.data[0];
  for (float v : depth.data) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  const float span = std::max(hi - lo, 1e-9f);
  Tensor out({3, H, W});
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      float t = (depth.at(0, y, x) - lo) / span * 6.f;
      int i = std::min(static_cast<int>(t), 5);
      float w = t - i;
      for (int c = 0; c < 3; ++c)
        out.at(c, y, x) = (1 - w) * stops[i][c] + w * stops[i + 1][c];
    }
  return out;
}

}  // namespace midx
