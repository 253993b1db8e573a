#pragma once

#include <cstring>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "midx/io.hpp"
#include "midx/tensor.hpp"

namespace midx {

struct CheckpointError : std::runtime_error {
  explicit CheckpointError(const std::string& msg) : std::runtime_error(msg) {}
};
struct CheckpointVersionError : CheckpointError {
  explicit CheckpointVersionError(const std::string& msg) : CheckpointError(msg) {}
};

// Single binary container: magic "MIDX1", a text manifest (config plus
// trainer state as key=value lines) and named float32 tensors.
struct Checkpoint {
  std::map<std::string, std::string> manifest;
  std::vector<std::pair<std::string, Tensor>> tensors;  // ordered

  static constexpr const char* kMagic = "MIDX1";

  const Tensor* find(const std::string& name) const {
    for (const auto& [n, t] : tensors)
      if (n == name) return &t;
    return nullptr;
  }

  std::string manifest_text() const {
    std::string out;
    for (const auto& [k, v] : manifest) out += k + "=" + v + "\n";
    return out;
  }

  void save(const std::string& path) const {
    std::string bytes;
    bytes.append(kMagic, 5);
    auto put_u32 = [&](uint32_t v) { bytes.append(reinterpret_cast<const char*>(&v), 4); };
    auto put_u64 = [&](uint64_t v) { bytes.append(reinterpret_cast<const char*>(&v), 8); };
    put_u32(1);  // container version
    const std::string mtext = manifest_text();
    put_u64(mtext.size());
    bytes += mtext;
    put_u32(static_cast<uint32_t>(tensors.size()));
    for (const auto& [name, t] : tensors) {
      put_u32(static_cast<uint32_t>(name.size()));
      bytes += name;
      put_u32(static_cast<uint32_t>(t.shape.size()));
      for (int d : t.shape) put_u32(static_cast<uint32_t>(d));
      bytes.append(reinterpret_cast<const char*>(t.data.data()), t.data.size() * 4);
    }
    detail::atomic_write(path, bytes);
  }

  static Checkpoint load(const std::string& path) {
    const std::string bytes = detail::read_all(path);
    size_t pos = 0;
    auto need = [&](size_t n) {
      if (bytes.size() - pos < n)
        throw CheckpointError(path + ": truncated at byte offset " + std::to_string(pos));
    };
    need(5);
    if (bytes.compare(0, 5, kMagic) != 0)
      throw CheckpointVersionError(path + ": bad magic (expected " + kMagic + ")");
    pos = 5;
    auto get_u32 = [&]() {
      need(4);
      uint32_t v;
      std::memcpy(&v, &bytes[pos], 4);
      pos += 4;
      return v;
    };
    auto get_u64 = [&]() {
      need(8);
      uint64_t v;
      std::memcpy(&v, &bytes[pos], 8);
      pos += 8;
      return v;
    };
    const uint32_t version = get_u32();
    if (version != 1)
      throw CheckpointVersionError(path + ": unsupported container version " +
                                   std::to_string(version));
    Checkpoint ck;
    const uint64_t mlen = get_u64();
    need(mlen);
    std::istringstream ms(bytes.substr(pos, mlen));
    pos += mlen;
    std::string line;
    while (std::getline(ms, line)) {
      const size_t eq = line.find('=');
      if (eq != std::string::npos)
        ck.manifest[line.substr(0, eq)] = line.substr(eq + 1);
    }
    const uint32_t count = get_u32();
    for (uint32_t i = 0; i < count; ++i) {
      const uint32_t nlen = get_u32();
      need(nlen);
      std::string name = bytes.substr(pos, nlen);
      pos += nlen;
      const uint32_t nd = get_u32();
      std::vector<int> shape(nd);
      for (uint32_t d = 0; d < nd; ++d) shape[d] = static_cast<int>(get_u32());
      const size_t numel = static_cast<size_t>(Tensor::numel_of(shape));
      need(numel * 4);
      Tensor t(shape);
      std::memcpy(t.data.data(), &bytes[pos], numel * 4);
      pos += numel * 4;
      ck.tensors.emplace_back(std::move(name), std::move(t));
    }
    return ck;
  }
};

}  // namespace midx
