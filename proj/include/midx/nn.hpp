#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "midx/graph.hpp"
#include "midx/tensor.hpp"

namespace midx {

// Named parameter tensors plus their optimizer state. Persistent across
// steps; leased into a Graph per forward pass through GraphBinding.
class ParamStore {
 public:
  struct Entry {
    std::string name;
    Tensor value;
    Tensor grad;
    Tensor adam_m, adam_v;
    bool grad_seen = false;  // audit: any nonzero gradient so far
  };

  int add(const std::string& name, Tensor init) {
    if (index_.count(name)) throw std::invalid_argument("duplicate parameter: " + name);
    Entry e;
    e.name = name;
    e.grad = Tensor(init.shape);
    e.adam_m = Tensor(init.shape);
    e.adam_v = Tensor(init.shape);
    e.value = std::move(init);
    entries_.push_back(std::move(e));
    index_[name] = static_cast<int>(entries_.size()) - 1;
    return static_cast<int>(entries_.size()) - 1;
  }

  Entry& at(int id) { return entries_[id]; }
  const Entry& at(int id) const { return entries_[id]; }
  int find(const std::string& name) const {
    auto it = index_.find(name);
    return it == index_.end() ? -1 : it->second;
  }
  size_t size() const { return entries_.size(); }
  std::vector<Entry>& entries() { return entries_; }
  const std::vector<Entry>& entries() const { return entries_; }

  void zero_grad() {
    for (auto& e : entries_) std::fill(e.grad.data.begin(), e.grad.data.end(), 0.f);
  }

  int64_t num_scalars() const {
    int64_t n = 0;
    for (const auto& e : entries_) n += e.value.numel();
    return n;
  }

 private:
  std::vector<Entry> entries_;
  std::unordered_map<std::string, int> index_;
};

// Binds parameters into one Graph; harvest() accumulates node gradients back.
class GraphBinding {
 public:
  GraphBinding(Graph& g, ParamStore& store) : g_(g), store_(store) {}

  Var use(int pid) {
    auto it = bound_.find(pid);
    if (it != bound_.end()) return it->second;
    Var v = g_.param(store_.at(pid).value);
    bound_[pid] = v;
    return v;
  }

  void harvest() {
    for (auto& [pid, var] : bound_) {
      auto& dst = store_.at(pid).grad.data;
      const auto& src = g_.grad(var);
      for (size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
    }
  }

  Graph& graph() { return g_; }

 private:
  Graph& g_;
  ParamStore& store_;
  std::unordered_map<int, Var> bound_;
};

// Kaiming-uniform fan-in init
inline Tensor conv_init(int co, int ci, int k, Pcg32& rng) {
  Tensor w({co, ci, k, k});
  const double bound = std::sqrt(6.0 / (static_cast<double>(ci) * k * k));
  for (auto& v : w.data) v = static_cast<float>(rng.uniform(-bound, bound));
  return w;
}

inline Tensor linear_init(int out, int in, Pcg32& rng, double gain = 1.0) {
  Tensor w({out, in});
  const double bound = gain * std::sqrt(6.0 / in);
  for (auto& v : w.data) v = static_cast<float>(rng.uniform(-bound, bound));
  return w;
}

struct Conv2d {
  int w = -1, b = -1;
  int stride = 1, pad = 1;

  Conv2d() = default;
  Conv2d(ParamStore& ps, const std::string& name, int ci, int co, int k, int stride_,
         Pcg32& rng, bool zero_init = false)
      : stride(stride_), pad(k / 2) {
    Tensor wt = zero_init ? Tensor({co, ci, k, k}) : conv_init(co, ci, k, rng);
    w = ps.add(name + ".weight", std::move(wt));
    b = ps.add(name + ".bias", Tensor({co}));
  }
  // explicit initial weights (e.g. a widened first conv)
  Conv2d(ParamStore& ps, const std::string& name, Tensor weights, int stride_)
      : stride(stride_), pad(weights.shape[2] / 2) {
    const int co = weights.shape[0];
    w = ps.add(name + ".weight", std::move(weights));
    b = ps.add(name + ".bias", Tensor({co}));
  }

  Var forward(GraphBinding& bind, Var x) const {
    return bind.graph().conv2d(x, bind.use(w), bind.use(b), stride, pad);
  }
};

struct Linear {
  int w = -1, b = -1;

  Linear() = default;
  Linear(ParamStore& ps, const std::string& name, int in, int out, Pcg32& rng,
         bool zero_init = false) {
    Tensor wt = zero_init ? Tensor({out, in}) : linear_init(out, in, rng);
    w = ps.add(name + ".weight", std::move(wt));
    b = ps.add(name + ".bias", Tensor({out}));
  }

  Var forward(GraphBinding& bind, Var x) const {
    return bind.graph().linear(x, bind.use(w), bind.use(b));
  }
};

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double clip_norm = 10.0;  // global norm; 0 disables
};

// One optimizer step over every parameter; marks the gradient audit.
// t is 1-based for bias correction.
inline void adam_step(ParamStore& ps, const AdamConfig& cfg, int64_t t) {
  double sq = 0.0;
  for (auto& e : ps.entries())
    for (float gv : e.grad.data) sq += static_cast<double>(gv) * gv;
  const double norm = std::sqrt(sq);
  const float clip =
      (cfg.clip_norm > 0 && norm > cfg.clip_norm)
          ? static_cast<float>(cfg.clip_norm / norm)
          : 1.f;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
  for (auto& e : ps.entries()) {
    bool seen = false;
    for (size_t i = 0; i < e.value.data.size(); ++i) {
      float gv = e.grad.data[i] * clip;
      if (gv != 0.f) seen = true;
      float& m = e.adam_m.data[i];
      float& v = e.adam_v.data[i];
      m = static_cast<float>(cfg.beta1 * m + (1.0 - cfg.beta1) * gv);
      v = static_cast<float>(cfg.beta2 * v + (1.0 - cfg.beta2) * gv * gv);
      const double mh = m / bc1;
      const double vh = v / bc2;
      e.value.data[i] -= static_cast<float>(cfg.lr * mh / (std::sqrt(vh) + cfg.eps));
    }
    e.grad_seen = e.grad_seen || seen;
  }
}

}  // namespace midx
