#pragma once

#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace midx {

struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Flat key=value configuration. Every key is registered with a default and a
// one-line doc; unknown keys are hard errors.
class Config {
 public:
  struct KeySpec {
    const char* key;
    const char* def;
    const char* doc;
  };

  static const std::vector<KeySpec>& registry() {
    static const std::vector<KeySpec> keys = {
        {"data.dir", "", "dataset directory (scene layout or its root)"},
        {"data.resize_h", "0", "resize frames to this height before training (0 = native)"},
        {"data.resize_w", "0", "resize frames to this width before training (0 = native)"},
        {"train.epochs", "40", "training epochs"},
        {"train.lr_initial", "1e-4", "learning rate for epochs before train.lr_drop_epoch"},
        {"train.lr_drop_epoch", "20", "epoch at which the learning rate drops"},
        {"train.lr_final", "1e-5", "learning rate from train.lr_drop_epoch onward"},
        {"train.batch_size", "4", "triplets per optimizer step (incomplete final batch dropped)"},
        {"train.seed", "0", "seed for init, shuffling, augmentation and dropout"},
        {"train.max_steps", "0", "stop after this many optimizer steps (0 = run all epochs)"},
        {"train.snapshot_every", "10", "write a numbered checkpoint every N epochs (0 = off)"},
        {"train.grad_clip", "10", "global gradient-norm clip (0 = off)"},
        {"train.queue_depth", "1", "triplet prefetch queue depth; 1 = fully synchronous"},
        {"loss.alpha", "0.85", "SSIM weight in the photometric error"},
        {"loss.tau", "0.001", "smoothness loss weight"},
        {"loss.gamma", "0.1", "depth consistency loss weight (0.1 halls, 0.035 rooms)"},
        {"loss.scales", "4", "number of decoder scales fed into the loss"},
        {"loss.per_pixel_min", "true", "per-pixel minimum across sources (false = plain sum)"},
        {"loss.automask", "true", "mask out pixels that a raw source already explains"},
        {"model.residual_pose", "true", "enable iterative residual pose estimation"},
        {"model.depth_factorization", "true", "enable the relative-depth x global-scale split"},
        {"model.depth_consistency", "true", "enable the warped depth consistency loss"},
        {"depth.d_min", "0.1", "minimum depth of the activation range"},
        {"depth.d_max_relative", "1.0", "activation upper bound in the factorized regime"},
        {"depth.baseline_d_max", "10.0", "activation upper bound when factorization is off"},
        {"scale.d_max_bins", "10", "scale regression bins cover 0..d_max_bins scene units"},
        {"scale.attention_dim", "16", "Q/K/V projection width in the attention block"},
        {"scale.dropout", "0.5", "dropout rate between the scale head FC layers"},
        {"scale.use_attention", "true", "enable the attention block in the scale network"},
        {"scale.use_prob_regression", "true", "soft-argmax scale head (false = softplus scalar)"},
        {"pose.use_coords", "true", "append normalized coordinate channels to pose inputs"},
        {"pose.coord_init", "zeros", "init policy for widened coord kernels: zeros|random"},
        {"pose.encoding_position", "input", "where coords enter: input|encoder|both"},
        {"pose.residual_iterations", "1", "residual pose steps when model.residual_pose is on"},
        {"pose.shared_encoder", "true", "residual net shares the initial pose encoder"},
        {"pose.rotation_scale", "0.01", "multiplier on raw axis-angle outputs"},
        {"aug.hflip", "true", "random horizontal flip (applied to the whole triplet)"},
        {"aug.brightness", "0.1", "brightness jitter amplitude (same factor per triplet)"},
    };
    return keys;
  }

  static Config defaults() {
    Config c;
    for (const auto& k : registry()) c.values_[k.key] = k.def;
    return c;
  }

  void set(const std::string& key, const std::string& value) {
    if (!values_.count(key)) throw ConfigError("unknown config key: " + key);
    values_[key] = value;
  }

  const std::string& get(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) throw ConfigError("unknown config key: " + key);
    return it->second;
  }

  int get_int(const std::string& key) const {
    try {
      return std::stoi(get(key));
    } catch (const std::exception&) {
      throw ConfigError("config key " + key + " is not an integer: " + get(key));
    }
  }
  double get_double(const std::string& key) const {
    try {
      return std::stod(get(key));
    } catch (const std::exception&) {
      throw ConfigError("config key " + key + " is not a number: " + get(key));
    }
  }
  bool get_bool(const std::string& key) const {
    const std::string& v = get(key);
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw ConfigError("config key " + key + " is not a boolean: " + v);
  }

  // "key=value" lines; '#' starts a comment; errors carry line numbers
  static Config parse_text(const std::string& text, const std::string& origin) {
    Config c = defaults();
    std::istringstream ss(text);
    std::string line;
    int lineno = 0;
    while (std::getline(ss, line)) {
      ++lineno;
      const size_t hash = line.find('#');
      if (hash != std::string::npos) line = line.substr(0, hash);
      size_t a = line.find_first_not_of(" \t\r");
      if (a == std::string::npos) continue;
      size_t b = line.find_last_not_of(" \t\r");
      line = line.substr(a, b - a + 1);
      const size_t eq = line.find('=');
      if (eq == std::string::npos)
        throw ConfigError(origin + ":" + std::to_string(lineno) + ": expected key=value");
      std::string key = line.substr(0, eq);
      std::string val = line.substr(eq + 1);
      auto strip = [](std::string s) {
        size_t x = s.find_first_not_of(" \t");
        size_t y = s.find_last_not_of(" \t");
        return x == std::string::npos ? std::string() : s.substr(x, y - x + 1);
      };
      key = strip(key);
      val = strip(val);
      try {
        c.set(key, val);
      } catch (const ConfigError& e) {
        throw ConfigError(origin + ":" + std::to_string(lineno) + ": " + e.what());
      }
    }
    return c;
  }

  std::string serialize() const {
    std::string out;
    for (const auto& [k, v] : values_) out += k + "=" + v + "\n";
    return out;
  }

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace midx
