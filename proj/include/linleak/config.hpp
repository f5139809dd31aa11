#pragma once

#include <charconv>
#include <cstdint>
#include <fstream>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace linleak {

/// Flat string-to-string configuration with a fixed key registry.
/// Values stay strings until a typed getter parses them, so a bad value
/// is reported against the key that carries it. Unknown keys are
/// rejected at assignment time, whether they come from a file or a
/// flag.
class Config {
 public:
  static Config defaults() {
    Config c;
    auto put = [&](const char* k, const char* v) { c.values_[k] = v; };
    put("seed", "1");
    put("mode", "fedsgd");
    put("clients", "4");
    put("local_iters", "1");
    put("local_lr", "0.1");
    put("secure_agg", "true");
    put("dp_enabled", "false");
    put("dp_clip", "1.0");
    put("dp_sigma", "0.0");
    put("ae_mode", "plain");
    put("ae_beta", "0.001");
    put("ae_epochs", "800");
    put("ae_batch", "32");
    put("ae_lr", "0.05");
    put("encoder_hidden", "64");
    put("latent_dim", "16");
    put("leak_k", "128");
    put("leak_out", "32");
    put("w2_value", "1.0");
    put("head_logit_std", "0.0");
    put("latent_scale", "1.0");
    put("head_hidden", "");
    put("classes", "4");
    put("data", "synth");
    put("synth_size", "16");
    put("aux_count", "500");
    put("target_count", "512");
    put("aux_seed", "1001");
    put("target_seed", "2002");
    put("aux_classes", "");
    put("aux_per_class_cap", "0");
    put("aux_images", "");
    put("aux_labels", "");
    put("target_images", "");
    put("target_labels", "");
    put("aux_csv", "");
    put("target_csv", "");
    put("csv_height", "0");
    put("csv_width", "0");
    put("csv_channels", "1");
    put("batch_size", "32");
    put("batch_sizes", "16,32,64,128");
    put("trials", "5");
    put("th_db", "18.0");
    put("match_policy", "greedy");
    put("out_dir", "out");
    put("ae_checkpoint", "out/surrogate.llae");
    put("model_checkpoint", "out/adversarial.llgm");
    put("zero_timing", "false");
    put("montage", "true");
    return c;
  }

  void set(const std::string& key, const std::string& value) {
    auto it = values_.find(key);
    if (it == values_.end())
      throw std::invalid_argument("config: unknown key '" + key + "'");
    it->second = value;
  }

  /// "key = value" lines, '#' starts a comment, blank lines ignored.
  void load_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("config: cannot open '" + path + "'");
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      auto hash = line.find('#');
      if (hash != std::string::npos) line.erase(hash);
      std::string trimmed = trim(line);
      if (trimmed.empty()) continue;
      auto eq = trimmed.find('=');
      if (eq == std::string::npos)
        throw std::runtime_error("config: " + path + ":" + std::to_string(lineno) +
                                 ": expected key = value");
      std::string key = trim(trimmed.substr(0, eq));
      std::string value = trim(trimmed.substr(eq + 1));
      if (key.empty())
        throw std::runtime_error("config: " + path + ":" + std::to_string(lineno) +
                                 ": empty key");
      set(key, value);
    }
  }

  /// "--key=value"; flags always beat file values because the CLI
  /// applies them after load_file.
  void apply_flag(const std::string& flag) {
    if (flag.rfind("--", 0) != 0)
      throw std::invalid_argument("config: flag '" + flag + "' must start with --");
    auto eq = flag.find('=');
    if (eq == std::string::npos || eq == 2)
      throw std::invalid_argument("config: flag '" + flag + "' must be --key=value");
    set(flag.substr(2, eq - 2), flag.substr(eq + 1));
  }

  const std::string& get_string(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end())
      throw std::invalid_argument("config: unknown key '" + key + "'");
    return it->second;
  }

  bool get_bool(const std::string& key) const {
    const std::string& v = get_string(key);
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw std::invalid_argument("config: " + key + " expects true/false, got '" + v + "'");
  }

  std::uint64_t get_u64(const std::string& key) const {
    const std::string& v = get_string(key);
    std::uint64_t out = 0;
    auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc{} || ptr != v.data() + v.size())
      throw std::invalid_argument("config: " + key + " expects an unsigned integer, got '" +
                                  v + "'");
    return out;
  }

  std::size_t get_size(const std::string& key) const {
    return static_cast<std::size_t>(get_u64(key));
  }

  double get_double(const std::string& key) const {
    const std::string& v = get_string(key);
    try {
      std::size_t pos = 0;
      double out = std::stod(v, &pos);
      if (pos != v.size()) throw std::invalid_argument("trailing characters");
      return out;
    } catch (const std::exception&) {
      throw std::invalid_argument("config: " + key + " expects a number, got '" + v + "'");
    }
  }

  /// Comma-separated unsigned integers; the empty string is an empty list.
  std::vector<std::size_t> get_size_list(const std::string& key) const {
    const std::string& v = get_string(key);
    std::vector<std::size_t> out;
    std::size_t start = 0;
    if (trim(v).empty()) return out;
    while (start <= v.size()) {
      auto comma = v.find(',', start);
      std::string piece = trim(v.substr(start, comma - start));
      std::size_t item = 0;
      auto [ptr, ec] = std::from_chars(piece.data(), piece.data() + piece.size(), item);
      if (piece.empty() || ec != std::errc{} || ptr != piece.data() + piece.size())
        throw std::invalid_argument("config: " + key + " expects a list of integers, got '" +
                                    v + "'");
      out.push_back(item);
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
    return out;
  }

  /// Sorted key order, for stable config echoes in reports.
  const std::map<std::string, std::string>& entries() const { return values_; }

 private:
  static std::string trim(const std::string& s) {
    auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
  }

  std::map<std::string, std::string> values_;
};

}  // namespace linleak
