#pragma once

// Flat `key = value` run configuration. Units are part of the key names.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "dscloc/direct_fit.hpp"
#include "dscloc/geometry.hpp"
#include "dscloc/io/png.hpp"

namespace dscloc::io {

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct EvalOptions {
  double min_depth_m = 0.1;
  double max_depth_m = 10.0;
  AggregateMode pose_mode = AggregateMode::kMedian;
};

struct RunConfig {
  FitConfig fit;
  std::string data_dir;
  std::string split;
  std::string output_dir;
  int image_width_px = 80;
  int image_height_px = 60;
  int pooling_factor_px = 8;
  std::optional<Intrinsics> intrinsics;  // required; never guessed
  EvalOptions eval;

  FrameLayout layout() const { return {image_width_px, image_height_px, pooling_factor_px}; }

  void validate() const {
    try {
      fit.validate();
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
    if (image_width_px < 2 || image_height_px < 2) throw ConfigError("image size must be at least 2x2");
    if (pooling_factor_px < 1) throw ConfigError("pooling_factor_px must be positive");
    if (!intrinsics) throw ConfigError("intrinsics (fx_px, fy_px, cx_px, cy_px) are required");
    try {
      intrinsics->validate();
    } catch (const std::exception& e) {
      throw ConfigError(e.what());
    }
    if (!(eval.min_depth_m > 0.0 && eval.max_depth_m > eval.min_depth_m))
      throw ConfigError("eval depth range must satisfy 0 < min < max");
  }
};

namespace detail {

inline std::string format_double(double x) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

inline double parse_double(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  double x = 0.0;
  try {
    x = std::stod(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != v.size() || v.empty()) throw ConfigError("'" + key + "': expected a number, got '" + v + "'");
  return x;
}

inline long long parse_int(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  long long x = 0;
  try {
    x = std::stoll(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != v.size() || v.empty()) throw ConfigError("'" + key + "': expected an integer, got '" + v + "'");
  return x;
}

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

// Missing components stay NaN so validation rejects a partial entry.
inline Intrinsics unset_intrinsics() {
  const double nan = std::numeric_limits<double>::quiet_NaN();
  return {nan, nan, nan, nan};
}

struct Field {
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&)> set;
};

// Ordered: serialization follows this order.
inline const std::vector<std::pair<std::string, Field>>& fields() {
  using S = const std::string&;
  static const std::vector<std::pair<std::string, Field>> table = {
      {"data_dir", {[](const RunConfig& c) { return c.data_dir; }, [](RunConfig& c, S v) { c.data_dir = v; }}},
      {"split", {[](const RunConfig& c) { return c.split; }, [](RunConfig& c, S v) { c.split = v; }}},
      {"output_dir", {[](const RunConfig& c) { return c.output_dir; }, [](RunConfig& c, S v) { c.output_dir = v; }}},
      {"image_width_px",
       {[](const RunConfig& c) { return std::to_string(c.image_width_px); },
        [](RunConfig& c, S v) { c.image_width_px = static_cast<int>(parse_int("image_width_px", v)); }}},
      {"image_height_px",
       {[](const RunConfig& c) { return std::to_string(c.image_height_px); },
        [](RunConfig& c, S v) { c.image_height_px = static_cast<int>(parse_int("image_height_px", v)); }}},
      {"pooling_factor_px",
       {[](const RunConfig& c) { return std::to_string(c.pooling_factor_px); },
        [](RunConfig& c, S v) { c.pooling_factor_px = static_cast<int>(parse_int("pooling_factor_px", v)); }}},
      {"fx_px",
       {[](const RunConfig& c) { return c.intrinsics ? format_double(c.intrinsics->fx) : ""; },
        [](RunConfig& c, S v) { c.intrinsics.emplace(c.intrinsics.value_or(detail::unset_intrinsics())).fx = parse_double("fx_px", v); }}},
      {"fy_px",
       {[](const RunConfig& c) { return c.intrinsics ? format_double(c.intrinsics->fy) : ""; },
        [](RunConfig& c, S v) { c.intrinsics.emplace(c.intrinsics.value_or(detail::unset_intrinsics())).fy = parse_double("fy_px", v); }}},
      {"cx_px",
       {[](const RunConfig& c) { return c.intrinsics ? format_double(c.intrinsics->cx) : ""; },
        [](RunConfig& c, S v) { c.intrinsics.emplace(c.intrinsics.value_or(detail::unset_intrinsics())).cx = parse_double("cx_px", v); }}},
      {"cy_px",
       {[](const RunConfig& c) { return c.intrinsics ? format_double(c.intrinsics->cy) : ""; },
        [](RunConfig& c, S v) { c.intrinsics.emplace(c.intrinsics.value_or(detail::unset_intrinsics())).cy = parse_double("cy_px", v); }}},
      {"learning_rate",
       {[](const RunConfig& c) { return format_double(c.fit.learning_rate); },
        [](RunConfig& c, S v) { c.fit.learning_rate = parse_double("learning_rate", v); }}},
      {"epochs",
       {[](const RunConfig& c) { return std::to_string(c.fit.epochs); },
        [](RunConfig& c, S v) { c.fit.epochs = static_cast<int>(parse_int("epochs", v)); }}},
      {"nearby_window_frames",
       {[](const RunConfig& c) { return std::to_string(c.fit.nearby_window_frames); },
        [](RunConfig& c, S v) { c.fit.nearby_window_frames = static_cast<int>(parse_int("nearby_window_frames", v)); }}},
      {"distant_fraction",
       {[](const RunConfig& c) { return format_double(c.fit.distant_fraction); },
        [](RunConfig& c, S v) { c.fit.distant_fraction = parse_double("distant_fraction", v); }}},
      {"distant_activation_epoch",
       {[](const RunConfig& c) { return std::to_string(c.fit.distant_activation_epoch); },
        [](RunConfig& c, S v) {
          c.fit.distant_activation_epoch = static_cast<int>(parse_int("distant_activation_epoch", v));
        }}},
      {"loop_size_frames",
       {[](const RunConfig& c) { return std::to_string(c.fit.loop_size); },
        [](RunConfig& c, S v) { c.fit.loop_size = static_cast<int>(parse_int("loop_size_frames", v)); }}},
      {"alpha",
       {[](const RunConfig& c) { return format_double(c.fit.weights.alpha); },
        [](RunConfig& c, S v) { c.fit.weights.alpha = parse_double("alpha", v); }}},
      {"w_s",
       {[](const RunConfig& c) { return format_double(c.fit.weights.w_s); },
        [](RunConfig& c, S v) { c.fit.weights.w_s = parse_double("w_s", v); }}},
      {"w_c",
       {[](const RunConfig& c) { return format_double(c.fit.weights.w_c); },
        [](RunConfig& c, S v) { c.fit.weights.w_c = parse_double("w_c", v); }}},
      {"seed",
       {[](const RunConfig& c) { return std::to_string(c.fit.seed); },
        [](RunConfig& c, S v) {
          const long long s = parse_int("seed", v);
          if (s < 0) throw ConfigError("'seed' must be non-negative");
          c.fit.seed = static_cast<std::uint64_t>(s);
        }}},
      {"init_position_noise_m",
       {[](const RunConfig& c) { return format_double(c.fit.init_position_noise); },
        [](RunConfig& c, S v) { c.fit.init_position_noise = parse_double("init_position_noise_m", v); }}},
      {"init_mode",
       {[](const RunConfig& c) { return std::string(c.fit.init_mode == InitMode::kGroundTruth ? "ground_truth" : "random"); },
        [](RunConfig& c, S v) {
          if (v == "random") c.fit.init_mode = InitMode::kRandom;
          else if (v == "ground_truth") c.fit.init_mode = InitMode::kGroundTruth;
          else throw ConfigError("'init_mode' must be random or ground_truth");
        }}},
      {"eval_min_depth_m",
       {[](const RunConfig& c) { return format_double(c.eval.min_depth_m); },
        [](RunConfig& c, S v) { c.eval.min_depth_m = parse_double("eval_min_depth_m", v); }}},
      {"eval_max_depth_m",
       {[](const RunConfig& c) { return format_double(c.eval.max_depth_m); },
        [](RunConfig& c, S v) { c.eval.max_depth_m = parse_double("eval_max_depth_m", v); }}},
      {"eval_pose_mode",
       {[](const RunConfig& c) { return std::string(c.eval.pose_mode == AggregateMode::kMean ? "mean" : "median"); },
        [](RunConfig& c, S v) {
          if (v == "mean") c.eval.pose_mode = AggregateMode::kMean;
          else if (v == "median") c.eval.pose_mode = AggregateMode::kMedian;
          else throw ConfigError("'eval_pose_mode' must be mean or median");
        }}},
  };
  return table;
}

}  // namespace detail

/// Applies `key = value` lines on top of `base`. Blank lines and lines starting
/// with '#' are ignored; unknown keys and repeated keys are errors.
inline RunConfig parse_config(const std::string& text, RunConfig base = {}) {
  std::map<std::string, const detail::Field*> lookup;
  for (const auto& [k, f] : detail::fields()) lookup[k] = &f;
  std::istringstream in(text);
  std::string line;
  std::map<std::string, int> seen;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = detail::trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
    const std::string key = detail::trim(t.substr(0, eq));
    const std::string value = detail::trim(t.substr(eq + 1));
    auto it = lookup.find(key);
    if (it == lookup.end()) throw ConfigError("line " + std::to_string(lineno) + ": unknown key '" + key + "'");
    if (seen[key]++) throw ConfigError("line " + std::to_string(lineno) + ": duplicate key '" + key + "'");
    it->second->set(base, value);
  }
  return base;
}

/// Canonical text: every key, fixed order, round-trip exact numbers.
inline std::string to_text(const RunConfig& config) {
  std::string out;
  for (const auto& [k, f] : detail::fields()) {
    const std::string v = f.get(config);
    if (v.empty() && (k == "fx_px" || k == "fy_px" || k == "cx_px" || k == "cy_px")) continue;
    out += k + " = " + v + "\n";
  }
  return out;
}

inline RunConfig load_config(const std::filesystem::path& path, RunConfig base = {}) {
  std::ifstream in(path);
  if (!in) throw IoError(path, "cannot open config");
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return parse_config(ss.str(), std::move(base));
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

inline void save_config(const std::filesystem::path& path, const RunConfig& config) {
  std::ofstream out(path);
  if (!out) throw IoError(path, "cannot write config");
  out << to_text(config);
  if (!out) throw IoError(path, "write failed");
}

}  // namespace dscloc::io
