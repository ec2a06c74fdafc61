#pragma once

// On-disk frame layout shared by real and synthetic data:
//   frame-%06d.color.png  8-bit RGB
//   frame-%06d.depth.png  16-bit gray, millimeters, 65535 = invalid
//   frame-%06d.pose.txt   4x4 camera-to-world matrix, row-major

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <regex>
#include <sstream>
#include <string>
#include <vector>

#include "dscloc/geometry.hpp"
#include "dscloc/image.hpp"
#include "dscloc/io/png.hpp"
#include "dscloc/synthetic_scene.hpp"

namespace dscloc::io {

inline constexpr std::uint16_t kInvalidDepth = 65535;
inline constexpr double kOrthonormalityTolerance = 1e-3;

struct FrameRecord {
  int id = 0;
  std::filesystem::path color;
  std::filesystem::path depth;
  std::filesystem::path pose;
};

struct DatasetIndex {
  std::filesystem::path root;
  std::string split;
  std::vector<FrameRecord> frames;  // ids strictly increasing
};

struct Dataset {
  DatasetIndex index;
  std::vector<ImageBuffer> colors;
  std::vector<DepthMap<double>> depths;  // meters, 0 where invalid
  std::vector<ValidMask> depth_valid;
  std::vector<Pose<double>> poses;

  std::size_t size() const { return index.frames.size(); }
};

inline std::string frame_stem(int id) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "frame-%06d", id);
  return buf;
}

inline FrameRecord frame_record(const std::filesystem::path& dir, int id) {
  const std::string stem = frame_stem(id);
  return {id, dir / (stem + ".color.png"), dir / (stem + ".depth.png"), dir / (stem + ".pose.txt")};
}

// ---------------------------------------------------------------------------
// Poses
// ---------------------------------------------------------------------------

inline void write_pose(const std::filesystem::path& path, const Pose<double>& pose) {
  std::ofstream out(path);
  if (!out) throw IoError(path, "cannot open for writing");
  const Matrix4 T = to_matrix4(pose);
  char buf[64];
  for (int r = 0; r < 4; ++r) {
    for (int c = 0; c < 4; ++c) {
      std::snprintf(buf, sizeof(buf), "%.17g", T[4 * r + c]);
      out << buf << (c < 3 ? ' ' : '\n');
    }
  }
  if (!out) throw IoError(path, "write failed");
}

inline Pose<double> read_pose(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError(path, "cannot open for reading");
  std::vector<double> values;
  std::string token;
  while (in >> token) {
    std::size_t used = 0;
    double x = 0.0;
    try {
      x = std::stod(token, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != token.size() || !std::isfinite(x)) throw IoError(path, "malformed pose value '" + token + "'");
    values.push_back(x);
  }
  if (values.size() != 16) throw IoError(path, "pose must hold 16 values, found " + std::to_string(values.size()));
  Mat3<double> R;
  Vec3<double> t;
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) R(r, c) = values[4 * r + c];
    t[r] = values[4 * r + 3];
  }
  const double bottom[4] = {0, 0, 0, 1};
  for (int c = 0; c < 4; ++c)
    if (std::abs(values[12 + c] - bottom[c]) > kOrthonormalityTolerance)
      throw IoError(path, "pose bottom row is not (0 0 0 1)");
  const Mat3<double> RtR = R.transpose() * R;
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c)
      if (std::abs(RtR(r, c) - (r == c ? 1.0 : 0.0)) > kOrthonormalityTolerance)
        throw IoError(path, "pose rotation is not orthonormal");
  const double det = dot(Vec3<double>{R(0, 0), R(1, 0), R(2, 0)},
                         cross(Vec3<double>{R(0, 1), R(1, 1), R(2, 1)}, Vec3<double>{R(0, 2), R(1, 2), R(2, 2)}));
  if (std::abs(det - 1.0) > kOrthonormalityTolerance) throw IoError(path, "pose rotation has determinant != 1");
  return pose_from_rt(R, t);
}

// ---------------------------------------------------------------------------
// Images
// ---------------------------------------------------------------------------

inline void write_color(const std::filesystem::path& path, const ImageBuffer& img) {
  if (img.channels != 3) throw IoError(path, "color frames must have 3 channels");
  PngImage png{img.width, img.height, 3, 8, {}};
  png.samples.reserve(img.data.size());
  for (double v : img.data) png.samples.push_back(static_cast<std::uint16_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)));
  write_png(path, png);
}

inline ImageBuffer read_color(const std::filesystem::path& path) {
  const PngImage png = read_png(path);
  if (png.bit_depth != 8) throw IoError(path, "color frames must be 8-bit");
  ImageBuffer img(png.width, png.height, 3);
  if (png.channels == 3) {
    for (std::size_t i = 0; i < png.samples.size(); ++i) img.data[i] = png.samples[i] / 255.0;
  } else {
    for (std::size_t i = 0; i < png.samples.size(); ++i)
      for (int c = 0; c < 3; ++c) img.data[3 * i + c] = png.samples[i] / 255.0;
  }
  return img;
}

/// Meters to 16-bit millimeters; non-finite, non-positive or out-of-range
/// depths become the invalid sentinel.
inline void write_depth(const std::filesystem::path& path, const DepthMap<double>& depth) {
  PngImage png{depth.width, depth.height, 1, 16, {}};
  png.samples.reserve(depth.data.size());
  for (double d : depth.data) {
    const double mm = std::round(d * 1000.0);
    png.samples.push_back(std::isfinite(mm) && mm > 0.0 && mm < kInvalidDepth ? static_cast<std::uint16_t>(mm)
                                                                              : kInvalidDepth);
  }
  write_png(path, png);
}

inline std::pair<DepthMap<double>, ValidMask> read_depth(const std::filesystem::path& path) {
  const PngImage png = read_png(path);
  if (png.bit_depth != 16 || png.channels != 1) throw IoError(path, "depth frames must be 16-bit gray");
  DepthMap<double> depth(png.width, png.height, 1);
  ValidMask mask(png.width, png.height, false);
  for (std::size_t i = 0; i < png.samples.size(); ++i) {
    const std::uint16_t s = png.samples[i];
    if (s == kInvalidDepth || s == 0) continue;
    depth.data[i] = s / 1000.0;
    mask.valid[i] = 1;
  }
  return {std::move(depth), std::move(mask)};
}

// ---------------------------------------------------------------------------
// Dataset
// ---------------------------------------------------------------------------

/// Frames of `root/split` (or `root` when split is empty), ordered by id.
inline DatasetIndex index_dataset(const std::filesystem::path& root, const std::string& split = "") {
  const std::filesystem::path dir = split.empty() ? root : root / split;
  if (!std::filesystem::is_directory(dir)) throw IoError(dir, "dataset directory does not exist");
  DatasetIndex index{root, split, {}};
  static const std::regex pattern(R"(frame-(\d{6})\.color\.png)");
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    std::smatch m;
    const std::string name = entry.path().filename().string();
    if (std::regex_match(name, m, pattern)) index.frames.push_back(frame_record(dir, std::stoi(m[1].str())));
  }
  if (index.frames.empty()) throw IoError(dir, "no frame-XXXXXX.color.png files");
  std::sort(index.frames.begin(), index.frames.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
  for (const auto& f : index.frames) {
    for (const auto& p : {f.depth, f.pose})
      if (!std::filesystem::exists(p)) throw IoError(p, "missing file");
  }
  return index;
}

inline Dataset load_dataset(const std::filesystem::path& root, const std::string& split = "") {
  Dataset data;
  data.index = index_dataset(root, split);
  for (const auto& f : data.index.frames) {
    ImageBuffer color = read_color(f.color);
    auto [depth, valid] = read_depth(f.depth);
    if (!depth.same_shape(color)) throw IoError(f.depth, "depth and color dimensions differ");
    if (!data.colors.empty() && !color.same_shape(data.colors.front()))
      throw IoError(f.color, "frame dimensions differ from the first frame");
    data.colors.push_back(std::move(color));
    data.depths.push_back(std::move(depth));
    data.depth_valid.push_back(std::move(valid));
    data.poses.push_back(read_pose(f.pose));
  }
  return data;
}

/// Renders every trajectory frame and writes it in the layout above.
inline DatasetIndex generate_dataset(const PlanarScene& scene, const Trajectory& trajectory, const Intrinsics& K,
                                     int width, int height, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError(dir, "cannot create directory: " + ec.message());
  DatasetIndex index{dir, "", {}};
  for (const auto& frame : trajectory) {
    const RenderedFrame r = render_frame(scene, frame.pose, K, width, height);
    FrameRecord rec = frame_record(dir, frame.id);
    write_color(rec.color, r.color);
    write_depth(rec.depth, r.depth);
    write_pose(rec.pose, frame.pose);
    index.frames.push_back(std::move(rec));
  }
  return index;
}

}  // namespace dscloc::io
