#pragma once

// Versioned binary checkpoint, little-endian:
//   magic "DSCLOCK\0" | u32 version | u64 config length | config text |
//   u64 FNV-1a(config text) | u32 frames | u32 image w | u32 image h |
//   u32 grid w | u32 grid h | u64 value count | f64 values... |
//   u64 FNV-1a(value bytes)

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <stdexcept>
#include <string>
#include <vector>

#include "dscloc/direct_fit.hpp"
#include "dscloc/io/config.hpp"
#include "dscloc/io/png.hpp"
#include "dscloc/optim.hpp"

namespace dscloc::io {

static_assert(std::endian::native == std::endian::little, "checkpoint format assumes a little-endian host");

inline constexpr char kCheckpointMagic[8] = {'D', 'S', 'C', 'L', 'O', 'C', 'K', '\0'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

class CheckpointError : public IoError {
 public:
  using IoError::IoError;
};

inline std::uint64_t fnv1a(const void* data, std::size_t n, std::uint64_t h = 0xcbf29ce484222325ULL) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

struct Checkpoint {
  RunConfig config;
  ParamStore params;
};

namespace detail {

struct CheckpointShape {
  std::uint32_t frames, width, height, grid_width, grid_height;
  bool operator==(const CheckpointShape&) const = default;
};

inline CheckpointShape shape_of(const RunConfig& config, std::size_t frames) {
  const FrameLayout layout = config.layout();
  return {static_cast<std::uint32_t>(frames), static_cast<std::uint32_t>(layout.width),
          static_cast<std::uint32_t>(layout.height), static_cast<std::uint32_t>(layout.grid_width()),
          static_cast<std::uint32_t>(layout.grid_height())};
}

class Reader {
 public:
  Reader(const std::filesystem::path& path, std::vector<char> bytes) : path_(path), bytes_(std::move(bytes)) {}

  template <class T>
  T pod() {
    T x;
    raw(&x, sizeof(T));
    return x;
  }
  void raw(void* out, std::size_t n) {
    if (n > bytes_.size() - pos_) throw CheckpointError(path_, "truncated checkpoint");
    std::memcpy(out, bytes_.data() + pos_, n);
    pos_ += n;
  }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  std::filesystem::path path_;
  std::vector<char> bytes_;
  std::size_t pos_ = 0;
};

template <class T>
void put(std::string& out, const T& x) {
  out.append(reinterpret_cast<const char*>(&x), sizeof(T));
}

}  // namespace detail

inline void checkpoint_save(const std::filesystem::path& path, const ParamStore& params, const RunConfig& config) {
  const FrameLayout layout = config.layout();
  if (params.size() % layout.frame_size() != 0)
    throw CheckpointError(path, "parameter count does not match the configured frame layout");
  const std::size_t frames = params.size() / layout.frame_size();
  const std::string text = to_text(config);
  std::string out(kCheckpointMagic, sizeof(kCheckpointMagic));
  detail::put(out, kCheckpointVersion);
  detail::put(out, static_cast<std::uint64_t>(text.size()));
  out += text;
  detail::put(out, fnv1a(text.data(), text.size()));
  const auto shape = detail::shape_of(config, frames);
  detail::put(out, shape);
  detail::put(out, static_cast<std::uint64_t>(params.size()));
  const std::size_t nbytes = params.size() * sizeof(double);
  out.append(reinterpret_cast<const char*>(params.values().data()), nbytes);
  detail::put(out, fnv1a(params.values().data(), nbytes));
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError(path, "cannot open for writing");
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw IoError(path, "write failed");
}

inline Checkpoint checkpoint_load(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError(path, "cannot open for reading");
  detail::Reader in(path, std::vector<char>(std::istreambuf_iterator<char>(f), {}));
  char magic[8];
  in.raw(magic, sizeof(magic));
  if (std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0) throw CheckpointError(path, "not a checkpoint file");
  const auto version = in.pod<std::uint32_t>();
  if (version != kCheckpointVersion)
    throw CheckpointError(path, "unsupported checkpoint version " + std::to_string(version));
  const auto text_size = in.pod<std::uint64_t>();
  if (text_size > in.remaining()) throw CheckpointError(path, "truncated checkpoint");
  std::string text(text_size, '\0');
  in.raw(text.data(), text.size());
  if (in.pod<std::uint64_t>() != fnv1a(text.data(), text.size()))
    throw CheckpointError(path, "config hash mismatch");
  Checkpoint ck;
  try {
    ck.config = parse_config(text);
    ck.config.validate();
  } catch (const std::exception& e) {
    throw CheckpointError(path, std::string("embedded config rejected: ") + e.what());
  }
  const auto shape = in.pod<detail::CheckpointShape>();
  const auto expected = detail::shape_of(ck.config, shape.frames);
  if (!(shape == expected)) throw CheckpointError(path, "grid shapes do not match the embedded config");
  const auto count = in.pod<std::uint64_t>();
  const FrameLayout layout = ck.config.layout();
  if (count != std::uint64_t(shape.frames) * layout.frame_size())
    throw CheckpointError(path, "parameter count does not match grid shapes");
  if (count > (in.remaining() / sizeof(double))) throw CheckpointError(path, "truncated checkpoint");
  ck.params = make_param_store(shape.frames, layout);
  in.raw(ck.params.values().data(), count * sizeof(double));
  if (in.pod<std::uint64_t>() != fnv1a(ck.params.values().data(), count * sizeof(double)))
    throw CheckpointError(path, "parameter hash mismatch");
  if (in.remaining() != 0) throw CheckpointError(path, "trailing bytes after checkpoint");
  return ck;
}

}  // namespace dscloc::io
