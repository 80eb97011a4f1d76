#pragma once

// On-disk clip: a directory of per-frame tensor containers (f32, C x H x W,
// named 00000.ftfd, 00001.ftfd, ...) plus a mono WAV file.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include "ftfd/io/container.hpp"
#include "ftfd/io/manifest.hpp"
#include "ftfd/io/wav.hpp"
#include "ftfd/signal/prep.hpp"

namespace ftfd::io {

struct Clip {
  std::string id;
  std::vector<signal::Image> frames;
  Audio audio;
  int label = 0;
  double fps = 25.0;
};

inline std::string frame_file_name(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%05zu.ftfd", i);
  return buf;
}

inline void save_frames(const std::filesystem::path& dir, const std::vector<signal::Image>& frames) {
  std::filesystem::create_directories(dir);
  for (std::size_t i = 0; i < frames.size(); ++i) {
    const auto& f = frames[i];
    write_tensor((dir / frame_file_name(i)).string(), Tensor<float>::from({f.channels, f.height, f.width}, f.pixels));
  }
}

inline std::vector<signal::Image> load_frames(const std::filesystem::path& dir) {
  std::vector<std::filesystem::path> files;
  if (!std::filesystem::is_directory(dir)) throw IoError("frames directory not found: " + dir.string());
  for (const auto& e : std::filesystem::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".ftfd") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  if (files.empty()) throw IoError("no frame files in " + dir.string());
  std::vector<signal::Image> frames;
  for (const auto& p : files) {
    const auto t = read_tensor<float>(p.string());
    if (t.rank() != 3) throw FormatError(FormatError::Kind::malformed, p.string() + ": frame must be C x H x W");
    signal::Image img{t.dim(0), t.dim(1), t.dim(2), t.values()};
    if (!frames.empty() && (img.channels != frames[0].channels || img.height != frames[0].height || img.width != frames[0].width)) {
      throw FormatError(FormatError::Kind::malformed, p.string() + ": frame shape differs from the first frame");
    }
    for (float& v : img.pixels) {
      if (!std::isfinite(v)) throw FormatError(FormatError::Kind::malformed, p.string() + ": non-finite pixel");
    }
    frames.push_back(std::move(img));
  }
  return frames;
}

inline Clip load_clip(const ClipRecord& r, double fps = 25.0) {
  return {r.id, load_frames(r.frames_dir), read_wav(r.audio_path.string()), r.label, fps};
}

}  // namespace ftfd::io
