#pragma once

// Clip manifest: one TAB-separated record per line,
//   clip_id  frames_dir  audio.wav  label(0|1)  split(train|val|test)
// Blank lines and lines starting with '#' are ignored. Paths are relative to
// the manifest's directory unless absolute.

#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "ftfd/io/container.hpp"

namespace ftfd::io {

enum class Split { train, val, test };

inline const char* split_name(Split s) { return s == Split::train ? "train" : s == Split::val ? "val" : "test"; }

struct ClipRecord {
  std::string id;
  std::filesystem::path frames_dir;
  std::filesystem::path audio_path;
  int label = 0;  // 1 = fake
  Split split = Split::train;
};

struct Manifest {
  std::vector<ClipRecord> clips;

  std::vector<ClipRecord> of(Split s) const {
    std::vector<ClipRecord> out;
    for (const auto& c : clips)
      if (c.split == s) out.push_back(c);
    return out;
  }
};

class ManifestError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline Manifest parse_manifest(std::istream& in, const std::filesystem::path& base, const std::string& origin,
                               bool check_files = true) {
  Manifest m;
  std::set<std::string> seen;
  std::string line;
  for (std::size_t line_no = 1; std::getline(in, line); ++line_no) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    auto fail = [&](const std::string& msg) {
      throw ManifestError(origin + ":" + std::to_string(line_no) + ": " + msg);
    };
    std::vector<std::string> f;
    std::stringstream ss(line);
    for (std::string field; std::getline(ss, field, '\t');) f.push_back(field);
    if (f.size() != 5) fail("expected 5 TAB-separated fields, got " + std::to_string(f.size()));
    ClipRecord r;
    r.id = f[0];
    if (r.id.empty()) fail("empty clip_id");
    if (!seen.insert(r.id).second) fail("duplicate clip_id '" + r.id + "'");
    auto resolve = [&](const std::string& p) {
      std::filesystem::path path(p);
      return path.is_absolute() ? path : base / path;
    };
    r.frames_dir = resolve(f[1]);
    r.audio_path = resolve(f[2]);
    if (f[3] == "0") r.label = 0;
    else if (f[3] == "1") r.label = 1;
    else fail("label must be 0 or 1, got '" + f[3] + "'");
    if (f[4] == "train") r.split = Split::train;
    else if (f[4] == "val") r.split = Split::val;
    else if (f[4] == "test") r.split = Split::test;
    else fail("split must be train, val or test, got '" + f[4] + "'");
    if (check_files) {
      if (!std::filesystem::is_directory(r.frames_dir)) fail("frames directory not found: " + r.frames_dir.string());
      if (!std::filesystem::is_regular_file(r.audio_path)) fail("audio file not found: " + r.audio_path.string());
    }
    m.clips.push_back(std::move(r));
  }
  return m;
}

inline Manifest load_manifest(const std::string& path, bool check_files = true) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest " + path);
  return parse_manifest(in, std::filesystem::path(path).parent_path(), path, check_files);
}

/// Writes records with paths relative to the manifest directory where possible.
inline void write_manifest(const std::string& path, const Manifest& m) {
  const auto base = std::filesystem::path(path).parent_path();
  std::ostringstream out;
  auto rel = [&](const std::filesystem::path& p) {
    auto r = p.lexically_relative(base.empty() ? "." : base);
    return (r.empty() || p.is_relative()) ? p.string() : r.string();
  };
  for (const auto& c : m.clips) {
    out << c.id << '\t' << rel(c.frames_dir) << '\t' << rel(c.audio_path) << '\t' << c.label << '\t' << split_name(c.split) << '\n';
  }
  write_file(path, out.str());
}

}  // namespace ftfd::io
