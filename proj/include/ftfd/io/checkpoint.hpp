#pragma once

// Checkpoint archive:
//   "FTCK" | u8 version=1 | u64 config digest | u64 step | u32 config length | config text
//   | u32 entry count | entries sorted by name:
//       u16 name length | name | u64 blob length | tensor container blob
//   | u64 checksum
// The digest is 64-bit FNV-1a over the config text; the trailing checksum is
// FNV-1a over every preceding byte, so any single corrupted byte is caught.

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>

#include "ftfd/io/container.hpp"

namespace ftfd::io {

inline std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

template <typename T>
struct Checkpoint {
  std::string config;  // serialized model/training config
  std::uint64_t step = 0;
  std::map<std::string, Tensor<T>> tensors;
};

template <typename T>
std::string encode_checkpoint(const Checkpoint<T>& c) {
  std::string out = "FTCK";
  out.push_back(1);
  le::put<std::uint64_t>(out, fnv1a64(c.config));
  le::put<std::uint64_t>(out, c.step);
  le::put<std::uint32_t>(out, static_cast<std::uint32_t>(c.config.size()));
  out += c.config;
  le::put<std::uint32_t>(out, static_cast<std::uint32_t>(c.tensors.size()));
  for (const auto& [name, t] : c.tensors) {
    if (name.size() > 0xFFFF) throw std::invalid_argument("checkpoint: tensor name too long");
    le::put<std::uint16_t>(out, static_cast<std::uint16_t>(name.size()));
    out += name;
    const std::string blob = encode_tensor(t);
    le::put<std::uint64_t>(out, blob.size());
    out += blob;
  }
  le::put<std::uint64_t>(out, fnv1a64(out));
  return out;
}

/// Decodes an archive. With `expected_config`, a digest mismatch is an error.
template <typename T>
Checkpoint<T> decode_checkpoint(std::string_view b, std::optional<std::string_view> expected_config = std::nullopt,
                                const std::string& origin = "checkpoint") {
  auto need = [&](std::size_t at, std::size_t n, const char* what) {
    if (b.size() < at || b.size() - at < n) throw FormatError(FormatError::Kind::truncated, origin + ": truncated " + what);
  };
  if (b.size() < 4 || b.substr(0, 4) != "FTCK") throw FormatError(FormatError::Kind::bad_magic, origin + ": bad magic (expected \"FTCK\")");
  need(4, 1 + 8 + 8 + 4 + 8, "header");
  if (fnv1a64(b.substr(0, b.size() - 8)) != le::get<std::uint64_t>(b, b.size() - 8)) {
    throw FormatError(FormatError::Kind::digest_mismatch, origin + ": archive checksum mismatch (corrupted or truncated)");
  }
  b = b.substr(0, b.size() - 8);
  if (b[4] != 1) throw FormatError(FormatError::Kind::bad_version, origin + ": unsupported version " + std::to_string(int(b[4])));
  Checkpoint<T> c;
  const auto digest = le::get<std::uint64_t>(b, 5);
  c.step = le::get<std::uint64_t>(b, 13);
  const auto cfg_len = le::get<std::uint32_t>(b, 21);
  std::size_t at = 25;
  need(at, cfg_len, "config");
  c.config = std::string(b.substr(at, cfg_len));
  at += cfg_len;
  if (fnv1a64(c.config) != digest) throw FormatError(FormatError::Kind::digest_mismatch, origin + ": config text does not match its digest");
  if (expected_config && fnv1a64(*expected_config) != digest) {
    throw FormatError(FormatError::Kind::digest_mismatch, origin + ": checkpoint was saved with a different config");
  }
  need(at, 4, "entry count");
  const auto count = le::get<std::uint32_t>(b, at);
  at += 4;
  for (std::uint32_t i = 0; i < count; ++i) {
    need(at, 2, "entry name");
    const auto name_len = le::get<std::uint16_t>(b, at);
    at += 2;
    need(at, name_len + 8u, "entry name");
    std::string name(b.substr(at, name_len));
    at += name_len;
    const auto blob_len = le::get<std::uint64_t>(b, at);
    at += 8;
    need(at, blob_len, "entry blob");
    std::size_t used = 0;
    auto t = decode_tensor<T>(b.substr(at, blob_len), &used, origin + ":" + name);
    if (used != blob_len) throw FormatError(FormatError::Kind::malformed, origin + ":" + name + ": blob length mismatch");
    if (!c.tensors.emplace(name, std::move(t)).second) {
      throw FormatError(FormatError::Kind::malformed, origin + ": duplicate entry " + name);
    }
    at += blob_len;
  }
  if (at != b.size()) throw FormatError(FormatError::Kind::malformed, origin + ": trailing bytes after last entry");
  return c;
}

template <typename T>
void save_checkpoint(const std::string& path, const Checkpoint<T>& c) {
  write_file(path, encode_checkpoint(c));
}

template <typename T>
Checkpoint<T> load_checkpoint(const std::string& path, std::optional<std::string_view> expected_config = std::nullopt) {
  return decode_checkpoint<T>(read_file(path), expected_config, path);
}

}  // namespace ftfd::io
